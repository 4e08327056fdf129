#pragma once
// Latency cost model for decomposed execution. Three per-unit phase costs and
// a tree recursion over them:
//
//   offline(C)  = (m-1)|C|*max(L_ij) + 4|C|*L_s + |C|*max(L_1i)
//   online(C)   = (m-1)|I|*max(L_ij) + (m-1)|I|*max(L_1i) + (m-1)|C|*L_s
//   solder(I)   = (m-1)|I|*max(L_ij)          [m = parent unit's party count]
//   C(T)        = max_k C(T_k) + max_k solder(edge_k) + offline + online
//
// |C| counts AND gates, |I| counts input bits. "1" in L_1i is the unit's
// evaluator, by convention the lowest-indexed party in its party set. The
// planner scores candidate decompositions with cost_tree; the profiler
// recovers L_s and the link matrix from a live transport.

#include "quilt/common.hpp"
#include "quilt/transport.hpp"

#include <string>
#include <vector>

namespace quilt::cost {

struct CostParams {
    double l_s = 1.0;
    std::vector<std::vector<double>> l; // pairwise link time per unit

    static CostParams uniform(int m, double link, double ls);
    void validate() const;

    double max_link(PartySet s) const;      // max L_ij over pairs in s
    double max_eval_link(PartySet s) const; // max L_1i, evaluator = lowest in s
};

double cost_offline(size_t c_ands, PartySet parties, const CostParams& p);
double cost_online(size_t c_ands, size_t in_bits, PartySet parties, const CostParams& p);
double cost_solder(size_t in_bits, PartySet parent_parties, const CostParams& p);

// Plan view for costing: one node per circuit unit. kid_edge_bits[k] is the
// width of the solder edge from kids[k] into this unit.
struct CNode {
    size_t c_ands = 0;
    size_t in_bits = 0;
    PartySet parties;
    std::vector<CNode> kids;
    std::vector<size_t> kid_edge_bits;
};

struct CostOpts {
    bool include_offline = true; // calibration compares online+solder only
};

struct CostReport {
    struct Row {
        std::string path; // "r", "r.0", "r.0.1", ... preorder tree paths
        int m = 0;
        size_t c_ands = 0, in_bits = 0;
        double offline = 0, online = 0, solder_in = 0; // solder paid by parent for this child
        double subtree = 0;                            // recursion value at this node
    };
    std::vector<Row> rows;
    double total = 0;
    std::string str() const;
};

CostReport cost_tree(const CNode& root, const CostParams& p, CostOpts opts = {});

// Recover unit costs from a transport: L_s by timing a unit compute charge,
// L_ij by halved round trips. Exact on the simulated transport.
CostParams profile(net::Transport& t, PartySet parties);

} // namespace quilt::cost
