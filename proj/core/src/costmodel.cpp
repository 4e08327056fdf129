#include "quilt/costmodel.hpp"

#include <cmath>
#include <sstream>

namespace quilt::cost {

CostParams CostParams::uniform(int m, double link, double ls) {
    CostParams p;
    p.l_s = ls;
    p.l.assign(size_t(m), std::vector<double>(size_t(m), link));
    for (int i = 0; i < m; i++) p.l[size_t(i)][size_t(i)] = 0;
    return p;
}

void CostParams::validate() const {
    if (l_s <= 0) throw ValidationError("cost params: L_s must be positive");
    for (size_t i = 0; i < l.size(); i++) {
        if (l[i].size() != l.size()) throw ValidationError("cost params: matrix not square");
        if (l[i][i] != 0) throw ValidationError("cost params: nonzero diagonal");
        for (size_t j = 0; j < l.size(); j++) {
            if (l[i][j] < 0) throw ValidationError("cost params: negative link cost");
            if (l[i][j] != l[j][i]) throw ValidationError("cost params: asymmetric matrix");
        }
    }
}

double CostParams::max_link(PartySet s) const {
    double mx = 0;
    auto ids = s.ids();
    for (size_t a = 0; a < ids.size(); a++)
        for (size_t b = a + 1; b < ids.size(); b++)
            mx = std::max(mx, l.at(size_t(ids[a])).at(size_t(ids[b])));
    return mx;
}

double CostParams::max_eval_link(PartySet s) const {
    int ev = s.lowest();
    if (ev < 0) return 0;
    double mx = 0;
    for (int i : s.ids())
        if (i != ev) mx = std::max(mx, l.at(size_t(ev)).at(size_t(i)));
    return mx;
}

double cost_offline(size_t c_ands, PartySet parties, const CostParams& p) {
    double m = parties.count();
    double c = double(c_ands);
    return (m - 1) * c * p.max_link(parties) + 4 * c * p.l_s +
           c * p.max_eval_link(parties);
}

double cost_online(size_t c_ands, size_t in_bits, PartySet parties, const CostParams& p) {
    double m = parties.count();
    double c = double(c_ands), i = double(in_bits);
    return (m - 1) * i * p.max_link(parties) + (m - 1) * i * p.max_eval_link(parties) +
           (m - 1) * c * p.l_s;
}

double cost_solder(size_t in_bits, PartySet parent_parties, const CostParams& p) {
    double m = parent_parties.count();
    return (m - 1) * double(in_bits) * p.max_link(parent_parties);
}

static double walk(const CNode& n, const CostParams& p, const CostOpts& opts,
                   const std::string& path, CostReport& rep) {
    size_t at = rep.rows.size();
    rep.rows.push_back({});
    double kid_max = 0, solder_max = 0;
    for (size_t k = 0; k < n.kids.size(); k++) {
        kid_max = std::max(kid_max, walk(n.kids[k], p, opts, path + "." + std::to_string(k), rep));
        size_t edge = k < n.kid_edge_bits.size() ? n.kid_edge_bits[k] : 0;
        double sc = cost_solder(edge, n.parties, p);
        solder_max = std::max(solder_max, sc);
        // find the child row we just wrote (its path is unique) to record the
        // solder its parent pays for it
        for (auto& r : rep.rows)
            if (r.path == path + "." + std::to_string(k)) r.solder_in = sc;
    }
    double off = cost_offline(n.c_ands, n.parties, p);
    double on = cost_online(n.c_ands, n.in_bits, n.parties, p);
    double subtree = kid_max + solder_max + (opts.include_offline ? off : 0) + on;
    CostReport::Row& row = rep.rows[at];
    row.path = path;
    row.m = n.parties.count();
    row.c_ands = n.c_ands;
    row.in_bits = n.in_bits;
    row.offline = off;
    row.online = on;
    row.subtree = subtree;
    return subtree;
}

CostReport cost_tree(const CNode& root, const CostParams& p, CostOpts opts) {
    p.validate();
    CostReport rep;
    rep.total = walk(root, p, opts, "r", rep);
    return rep;
}

std::string CostReport::str() const {
    std::ostringstream os;
    os << "node            m     |C|       |I|      offline        online        solder       subtree\n";
    for (const Row& r : rows) {
        char buf[160];
        snprintf(buf, sizeof buf, "%-14s %2d %9zu %9zu %12.2f %13.2f %13.2f %13.2f\n",
                 r.path.c_str(), r.m, r.c_ands, r.in_bits, r.offline, r.online, r.solder_in,
                 r.subtree);
        os << buf;
    }
    char tot[64];
    snprintf(tot, sizeof tot, "total %.2f\n", total);
    os << tot;
    return os.str();
}

CostParams profile(net::Transport& t, PartySet parties) {
    CostParams p;
    int mx = 0;
    for (int i : parties.ids()) mx = std::max(mx, i);
    p.l.assign(size_t(mx) + 1, std::vector<double>(size_t(mx) + 1, 0.0));

    // unit compute charge on the lowest party
    int ev = parties.lowest();
    if (ev < 0) throw ValidationError("profile: empty party set");
    double c0 = t.clock(ev);
    t.compute(ev, 1, net::Phase::Online);
    p.l_s = t.clock(ev) - c0;
    if (p.l_s <= 0) p.l_s = 1e-9; // wall-clock can measure ~0; keep it positive

    auto ids = parties.ids();
    for (size_t a = 0; a < ids.size(); a++)
        for (size_t b = a + 1; b < ids.size(); b++) {
            int i = ids[a], j = ids[b];
            t.barrier(PartySet::of({i, j}), false);
            double start = t.clock(i);
            net::Frame probe;
            probe.from = i;
            probe.to = j;
            probe.kind = "probe";
            probe.units = 1;
            t.send(std::move(probe));
            net::Frame got = t.recv(j, i);
            net::Frame echo;
            echo.from = j;
            echo.to = i;
            echo.kind = "probe";
            echo.units = 1;
            t.send(std::move(echo));
            t.recv(i, j);
            double rtt = t.clock(i) - start;
            p.l[size_t(i)][size_t(j)] = p.l[size_t(j)][size_t(i)] = rtt / 2;
            (void)got;
        }
    return p;
}

} // namespace quilt::cost
