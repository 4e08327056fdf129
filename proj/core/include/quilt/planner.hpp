#pragma once
// Query planning. Takes a parsed relational tree and produces an executable
// plan in four passes:
//
//   1. build_tree     — recast the operator graph as a tree; a node feeding
//                       two parents is merged with all its parents into one
//                       region evaluated monolithically.
//   2. split_local    — push single-owner filters down to their owners and
//                       split group-by aggregates into per-party partial
//                       aggregation plus a joint finishing step, when the
//                       declared sizes say it helps.
//   3. annotate_constraints — derive, bottom-up, what each plan edge's data
//                       provably satisfies (ranges, sort order, distinctness);
//                       anything outside those three kinds makes the producer
//                       unverifiable and folds it into its parent region.
//   4. map_to_circuits — lower the joint tree onto a tree of circuit units
//                       over party subsets (merge/intersection trees with
//                       embedded input verifiers), pick the unit-tree shape
//                       with the cheapest predicted cost.
//
// The output Plan has two halves: per-party local plans (plaintext operator
// chains plus sort/padding obligations) and the joint unit tree the parties
// execute together.

#include "quilt/costmodel.hpp"
#include "quilt/primitives.hpp"
#include "quilt/sql.hpp"

#include <optional>

namespace quilt::plan {

using sql::RelOp;
using sql::RelOpPtr;

// ---------------------------------------------------------------------------
// Checkable output constraints. These three kinds are the whole vocabulary a
// verifier circuit can enforce; an output property outside them cannot be
// checked at a unit boundary.
// ---------------------------------------------------------------------------

struct ConstraintSet {
    struct ColRange {
        uint32_t col = 0;
        Value lo, hi;
    };
    std::vector<ColRange> ranges;
    uint32_t sorted_prefix = 0; // >0: rows ascend on the first k columns
    bool distinct = false;      // no two real rows share that leading key

    std::string str() const;
};

// ---------------------------------------------------------------------------
// Operator tree. A node normally wraps one relational op; a node with several
// members is a merged region (shared subexpression and its parents, or an
// unverifiable op folded upward) that will be evaluated as one piece.
// ---------------------------------------------------------------------------

struct OpNode;
using OpNodePtr = std::unique_ptr<OpNode>;

struct OpNode {
    // Region members in evaluation order; the last produces the node output.
    // ins[j] of a member: >= 0 names an earlier member, ~k names kids[k].
    struct Member {
        const RelOp* op = nullptr;
        std::vector<int> ins;
    };
    std::vector<Member> members;
    std::vector<OpNodePtr> kids;
    int leaf_party = -1; // >= 0: stands for that party's local output

    ConstraintSet cons; // filled by annotate_constraints
    bool verifiable = true;

    bool leaf() const { return leaf_party >= 0; }
    bool merged() const { return members.size() > 1; }
    const RelOp* out_op() const { return members.back().op; }
    std::string str(int indent = 0) const;
};

struct OpTree {
    std::vector<RelOpPtr> pool; // owns ops created by rewrites
    OpNodePtr root;
    bool merged_any = false; // a shared subexpression forced a region merge
};

// Explicit graph form for callers that build shared-subexpression DAGs (the
// parser always yields trees). Kids reference nodes by index; sharing a node
// between two parents is allowed and is what build_tree resolves.
struct OpDag {
    struct N {
        const RelOp* op = nullptr;
        std::vector<int> kids;
    };
    std::vector<N> nodes;
    int root = -1;
};

OpTree build_tree(const RelOp& q);
OpTree build_tree(const OpDag& dag);

// ---------------------------------------------------------------------------
// Local plans and the split pass.
// ---------------------------------------------------------------------------

struct LocalPlan {
    int party = 0;
    RelOpPtr ops; // plaintext chain over this party's own tables

    // Wire format of the output rows: layout slot i holds ops-output column
    // col_order[i] (key columns are moved to the front). `sort` is the
    // obligation map_to_circuits imposes; `declared` is the padded list
    // length this party feeds the joint phase.
    std::vector<uint32_t> col_order;
    prim::Layout lay;
    prim::SortKey sort;
    size_t declared = 0;
    ConstraintSet cons; // what the joint side's verifiers check

    std::string str() const;
};

// Declared joint-phase input sizes, one entry per party: raw table rows,
// the row count after local filtering, and, when a partial aggregate is
// possible, after it. These are plan inputs every party shares;
// measure_bounds fills them from data.
struct DeclaredSizes {
    std::vector<size_t> raw;
    std::vector<size_t> rows;
    std::vector<size_t> groups;
};

struct SplitResult {
    std::vector<LocalPlan> locals; // party-indexed, size m
    OpTree joint;                  // leaves reference locals by party
    bool split_agg = false;
    bool pushed_filters = false;
};

// Evaluate the candidate local chains on plaintext to obtain declared sizes.
DeclaredSizes measure_bounds(const RelOp& q, const sql::Dataset& data);

// allow_split=false keeps every operator joint (parties still get
// pass-through locals carrying sort/padding obligations). declared=nullptr
// falls back to schema row bounds.
SplitResult split_local(const OpTree& t, const DeclaredSizes* declared = nullptr,
                        bool allow_split = true);

// Rebuild a plain relational tree from a split result (locals wired back
// under the joint ops) for plaintext reference evaluation. Throws on merged
// regions, which have no single-tree form.
RelOpPtr to_relop(const SplitResult& s);

void annotate_constraints(SplitResult& s);

// ---------------------------------------------------------------------------
// The executable plan.
// ---------------------------------------------------------------------------

struct Unit {
    std::string id; // "u0", "u1", ... preorder from the root
    PartySet parties;
    circ::Circuit circ;    // inputs are party groups and solder slots
    std::vector<int> kids; // unit indices; kids[k] solders into slot k
    size_t out_elems = 0;
    uint32_t elem_w = 0;
};

struct Plan {
    int m = 0;
    bool split_agg = false;
    bool decomposed = false;
    std::string shape; // unit-tree shape encoding, "(1,(2,3))"

    std::vector<LocalPlan> locals;
    std::vector<Unit> units; // root first
    int root = -1;

    // Result decoding: the root unit's element layout (column 0 is the pad
    // flag) and, per output name, the layout column holding its value.
    prim::Layout out_lay;
    std::vector<std::string> out_names;
    std::vector<uint32_t> out_pick;

    double predicted_cost = 0;
    std::string cost_detail; // per-unit predicted cost table

    std::string str() const; // stable text form; hash() is fnv1a over it
    uint64_t hash() const;
};

struct PlannerConfig {
    int t = -1;                 // corruption threshold; -1 means m-1
    bool split = true;          // run the local-splitting pass
    bool decompose = true;      // false: single joint unit (baseline form)
    cost::CostParams link;      // latencies driving the shape choice
    std::optional<uint64_t> kappa; // recorded in the plan text only
};

// Lower one split result onto a unit tree with the given shape. The shape is
// ignored for plans that collapse to a single unit.
Plan map_to_circuits(const SplitResult& s, const prim::Shape& shape, const PlannerConfig& cfg);

// All unit-tree shapes considered for m parties: every full binary tree with
// leaves in party order for m <= 8, else just left-deep and balanced.
std::vector<prim::Shape> enumerate_shapes(size_t m);

// Minimal predicted cost wins; ties break on the lexicographically smallest
// shape encoding. Candidates must be nonempty.
Plan choose_plan(std::vector<Plan> candidates, const cost::CostParams& params);

// The whole pipeline: build, split (per config), annotate, map over every
// candidate shape plus the single-unit form, choose.
Plan plan_query(const RelOp& q, const sql::Dataset& data, const PlannerConfig& cfg);

// ---------------------------------------------------------------------------
// Local-side encoding and a transport-free reference execution. The engine
// runs the same plan over authenticated shares; tests and calibration run it
// directly on cleartext bits.
//
// Wire format of one party's list: `declared` elements of locals[p].lay.
// Layout column 0 is a 1-bit pad flag; layout column 1+i holds ops-output
// column col_order[i]. Real rows carry flag 0; pad rows carry flag 1 plus a
// fill counter spread little-endian across the key columns' bits, which keeps
// pads mutually distinct and never equal to a real row. The whole list is
// sorted by the key slice (flag + key columns) read as one integer — the
// order every sorted verifier and merge in the units checks.
// ---------------------------------------------------------------------------

// Run locals[p].ops on plaintext and encode the padded sorted list.
// Throws if the real row count exceeds `declared`, a real row's key columns
// are all zero, or a strict-sort obligation meets duplicate keys.
circ::Bits encode_local(const LocalPlan& lp, const sql::Dataset& data);
std::vector<circ::Bits> encode_locals(const Plan& p, const sql::Dataset& data);

// Evaluate the unit tree bottom-up on cleartext bits; throws AbortError
// naming the unit and verifier label if any verifier bit comes out 0.
// Returns decoded result rows (pad-flagged and all-zero slots dropped).
sql::Rows eval_plan(const Plan& p, const std::vector<circ::Bits>& party_inputs);

} // namespace quilt::plan
