#pragma once
// Circuit constructions for the relational operators that run under MPC:
// pass-or-zero filters, bitonic merge/sort, intersection (with and without
// origin tags), monotonizer, duplicate elimination with aggregation, input
// verifiers, and the binary-tree composites built from them.
//
// Conventions shared by every list circuit here:
//   * a list is a bundle of fixed-width tuples; key columns come first,
//   * value 0 in the key means "no row here" (filtered out / not matched),
//   * values with the top key bit set are per-party padding and sort above
//     all real data,
//   * sorting is ascending on the tuple key unless a SortKey says otherwise.

#include "quilt/circuit.hpp"

#include <optional>

namespace quilt::prim {

using circ::Builder;
using circ::Bundle;
using circ::Circuit;
using circ::Owner;

// ---------------------------------------------------------------------------
// Tuple layout and sort keys
// ---------------------------------------------------------------------------

struct Layout {
    std::vector<uint32_t> cols; // column widths in order
    uint32_t key_cols = 1;      // leading columns forming the match key

    static Layout scalar(uint32_t w) { return Layout{{w}, 1}; }

    uint32_t total() const {
        uint32_t t = 0;
        for (uint32_t c : cols) t += c;
        return t;
    }
    uint32_t key_bits() const {
        uint32_t t = 0;
        for (uint32_t i = 0; i < key_cols; i++) t += cols[i];
        return t;
    }
    uint32_t offset(size_t col) const {
        uint32_t t = 0;
        for (size_t i = 0; i < col; i++) t += cols[i];
        return t;
    }
    Bundle col_of(const Bundle& elem, size_t col) const {
        return elem.slice(offset(col), cols[col]);
    }
    Bundle key_of(const Bundle& elem) const { return elem.slice(0, key_bits()); }
};

// Priority-ordered sort key; parts[0] decides first. invert = descending
// (bitwise complement is order-reversing for unsigned values).
struct SortKey {
    struct Part {
        uint32_t col = 0;
        bool invert = false;
    };
    std::vector<Part> parts;

    static SortKey by_key(const Layout& lay) {
        SortKey k;
        for (uint32_t i = 0; i < lay.key_cols; i++) k.parts.push_back({i, false});
        return k;
    }
};

// ---------------------------------------------------------------------------
// Tree shapes: full binary trees over m ordered leaves. Leaf i = party i's
// input slot.
// ---------------------------------------------------------------------------

struct Shape {
    struct N {
        int left = -1, right = -1; // node indices, -1 for leaf
        int leaf = -1;             // leaf index, -1 for internal
    };
    std::vector<N> nodes;
    int root = -1;

    size_t leaf_count() const;
    std::string encode() const; // "((1,2),(3,4))", leaves 1-based

    static Shape balanced(size_t m);
    static Shape left_deep(size_t m);
    // Every full binary tree with leaves 0..m-1 in order (Catalan(m-1) of
    // them) for m <= 8; beyond that just {left_deep, balanced}.
    static std::vector<Shape> enumerate(size_t m);
};

// ---------------------------------------------------------------------------
// Row expressions (for filters beyond column-vs-constant: HAVING predicates,
// GREATEST/LEAST arithmetic, theta-join conditions).
// ---------------------------------------------------------------------------

enum class CmpOp { Eq, Ne, Lt, Le, Gt, Ge };

struct ScalarExpr {
    enum class K { Col, Const, Add, Sub, Min, Max } kind = K::Col;
    uint32_t col = 0;
    Value konst;
    std::vector<ScalarExpr> args;

    static ScalarExpr column(uint32_t c) {
        ScalarExpr e;
        e.kind = K::Col;
        e.col = c;
        return e;
    }
    static ScalarExpr constant(Value v) {
        ScalarExpr e;
        e.kind = K::Const;
        e.konst = std::move(v);
        return e;
    }
    static ScalarExpr fold(K kind, std::vector<ScalarExpr> args) {
        ScalarExpr e;
        e.kind = kind;
        e.args = std::move(args);
        return e;
    }
};

struct PredExpr {
    enum class K { Cmp, And, Or, Not } kind = K::Cmp;
    CmpOp op = CmpOp::Eq;
    std::vector<ScalarExpr> sides; // [lhs, rhs] for Cmp
    std::vector<PredExpr> args;

    static PredExpr cmp(ScalarExpr l, CmpOp op, ScalarExpr r) {
        PredExpr p;
        p.kind = K::Cmp;
        p.op = op;
        p.sides = {std::move(l), std::move(r)};
        return p;
    }
    static PredExpr conj(std::vector<PredExpr> args) {
        PredExpr p;
        p.kind = K::And;
        p.args = std::move(args);
        return p;
    }
};

// ---------------------------------------------------------------------------
// Input verifiers. One output bit: 1 = constraint holds. Range checks accept
// 0 (absent) and top-bit-set (padding) values in addition to [lo, hi].
// ---------------------------------------------------------------------------

struct VerSpec {
    enum class Kind { SortedStrict, SortedNonstrict, Range, Distinct } kind = Kind::SortedStrict;
    uint32_t col = 0; // Range only
    Value lo, hi;     // Range only
    // Range only: pad-row exemption. Default: a set top bit in the checked
    // column marks padding (sentinel-region convention). When true, the
    // layout's first column is a 1-bit pad flag and exactly the flagged rows
    // are exempt instead — pad rows reuse key bits as a fill counter, which
    // would otherwise trip value-range checks.
    bool skip_flagged = false;
    std::string str() const;
};

// ---------------------------------------------------------------------------
// Builder-level helpers: operate on a list of element bundles inside an open
// Builder. The standalone circuit builders below and the planner's unit
// assembly both go through these.
// ---------------------------------------------------------------------------

std::vector<Bundle> split_list(const Bundle& list, uint32_t elem_w);
Bundle join_list(const std::vector<Bundle>& elems);

// Merge two lists, each sorted ascending under `key`, into one sorted list.
std::vector<Bundle> merge_lists(Builder& b, std::vector<Bundle> left, std::vector<Bundle> right,
                                const Layout& lay, const SortKey& key);

// Full bitonic sort (used for in-unit re-sorts, e.g. ORDER BY after group-by).
std::vector<Bundle> sort_lists(Builder& b, std::vector<Bundle> elems, const Layout& lay,
                               const SortKey& key);

// b_i = a_i if key(a_i) != 0 else b_{i-1}; leading zero rows stay zero.
std::vector<Bundle> mono_lists(Builder& b, const std::vector<Bundle>& elems, const Layout& lay);

// Keep the last element of each equal-key run, zero the rest.
std::vector<Bundle> dedup_lists(Builder& b, const std::vector<Bundle>& elems, const Layout& lay);

enum class Agg { Count, Sum, Min, Max };

// Input sorted by key. Emits (key, aggregate) at each key boundary, (0, 0)
// elsewhere; the running aggregate accumulates the current row before
// emission and resets to the identity after it.
// agg_col = index of the aggregated column (ignored for Count); out_w = width
// of the aggregate output column.
std::vector<Bundle> dedup_agg_lists(Builder& b, const std::vector<Bundle>& elems,
                                    const Layout& lay, Agg agg, uint32_t agg_col, uint32_t out_w);

std::vector<Bundle> filter_lists(Builder& b, const std::vector<Bundle>& elems, const Layout& lay,
                                 const PredExpr& pred);

std::vector<Bundle> project_lists(Builder& b, const std::vector<Bundle>& elems, const Layout& lay,
                                  const std::vector<uint32_t>& cols);

Wire ver_lists(Builder& b, const std::vector<Bundle>& elems, const Layout& lay,
               const VerSpec& spec);

// Tagged pairwise intersection. Inputs are two key-sorted lists (duplicates
// allowed — monotonizer outputs); elements carry per-side payloads. Output
// list has (nl+nr)/2 slots of (key, left payload, right payload); slot k is
// nonzero iff merged positions around 2k+1 hold a cross-side key match.
struct IsectArgs {
    uint32_t key_w = 0;
    uint32_t payl_w = 0, payr_w = 0;
};
std::vector<Bundle> isect_tagged_lists(Builder& b, const std::vector<Bundle>& left,
                                       const std::vector<Bundle>& right, const IsectArgs& a);

// Untagged strict variant (no payloads): inputs strictly sorted, output slot
// k = value at merged position 2k+1 if it equals a neighbour, else 0.
std::vector<Bundle> isect_strict_lists(Builder& b, const std::vector<Bundle>& left,
                                       const std::vector<Bundle>& right, uint32_t w);

Bundle scalar_expr(Builder& b, const Bundle& elem, const Layout& lay, const ScalarExpr& e);
Wire pred_expr(Builder& b, const Bundle& elem, const Layout& lay, const PredExpr& p);

// ---------------------------------------------------------------------------
// Standalone circuit builders (one primitive per circuit; input groups owned
// by placeholder parties 0..k-1 in slot order).
// ---------------------------------------------------------------------------

Circuit build_filter(size_t n, const Layout& lay, uint32_t col, CmpOp op, const Value& konst);
Circuit build_expr_filter(size_t n, const Layout& lay, const PredExpr& pred);
Circuit build_merge(size_t nl, size_t nr, const Layout& lay, const SortKey& key);
Circuit build_msort(const std::vector<size_t>& sizes, const Layout& lay, const SortKey& key,
                    const Shape& shape);
Circuit build_mono(size_t n, const Layout& lay);
Circuit build_2si(size_t n, uint32_t w);
Circuit build_2si_star(size_t nl, size_t nr, const IsectArgs& args);
Circuit build_dedup(size_t n, const Layout& lay);
Circuit build_msu(const std::vector<size_t>& sizes, const Layout& lay, const Shape& shape);
Circuit build_dedup_agg(size_t n, const Layout& lay, Agg agg, uint32_t agg_col, uint32_t out_w);
Circuit build_ver(size_t n, const Layout& lay, const VerSpec& spec);
Circuit build_theta_join(size_t nl, size_t nr, const Layout& layl, const Layout& layr,
                         const PredExpr& pred);

// Restrict a sorted-list circuit to its first l output elements and drop all
// gates that no longer feed an output or verifier bit.
Circuit prune_to_top_l(const Circuit& c, size_t l);

// ---------------------------------------------------------------------------
// Composite trees. Each internal shape node becomes one circuit whose inputs
// are either party-owned lists (shape leaves) or solder slots (child nodes),
// with input verifiers embedded: sorted-strict for party leaves, sorted-
// nonstrict for child edges (monotonizer output). Non-root intersection
// nodes append a monotonizer; the root stays zero-interleaved.
// ---------------------------------------------------------------------------

struct CircuitTree {
    struct Node {
        Circuit c;
        int left = -1, right = -1;   // child node index, -1 = that side is a leaf
        int left_leaf = -1, right_leaf = -1;
        std::vector<int> ver_slot;   // per ver wire: input slot checked (0/1), -1 = other
    };
    std::vector<Node> nodes;
    int root = -1;
};

struct MsiSpec {
    size_t m = 2, n = 4;
    uint32_t key_w = 32;
    std::vector<uint32_t> payload_w; // per party; empty = bare key sets
    bool with_ver = true;
};
CircuitTree build_msi_tree(const MsiSpec& spec, const Shape& shape);

struct MsortTreeSpec {
    std::vector<size_t> sizes;
    Layout lay;
    SortKey key;
    bool with_ver = true;
    VerSpec::Kind leaf_kind = VerSpec::Kind::SortedStrict;
};
CircuitTree build_msort_tree(const MsortTreeSpec& spec, const Shape& shape);

// Inline an entire tree into one circuit (the monolithic form): solder slots
// are replaced by child outputs, party leaves become party input groups.
Circuit flatten_tree(const CircuitTree& t, const std::string& name);

} // namespace quilt::prim
