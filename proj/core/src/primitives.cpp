#include "quilt/primitives.hpp"

#include <algorithm>
#include <cassert>

namespace quilt::prim {

using circ::GateKind;

// ---------------------------------------------------------------------------
// Shapes
// ---------------------------------------------------------------------------

size_t Shape::leaf_count() const {
    size_t n = 0;
    for (const N& nd : nodes)
        if (nd.leaf >= 0) n++;
    return n;
}

static std::string encode_node(const Shape& s, int idx) {
    const Shape::N& n = s.nodes[idx];
    if (n.leaf >= 0) return std::to_string(n.leaf + 1);
    return "(" + encode_node(s, n.left) + "," + encode_node(s, n.right) + ")";
}

std::string Shape::encode() const { return root < 0 ? "" : encode_node(*this, root); }

// Build a node over leaves [lo, hi] splitting at `cut` via callback recursion.
static int build_range(Shape& s, size_t lo, size_t hi,
                       const std::function<size_t(size_t, size_t)>& pick) {
    if (lo == hi) {
        s.nodes.push_back({-1, -1, int(lo)});
        return int(s.nodes.size() - 1);
    }
    size_t cut = pick(lo, hi);
    int l = build_range(s, lo, cut, pick);
    int r = build_range(s, cut + 1, hi, pick);
    s.nodes.push_back({l, r, -1});
    return int(s.nodes.size() - 1);
}

Shape Shape::balanced(size_t m) {
    Shape s;
    s.root = build_range(s, 0, m - 1, [](size_t lo, size_t hi) { return lo + (hi - lo) / 2; });
    return s;
}

Shape Shape::left_deep(size_t m) {
    Shape s;
    s.root = build_range(s, 0, m - 1, [](size_t, size_t hi) { return hi - 1; });
    return s;
}

// All full binary trees over leaves [lo, hi] in order.
static std::vector<Shape> enum_range(size_t lo, size_t hi) {
    std::vector<Shape> out;
    if (lo == hi) {
        Shape s;
        s.nodes.push_back({-1, -1, int(lo)});
        s.root = 0;
        out.push_back(std::move(s));
        return out;
    }
    for (size_t cut = lo; cut < hi; cut++) {
        for (const Shape& l : enum_range(lo, cut)) {
            for (const Shape& r : enum_range(cut + 1, hi)) {
                Shape s = l;
                int off = int(s.nodes.size());
                for (const Shape::N& n : r.nodes) {
                    Shape::N nn = n;
                    if (nn.left >= 0) nn.left += off;
                    if (nn.right >= 0) nn.right += off;
                    s.nodes.push_back(nn);
                }
                s.nodes.push_back({l.root, r.root + off, -1});
                s.root = int(s.nodes.size() - 1);
                out.push_back(std::move(s));
            }
        }
    }
    return out;
}

std::vector<Shape> Shape::enumerate(size_t m) {
    if (m == 0) return {};
    if (m <= 8) return enum_range(0, m - 1);
    return {left_deep(m), balanced(m)};
}

std::string VerSpec::str() const {
    switch (kind) {
    case Kind::SortedStrict: return "sorted-strict";
    case Kind::SortedNonstrict: return "sorted-nonstrict";
    case Kind::Distinct: return "distinct";
    default:
        return "range col" + std::to_string(col) + "[" + lo.to_decimal() + "," + hi.to_decimal() +
               "]";
    }
}

// ---------------------------------------------------------------------------
// List plumbing
// ---------------------------------------------------------------------------

std::vector<Bundle> split_list(const Bundle& list, uint32_t elem_w) {
    if (elem_w == 0 || list.wires.size() % elem_w)
        throw ValidationError("split_list: bad element width");
    std::vector<Bundle> elems(list.wires.size() / elem_w);
    for (size_t i = 0; i < elems.size(); i++) elems[i] = list.slice(i * elem_w, elem_w);
    return elems;
}

Bundle join_list(const std::vector<Bundle>& elems) {
    Bundle out;
    out.elem_width = elems.empty() ? 0 : uint32_t(elems[0].wires.size());
    for (const Bundle& e : elems)
        out.wires.insert(out.wires.end(), e.wires.begin(), e.wires.end());
    return out;
}

static Bundle zext(Builder& b, Bundle x, uint32_t w) {
    while (x.wires.size() < w) x.wires.push_back(b.zero());
    if (x.wires.size() > w) throw ValidationError("zext: bundle wider than target");
    return x;
}

// Transformed comparator key: parts in priority order, most significant last
// (gt() treats the final wire as MSB). Inverted parts get INV gates, which
// cost nothing in the AND-count model.
static Bundle trans_key(Builder& b, const Bundle& elem, const Layout& lay, const SortKey& key) {
    Bundle k;
    for (auto it = key.parts.rbegin(); it != key.parts.rend(); ++it) {
        Bundle col = lay.col_of(elem, it->col);
        if (it->invert) col = b.invert(col);
        k.wires.insert(k.wires.end(), col.wires.begin(), col.wires.end());
    }
    return k;
}

// Padding tuple whose transformed key is the maximum, so it sinks to the end
// of an ascending network and is dropped from the declared output.
static Bundle pad_elem(Builder& b, const Layout& lay, const SortKey& key) {
    std::vector<uint8_t> ones_col(lay.cols.size(), 0);
    for (const SortKey::Part& p : key.parts)
        if (!p.invert) ones_col[p.col] = 1;
    Bundle e;
    for (size_t c = 0; c < lay.cols.size(); c++) {
        for (uint32_t i = 0; i < lay.cols[c]; i++)
            e.wires.push_back(ones_col[c] ? b.one() : b.zero());
    }
    return e;
}

// Compare-and-swap: ascending order puts the smaller transformed key first.
static void cas(Builder& b, Bundle& x, Bundle& y, const Layout& lay, const SortKey& key,
                bool asc) {
    Bundle kx = trans_key(b, x, lay, key);
    Bundle ky = trans_key(b, y, lay, key);
    Wire s = asc ? b.gt(kx, ky) : b.gt(ky, kx);
    for (size_t i = 0; i < x.wires.size(); i++) {
        Wire t = b.band(s, b.bxor(x.wires[i], y.wires[i]));
        x.wires[i] = b.bxor(x.wires[i], t);
        y.wires[i] = b.bxor(y.wires[i], t);
    }
}

// Bitonic merge of elems[lo, lo+n): input bitonic, output sorted. n = 2^k.
static void bitonic_merge(Builder& b, std::vector<Bundle>& elems, size_t lo, size_t n, bool asc,
                          const Layout& lay, const SortKey& key) {
    if (n <= 1) return;
    size_t half = n / 2;
    for (size_t i = 0; i < half; i++) cas(b, elems[lo + i], elems[lo + i + half], lay, key, asc);
    bitonic_merge(b, elems, lo, half, asc, lay, key);
    bitonic_merge(b, elems, lo + half, half, asc, lay, key);
}

static void bitonic_sort(Builder& b, std::vector<Bundle>& elems, size_t lo, size_t n, bool asc,
                         const Layout& lay, const SortKey& key) {
    if (n <= 1) return;
    size_t half = n / 2;
    bitonic_sort(b, elems, lo, half, true, lay, key);
    bitonic_sort(b, elems, lo + half, half, false, lay, key);
    bitonic_merge(b, elems, lo, n, asc, lay, key);
}

static size_t pow2_at_least(size_t n) {
    size_t p = 1;
    while (p < n) p <<= 1;
    return p;
}

std::vector<Bundle> merge_lists(Builder& b, std::vector<Bundle> left, std::vector<Bundle> right,
                                const Layout& lay, const SortKey& key) {
    size_t nl = left.size(), nr = right.size();
    size_t total = nl + nr;
    size_t cap = pow2_at_least(total);
    // ascending ++ [max pads] ++ descending is bitonic; pads sort to the tail
    // and are dropped from the declared output.
    std::vector<Bundle> seq = std::move(left);
    seq.reserve(cap);
    for (size_t i = total; i < cap; i++) seq.push_back(pad_elem(b, lay, key));
    for (size_t i = 0; i < nr; i++) seq.push_back(right[nr - 1 - i]);
    bitonic_merge(b, seq, 0, cap, true, lay, key);
    seq.resize(total);
    return seq;
}

std::vector<Bundle> sort_lists(Builder& b, std::vector<Bundle> elems, const Layout& lay,
                               const SortKey& key) {
    size_t n = elems.size();
    size_t cap = pow2_at_least(n);
    for (size_t i = n; i < cap; i++) elems.push_back(pad_elem(b, lay, key));
    bitonic_sort(b, elems, 0, cap, true, lay, key);
    elems.resize(n);
    return elems;
}

// ---------------------------------------------------------------------------
// Monotonizer / dedup / dedup-aggregate
// ---------------------------------------------------------------------------

std::vector<Bundle> mono_lists(Builder& b, const std::vector<Bundle>& elems, const Layout& lay) {
    std::vector<Bundle> out;
    out.reserve(elems.size());
    for (size_t i = 0; i < elems.size(); i++) {
        if (i == 0) {
            out.push_back(elems[0]);
            continue;
        }
        Wire nz = b.nonzero(lay.key_of(elems[i]));
        out.push_back(b.mux(nz, elems[i], out.back()));
    }
    return out;
}

std::vector<Bundle> dedup_lists(Builder& b, const std::vector<Bundle>& elems, const Layout& lay) {
    std::vector<Bundle> out(elems.size());
    for (size_t i = 0; i + 1 < elems.size(); i++) {
        Wire survive = b.binv(b.eq(lay.key_of(elems[i]), lay.key_of(elems[i + 1])));
        out[i] = b.mask(elems[i], survive);
    }
    out.back() = elems.back(); // last of the final run always survives
    return out;
}

static Bundle agg_identity(Builder& b, Agg agg, uint32_t w) {
    switch (agg) {
    case Agg::Min: {
        Value ones = Value::complement(Value(), w);
        return b.constant(ones, w);
    }
    default: return b.constant(Value(), w); // Count/Sum/Max start at 0
    }
}

static Bundle agg_combine(Builder& b, Agg agg, const Bundle& acc, const Bundle& v) {
    switch (agg) {
    case Agg::Count:
    case Agg::Sum: return b.add(acc, v);
    case Agg::Min: return b.mux(b.gt(acc, v), v, acc);
    default: return b.mux(b.gt(v, acc), v, acc); // Max
    }
}

std::vector<Bundle> dedup_agg_lists(Builder& b, const std::vector<Bundle>& elems,
                                    const Layout& lay, Agg agg, uint32_t agg_col, uint32_t out_w) {
    size_t n = elems.size();
    std::vector<Bundle> keys(n);
    std::vector<Wire> reals(n);
    for (size_t i = 0; i < n; i++) {
        keys[i] = lay.key_of(elems[i]);
        reals[i] = b.nonzero(keys[i]);
    }
    // A run may be interrupted by absent rows (a filter in front of us zeroes
    // rows in place), so the boundary test compares against the next *real*
    // key, not the adjacent one. Suffix scan: after[i] = first real key past i.
    std::vector<Bundle> after(n);
    Bundle nxt = b.constant(Value(), lay.key_bits());
    for (size_t i = n; i-- > 0;) {
        after[i] = nxt;
        nxt = b.mux(reals[i], keys[i], nxt);
    }
    Bundle acc = agg_identity(b, agg, out_w);
    std::vector<Bundle> out;
    out.reserve(n);
    for (size_t i = 0; i < n; i++) {
        // absent rows (key 0) must contribute the identity: Count adds the
        // `real` bit itself, Min substitutes all-ones, Sum/Max rely on the
        // absent tuple being all-zero already
        Bundle v;
        switch (agg) {
        case Agg::Count: {
            Bundle one_bit;
            one_bit.wires.push_back(reals[i]);
            v = zext(b, one_bit, out_w);
            break;
        }
        case Agg::Min:
            v = b.mux(reals[i], zext(b, lay.col_of(elems[i], agg_col), out_w),
                      agg_identity(b, agg, out_w));
            break;
        default: v = zext(b, lay.col_of(elems[i], agg_col), out_w); break;
        }
        // accumulate the current row first, then emit at the key boundary
        Bundle t = agg_combine(b, agg, acc, v);
        Wire boundary = b.binv(b.eq(keys[i], after[i]));
        Wire emit = b.band(boundary, reals[i]);
        out.push_back(circ::Builder::concat(b.mask(keys[i], emit), b.mask(t, emit)));
        acc = b.mux(emit, agg_identity(b, agg, out_w), t);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Row expressions and filters
// ---------------------------------------------------------------------------

static Bundle sub_bundles(Builder& b, const Bundle& x, const Bundle& y) {
    // x - y = x + ~y + 1, wrapping two's complement
    Bundle r;
    r.wires.resize(x.wires.size());
    Wire carry = b.one();
    for (size_t i = 0; i < x.wires.size(); i++) {
        Wire yi = b.binv(y.wires[i]);
        r.wires[i] = b.bxor(b.bxor(x.wires[i], yi), carry);
        if (i + 1 < x.wires.size())
            carry = b.bxor(carry, b.band(b.bxor(x.wires[i], carry), b.bxor(yi, carry)));
    }
    return r;
}

Bundle scalar_expr(Builder& b, const Bundle& elem, const Layout& lay, const ScalarExpr& e) {
    switch (e.kind) {
    case ScalarExpr::K::Col: return lay.col_of(elem, e.col);
    case ScalarExpr::K::Const: return b.constant(e.konst, std::max(1u, e.konst.bit_width()));
    default: break;
    }
    std::vector<Bundle> args;
    uint32_t w = 0;
    for (const ScalarExpr& a : e.args) {
        args.push_back(scalar_expr(b, elem, lay, a));
        w = std::max(w, uint32_t(args.back().wires.size()));
    }
    if (args.empty()) throw ValidationError("scalar expression fold with no arguments");
    for (Bundle& a : args) a = zext(b, a, w);
    Bundle acc = args[0];
    for (size_t i = 1; i < args.size(); i++) {
        switch (e.kind) {
        case ScalarExpr::K::Add: acc = b.add(acc, args[i]); break;
        case ScalarExpr::K::Sub: acc = sub_bundles(b, acc, args[i]); break;
        case ScalarExpr::K::Min: acc = b.mux(b.gt(acc, args[i]), args[i], acc); break;
        case ScalarExpr::K::Max: acc = b.mux(b.gt(args[i], acc), args[i], acc); break;
        default: throw ValidationError("bad scalar expression");
        }
    }
    return acc;
}

Wire pred_expr(Builder& b, const Bundle& elem, const Layout& lay, const PredExpr& p) {
    switch (p.kind) {
    case PredExpr::K::Cmp: {
        Bundle l = scalar_expr(b, elem, lay, p.sides[0]);
        Bundle r = scalar_expr(b, elem, lay, p.sides[1]);
        uint32_t w = uint32_t(std::max(l.wires.size(), r.wires.size()));
        l = zext(b, l, w);
        r = zext(b, r, w);
        switch (p.op) {
        case CmpOp::Eq: return b.eq(l, r);
        case CmpOp::Ne: return b.binv(b.eq(l, r));
        case CmpOp::Lt: return b.gt(r, l);
        case CmpOp::Le: return b.binv(b.gt(l, r));
        case CmpOp::Gt: return b.gt(l, r);
        default: return b.binv(b.gt(r, l)); // Ge
        }
    }
    case PredExpr::K::And: {
        Wire acc = b.one();
        for (const PredExpr& a : p.args) acc = b.band(acc, pred_expr(b, elem, lay, a));
        return acc;
    }
    case PredExpr::K::Or: {
        Wire acc = b.zero();
        for (const PredExpr& a : p.args) acc = b.bor(acc, pred_expr(b, elem, lay, a));
        return acc;
    }
    default: return b.binv(pred_expr(b, elem, lay, p.args.at(0)));
    }
}

std::vector<Bundle> filter_lists(Builder& b, const std::vector<Bundle>& elems, const Layout& lay,
                                 const PredExpr& pred) {
    std::vector<Bundle> out;
    out.reserve(elems.size());
    for (const Bundle& e : elems) out.push_back(b.mask(e, pred_expr(b, e, lay, pred)));
    return out;
}

std::vector<Bundle> project_lists(Builder& b, const std::vector<Bundle>& elems, const Layout& lay,
                                  const std::vector<uint32_t>& cols) {
    (void)b;
    std::vector<Bundle> out;
    out.reserve(elems.size());
    for (const Bundle& e : elems) {
        Bundle ne;
        for (uint32_t c : cols) {
            Bundle col = lay.col_of(e, c);
            ne.wires.insert(ne.wires.end(), col.wires.begin(), col.wires.end());
        }
        out.push_back(std::move(ne));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Verifiers
// ---------------------------------------------------------------------------

Wire ver_lists(Builder& b, const std::vector<Bundle>& elems, const Layout& lay,
               const VerSpec& spec) {
    Wire acc = b.one();
    switch (spec.kind) {
    case VerSpec::Kind::SortedStrict:
    case VerSpec::Kind::Distinct:
        for (size_t i = 0; i + 1 < elems.size(); i++)
            acc = b.band(acc, b.gt(lay.key_of(elems[i + 1]), lay.key_of(elems[i])));
        return acc;
    case VerSpec::Kind::SortedNonstrict:
        for (size_t i = 0; i + 1 < elems.size(); i++)
            acc = b.band(acc, b.ge(lay.key_of(elems[i + 1]), lay.key_of(elems[i])));
        return acc;
    case VerSpec::Kind::Range: {
        uint32_t w = lay.cols[spec.col];
        Bundle lo = b.constant(spec.lo, w);
        Bundle hi = b.constant(spec.hi, w);
        for (const Bundle& e : elems) {
            Bundle v = lay.col_of(e, spec.col);
            Wire in_range = b.band(b.ge(v, lo), b.ge(hi, v));
            // absent rows (0) are exempt, and so is the padding: either the
            // value's top bit (sentinel-region convention) or, when the layout
            // carries an explicit pad-flag column, exactly the flagged rows
            Wire absent = b.binv(b.nonzero(v));
            Wire padding = spec.skip_flagged ? lay.col_of(e, 0).wires[0] : v.wires.back();
            acc = b.band(acc, b.bor(in_range, b.bor(absent, padding)));
        }
        return acc;
    }
    }
    return acc;
}

// ---------------------------------------------------------------------------
// Intersection
// ---------------------------------------------------------------------------

std::vector<Bundle> isect_strict_lists(Builder& b, const std::vector<Bundle>& left,
                                       const std::vector<Bundle>& right, uint32_t w) {
    Layout lay = Layout::scalar(w);
    std::vector<Bundle> merged = merge_lists(b, left, right, lay, SortKey::by_key(lay));
    size_t total = merged.size();
    std::vector<Bundle> out;
    out.reserve(total / 2);
    // Matched duplicates are adjacent and disjoint, and every matched pair
    // contains exactly one odd position, so emitting odd positions that equal
    // a neighbour yields each intersection element exactly once.
    for (size_t i = 1; i < total; i += 2) {
        Wire m = b.eq(merged[i - 1], merged[i]);
        if (i + 1 < total) m = b.bor(m, b.eq(merged[i], merged[i + 1]));
        out.push_back(b.mask(merged[i], m));
    }
    return out;
}

std::vector<Bundle> isect_tagged_lists(Builder& b, const std::vector<Bundle>& left,
                                       const std::vector<Bundle>& right, const IsectArgs& a) {
    // Internal tuple: [key][tag][left payload][right payload]; sort by
    // (key, tag) so equal keys group with all left-side copies first. Exactly
    // one tag boundary exists per key group, so each key matches at most once
    // even when the monotonizer duplicated rows.
    Layout ilay;
    ilay.cols = {a.key_w, 1, std::max(1u, a.payl_w), std::max(1u, a.payr_w)};
    ilay.key_cols = 1;
    bool have_l = a.payl_w > 0, have_r = a.payr_w > 0;

    auto widen = [&](const Bundle& e, bool is_left) {
        Bundle t = e.slice(0, a.key_w);
        t.wires.push_back(is_left ? b.zero() : b.one()); // origin tag
        Bundle pl = is_left && have_l ? e.slice(a.key_w, a.payl_w) : Bundle{};
        Bundle pr = !is_left && have_r ? e.slice(a.key_w, a.payr_w) : Bundle{};
        t = Builder::concat(t, zext(b, pl, std::max(1u, a.payl_w)));
        t = Builder::concat(t, zext(b, pr, std::max(1u, a.payr_w)));
        return t;
    };
    std::vector<Bundle> l2, r2;
    for (const Bundle& e : left) l2.push_back(widen(e, true));
    for (const Bundle& e : right) r2.push_back(widen(e, false));

    SortKey skey;
    skey.parts = {{0, false}, {1, false}}; // key first, tag breaks ties
    std::vector<Bundle> merged = merge_lists(b, std::move(l2), std::move(r2), ilay, skey);

    size_t total = merged.size();
    auto key_at = [&](size_t i) { return ilay.col_of(merged[i], 0); };
    auto tag_at = [&](size_t i) { return ilay.col_of(merged[i], 1).wires[0]; };
    auto payl_at = [&](size_t i) { return ilay.col_of(merged[i], 2); };
    auto payr_at = [&](size_t i) { return ilay.col_of(merged[i], 3); };

    std::vector<Bundle> out;
    out.reserve(total / 2);
    for (size_t i = 1; i < total; i += 2) {
        // a pair matches only across sides: equal key AND differing tag
        Wire mp = b.band(b.eq(key_at(i - 1), key_at(i)), b.bxor(tag_at(i - 1), tag_at(i)));
        Wire mn = b.zero();
        if (i + 1 < total)
            mn = b.band(b.eq(key_at(i), key_at(i + 1)), b.bxor(tag_at(i), tag_at(i + 1)));
        Wire m = b.bor(mp, mn);
        Bundle key = b.mask(key_at(i), m);
        Bundle e = key;
        if (have_l) {
            // within a matched pair one side's payload slot is all-zero, so
            // XOR of the two slots selects the populated one
            Bundle prev = b.bxor(payl_at(i - 1), payl_at(i));
            Bundle next = i + 1 < total ? b.bxor(payl_at(i), payl_at(i + 1)) : payl_at(i);
            e = Builder::concat(e, b.mask(b.mux(mp, prev, next), m));
        }
        if (have_r) {
            Bundle prev = b.bxor(payr_at(i - 1), payr_at(i));
            Bundle next = i + 1 < total ? b.bxor(payr_at(i), payr_at(i + 1)) : payr_at(i);
            e = Builder::concat(e, b.mask(b.mux(mp, prev, next), m));
        }
        out.push_back(std::move(e));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Standalone circuits
// ---------------------------------------------------------------------------

static Bundle list_input(Builder& b, int party, size_t n, uint32_t elem_w,
                         const std::string& label) {
    return b.input(Owner::party(party), uint32_t(n * elem_w), elem_w, label);
}

Circuit build_filter(size_t n, const Layout& lay, uint32_t col, CmpOp op, const Value& konst) {
    return build_expr_filter(
        n, lay, PredExpr::cmp(ScalarExpr::column(col), op, ScalarExpr::constant(konst)));
}

Circuit build_expr_filter(size_t n, const Layout& lay, const PredExpr& pred) {
    Builder b("filter");
    Bundle in = list_input(b, 0, n, lay.total(), "rows");
    b.output(join_list(filter_lists(b, split_list(in, lay.total()), lay, pred)));
    return b.take();
}

Circuit build_merge(size_t nl, size_t nr, const Layout& lay, const SortKey& key) {
    Builder b("merge");
    Bundle l = list_input(b, 0, nl, lay.total(), "left");
    Bundle r = list_input(b, 1, nr, lay.total(), "right");
    b.output(join_list(
        merge_lists(b, split_list(l, lay.total()), split_list(r, lay.total()), lay, key)));
    return b.take();
}

static std::vector<Bundle> msort_walk(Builder& b, const Shape& shape, int idx,
                                      const std::vector<size_t>& sizes, const Layout& lay,
                                      const SortKey& key) {
    const Shape::N& nd = shape.nodes[idx];
    if (nd.leaf >= 0)
        return split_list(list_input(b, nd.leaf, sizes[nd.leaf], lay.total(),
                                     "in" + std::to_string(nd.leaf)),
                          lay.total());
    auto l = msort_walk(b, shape, nd.left, sizes, lay, key);
    auto r = msort_walk(b, shape, nd.right, sizes, lay, key);
    return merge_lists(b, std::move(l), std::move(r), lay, key);
}

Circuit build_msort(const std::vector<size_t>& sizes, const Layout& lay, const SortKey& key,
                    const Shape& shape) {
    if (shape.leaf_count() != sizes.size())
        throw ValidationError("msort: shape/input count mismatch");
    Builder b("msort");
    b.output(join_list(msort_walk(b, shape, shape.root, sizes, lay, key)));
    return b.take();
}

Circuit build_mono(size_t n, const Layout& lay) {
    Builder b("mono");
    Bundle in = list_input(b, 0, n, lay.total(), "rows");
    b.output(join_list(mono_lists(b, split_list(in, lay.total()), lay)));
    return b.take();
}

Circuit build_2si(size_t n, uint32_t w) {
    Builder b("2si");
    Bundle l = list_input(b, 0, n, w, "left");
    Bundle r = list_input(b, 1, n, w, "right");
    b.output(join_list(isect_strict_lists(b, split_list(l, w), split_list(r, w), w)));
    return b.take();
}

Circuit build_2si_star(size_t nl, size_t nr, const IsectArgs& args) {
    Builder b("2si-star");
    Bundle l = list_input(b, 0, nl, args.key_w + args.payl_w, "left");
    Bundle r = list_input(b, 1, nr, args.key_w + args.payr_w, "right");
    b.output(join_list(isect_tagged_lists(b, split_list(l, args.key_w + args.payl_w),
                                          split_list(r, args.key_w + args.payr_w), args)));
    return b.take();
}

Circuit build_dedup(size_t n, const Layout& lay) {
    Builder b("dedup");
    Bundle in = list_input(b, 0, n, lay.total(), "rows");
    b.output(join_list(dedup_lists(b, split_list(in, lay.total()), lay)));
    return b.take();
}

Circuit build_msu(const std::vector<size_t>& sizes, const Layout& lay, const Shape& shape) {
    Builder b("msu");
    auto sorted = msort_walk(b, shape, shape.root, sizes, lay, SortKey::by_key(lay));
    b.output(join_list(dedup_lists(b, sorted, lay)));
    return b.take();
}

Circuit build_dedup_agg(size_t n, const Layout& lay, Agg agg, uint32_t agg_col, uint32_t out_w) {
    Builder b("dedup-agg");
    Bundle in = list_input(b, 0, n, lay.total(), "rows");
    b.output(join_list(dedup_agg_lists(b, split_list(in, lay.total()), lay, agg, agg_col, out_w)));
    return b.take();
}

Circuit build_ver(size_t n, const Layout& lay, const VerSpec& spec) {
    Builder b("ver");
    Bundle in = list_input(b, 0, n, lay.total(), "rows");
    Bundle out;
    out.wires.push_back(ver_lists(b, split_list(in, lay.total()), lay, spec));
    b.output(out);
    return b.take();
}

Circuit build_theta_join(size_t nl, size_t nr, const Layout& layl, const Layout& layr,
                         const PredExpr& pred) {
    Builder b("theta-join");
    Bundle l = list_input(b, 0, nl, layl.total(), "left");
    Bundle r = list_input(b, 1, nr, layr.total(), "right");
    auto le = split_list(l, layl.total());
    auto re = split_list(r, layr.total());
    Layout pair_lay;
    pair_lay.cols = layl.cols;
    pair_lay.cols.insert(pair_lay.cols.end(), layr.cols.begin(), layr.cols.end());
    pair_lay.key_cols = layl.key_cols;
    std::vector<Bundle> out;
    out.reserve(nl * nr);
    // quadratic pairwise scan; the planner only reaches for this when the
    // join condition is not an equality
    for (size_t i = 0; i < nl; i++) {
        for (size_t j = 0; j < nr; j++) {
            Bundle row = Builder::concat(le[i], re[j]);
            Bundle kl = layl.key_of(le[i]);
            Bundle kr = layr.key_of(re[j]);
            Wire real = b.band(b.band(b.nonzero(kl), b.binv(kl.wires.back())),
                               b.band(b.nonzero(kr), b.binv(kr.wires.back())));
            Wire p = b.band(real, pred_expr(b, row, pair_lay, pred));
            out.push_back(b.mask(row, p));
        }
    }
    b.output(join_list(out));
    return b.take();
}

Circuit prune_to_top_l(const Circuit& c, size_t l) {
    if (c.outputs.empty() || c.outputs[0].elem_width == 0)
        throw ValidationError("prune_to_top_l: circuit has no list output");
    std::vector<Bundle> outs = c.outputs;
    size_t keep = std::min(l, outs[0].elems());
    Bundle trimmed = outs[0];
    trimmed.wires.resize(keep * trimmed.elem_width);
    outs[0] = trimmed;
    return circ::prune_outputs(c, outs);
}

// ---------------------------------------------------------------------------
// Composite trees
// ---------------------------------------------------------------------------

namespace {

struct MsiWalk {
    const MsiSpec& spec;
    const Shape& shape;
    CircuitTree& tree;

    struct Out {
        int node = -1;      // CircuitTree node (-1 when shape leaf)
        int leaf = -1;      // party slot when shape leaf
        uint32_t pay_w = 0; // accumulated payload width of the subtree
        size_t n = 0;
    };

    uint32_t leaf_pay(size_t p) const {
        return spec.payload_w.empty() ? 0 : spec.payload_w[p];
    }

    Out walk(int idx, bool is_root) {
        const Shape::N& nd = shape.nodes[idx];
        if (nd.leaf >= 0) return {-1, nd.leaf, leaf_pay(nd.leaf), spec.n};

        Out l = walk(nd.left, false);
        Out r = walk(nd.right, false);

        Builder b("isect");
        CircuitTree::Node node;
        node.left = l.node;
        node.right = r.node;
        node.left_leaf = l.leaf;
        node.right_leaf = r.leaf;

        auto side_input = [&](const Out& o, int slot) {
            uint32_t ew = spec.key_w + o.pay_w;
            Owner owner = o.leaf >= 0 ? Owner::party(o.leaf) : Owner::solder(slot);
            Bundle in = b.input(owner, uint32_t(o.n * ew), ew, "in" + std::to_string(slot));
            if (spec.with_ver) {
                Layout lay;
                lay.cols = {spec.key_w};
                if (o.pay_w) lay.cols.push_back(o.pay_w);
                lay.key_cols = 1;
                VerSpec vs;
                vs.kind = o.leaf >= 0 ? VerSpec::Kind::SortedStrict
                                      : VerSpec::Kind::SortedNonstrict;
                b.ver(ver_lists(b, split_list(in, ew), lay, vs),
                      "in" + std::to_string(slot) + ":" + vs.str());
                node.ver_slot.push_back(slot);
            }
            return split_list(in, ew);
        };
        auto le = side_input(l, 0);
        auto re = side_input(r, 1);

        bool leaves_only = l.leaf >= 0 && r.leaf >= 0;
        std::vector<Bundle> out;
        if (leaves_only && l.pay_w == 0 && r.pay_w == 0) {
            out = isect_strict_lists(b, le, re, spec.key_w);
        } else {
            IsectArgs a;
            a.key_w = spec.key_w;
            a.payl_w = l.pay_w;
            a.payr_w = r.pay_w;
            out = isect_tagged_lists(b, le, re, a);
        }
        uint32_t pay_w = l.pay_w + r.pay_w;
        if (!is_root) {
            Layout lay;
            lay.cols = {spec.key_w};
            if (pay_w) lay.cols.push_back(pay_w);
            lay.key_cols = 1;
            out = mono_lists(b, out, lay);
        }
        b.output(join_list(out));
        node.c = b.take();
        tree.nodes.push_back(std::move(node));

        Out res;
        res.node = int(tree.nodes.size() - 1);
        res.pay_w = pay_w;
        res.n = out.size();
        return res;
    }
};

} // namespace

CircuitTree build_msi_tree(const MsiSpec& spec, const Shape& shape) {
    if (shape.leaf_count() != spec.m || spec.m < 2)
        throw ValidationError("msi tree: need >= 2 parties and matching shape");
    if (!spec.payload_w.empty() && spec.payload_w.size() != spec.m)
        throw ValidationError("msi tree: payload width per party required");
    CircuitTree t;
    MsiWalk w{spec, shape, t};
    t.root = w.walk(shape.root, true).node;
    return t;
}

namespace {

struct MsortWalk {
    const MsortTreeSpec& spec;
    const Shape& shape;
    CircuitTree& tree;

    struct Out {
        int node = -1;
        int leaf = -1;
        size_t n = 0;
    };

    Out walk(int idx) {
        const Shape::N& nd = shape.nodes[idx];
        if (nd.leaf >= 0) return {-1, nd.leaf, spec.sizes[nd.leaf]};
        Out l = walk(nd.left);
        Out r = walk(nd.right);

        Builder b("merge");
        CircuitTree::Node node;
        node.left = l.node;
        node.right = r.node;
        node.left_leaf = l.leaf;
        node.right_leaf = r.leaf;
        uint32_t ew = spec.lay.total();
        auto side_input = [&](const Out& o, int slot) {
            Owner owner = o.leaf >= 0 ? Owner::party(o.leaf) : Owner::solder(slot);
            Bundle in = b.input(owner, uint32_t(o.n * ew), ew, "in" + std::to_string(slot));
            if (spec.with_ver) {
                VerSpec vs;
                vs.kind = o.leaf >= 0 ? spec.leaf_kind : VerSpec::Kind::SortedNonstrict;
                b.ver(ver_lists(b, split_list(in, ew), spec.lay, vs),
                      "in" + std::to_string(slot) + ":" + vs.str());
                node.ver_slot.push_back(slot);
            }
            return split_list(in, ew);
        };
        auto le = side_input(l, 0);
        auto re = side_input(r, 1);
        b.output(join_list(merge_lists(b, std::move(le), std::move(re), spec.lay, spec.key)));
        node.c = b.take();
        tree.nodes.push_back(std::move(node));
        return {int(tree.nodes.size() - 1), -1, l.n + r.n};
    }
};

} // namespace

CircuitTree build_msort_tree(const MsortTreeSpec& spec, const Shape& shape) {
    if (shape.leaf_count() != spec.sizes.size())
        throw ValidationError("msort tree: shape/input count mismatch");
    CircuitTree t;
    MsortWalk w{spec, shape, t};
    t.root = w.walk(shape.root).node;
    return t;
}

static std::vector<Bundle> flatten_walk(Builder& b, const CircuitTree& t, int idx) {
    const CircuitTree::Node& nd = t.nodes[idx];
    std::vector<Bundle> actuals;
    size_t solder_seen = 0;
    for (const circ::InputGroup& g : nd.c.inputs) {
        if (g.owner.kind == Owner::Kind::Party) {
            Bundle in = b.input(g.owner, uint32_t(g.bundle.wires.size()), g.bundle.elem_width,
                                g.bundle.label);
            actuals.push_back(in);
        } else {
            int child = (solder_seen == 0)
                            ? (nd.left >= 0 ? nd.left : nd.right)
                            : nd.right;
            // slot order: solder slot 0 = left child, 1 = right child
            int want = g.owner.index == 0 ? nd.left : nd.right;
            if (want >= 0) child = want;
            solder_seen++;
            auto outs = flatten_walk(b, t, child);
            actuals.push_back(outs.at(0));
        }
    }
    return b.embed(nd.c, actuals, "n" + std::to_string(idx) + ":");
}

Circuit flatten_tree(const CircuitTree& t, const std::string& name) {
    Builder b(name);
    auto outs = flatten_walk(b, t, t.root);
    for (Bundle& o : outs) b.output(std::move(o));
    return b.take();
}

} // namespace quilt::prim
