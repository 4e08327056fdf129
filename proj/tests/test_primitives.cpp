#include "quilt/primitives.hpp"

#include "doctest.h"
#include "oracles.hpp"

#include <array>
#include <map>
#include <set>

using namespace quilt;
using namespace quilt::circ;
using namespace quilt::prim;
using oracle::Row;
using oracle::Rows;

namespace {

// Evaluate a list circuit: one Rows per input group, decode output 0.
Rows run_lists(const Circuit& c, const std::vector<std::pair<Rows, Layout>>& ins,
               const Layout& out_lay) {
    c.check();
    REQUIRE(c.inputs.size() == ins.size());
    std::vector<Bits> groups;
    for (const auto& [rows, lay] : ins) groups.push_back(oracle::encode_rows(rows, lay));
    auto outs = eval(c, groups);
    return oracle::decode_rows(outs.at(0), out_lay);
}

bool vers_pass(const Circuit& c, const std::vector<std::pair<Rows, Layout>>& ins) {
    Evaluator ev(c);
    for (size_t i = 0; i < ins.size(); i++)
        ev.set_input(i, oracle::encode_rows(ins[i].first, ins[i].second));
    ev.run();
    return ev.vers_ok();
}

// n distinct values in [lo, hi), ascending.
std::vector<uint64_t> distinct_sorted(Rng& rng, size_t n, uint64_t lo, uint64_t hi) {
    std::set<uint64_t> s;
    while (s.size() < n) s.insert(rng.range(lo, hi - 1));
    return {s.begin(), s.end()};
}

Rows scalar_rows(const std::vector<uint64_t>& vals) {
    Rows r;
    for (uint64_t v : vals) r.push_back({v});
    return r;
}

Rows strip_absent(const Rows& rows, const Layout& lay) {
    Rows out;
    for (const Row& r : rows)
        if (oracle::key_value(r, lay) != 0) out.push_back(r);
    return out;
}

} // namespace

TEST_SUITE("primitives") {

TEST_CASE("two-way merge matches the sorted reference") {
    Rng rng(0x11aa);
    Layout lay = Layout::scalar(12);
    SortKey key = SortKey::by_key(lay);
    for (auto [nl, nr] : {std::pair<size_t, size_t>{4, 4}, {3, 5}, {1, 6}, {7, 1}, {8, 8}}) {
        auto all = distinct_sorted(rng, nl + nr, 1, 1u << 11);
        std::vector<uint64_t> lv, rv;
        for (size_t i = 0; i < all.size(); i++) (rng.bit() && rv.size() < nr) || lv.size() == nl
                                                    ? rv.push_back(all[i])
                                                    : lv.push_back(all[i]);
        std::sort(lv.begin(), lv.end());
        std::sort(rv.begin(), rv.end());
        Rows l = scalar_rows(lv), r = scalar_rows(rv);
        Circuit c = build_merge(l.size(), r.size(), lay, key);
        Rows got = run_lists(c, {{l, lay}, {r, lay}}, lay);
        CHECK(got == oracle::merged_rows(l, r, lay, key));
    }
}

TEST_CASE("merge carries payload columns with their keys") {
    Rng rng(0x22bb);
    Layout lay;
    lay.cols = {10, 16};
    lay.key_cols = 1;
    SortKey key = SortKey::by_key(lay);
    auto keys = distinct_sorted(rng, 12, 1, 500);
    Rows l, r;
    for (size_t i = 0; i < keys.size(); i++)
        (i % 2 ? l : r).push_back({keys[i], rng.word() & 0xffff});
    Circuit c = build_merge(l.size(), r.size(), lay, key);
    Rows got = run_lists(c, {{l, lay}, {r, lay}}, lay);
    CHECK(got == oracle::merged_rows(l, r, lay, key));
}

TEST_CASE("merge under a descending-first compound key") {
    // the order-by shape: primary column descending (inverted), tiebreak ascending
    Rng rng(0x33cc);
    Layout lay;
    lay.cols = {8, 10};
    lay.key_cols = 2;
    SortKey key;
    key.parts = {{0, true}, {1, false}};
    Rows l, r;
    std::set<std::pair<uint64_t, uint64_t>> seen;
    while (l.size() + r.size() < 14) {
        Row row = {rng.range(0, 200), rng.range(1, 900)};
        if (!seen.insert({row[0], row[1]}).second) continue;
        (l.size() <= r.size() ? l : r).push_back(row);
    }
    l = oracle::sorted_rows(l, lay, key);
    r = oracle::sorted_rows(r, lay, key);
    Circuit c = build_merge(l.size(), r.size(), lay, key);
    Rows got = run_lists(c, {{l, lay}, {r, lay}}, lay);
    CHECK(got == oracle::merged_rows(l, r, lay, key));
}

TEST_CASE("full sort handles unsorted input and duplicate keys") {
    Rng rng(0x44dd);
    Layout lay;
    lay.cols = {6, 8};
    lay.key_cols = 1;
    SortKey key = SortKey::by_key(lay);
    for (size_t n : {1, 2, 5, 8, 11}) {
        Rows in;
        for (size_t i = 0; i < n; i++) in.push_back({rng.range(0, 20), rng.range(0, 255)});
        Builder b("sort");
        Bundle g = b.input(Owner::party(0), uint32_t(n * lay.total()), lay.total());
        b.output(prim::join_list(sort_lists(b, prim::split_list(g, lay.total()), lay, key)));
        Rows got = run_lists(b.take(), {{in, lay}}, lay);
        CHECK(oracle::same_multiset(got, in));
        for (size_t i = 0; i + 1 < got.size(); i++)
            CHECK_FALSE(oracle::key_less(got[i + 1], got[i], lay, key));
    }
}

TEST_CASE("merge and-gate count is the bitonic network size") {
    // cap 8 network: 12 compare-and-swaps; each costs 8 (compare) + 8 (swap)
    Circuit c = build_merge(4, 4, Layout::scalar(8), SortKey::by_key(Layout::scalar(8)));
    CHECK(c.and_count() == 12 * 16);
}

TEST_CASE("monotonizer fills gaps with the previous real row") {
    Layout lay;
    lay.cols = {8, 8};
    lay.key_cols = 1;
    Rows in = {{0, 0}, {5, 11}, {0, 0}, {0, 0}, {9, 22}, {0, 0}, {12, 33}};
    Circuit c = build_mono(in.size(), lay);
    CHECK(run_lists(c, {{in, lay}}, lay) == oracle::mono_rows(in, lay));
}

TEST_CASE("dedup keeps the last row of each run") {
    Layout lay;
    lay.cols = {8, 8};
    lay.key_cols = 1;
    Rows in = {{0, 0}, {3, 1}, {3, 2}, {3, 3}, {7, 4}, {9, 5}, {9, 6}, {9, 7}};
    Circuit c = build_dedup(in.size(), lay);
    CHECK(run_lists(c, {{in, lay}}, lay) == oracle::dedup_rows(in, lay));
}

TEST_CASE("dedup-aggregate over runs, absent rows, and padding rows") {
    Layout lay;
    lay.cols = {8, 8};
    lay.key_cols = 1;
    // leading absent run, two real groups, then per-party padding keys (top bit)
    Rows in = {{0, 0}, {0, 0}, {4, 7}, {4, 9}, {4, 1}, {6, 5}, {0x81, 0}, {0x82, 0}};
    for (Agg agg : {Agg::Count, Agg::Sum, Agg::Min, Agg::Max}) {
        CAPTURE(int(agg));
        uint32_t out_w = 12;
        Layout out_lay;
        out_lay.cols = {8, out_w};
        out_lay.key_cols = 1;
        Circuit c = build_dedup_agg(in.size(), lay, agg, 1, out_w);
        Rows got = run_lists(c, {{in, lay}}, out_lay);
        CHECK(got == oracle::dedup_agg_rows(in, lay, agg, 1, out_w));
    }
    // spot-check the reference itself on group (4): count 3, sum 17, min 1, max 9
    auto r = oracle::dedup_agg_rows(in, lay, Agg::Sum, 1, 12);
    CHECK(r[4] == Row{4, 17});
    CHECK(oracle::dedup_agg_rows(in, lay, Agg::Count, 1, 12)[4] == Row{4, 3});
    CHECK(oracle::dedup_agg_rows(in, lay, Agg::Min, 1, 12)[4] == Row{4, 1});
    CHECK(oracle::dedup_agg_rows(in, lay, Agg::Max, 1, 12)[4] == Row{4, 9});
}

TEST_CASE("dedup-aggregate tolerates filtered-out rows inside a run") {
    Layout lay;
    lay.cols = {8, 8};
    lay.key_cols = 1;
    // row 1 was zeroed by an upstream filter; the run of key 5 must not split
    Rows in = {{5, 2}, {0, 0}, {5, 3}, {6, 1}, {0, 0}, {0, 0}};
    Layout out_lay;
    out_lay.cols = {8, 12};
    out_lay.key_cols = 1;
    auto run = [&](Agg agg) {
        Circuit c = build_dedup_agg(in.size(), lay, agg, 1, 12);
        Rows got = run_lists(c, {{in, lay}}, out_lay);
        CHECK(got == oracle::dedup_agg_rows(in, lay, agg, 1, 12));
        return got;
    };
    CHECK(run(Agg::Sum) == Rows{{0, 0}, {0, 0}, {5, 5}, {6, 1}, {0, 0}, {0, 0}});
    CHECK(run(Agg::Count) == Rows{{0, 0}, {0, 0}, {5, 2}, {6, 1}, {0, 0}, {0, 0}});
    CHECK(run(Agg::Min) == Rows{{0, 0}, {0, 0}, {5, 2}, {6, 1}, {0, 0}, {0, 0}});
    CHECK(run(Agg::Max) == Rows{{0, 0}, {0, 0}, {5, 3}, {6, 1}, {0, 0}, {0, 0}});
}

TEST_CASE("sum wraps at the declared output width") {
    Layout lay;
    lay.cols = {4, 8};
    lay.key_cols = 1;
    Rows in = {{1, 200}, {1, 100}}; // 300 mod 256 = 44
    Layout out_lay;
    out_lay.cols = {4, 8};
    out_lay.key_cols = 1;
    Circuit c = build_dedup_agg(in.size(), lay, Agg::Sum, 1, 8);
    Rows got = run_lists(c, {{in, lay}}, out_lay);
    CHECK(got == oracle::dedup_agg_rows(in, lay, Agg::Sum, 1, 8));
    CHECK(got[1] == Row{1, 44});
}

TEST_CASE("pairwise intersection, exhaustive over a small universe") {
    // every pair of strictly increasing 3-lists over {1..6}
    std::vector<std::vector<uint64_t>> lists;
    for (uint64_t a = 1; a <= 6; a++)
        for (uint64_t b = a + 1; b <= 6; b++)
            for (uint64_t c = b + 1; c <= 6; c++) lists.push_back({a, b, c});
    Layout lay = Layout::scalar(4);
    Circuit c = build_2si(3, 4);
    for (const auto& lv : lists)
        for (const auto& rv : lists) {
            Rows l = scalar_rows(lv), r = scalar_rows(rv);
            Rows got = run_lists(c, {{l, lay}, {r, lay}}, lay);
            CHECK(got == oracle::isect_rows(l, r, lay));
            // each common value appears exactly once among the real outputs
            std::multiset<uint64_t> reals;
            for (const Row& row : got)
                if (row[0]) reals.insert(row[0]);
            std::set<uint64_t> want;
            for (uint64_t v : lv)
                if (std::count(rv.begin(), rv.end(), v)) want.insert(v);
            CHECK(reals.size() == want.size());
            CHECK(std::set<uint64_t>(reals.begin(), reals.end()) == want);
        }
}

TEST_CASE("pairwise intersection on wider random lists") {
    Rng rng(0x55ee);
    Layout lay = Layout::scalar(16);
    for (int t = 0; t < 10; t++) {
        auto lv = distinct_sorted(rng, 16, 1, 120);
        auto rv = distinct_sorted(rng, 16, 1, 120);
        Circuit c = build_2si(16, 16);
        Rows l = scalar_rows(lv), r = scalar_rows(rv);
        CHECK(run_lists(c, {{l, lay}, {r, lay}}, lay) == oracle::isect_rows(l, r, lay));
    }
}

TEST_CASE("tagged intersection attributes payloads from both sides") {
    // left side carries monotonizer-style duplicate runs; right is strict
    Rows l = {{3, 70}, {3, 70}, {5, 71}, {8, 72}, {8, 72}};
    Rows r = {{2, 90}, {3, 91}, {8, 92}, {9, 93}};
    IsectArgs a;
    a.key_w = 8;
    a.payl_w = 8;
    a.payr_w = 8;
    Layout in_l;
    in_l.cols = {8, 8};
    in_l.key_cols = 1;
    Layout out_lay;
    out_lay.cols = {8, 8, 8};
    out_lay.key_cols = 1;
    Circuit c = build_2si_star(l.size(), r.size(), a);
    Rows got = run_lists(c, {{l, in_l}, {r, in_l}}, out_lay);
    CHECK(got == oracle::isect_tagged_rows(l, r, 8, 8, 8));
    Rows reals = strip_absent(got, out_lay);
    CHECK(reals == Rows{{3, 70, 91}, {8, 72, 92}});
}

TEST_CASE("tagged intersection with one-sided payload and odd totals") {
    Rng rng(0x66ff);
    for (int t = 0; t < 8; t++) {
        auto lk = distinct_sorted(rng, 7, 1, 60);
        auto rk = distinct_sorted(rng, 4, 1, 60);
        Rows l, r;
        for (uint64_t k : lk) l.push_back({k, rng.range(1, 255)});
        for (uint64_t k : rk) r.push_back({k});
        IsectArgs a;
        a.key_w = 8;
        a.payl_w = 8;
        a.payr_w = 0;
        Layout in_l;
        in_l.cols = {8, 8};
        in_l.key_cols = 1;
        Layout in_r = Layout::scalar(8);
        Layout out_lay;
        out_lay.cols = {8, 8};
        out_lay.key_cols = 1;
        Circuit c = build_2si_star(l.size(), r.size(), a);
        Rows got = run_lists(c, {{l, in_l}, {r, in_r}}, out_lay);
        CHECK(got == oracle::isect_tagged_rows(l, r, 8, 8, 0));
    }
}

TEST_CASE("verifier circuits accept and reject correctly") {
    Layout lay = Layout::scalar(8);
    auto ver_ok = [&](const Rows& rows, VerSpec spec) {
        Circuit c = build_ver(rows.size(), lay, spec);
        Evaluator ev(c);
        ev.set_input(0, oracle::encode_rows(rows, lay));
        ev.run();
        return ev.value(c.outputs[0]).as_u64() == 1;
    };
    VerSpec strict{VerSpec::Kind::SortedStrict, 0, {}, {}};
    VerSpec loose{VerSpec::Kind::SortedNonstrict, 0, {}, {}};
    VerSpec dist{VerSpec::Kind::Distinct, 0, {}, {}};
    CHECK(ver_ok({{1}, {4}, {9}}, strict));
    CHECK_FALSE(ver_ok({{1}, {4}, {4}}, strict));
    CHECK_FALSE(ver_ok({{1}, {4}, {4}}, dist));
    CHECK(ver_ok({{1}, {4}, {4}}, loose));
    CHECK_FALSE(ver_ok({{4}, {1}, {9}}, loose));
    CHECK(ver_ok({{7}}, strict)); // single row trivially sorted

    VerSpec range{VerSpec::Kind::Range, 0, Value::of(10), Value::of(20)};
    CHECK(ver_ok({{10}, {15}, {20}}, range));
    CHECK(ver_ok({{0}, {15}, {0x95}}, range)); // absent and padding rows exempt
    CHECK_FALSE(ver_ok({{9}, {15}}, range));
    CHECK_FALSE(ver_ok({{15}, {21}}, range));
}

TEST_CASE("row filters match plaintext predicates") {
    Rng rng(0x7711);
    Layout lay;
    lay.cols = {8, 8, 8};
    lay.key_cols = 1;
    Rows in;
    for (int i = 0; i < 12; i++)
        in.push_back({rng.range(1, 100), rng.range(0, 50), rng.range(0, 50)});

    SUBCASE("column vs constant, all operators") {
        for (CmpOp op : {CmpOp::Eq, CmpOp::Ne, CmpOp::Lt, CmpOp::Le, CmpOp::Gt, CmpOp::Ge}) {
            Circuit c = build_filter(in.size(), lay, 1, op, Value::of(25));
            Rows got = run_lists(c, {{in, lay}}, lay);
            for (size_t i = 0; i < in.size(); i++) {
                uint64_t v = in[i][1];
                bool keep = op == CmpOp::Eq   ? v == 25
                            : op == CmpOp::Ne ? v != 25
                            : op == CmpOp::Lt ? v < 25
                            : op == CmpOp::Le ? v <= 25
                            : op == CmpOp::Gt ? v > 25
                                              : v >= 25;
                CHECK(got[i] == (keep ? in[i] : Row{0, 0, 0}));
            }
        }
    }

    SUBCASE("spread predicate: max - min > threshold") {
        auto spread = PredExpr::cmp(
            ScalarExpr::fold(ScalarExpr::K::Sub,
                             {ScalarExpr::fold(ScalarExpr::K::Max, {ScalarExpr::column(1),
                                                                    ScalarExpr::column(2)}),
                              ScalarExpr::fold(ScalarExpr::K::Min, {ScalarExpr::column(1),
                                                                    ScalarExpr::column(2)})}),
            CmpOp::Gt, ScalarExpr::constant(Value::of(10)));
        Circuit c = build_expr_filter(in.size(), lay, spread);
        Rows got = run_lists(c, {{in, lay}}, lay);
        for (size_t i = 0; i < in.size(); i++) {
            uint64_t hi = std::max(in[i][1], in[i][2]), lo = std::min(in[i][1], in[i][2]);
            CHECK(got[i] == (hi - lo > 10 ? in[i] : Row{0, 0, 0}));
        }
    }

    SUBCASE("conjunction and negation") {
        PredExpr p;
        p.kind = PredExpr::K::And;
        p.args.push_back(PredExpr::cmp(ScalarExpr::column(1), CmpOp::Ge,
                                       ScalarExpr::constant(Value::of(10))));
        PredExpr notp;
        notp.kind = PredExpr::K::Not;
        notp.args.push_back(PredExpr::cmp(ScalarExpr::column(2), CmpOp::Eq,
                                          ScalarExpr::constant(Value::of(0))));
        p.args.push_back(notp);
        Circuit c = build_expr_filter(in.size(), lay, p);
        Rows got = run_lists(c, {{in, lay}}, lay);
        for (size_t i = 0; i < in.size(); i++) {
            bool keep = in[i][1] >= 10 && in[i][2] != 0;
            CHECK(got[i] == (keep ? in[i] : Row{0, 0, 0}));
        }
    }
}

TEST_CASE("theta join pairs rows under the predicate, skipping non-rows") {
    Layout lay;
    lay.cols = {8, 8};
    lay.key_cols = 1;
    Rows l = {{3, 10}, {0, 0}, {7, 30}, {0x90, 5}}; // absent + padding planted
    Rows r = {{2, 12}, {5, 3}, {0, 0}};
    // join on l.pay > r.pay  (columns 1 and 3 of the concatenated row)
    auto pred = PredExpr::cmp(ScalarExpr::column(1), CmpOp::Gt, ScalarExpr::column(3));
    Circuit c = build_theta_join(l.size(), r.size(), lay, lay, pred);
    Layout out_lay;
    out_lay.cols = {8, 8, 8, 8};
    out_lay.key_cols = 1;
    Rows got = run_lists(c, {{l, lay}, {r, lay}}, out_lay);
    REQUIRE(got.size() == l.size() * r.size());
    size_t idx = 0;
    for (const Row& a : l)
        for (const Row& b : r) {
            bool real = a[0] != 0 && !(a[0] & 0x80) && b[0] != 0 && !(b[0] & 0x80);
            bool keep = real && a[1] > b[1];
            Row want = keep ? Row{a[0], a[1], b[0], b[1]} : Row{0, 0, 0, 0};
            CHECK(got[idx++] == want);
        }
}

TEST_CASE("multi-way sort agrees across every tree shape") {
    Rng rng(0x8822);
    Layout lay;
    lay.cols = {10, 8};
    lay.key_cols = 1;
    SortKey key = SortKey::by_key(lay);
    std::vector<size_t> sizes = {3, 4, 2, 3};
    auto keys = distinct_sorted(rng, 12, 1, 400);
    std::vector<Rows> party(4);
    {
        size_t at = 0;
        for (size_t p = 0; p < 4; p++)
            for (size_t i = 0; i < sizes[p]; i++) party[p].push_back({keys[at++], p});
        for (auto& rows : party) rows = oracle::sorted_rows(rows, lay, key);
    }
    Rows all;
    for (auto& rows : party) all.insert(all.end(), rows.begin(), rows.end());
    Rows want = oracle::sorted_rows(all, lay, key);

    for (const Shape& s : Shape::enumerate(4)) {
        CAPTURE(s.encode());
        Circuit c = build_msort(sizes, lay, key, s);
        std::vector<std::pair<Rows, Layout>> ins;
        for (size_t p = 0; p < 4; p++) ins.push_back({party[p], lay});
        CHECK(run_lists(c, ins, lay) == want);
    }
}

TEST_CASE("multi-way set union sorts then drops earlier duplicates") {
    Layout lay = Layout::scalar(8);
    std::vector<size_t> sizes = {3, 3, 3};
    Rows p0 = scalar_rows({2, 9, 14});
    Rows p1 = scalar_rows({2, 9, 30});
    Rows p2 = scalar_rows({9, 21, 30});
    Circuit c = build_msu(sizes, lay, Shape::balanced(3));
    Rows got = run_lists(c, {{p0, lay}, {p1, lay}, {p2, lay}}, lay);
    CHECK(got == oracle::dedup_rows(
                     oracle::sorted_rows({{2}, {9}, {14}, {2}, {9}, {30}, {9}, {21}, {30}}, lay,
                                         SortKey::by_key(lay)),
                     lay));
    CHECK(strip_absent(got, lay) == Rows{{2}, {9}, {14}, {21}, {30}});
}

TEST_CASE("multi-way intersection across shapes and party counts") {
    Rng rng(0x9933);
    for (size_t m : {2, 3, 4}) {
        // plant a known common core plus per-party noise
        std::set<uint64_t> core_set;
        while (core_set.size() < 3) core_set.insert(rng.range(1, 100));
        std::vector<std::vector<uint64_t>> vals(m);
        for (size_t p = 0; p < m; p++) {
            std::set<uint64_t> s = core_set;
            while (s.size() < 6) s.insert(rng.range(1, 100));
            vals[p].assign(s.begin(), s.end());
        }
        std::set<uint64_t> want = core_set;
        for (size_t p = 0; p < m; p++) {
            std::set<uint64_t> next;
            for (uint64_t v : vals[p])
                if (want.count(v)) next.insert(v);
            want = next;
        }
        MsiSpec spec;
        spec.m = m;
        spec.n = 6;
        spec.key_w = 8;
        spec.with_ver = true;
        for (const Shape& s : Shape::enumerate(m)) {
            CAPTURE(m);
            CAPTURE(s.encode());
            CircuitTree t = build_msi_tree(spec, s);
            Circuit flat = flatten_tree(t, "msi");
            flat.check();
            Layout lay = Layout::scalar(8);
            std::vector<std::pair<Rows, Layout>> ins;
            for (size_t p = 0; p < m; p++) ins.push_back({scalar_rows(vals[p]), lay});
            Rows got = run_lists(flat, ins, lay);
            std::multiset<uint64_t> reals;
            for (const Row& r : got)
                if (r[0]) reals.insert(r[0]);
            CHECK(std::set<uint64_t>(reals.begin(), reals.end()) == want);
            CHECK(reals.size() == want.size()); // no duplicated emissions
            CHECK(vers_pass(flat, ins));
        }
    }
}

TEST_CASE("intersection tree verifiers catch an unsorted leaf") {
    MsiSpec spec;
    spec.m = 3;
    spec.n = 4;
    spec.key_w = 8;
    spec.with_ver = true;
    Circuit flat = flatten_tree(build_msi_tree(spec, Shape::balanced(3)), "msi");
    Layout lay = Layout::scalar(8);
    Rows ok = scalar_rows({3, 5, 8, 12});
    Rows bad = scalar_rows({5, 3, 8, 12});
    CHECK(vers_pass(flat, {{ok, lay}, {ok, lay}, {ok, lay}}));
    CHECK_FALSE(vers_pass(flat, {{ok, lay}, {bad, lay}, {ok, lay}}));
    // duplicate keys inside one leaf also violate strictness
    Rows dup = scalar_rows({3, 5, 5, 12});
    CHECK_FALSE(vers_pass(flat, {{dup, lay}, {ok, lay}, {ok, lay}}));
}

TEST_CASE("intersection tree carries per-party payload columns") {
    MsiSpec spec;
    spec.m = 3;
    spec.n = 4;
    spec.key_w = 8;
    spec.payload_w = {6, 9, 11};
    spec.with_ver = false;
    std::vector<uint64_t> common = {20, 40};
    std::map<uint64_t, std::array<uint64_t, 3>> pay;
    pay[20] = {11, 222, 1024};
    pay[40] = {33, 444, 2000};
    std::vector<Rows> party(3);
    party[0] = {{5, 1}, {20, 11}, {40, 33}, {60, 2}};
    party[1] = {{20, 222}, {25, 3}, {40, 444}, {70, 4}};
    party[2] = {{10, 5}, {20, 1024}, {40, 2000}, {80, 6}};
    Layout in_lay[3];
    for (int p = 0; p < 3; p++) {
        in_lay[p].cols = {8, spec.payload_w[p]};
        in_lay[p].key_cols = 1;
    }
    Layout out_lay;
    out_lay.cols = {8, 6, 9, 11};
    out_lay.key_cols = 1;
    for (const Shape& s : Shape::enumerate(3)) {
        CAPTURE(s.encode());
        Circuit flat = flatten_tree(build_msi_tree(spec, s), "msi");
        Rows got = run_lists(
            flat, {{party[0], in_lay[0]}, {party[1], in_lay[1]}, {party[2], in_lay[2]}}, out_lay);
        Rows reals = strip_absent(got, out_lay);
        REQUIRE(reals.size() == common.size());
        for (size_t i = 0; i < common.size(); i++) {
            uint64_t k = common[i];
            CHECK(reals[i] == Row{k, pay[k][0], pay[k][1], pay[k][2]});
        }
    }
}

TEST_CASE("multi-way sort tree with embedded verifiers") {
    Layout lay = Layout::scalar(8);
    MsortTreeSpec spec;
    spec.sizes = {3, 3, 2};
    spec.lay = lay;
    spec.key = SortKey::by_key(lay);
    spec.with_ver = true;
    spec.leaf_kind = VerSpec::Kind::SortedNonstrict;
    Circuit flat = flatten_tree(build_msort_tree(spec, Shape::left_deep(3)), "msort");
    Rows p0 = scalar_rows({4, 4, 30});
    Rows p1 = scalar_rows({2, 17, 40});
    Rows p2 = scalar_rows({8, 25});
    Rows got = run_lists(flat, {{p0, lay}, {p1, lay}, {p2, lay}}, lay);
    Rows all = {{4}, {4}, {30}, {2}, {17}, {40}, {8}, {25}};
    CHECK(got == oracle::sorted_rows(all, lay, spec.key));
    CHECK(vers_pass(flat, {{p0, lay}, {p1, lay}, {p2, lay}}));
    Rows bad = scalar_rows({30, 4, 4});
    CHECK_FALSE(vers_pass(flat, {{bad, lay}, {p1, lay}, {p2, lay}}));
}

TEST_CASE("prune to the leading rows keeps behaviour and shrinks the circuit") {
    Rng rng(0xaa44);
    Layout lay;
    lay.cols = {8, 10};
    lay.key_cols = 2;
    SortKey key;
    key.parts = {{0, true}, {1, false}}; // descending primary, ascending tiebreak
    Rows in;
    std::set<std::pair<uint64_t, uint64_t>> seen;
    while (in.size() < 8) {
        Row r = {rng.range(1, 120), rng.range(1, 1000)};
        if (seen.insert({r[0], r[1]}).second) in.push_back(r);
    }
    Builder b("topk");
    Bundle g = b.input(Owner::party(0), uint32_t(in.size() * lay.total()), lay.total());
    b.output(prim::join_list(sort_lists(b, prim::split_list(g, lay.total()), lay, key)));
    Circuit full = b.take();
    Circuit top3 = prune_to_top_l(full, 3);
    top3.check();
    CHECK(top3.and_count() < full.and_count());
    Rows want = oracle::sorted_rows(in, lay, key);
    want.resize(3);
    CHECK(run_lists(top3, {{in, lay}}, lay) == want);
}

TEST_CASE("shape enumeration matches the full binary tree count") {
    CHECK(Shape::enumerate(1).size() == 1);
    CHECK(Shape::enumerate(2).size() == 1);
    CHECK(Shape::enumerate(3).size() == 2);
    CHECK(Shape::enumerate(4).size() == 5);
    CHECK(Shape::enumerate(5).size() == 14);
    CHECK(Shape::enumerate(6).size() == 42);
    CHECK(Shape::enumerate(7).size() == 132);
    CHECK(Shape::enumerate(8).size() == 429);
    CHECK(Shape::left_deep(4).encode() == "(((1,2),3),4)");
    CHECK(Shape::balanced(4).encode() == "((1,2),(3,4))");
    CHECK(Shape::enumerate(9).size() == 2); // beyond 8 parties: heuristics only
    // deterministic enumeration order (ties in the planner depend on it)
    auto three = Shape::enumerate(3);
    CHECK(three[0].encode() == "(1,(2,3))");
    CHECK(three[1].encode() == "((1,2),3)");
}

} // TEST_SUITE
