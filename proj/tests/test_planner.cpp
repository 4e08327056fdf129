#include "quilt/planner.hpp"

#include "doctest.h"
#include "quilt/fixtures.hpp"

#include <algorithm>
#include <set>

using namespace quilt;
using namespace quilt::plan;
using sql::RelOp;

namespace {

// multiset-canonical text form of a result, order-insensitive
std::string canon(const sql::Rows& rows) {
    std::vector<std::string> ls;
    for (const auto& r : rows) {
        std::string s;
        for (const auto& v : r) s += v.to_decimal() + ",";
        ls.push_back(std::move(s));
    }
    std::sort(ls.begin(), ls.end());
    std::string out;
    for (const auto& l : ls) out += l + "\n";
    return out;
}

sql::Schema pair_schema() {
    return sql::Schema::parse("[c @ 1]\nbound = 8\ncolumn x = width 8\ncolumn y = width 8\n"
                              "[c @ 2]\nbound = 8\ncolumn x = width 8\ncolumn y = width 8\n");
}

sql::Schema join_schema() {
    return sql::Schema::parse("[a @ 1]\nbound = 4\ncolumn x = width 8\ncolumn y = width 8\n"
                              "[b @ 2]\nbound = 4\ncolumn u = width 8\ncolumn v = width 8\n");
}

sql::Dataset rows2(const sql::Schema& s, sql::Rows r1, sql::Rows r2) {
    sql::Dataset d;
    d.schema = &s;
    sql::Table t1;
    t1.def = &s.tables[0];
    t1.rows = std::move(r1);
    d.add(std::move(t1));
    sql::Table t2;
    t2.def = &s.tables[1];
    t2.rows = std::move(r2);
    d.add(std::move(t2));
    return d;
}

sql::Rows vals(std::vector<std::vector<uint64_t>> vv) {
    sql::Rows r;
    for (auto& row : vv) {
        std::vector<Value> out;
        for (uint64_t v : row) out.push_back(Value::of(v));
        r.push_back(std::move(out));
    }
    return r;
}

// full pipeline up to circuit mapping for one explicit shape
Plan plan_shape(const RelOp& q, const sql::Dataset& d, const prim::Shape& sh,
                PlannerConfig cfg = {}) {
    OpTree t = build_tree(q);
    DeclaredSizes ds = measure_bounds(q, d);
    SplitResult sr = split_local(t, &ds, cfg.split);
    annotate_constraints(sr);
    return map_to_circuits(sr, sh, cfg);
}

bool has_ver(const Unit& u, const std::string& label) {
    for (const auto& l : u.circ.ver_labels)
        if (l == label) return true;
    return false;
}

sql::Rows run_plan(const Plan& p, const sql::Dataset& d) {
    return eval_plan(p, encode_locals(p, d));
}

} // namespace

TEST_SUITE("planner") {

TEST_CASE("a parsed query becomes a chain of singleton regions") {
    sql::FixtureParams fp;
    fp.m = 3;
    sql::Fixture fx = sql::fixture("medical", fp);
    auto q = sql::parse(fx.query, fx.schema);
    OpTree t = build_tree(*q);
    CHECK(!t.merged_any);

    std::vector<RelOp::Kind> kinds;
    const OpNode* n = t.root.get();
    while (true) {
        REQUIRE(n->members.size() == 1);
        kinds.push_back(n->members[0].op->kind);
        if (n->kids.size() != 1) break;
        n = n->kids[0].get();
    }
    CHECK(kinds == std::vector<RelOp::Kind>{RelOp::OrderByLimit, RelOp::GroupByAgg,
                                            RelOp::Filter, RelOp::Concat});
    REQUIRE(n->kids.size() == 3);
    for (const auto& k : n->kids) {
        CHECK(k->members.size() == 1);
        CHECK(k->members[0].op->kind == RelOp::Scan);
    }
}

TEST_CASE("a node feeding two parents merges with all of them") {
    sql::Schema sc = pair_schema();
    sql::Dataset d = rows2(sc, vals({{3, 3}, {3, 4}, {1, 9}}), vals({{5, 1}, {4, 4}}));

    auto bq = sql::parse("SELECT x, y FROM c@* WHERE x > 2", sc); // shared producer
    auto f1 = sql::parse("SELECT x, y FROM c@* WHERE y > 2", sc);
    auto f2 = sql::parse("SELECT x, y FROM c@* WHERE y > 3", sc);
    auto cq = sql::parse("SELECT x, y FROM c@*", sc); // bag-union root
    const RelOp* fan = bq->kids[0].get();
    OpDag dag;
    dag.nodes.resize(7);
    dag.nodes[0].op = fan->kids[0].get();
    dag.nodes[1].op = fan->kids[1].get();
    dag.nodes[2].op = fan;
    dag.nodes[2].kids = {0, 1};
    dag.nodes[3].op = bq.get(); // consumed by both 4 and 5
    dag.nodes[3].kids = {2};
    dag.nodes[4].op = f1.get();
    dag.nodes[4].kids = {3};
    dag.nodes[5].op = f2.get();
    dag.nodes[5].kids = {3};
    dag.nodes[6].op = cq.get();
    dag.nodes[6].kids = {4, 5};
    dag.root = 6;

    OpTree t = build_tree(dag);
    CHECK(t.merged_any);
    REQUIRE(t.root->merged());
    REQUIRE(t.root->members.size() == 4);
    CHECK(t.root->members[0].op->kind == RelOp::Filter);
    CHECK(t.root->members[3].op->kind == RelOp::Concat);
    REQUIRE(t.root->kids.size() == 1); // the union of scans below the region

    SplitResult sr = split_local(t, nullptr, true);
    CHECK_THROWS_AS((void)to_relop(sr), ValidationError);

    // the merged region is evaluated as one piece; the result still matches
    // the same graph with the shared branch duplicated
    annotate_constraints(sr);
    PlannerConfig cfg;
    cfg.link = cost::CostParams::uniform(2, 1.0, 1.0);
    Plan p = map_to_circuits(sr, prim::Shape::balanced(2), cfg);
    CHECK(p.shape == "single-unit");
    sql::Rows want =
        sql::eval(*sql::parse("SELECT x, y FROM c@* WHERE x > 2 AND y > 2", sc), d);
    for (auto& r : sql::eval(*sql::parse("SELECT x, y FROM c@* WHERE x > 2 AND y > 3", sc), d))
        want.push_back(r);
    CHECK(canon(run_plan(p, d)) == canon(want));
}

TEST_CASE("single-owner filters and partial aggregates move to their owners") {
    sql::FixtureParams fp;
    fp.m = 2;
    fp.n = 32;
    fp.filter_factor = 1.0;
    fp.seed = 1;
    sql::Fixture fx = sql::fixture("medical", fp);
    auto q = sql::parse(fx.query, fx.schema);

    DeclaredSizes ds = measure_bounds(*q, fx.data);
    // dense diag values: groups shrink the lists, so the aggregate splits
    REQUIRE(ds.groups.size() == 2);
    CHECK(ds.groups[0] < ds.rows[0]);

    OpTree t = build_tree(*q);
    SplitResult sr = split_local(t, &ds, true);
    CHECK(sr.split_agg);
    CHECK(sr.pushed_filters);

    // each local chain: partial count over the locally filtered scan
    for (const LocalPlan& lp : sr.locals) {
        REQUIRE(lp.ops);
        CHECK(lp.ops->kind == RelOp::GroupByAgg);
        REQUIRE(lp.ops->aggs.size() == 1);
        CHECK(lp.ops->aggs[0].kind == sql::AggKind::Count);
        CHECK(lp.ops->kids[0]->kind == RelOp::Filter);
        CHECK(lp.ops->kids[0]->kids[0]->kind == RelOp::Scan);
    }

    // joint side: the finishing aggregate sums the partial counts
    const OpNode* n = sr.joint.root.get();
    CHECK(n->out_op()->kind == RelOp::OrderByLimit);
    n = n->kids[0].get();
    REQUIRE(n->out_op()->kind == RelOp::GroupByAgg);
    REQUIRE(n->out_op()->aggs.size() == 1);
    CHECK(n->out_op()->aggs[0].kind == sql::AggKind::Sum);
    CHECK(n->out_op()->aggs[0].col == 1); // sums the partial-count column
    n = n->kids[0].get();
    CHECK(n->out_op()->kind == RelOp::Concat);
    for (const auto& k : n->kids) CHECK(k->leaf());
}

TEST_CASE("the aggregate stays joint when grouping would not shrink the lists") {
    sql::FixtureParams fp;
    fp.m = 2;
    fp.n = 16;
    sql::Fixture fx = sql::fixture("passwords", fp);
    auto q = sql::parse(fx.query, fx.schema);
    DeclaredSizes ds = measure_bounds(*q, fx.data);
    CHECK(ds.groups == ds.rows); // every (user, password) pair is unique per party
    OpTree t = build_tree(*q);
    SplitResult sr = split_local(t, &ds, true);
    CHECK(!sr.split_agg);
    Plan p = plan_query(*q, fx.data, {});
    CHECK(!p.split_agg);
}

TEST_CASE("a query with no filter and no aggregate splits into bare scans") {
    sql::Schema sc = pair_schema();
    auto q = sql::parse("SELECT x, y FROM c@*", sc);
    OpTree t = build_tree(*q);
    SplitResult sr = split_local(t, nullptr, true);
    CHECK(!sr.split_agg);
    CHECK(!sr.pushed_filters);
    CHECK(sr.joint.root->out_op()->kind == RelOp::Concat);
    REQUIRE(sr.locals.size() == 2);
    for (const LocalPlan& lp : sr.locals) CHECK(lp.ops->kind == RelOp::Scan);
}

TEST_CASE("split plans compute exactly what the unsplit query computes") {
    sql::FixtureParams fp;
    fp.n = 10;
    fp.seed = 7;
    for (const std::string& name : sql::fixture_names()) {
        for (int m : {2, 3}) {
            fp.m = m;
            sql::Fixture fx = sql::fixture(name, fp);
            auto q = sql::parse(fx.query, fx.schema);
            DeclaredSizes ds = measure_bounds(*q, fx.data);
            OpTree t = build_tree(*q);
            SplitResult sr = split_local(t, &ds, true);
            RelOpPtr back = to_relop(sr);
            CAPTURE(name);
            CAPTURE(m);
            CHECK(canon(sql::eval(*back, fx.data)) == canon(sql::eval(*q, fx.data)));
        }
    }
}

TEST_CASE("pushed equality and range filters become range checks on the edge") {
    sql::Schema sc = pair_schema();
    sql::Dataset d = rows2(sc, vals({{5, 1}, {3, 2}}), vals({{5, 9}, {6, 4}}));

    auto q = sql::parse("SELECT x, y FROM c@* WHERE x = 5", sc);
    Plan p = plan_shape(*q, d, prim::Shape::balanced(2));
    CHECK(p.decomposed);
    for (const LocalPlan& lp : p.locals) {
        REQUIRE(lp.cons.ranges.size() == 1);
        CHECK(lp.cons.ranges[0].col == 1); // x sits after the pad flag
        CHECK(lp.cons.ranges[0].lo == Value::of(5));
        CHECK(lp.cons.ranges[0].hi == Value::of(5));
        CHECK(!lp.sort.parts.empty()); // pre-sorted locally, never in-circuit
    }
    REQUIRE(p.units.size() == 1);
    CHECK(has_ver(p.units[0], "in0:range col1[5,5]"));
    CHECK(has_ver(p.units[0], "in1:range col1[5,5]"));
    CHECK(has_ver(p.units[0], "in0:sorted-nonstrict"));
    CHECK(has_ver(p.units[0], "in1:sorted-nonstrict"));
    CHECK(canon(run_plan(p, d)) == canon(sql::eval(*q, d)));

    // strict bounds clamp to the nearest contained value
    auto q2 = sql::parse("SELECT x, y FROM c@* WHERE x > 2 AND x < 7", sc);
    Plan p2 = plan_shape(*q2, d, prim::Shape::balanced(2));
    CHECK(has_ver(p2.units[0], "in0:range col1[3,6]"));
    CHECK(has_ver(p2.units[0], "in1:range col1[3,6]"));
    CHECK(canon(run_plan(p2, d)) == canon(sql::eval(*q2, d)));
}

TEST_CASE("partial aggregation promises distinct keys, not value ranges") {
    sql::FixtureParams fp;
    fp.m = 2;
    fp.n = 32;
    fp.filter_factor = 1.0;
    fp.seed = 1;
    sql::Fixture fx = sql::fixture("medical", fp);
    auto q = sql::parse(fx.query, fx.schema);
    Plan p = plan_query(*q, fx.data, {});
    REQUIRE(p.split_agg);
    for (const LocalPlan& lp : p.locals) {
        CHECK(lp.cons.distinct);
        CHECK(lp.cons.ranges.empty()); // counts and keys carry no range promise
    }
    REQUIRE(p.units.size() == 1);
    CHECK(has_ver(p.units[0], "in0:sorted-strict"));
    CHECK(has_ver(p.units[0], "in1:sorted-strict"));
    for (const auto& l : p.units[0].circ.ver_labels)
        CHECK(l.find("range") == std::string::npos);
}

TEST_CASE("what the checks cannot express merges upward") {
    sql::Schema sc = pair_schema();

    // computed output columns leave the producing node unverifiable
    auto q = sql::parse("SELECT x + y AS sxy FROM c@*", sc);
    OpTree t = build_tree(*q);
    SplitResult sr = split_local(t, nullptr, true);
    annotate_constraints(sr);
    CHECK(sr.joint.root->out_op()->kind == RelOp::ScalarExpr);
    CHECK(!sr.joint.root->verifiable);

    // an inequality join folds together with everything above it
    sql::Schema sj = join_schema();
    auto q2 = sql::parse("SELECT x, u, v FROM a@1 JOIN b@2 ON x < u WHERE v = 9", sj);
    OpTree t2 = build_tree(*q2);
    SplitResult sr2 = split_local(t2, nullptr, true);
    annotate_constraints(sr2);
    REQUIRE(sr2.joint.root->members.size() == 3);
    CHECK(sr2.joint.root->members[0].op->kind == RelOp::ThetaJoin);
    CHECK(sr2.joint.root->members[1].op->kind == RelOp::Filter);
    CHECK(sr2.joint.root->members[2].op->kind == RelOp::Project);
    CHECK(!sr2.joint.root->verifiable);
}

TEST_CASE("an inequality join runs as one joint unit and matches the oracle") {
    sql::Schema sj = join_schema();
    sql::Dataset d = rows2(sj, vals({{5, 1}, {9, 2}, {3, 3}}), vals({{6, 10}, {4, 20}, {9, 30}}));
    auto q = sql::parse("SELECT x, u, v FROM a@1 JOIN b@2 ON x < u", sj);
    Plan p = plan_query(*q, d, {});
    CHECK(p.shape == "single-unit");
    CHECK(!p.decomposed);
    REQUIRE(p.units.size() == 1);
    CHECK(p.units[0].kids.empty()); // one joint node: nothing soldered
    CHECK(p.units[0].circ.ver_labels.empty());
    for (const LocalPlan& lp : p.locals) CHECK(lp.sort.parts.empty());
    CHECK(canon(run_plan(p, d)) == canon(sql::eval(*q, d)));
}

TEST_CASE("shape enumeration covers every leaf-ordered binary tree") {
    CHECK(enumerate_shapes(2).size() == 1);
    CHECK(enumerate_shapes(3).size() == 2);
    CHECK(enumerate_shapes(4).size() == 5);
    CHECK(enumerate_shapes(8).size() == 429);
    CHECK(enumerate_shapes(9).size() == 2); // left-deep + balanced beyond 8 parties

    std::set<std::string> enc;
    for (const prim::Shape& sh : enumerate_shapes(4)) enc.insert(sh.encode());
    CHECK(enc.count("((1,2),(3,4))") == 1);
    CHECK(enc.count("(((1,2),3),4)") == 1);
    CHECK(enc.size() == 5);
}

TEST_CASE("emitted unit trees are admissible") {
    sql::FixtureParams fp;
    fp.n = 10;
    fp.seed = 7;
    for (const std::string& name : {std::string("medical"), std::string("credit")}) {
        for (int m : {4, 5}) {
            fp.m = m;
            sql::Fixture fx = sql::fixture(name, fp);
            auto q = sql::parse(fx.query, fx.schema);
            Plan p = plan_query(*q, fx.data, {});
            CAPTURE(name);
            CAPTURE(m);
            REQUIRE(p.decomposed);
            CHECK(p.units.size() == size_t(m) - 1);
            CHECK(p.root == 0);
            CHECK(p.units[0].parties == PartySet::range(m));

            std::vector<int> parent_count(p.units.size(), 0);
            for (size_t i = 0; i < p.units.size(); i++) {
                const Unit& u = p.units[i];
                // a unit's circuit runs among a superset of every kid's parties
                for (int k : u.kids) {
                    CHECK(p.units[size_t(k)].parties.subset_of(u.parties));
                    parent_count[size_t(k)]++;
                }
                // every input slot — soldered or party-fed — is verified
                for (size_t slot = 0; slot < u.circ.inputs.size(); slot++) {
                    bool any = false;
                    std::string pre = "in" + std::to_string(slot) + ":";
                    for (const auto& l : u.circ.ver_labels)
                        if (l.rfind(pre, 0) == 0) any = true;
                    CHECK(any);
                }
            }
            for (size_t i = 0; i < p.units.size(); i++)
                CHECK(parent_count[i] == (int(i) == p.root ? 0 : 1));
        }
    }
}

TEST_CASE("the corruption threshold must leave an honest party possible") {
    sql::Schema sc = pair_schema();
    sql::Dataset d = rows2(sc, vals({{5, 1}}), vals({{6, 4}}));
    auto q = sql::parse("SELECT x, y FROM c@*", sc);
    PlannerConfig cfg;
    cfg.t = 1;
    CHECK_NOTHROW(plan_query(*q, d, cfg));
    cfg.t = 2; // t = m: nobody left to trust
    CHECK_THROWS_AS(plan_query(*q, d, cfg), ValidationError);
    cfg.t = 0;
    CHECK_THROWS_AS(plan_query(*q, d, cfg), ValidationError);
}

TEST_CASE("the cheapest shape wins and never loses to the undecomposed plan") {
    sql::FixtureParams fp;
    fp.m = 4;
    fp.n = 16;
    fp.filter_factor = 1.0;
    fp.seed = 1;
    sql::Fixture fx = sql::fixture("medical", fp);
    auto q = sql::parse(fx.query, fx.schema);

    PlannerConfig uni;
    uni.link = cost::CostParams::uniform(4, 1.0, 1.0);
    double best = 0;
    bool first = true;
    for (const prim::Shape& sh : enumerate_shapes(4)) {
        Plan p = plan_shape(*q, fx.data, sh, uni);
        if (first || p.predicted_cost < best) best = p.predicted_cost;
        first = false;
    }
    Plan chosen = plan_query(*q, fx.data, uni);
    CHECK(chosen.predicted_cost == best);
    // equal link latencies and near-equal list sizes: the balanced tree,
    // which halves the solder critical path, wins outright
    CHECK(chosen.shape == "((1,2),(3,4))");

    // one slow pair: the winner keeps those two parties apart below the root
    PlannerConfig slow = uni;
    slow.link.l[0][1] = slow.link.l[1][0] = 50.0;
    Plan p2 = plan_query(*q, fx.data, slow);
    CHECK(p2.shape == "(1,(2,(3,4)))");
    for (size_t i = 0; i < p2.units.size(); i++)
        if (int(i) != p2.root)
            CHECK(!(p2.units[i].parties.contains(0) && p2.units[i].parties.contains(1)));

    // decomposition is an optimization: it must never cost more than the
    // single-circuit fallback it replaces
    sql::FixtureParams ep;
    ep.n = 10;
    ep.seed = 7;
    for (const std::string& name : sql::fixture_names()) {
        ep.m = 3;
        sql::Fixture f2 = sql::fixture(name, ep);
        auto q2 = sql::parse(f2.query, f2.schema);
        PlannerConfig mono;
        mono.decompose = false;
        Plan pm = plan_query(*q2, f2.data, mono);
        Plan pd = plan_query(*q2, f2.data, {});
        CAPTURE(name);
        CHECK(pd.predicted_cost <= pm.predicted_cost);
    }
}

TEST_CASE("a single candidate is returned unchanged") {
    sql::Schema sc = pair_schema();
    sql::Dataset d = rows2(sc, vals({{5, 1}}), vals({{6, 4}}));
    auto q = sql::parse("SELECT x, y FROM c@*", sc);
    Plan a = plan_shape(*q, d, prim::Shape::balanced(2));
    Plan b = plan_shape(*q, d, prim::Shape::balanced(2));
    std::string want = b.str();
    std::vector<Plan> cands;
    cands.push_back(std::move(a));
    Plan got = choose_plan(std::move(cands), cost::CostParams::uniform(2, 1.0, 1.0));
    CHECK(got.str() == want);
}

TEST_CASE("plans execute to the oracle's answer") {
    // every built-in workload, small m
    sql::FixtureParams fp;
    fp.n = 10;
    fp.seed = 7;
    for (const std::string& name : sql::fixture_names()) {
        for (int m : {2, 3}) {
            fp.m = m;
            sql::Fixture fx = sql::fixture(name, fp);
            auto q = sql::parse(fx.query, fx.schema);
            Plan p = plan_query(*q, fx.data, {});
            CAPTURE(name);
            CAPTURE(m);
            CHECK(canon(run_plan(p, fx.data)) == canon(sql::eval(*q, fx.data)));
        }
    }

    // multi-unit solder path, split aggregate, and the pruned top-k
    sql::FixtureParams mp;
    mp.m = 4;
    mp.n = 32;
    mp.filter_factor = 1.0;
    mp.seed = 1;
    sql::Fixture med = sql::fixture("medical", mp);
    auto mq = sql::parse(med.query, med.schema);
    Plan p = plan_query(*mq, med.data, {});
    CHECK(p.units.size() == 3);
    CHECK(p.split_agg);
    CHECK(canon(run_plan(p, med.data)) == canon(sql::eval(*mq, med.data)));

    // grouped count with a post-aggregation filter
    sql::Schema sc = pair_schema();
    sql::Dataset d = rows2(sc, vals({{1, 2}, {1, 3}, {2, 4}}), vals({{1, 5}, {3, 6}}));
    auto hq = sql::parse("SELECT x, COUNT(*) AS c FROM c@* GROUP BY x HAVING COUNT(*) > 1", sc);
    Plan hp = plan_query(*hq, d, {});
    CHECK(canon(run_plan(hp, d)) == canon(sql::eval(*hq, d)));
}

TEST_CASE("dishonest inputs abort with provenance, honest inputs never do") {
    sql::FixtureParams fp;
    fp.m = 2;
    fp.n = 8;
    fp.seed = 3;
    sql::Fixture fx = sql::fixture("credit", fp);
    auto q = sql::parse(fx.query, fx.schema);
    Plan p = plan_query(*q, fx.data, {});
    auto ins = encode_locals(p, fx.data);
    const LocalPlan& lp = p.locals[0];
    uint32_t ew = lp.lay.total();

    auto expect_abort = [&](std::vector<circ::Bits> bad, int unit, int edge,
                            const std::string& detail) {
        try {
            eval_plan(p, bad);
            FAIL_CHECK("no abort for " << detail);
        } catch (const AbortError& e) {
            CHECK(e.info.reason == "ver-failed");
            CHECK(e.info.unit == unit);
            CHECK(e.info.edge == edge);
            CHECK(e.info.detected_by == 0);
            CHECK(e.info.detail == detail);
        }
    };

    // a year outside the locally filtered range
    {
        auto bad = ins;
        uint32_t off = lp.lay.offset(3);
        for (size_t i = 0; i < lp.declared; i++)
            if (!bad[0][i * ew]) { // first unpadded element
                auto yb = Value::of(2018).to_bits(lp.lay.cols[3]);
                std::copy(yb.begin(), yb.end(), bad[0].begin() + long(i * ew + off));
                break;
            }
        expect_abort(std::move(bad), 0, 0, "in0:range col3[2019,2019]");
    }
    // two elements out of order
    {
        auto bad = ins;
        for (uint32_t j = 0; j < ew; j++) std::swap(bad[0][j], bad[0][ew + j]);
        expect_abort(std::move(bad), 0, 0, "in0:sorted-strict");
    }
    // a duplicated key where the plan promised distinct ones
    {
        auto bad = ins;
        for (uint32_t j = 0; j < ew; j++) bad[0][ew + j] = bad[0][j];
        expect_abort(std::move(bad), 0, 0, "in0:sorted-strict");
    }
    CHECK_NOTHROW(eval_plan(p, ins));

    // same for a leaf feeding an inner unit of a deeper tree
    sql::FixtureParams mp;
    mp.m = 3;
    mp.n = 32;
    mp.filter_factor = 1.0;
    mp.seed = 1;
    sql::Fixture med = sql::fixture("medical", mp);
    auto mq = sql::parse(med.query, med.schema);
    Plan p3 = plan_query(*mq, med.data, {});
    REQUIRE(p3.shape == "((1,2),3)");
    auto ins3 = encode_locals(p3, med.data);
    uint32_t ew3 = p3.locals[2].lay.total();
    auto bad = ins3;
    for (uint32_t j = 0; j < ew3; j++) std::swap(bad[2][j], bad[2][ew3 + j]);
    try {
        eval_plan(p3, bad);
        FAIL_CHECK("no abort for the third party's list");
    } catch (const AbortError& e) {
        CHECK(e.info.reason == "ver-failed");
        CHECK(e.info.unit == 0); // the root unit receives P3 directly
        CHECK(e.info.edge == 1);
        CHECK(e.info.detected_by == 0);
        CHECK(e.info.detail == "in1:sorted-strict");
    }
    CHECK_NOTHROW(eval_plan(p3, ins3));
}

TEST_CASE("inputs outside the declared contract are refused at encode time") {
    sql::Schema sj = join_schema();
    // duplicate join keys at one party: the joint intersection assumes each
    // party's key list is a set
    {
        sql::Dataset d = rows2(sj, vals({{5, 1}, {5, 2}}), vals({{5, 9}}));
        auto q = sql::parse("SELECT x, v FROM a@1 JOIN b@2 ON x = u", sj);
        Plan p = plan_query(*q, d, {});
        CHECK_THROWS_AS(encode_locals(p, d), ValidationError);
    }
    sql::Schema sc = pair_schema();
    // the all-zero element encodes an absent slot and cannot carry a row
    {
        sql::Dataset d = rows2(sc, vals({{0, 0}}), vals({{5, 9}}));
        auto q = sql::parse("SELECT x, y FROM c@*", sc);
        Plan p = plan_query(*q, d, {});
        CHECK_THROWS_AS(encode_locals(p, d), ValidationError);
    }
    // more real rows than the declared list length
    {
        sql::Dataset d = rows2(sc, vals({{5, 1}, {6, 2}}), vals({{5, 9}}));
        auto q = sql::parse("SELECT x, y FROM c@*", sc);
        Plan p = plan_query(*q, d, {});
        LocalPlan lp = std::move(p.locals[0]);
        lp.declared = 1;
        CHECK_THROWS_AS(encode_local(lp, d), ValidationError);
    }
    // a value wider than its declared column never even enters a dataset
    CHECK_THROWS_AS(rows2(sc, vals({{300, 1}}), vals({{5, 9}})), ValidationError);
    // planning requires a row bound on every scanned table
    {
        sql::Schema s2 = sql::Schema::parse("[a @ 1]\ncolumn x = width 8\n");
        sql::Dataset d;
        d.schema = &s2;
        sql::Table t;
        t.def = &s2.tables[0];
        t.rows = vals({{1}});
        d.add(std::move(t));
        auto q = sql::parse("SELECT x FROM a@1", s2);
        CHECK_THROWS_AS(plan_query(*q, d, {}), ValidationError);
    }
}

TEST_CASE("the plan document is stable") {
    sql::FixtureParams fp;
    fp.m = 3;
    fp.n = 10;
    fp.seed = 7;
    sql::Fixture fx = sql::fixture("credit", fp);
    auto q = sql::parse(fx.query, fx.schema);
    Plan a = plan_query(*q, fx.data, {});
    Plan b = plan_query(*q, fx.data, {});
    CHECK(a.str() == b.str());
    CHECK(a.hash() == b.hash());
    CHECK(a.str().find("shape=" + a.shape) != std::string::npos);
    CHECK(a.str().find("locals:") != std::string::npos);
    CHECK(a.str().find("units:") != std::string::npos);
    CHECK(a.str().find("cost:") != std::string::npos);
    CHECK(a.str().find("ver in0:") != std::string::npos);

    PlannerConfig mono;
    mono.decompose = false;
    Plan c = plan_query(*q, fx.data, mono);
    CHECK(c.str() != a.str()); // a different plan reads differently
}

} // TEST_SUITE
