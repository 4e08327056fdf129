#include "quilt/planner.hpp"

#include <algorithm>
#include <functional>
#include <map>
#include <sstream>

namespace quilt::plan {

using circ::Builder;
using circ::Bundle;
using circ::Circuit;
using circ::Owner;

static_assert(int(sql::CmpOp::Ge) == int(prim::CmpOp::Ge), "cmp enums must align");
static_assert(int(sql::AggKind::Max) == int(prim::Agg::Max), "agg enums must align");

// ---------------------------------------------------------------------------
// Text forms
// ---------------------------------------------------------------------------

static const char* op_name(RelOp::Kind k) {
    switch (k) {
    case RelOp::Scan: return "Scan";
    case RelOp::Concat: return "Concat";
    case RelOp::Filter: return "Filter";
    case RelOp::Project: return "Project";
    case RelOp::EquiJoin: return "EquiJoin";
    case RelOp::ThetaJoin: return "ThetaJoin";
    case RelOp::GroupByAgg: return "GroupByAgg";
    case RelOp::OrderByLimit: return "OrderByLimit";
    case RelOp::ScalarExpr: return "ScalarExpr";
    }
    return "?";
}

std::string ConstraintSet::str() const {
    std::ostringstream o;
    o << "{";
    bool first = true;
    for (const ColRange& r : ranges) {
        o << (first ? "" : " ") << "c" << r.col << ":" << r.lo.to_decimal() << ".."
          << r.hi.to_decimal();
        first = false;
    }
    if (sorted_prefix) {
        o << (first ? "" : " ") << "sorted=" << sorted_prefix;
        first = false;
    }
    if (distinct) o << (first ? "" : " ") << "distinct";
    o << "}";
    return o.str();
}

static std::string member_str(const RelOp& op) {
    std::string s = op_name(op.kind);
    if (op.kind == RelOp::Scan && op.table)
        s += " " + op.table->name + "@" + std::to_string(op.table->owner + 1);
    return s;
}

std::string OpNode::str(int indent) const {
    std::string pad(size_t(indent), ' ');
    std::ostringstream o;
    if (leaf()) {
        o << pad << "local[P" << leaf_party + 1 << "]\n";
        return o.str();
    }
    if (merged()) {
        o << pad << "region{";
        for (size_t i = 0; i < members.size(); i++)
            o << (i ? " " : "") << member_str(*members[i].op);
        o << "}";
    } else {
        o << pad << member_str(*members[0].op);
    }
    if (!verifiable) o << " unverifiable";
    std::string cs = cons.str();
    if (cs != "{}") o << " cons=" << cs;
    o << "\n";
    for (const OpNodePtr& k : kids) o << k->str(indent + 2);
    return o.str();
}

std::string LocalPlan::str() const {
    std::ostringstream o;
    o << "P" << party + 1 << ": declared=" << declared << " cols=[";
    for (size_t i = 0; i < col_order.size(); i++) o << (i ? "," : "") << col_order[i];
    o << "] key_cols=" << lay.key_cols << " sort=[";
    for (size_t i = 0; i < sort.parts.size(); i++)
        o << (i ? "," : "") << sort.parts[i].col << (sort.parts[i].invert ? "v" : "");
    o << "] cons=" << cons.str() << "\n";
    if (ops) o << ops->str(4);
    return o.str();
}

// ---------------------------------------------------------------------------
// Shallow op copy: everything but the kids. Tree rewrites wire kids
// themselves; deep clone() would duplicate whole subtrees.
// ---------------------------------------------------------------------------

static RelOpPtr shallow(const RelOp& op) {
    auto c = std::make_unique<RelOp>();
    c->kind = op.kind;
    c->cols = op.cols;
    c->table = op.table;
    c->alias = op.alias;
    if (op.pred) c->pred = op.pred->clone();
    for (const sql::ExprPtr& e : op.exprs) c->exprs.push_back(e->clone());
    c->join_keys = op.join_keys;
    c->group_keys = op.group_keys;
    c->aggs = op.aggs;
    if (op.having) c->having = op.having->clone();
    c->order_col = op.order_col;
    c->desc = op.desc;
    c->limit = op.limit;
    return c;
}

// ---------------------------------------------------------------------------
// build_tree: one implementation over the explicit graph form; the RelOp
// overload converts first. HAVING clauses are lowered into a filter above
// the group so every member is a plain operator.
// ---------------------------------------------------------------------------

namespace {

struct WEdge {
    int node = -1;
    int member = 0;
};

struct WNode {
    std::vector<OpNode::Member> members;
    std::vector<WEdge> kids;
    int order = 0;
    bool alive = true;
};

struct GraphBuild {
    std::vector<WNode> nodes;
    std::vector<RelOpPtr> pool;
    int root = -1;
    bool merged_any = false;

    int add_op(const RelOp* op, std::vector<WEdge> kids) {
        WNode n;
        OpNode::Member m;
        m.op = op;
        for (size_t k = 0; k < kids.size(); k++) m.ins.push_back(~int(k));
        n.members = {std::move(m)};
        n.kids = std::move(kids);
        n.order = int(nodes.size());
        nodes.push_back(std::move(n));
        return int(nodes.size() - 1);
    }

    // Split `having` off a group node into an explicit filter above it.
    int add_lowered(const RelOp* op, std::vector<WEdge> kids) {
        if (op->kind != RelOp::GroupByAgg || !op->having)
            return add_op(op, std::move(kids));
        RelOpPtr g = shallow(*op);
        g->having.reset();
        RelOpPtr f = std::make_unique<RelOp>();
        f->kind = RelOp::Filter;
        f->cols = op->cols;
        f->pred = op->having->clone();
        const RelOp* gp = g.get();
        const RelOp* fp = f.get();
        pool.push_back(std::move(g));
        pool.push_back(std::move(f));
        int gi = add_op(gp, std::move(kids));
        return add_op(fp, {{gi, 0}});
    }

    int last_member(int node) const { return int(nodes[node].members.size()) - 1; }

    void merge_step(int x, const std::vector<int>& parents) {
        WNode m;
        m.members = nodes[x].members;
        m.order = nodes[x].order;
        std::vector<WEdge> mkids;
        std::map<std::pair<int, int>, int> kidpos;
        auto kid_slot = [&](WEdge e) {
            auto key = std::make_pair(e.node, e.member);
            auto it = kidpos.find(key);
            if (it != kidpos.end()) return it->second;
            int pos = int(mkids.size());
            mkids.push_back(e);
            kidpos[key] = pos;
            return pos;
        };
        // x's own kid references
        for (OpNode::Member& mem : m.members)
            for (int& in : mem.ins)
                if (in < 0) in = ~kid_slot(nodes[x].kids[~in]);
        std::map<int, int> offset; // merged-in node -> member offset
        offset[x] = 0;
        for (int p : parents) {
            int off = int(m.members.size());
            offset[p] = off;
            m.order = std::max(m.order, nodes[p].order);
            for (const OpNode::Member& src : nodes[p].members) {
                OpNode::Member mem = src;
                for (int& in : mem.ins) {
                    if (in >= 0) {
                        in += off;
                        continue;
                    }
                    WEdge e = nodes[p].kids[~in];
                    auto it = offset.find(e.node);
                    if (it != offset.end()) {
                        if (it->second + e.member >= off + int(&src - nodes[p].members.data()))
                            throw ValidationError("unsupported operator graph (member order)");
                        in = it->second + e.member;
                    } else {
                        in = ~kid_slot(e);
                    }
                }
                m.members.push_back(std::move(mem));
            }
        }
        m.kids = std::move(mkids);
        int mi = int(nodes.size());
        nodes.push_back(std::move(m));
        nodes[x].alive = false;
        for (int p : parents) nodes[p].alive = false;
        // redirect edges into the merged node
        for (WNode& n : nodes) {
            if (!n.alive) continue;
            for (WEdge& e : n.kids) {
                auto it = offset.find(e.node);
                if (it != offset.end()) {
                    e.member += it->second;
                    e.node = mi;
                }
            }
        }
        if (offset.count(root)) root = mi;
        merged_any = true;
    }

    void merge_shared() {
        for (;;) {
            std::vector<std::vector<int>> pedges(nodes.size());
            for (size_t i = 0; i < nodes.size(); i++) {
                if (!nodes[i].alive) continue;
                for (const WEdge& e : nodes[i].kids) pedges[size_t(e.node)].push_back(int(i));
            }
            int x = -1;
            for (size_t i = 0; i < nodes.size(); i++)
                if (nodes[i].alive && int(i) != root && pedges[i].size() >= 2) {
                    x = int(i);
                    break;
                }
            if (x < 0) return;
            std::vector<int>& ps = pedges[size_t(x)];
            std::sort(ps.begin(), ps.end(),
                      [&](int a, int b) { return nodes[a].order < nodes[b].order; });
            ps.erase(std::unique(ps.begin(), ps.end()), ps.end());
            merge_step(x, ps);
        }
    }

    OpNodePtr treeify(int ni) const {
        const WNode& w = nodes[size_t(ni)];
        auto n = std::make_unique<OpNode>();
        n->members = w.members;
        for (const WEdge& e : w.kids) {
            if (e.member != last_member(e.node))
                throw ValidationError("unsupported operator graph (non-final edge)");
            n->kids.push_back(treeify(e.node));
        }
        return n;
    }
};

} // namespace

OpTree build_tree(const OpDag& dag) {
    if (dag.root < 0 || dag.root >= int(dag.nodes.size()))
        throw ValidationError("operator graph: bad root");
    GraphBuild g;
    // topological order via DFS from the root; builds nodes kid-first so the
    // creation index doubles as a topo rank
    std::vector<int> built(dag.nodes.size(), -1);
    std::vector<int> visiting(dag.nodes.size(), 0);
    std::function<int(int)> dfs = [&](int i) -> int {
        if (i < 0 || i >= int(dag.nodes.size()) || !dag.nodes[size_t(i)].op)
            throw ValidationError("operator graph: bad node reference");
        if (built[size_t(i)] >= 0) return built[size_t(i)];
        if (visiting[size_t(i)]) throw ValidationError("operator graph: cycle");
        visiting[size_t(i)] = 1;
        std::vector<WEdge> kids;
        for (int k : dag.nodes[size_t(i)].kids) {
            int c = dfs(k);
            kids.push_back({c, g.last_member(c)});
        }
        visiting[size_t(i)] = 0;
        built[size_t(i)] = g.add_lowered(dag.nodes[size_t(i)].op, std::move(kids));
        return built[size_t(i)];
    };
    g.root = dfs(dag.root);
    g.merge_shared();
    OpTree t;
    t.root = g.treeify(g.root);
    t.pool = std::move(g.pool);
    t.merged_any = g.merged_any;
    return t;
}

OpTree build_tree(const RelOp& q) {
    OpDag dag;
    std::function<int(const RelOp&)> add = [&](const RelOp& op) -> int {
        OpDag::N n;
        n.op = &op;
        for (const RelOpPtr& k : op.kids) n.kids.push_back(add(*k));
        dag.nodes.push_back(std::move(n));
        return int(dag.nodes.size() - 1);
    };
    dag.root = add(q);
    return build_tree(dag);
}

// ---------------------------------------------------------------------------
// Predicate plumbing for the pushdown pass.
// ---------------------------------------------------------------------------

static void flatten_and(const sql::Pred& p, std::vector<const sql::Pred*>& out) {
    if (p.kind == sql::Pred::And) {
        flatten_and(*p.a, out);
        flatten_and(*p.b, out);
    } else {
        out.push_back(&p);
    }
}

static void expr_cols(const sql::Expr& e, std::vector<int>& out) {
    if (e.kind == sql::Expr::Col) out.push_back(e.col);
    for (const sql::ExprPtr& a : e.args) expr_cols(*a, out);
}

static void pred_cols(const sql::Pred& p, std::vector<int>& out) {
    if (p.kind == sql::Pred::Cmp) {
        expr_cols(*p.lhs, out);
        expr_cols(*p.rhs, out);
        return;
    }
    if (p.a) pred_cols(*p.a, out);
    if (p.b) pred_cols(*p.b, out);
}

static sql::ExprPtr expr_shift(const sql::Expr& e, int delta) {
    sql::ExprPtr c = e.clone();
    std::function<void(sql::Expr&)> walk = [&](sql::Expr& x) {
        if (x.kind == sql::Expr::Col) x.col += delta;
        for (sql::ExprPtr& a : x.args) walk(*a);
    };
    walk(*c);
    return c;
}

static sql::PredPtr pred_shift(const sql::Pred& p, int delta) {
    sql::PredPtr c = p.clone();
    std::function<void(sql::Pred&)> walk = [&](sql::Pred& x) {
        if (x.kind == sql::Pred::Cmp) {
            x.lhs = expr_shift(*x.lhs, delta);
            x.rhs = expr_shift(*x.rhs, delta);
            return;
        }
        if (x.a) walk(*x.a);
        if (x.b) walk(*x.b);
    };
    walk(*c);
    return c;
}

static sql::PredPtr conj_of(std::vector<sql::PredPtr> parts) {
    if (parts.empty()) return nullptr;
    sql::PredPtr acc = std::move(parts[0]);
    for (size_t i = 1; i < parts.size(); i++)
        acc = sql::Pred::logic(sql::Pred::And, std::move(acc), std::move(parts[i]));
    return acc;
}

// column-vs-constant comparison, normalized to (col OP const)
struct ColConst {
    int col = -1;
    sql::CmpOp op = sql::CmpOp::Eq;
    Value v;
};

static bool as_col_const(const sql::Pred& p, ColConst& out) {
    if (p.kind != sql::Pred::Cmp) return false;
    const sql::Expr& l = *p.lhs;
    const sql::Expr& r = *p.rhs;
    if (l.kind == sql::Expr::Col && r.kind == sql::Expr::Lit) {
        out = {l.col, p.op, r.lit};
        return true;
    }
    if (l.kind == sql::Expr::Lit && r.kind == sql::Expr::Col) {
        sql::CmpOp f = p.op;
        switch (p.op) {
        case sql::CmpOp::Lt: f = sql::CmpOp::Gt; break;
        case sql::CmpOp::Le: f = sql::CmpOp::Ge; break;
        case sql::CmpOp::Gt: f = sql::CmpOp::Lt; break;
        case sql::CmpOp::Ge: f = sql::CmpOp::Le; break;
        default: break;
        }
        out = {r.col, f, l.lit};
        return true;
    }
    return false;
}

static bool is_chain_op(RelOp::Kind k) {
    return k == RelOp::Filter || k == RelOp::Project || k == RelOp::ScalarExpr ||
           k == RelOp::GroupByAgg || k == RelOp::OrderByLimit;
}

// ---------------------------------------------------------------------------
// split_local
// ---------------------------------------------------------------------------

static void collect_scans(const OpNode& n, std::vector<const RelOp*>& out) {
    for (const OpNode::Member& m : n.members)
        if (m.op && m.op->kind == RelOp::Scan) out.push_back(m.op);
    for (const OpNodePtr& k : n.kids) collect_scans(*k, out);
}

static OpNodePtr leaf_node(int party) {
    auto n = std::make_unique<OpNode>();
    n->leaf_party = party;
    return n;
}

static OpNodePtr wrap_node(const RelOp* op, std::vector<OpNodePtr> kids) {
    auto n = std::make_unique<OpNode>();
    OpNode::Member m;
    m.op = op;
    for (size_t k = 0; k < kids.size(); k++) m.ins.push_back(~int(k));
    n->members = {std::move(m)};
    n->kids = std::move(kids);
    return n;
}

// deep copy with singleton Scan nodes replaced by party leaves
static OpNodePtr copy_subst(const OpNode& n,
                            const std::map<const RelOp*, const RelOp*>& remap) {
    if (n.leaf()) return leaf_node(n.leaf_party);
    if (!n.merged() && n.out_op()->kind == RelOp::Scan)
        return leaf_node(n.out_op()->table->owner);
    auto c = std::make_unique<OpNode>();
    c->members = n.members;
    for (OpNode::Member& m : c->members) {
        auto it = remap.find(m.op);
        if (it != remap.end()) m.op = it->second;
    }
    c->leaf_party = n.leaf_party;
    for (const OpNodePtr& k : n.kids) c->kids.push_back(copy_subst(*k, remap));
    return c;
}

SplitResult split_local(const OpTree& t, const DeclaredSizes* declared, bool allow_split) {
    SplitResult s;
    // party roster from the scans
    std::vector<const RelOp*> scans;
    collect_scans(*t.root, scans);
    if (scans.empty()) throw ValidationError("query has no table inputs");
    int m = 0;
    for (const RelOp* sc : scans) m = std::max(m, sc->table->owner + 1);
    {
        std::vector<int> per(size_t(m), 0);
        for (const RelOp* sc : scans) per[size_t(sc->table->owner)]++;
        for (int p = 0; p < m; p++)
            if (!per[size_t(p)])
                throw ValidationError("party P" + std::to_string(p + 1) +
                                      " contributes no input");
    }

    // keep rewrite-produced ops alive in the result tree's pool, and keep
    // referencing the source tree's pool ops (HAVING filters) via clones
    std::map<const RelOp*, const RelOp*> remap;
    for (const RelOpPtr& op : t.pool) {
        RelOpPtr c = shallow(*op);
        remap[op.get()] = c.get();
        s.joint.pool.push_back(std::move(c));
    }
    s.joint.merged_any = t.merged_any;

    // chain walk: root -> fan-in
    std::vector<const OpNode*> chain;
    const OpNode* cur = t.root.get();
    while (!cur->leaf() && cur->kids.size() == 1 && !cur->merged() &&
           is_chain_op(cur->out_op()->kind)) {
        chain.push_back(cur);
        cur = cur->kids[0].get();
    }
    const OpNode* fan = cur;

    bool regular = false;
    std::vector<int> slot_party;               // fan-in kid -> owner
    std::vector<std::vector<const RelOp*>> slot_scans;
    if (!fan->leaf() && !fan->merged()) {
        RelOp::Kind fk = fan->out_op()->kind;
        if (fk == RelOp::Scan) {
            regular = true;
            slot_party = {fan->out_op()->table->owner};
            slot_scans = {{fan->out_op()}};
        } else if (fk == RelOp::Concat || fk == RelOp::EquiJoin) {
            regular = true;
            for (const OpNodePtr& k : fan->kids) {
                if (k->leaf() || k->merged() || k->out_op()->kind != RelOp::Scan) {
                    regular = false;
                    break;
                }
                int owner = k->out_op()->table->owner;
                if (fk == RelOp::Concat) {
                    // fold same-owner union branches into one local
                    auto it = std::find(slot_party.begin(), slot_party.end(), owner);
                    if (it != slot_party.end()) {
                        slot_scans[size_t(it - slot_party.begin())].push_back(k->out_op());
                        continue;
                    }
                } else {
                    if (std::count(slot_party.begin(), slot_party.end(), owner))
                        throw UnsupportedError(
                            "self-joins need two input lists from one party; each party "
                            "contributes one joint input list");
                }
                slot_party.push_back(owner);
                slot_scans.push_back({k->out_op()});
            }
        }
    }

    auto bound_of = [&](int p) -> size_t {
        size_t b = 0;
        for (const RelOp* sc : scans)
            if (sc->table->owner == p) b += size_t(sc->table->bound);
        return std::max<size_t>(b, 1);
    };

    s.locals.resize(size_t(m));
    for (int p = 0; p < m; p++) s.locals[size_t(p)].party = p;

    if (!regular) {
        // irregular shape: no pushes, no split; one scan per party required
        std::vector<const RelOp*> per(size_t(m), nullptr);
        for (const RelOp* sc : scans) {
            const RelOp*& slot = per[size_t(sc->table->owner)];
            if (slot && slot != sc)
                throw UnsupportedError("each party contributes one joint input list");
            slot = sc;
        }
        for (int p = 0; p < m; p++) s.locals[size_t(p)].ops = shallow(*per[size_t(p)]);
        s.joint.root = copy_subst(*t.root, remap);
    } else {
        // locals: per-slot scan chains (same-owner unions concatenated)
        std::vector<RelOpPtr> slot_ops;
        for (size_t k = 0; k < slot_party.size(); k++) {
            if (slot_scans[k].size() == 1) {
                slot_ops.push_back(shallow(*slot_scans[k][0]));
            } else {
                auto cc = std::make_unique<RelOp>();
                cc->kind = RelOp::Concat;
                cc->cols = slot_scans[k][0]->cols;
                for (const RelOp* sc : slot_scans[k]) cc->kids.push_back(shallow(*sc));
                slot_ops.push_back(std::move(cc));
            }
        }

        // walk the chain bottom-up, pushing filters and splitting the first
        // group-by when the declared sizes say the partial pass pays off
        bool fan_concat = fan->out_op()->kind == RelOp::Concat;
        bool only_filters_below = true;
        std::vector<const RelOp*> joint_ops; // bottom -> top
        std::vector<int> block_off;          // EquiJoin: kid column offsets
        if (!fan_concat && fan->out_op()->kind == RelOp::EquiJoin) {
            int off = 0;
            for (const OpNodePtr& k : fan->kids) {
                block_off.push_back(off);
                off += int(k->out_op()->cols.size());
            }
        }

        bool want_split = true;
        if (declared) {
            size_t rs = 0, gs = 0;
            for (int p = 0; p < m; p++) {
                rs += declared->rows[size_t(p)];
                gs += declared->groups[size_t(p)];
            }
            want_split = gs < rs;
        }

        for (auto it = chain.rbegin(); it != chain.rend(); ++it) {
            const RelOp* op = (*it)->out_op();
            auto mapped = remap.find(op);
            if (mapped != remap.end()) op = mapped->second;

            if (op->kind == RelOp::Filter && only_filters_below && allow_split) {
                std::vector<const sql::Pred*> conj;
                flatten_and(*op->pred, conj);
                std::vector<sql::PredPtr> residue;
                for (const sql::Pred* c : conj) {
                    if (fan_concat) {
                        // a row predicate distributes over the union
                        for (RelOpPtr& lo : slot_ops) {
                            auto f = std::make_unique<RelOp>();
                            f->kind = RelOp::Filter;
                            f->cols = lo->cols;
                            f->pred = c->clone();
                            f->kids.push_back(std::move(lo));
                            lo = std::move(f);
                        }
                        s.pushed_filters = true;
                        continue;
                    }
                    std::vector<int> cols;
                    pred_cols(*c, cols);
                    int slot = -1;
                    bool single = !cols.empty();
                    for (int cc : cols) {
                        int b = 0;
                        while (b + 1 < int(block_off.size()) && cc >= block_off[size_t(b + 1)])
                            b++;
                        if (slot < 0) slot = b;
                        if (slot != b) single = false;
                    }
                    if (single) {
                        auto f = std::make_unique<RelOp>();
                        f->kind = RelOp::Filter;
                        f->cols = slot_ops[size_t(slot)]->cols;
                        f->pred = pred_shift(*c, -block_off[size_t(slot)]);
                        f->kids.push_back(std::move(slot_ops[size_t(slot)]));
                        slot_ops[size_t(slot)] = std::move(f);
                        s.pushed_filters = true;
                    } else {
                        residue.push_back(c->clone());
                    }
                }
                if (!residue.empty()) {
                    auto f = shallow(*op);
                    f->pred = conj_of(std::move(residue));
                    const RelOp* fp = f.get();
                    s.joint.pool.push_back(std::move(f));
                    joint_ops.push_back(fp);
                    only_filters_below = false;
                }
                continue;
            }

            if (op->kind == RelOp::GroupByAgg && only_filters_below && allow_split &&
                fan_concat && want_split) {
                // local partial aggregation...
                for (RelOpPtr& lo : slot_ops) {
                    auto g = shallow(*op);
                    g->kids.push_back(std::move(lo));
                    lo = std::move(g);
                }
                // ...plus a joint combining pass over the partials
                auto g2 = shallow(*op);
                size_t nk = op->group_keys.size();
                g2->group_keys.clear();
                for (size_t i = 0; i < nk; i++) g2->group_keys.push_back(int(i));
                for (size_t i = 0; i < g2->aggs.size(); i++) {
                    sql::AggSpec& a = g2->aggs[i];
                    if (a.kind == sql::AggKind::Count) a.kind = sql::AggKind::Sum;
                    a.col = int(nk + i);
                }
                const RelOp* gp = g2.get();
                s.joint.pool.push_back(std::move(g2));
                joint_ops.push_back(gp);
                s.split_agg = true;
                only_filters_below = false;
                continue;
            }

            joint_ops.push_back(op);
            only_filters_below = false;
        }

        for (size_t k = 0; k < slot_party.size(); k++)
            s.locals[size_t(slot_party[k])].ops = std::move(slot_ops[k]);

        // joint tree: leaves under the fan-in, then the surviving chain
        OpNodePtr jr;
        if (fan->out_op()->kind == RelOp::Scan) {
            jr = leaf_node(slot_party[0]);
        } else {
            std::vector<OpNodePtr> leaves;
            for (int p : slot_party) leaves.push_back(leaf_node(p));
            const RelOp* fop = fan->out_op();
            if (fan_concat && slot_party.size() != fan->kids.size()) {
                auto cc = shallow(*fop); // same-owner branches folded locally
                const RelOp* cp = cc.get();
                s.joint.pool.push_back(std::move(cc));
                fop = cp;
            }
            jr = wrap_node(fop, std::move(leaves));
        }
        for (const RelOp* op : joint_ops) {
            std::vector<OpNodePtr> kid;
            kid.push_back(std::move(jr));
            jr = wrap_node(op, std::move(kid));
        }
        s.joint.root = std::move(jr);
    }

    // defaults: identity wire order, declared size per lane
    for (int p = 0; p < m; p++) {
        LocalPlan& lp = s.locals[size_t(p)];
        lp.col_order.clear();
        lp.lay.cols = {1};
        for (size_t i = 0; i < lp.ops->cols.size(); i++) {
            lp.col_order.push_back(uint32_t(i));
            lp.lay.cols.push_back(lp.ops->cols[i].width);
        }
        lp.lay.key_cols = 1;
        lp.sort.parts.clear();
        size_t d;
        if (declared)
            d = s.split_agg ? declared->groups[size_t(p)]
                            : (s.pushed_filters ? declared->rows[size_t(p)]
                                                : declared->raw[size_t(p)]);
        else
            d = bound_of(p);
        lp.declared = std::max<size_t>(d, 1);
    }
    return s;
}

DeclaredSizes measure_bounds(const RelOp& q, const sql::Dataset& data) {
    OpTree t = build_tree(q);
    SplitResult s = split_local(t, nullptr, true); // optimistic structure
    DeclaredSizes d;
    size_t m = s.locals.size();
    d.raw.resize(m);
    d.rows.resize(m);
    d.groups.resize(m);
    std::vector<const RelOp*> scans;
    collect_scans(*t.root, scans);
    for (size_t p = 0; p < m; p++) {
        size_t raw = 0;
        for (const RelOp* sc : scans)
            if (sc->table->owner == int(p)) {
                const sql::Table* tb = data.find(sc->table->name, int(p));
                raw += tb ? tb->rows.size() : 0;
            }
        d.raw[p] = raw;
        const RelOp& chain = *s.locals[p].ops;
        if (chain.kind == RelOp::GroupByAgg) {
            d.groups[p] = sql::eval(chain, data).size();
            d.rows[p] = sql::eval(*chain.kids[0], data).size();
        } else {
            d.rows[p] = sql::eval(chain, data).size();
            d.groups[p] = d.rows[p];
        }
    }
    return d;
}

// ---------------------------------------------------------------------------
// to_relop
// ---------------------------------------------------------------------------

static RelOpPtr node_to_relop(const OpNode& n, const SplitResult& s) {
    if (n.leaf()) return s.locals[size_t(n.leaf_party)].ops->clone();
    if (n.merged())
        throw ValidationError("merged region has no single-tree form");
    RelOpPtr op = shallow(*n.out_op());
    for (const OpNodePtr& k : n.kids) op->kids.push_back(node_to_relop(*k, s));
    return op;
}

RelOpPtr to_relop(const SplitResult& s) { return node_to_relop(*s.joint.root, s); }

// ---------------------------------------------------------------------------
// annotate_constraints
// ---------------------------------------------------------------------------

static void narrow_ranges(ConstraintSet& cs, const sql::Pred& pred,
                          const std::vector<sql::OutCol>& in) {
    std::vector<const sql::Pred*> conj;
    flatten_and(pred, conj);
    for (const sql::Pred* c : conj) {
        ColConst cc;
        if (!as_col_const(*c, cc) || cc.op == sql::CmpOp::Ne) continue;
        ConstraintSet::ColRange* r = nullptr;
        for (ConstraintSet::ColRange& x : cs.ranges)
            if (x.col == uint32_t(cc.col)) r = &x;
        if (!r) {
            ConstraintSet::ColRange x;
            x.col = uint32_t(cc.col);
            x.lo = Value();
            uint32_t w = in[size_t(cc.col)].width;
            for (uint32_t i = 0; i < w; i++) x.hi.set_bit(i, true);
            cs.ranges.push_back(x);
            r = &cs.ranges.back();
        }
        switch (cc.op) {
        case sql::CmpOp::Eq:
            r->lo = cc.v;
            r->hi = cc.v;
            break;
        case sql::CmpOp::Le:
            if (cc.v < r->hi) r->hi = cc.v;
            break;
        case sql::CmpOp::Lt:
            if (!cc.v.is_zero() && Value::sub(cc.v, Value::of(1)) < r->hi)
                r->hi = Value::sub(cc.v, Value::of(1));
            break;
        case sql::CmpOp::Ge:
            if (r->lo < cc.v) r->lo = cc.v;
            break;
        case sql::CmpOp::Gt:
            if (r->lo < Value::add(cc.v, Value::of(1))) r->lo = Value::add(cc.v, Value::of(1));
            break;
        default: break;
        }
    }
}

static bool pred_is_col_const_conj(const sql::Pred& p) {
    if (p.kind == sql::Pred::And) return pred_is_col_const_conj(*p.a) && pred_is_col_const_conj(*p.b);
    ColConst cc;
    return as_col_const(p, cc);
}

// what one operator's output provably satisfies, given its input's set
static ConstraintSet op_cons(const RelOp& op, const std::vector<ConstraintSet>& kids) {
    ConstraintSet out;
    switch (op.kind) {
    case RelOp::Scan:
        for (size_t i = 0; i < op.cols.size(); i++)
            if (op.cols[i].has_range)
                out.ranges.push_back({uint32_t(i), op.cols[i].lo, op.cols[i].hi});
        return out;
    case RelOp::Filter:
        out = kids[0];
        out.sorted_prefix = 0;
        narrow_ranges(out, *op.pred, op.cols);
        return out;
    case RelOp::Project:
        for (size_t i = 0; i < op.exprs.size(); i++) {
            if (op.exprs[i]->kind != sql::Expr::Col) continue;
            for (const ConstraintSet::ColRange& r : kids[0].ranges)
                if (r.col == uint32_t(op.exprs[i]->col))
                    out.ranges.push_back({uint32_t(i), r.lo, r.hi});
        }
        return out;
    case RelOp::Concat:
        // per-column span across the branches
        for (const ConstraintSet::ColRange& r : kids[0].ranges) {
            Value lo = r.lo, hi = r.hi;
            bool all = true;
            for (size_t k = 1; k < kids.size(); k++) {
                bool found = false;
                for (const ConstraintSet::ColRange& o : kids[k].ranges)
                    if (o.col == r.col) {
                        found = true;
                        if (o.lo < lo) lo = o.lo;
                        if (hi < o.hi) hi = o.hi;
                    }
                all = all && found;
            }
            if (all) out.ranges.push_back({r.col, lo, hi});
        }
        return out;
    case RelOp::EquiJoin: {
        uint32_t off = 0;
        for (size_t k = 0; k < kids.size(); k++) {
            for (const ConstraintSet::ColRange& r : kids[k].ranges)
                out.ranges.push_back({off + r.col, r.lo, r.hi});
            off += uint32_t(op.kids.empty() ? 0 : op.kids[k]->cols.size());
        }
        out.distinct = true;
        return out;
    }
    case RelOp::GroupByAgg:
        // output is one row per key; learned value ranges do not survive
        // aggregation, so only distinctness is claimed
        out.distinct = true;
        return out;
    case RelOp::OrderByLimit:
    case RelOp::ThetaJoin:
    case RelOp::ScalarExpr: return out;
    }
    return out;
}

static bool op_verifiable(const RelOp& op) {
    switch (op.kind) {
    case RelOp::Filter: return pred_is_col_const_conj(*op.pred);
    case RelOp::ThetaJoin:
    case RelOp::ScalarExpr: return false;
    case RelOp::Project:
        for (const sql::ExprPtr& e : op.exprs)
            if (e->kind != sql::Expr::Col) return false;
        return true;
    default: return true;
    }
}

// absorb kid i (an unverifiable producer) into n: its output edge disappears
static void fold_kid(OpNode& n, size_t i) {
    OpNode kid = std::move(*n.kids[size_t(i)]);
    size_t kn = kid.members.size();
    size_t kk = kid.kids.size();
    for (OpNode::Member& m : n.members)
        for (int& in : m.ins) {
            if (in >= 0)
                in += int(kn);
            else if (size_t(~in) == i)
                in = int(kn) - 1;
            else if (size_t(~in) > i)
                in = ~int(size_t(~in) + kk - 1);
        }
    for (OpNode::Member& m : kid.members)
        for (int& in : m.ins)
            if (in < 0) in = ~int(size_t(~in) + i);
    std::vector<OpNode::Member> ms = std::move(kid.members);
    for (OpNode::Member& m : n.members) ms.push_back(std::move(m));
    n.members = std::move(ms);
    std::vector<OpNodePtr> kids;
    for (size_t j = 0; j < i; j++) kids.push_back(std::move(n.kids[j]));
    for (OpNodePtr& k : kid.kids) kids.push_back(std::move(k));
    for (size_t j = i + 1; j < n.kids.size(); j++) kids.push_back(std::move(n.kids[j]));
    n.kids = std::move(kids);
}

static void annotate_node(OpNode& n, SplitResult& s) {
    if (n.leaf()) {
        n.cons = ConstraintSet{};
        // recompute from the local chain
        std::function<ConstraintSet(const RelOp&)> walk = [&](const RelOp& op) {
            std::vector<ConstraintSet> kc;
            for (const RelOpPtr& k : op.kids) kc.push_back(walk(*k));
            if (op.kind != RelOp::Scan && kc.empty()) kc.push_back(ConstraintSet{});
            return op_cons(op, kc);
        };
        n.cons = walk(*s.locals[size_t(n.leaf_party)].ops);
        n.verifiable = true;
        return;
    }
    for (OpNodePtr& k : n.kids) annotate_node(*k, s);
    for (size_t i = n.kids.size(); i-- > 0;)
        if (!n.kids[i]->verifiable && !n.kids[i]->leaf()) fold_kid(n, i);
    if (n.merged()) {
        n.verifiable = false;
        n.cons = ConstraintSet{};
        return;
    }
    const RelOp& op = *n.out_op();
    std::vector<ConstraintSet> kc;
    for (const OpNodePtr& k : n.kids) kc.push_back(k->cons);
    if (kc.empty()) kc.push_back(ConstraintSet{});
    n.cons = op_cons(op, kc);
    n.verifiable = op_verifiable(op);
}

void annotate_constraints(SplitResult& s) {
    for (LocalPlan& lp : s.locals) {
        std::function<ConstraintSet(const RelOp&)> walk = [&](const RelOp& op) {
            std::vector<ConstraintSet> kc;
            for (const RelOpPtr& k : op.kids) kc.push_back(walk(*k));
            if (op.kind != RelOp::Scan && kc.empty()) kc.push_back(ConstraintSet{});
            return op_cons(op, kc);
        };
        lp.cons = walk(*lp.ops);
    }
    annotate_node(*s.joint.root, s);
    // a fold may have produced a fresh multi-parent situation? no: folding is
    // strictly into the single parent, so the tree shape is preserved
}

// ---------------------------------------------------------------------------
// Lowering: expression conversion and the list-state op machinery.
// ---------------------------------------------------------------------------

static prim::ScalarExpr to_sexpr(const sql::Expr& e, const std::vector<uint32_t>& map) {
    switch (e.kind) {
    case sql::Expr::Col: return prim::ScalarExpr::column(map[size_t(e.col)]);
    case sql::Expr::Lit: return prim::ScalarExpr::constant(e.lit);
    case sql::Expr::Add:
    case sql::Expr::Sub: {
        prim::ScalarExpr x;
        x.kind = e.kind == sql::Expr::Add ? prim::ScalarExpr::K::Add : prim::ScalarExpr::K::Sub;
        x.args = {to_sexpr(*e.args[0], map), to_sexpr(*e.args[1], map)};
        return x;
    }
    case sql::Expr::Greatest:
    case sql::Expr::Least: {
        prim::ScalarExpr acc = to_sexpr(*e.args[0], map);
        for (size_t i = 1; i < e.args.size(); i++) {
            prim::ScalarExpr x;
            x.kind = e.kind == sql::Expr::Greatest ? prim::ScalarExpr::K::Max
                                                   : prim::ScalarExpr::K::Min;
            x.args = {std::move(acc), to_sexpr(*e.args[i], map)};
            acc = std::move(x);
        }
        return acc;
    }
    }
    throw ValidationError("bad expression");
}

static prim::PredExpr to_pexpr(const sql::Pred& p, const std::vector<uint32_t>& map) {
    prim::PredExpr x;
    switch (p.kind) {
    case sql::Pred::Cmp:
        return prim::PredExpr::cmp(to_sexpr(*p.lhs, map), prim::CmpOp(int(p.op)),
                                   to_sexpr(*p.rhs, map));
    case sql::Pred::And:
    case sql::Pred::Or:
        x.kind = p.kind == sql::Pred::And ? prim::PredExpr::K::And : prim::PredExpr::K::Or;
        x.args = {to_pexpr(*p.a, map), to_pexpr(*p.b, map)};
        return x;
    case sql::Pred::Not:
        x.kind = prim::PredExpr::K::Not;
        x.args = {to_pexpr(*p.a, map)};
        return x;
    }
    throw ValidationError("bad predicate");
}

static Bundle fit(Builder& b, Bundle x, uint32_t w) {
    if (x.wires.size() > w) return x.slice(0, w);
    while (x.wires.size() < w) x.wires.push_back(b.zero());
    return x;
}

namespace {

struct LState {
    std::vector<Bundle> elems;
    prim::Layout lay;          // col 0 = pad flag
    std::vector<uint32_t> map; // op-output column -> layout column
    bool sorted = false;       // ascending under lay's key prefix
};

// pred: keep rows whose pad flag is clear (zeroes padding in place)
prim::PredExpr flag_clear() {
    return prim::PredExpr::cmp(prim::ScalarExpr::column(0), prim::CmpOp::Eq,
                               prim::ScalarExpr::constant(Value()));
}

struct Lower {
    Builder& b;
    const SplitResult& s;
    bool clear_leaf_pads = false; // single-unit lane
    std::map<int, LState> leaves;

    LState& leaf(int party) {
        auto it = leaves.find(party);
        if (it != leaves.end()) return it->second;
        const LocalPlan& lp = s.locals[size_t(party)];
        uint32_t ew = lp.lay.total();
        Bundle in = b.input(Owner::party(party), uint32_t(lp.declared) * ew, ew,
                            "P" + std::to_string(party + 1));
        LState st;
        st.elems = prim::split_list(in, ew);
        st.lay = lp.lay;
        st.map.resize(lp.col_order.size());
        for (size_t i = 0; i < lp.col_order.size(); i++)
            st.map[lp.col_order[i]] = uint32_t(1 + i);
        st.sorted = !lp.sort.parts.empty();
        if (clear_leaf_pads)
            st.elems = prim::filter_lists(b, st.elems, st.lay, flag_clear());
        return leaves.emplace(party, std::move(st)).first->second;
    }

    LState apply_filter(const RelOp& op, LState st) {
        st.elems = prim::filter_lists(b, st.elems, st.lay, to_pexpr(*op.pred, st.map));
        return st;
    }

    // Project and ScalarExpr: rebuild each element as flag ++ computed cols
    LState apply_exprs(const RelOp& op, LState st) {
        LState out;
        out.lay.cols = {1};
        for (const sql::OutCol& c : op.cols) out.lay.cols.push_back(c.width);
        out.lay.key_cols = 1;
        out.map.resize(op.cols.size());
        for (size_t i = 0; i < op.cols.size(); i++) out.map[i] = uint32_t(1 + i);
        std::vector<prim::ScalarExpr> exprs;
        for (const sql::ExprPtr& e : op.exprs) exprs.push_back(to_sexpr(*e, st.map));
        for (const Bundle& e : st.elems) {
            Bundle ne = st.lay.col_of(e, 0); // carry the pad flag through
            for (size_t i = 0; i < exprs.size(); i++)
                ne = Builder::concat(ne,
                                     fit(b, prim::scalar_expr(b, e, st.lay, exprs[i]),
                                         op.cols[i].width));
            // constant expressions must not conjure rows out of absent slots
            ne = b.mask(ne, b.nonzero(e));
            ne.elem_width = out.lay.total();
            out.elems.push_back(std::move(ne));
        }
        out.sorted = false;
        return out;
    }

    LState apply_group(const RelOp& op, LState st) {
        size_t nk = op.group_keys.size();
        bool leading = st.lay.key_cols == uint32_t(1 + nk);
        for (size_t i = 0; i < nk && leading; i++)
            leading = st.map[size_t(op.group_keys[i])] == uint32_t(1 + i);
        if (!leading || !st.sorted) {
            // reorder keys to the front, then sort in-circuit
            std::vector<uint32_t> pick = {0};
            for (int k : op.group_keys) pick.push_back(st.map[size_t(k)]);
            std::vector<uint32_t> rest;
            for (uint32_t c = 1; c < st.lay.cols.size(); c++)
                if (std::find(pick.begin(), pick.end(), c) == pick.end()) rest.push_back(c);
            std::vector<uint32_t> old_of; // new layout col -> old layout col
            old_of = pick;
            old_of.insert(old_of.end(), rest.begin(), rest.end());
            prim::Layout nl;
            for (uint32_t c : old_of) nl.cols.push_back(st.lay.cols[c]);
            nl.key_cols = uint32_t(1 + nk);
            std::vector<uint32_t> nmap(st.map.size(), 0);
            for (size_t sc = 0; sc < st.map.size(); sc++) {
                auto it = std::find(old_of.begin(), old_of.end(), st.map[sc]);
                if (it != old_of.end()) nmap[sc] = uint32_t(it - old_of.begin());
            }
            st.elems = prim::project_lists(b, st.elems, st.lay, old_of);
            st.lay = nl;
            st.map = std::move(nmap);
            // sort in the key-slice integer order (first column least
            // significant) — the order the dedup pass and the sorted
            // verifiers read off the wires
            prim::SortKey sk;
            for (uint32_t c = st.lay.key_cols; c-- > 0;) sk.parts.push_back({c, false});
            st.elems = prim::sort_lists(b, st.elems, st.lay, sk);
        }
        // aggregate columns share emission slots, so runs can be zipped
        LState out;
        out.lay.cols.assign(st.lay.cols.begin(), st.lay.cols.begin() + 1 + long(nk));
        out.lay.key_cols = uint32_t(1 + nk);
        out.map.assign(op.cols.size(), 0);
        for (size_t i = 0; i < nk; i++) out.map[i] = uint32_t(1 + i);
        uint32_t kb = out.lay.key_bits();
        std::vector<std::vector<Bundle>> parts;
        for (size_t i = 0; i < op.aggs.size(); i++) {
            const sql::AggSpec& a = op.aggs[i];
            uint32_t ow = op.cols[nk + i].width;
            uint32_t ac = a.col >= 0 ? st.map[size_t(a.col)] : 0;
            parts.push_back(
                prim::dedup_agg_lists(b, st.elems, st.lay, prim::Agg(int(a.kind)), ac, ow));
            out.lay.cols.push_back(ow);
            out.map[nk + i] = uint32_t(1 + nk + i);
        }
        for (size_t j = 0; j < st.elems.size(); j++) {
            Bundle ne = parts[0][j].slice(0, kb);
            for (size_t i = 0; i < parts.size(); i++)
                ne = Builder::concat(ne, parts[i][j].slice(kb, op.cols[nk + i].width));
            ne.elem_width = out.lay.total();
            out.elems.push_back(std::move(ne));
        }
        out.sorted = true; // emission keeps key positions; zeros interleave
        return out;
    }

    LState apply_order(const RelOp& op, LState st) {
        // materialize an absent bit so empty slots sort last either way
        std::vector<Bundle> tagged;
        for (const Bundle& e : st.elems) {
            Bundle t;
            t.wires = {b.binv(b.nonzero(e))};
            t = Builder::concat(t, e);
            tagged.push_back(std::move(t));
        }
        prim::Layout tl;
        tl.cols = {1};
        for (uint32_t c : st.lay.cols) tl.cols.push_back(c);
        tl.key_cols = 1;
        // same compound order the plaintext evaluation uses: the sort column,
        // then the remaining output columns ascending
        prim::SortKey key;
        key.parts.push_back({0, false});
        key.parts.push_back({1 + st.map[size_t(op.order_col)], op.desc});
        for (size_t i = 0; i < st.map.size(); i++)
            if (int(i) != op.order_col) key.parts.push_back({1 + st.map[i], false});
        tagged = prim::sort_lists(b, tagged, tl, key);
        size_t keep = std::min<size_t>(size_t(op.limit), tagged.size());
        st.elems.clear();
        uint32_t ew = st.lay.total();
        for (size_t i = 0; i < keep; i++) {
            Bundle e = tagged[i].slice(1, ew);
            e.elem_width = ew;
            st.elems.push_back(std::move(e));
        }
        st.sorted = false;
        return st;
    }

    LState apply_concat(const std::vector<const LState*>& ins) {
        LState out = *ins[0];
        for (size_t k = 1; k < ins.size(); k++) {
            if (ins[k]->lay.total() != out.lay.total())
                throw ValidationError("union branches disagree on row layout");
            for (const Bundle& e : ins[k]->elems) out.elems.push_back(e);
        }
        out.sorted = false;
        return out;
    }

    // tagged-intersection fold over the kid lists (set semantics: per-party
    // keys are distinct; enforced by encode checks and strict verifiers)
    struct SiSide {
        std::vector<Bundle> elems;
        uint32_t pay_w = 0;
    };

    SiSide si_fold(const std::vector<SiSide>& sides, uint32_t key_w, size_t lo, size_t hi,
                   bool root) {
        if (hi - lo == 1) return sides[lo];
        size_t mid = (lo + hi) / 2;
        SiSide l = si_fold(sides, key_w, lo, mid, false);
        SiSide r = si_fold(sides, key_w, mid, hi, false);
        prim::IsectArgs a;
        a.key_w = key_w;
        a.payl_w = l.pay_w;
        a.payr_w = r.pay_w;
        SiSide out;
        out.elems = prim::isect_tagged_lists(b, l.elems, r.elems, a);
        out.pay_w = l.pay_w + r.pay_w;
        if (!root) {
            prim::Layout ml;
            ml.cols = {key_w};
            if (out.pay_w) ml.cols.push_back(out.pay_w);
            ml.key_cols = 1;
            out.elems = prim::mono_lists(b, out.elems, ml);
        }
        return out;
    }

    LState apply_equijoin(const RelOp& op, const std::vector<const LState*>& ins) {
        uint32_t kw = ins[0]->lay.cols[ins[0]->map[size_t(op.join_keys[0])]];
        std::vector<SiSide> sides;
        std::vector<std::vector<uint32_t>> pay_cols(ins.size());
        for (size_t k = 0; k < ins.size(); k++) {
            LState st = *ins[k];
            uint32_t kc = st.map[size_t(op.join_keys[k])];
            if (st.lay.cols[kc] != kw)
                throw ValidationError("join key widths disagree");
            std::vector<uint32_t> pick = {0, kc};
            for (uint32_t c = 1; c < st.lay.cols.size(); c++)
                if (c != kc) {
                    pick.push_back(c);
                    pay_cols[k].push_back(st.lay.cols[c]);
                }
            prim::Layout nl;
            for (uint32_t c : pick) nl.cols.push_back(st.lay.cols[c]);
            nl.key_cols = 2;
            std::vector<Bundle> es = prim::project_lists(b, st.elems, st.lay, pick);
            // intersection reads (flag ++ key) as one integer, so sort with
            // the key as primary and the flag as its low-bit tie break
            prim::SortKey sk;
            sk.parts = {{1, false}, {0, false}};
            es = prim::sort_lists(b, es, nl, sk);
            SiSide sd;
            sd.elems = std::move(es);
            sd.pay_w = nl.total() - 1 - kw;
            sides.push_back(std::move(sd));
        }
        size_t n = 0;
        for (const SiSide& sd : sides) n = std::max(n, sd.elems.size());
        for (SiSide& sd : sides) // intersection levels need equal lengths
            while (sd.elems.size() < n) {
                Bundle z = b.constant(Value(), 1 + kw + sd.pay_w);
                z.elem_width = z.width();
                sd.elems.insert(sd.elems.begin(), std::move(z));
            }
        SiSide r = si_fold(sides, 1 + kw, 0, sides.size(), true);
        LState out;
        out.lay.cols = {1, kw};
        out.lay.key_cols = 2;
        for (size_t k = 0; k < ins.size(); k++)
            for (uint32_t w : pay_cols[k]) out.lay.cols.push_back(w);
        // join output columns: kid blocks in order, key columns aliased
        uint32_t pc = 2;
        for (size_t k = 0; k < ins.size(); k++) {
            const std::vector<sql::OutCol>& kcols =
                op.kids.empty() ? s.locals[size_t(k)].ops->cols : op.kids[k]->cols;
            for (size_t c = 0; c < kcols.size(); c++)
                out.map.push_back(int(c) == op.join_keys[k] ? 1 : pc++);
        }
        for (Bundle& e : r.elems) e.elem_width = out.lay.total();
        out.elems = std::move(r.elems);
        out.sorted = true;
        return out;
    }

    LState apply_theta(const RelOp& op, const std::vector<const LState*>& ins) {
        const LState& l = *ins[0];
        const LState& r = *ins[1];
        LState out;
        out.lay.cols = {1};
        for (uint32_t c = 1; c < l.lay.cols.size(); c++) out.lay.cols.push_back(l.lay.cols[c]);
        for (uint32_t c = 1; c < r.lay.cols.size(); c++) out.lay.cols.push_back(r.lay.cols[c]);
        out.lay.key_cols = 1;
        size_t ln = l.lay.cols.size() - 1;
        for (size_t c = 0; c < ln; c++) out.map.push_back(uint32_t(1 + c));
        for (size_t c = 0; c + 1 < r.lay.cols.size(); c++)
            out.map.push_back(uint32_t(1 + ln + c));
        prim::PredExpr pred = to_pexpr(*op.pred, out.map);
        uint32_t lw = l.lay.total() - 1;
        Bundle zflag = b.constant(Value(), 1);
        for (const Bundle& le : l.elems)
            for (const Bundle& re : r.elems) {
                Bundle row = Builder::concat(zflag, le.slice(1, lw));
                row = Builder::concat(row, re.slice(1, r.lay.total() - 1));
                Wire ok = b.band(b.nonzero(le), b.nonzero(re));
                ok = b.band(ok, b.band(prim::pred_expr(b, row, out.lay, pred),
                                       b.band(b.binv(le.wires[0]), b.binv(re.wires[0]))));
                row = b.mux(ok, row, b.constant(Value(), row.width()));
                row.elem_width = out.lay.total();
                out.elems.push_back(std::move(row));
            }
        out.sorted = false;
        return out;
    }

    LState member(const RelOp& op, const std::vector<const LState*>& ins) {
        switch (op.kind) {
        case RelOp::Scan: return leaf(op.table->owner);
        case RelOp::Filter: return apply_filter(op, *ins[0]);
        case RelOp::Project:
        case RelOp::ScalarExpr: return apply_exprs(op, *ins[0]);
        case RelOp::GroupByAgg: return apply_group(op, *ins[0]);
        case RelOp::OrderByLimit: return apply_order(op, *ins[0]);
        case RelOp::Concat: return apply_concat(ins);
        case RelOp::EquiJoin: return apply_equijoin(op, ins);
        case RelOp::ThetaJoin: return apply_theta(op, ins);
        }
        throw ValidationError("bad operator");
    }

    LState node(const OpNode& n) {
        if (n.leaf()) return leaf(n.leaf_party);
        std::vector<LState> kid;
        for (const OpNodePtr& k : n.kids) kid.push_back(node(*k));
        std::vector<LState> ms;
        for (const OpNode::Member& m : n.members) {
            std::vector<const LState*> ins;
            for (int in : m.ins) ins.push_back(in >= 0 ? &ms[size_t(in)] : &kid[size_t(~in)]);
            ms.push_back(member(*m.op, ins));
        }
        return std::move(ms.back());
    }
};

} // namespace

// ---------------------------------------------------------------------------
// map_to_circuits
// ---------------------------------------------------------------------------

static LocalPlan clone_local(const LocalPlan& l) {
    LocalPlan c;
    c.party = l.party;
    if (l.ops) c.ops = l.ops->clone();
    c.col_order = l.col_order;
    c.lay = l.lay;
    c.sort = l.sort;
    c.declared = l.declared;
    c.cons = l.cons;
    return c;
}

static bool chain_node_ok(const OpNode& n) {
    for (size_t i = 0; i < n.members.size(); i++) {
        if (!is_chain_op(n.members[i].op->kind)) return false;
        const std::vector<int>& ins = n.members[i].ins;
        if (ins.size() != 1) return false;
        if (i == 0 ? ins[0] != ~0 : ins[0] != int(i) - 1) return false;
    }
    return true;
}

static void finish_root_state(Builder& b, Lower& lw, LState st,
                              const std::vector<const OpNode*>& chain, Plan& p,
                              const RelOp& root_op) {
    st.elems = prim::filter_lists(b, st.elems, st.lay, flag_clear());
    for (auto it = chain.rbegin(); it != chain.rend(); ++it)
        for (const OpNode::Member& m : (*it)->members) {
            std::vector<const LState*> ins = {&st};
            st = lw.member(*m.op, ins);
        }
    Bundle out = prim::join_list(st.elems);
    b.output(out);
    p.out_lay = st.lay;
    p.out_names.clear();
    p.out_pick.clear();
    for (size_t i = 0; i < root_op.cols.size(); i++) {
        p.out_names.push_back(root_op.cols[i].name);
        p.out_pick.push_back(st.map[i]);
    }
}

static cost::CNode cost_node(const Plan& p, int ui) {
    const Unit& u = p.units[size_t(ui)];
    cost::CNode c;
    c.c_ands = u.circ.and_count();
    c.in_bits = u.circ.input_bits();
    c.parties = u.parties;
    for (int k : u.kids) {
        c.kids.push_back(cost_node(p, k));
        c.kid_edge_bits.push_back(p.units[size_t(k)].circ.output_bits());
    }
    return c;
}

static void apply_cost(Plan& p, const cost::CostParams& link) {
    cost::CostParams lp = link;
    if (int(lp.l.size()) < p.m) lp = cost::CostParams::uniform(p.m, 1.0, 1.0);
    cost::CostReport rep = cost::cost_tree(cost_node(p, p.root), lp);
    p.predicted_cost = rep.total;
    p.cost_detail = rep.str();
}

Plan map_to_circuits(const SplitResult& s, const prim::Shape& shape, const PlannerConfig& cfg) {
    Plan p;
    p.m = int(s.locals.size());
    p.split_agg = s.split_agg;
    for (const LocalPlan& l : s.locals) p.locals.push_back(clone_local(l));

    // structure walk: unary chain down to the fan-in
    std::vector<const OpNode*> chain;
    const OpNode* cur = s.joint.root.get();
    while (!cur->leaf() && cur->kids.size() == 1 && chain_node_ok(*cur)) {
        chain.push_back(cur);
        cur = cur->kids[0].get();
    }
    const OpNode* fan = cur;
    const RelOp* root_op = chain.empty() ? fan->out_op() : chain.front()->out_op();

    bool dec = cfg.decompose && p.m >= 2 && !fan->leaf() && !fan->merged() &&
               (fan->out_op()->kind == RelOp::Concat || fan->out_op()->kind == RelOp::EquiJoin) &&
               int(fan->kids.size()) == p.m;
    if (dec)
        for (const OpNodePtr& k : fan->kids) dec = dec && k->leaf();
    if (dec) {
        PartySet seen;
        for (const OpNodePtr& k : fan->kids) seen.add(k->leaf_party);
        dec = seen.count() == p.m;
    }

    if (!dec) {
        // single joint unit over raw party lists; sorts happen in-circuit
        for (LocalPlan& l : p.locals) {
            l.sort.parts.clear();
            l.cons = ConstraintSet{};
        }
        Builder b("u0");
        Lower lw{b, s, false, {}};
        lw.clear_leaf_pads = true;
        LState st = lw.node(*s.joint.root);
        Bundle out = prim::join_list(st.elems);
        b.output(out);
        p.out_lay = st.lay;
        for (size_t i = 0; i < root_op->cols.size(); i++) {
            p.out_names.push_back(root_op->cols[i].name);
            p.out_pick.push_back(st.map[i]);
        }
        Unit u;
        u.id = "u0";
        u.parties = PartySet::range(p.m);
        u.circ = circ::prune_outputs(b.take(), {out});
        u.out_elems = st.elems.size();
        u.elem_w = st.lay.total();
        p.units.push_back(std::move(u));
        p.root = 0;
        p.decomposed = false;
        p.shape = "single-unit";
        apply_cost(p, cfg.link);
        return p;
    }

    const RelOp& fop = *fan->out_op();
    bool is_union = fop.kind == RelOp::Concat;
    std::vector<int> slot_party;
    for (const OpNodePtr& k : fan->kids) slot_party.push_back(k->leaf_party);

    // leaf wire layouts: keys first
    std::vector<int> ukeys; // union lane group keys (op-output space)
    if (is_union) {
        bool filters_only = true;
        for (auto it = chain.rbegin(); it != chain.rend() && ukeys.empty(); ++it)
            for (const OpNode::Member& mm : (*it)->members) {
                if (mm.op->kind == RelOp::GroupByAgg && filters_only && ukeys.empty()) {
                    ukeys = mm.op->group_keys;
                    break;
                }
                if (mm.op->kind != RelOp::Filter) filters_only = false;
            }
        if (ukeys.empty())
            for (size_t c = 0; c < fop.cols.size(); c++) ukeys.push_back(int(c));
    }

    size_t nmax = 1;
    for (size_t k = 0; k < slot_party.size(); k++) {
        LocalPlan& lp = p.locals[size_t(slot_party[k])];
        std::vector<uint32_t> order;
        if (is_union) {
            for (int c : ukeys) order.push_back(uint32_t(c));
        } else {
            order.push_back(uint32_t(fop.join_keys[k]));
        }
        for (uint32_t c = 0; c < lp.ops->cols.size(); c++)
            if (std::find(order.begin(), order.end(), c) == order.end()) order.push_back(c);
        lp.col_order = order;
        lp.lay.cols = {1};
        for (uint32_t c : order) lp.lay.cols.push_back(lp.ops->cols[c].width);
        lp.lay.key_cols = is_union ? uint32_t(1 + ukeys.size()) : 2;
        // wire order = the key slice read as one integer, so the last key
        // column is the primary sort and the pad flag the final tie break
        lp.sort.parts.clear();
        for (uint32_t c = lp.lay.key_cols; c-- > 0;) lp.sort.parts.push_back({c, false});
        uint32_t pad_bits = lp.lay.key_bits() - 1;
        if (pad_bits < 60 && lp.declared > (size_t(1) << pad_bits))
            throw ValidationError("P" + std::to_string(lp.party + 1) + ": declared size " +
                                  std::to_string(lp.declared) +
                                  " exceeds the padding space of a " + std::to_string(pad_bits) +
                                  "-bit key");
        nmax = std::max(nmax, lp.declared);
    }
    if (!is_union)
        for (int sp : slot_party) p.locals[size_t(sp)].declared = nmax;

    // final constraint sets in wire-layout space
    for (size_t k = 0; k < slot_party.size(); k++) {
        LocalPlan& lp = p.locals[size_t(slot_party[k])];
        const ConstraintSet& src = s.locals[size_t(slot_party[k])].cons;
        ConstraintSet cs;
        for (const ConstraintSet::ColRange& r : src.ranges) {
            auto it = std::find(lp.col_order.begin(), lp.col_order.end(), r.col);
            if (it != lp.col_order.end())
                cs.ranges.push_back(
                    {uint32_t(1 + (it - lp.col_order.begin())), r.lo, r.hi});
        }
        cs.sorted_prefix = lp.lay.key_cols;
        // intersection inputs are sets: per-party key uniqueness is an
        // obligation on the list (the strict leaf verifier enforces it)
        cs.distinct = is_union ? src.distinct : true;
        lp.cons = cs;
    }

    bool all_distinct = true;
    for (int sp : slot_party) all_distinct = all_distinct && s.locals[size_t(sp)].cons.distinct;

    prim::CircuitTree ct;
    const prim::Layout& l0 = p.locals[size_t(slot_party[0])].lay;
    if (is_union) {
        prim::MsortTreeSpec ms;
        for (int sp : slot_party) ms.sizes.push_back(p.locals[size_t(sp)].declared);
        ms.lay = l0;
        ms.key = p.locals[size_t(slot_party[0])].sort; // the key-slice integer order
        ms.with_ver = true;
        ms.leaf_kind = all_distinct ? prim::VerSpec::Kind::SortedStrict
                                    : prim::VerSpec::Kind::SortedNonstrict;
        ct = prim::build_msort_tree(ms, shape);
    } else {
        prim::MsiSpec is;
        is.m = slot_party.size();
        is.n = nmax;
        is.key_w = 1 + l0.cols[1];
        bool any_pay = false;
        for (int sp : slot_party) {
            const prim::Layout& ll = p.locals[size_t(sp)].lay;
            uint32_t pw = 0;
            for (size_t c = 2; c < ll.cols.size(); c++) pw += ll.cols[c];
            is.payload_w.push_back(pw);
            any_pay = any_pay || pw > 0;
        }
        if (!any_pay) is.payload_w.clear(); // bare key sets
        is.with_ver = true;
        ct = prim::build_msi_tree(is, shape);
    }

    // one executable unit per tree node, rebuilt with real owners, leaf range
    // verifiers, and (at the root) the remaining operator chain
    std::function<PartySet(int)> node_parties = [&](int ni) -> PartySet {
        const prim::CircuitTree::Node& nd = ct.nodes[size_t(ni)];
        PartySet ps;
        if (nd.left_leaf >= 0) ps.add(slot_party[size_t(nd.left_leaf)]);
        if (nd.right_leaf >= 0) ps.add(slot_party[size_t(nd.right_leaf)]);
        if (nd.left >= 0) ps = ps.unite(node_parties(nd.left));
        if (nd.right >= 0) ps = ps.unite(node_parties(nd.right));
        return ps;
    };

    std::function<int(int)> emit = [&](int ni) -> int {
        const prim::CircuitTree::Node& nd = ct.nodes[size_t(ni)];
        int ui = int(p.units.size());
        p.units.emplace_back();
        Builder b("u" + std::to_string(ui));
        Lower lw{b, s, false, {}};
        std::vector<Bundle> actuals;
        std::vector<std::pair<Bundle, int>> leaf_inputs; // bundle, slot
        for (const circ::InputGroup& g : nd.c.inputs) {
            if (g.owner.kind == Owner::Kind::Party) {
                int slot = g.owner.index;
                Bundle in = b.input(Owner::party(slot_party[size_t(slot)]),
                                    g.bundle.width(), g.bundle.elem_width, g.bundle.label);
                leaf_inputs.push_back({in, slot});
                actuals.push_back(std::move(in));
            } else {
                actuals.push_back(b.input(g.owner, g.bundle.width(), g.bundle.elem_width,
                                          g.bundle.label));
            }
        }
        std::vector<Bundle> outs = b.embed(nd.c, actuals, "");
        for (auto& [in, slot] : leaf_inputs) {
            const LocalPlan& lp = p.locals[size_t(slot_party[size_t(slot)])];
            int in_slot = slot == nd.left_leaf ? 0 : 1;
            for (const ConstraintSet::ColRange& r : lp.cons.ranges) {
                prim::VerSpec vs;
                vs.kind = prim::VerSpec::Kind::Range;
                vs.col = r.col;
                vs.lo = r.lo;
                vs.hi = r.hi;
                vs.skip_flagged = true;
                b.ver(prim::ver_lists(b, prim::split_list(in, lp.lay.total()), lp.lay, vs),
                      "in" + std::to_string(in_slot) + ":" + vs.str());
            }
        }
        Unit& u = p.units[size_t(ui)];
        if (ni == ct.root) {
            LState st;
            st.elems = prim::split_list(outs[0], outs[0].elem_width);
            st.lay = l0;
            if (!is_union) {
                // tagged intersection slots: flag ++ key ++ payload blocks
                st.lay.cols = {1, l0.cols[1]};
                st.lay.key_cols = 2;
                uint32_t pc = 2;
                for (size_t k = 0; k < slot_party.size(); k++) {
                    const LocalPlan& lp = p.locals[size_t(slot_party[k])];
                    for (size_t c = 2; c < lp.lay.cols.size(); c++) {
                        st.lay.cols.push_back(lp.lay.cols[c]);
                        pc++;
                    }
                }
                st.map.clear();
                uint32_t pay = 2;
                for (size_t k = 0; k < slot_party.size(); k++) {
                    const LocalPlan& lp = p.locals[size_t(slot_party[k])];
                    std::vector<uint32_t> of(lp.col_order.size());
                    for (size_t i = 0; i < lp.col_order.size(); i++)
                        of[lp.col_order[i]] = uint32_t(i);
                    for (size_t c = 0; c < lp.ops->cols.size(); c++)
                        st.map.push_back(int(c) == fop.join_keys[k] ? 1 : pay + of[c] - 1);
                    pay += uint32_t(lp.ops->cols.size()) - 1;
                }
            } else {
                const LocalPlan& lp = p.locals[size_t(slot_party[0])];
                st.map.resize(lp.col_order.size());
                for (size_t i = 0; i < lp.col_order.size(); i++)
                    st.map[lp.col_order[i]] = uint32_t(1 + i);
            }
            st.sorted = true;
            finish_root_state(b, lw, std::move(st), chain, p, *root_op);
        } else {
            for (Bundle& o : outs) b.output(o);
        }
        Circuit c = b.take();
        if (ni == ct.root) c = circ::prune_outputs(c, c.outputs);
        u.id = "u" + std::to_string(ui);
        u.parties = node_parties(ni);
        u.elem_w = ni == ct.root ? p.out_lay.total() : outs[0].elem_width;
        u.out_elems = u.elem_w ? c.outputs[0].wires.size() / u.elem_w : 0;
        u.circ = std::move(c);
        // recursing reallocates p.units, so re-index instead of holding `u`
        if (nd.left >= 0) {
            int lk = emit(nd.left);
            p.units[size_t(ui)].kids.push_back(lk);
        }
        if (nd.right >= 0) {
            int rk = emit(nd.right);
            p.units[size_t(ui)].kids.push_back(rk);
        }
        return ui;
    };
    p.root = emit(ct.root);
    p.decomposed = true;
    p.shape = shape.encode();
    apply_cost(p, cfg.link);
    return p;
}

std::vector<prim::Shape> enumerate_shapes(size_t m) { return prim::Shape::enumerate(m); }

Plan choose_plan(std::vector<Plan> candidates, const cost::CostParams& params) {
    (void)params; // candidates carry their predicted cost already
    if (candidates.empty()) throw ValidationError("no candidate plans");
    size_t best = 0;
    for (size_t i = 1; i < candidates.size(); i++) {
        if (candidates[i].predicted_cost < candidates[best].predicted_cost ||
            (candidates[i].predicted_cost == candidates[best].predicted_cost &&
             candidates[i].shape < candidates[best].shape))
            best = i;
    }
    return std::move(candidates[best]);
}

Plan plan_query(const RelOp& q, const sql::Dataset& data, const PlannerConfig& cfg) {
    sql::validate_bounds(q); // every input needs a declared row bound
    OpTree t = build_tree(q);
    DeclaredSizes ds = measure_bounds(q, data);
    SplitResult s = split_local(t, &ds, cfg.split);
    annotate_constraints(s);
    int m = int(s.locals.size());
    if (cfg.t >= 0 && (cfg.t < 1 || cfg.t > m - 1))
        throw ValidationError("corruption threshold must be in [1, m-1]");

    PlannerConfig c2 = cfg;
    if (int(c2.link.l.size()) < m) c2.link = cost::CostParams::uniform(m, 1.0, 1.0);

    std::vector<Plan> cands;
    if (cfg.decompose) {
        for (const prim::Shape& sh : enumerate_shapes(size_t(m))) {
            cands.push_back(map_to_circuits(s, sh, c2));
            if (!cands.back().decomposed) break; // shape is irrelevant then
        }
    }
    // the one-unit baseline over raw inputs is always a candidate; a chosen
    // decomposition is therefore never costlier than it
    SplitResult sm = split_local(t, &ds, false);
    annotate_constraints(sm);
    PlannerConfig cm = c2;
    cm.decompose = false;
    cands.push_back(map_to_circuits(sm, prim::Shape::balanced(std::max(size_t(m), size_t(1))),
                                    cm));
    return choose_plan(std::move(cands), c2.link);
}

// ---------------------------------------------------------------------------
// Plan text form
// ---------------------------------------------------------------------------

static std::string fmt_g(double v) {
    char buf[40];
    snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

std::string Plan::str() const {
    std::ostringstream o;
    o << "plan m=" << m << " shape=" << shape << " split=" << (split_agg ? "yes" : "no")
      << " decomposed=" << (decomposed ? "yes" : "no") << "\n";
    o << "locals:\n";
    for (const LocalPlan& l : locals) o << "  " << l.str();
    o << "units:\n";
    for (const Unit& u : units) {
        Circuit::Counts c = u.circ.counts();
        o << "  " << u.id << ": parties={" << u.parties.str() << "} ands=" << c.and_gates
          << " in_bits=" << c.input_bits << " out=" << u.out_elems << "x" << u.elem_w
          << " kids=[";
        for (size_t i = 0; i < u.kids.size(); i++)
            o << (i ? "," : "") << units[size_t(u.kids[i])].id;
        o << "]\n";
        for (const std::string& vl : u.circ.ver_labels) o << "      ver " << vl << "\n";
    }
    o << "out:";
    for (size_t i = 0; i < out_names.size(); i++)
        o << (i ? ", " : " ") << out_names[i] << "(w" << out_lay.cols[out_pick[i]] << ")";
    o << "\ncost: " << fmt_g(predicted_cost) << "\n";
    return o.str();
}

uint64_t Plan::hash() const { return fnv1a(str()); }

// ---------------------------------------------------------------------------
// Local encoding and the reference execution.
// ---------------------------------------------------------------------------

circ::Bits encode_local(const LocalPlan& lp, const sql::Dataset& data) {
    sql::Rows rows = sql::eval(*lp.ops, data);
    if (rows.size() > lp.declared)
        throw ValidationError("P" + std::to_string(lp.party + 1) + ": " +
                              std::to_string(rows.size()) + " rows exceed the declared bound " +
                              std::to_string(lp.declared));
    uint32_t ew = lp.lay.total();
    uint32_t key_bits = lp.lay.key_bits();     // flag included
    size_t nk = size_t(lp.lay.key_cols) - 1;   // key columns after the flag

    // serialize every declared element, real rows first
    std::vector<circ::Bits> elems;
    for (const std::vector<Value>& r : rows) {
        circ::Bits e(ew, 0); // flag bit 0 stays clear
        size_t off = 1;
        // all-zero is reserved for absent slots: the key columns when the
        // joint phase keys on a prefix, the whole row otherwise
        bool zero_key = true;
        for (size_t i = 0; i < lp.col_order.size(); i++) {
            const Value& v = r[lp.col_order[i]];
            uint32_t w = lp.lay.cols[i + 1];
            if (v.bit_width() > w)
                throw ValidationError("value wider than its column");
            std::vector<uint8_t> vb = v.to_bits(w);
            std::copy(vb.begin(), vb.end(), e.begin() + long(off));
            off += w;
            if ((nk == 0 || i < nk) && !v.is_zero()) zero_key = false;
        }
        if (zero_key)
            throw ValidationError("P" + std::to_string(lp.party + 1) +
                                  (nk ? ": a row's key columns are all zero"
                                      : ": a row is entirely zero") +
                                  " (all-zero is reserved for absent rows)");
        elems.push_back(std::move(e));
    }
    // padding: flag set, and when there is key space, a fill counter across
    // the key bits so pads stay distinct under the strict verifiers
    size_t npads = lp.declared - rows.size();
    if (key_bits > 1 && key_bits - 1 < 60 && npads > (size_t(1) << (key_bits - 1)))
        throw ValidationError("padding space exhausted for P" + std::to_string(lp.party + 1));
    for (size_t k = 0; k < npads; k++) {
        circ::Bits e(ew, 0);
        e[0] = 1;
        for (uint32_t j = 0; j + 1 < key_bits && j < 60; j++) e[1 + j] = uint8_t((k >> j) & 1);
        elems.push_back(std::move(e));
    }
    // sort by the key slice read as one integer (the order every sorted
    // verifier and merge checks), whole element as a deterministic tie break
    auto slice_val = [](const circ::Bits& e, uint32_t lo, uint32_t n) {
        return Value::from_bits(e.data() + lo, n);
    };
    std::sort(elems.begin(), elems.end(), [&](const circ::Bits& a, const circ::Bits& b) {
        int c = Value::cmp(slice_val(a, 0, key_bits), slice_val(b, 0, key_bits));
        if (c) return c < 0;
        return Value::cmp(slice_val(a, 0, ew), slice_val(b, 0, ew)) < 0;
    });
    if (lp.cons.distinct)
        for (size_t i = 1; i < elems.size(); i++)
            if (slice_val(elems[i - 1], 0, key_bits) == slice_val(elems[i], 0, key_bits))
                throw ValidationError("P" + std::to_string(lp.party + 1) +
                                      ": duplicate key in a declared-distinct input list");
    circ::Bits bits;
    bits.reserve(lp.declared * ew);
    for (const circ::Bits& e : elems) bits.insert(bits.end(), e.begin(), e.end());
    return bits;
}

std::vector<circ::Bits> encode_locals(const Plan& p, const sql::Dataset& data) {
    std::vector<circ::Bits> out;
    for (const LocalPlan& l : p.locals) out.push_back(encode_local(l, data));
    return out;
}

static int label_edge(const std::string& label) {
    if (label.size() >= 3 && label[0] == 'i' && label[1] == 'n' && isdigit(label[2]))
        return label[2] - '0';
    return -1;
}

sql::Rows eval_plan(const Plan& p, const std::vector<circ::Bits>& party_inputs) {
    std::function<circ::Bits(int)> run = [&](int ui) -> circ::Bits {
        const Unit& u = p.units[size_t(ui)];
        std::vector<circ::Bits> kid_out;
        for (int k : u.kids) kid_out.push_back(run(k));
        // kids sit in solder-slot order, but a unit may have only slot 1
        // soldered (its slot 0 being a direct party input), so map by rank
        std::vector<int> solder_slots;
        for (const circ::InputGroup& g : u.circ.inputs)
            if (g.owner.kind == Owner::Kind::Solder) solder_slots.push_back(g.owner.index);
        circ::Evaluator ev(u.circ);
        for (size_t g = 0; g < u.circ.inputs.size(); g++) {
            const Owner& ow = u.circ.inputs[g].owner;
            if (ow.kind == Owner::Kind::Party) {
                if (ow.index >= int(party_inputs.size()))
                    throw ValidationError("missing input list for P" +
                                          std::to_string(ow.index + 1));
                ev.set_input(g, party_inputs[size_t(ow.index)]);
            } else {
                size_t rank = size_t(std::find(solder_slots.begin(), solder_slots.end(),
                                               ow.index) -
                                     solder_slots.begin());
                ev.set_input(g, kid_out[rank]);
            }
        }
        ev.run();
        for (size_t i = 0; i < u.circ.ver_wires.size(); i++)
            if (!ev.bit(u.circ.ver_wires[i])) {
                AbortInfo ai;
                ai.reason = "ver-failed";
                ai.unit = ui;
                ai.edge = label_edge(u.circ.ver_labels[i]);
                ai.detected_by = u.parties.lowest();
                ai.detail = u.circ.ver_labels[i];
                throw AbortError(ai);
            }
        return ev.get(u.circ.outputs[0]);
    };
    circ::Bits out = run(p.root);
    sql::Rows rows;
    uint32_t ew = p.out_lay.total();
    for (size_t i = 0; i + ew <= out.size(); i += ew) {
        if (out[i]) continue; // padding
        bool zero = true;
        for (uint32_t j = 0; j < ew && zero; j++) zero = !out[i + j];
        if (zero) continue;
        std::vector<Value> row;
        for (uint32_t pick : p.out_pick) {
            uint32_t off = p.out_lay.offset(pick);
            row.push_back(Value::from_bits(out.data() + i + off, p.out_lay.cols[pick]));
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

} // namespace quilt::plan
