#include "quilt/sql.hpp"

#include <algorithm>
#include <map>
#include <sstream>

namespace quilt::sql {

// --- AST plumbing -----------------------------------------------------------

ExprPtr Expr::column(int idx) {
    auto e = std::make_unique<Expr>();
    e->kind = Col;
    e->col = idx;
    return e;
}

ExprPtr Expr::constant(Value v) {
    auto e = std::make_unique<Expr>();
    e->kind = Lit;
    e->lit = std::move(v);
    return e;
}

ExprPtr Expr::make(Kind k, std::vector<ExprPtr> args) {
    auto e = std::make_unique<Expr>();
    e->kind = k;
    e->args = std::move(args);
    return e;
}

ExprPtr Expr::clone() const {
    auto e = std::make_unique<Expr>();
    e->kind = kind;
    e->col = col;
    e->lit = lit;
    for (const auto& a : args) e->args.push_back(a->clone());
    return e;
}

PredPtr Pred::cmp(CmpOp op, ExprPtr l, ExprPtr r) {
    auto p = std::make_unique<Pred>();
    p->kind = Cmp;
    p->op = op;
    p->lhs = std::move(l);
    p->rhs = std::move(r);
    return p;
}

PredPtr Pred::logic(Kind k, PredPtr a, PredPtr b) {
    auto p = std::make_unique<Pred>();
    p->kind = k;
    p->a = std::move(a);
    p->b = std::move(b);
    return p;
}

PredPtr Pred::clone() const {
    auto p = std::make_unique<Pred>();
    p->kind = kind;
    p->op = op;
    if (lhs) p->lhs = lhs->clone();
    if (rhs) p->rhs = rhs->clone();
    if (a) p->a = a->clone();
    if (b) p->b = b->clone();
    return p;
}

OutCol OutCol::of(const ColumnDef& c, const std::string& qual_prefix) {
    OutCol o;
    o.name = c.name;
    o.qual = qual_prefix.empty() ? c.name : qual_prefix + "." + c.name;
    o.width = c.width;
    o.has_range = c.has_range;
    o.lo = c.lo;
    o.hi = c.hi;
    o.enums = c.enums;
    return o;
}

PartySet RelOp::owners() const {
    if (kind == Scan) return PartySet::of({table->owner});
    PartySet s;
    for (const auto& k : kids) s = s.unite(k->owners());
    return s;
}

const std::vector<OutCol>& RelOp::in_cols() const {
    static const std::vector<OutCol> none;
    return kids.empty() ? none : kids[0]->cols;
}

RelOpPtr RelOp::clone() const {
    auto n = std::make_unique<RelOp>();
    n->kind = kind;
    n->cols = cols;
    n->table = table;
    n->alias = alias;
    if (pred) n->pred = pred->clone();
    for (const auto& e : exprs) n->exprs.push_back(e->clone());
    n->join_keys = join_keys;
    n->group_keys = group_keys;
    n->aggs = aggs;
    if (having) n->having = having->clone();
    n->order_col = order_col;
    n->desc = desc;
    n->limit = limit;
    for (const auto& k : kids) n->kids.push_back(k->clone());
    return n;
}

// --- widths and ranges ------------------------------------------------------

namespace {

uint32_t width_for(const Value& v) { return std::max<uint32_t>(2, v.bit_width()); }

Value mask_width(const Value& v, uint32_t w) {
    if (v.bit_width() <= w) return v;
    Value out;
    for (uint32_t i = 0; i < w; i++)
        if (v.bit(i)) out.set_bit(i, true);
    return out;
}

} // namespace

OutCol expr_meta(const Expr& e, const std::vector<OutCol>& in) {
    switch (e.kind) {
    case Expr::Col:
        return in.at(size_t(e.col));
    case Expr::Lit: {
        OutCol o;
        o.width = width_for(e.lit);
        o.has_range = true;
        o.lo = o.hi = e.lit;
        return o;
    }
    case Expr::Add: {
        OutCol a = expr_meta(*e.args[0], in), b = expr_meta(*e.args[1], in);
        OutCol o;
        if (a.has_range && b.has_range) {
            o.has_range = true;
            o.lo = Value::add(a.lo, b.lo);
            o.hi = Value::add(a.hi, b.hi);
            o.width = width_for(o.hi);
        } else {
            o.width = std::max(a.width, b.width) + 1;
        }
        if (o.width > 64) throw UnsupportedError("arithmetic on values wider than 64 bits");
        return o;
    }
    case Expr::Sub: {
        OutCol a = expr_meta(*e.args[0], in), b = expr_meta(*e.args[1], in);
        OutCol o;
        o.width = std::max(a.width, b.width); // wraps mod 2^w, like the circuits
        if (o.width > 64) throw UnsupportedError("arithmetic on values wider than 64 bits");
        return o;
    }
    case Expr::Greatest:
    case Expr::Least: {
        OutCol o;
        bool all_ranged = true;
        for (const auto& arg : e.args) {
            OutCol m = expr_meta(*arg, in);
            o.width = std::max(o.width, m.width);
            if (!m.has_range) {
                all_ranged = false;
                continue;
            }
            if (!o.has_range) {
                o.has_range = true;
                o.lo = m.lo;
                o.hi = m.hi;
            } else if (e.kind == Expr::Greatest) {
                o.lo = std::max(o.lo, m.lo);
                o.hi = std::max(o.hi, m.hi);
            } else {
                o.lo = std::min(o.lo, m.lo);
                o.hi = std::min(o.hi, m.hi);
            }
        }
        o.has_range = o.has_range && all_ranged;
        return o;
    }
    }
    throw Error("unreachable expr kind");
}

// --- plaintext reference evaluation -----------------------------------------

const Table* Dataset::find(const std::string& name, int owner) const {
    for (const auto& t : tables)
        if (t.def->name == name && t.def->owner == owner) return &t;
    return nullptr;
}

void Dataset::add(Table t) {
    t.validate();
    tables.push_back(std::move(t));
}

Value eval_expr(const Expr& e, const std::vector<Value>& row, const std::vector<OutCol>& in) {
    switch (e.kind) {
    case Expr::Col:
        return row.at(size_t(e.col));
    case Expr::Lit:
        return e.lit;
    case Expr::Add: {
        uint32_t w = expr_meta(e, in).width;
        return mask_width(Value::add(eval_expr(*e.args[0], row, in), eval_expr(*e.args[1], row, in)),
                          w);
    }
    case Expr::Sub: {
        uint32_t w = expr_meta(e, in).width;
        Value a = mask_width(eval_expr(*e.args[0], row, in), w);
        Value b = mask_width(eval_expr(*e.args[1], row, in), w);
        if (!(b < a) && !(a == b)) { // a < b: wrap
            Value top;
            top.set_bit(w, true);
            return mask_width(Value::sub(Value::add(a, top), b), w);
        }
        return Value::sub(a, b);
    }
    case Expr::Greatest:
    case Expr::Least: {
        Value best = eval_expr(*e.args[0], row, in);
        for (size_t i = 1; i < e.args.size(); i++) {
            Value v = eval_expr(*e.args[i], row, in);
            if (e.kind == Expr::Greatest ? best < v : v < best) best = v;
        }
        return best;
    }
    }
    throw Error("unreachable expr kind");
}

bool eval_pred(const Pred& p, const std::vector<Value>& row, const std::vector<OutCol>& in) {
    switch (p.kind) {
    case Pred::Cmp: {
        int c = Value::cmp(eval_expr(*p.lhs, row, in), eval_expr(*p.rhs, row, in));
        switch (p.op) {
        case CmpOp::Eq: return c == 0;
        case CmpOp::Ne: return c != 0;
        case CmpOp::Lt: return c < 0;
        case CmpOp::Le: return c <= 0;
        case CmpOp::Gt: return c > 0;
        case CmpOp::Ge: return c >= 0;
        }
        break;
    }
    case Pred::And: return eval_pred(*p.a, row, in) && eval_pred(*p.b, row, in);
    case Pred::Or: return eval_pred(*p.a, row, in) || eval_pred(*p.b, row, in);
    case Pred::Not: return !eval_pred(*p.a, row, in);
    }
    throw Error("unreachable pred kind");
}

namespace {

Rows eval_group(const RelOp& op, Rows in_rows) {
    struct Acc {
        std::vector<Value> vals;
        std::vector<bool> seen;
    };
    std::map<std::vector<Value>, Acc> groups; // ascending key order, deterministic
    for (const auto& row : in_rows) {
        std::vector<Value> key;
        for (int k : op.group_keys) key.push_back(row[size_t(k)]);
        Acc& acc = groups[key];
        if (acc.vals.empty()) acc.vals.resize(op.aggs.size()), acc.seen.resize(op.aggs.size());
        for (size_t a = 0; a < op.aggs.size(); a++) {
            const AggSpec& ag = op.aggs[a];
            Value v = ag.col >= 0 ? row[size_t(ag.col)] : Value();
            switch (ag.kind) {
            case AggKind::Count: acc.vals[a] = Value::add(acc.vals[a], Value::of(1)); break;
            case AggKind::Sum: acc.vals[a] = Value::add(acc.vals[a], v); break;
            case AggKind::Min:
                if (!acc.seen[a] || v < acc.vals[a]) acc.vals[a] = v;
                break;
            case AggKind::Max:
                if (!acc.seen[a] || acc.vals[a] < v) acc.vals[a] = v;
                break;
            }
            acc.seen[a] = true;
        }
    }
    Rows out;
    for (auto& [key, acc] : groups) {
        std::vector<Value> row = key;
        for (size_t a = 0; a < op.aggs.size(); a++) {
            // aggregates wrap at their output width, matching the circuits
            uint32_t w = op.cols[op.group_keys.size() + a].width;
            row.push_back(mask_width(acc.vals[a], w));
        }
        if (op.having && !eval_pred(*op.having, row, op.cols)) continue;
        out.push_back(std::move(row));
    }
    return out;
}

Rows eval_order(const RelOp& op, Rows rows) {
    size_t oc = size_t(op.order_col);
    bool desc = op.desc;
    // total order: the sort column first, then the remaining columns ascending
    // as a tie break, so LIMIT picks a unique row set (the emitted circuits
    // sort by the same compound key)
    std::sort(rows.begin(), rows.end(), [&](const auto& x, const auto& y) {
        int c = Value::cmp(x[oc], y[oc]);
        if (c) return desc ? c > 0 : c < 0;
        for (size_t i = 0; i < x.size(); i++) {
            if (i == oc) continue;
            c = Value::cmp(x[i], y[i]);
            if (c) return c < 0;
        }
        return false;
    });
    if (rows.size() > op.limit) rows.resize(op.limit);
    return rows;
}

Rows eval_equijoin(const RelOp& op, const Dataset& data) {
    std::vector<Rows> kid_rows;
    for (const auto& k : op.kids) kid_rows.push_back(eval(*k, data));
    // bucket every kid by its key column, then emit the cross product of the
    // buckets for each key present everywhere
    std::vector<std::map<Value, std::vector<size_t>>> buckets(op.kids.size());
    for (size_t k = 0; k < op.kids.size(); k++)
        for (size_t r = 0; r < kid_rows[k].size(); r++)
            buckets[k][kid_rows[k][r][size_t(op.join_keys[k])]].push_back(r);
    Rows out;
    for (const auto& [key, rows0] : buckets[0]) {
        bool everywhere = true;
        for (size_t k = 1; k < buckets.size() && everywhere; k++)
            everywhere = buckets[k].count(key) > 0;
        if (!everywhere) continue;
        std::vector<size_t> pick(op.kids.size(), 0);
        while (true) {
            std::vector<Value> row;
            for (size_t k = 0; k < op.kids.size(); k++) {
                const auto& r = kid_rows[k][buckets[k][key][pick[k]]];
                row.insert(row.end(), r.begin(), r.end());
            }
            out.push_back(std::move(row));
            size_t k = op.kids.size();
            while (k > 0) {
                k--;
                if (++pick[k] < buckets[k][key].size()) break;
                pick[k] = 0;
                if (k == 0) goto next_key;
            }
        }
    next_key:;
    }
    return out;
}

} // namespace

Rows eval(const RelOp& op, const Dataset& data) {
    switch (op.kind) {
    case RelOp::Scan: {
        const Table* t = data.find(op.table->name, op.table->owner);
        if (!t)
            throw ValidationError("no data supplied for table " + op.table->name + "@" +
                                  std::to_string(op.table->owner + 1));
        return t->rows;
    }
    case RelOp::Concat: {
        Rows out;
        for (const auto& k : op.kids) {
            Rows r = eval(*k, data);
            out.insert(out.end(), std::make_move_iterator(r.begin()),
                       std::make_move_iterator(r.end()));
        }
        return out;
    }
    case RelOp::Filter: {
        Rows in_rows = eval(*op.kids[0], data), out;
        for (auto& r : in_rows)
            if (eval_pred(*op.pred, r, op.in_cols())) out.push_back(std::move(r));
        return out;
    }
    case RelOp::Project:
    case RelOp::ScalarExpr: {
        Rows in_rows = eval(*op.kids[0], data), out;
        for (const auto& r : in_rows) {
            std::vector<Value> row;
            for (size_t i = 0; i < op.exprs.size(); i++) {
                Value v = eval_expr(*op.exprs[i], r, op.in_cols());
                row.push_back(mask_width(v, op.cols[i].width));
            }
            out.push_back(std::move(row));
        }
        return out;
    }
    case RelOp::EquiJoin:
        return eval_equijoin(op, data);
    case RelOp::ThetaJoin: {
        Rows l = eval(*op.kids[0], data), r = eval(*op.kids[1], data), out;
        for (const auto& a : l)
            for (const auto& b : r) {
                std::vector<Value> row = a;
                row.insert(row.end(), b.begin(), b.end());
                if (eval_pred(*op.pred, row, op.cols)) out.push_back(std::move(row));
            }
        return out;
    }
    case RelOp::GroupByAgg:
        return eval_group(op, eval(*op.kids[0], data));
    case RelOp::OrderByLimit:
        return eval_order(op, eval(*op.kids[0], data));
    }
    throw Error("unreachable relop kind");
}

// --- bounds -----------------------------------------------------------------

static void collect_bounds(const RelOp& op, BoundReport& rep) {
    if (op.kind == RelOp::Scan) {
        if (op.table->bound == 0)
            throw ValidationError("table " + op.table->name + "@" +
                                  std::to_string(op.table->owner + 1) +
                                  " has no declared row bound");
        rep.leaves.push_back({op.table->name, op.table->owner, op.table->bound});
        rep.total += op.table->bound;
        return;
    }
    for (const auto& k : op.kids) collect_bounds(*k, rep);
}

BoundReport validate_bounds(const RelOp& op) {
    BoundReport rep;
    collect_bounds(op, rep);
    return rep;
}

std::string BoundReport::str() const {
    std::ostringstream os;
    for (const auto& l : leaves)
        os << l.table << "@" << l.owner + 1 << " bound " << l.bound << "\n";
    os << "total " << total << "\n";
    return os.str();
}

// --- structure dump ---------------------------------------------------------

std::string Expr::str(const std::vector<OutCol>& in) const {
    switch (kind) {
    case Col: return in.at(size_t(col)).qual;
    case Lit: return lit.to_decimal();
    case Add: return args[0]->str(in) + " + " + args[1]->str(in);
    case Sub: return args[0]->str(in) + " - " + args[1]->str(in);
    case Greatest:
    case Least: {
        std::string s = kind == Greatest ? "GREATEST(" : "LEAST(";
        for (size_t i = 0; i < args.size(); i++) s += (i ? ", " : "") + args[i]->str(in);
        return s + ")";
    }
    }
    return "?";
}

std::string Pred::str(const std::vector<OutCol>& in) const {
    switch (kind) {
    case Cmp: {
        static const char* ops[] = {"=", "!=", "<", "<=", ">", ">="};
        return lhs->str(in) + " " + ops[int(op)] + " " + rhs->str(in);
    }
    case And: {
        auto side = [&](const Pred& p) {
            std::string s = p.str(in);
            return p.kind == Or ? "(" + s + ")" : s;
        };
        return side(*a) + " AND " + side(*b);
    }
    case Or: return a->str(in) + " OR " + b->str(in);
    case Not: return "NOT (" + a->str(in) + ")";
    }
    return "?";
}

std::string AggSpec::str(const std::vector<OutCol>& in) const {
    static const char* names[] = {"COUNT", "SUM", "MIN", "MAX"};
    std::string s = names[int(kind)];
    s += col < 0 ? "(*)" : "(" + in.at(size_t(col)).qual + ")";
    return s;
}

std::string RelOp::str(int indent) const {
    std::string pad(size_t(indent) * 2, ' ');
    std::ostringstream os;
    os << pad;
    switch (kind) {
    case Scan:
        os << "scan " << table->name << "@" << table->owner + 1;
        if (!alias.empty()) os << " as " << alias;
        break;
    case Concat: os << "concat"; break;
    case Filter: os << "filter " << pred->str(in_cols()); break;
    case Project: {
        os << "project [";
        for (size_t i = 0; i < exprs.size(); i++)
            os << (i ? ", " : "") << cols[i].name;
        os << "]";
        break;
    }
    case ScalarExpr: {
        os << "scalarexpr [";
        for (size_t i = 0; i < exprs.size(); i++)
            os << (i ? ", " : "") << cols[i].name << " = " << exprs[i]->str(in_cols());
        os << "]";
        break;
    }
    case EquiJoin: {
        os << "equijoin on [";
        for (size_t k = 0; k < kids.size(); k++)
            os << (k ? ", " : "") << kids[k]->cols.at(size_t(join_keys[k])).qual;
        os << "]";
        break;
    }
    case ThetaJoin: os << "thetajoin " << pred->str(cols); break;
    case GroupByAgg: {
        os << "groupbyagg keys=[";
        for (size_t i = 0; i < group_keys.size(); i++)
            os << (i ? ", " : "") << in_cols().at(size_t(group_keys[i])).qual;
        os << "] aggs=[";
        for (size_t i = 0; i < aggs.size(); i++) {
            os << (i ? ", " : "") << aggs[i].str(in_cols()) << " as " << aggs[i].name;
            if (aggs[i].hidden) os << " (hidden)";
        }
        os << "]";
        if (having) os << " having " << having->str(cols);
        break;
    }
    case OrderByLimit:
        os << "orderbylimit " << cols.at(size_t(order_col)).name << (desc ? " desc" : " asc")
           << " limit " << limit;
        break;
    }
    os << "\n";
    for (const auto& k : kids) os << k->str(indent + 1);
    return os.str();
}

} // namespace quilt::sql
