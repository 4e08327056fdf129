#include "quilt/sql.hpp"

#include <algorithm>
#include <cctype>
#include <sstream>

namespace quilt::sql {

// --- lexer ------------------------------------------------------------------

namespace {

struct Tok {
    enum K { Ident, Int, Str, Sym, End } k = End;
    std::string s;
    int line = 0, col = 0;

    std::string where() const { return std::to_string(line) + ":" + std::to_string(col); }
};

std::string upper(const std::string& s) {
    std::string u = s;
    for (char& c : u) c = char(toupper(uint8_t(c)));
    return u;
}

std::vector<Tok> lex(const std::string& text) {
    std::vector<Tok> out;
    int line = 1, col = 1;
    size_t i = 0;
    auto push = [&](Tok::K k, std::string s, int l, int c) { out.push_back({k, std::move(s), l, c}); };
    while (i < text.size()) {
        char c = text[i];
        int tl = line, tc = col;
        auto advance = [&](size_t n) {
            for (size_t j = 0; j < n; j++) {
                if (text[i + j] == '\n') line++, col = 1;
                else col++;
            }
            i += n;
        };
        if (c == '-' && i + 1 < text.size() && text[i + 1] == '-') { // comment to end of line
            while (i < text.size() && text[i] != '\n') advance(1);
            continue;
        }
        if (isspace(uint8_t(c))) {
            advance(1);
            continue;
        }
        if (isalpha(uint8_t(c)) || c == '_') {
            size_t j = i;
            while (j < text.size() && (isalnum(uint8_t(text[j])) || text[j] == '_')) j++;
            push(Tok::Ident, text.substr(i, j - i), tl, tc);
            advance(j - i);
            continue;
        }
        if (isdigit(uint8_t(c))) {
            size_t j = i;
            while (j < text.size() && isdigit(uint8_t(text[j]))) j++;
            if (j < text.size() && text[j] == '.')
                throw UnsupportedError("query " + std::to_string(tl) + ":" + std::to_string(tc) +
                                       ": floating point literals are not supported");
            push(Tok::Int, text.substr(i, j - i), tl, tc);
            advance(j - i);
            continue;
        }
        if (c == '\'' || c == '"') {
            size_t j = i + 1;
            while (j < text.size() && text[j] != c) j++;
            if (j == text.size())
                throw ParseError("query " + std::to_string(tl) + ":" + std::to_string(tc) +
                                 ": unterminated string literal");
            push(Tok::Str, text.substr(i + 1, j - i - 1), tl, tc);
            advance(j - i + 1);
            continue;
        }
        // two-character operators first
        if (i + 1 < text.size()) {
            std::string two = text.substr(i, 2);
            if (two == "!=" || two == "<>" || two == "<=" || two == ">=") {
                push(Tok::Sym, two == "<>" ? "!=" : two, tl, tc);
                advance(2);
                continue;
            }
        }
        if (std::string(",()=<>+-.;@*").find(c) != std::string::npos) {
            push(Tok::Sym, std::string(1, c), tl, tc);
            advance(1);
            continue;
        }
        throw ParseError("query " + std::to_string(tl) + ":" + std::to_string(tc) +
                         ": unexpected character '" + std::string(1, c) + "'");
    }
    out.push_back({Tok::End, "", line, col});
    return out;
}

// --- parser -----------------------------------------------------------------

// Aggregates being collected for the GroupByAgg under construction.
struct GroupCtx {
    const std::vector<OutCol>* in = nullptr; // group input schema
    std::vector<int>* keys = nullptr;
    std::vector<AggSpec> aggs;
    std::vector<OutCol> out; // keys first, then aggs (grows as aggs appear)

    size_t nkeys() const { return keys->size(); }

    static uint32_t agg_width(AggKind k, const OutCol* arg) {
        switch (k) {
        case AggKind::Count: return 32;
        case AggKind::Sum: return std::min<uint32_t>(64, arg->width + 16);
        default: return arg->width;
        }
    }

    // Returns the output column index of this aggregate, reusing an existing
    // spec with the same kind and argument.
    int get_or_add(AggKind k, int col, const std::string& as_name, bool hidden) {
        for (size_t i = 0; i < aggs.size(); i++)
            if (aggs[i].kind == k && aggs[i].col == col) {
                if (!as_name.empty() && aggs[i].hidden) {
                    aggs[i].name = as_name;
                    aggs[i].hidden = false;
                    out[nkeys() + i].name = out[nkeys() + i].qual = as_name;
                }
                return int(nkeys() + i);
            }
        AggSpec a;
        a.kind = k;
        a.col = col;
        a.hidden = hidden;
        static const char* base[] = {"cnt", "sum", "min", "max"};
        a.name = !as_name.empty() ? as_name
                 : col < 0        ? std::string(base[int(k)])
                                  : std::string(base[int(k)]) + "_" + (*in)[size_t(col)].name;
        OutCol o;
        o.name = o.qual = a.name;
        const OutCol* arg = col >= 0 ? &(*in)[size_t(col)] : nullptr;
        o.width = agg_width(k, arg);
        if ((k == AggKind::Min || k == AggKind::Max) && arg && arg->has_range) {
            o.has_range = true;
            o.lo = arg->lo;
            o.hi = arg->hi;
        }
        aggs.push_back(std::move(a));
        out.push_back(std::move(o));
        return int(out.size()) - 1;
    }
};

struct Parser {
    const Schema& schema;
    std::vector<Tok> toks;
    size_t at = 0;

    explicit Parser(const std::string& text, const Schema& s) : schema(s), toks(lex(text)) {}

    [[noreturn]] void fail(const std::string& msg) const {
        throw ParseError("query " + toks[at].where() + ": " + msg);
    }
    [[noreturn]] void unsupported(const std::string& msg) const {
        throw UnsupportedError("query " + toks[at].where() + ": " + msg);
    }

    const Tok& peek() const { return toks[at]; }
    bool is_sym(const std::string& s) const { return peek().k == Tok::Sym && peek().s == s; }
    bool is_kw(const std::string& k) const { return peek().k == Tok::Ident && upper(peek().s) == k; }
    bool accept_sym(const std::string& s) {
        if (!is_sym(s)) return false;
        at++;
        return true;
    }
    bool accept_kw(const std::string& k) {
        if (!is_kw(k)) return false;
        at++;
        return true;
    }
    void expect_sym(const std::string& s) {
        if (!accept_sym(s)) fail("expected '" + s + "'");
    }
    void expect_kw(const std::string& k) {
        if (!accept_kw(k)) fail("expected " + k);
    }
    std::string expect_ident(const std::string& what) {
        if (peek().k != Tok::Ident) fail("expected " + what);
        return toks[at++].s;
    }
    uint64_t expect_int(const std::string& what) {
        if (peek().k != Tok::Int) fail("expected " + what);
        return std::stoull(toks[at++].s);
    }

    void reject_unsupported_kw() const {
        static const char* named[] = {"DISTINCT", "SUBSTRING", "SUBSTR", "REGEXP", "LIKE",
                                      "NULL",     "LEFT",      "RIGHT",  "OUTER",  "FULL",
                                      "CROSS",    "CASE",      "BETWEEN", "IN",    "EXISTS"};
        for (const char* k : named)
            if (is_kw(k)) {
                std::string u = upper(peek().s);
                if (u == "REGEXP" || u == "LIKE")
                    throw UnsupportedError("query " + peek().where() +
                                           ": regular expressions are not supported");
                if (u == "SUBSTRING" || u == "SUBSTR")
                    throw UnsupportedError("query " + peek().where() +
                                           ": substring is not supported");
                throw UnsupportedError("query " + peek().where() + ": " + u + " is not supported");
            }
    }

    // Skip to the next top-level clause keyword, returning [start, end).
    std::pair<size_t, size_t> skip_clause() {
        size_t start = at;
        int depth = 0;
        while (at < toks.size()) {
            const Tok& t = toks[at];
            if (t.k == Tok::End) break;
            if (t.k == Tok::Sym && t.s == "(") depth++;
            if (t.k == Tok::Sym && t.s == ")") depth--;
            if (t.k == Tok::Sym && t.s == ";") break;
            if (depth == 0 && t.k == Tok::Ident) {
                std::string u = upper(t.s);
                if (u == "FROM" || u == "WHERE" || u == "GROUP" || u == "HAVING" || u == "ORDER" ||
                    u == "LIMIT")
                    break;
            }
            at++;
        }
        return {start, at};
    }

    // --- column references ---

    std::pair<std::string, std::string> parse_colref() {
        std::string a = expect_ident("column name");
        if (accept_sym(".")) return {a, expect_ident("column name after '.'")};
        return {"", a};
    }

    int resolve(const std::pair<std::string, std::string>& ref,
                const std::vector<OutCol>& cols) const {
        std::vector<int> hits;
        if (ref.first.empty()) {
            for (size_t i = 0; i < cols.size(); i++)
                if (cols[i].name == ref.second) hits.push_back(int(i));
        } else {
            std::string q = ref.first + "." + ref.second;
            for (size_t i = 0; i < cols.size(); i++)
                if (cols[i].qual == q) hits.push_back(int(i));
        }
        std::string shown = ref.first.empty() ? ref.second : ref.first + "." + ref.second;
        if (hits.empty()) throw ParseError("query " + peek().where() + ": unknown column '" +
                                           shown + "'");
        if (hits.size() > 1) {
            std::string alts;
            for (int h : hits) alts += (alts.empty() ? "" : ", ") + cols[size_t(h)].qual;
            throw ParseError("query " + peek().where() + ": ambiguous column '" + shown +
                             "' (matches " + alts + ")");
        }
        return hits[0];
    }

    // --- expressions ---

    bool peek_agg() const {
        if (peek().k != Tok::Ident) return false;
        std::string u = upper(peek().s);
        return u == "COUNT" || u == "SUM" || u == "MIN" || u == "MAX";
    }

    std::pair<AggKind, int> parse_agg_call(const std::vector<OutCol>& in) {
        std::string u = upper(expect_ident("aggregate"));
        AggKind k = u == "COUNT"  ? AggKind::Count
                    : u == "SUM"  ? AggKind::Sum
                    : u == "MIN"  ? AggKind::Min
                                  : AggKind::Max;
        expect_sym("(");
        int col = -1;
        if (k == AggKind::Count && accept_sym("*")) {
            // COUNT(*)
        } else {
            col = resolve(parse_colref(), in);
            if (k == AggKind::Count) col = -1; // COUNT(col) counts rows; no NULLs here
        }
        expect_sym(")");
        return {k, col};
    }

    ExprPtr parse_primary(const std::vector<OutCol>& in, GroupCtx* g) {
        reject_unsupported_kw();
        if (peek().k == Tok::Int) return Expr::constant(Value::from_decimal(toks[at++].s));
        if (peek().k == Tok::Str) fail("string literals may only appear in comparisons");
        if (accept_sym("(")) {
            ExprPtr e = parse_additive(in, g);
            expect_sym(")");
            return e;
        }
        if (peek().k != Tok::Ident) fail("expected an expression");
        std::string u = upper(peek().s);
        if (u == "GREATEST" || u == "LEAST") {
            at++;
            expect_sym("(");
            std::vector<ExprPtr> args;
            do args.push_back(parse_additive(in, g));
            while (accept_sym(","));
            expect_sym(")");
            return Expr::make(u == "GREATEST" ? Expr::Greatest : Expr::Least, std::move(args));
        }
        if (peek_agg()) {
            if (!g)
                fail("aggregates are only allowed in SELECT, HAVING and ORDER BY of a grouped query");
            auto [k, col] = parse_agg_call(*g->in);
            return Expr::column(g->get_or_add(k, col, "", true));
        }
        if (u == "CONCAT") unsupported("CONCAT is only supported in GROUP BY keys");
        // identifier followed by '(' is a function call we do not know
        if (toks[at + 1].k == Tok::Sym && toks[at + 1].s == "(")
            unsupported("unknown function '" + peek().s +
                        "' (user-defined functions are not supported)");
        return Expr::column(resolve(parse_colref(), in));
    }

    ExprPtr parse_additive(const std::vector<OutCol>& in, GroupCtx* g) {
        ExprPtr e = parse_primary(in, g);
        while (true) {
            if (accept_sym("+"))
                e = Expr::make(Expr::Add, vec2(std::move(e), parse_primary(in, g)));
            else if (accept_sym("-"))
                e = Expr::make(Expr::Sub, vec2(std::move(e), parse_primary(in, g)));
            else if (is_sym("*"))
                unsupported("multiplication is not supported");
            else
                break;
        }
        return e;
    }

    static std::vector<ExprPtr> vec2(ExprPtr a, ExprPtr b) {
        std::vector<ExprPtr> v;
        v.push_back(std::move(a));
        v.push_back(std::move(b));
        return v;
    }

    // --- predicates ---

    CmpOp parse_cmpop() {
        if (is_kw("LIKE")) unsupported("regular expressions are not supported");
        if (is_kw("REGEXP")) unsupported("regular expressions are not supported");
        if (accept_sym("=")) return CmpOp::Eq;
        if (accept_sym("!=")) return CmpOp::Ne;
        if (accept_sym("<=")) return CmpOp::Le;
        if (accept_sym(">=")) return CmpOp::Ge;
        if (accept_sym("<")) return CmpOp::Lt;
        if (accept_sym(">")) return CmpOp::Gt;
        fail("expected a comparison operator");
    }

    // Resolve 'col = symbolic-string' through the column's declared enum.
    ExprPtr resolve_str(const std::string& sym, const ExprPtr& other,
                        const std::vector<OutCol>& in) {
        if (other->kind != Expr::Col)
            fail("a string literal must be compared against a column");
        const OutCol& c = in[size_t(other->col)];
        for (const auto& [name, v] : c.enums)
            if (name == sym) return Expr::constant(Value::of(v));
        fail("column '" + c.qual + "' has no symbolic value '" + sym + "'");
    }

    PredPtr parse_cmp(const std::vector<OutCol>& in, GroupCtx* g) {
        bool lstr = peek().k == Tok::Str;
        std::string ls = lstr ? toks[at++].s : "";
        ExprPtr l = lstr ? nullptr : parse_additive(in, g);
        CmpOp op = parse_cmpop();
        bool rstr = peek().k == Tok::Str;
        std::string rs = rstr ? toks[at++].s : "";
        ExprPtr r = rstr ? nullptr : parse_additive(in, g);
        if (lstr && rstr) fail("cannot compare two string literals");
        if (lstr) l = resolve_str(ls, r, in);
        if (rstr) r = resolve_str(rs, l, in);
        return Pred::cmp(op, std::move(l), std::move(r));
    }

    // Decide whether '(' opens a nested predicate or an arithmetic term by
    // looking at what follows the matching ')'.
    bool paren_is_pred() const {
        int depth = 0;
        size_t i = at;
        for (; i < toks.size(); i++) {
            if (toks[i].k == Tok::Sym && toks[i].s == "(") depth++;
            if (toks[i].k == Tok::Sym && toks[i].s == ")" && --depth == 0) break;
        }
        if (i + 1 >= toks.size()) return true;
        const Tok& nx = toks[i + 1];
        if (nx.k == Tok::Sym &&
            (nx.s == "=" || nx.s == "!=" || nx.s == "<" || nx.s == "<=" || nx.s == ">" ||
             nx.s == ">=" || nx.s == "+" || nx.s == "-"))
            return false;
        return true;
    }

    PredPtr parse_pred_atom(const std::vector<OutCol>& in, GroupCtx* g) {
        if (accept_kw("NOT")) {
            auto p = std::make_unique<Pred>();
            p->kind = Pred::Not;
            p->a = parse_pred_atom(in, g);
            return p;
        }
        if (is_sym("(") && paren_is_pred()) {
            expect_sym("(");
            PredPtr p = parse_pred(in, g);
            expect_sym(")");
            return p;
        }
        return parse_cmp(in, g);
    }

    PredPtr parse_pred_and(const std::vector<OutCol>& in, GroupCtx* g) {
        PredPtr p = parse_pred_atom(in, g);
        while (accept_kw("AND")) p = Pred::logic(Pred::And, std::move(p), parse_pred_atom(in, g));
        return p;
    }

    PredPtr parse_pred(const std::vector<OutCol>& in, GroupCtx* g) {
        PredPtr p = parse_pred_and(in, g);
        while (accept_kw("OR")) p = Pred::logic(Pred::Or, std::move(p), parse_pred_and(in, g));
        return p;
    }

    // --- FROM clause ---

    RelOpPtr make_scan(const TableDef* t, const std::string& alias) {
        auto n = std::make_unique<RelOp>();
        n->kind = RelOp::Scan;
        n->table = t;
        n->alias = alias;
        for (const auto& c : t->cols) n->cols.push_back(OutCol::of(c, alias));
        return n;
    }

    // One table reference; `table@*` expands to every owner.
    std::vector<RelOpPtr> parse_tref() {
        std::string name = expect_ident("table name");
        std::vector<int> owners;
        if (accept_sym("@")) {
            if (accept_sym("*")) {
                owners = schema.owners_of(name);
                if (owners.empty()) fail("unknown table '" + name + "'");
            } else {
                int p = int(expect_int("party number")) - 1;
                if (p < 0) fail("party numbers are 1-based");
                if (!schema.find(name, p))
                    fail("unknown table '" + name + "@" + std::to_string(p + 1) + "'");
                owners = {p};
            }
        } else {
            owners = schema.owners_of(name);
            if (owners.empty()) fail("unknown table '" + name + "'");
            if (owners.size() > 1)
                fail("table '" + name + "' is owned by several parties; qualify with @party or @*");
        }
        std::string alias;
        if (accept_kw("AS")) alias = expect_ident("alias");
        if (owners.size() > 1 && !alias.empty()) fail("an alias cannot be used with @*");
        std::vector<RelOpPtr> scans;
        for (int p : owners) scans.push_back(make_scan(schema.find(name, p), alias));
        return scans;
    }

    RelOpPtr make_concat(std::vector<RelOpPtr> kids) {
        if (kids.size() == 1) return std::move(kids[0]);
        const auto& c0 = kids[0]->cols;
        for (size_t k = 1; k < kids.size(); k++) {
            const auto& ck = kids[k]->cols;
            if (ck.size() != c0.size()) fail("UNION branches have different column counts");
            for (size_t i = 0; i < c0.size(); i++)
                if (ck[i].name != c0[i].name || ck[i].width != c0[i].width)
                    fail("UNION branches disagree on column '" + c0[i].name + "'");
        }
        auto n = std::make_unique<RelOp>();
        n->kind = RelOp::Concat;
        for (size_t i = 0; i < c0.size(); i++) {
            OutCol o = c0[i];
            o.qual = o.name; // aliases do not survive a union
            for (size_t k = 1; k < kids.size() && o.has_range; k++) {
                const OutCol& ck = kids[k]->cols[i];
                if (!ck.has_range) o.has_range = false;
                else {
                    o.lo = std::min(o.lo, ck.lo);
                    o.hi = std::max(o.hi, ck.hi);
                }
            }
            n->cols.push_back(std::move(o));
        }
        n->kids = std::move(kids);
        return n;
    }

    RelOpPtr parse_from() {
        std::vector<RelOpPtr> first = parse_tref();
        if (is_kw("UNION") || first.size() > 1) {
            std::vector<RelOpPtr> kids = std::move(first);
            while (accept_kw("UNION")) {
                auto more = parse_tref();
                for (auto& s : more) kids.push_back(std::move(s));
            }
            return make_concat(std::move(kids));
        }
        RelOpPtr cur = std::move(first[0]);
        while (accept_kw("JOIN")) {
            std::vector<RelOpPtr> rhs = parse_tref();
            if (rhs.size() > 1) fail("@* cannot be joined; name the party");
            expect_kw("ON");
            // resolve the ON condition over the combined columns
            std::vector<OutCol> combined = cur->cols;
            combined.insert(combined.end(), rhs[0]->cols.begin(), rhs[0]->cols.end());
            PredPtr on = parse_pred(combined, nullptr);
            bool is_eq = on->kind == Pred::Cmp && on->op == CmpOp::Eq &&
                         on->lhs->kind == Expr::Col && on->rhs->kind == Expr::Col;
            if (!is_eq) {
                auto n = std::make_unique<RelOp>();
                n->kind = RelOp::ThetaJoin;
                n->cols = std::move(combined);
                n->pred = std::move(on);
                n->kids.push_back(std::move(cur));
                n->kids.push_back(std::move(rhs[0]));
                cur = std::move(n);
                continue;
            }
            int a = on->lhs->col, b = on->rhs->col;
            int ncur = int(cur->cols.size());
            if ((a < ncur) == (b < ncur)) fail("JOIN .. ON must relate the two joined tables");
            int left_key = std::min(a, b);           // inside cur
            int right_key = std::max(a, b) - ncur;   // inside the new table
            if (cur->cols[size_t(left_key)].width != rhs[0]->cols[size_t(right_key)].width)
                fail("join key columns have different widths");
            // extend an existing m-way join when the new condition reuses one
            // of its key columns, keeping one shared key class
            bool extends = false;
            if (cur->kind == RelOp::EquiJoin) {
                int off = 0;
                for (size_t k = 0; k < cur->kids.size(); k++) {
                    if (left_key == off + cur->join_keys[k]) extends = true;
                    off += int(cur->kids[k]->cols.size());
                }
            }
            if (extends) {
                cur->cols.insert(cur->cols.end(), rhs[0]->cols.begin(), rhs[0]->cols.end());
                cur->join_keys.push_back(right_key);
                cur->kids.push_back(std::move(rhs[0]));
            } else {
                auto n = std::make_unique<RelOp>();
                n->kind = RelOp::EquiJoin;
                n->cols = std::move(combined);
                n->join_keys = {left_key, right_key};
                n->kids.push_back(std::move(cur));
                n->kids.push_back(std::move(rhs[0]));
                cur = std::move(n);
            }
        }
        return cur;
    }

    // --- SELECT items ---

    struct SelItem {
        bool star = false;
        bool is_agg = false;
        AggKind agg = AggKind::Count;
        int agg_col = -1;
        ExprPtr expr; // non-agg items
        std::string as_name;
    };

    std::vector<SelItem> parse_select_items(const std::vector<OutCol>& in, bool grouping) {
        std::vector<SelItem> items;
        do {
            reject_unsupported_kw();
            SelItem it;
            if (accept_sym("*")) {
                it.star = true;
                items.push_back(std::move(it));
                continue;
            }
            if (peek_agg()) {
                if (!grouping) fail("aggregate without GROUP BY is not supported");
                auto [k, col] = parse_agg_call(in);
                it.is_agg = true;
                it.agg = k;
                it.agg_col = col;
            } else {
                it.expr = parse_additive(in, nullptr);
            }
            if (accept_kw("AS")) it.as_name = expect_ident("output name");
            items.push_back(std::move(it));
        } while (accept_sym(","));
        return items;
    }

    // --- whole query ---

    RelOpPtr parse_query() {
        expect_kw("SELECT");
        reject_unsupported_kw();
        auto sel_span = skip_clause();
        expect_kw("FROM");
        RelOpPtr cur = parse_from();

        if (accept_kw("WHERE")) {
            auto f = std::make_unique<RelOp>();
            f->kind = RelOp::Filter;
            f->pred = parse_pred(cur->cols, nullptr);
            f->cols = cur->cols;
            f->kids.push_back(std::move(cur));
            cur = std::move(f);
        }

        bool grouping = false;
        std::vector<int> group_keys;
        if (accept_kw("GROUP")) {
            expect_kw("BY");
            grouping = true;
            do {
                if (is_kw("CONCAT")) {
                    at++;
                    expect_sym("(");
                    do group_keys.push_back(resolve(parse_colref(), cur->cols));
                    while (accept_sym(","));
                    expect_sym(")");
                } else {
                    group_keys.push_back(resolve(parse_colref(), cur->cols));
                }
            } while (accept_sym(","));
        }

        std::pair<size_t, size_t> having_span{0, 0};
        if (accept_kw("HAVING")) {
            if (!grouping) fail("HAVING requires GROUP BY");
            having_span = skip_clause();
        }
        std::pair<size_t, size_t> order_span{0, 0};
        if (accept_kw("ORDER")) {
            expect_kw("BY");
            order_span = skip_clause();
        }
        bool has_limit = false;
        uint64_t limit = 0;
        if (accept_kw("LIMIT")) {
            has_limit = true;
            limit = expect_int("row limit");
        }
        accept_sym(";");
        if (peek().k != Tok::End) fail("trailing input after the query");
        size_t end_at = at;

        // SELECT items, now that the input schema is known
        at = sel_span.first;
        GroupCtx g;
        g.in = &cur->cols;
        g.keys = &group_keys;
        std::vector<SelItem> items = parse_select_items(cur->cols, grouping);
        if (at != sel_span.second) fail("malformed select list");

        RelOpPtr top;
        if (grouping) {
            // canonical group output: keys first, then aggregates as they appear
            for (int k : group_keys) {
                OutCol o = cur->cols[size_t(k)];
                o.qual = o.name;
                g.out.push_back(std::move(o));
            }
            struct Pick { int col; std::string name; };
            std::vector<Pick> picks;
            for (auto& it : items) {
                if (it.star) fail("SELECT * cannot be combined with GROUP BY");
                if (it.is_agg) {
                    int idx = g.get_or_add(it.agg, it.agg_col, it.as_name, false);
                    picks.push_back({idx, g.out[size_t(idx)].name});
                } else {
                    if (it.expr->kind != Expr::Col)
                        fail("a grouped SELECT item must be a group key or an aggregate");
                    int src = it.expr->col;
                    int idx = -1;
                    for (size_t k = 0; k < group_keys.size(); k++)
                        if (group_keys[k] == src) idx = int(k);
                    if (idx < 0)
                        fail("column '" + cur->cols[size_t(src)].qual +
                             "' must appear in GROUP BY");
                    picks.push_back({idx, it.as_name.empty() ? g.out[size_t(idx)].name : it.as_name});
                }
            }

            auto grp = std::make_unique<RelOp>();
            grp->kind = RelOp::GroupByAgg;
            grp->group_keys = group_keys;
            grp->kids.push_back(std::move(cur));

            if (having_span.second) {
                size_t save = at;
                at = having_span.first;
                grp->having = parse_pred(g.out, &g);
                if (at != having_span.second) fail("malformed HAVING clause");
                at = save;
            }

            int order_col = -1;
            bool desc = false;
            if (order_span.second) {
                at = order_span.first;
                if (peek_agg()) {
                    auto [k, col] = parse_agg_call(*g.in);
                    order_col = g.get_or_add(k, col, "", true);
                } else {
                    order_col = resolve(parse_colref(), g.out);
                }
                if (accept_kw("DESC")) desc = true;
                else accept_kw("ASC");
                if (at != order_span.second) fail("malformed ORDER BY clause");
            }

            grp->aggs = g.aggs;
            grp->cols = g.out;
            top = std::move(grp);

            if (order_col >= 0) {
                if (!has_limit) unsupported("ORDER BY without LIMIT is not supported");
                auto ob = std::make_unique<RelOp>();
                ob->kind = RelOp::OrderByLimit;
                ob->order_col = order_col;
                ob->desc = desc;
                ob->limit = limit;
                ob->cols = top->cols;
                ob->kids.push_back(std::move(top));
                top = std::move(ob);
            } else if (has_limit) {
                unsupported("LIMIT without ORDER BY is not supported");
            }

            // project unless SELECT matches the visible group output exactly
            bool exact = true;
            size_t vis = 0;
            for (size_t i = 0; i < top->cols.size(); i++) {
                bool hidden = i >= group_keys.size() && g.aggs[i - group_keys.size()].hidden;
                if (!hidden) vis++;
            }
            if (picks.size() != vis) exact = false;
            for (size_t i = 0; exact && i < picks.size(); i++)
                exact = picks[i].col == int(i) && picks[i].name == top->cols[size_t(i)].name;
            if (!exact) {
                auto pr = std::make_unique<RelOp>();
                pr->kind = RelOp::Project;
                for (const auto& p : picks) {
                    pr->exprs.push_back(Expr::column(p.col));
                    OutCol o = top->cols[size_t(p.col)];
                    o.name = o.qual = p.name;
                    pr->cols.push_back(std::move(o));
                }
                pr->kids.push_back(std::move(top));
                top = std::move(pr);
            }
            return top;
        }

        // ungrouped
        if (order_span.second || has_limit) {
            if (!order_span.second) unsupported("LIMIT without ORDER BY is not supported");
            if (!has_limit) unsupported("ORDER BY without LIMIT is not supported");
            size_t save = at;
            at = order_span.first;
            int order_col = resolve(parse_colref(), cur->cols);
            bool desc = accept_kw("DESC");
            if (!desc) accept_kw("ASC");
            if (at != order_span.second) fail("malformed ORDER BY clause");
            at = save;
            auto ob = std::make_unique<RelOp>();
            ob->kind = RelOp::OrderByLimit;
            ob->order_col = order_col;
            ob->desc = desc;
            ob->limit = limit;
            ob->cols = cur->cols;
            ob->kids.push_back(std::move(cur));
            cur = std::move(ob);
        }

        bool star = items.size() == 1 && items[0].star;
        if (star) {
            at = end_at;
            return cur;
        }
        bool plain = true, identity = items.size() == cur->cols.size();
        for (size_t i = 0; i < items.size(); i++) {
            if (items[i].star) fail("'*' cannot be mixed with named select items");
            if (items[i].expr->kind != Expr::Col) plain = false, identity = false;
            else if (identity) {
                identity = items[i].expr->col == int(i) &&
                           (items[i].as_name.empty() ||
                            items[i].as_name == cur->cols[i].name);
            }
        }
        if (identity) {
            at = end_at;
            return cur;
        }
        auto pr = std::make_unique<RelOp>();
        pr->kind = plain ? RelOp::Project : RelOp::ScalarExpr;
        for (size_t i = 0; i < items.size(); i++) {
            OutCol o = expr_meta(*items[i].expr, cur->cols);
            if (items[i].expr->kind == Expr::Col) {
                o = cur->cols[size_t(items[i].expr->col)];
                o.name = items[i].as_name.empty() ? o.name : items[i].as_name;
            } else {
                o.name = items[i].as_name.empty() ? "c" + std::to_string(i) : items[i].as_name;
            }
            o.qual = o.name;
            pr->cols.push_back(std::move(o));
            pr->exprs.push_back(std::move(items[i].expr));
        }
        pr->kids.push_back(std::move(cur));
        at = end_at;
        return pr;
    }
};

} // namespace

RelOpPtr parse(const std::string& text, const Schema& schema) {
    Parser p(text, schema);
    return p.parse_query();
}

// --- canonical printing -----------------------------------------------------

namespace {

// Column rendering for HAVING/ORDER BY: aggregate outputs print as their
// aggregate call (hidden ones must, or a reparse could not resolve them).
std::string group_col_ref(const RelOp& g, int idx, bool prefer_name) {
    size_t nk = g.group_keys.size();
    if (size_t(idx) < nk) return g.cols[size_t(idx)].qual;
    const AggSpec& a = g.aggs[size_t(idx) - nk];
    if (prefer_name && !a.hidden) return g.cols[size_t(idx)].name;
    return a.str(g.in_cols());
}

std::string print_having(const Pred& p, const RelOp& g) {
    switch (p.kind) {
    case Pred::Cmp: {
        static const char* ops[] = {"=", "!=", "<", "<=", ">", ">="};
        auto side = [&](const Expr& e) {
            if (e.kind == Expr::Col) return group_col_ref(g, e.col, false);
            return e.str(g.cols);
        };
        return side(*p.lhs) + " " + ops[int(p.op)] + " " + side(*p.rhs);
    }
    case Pred::And: return print_having(*p.a, g) + " AND " + print_having(*p.b, g);
    case Pred::Or: return "(" + print_having(*p.a, g) + ") OR (" + print_having(*p.b, g) + ")";
    case Pred::Not: return "NOT (" + print_having(*p.a, g) + ")";
    }
    return "?";
}

std::string print_from(const RelOp& base) {
    auto scan_ref = [](const RelOp& s) {
        std::string t = s.table->name + "@" + std::to_string(s.table->owner + 1);
        if (!s.alias.empty()) t += " AS " + s.alias;
        return t;
    };
    switch (base.kind) {
    case RelOp::Scan:
        return scan_ref(base);
    case RelOp::Concat: {
        std::string s;
        for (size_t i = 0; i < base.kids.size(); i++) {
            if (base.kids[i]->kind != RelOp::Scan) throw Error("unprintable union branch");
            s += (i ? " UNION " : "") + scan_ref(*base.kids[i]);
        }
        return s;
    }
    case RelOp::EquiJoin: {
        for (const auto& k : base.kids)
            if (k->kind != RelOp::Scan) throw Error("unprintable join shape");
        std::string s = scan_ref(*base.kids[0]);
        const std::string& k0 = base.kids[0]->cols[size_t(base.join_keys[0])].qual;
        for (size_t k = 1; k < base.kids.size(); k++)
            s += " JOIN " + scan_ref(*base.kids[k]) + " ON " + k0 + " = " +
                 base.kids[k]->cols[size_t(base.join_keys[k])].qual;
        return s;
    }
    case RelOp::ThetaJoin: {
        if (base.kids[0]->kind != RelOp::Scan || base.kids[1]->kind != RelOp::Scan)
            throw Error("unprintable join shape");
        return scan_ref(*base.kids[0]) + " JOIN " + scan_ref(*base.kids[1]) + " ON " +
               base.pred->str(base.cols);
    }
    default: throw Error("not a printable query shape");
    }
}

} // namespace

std::string print(const RelOp& op) {
    const RelOp* p = &op;
    const RelOp* proj = nullptr;
    const RelOp* order = nullptr;
    const RelOp* group = nullptr;
    const RelOp* filt = nullptr;
    if (p->kind == RelOp::Project || p->kind == RelOp::ScalarExpr) {
        proj = p;
        p = p->kids[0].get();
    }
    if (p->kind == RelOp::OrderByLimit) {
        order = p;
        p = p->kids[0].get();
    }
    if (p->kind == RelOp::GroupByAgg) {
        group = p;
        p = p->kids[0].get();
    }
    if (p->kind == RelOp::Filter) {
        filt = p;
        p = p->kids[0].get();
    }
    const RelOp& base = *p;

    std::ostringstream os;
    os << "SELECT ";
    if (proj) {
        for (size_t i = 0; i < proj->exprs.size(); i++) {
            if (i) os << ", ";
            const Expr& e = *proj->exprs[i];
            std::string derived;
            std::string body;
            if (e.kind == Expr::Col && group) {
                if (size_t(e.col) >= group->group_keys.size()) {
                    // always the aggregate-call form; a bare output name would
                    // not resolve when the printed text is parsed again
                    os << group_col_ref(*group, e.col, false) << " AS " << proj->cols[i].name;
                    continue;
                }
                body = group_col_ref(*group, e.col, true);
                derived = group->cols[size_t(e.col)].name;
            } else if (e.kind == Expr::Col) {
                body = proj->in_cols()[size_t(e.col)].qual;
                derived = proj->in_cols()[size_t(e.col)].name;
            } else {
                body = e.str(proj->in_cols());
                derived = "c" + std::to_string(i);
            }
            os << body;
            if (proj->cols[i].name != derived) os << " AS " << proj->cols[i].name;
        }
    } else if (group) {
        bool first = true;
        for (size_t i = 0; i < group->cols.size(); i++) {
            bool hidden = i >= group->group_keys.size() &&
                          group->aggs[i - group->group_keys.size()].hidden;
            if (hidden) continue;
            if (!first) os << ", ";
            first = false;
            if (i < group->group_keys.size())
                os << group->in_cols()[size_t(group->group_keys[i])].qual;
            else
                os << group->aggs[i - group->group_keys.size()].str(group->in_cols()) << " AS "
                   << group->cols[i].name;
        }
    } else {
        os << "*";
    }
    os << "\nFROM " << print_from(base);
    if (filt) os << "\nWHERE " << filt->pred->str(filt->in_cols());
    if (group) {
        os << "\nGROUP BY ";
        for (size_t i = 0; i < group->group_keys.size(); i++)
            os << (i ? ", " : "") << group->in_cols()[size_t(group->group_keys[i])].qual;
        if (group->having) os << "\nHAVING " << print_having(*group->having, *group);
    }
    if (order) {
        os << "\nORDER BY ";
        if (group)
            os << group_col_ref(*group, order->order_col, true);
        else
            os << order->in_cols()[size_t(order->order_col)].qual;
        if (order->desc) os << " DESC";
        os << "\nLIMIT " << order->limit;
    }
    os << "\n";
    return os.str();
}

} // namespace quilt::sql
