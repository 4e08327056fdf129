#pragma once
// SQL subset frontend. parse() turns query text plus a schema into a resolved
// relational operator tree; print() emits canonical text for it (parse of
// which is a fixed point); eval() is the plaintext reference evaluator the
// protocol's results are checked against.
//
// Supported: SELECT / FROM / WHERE / GROUP BY / HAVING / ORDER BY / LIMIT,
// UNION as table concatenation, JOIN .. ON equality chains (collapsed to one
// m-way equijoin when they share a key class), COUNT/SUM/MIN/MAX,
// GREATEST/LEAST, +/-, CONCAT(...) composite group keys, and `table@party`
// annotations (`table@*` expands over every owner in the schema).
//
// RelOp trees borrow the Schema they were parsed against; keep it alive.

#include "quilt/schema.hpp"

#include <memory>

namespace quilt::sql {

enum class CmpOp { Eq, Ne, Lt, Le, Gt, Ge };
enum class AggKind { Count, Sum, Min, Max };

struct Expr;
using ExprPtr = std::unique_ptr<Expr>;

struct Expr {
    enum Kind { Col, Lit, Add, Sub, Greatest, Least } kind = Col;
    int col = -1;              // Col: index into the owning node's input columns
    Value lit;                 // Lit
    std::vector<ExprPtr> args; // Add/Sub: 2; Greatest/Least: >= 1

    static ExprPtr column(int idx);
    static ExprPtr constant(Value v);
    static ExprPtr make(Kind k, std::vector<ExprPtr> args);
    ExprPtr clone() const;
    std::string str(const std::vector<struct OutCol>& in) const;
};

struct Pred;
using PredPtr = std::unique_ptr<Pred>;

struct Pred {
    enum Kind { Cmp, And, Or, Not } kind = Cmp;
    CmpOp op = CmpOp::Eq;
    ExprPtr lhs, rhs; // Cmp
    PredPtr a, b;     // And/Or both, Not just a

    static PredPtr cmp(CmpOp op, ExprPtr l, ExprPtr r);
    static PredPtr logic(Kind k, PredPtr a, PredPtr b);
    PredPtr clone() const;
    std::string str(const std::vector<struct OutCol>& in) const;
};

// One column of a node's output schema. `qual` is the resolution name
// ("c1.ssn" after an aliased join, otherwise the bare name); ranges ride
// along for width planning and verifiability analysis.
struct OutCol {
    std::string name; // bare output name
    std::string qual;
    uint32_t width = 0;
    bool has_range = false;
    Value lo, hi;
    std::vector<std::pair<std::string, uint64_t>> enums;

    static OutCol of(const ColumnDef& c, const std::string& qual_prefix);
};

struct AggSpec {
    AggKind kind = AggKind::Count;
    int col = -1;     // aggregated input column; -1 for COUNT(*)
    std::string name; // output column name
    bool hidden = false; // synthesized for HAVING/ORDER BY, dropped by SELECT

    std::string str(const std::vector<OutCol>& in) const;
};

struct RelOp;
using RelOpPtr = std::unique_ptr<RelOp>;

struct RelOp {
    enum Kind { Scan, Concat, Filter, Project, EquiJoin, ThetaJoin, GroupByAgg, OrderByLimit,
                ScalarExpr } kind = Scan;
    std::vector<RelOpPtr> kids;
    std::vector<OutCol> cols; // resolved output schema

    // Scan
    const TableDef* table = nullptr;
    std::string alias;
    // Filter, ThetaJoin
    PredPtr pred;
    // Project (column picks) and ScalarExpr (computed columns)
    std::vector<ExprPtr> exprs;
    // EquiJoin: key column index within each kid
    std::vector<int> join_keys;
    // GroupByAgg
    std::vector<int> group_keys;
    std::vector<AggSpec> aggs;
    PredPtr having; // over this node's output columns
    // OrderByLimit
    int order_col = -1;
    bool desc = false;
    uint64_t limit = 0;

    PartySet owners() const;
    RelOpPtr clone() const;
    std::string str(int indent = 0) const; // stable structure dump
    const std::vector<OutCol>& in_cols() const; // first kid's cols (empty for Scan)
};

RelOpPtr parse(const std::string& text, const Schema& schema);
std::string print(const RelOp& op); // canonical SQL for parser-shaped trees

// Width/range bookkeeping for a computed expression over `in`.
OutCol expr_meta(const Expr& e, const std::vector<OutCol>& in);

// ---------------------------------------------------------------------------
// Plaintext reference evaluation.
// ---------------------------------------------------------------------------

struct Dataset {
    const Schema* schema = nullptr;
    std::vector<Table> tables;

    const Table* find(const std::string& name, int owner) const;
    void add(Table t);
};

using Rows = std::vector<std::vector<Value>>;

Rows eval(const RelOp& op, const Dataset& data);
Value eval_expr(const Expr& e, const std::vector<Value>& row, const std::vector<OutCol>& in);
bool eval_pred(const Pred& p, const std::vector<Value>& row, const std::vector<OutCol>& in);

// ---------------------------------------------------------------------------
// Input sizing.
// ---------------------------------------------------------------------------

struct BoundReport {
    struct Leaf {
        std::string table;
        int owner = 0;
        uint64_t bound = 0;
    };
    std::vector<Leaf> leaves;
    uint64_t total = 0; // sum of leaf bounds: the joint input row count pre-split
    std::string str() const;
};

BoundReport validate_bounds(const RelOp& op); // throws on a missing bound

} // namespace quilt::sql
