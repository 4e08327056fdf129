#pragma once
// Table declarations and plaintext table data. The schema file is plain text
// with one section per table; data files are CSV with unsigned decimal
// columns (arbitrary width, so a 256-bit hash is just a long decimal).

#include "quilt/common.hpp"

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace quilt::sql {

struct ColumnDef {
    std::string name;
    uint32_t width = 0; // bits, >= 2
    bool has_range = false;
    Value lo, hi; // inclusive declared range, when has_range
    // Optional symbolic values ('True' -> 1). Queries may compare the column
    // against a quoted literal only if it names one of these.
    std::vector<std::pair<std::string, uint64_t>> enums;

    std::optional<uint64_t> enum_value(const std::string& sym) const;
    std::string str() const;
};

struct TableDef {
    std::string name;
    int owner = -1;     // 0-based party id; printed 1-based
    uint64_t bound = 0; // declared row upper bound; 0 = not declared
    std::vector<ColumnDef> cols;

    int col(const std::string& name) const; // -1 if absent
    size_t row_bits() const;
    std::string str() const;
};

struct Schema {
    std::vector<TableDef> tables;

    const TableDef* find(const std::string& name, int owner) const;
    // All owners that declare a table of this name, ascending.
    std::vector<int> owners_of(const std::string& name) const;
    int party_count() const; // 1 + max owner

    static Schema parse(const std::string& text);
    std::string str() const;
};

// Plaintext rows for one table. rows[i][c] is column c of row i.
struct Table {
    const TableDef* def = nullptr;
    std::vector<std::vector<Value>> rows;

    void validate() const; // widths, declared ranges, bound
};

Table parse_csv(const std::string& text, const TableDef& def);
std::string to_csv(const Table& t);
// Result CSV without a TableDef: named columns of given widths.
std::string to_csv(const std::vector<std::string>& names,
                   const std::vector<std::vector<Value>>& rows);

// Canonical form for comparing result multisets: rows sorted lexicographically.
void canonicalize(std::vector<std::vector<Value>>& rows);

} // namespace quilt::sql
