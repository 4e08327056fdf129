#include "quilt/schema.hpp"

#include <algorithm>
#include <sstream>

namespace quilt::sql {

std::optional<uint64_t> ColumnDef::enum_value(const std::string& sym) const {
    for (const auto& [name, v] : enums)
        if (name == sym) return v;
    return std::nullopt;
}

std::string ColumnDef::str() const {
    std::ostringstream os;
    os << "column " << name << " = width " << width;
    if (has_range) os << " range " << lo.to_decimal() << ".." << hi.to_decimal();
    if (!enums.empty()) {
        os << " enum";
        for (const auto& [n, v] : enums) os << " " << n << "=" << v;
    }
    return os.str();
}

int TableDef::col(const std::string& n) const {
    for (size_t i = 0; i < cols.size(); i++)
        if (cols[i].name == n) return int(i);
    return -1;
}

size_t TableDef::row_bits() const {
    size_t b = 0;
    for (const auto& c : cols) b += c.width;
    return b;
}

std::string TableDef::str() const {
    std::ostringstream os;
    os << "[" << name << " @ " << owner + 1 << "]\n";
    if (bound) os << "bound = " << bound << "\n";
    for (const auto& c : cols) os << c.str() << "\n";
    return os.str();
}

const TableDef* Schema::find(const std::string& name, int owner) const {
    for (const auto& t : tables)
        if (t.name == name && t.owner == owner) return &t;
    return nullptr;
}

std::vector<int> Schema::owners_of(const std::string& name) const {
    std::vector<int> v;
    for (const auto& t : tables)
        if (t.name == name) v.push_back(t.owner);
    std::sort(v.begin(), v.end());
    return v;
}

int Schema::party_count() const {
    int mx = -1;
    for (const auto& t : tables) mx = std::max(mx, t.owner);
    return mx + 1;
}

namespace {

std::vector<std::string> split_ws(const std::string& s) {
    std::vector<std::string> out;
    std::istringstream is(s);
    std::string tok;
    while (is >> tok) out.push_back(tok);
    return out;
}

std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

uint64_t parse_u64(const std::string& s, const std::string& what) {
    if (s.empty() || s.find_first_not_of("0123456789") != std::string::npos)
        throw ParseError("schema: bad " + what + " '" + s + "'");
    return std::stoull(s);
}

void parse_column(TableDef& t, const std::string& name, const std::string& spec, int lineno) {
    auto bad = [&](const std::string& msg) {
        throw ParseError("schema line " + std::to_string(lineno) + ": " + msg);
    };
    if (t.col(name) >= 0) bad("duplicate column '" + name + "' in table " + t.name);
    ColumnDef c;
    c.name = name;
    auto toks = split_ws(spec);
    for (size_t i = 0; i < toks.size(); i++) {
        if (toks[i] == "width") {
            if (++i >= toks.size()) bad("width needs a value");
            c.width = uint32_t(parse_u64(toks[i], "width"));
        } else if (toks[i] == "range") {
            if (++i >= toks.size()) bad("range needs lo..hi");
            size_t dd = toks[i].find("..");
            if (dd == std::string::npos) bad("range needs lo..hi");
            c.has_range = true;
            c.lo = Value::from_decimal(toks[i].substr(0, dd));
            c.hi = Value::from_decimal(toks[i].substr(dd + 2));
            if (c.hi < c.lo) bad("range hi below lo");
        } else if (toks[i] == "enum") {
            for (i++; i < toks.size(); i++) {
                size_t eq = toks[i].find('=');
                if (eq == std::string::npos) bad("enum entries look like Name=value");
                c.enums.emplace_back(toks[i].substr(0, eq),
                                     parse_u64(toks[i].substr(eq + 1), "enum value"));
            }
        } else {
            bad("unknown column attribute '" + toks[i] + "'");
        }
    }
    if (c.width < 2) bad("column '" + name + "' needs width >= 2");
    t.cols.push_back(std::move(c));
}

} // namespace

Schema Schema::parse(const std::string& text) {
    Schema s;
    TableDef* cur = nullptr;
    std::istringstream is(text);
    std::string raw;
    int lineno = 0;
    while (std::getline(is, raw)) {
        lineno++;
        std::string line = trim(raw);
        if (line.empty() || line[0] == '#') continue;
        auto bad = [&](const std::string& msg) {
            throw ParseError("schema line " + std::to_string(lineno) + ": " + msg);
        };
        if (line[0] == '[') {
            size_t close = line.find(']');
            if (close == std::string::npos) bad("unterminated section header");
            std::string inside = line.substr(1, close - 1);
            size_t at = inside.find('@');
            if (at == std::string::npos) bad("section header needs name @ party");
            TableDef t;
            t.name = trim(inside.substr(0, at));
            t.owner = int(parse_u64(trim(inside.substr(at + 1)), "party")) - 1;
            if (t.name.empty()) bad("empty table name");
            if (t.owner < 0) bad("party numbers are 1-based");
            if (s.find(t.name, t.owner))
                bad("duplicate table " + t.name + "@" + std::to_string(t.owner + 1));
            s.tables.push_back(std::move(t));
            cur = &s.tables.back();
            continue;
        }
        if (!cur) bad("key outside a [table @ party] section");
        size_t eq = line.find('=');
        if (eq == std::string::npos) bad("expected key = value");
        std::string key = trim(line.substr(0, eq));
        std::string val = trim(line.substr(eq + 1));
        if (key == "bound") {
            cur->bound = parse_u64(val, "bound");
            if (cur->bound < 1) bad("bound must be >= 1");
        } else if (key.rfind("column ", 0) == 0) {
            parse_column(*cur, trim(key.substr(7)), val, lineno);
        } else {
            bad("unknown key '" + key + "'");
        }
    }
    for (const auto& t : s.tables)
        if (t.cols.empty())
            throw ParseError("schema: table " + t.name + " has no columns");
    return s;
}

std::string Schema::str() const {
    std::string out;
    for (const auto& t : tables) {
        if (!out.empty()) out += "\n";
        out += t.str();
    }
    return out;
}

void Table::validate() const {
    if (!def) throw ValidationError("table data without a definition");
    if (def->bound && rows.size() > def->bound)
        throw ValidationError("table " + def->name + "@" + std::to_string(def->owner + 1) +
                              ": " + std::to_string(rows.size()) + " rows exceed declared bound " +
                              std::to_string(def->bound));
    for (size_t r = 0; r < rows.size(); r++) {
        if (rows[r].size() != def->cols.size())
            throw ValidationError("table " + def->name + " row " + std::to_string(r + 1) +
                                  ": wrong column count");
        for (size_t c = 0; c < def->cols.size(); c++) {
            const ColumnDef& cd = def->cols[c];
            const Value& v = rows[r][c];
            if (v.bit_width() > cd.width)
                throw ValidationError("table " + def->name + " row " + std::to_string(r + 1) +
                                      ": value " + v.to_decimal() + " overflows " +
                                      std::to_string(cd.width) + "-bit column " + cd.name);
            if (cd.has_range && (v < cd.lo || cd.hi < v))
                throw ValidationError("table " + def->name + " row " + std::to_string(r + 1) +
                                      ": value " + v.to_decimal() + " outside declared range of " +
                                      cd.name);
        }
    }
}

Table parse_csv(const std::string& text, const TableDef& def) {
    Table t;
    t.def = &def;
    std::istringstream is(text);
    std::string raw;
    int lineno = 0;
    bool header_done = false;
    while (std::getline(is, raw)) {
        lineno++;
        std::string line = trim(raw);
        if (line.empty() || line[0] == '#') continue;
        std::vector<std::string> cells;
        std::string cell;
        std::istringstream ls(line);
        while (std::getline(ls, cell, ',')) cells.push_back(trim(cell));
        if (!header_done) {
            header_done = true;
            // optional header row naming the columns in definition order
            if (!cells.empty() && !cells[0].empty() && !isdigit(uint8_t(cells[0][0]))) {
                if (cells.size() != def.cols.size())
                    throw ParseError("csv line " + std::to_string(lineno) + ": header has " +
                                     std::to_string(cells.size()) + " columns, table " + def.name +
                                     " has " + std::to_string(def.cols.size()));
                for (size_t i = 0; i < cells.size(); i++)
                    if (cells[i] != def.cols[i].name)
                        throw ParseError("csv line " + std::to_string(lineno) + ": header column '" +
                                         cells[i] + "' does not match schema column '" +
                                         def.cols[i].name + "'");
                continue;
            }
        }
        if (cells.size() != def.cols.size())
            throw ParseError("csv line " + std::to_string(lineno) + ": expected " +
                             std::to_string(def.cols.size()) + " columns, got " +
                             std::to_string(cells.size()));
        std::vector<Value> row;
        for (const auto& c : cells) row.push_back(Value::from_decimal(c));
        t.rows.push_back(std::move(row));
    }
    t.validate();
    return t;
}

std::string to_csv(const std::vector<std::string>& names,
                   const std::vector<std::vector<Value>>& rows) {
    std::string out;
    for (size_t i = 0; i < names.size(); i++) {
        if (i) out += ",";
        out += names[i];
    }
    out += "\n";
    for (const auto& r : rows) {
        for (size_t i = 0; i < r.size(); i++) {
            if (i) out += ",";
            out += r[i].to_decimal();
        }
        out += "\n";
    }
    return out;
}

std::string to_csv(const Table& t) {
    std::vector<std::string> names;
    for (const auto& c : t.def->cols) names.push_back(c.name);
    return to_csv(names, t.rows);
}

void canonicalize(std::vector<std::vector<Value>>& rows) {
    std::sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) {
        for (size_t i = 0; i < a.size() && i < b.size(); i++) {
            int c = Value::cmp(a[i], b[i]);
            if (c) return c < 0;
        }
        return a.size() < b.size();
    });
}

} // namespace quilt::sql
