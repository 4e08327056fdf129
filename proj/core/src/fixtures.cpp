#include "quilt/fixtures.hpp"

#include <algorithm>

namespace quilt::sql {

namespace {

ColumnDef col(const std::string& name, uint32_t width) {
    ColumnDef c;
    c.name = name;
    c.width = width;
    return c;
}

ColumnDef col_range(const std::string& name, uint32_t width, uint64_t lo, uint64_t hi) {
    ColumnDef c = col(name, width);
    c.has_range = true;
    c.lo = Value::of(lo);
    c.hi = Value::of(hi);
    return c;
}

void check(const FixtureParams& p) {
    if (p.m < 2 || p.m > 16) throw ValidationError("fixture: party count must be in [2,16]");
    if (p.n < 4) throw ValidationError("fixture: need at least 4 rows per party");
    if (p.filter_factor < 0 || p.filter_factor > 1)
        throw ValidationError("fixture: filter factor must be in [0,1]");
}

// 256-bit pseudo-hash of (a, b); a stand-in for a password hash.
Value hash256(uint64_t a, uint64_t b) {
    Rng h(a * 0x9e3779b97f4a7c15ull ^ b ^ 0xabcdef12345ull);
    Value v;
    for (uint32_t i = 0; i < 4; i++) {
        uint64_t word = h.word();
        for (uint32_t bit = 0; bit < 64; bit++)
            if ((word >> bit) & 1) v.set_bit(i * 64 + bit, true);
    }
    // keep real hashes nonzero (an all-zero row means "absent" on the wire)
    if (v.is_zero()) v.set_bit(0, true);
    return v;
}

Fixture medical_like(const std::string& name, const std::string& table, const FixtureParams& p,
                     bool range_filter) {
    Fixture f;
    f.name = name;
    for (int party = 0; party < p.m; party++) {
        TableDef t;
        t.name = table;
        t.owner = party;
        t.bound = p.n;
        if (!range_filter) {
            t.cols.push_back(col_range("diag", 16, 1, 64));
            ColumnDef hc = col("has_cdiff", 2);
            hc.enums = {{"False", 0}, {"True", 1}};
            t.cols.push_back(hc);
        } else {
            ColumnDef sm = col_range("shipmode", 4, 1, 4);
            sm.enums = {{"MAIL", 1}, {"SHIP", 2}, {"AIR", 3}, {"RAIL", 4}};
            t.cols.push_back(sm);
            t.cols.push_back(col_range("receiptdate", 16, 1, 3650));
        }
        f.schema.tables.push_back(std::move(t));
    }
    Rng rng(p.seed);
    for (int party = 0; party < p.m; party++) {
        Rng r = rng.fork(uint64_t(party) + 1);
        Table t;
        t.def = &f.schema.tables[size_t(party)];
        for (uint64_t i = 0; i < p.n; i++) {
            bool keep = r.real() < p.filter_factor;
            if (!range_filter) {
                t.rows.push_back({Value::of(r.range(1, 40)), Value::of(keep ? 1 : 0)});
            } else {
                uint64_t date = keep ? r.range(365, 729) : (r.bit() ? r.range(1, 364)
                                                                    : r.range(730, 3650));
                t.rows.push_back({Value::of(r.range(1, 4)), Value::of(date)});
            }
        }
        f.data.add(std::move(t));
    }
    if (!range_filter)
        f.query = "SELECT diag, COUNT(*) AS cnt\n"
                  "FROM " + table + "@*\n"
                  "WHERE has_cdiff = 'True'\n"
                  "GROUP BY diag\n"
                  "ORDER BY cnt DESC\nLIMIT 10\n";
    else
        f.query = "SELECT shipmode, COUNT(*) AS cnt\n"
                  "FROM " + table + "@*\n"
                  "WHERE receiptdate >= 365 AND receiptdate <= 729\n"
                  "GROUP BY shipmode\n"
                  "ORDER BY cnt DESC\nLIMIT 4\n";
    f.data.schema = &f.schema;
    return f;
}

Fixture passwords(const FixtureParams& p) {
    Fixture f;
    f.name = "passwords";
    for (int party = 0; party < p.m; party++) {
        TableDef t;
        t.name = "passwords";
        t.owner = party;
        t.bound = p.n;
        t.cols.push_back(col_range("user_id", 32, 1, 100000000));
        t.cols.push_back(col("password", 256));
        f.schema.tables.push_back(std::move(t));
    }
    // plant reused (user, hash) pairs across parties: ~n/4 users per party
    // reuse their password on one other service
    Rng rng(p.seed);
    uint64_t reused = p.n / 4;
    std::vector<std::vector<std::vector<Value>>> rows(size_t(p.m));
    for (uint64_t i = 0; i < reused * uint64_t(p.m) / 2; i++) {
        uint64_t uid = 1000 + i;
        Value pw = hash256(uid, 0);
        int a = int(rng.below(uint64_t(p.m)));
        int b = int(rng.below(uint64_t(p.m - 1)));
        if (b >= a) b++;
        for (int party : {a, b})
            if (rows[size_t(party)].size() < p.n) rows[size_t(party)].push_back({Value::of(uid), pw});
    }
    for (int party = 0; party < p.m; party++) {
        uint64_t j = 0;
        while (rows[size_t(party)].size() < p.n) {
            uint64_t uid = uint64_t(party + 1) * 1000000 + j++;
            rows[size_t(party)].push_back({Value::of(uid), hash256(uid, uint64_t(party) + 7)});
        }
        Table t;
        t.def = &f.schema.tables[size_t(party)];
        t.rows = std::move(rows[size_t(party)]);
        f.data.add(std::move(t));
    }
    std::string from;
    for (int party = 1; party <= p.m; party++)
        from += (party > 1 ? " UNION " : "") + std::string("passwords@") + std::to_string(party);
    f.query = "SELECT user_id\nFROM " + from +
              "\nGROUP BY CONCAT(user_id, password)\nHAVING COUNT(*) > 1\n";
    f.data.schema = &f.schema;
    return f;
}

Fixture credit(const FixtureParams& p) {
    Fixture f;
    f.name = "credit";
    for (int party = 0; party < p.m; party++) {
        TableDef t;
        t.name = "credit_scores";
        t.owner = party;
        t.bound = p.n;
        t.cols.push_back(col_range("ssn", 32, 1, 1000000000));
        t.cols.push_back(col_range("credit", 16, 300, 850));
        t.cols.push_back(col_range("year", 16, 2000, 2030));
        f.schema.tables.push_back(std::move(t));
    }
    Rng rng(p.seed);
    uint64_t core = p.n / 2; // ssns present at every agency
    uint64_t spread = std::min<uint64_t>(550, p.threshold + 100);
    std::vector<std::vector<std::vector<Value>>> rows(size_t(p.m));
    for (uint64_t i = 0; i < core; i++) {
        uint64_t ssn = 7919 * (i + 1);
        bool discrepant = (i % 2) == 1 && p.threshold < 550;
        uint64_t base = rng.range(300, 850 - spread);
        for (int party = 0; party < p.m; party++) {
            uint64_t score = discrepant
                                 ? base + uint64_t(party) * spread / uint64_t(p.m - 1)
                                 : base + rng.below(p.threshold / 2 + 1);
            rows[size_t(party)].push_back(
                {Value::of(ssn), Value::of(score), Value::of(2019)});
        }
    }
    for (int party = 0; party < p.m; party++) {
        Rng r = rng.fork(uint64_t(party) + 101);
        for (uint64_t j = core; j < p.n; j++) {
            uint64_t ssn = uint64_t(party + 1) * 100000000 + j;
            uint64_t year = r.real() < p.filter_factor ? 2019 : 2018;
            rows[size_t(party)].push_back(
                {Value::of(ssn), Value::of(r.range(300, 850)), Value::of(year)});
        }
        Table t;
        t.def = &f.schema.tables[size_t(party)];
        t.rows = std::move(rows[size_t(party)]);
        f.data.add(std::move(t));
    }
    std::string from = "credit_scores@1 AS c1";
    std::string great = "GREATEST(c1.credit", least = "LEAST(c1.credit", years = "c1.year = 2019";
    for (int party = 2; party <= p.m; party++) {
        std::string a = "c" + std::to_string(party);
        from += " JOIN credit_scores@" + std::to_string(party) + " AS " + a + " ON c1.ssn = " +
                a + ".ssn";
        great += ", " + a + ".credit";
        least += ", " + a + ".credit";
        years += " AND " + a + ".year = 2019";
    }
    f.query = "SELECT c1.ssn\nFROM " + from + "\nWHERE " + great + ") - " + least + ") > " +
              std::to_string(p.threshold) + " AND " + years + "\n";
    f.data.schema = &f.schema;
    return f;
}

} // namespace

std::vector<std::string> fixture_names() { return {"medical", "passwords", "credit", "shipping"}; }

Fixture fixture(const std::string& name, const FixtureParams& p) {
    check(p);
    if (name == "medical") return medical_like(name, "diagnoses", p, false);
    if (name == "shipping") return medical_like(name, "lineitem", p, true);
    if (name == "passwords") return passwords(p);
    if (name == "credit") return credit(p);
    throw ValidationError("unknown fixture '" + name + "' (have: medical, passwords, credit, shipping)");
}

} // namespace quilt::sql
