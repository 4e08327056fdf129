#pragma once
// Built-in workloads: a schema, a query, and seeded data per party. Used by
// the CLI (run/bench without user files) and by the end-to-end tests.
//
//   medical    m hospitals count shared diagnoses, local filter + local
//              partial counts (splits well)
//   passwords  password-reuse audit across m services: group on the
//              (user id, 256-bit hash) pair, keep groups seen twice
//   credit     m credit agencies intersect on ssn and flag score spreads
//              above a threshold in one year
//   shipping   date-window count by ship mode (range-filter variant of
//              medical)
//
// Expansion is deterministic in (name, params). `filter_factor` is the
// expected fraction of rows surviving the local filter where the workload
// has one; `threshold` is the credit-spread cutoff.

#include "quilt/sql.hpp"

namespace quilt::sql {

struct FixtureParams {
    int m = 2;
    uint64_t n = 16; // rows per party
    double filter_factor = 0.5;
    uint64_t threshold = 200;
    uint64_t seed = 1;
};

// The dataset's tables point into `schema`; Fixture is movable, not copyable.
struct Fixture {
    std::string name;
    Schema schema;
    std::string query;
    Dataset data;

    Fixture() = default;
    Fixture(Fixture&&) = default;
    Fixture& operator=(Fixture&&) = default;
    Fixture(const Fixture&) = delete;
};

std::vector<std::string> fixture_names();
Fixture fixture(const std::string& name, const FixtureParams& p); // throws on unknown name

} // namespace quilt::sql
