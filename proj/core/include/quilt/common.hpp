#pragma once
// Shared basics: party sets, arbitrary-width unsigned values, seeded RNG,
// error types, and a stable 64-bit hash used for plan fingerprints.

#include <cstdint>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace quilt {

using Wire = uint32_t;

// ---------------------------------------------------------------------------
// Errors. Everything user-triggerable throws one of these; protocol aborts
// carry provenance (which unit / edge / check failed) in AbortError.
// ---------------------------------------------------------------------------

struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

struct ParseError : Error {
    using Error::Error;
};
struct ValidationError : Error {
    using Error::Error;
};
// Deliberately unsupported SQL constructs (UDFs, regex, substring, ...).
struct UnsupportedError : Error {
    using Error::Error;
};

struct AbortInfo {
    std::string reason;   // "mac-mismatch", "ver-failed", "echo-mismatch", ...
    int unit = -1;        // plan unit id where the failure was detected
    int edge = -1;        // solder edge / input slot index, -1 if n/a
    int detected_by = -1; // party id (0-based) that raised the abort
    int accused = -1;     // sender whose message failed the check, -1 if n/a
    std::string detail;

    std::string str() const;
};

struct AbortError : Error {
    AbortInfo info;
    explicit AbortError(AbortInfo i) : Error("protocol abort: " + i.str()), info(std::move(i)) {}
};

// ---------------------------------------------------------------------------
// PartySet: small set of party ids (0-based internally; printed 1-based to
// match P1..Pm naming everywhere user-facing). Bitmask, parties < 32.
// ---------------------------------------------------------------------------

struct PartySet {
    uint32_t mask = 0;

    static PartySet range(int m) {
        PartySet s;
        s.mask = (m >= 32) ? ~0u : ((1u << m) - 1u);
        return s;
    }
    static PartySet of(std::initializer_list<int> ids) {
        PartySet s;
        for (int i : ids) s.add(i);
        return s;
    }

    void add(int i) { mask |= (1u << i); }
    bool contains(int i) const { return (mask >> i) & 1u; }
    int count() const { return __builtin_popcount(mask); }
    bool empty() const { return mask == 0; }
    bool subset_of(const PartySet& o) const { return (mask & ~o.mask) == 0; }
    PartySet unite(const PartySet& o) const { return PartySet{mask | o.mask}; }
    PartySet minus(const PartySet& o) const { return PartySet{mask & ~o.mask}; }
    bool operator==(const PartySet& o) const = default;

    // Lowest-indexed member; by convention the evaluator of a unit.
    int lowest() const { return mask ? __builtin_ctz(mask) : -1; }

    std::vector<int> ids() const {
        std::vector<int> v;
        for (int i = 0; i < 32; i++)
            if (contains(i)) v.push_back(i);
        return v;
    }

    std::string str() const; // "1,3,4" (1-based)
};

// ---------------------------------------------------------------------------
// Value: unsigned integer of arbitrary width, little-endian 64-bit words,
// normalized (no trailing zero words; empty vector = 0). Wide enough for the
// 256-bit hash columns; cheap for the common <= 64-bit case.
// ---------------------------------------------------------------------------

struct Value {
    std::vector<uint64_t> w;

    Value() = default;
    static Value of(uint64_t v) {
        Value x;
        if (v) x.w.push_back(v);
        return x;
    }

    void normalize() {
        while (!w.empty() && w.back() == 0) w.pop_back();
    }
    bool is_zero() const { return w.empty(); }
    bool fits_u64() const { return w.size() <= 1; }
    uint64_t as_u64() const { return w.empty() ? 0 : w[0]; }

    bool bit(uint32_t i) const {
        size_t word = i >> 6;
        return word < w.size() && ((w[word] >> (i & 63)) & 1);
    }
    void set_bit(uint32_t i, bool v) {
        size_t word = i >> 6;
        if (word >= w.size()) {
            if (!v) return;
            w.resize(word + 1, 0);
        }
        if (v)
            w[word] |= (uint64_t(1) << (i & 63));
        else
            w[word] &= ~(uint64_t(1) << (i & 63));
        normalize();
    }

    // Number of significant bits (0 for value 0).
    uint32_t bit_width() const {
        if (w.empty()) return 0;
        return uint32_t(64 * (w.size() - 1) + 64 - __builtin_clzll(w.back()));
    }

    static int cmp(const Value& a, const Value& b); // -1/0/1
    bool operator==(const Value& o) const { return cmp(*this, o) == 0; }
    bool operator<(const Value& o) const { return cmp(*this, o) < 0; }

    static Value add(const Value& a, const Value& b);
    static Value sub(const Value& a, const Value& b); // requires a >= b
    // Bitwise complement within `width` bits.
    static Value complement(const Value& a, uint32_t width);

    static Value from_decimal(const std::string& s); // throws ParseError
    std::string to_decimal() const;

    // Bit (de)serialization, LSB first, exactly `width` bits.
    std::vector<uint8_t> to_bits(uint32_t width) const; // throws if value >= 2^width
    static Value from_bits(const uint8_t* bits, uint32_t width);
};

// ---------------------------------------------------------------------------
// Seeded RNG. mt19937_64 everywhere so runs are reproducible from one seed.
// ---------------------------------------------------------------------------

class Rng {
public:
    explicit Rng(uint64_t seed) : s_(seed ? seed : 0x9e3779b97f4a7c15ull) {}

    uint64_t word() {
        // splitmix64; small, fast, and we never need cryptographic strength here
        // (the dealer is a stand-in; see engine notes).
        uint64_t z = (s_ += 0x9e3779b97f4a7c15ull);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }
    bool bit() { return word() & 1; }
    // Uniform in [0, n), n >= 1.
    uint64_t below(uint64_t n) {
        // rejection sampling to stay unbiased
        uint64_t lim = ~uint64_t(0) - (~uint64_t(0) % n);
        uint64_t v;
        do {
            v = word();
        } while (v >= lim);
        return v % n;
    }
    uint64_t range(uint64_t lo, uint64_t hi) { return lo + below(hi - lo + 1); } // inclusive
    double real() { return double(word() >> 11) * (1.0 / 9007199254740992.0); } // [0,1)

    // Derive an independent stream (party/unit subseeds).
    Rng fork(uint64_t salt) {
        return Rng(word() ^ (salt * 0x9e3779b97f4a7c15ull) ^ 0xd1b54a32d192ed03ull);
    }

private:
    uint64_t s_;
};

// ---------------------------------------------------------------------------
// FNV-1a, used for plan-document fingerprints and transcript echo checks.
// ---------------------------------------------------------------------------

inline uint64_t fnv1a(const void* data, size_t n, uint64_t h = 0xcbf29ce484222325ull) {
    const uint8_t* p = static_cast<const uint8_t*>(data);
    for (size_t i = 0; i < n; i++) {
        h ^= p[i];
        h *= 0x100000001b3ull;
    }
    return h;
}
inline uint64_t fnv1a(const std::string& s, uint64_t h = 0xcbf29ce484222325ull) {
    return fnv1a(s.data(), s.size(), h);
}

std::string hex64(uint64_t v);

} // namespace quilt
