#pragma once
// Information-theoretic MACs on XOR-shared wire masks. Every shared bit x^i
// held by party i carries, for each verifier j, a tag M_j[x^i] satisfying
//   M_j[x^i] = K_j[x^i] XOR x^i * D_j
// where D_j is j's global key and K_j[x^i] a fresh local key. XOR-combining
// shares combines tags and keys linearly, and a public delta = D_j XOR D~_j
// re-bases a tag onto a different global key without touching K (the
// "key switch" that makes soldering two independently-masked circuits cheap).
//
// The dealer here plays the preprocessing functionality: it hands out
// consistent share/tag/key triples derived from a seeded RNG. Parties then
// only ever exchange bits+tags; every verification is a real MAC check, so a
// flipped bit or forged tag is caught with probability 1 - 2^-kappa.

#include "quilt/common.hpp"

#include <cstdint>
#include <vector>

namespace quilt::auth {

// MAC tag / global key: kappa bits, kappa in {64, 128}. hi stays zero at 64.
struct Tag {
    uint64_t lo = 0, hi = 0;

    Tag& operator^=(const Tag& o) {
        lo ^= o.lo;
        hi ^= o.hi;
        return *this;
    }
    friend Tag operator^(Tag a, const Tag& b) { return a ^= b; }
    bool operator==(const Tag&) const = default;
    bool is_zero() const { return lo == 0 && hi == 0; }

    static Tag random(Rng& rng, uint32_t kappa);
};

using TagVec = std::vector<Tag>;

inline Tag mul(uint8_t bit, const Tag& t) { return bit ? t : Tag{}; }

// M XOR x*delta_diff: move a tag from global key D to D XOR delta_diff.
inline Tag keyswitch(const Tag& mac, uint8_t bit, const Tag& delta_diff) {
    return mac ^ mul(bit, delta_diff);
}

inline bool check(const Tag& key, uint8_t bit, const Tag& delta, const Tag& mac) {
    return mac == (key ^ mul(bit, delta));
}

// ---------------------------------------------------------------------------
// A dealing: n authenticated shared random bits. `holders` split the secret
// bits XOR-additively; every party in `verifiers` holds keys for every
// holder's share (holders themselves verify each other, and a unit's parent
// set can be added so the block can later be soldered upward).
// ---------------------------------------------------------------------------

struct Dealing {
    size_t n = 0;
    uint32_t kappa = 128;
    PartySet holders;
    PartySet verifiers;

    struct View {
        std::vector<uint8_t> bits; // holder's shares (empty for pure verifiers)
        std::vector<TagVec> mac;   // holder: mac[j][u], tag for verifier j
        std::vector<TagVec> key;   // verifier: key[i][u], key for holder i's share
    };
    std::vector<View> view; // indexed by party id

    // Dealer-side plaintext of the shared bits. Never transmitted; used by
    // unit evaluation after the per-share MAC checks pass, and by tests.
    std::vector<uint8_t> secret;

    const View& of(int p) const { return view.at(size_t(p)); }
    View& of(int p) { return view.at(size_t(p)); }
};

// delta[p] must be populated for every p in verifiers (the global key that
// party p verifies under for THIS block).
Dealing deal(PartySet holders, PartySet verifiers, const std::vector<Tag>& delta, size_t n,
             Rng& rng, uint32_t kappa);

// Verify holder i's share slice [off, off+len) as verifier j. `bits`/`macs`
// are what i sent (macs = i's tags for verifier j). Returns false and sets
// *bad to the first failing wire offset on mismatch.
bool verify_block(const Dealing& d, int verifier, int holder, const std::vector<uint8_t>& bits,
                  const TagVec& macs, const Tag& delta_verifier, size_t off, size_t len,
                  size_t* bad);

// ---------------------------------------------------------------------------
// Solder shares: re-masking a child unit's output wires (masks lambda_v,
// block `child_out`) onto a parent unit's input wires (masks lambda_u, block
// `parent_in` at offset u_off). Child-set members broadcast switched
// differences b^i = lambda_v^i XOR lambda_u^i; parent-only members broadcast
// their fresh lambda_u^i. XOR of everything maps the child's public masked
// values onto the parent's masking.
// ---------------------------------------------------------------------------

struct EdgeShare {
    int from = -1;
    bool switched = false;     // true: bits are lambda_v^i XOR lambda_u^i
    std::vector<uint8_t> bits;
    std::vector<TagVec> mac;   // mac[j][u] for each verifier j of the parent set
    Tag delta_diff;            // public D_i(child) XOR D~_i(parent); zero if fresh
};

// ddiff[p]: broadcast key differences, indexed by party id; zero for parties
// outside the child set. `verifiers` = parent unit's party set.
EdgeShare make_child_share(int self, const Dealing& child_out, const Dealing& parent_in,
                           size_t u_off, const std::vector<Tag>& ddiff, PartySet verifiers);

EdgeShare make_fresh_share(int self, const Dealing& parent_in, size_t u_off, size_t n,
                           PartySet verifiers);

// MAC-check one received edge share as verifier j (j in the parent set,
// holding delta_parent_j there). Child-set shares verify against the XOR of
// child-output and parent-input keys; fresh shares against parent-input keys
// alone. First failing wire goes to *bad.
bool verify_edge_share(const EdgeShare& s, int verifier, const Dealing& child_out,
                       const Dealing& parent_in, size_t u_off, const Tag& delta_parent_j,
                       size_t* bad);

// b_u = b_v XOR (xor of all broadcast share bits); sizes must agree.
std::vector<uint8_t> combine_edge(const std::vector<uint8_t>& bhat_v,
                                  const std::vector<EdgeShare>& shares);

} // namespace quilt::auth
