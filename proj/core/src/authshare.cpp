#include "quilt/authshare.hpp"

namespace quilt::auth {

Tag Tag::random(Rng& rng, uint32_t kappa) {
    Tag t;
    t.lo = rng.word();
    if (kappa > 64) t.hi = rng.word();
    if (t.lo == 0 && t.hi == 0) t.lo = 1; // global keys must be nonzero
    return t;
}

Dealing deal(PartySet holders, PartySet verifiers, const std::vector<Tag>& delta, size_t n,
             Rng& rng, uint32_t kappa) {
    if (!holders.subset_of(verifiers))
        throw ValidationError("deal: holders must verify each other");
    Dealing d;
    d.n = n;
    d.kappa = kappa;
    d.holders = holders;
    d.verifiers = verifiers;
    size_t maxp = 0;
    for (int p : verifiers.ids()) maxp = std::max(maxp, size_t(p));
    d.view.resize(maxp + 1);
    d.secret.assign(n, 0);

    for (int p : verifiers.ids()) {
        Dealing::View& v = d.view[size_t(p)];
        v.key.resize(maxp + 1);
        if (holders.contains(p)) {
            v.bits.resize(n);
            v.mac.resize(maxp + 1);
        }
    }
    for (int i : holders.ids()) {
        Dealing::View& hv = d.view[size_t(i)];
        for (size_t u = 0; u < n; u++) {
            hv.bits[u] = uint8_t(rng.bit());
            d.secret[u] ^= hv.bits[u];
        }
        for (int j : verifiers.ids()) {
            if (j == i) continue;
            if (size_t(j) >= delta.size())
                throw ValidationError("deal: missing global key for verifier");
            TagVec& keys = d.view[size_t(j)].key[size_t(i)];
            TagVec& macs = hv.mac[size_t(j)];
            keys.resize(n);
            macs.resize(n);
            for (size_t u = 0; u < n; u++) {
                keys[u] = Tag::random(rng, kappa);
                macs[u] = keys[u] ^ mul(hv.bits[u], delta[size_t(j)]);
            }
        }
    }
    return d;
}

bool verify_block(const Dealing& d, int verifier, int holder, const std::vector<uint8_t>& bits,
                  const TagVec& macs, const Tag& delta_verifier, size_t off, size_t len,
                  size_t* bad) {
    const TagVec& keys = d.of(verifier).key.at(size_t(holder));
    for (size_t u = 0; u < len; u++) {
        if (!check(keys[off + u], bits[u], delta_verifier, macs[u])) {
            if (bad) *bad = u;
            return false;
        }
    }
    return true;
}

EdgeShare make_child_share(int self, const Dealing& child_out, const Dealing& parent_in,
                           size_t u_off, const std::vector<Tag>& ddiff, PartySet verifiers) {
    size_t n = child_out.n;
    const Dealing::View& cv = child_out.of(self);
    const Dealing::View& pv = parent_in.of(self);
    EdgeShare s;
    s.from = self;
    s.switched = true;
    s.delta_diff = ddiff.at(size_t(self));
    s.bits.resize(n);
    for (size_t u = 0; u < n; u++) s.bits[u] = cv.bits[u] ^ pv.bits[u_off + u];
    size_t maxp = 0;
    for (int j : verifiers.ids()) maxp = std::max(maxp, size_t(j));
    s.mac.resize(maxp + 1);
    for (int j : verifiers.ids()) {
        if (j == self) continue;
        const TagVec& mv = cv.mac.at(size_t(j));
        const TagVec& mu = pv.mac.at(size_t(j));
        TagVec& out = s.mac[size_t(j)];
        out.resize(n);
        // switch the child-wire tag onto the parent's global key, then fold
        // in the fresh-wire tag; K_j is untouched on j's side
        for (size_t u = 0; u < n; u++)
            out[u] = keyswitch(mv[u], cv.bits[u], ddiff.at(size_t(j))) ^ mu[u_off + u];
    }
    return s;
}

EdgeShare make_fresh_share(int self, const Dealing& parent_in, size_t u_off, size_t n,
                           PartySet verifiers) {
    const Dealing::View& pv = parent_in.of(self);
    EdgeShare s;
    s.from = self;
    s.switched = false;
    s.bits.assign(pv.bits.begin() + long(u_off), pv.bits.begin() + long(u_off + n));
    size_t maxp = 0;
    for (int j : verifiers.ids()) maxp = std::max(maxp, size_t(j));
    s.mac.resize(maxp + 1);
    for (int j : verifiers.ids()) {
        if (j == self) continue;
        const TagVec& mu = pv.mac.at(size_t(j));
        s.mac[size_t(j)].assign(mu.begin() + long(u_off), mu.begin() + long(u_off + n));
    }
    return s;
}

bool verify_edge_share(const EdgeShare& s, int verifier, const Dealing& child_out,
                       const Dealing& parent_in, size_t u_off, const Tag& delta_parent_j,
                       size_t* bad) {
    size_t n = s.bits.size();
    const TagVec& macs = s.mac.at(size_t(verifier));
    const TagVec& ku = parent_in.of(verifier).key.at(size_t(s.from));
    const TagVec* kv = s.switched ? &child_out.of(verifier).key.at(size_t(s.from)) : nullptr;
    for (size_t u = 0; u < n; u++) {
        Tag key = ku[u_off + u];
        if (kv) key ^= (*kv)[u];
        if (!check(key, s.bits[u], delta_parent_j, macs[u])) {
            if (bad) *bad = u;
            return false;
        }
    }
    return true;
}

std::vector<uint8_t> combine_edge(const std::vector<uint8_t>& bhat_v,
                                  const std::vector<EdgeShare>& shares) {
    std::vector<uint8_t> out = bhat_v;
    for (const EdgeShare& s : shares) {
        if (s.bits.size() != out.size()) throw ValidationError("combine_edge: width mismatch");
        for (size_t u = 0; u < out.size(); u++) out[u] ^= s.bits[u];
    }
    return out;
}

} // namespace quilt::auth
