#include "quilt/engine.hpp"

#include <algorithm>
#include <cstring>
#include <thread>

namespace quilt::eng {

using auth::Tag;
using net::Frame;

// --- payload packing -------------------------------------------------------

static void put_u32(std::vector<uint8_t>& v, uint32_t x) {
    for (int i = 0; i < 4; i++) v.push_back(uint8_t(x >> (8 * i)));
}

static uint32_t get_u32(const std::vector<uint8_t>& v, size_t& at) {
    if (at + 4 > v.size()) throw ParseError("frame payload truncated");
    uint32_t x = 0;
    for (int i = 0; i < 4; i++) x |= uint32_t(v[at + size_t(i)]) << (8 * i);
    at += 4;
    return x;
}

static void put_u64(std::vector<uint8_t>& v, uint64_t x) {
    for (int i = 0; i < 8; i++) v.push_back(uint8_t(x >> (8 * i)));
}

static uint64_t get_u64(const std::vector<uint8_t>& v, size_t& at) {
    if (at + 8 > v.size()) throw ParseError("frame payload truncated");
    uint64_t x = 0;
    for (int i = 0; i < 8; i++) x |= uint64_t(v[at + size_t(i)]) << (8 * i);
    at += 8;
    return x;
}

static void put_tag(std::vector<uint8_t>& v, const Tag& t) {
    put_u64(v, t.lo);
    put_u64(v, t.hi);
}

static Tag get_tag(const std::vector<uint8_t>& v, size_t& at) {
    Tag t;
    t.lo = get_u64(v, at);
    t.hi = get_u64(v, at);
    return t;
}

// Bits travel packed, LSB-first within each byte.
static void put_bits(std::vector<uint8_t>& v, const uint8_t* bits, size_t n) {
    size_t base = v.size();
    v.resize(base + (n + 7) / 8, 0);
    for (size_t i = 0; i < n; i++)
        if (bits[i] & 1) v[base + i / 8] |= uint8_t(1u << (i % 8));
}

static std::vector<uint8_t> get_bits(const std::vector<uint8_t>& v, size_t& at, size_t n) {
    size_t nb = (n + 7) / 8;
    if (at + nb > v.size()) throw ParseError("frame payload truncated");
    std::vector<uint8_t> bits(n);
    for (size_t i = 0; i < n; i++) bits[i] = (v[at + i / 8] >> (i % 8)) & 1;
    at += nb;
    return bits;
}

static void put_str(std::vector<uint8_t>& v, const std::string& s) {
    put_u32(v, uint32_t(s.size()));
    v.insert(v.end(), s.begin(), s.end());
}

static std::string get_str(const std::vector<uint8_t>& v, size_t& at) {
    uint32_t n = get_u32(v, at);
    if (at + n > v.size()) throw ParseError("frame payload truncated");
    std::string s(v.begin() + long(at), v.begin() + long(at + n));
    at += n;
    return s;
}

static std::vector<uint8_t> encode_abort(const AbortInfo& ai) {
    std::vector<uint8_t> v;
    put_str(v, ai.reason);
    put_u32(v, uint32_t(ai.unit));
    put_u32(v, uint32_t(ai.edge));
    put_u32(v, uint32_t(ai.detected_by));
    put_u32(v, uint32_t(ai.accused));
    put_str(v, ai.detail);
    return v;
}

static AbortInfo decode_abort(const std::vector<uint8_t>& v) {
    AbortInfo ai;
    try {
        size_t at = 0;
        ai.reason = get_str(v, at);
        ai.unit = int(get_u32(v, at));
        ai.edge = int(get_u32(v, at));
        ai.detected_by = int(get_u32(v, at));
        ai.accused = int(get_u32(v, at));
        ai.detail = get_str(v, at);
    } catch (const ParseError&) {
        ai = {};
        ai.reason = "abort-garbled";
        ai.detail = "abort notification failed to parse";
    }
    return ai;
}

// --- context plumbing ------------------------------------------------------

void PartyCtx::charge(uint64_t bytes) {
    if (cur_unit >= 0 && size_t(cur_unit) < unit_sent.size()) unit_sent[size_t(cur_unit)] += bytes;
}

void PartyCtx::round() {
    if (cur_unit >= 0 && size_t(cur_unit) < unit_rounds.size()) unit_rounds[size_t(cur_unit)]++;
}

// units charges the latency lane with the logical masked-bit volume; the
// payload (MACs included) is what the byte counters see.
static void send_to(PartyCtx& cx, int to, const char* kind, std::vector<uint8_t> payload,
                    uint64_t units, net::Phase phase = net::Phase::Online, uint32_t ub = 0) {
    Frame f;
    f.from = cx.self;
    f.to = to;
    f.kind = kind;
    f.payload = std::move(payload);
    f.units = units;
    f.unit_bytes = ub;
    f.phase = phase;
    cx.charge(f.charged_bytes());
    cx.tr->send(std::move(f));
}

static void notify_abort(PartyCtx& cx, const AbortInfo& ai) {
    if (cx.abort_notified) return;
    cx.abort_notified = true;
    std::vector<uint8_t> pl = encode_abort(ai);
    for (int q = 0; q < cx.tr->m(); q++) {
        if (q == cx.self) continue;
        try {
            send_to(cx, q, "abort", pl, 1);
        } catch (const Error&) {
            // peer already gone; everyone reachable still gets notified
        }
    }
}

void raise_abort(PartyCtx& cx, AbortInfo info) {
    if (info.detected_by < 0) info.detected_by = cx.self;
    notify_abort(cx, info);
    throw AbortError(std::move(info));
}

// Receive the next frame from `from`, re-raising a received abort (after
// passing it on, so parties blocked on us unblock too) and aborting on any
// out-of-schedule kind.
static Frame expect(PartyCtx& cx, int from, const char* kind) {
    Frame f = cx.tr->recv(cx.self, from);
    if (f.kind == "abort") {
        AbortInfo ai = decode_abort(f.payload);
        notify_abort(cx, ai);
        throw AbortError(std::move(ai));
    }
    if (f.kind != kind) {
        AbortInfo ai;
        ai.reason = "unexpected-frame";
        ai.unit = cx.cur_unit;
        ai.accused = from;
        ai.detail = "wanted " + std::string(kind) + ", got " + f.kind;
        raise_abort(cx, std::move(ai));
    }
    return f;
}

static int label_edge(const std::string& label) {
    if (label.size() >= 3 && label[0] == 'i' && label[1] == 'n' && isdigit(label[2]))
        return label[2] - '0';
    return -1;
}

// --- dealer setup ----------------------------------------------------------

GarbledUnit garble_unit(const circ::Circuit& c, PartySet parties, Rng& rng, uint32_t kappa,
                        PartySet out_verifiers, const std::vector<Tag>* parent_delta) {
    if (parties.count() < 2) throw ValidationError("garble: a unit needs at least two parties");
    if (out_verifiers.mask == 0) out_verifiers = parties;
    PartySet over{parties.mask | out_verifiers.mask};

    GarbledUnit g;
    g.parties = parties;
    g.circ = &c;
    size_t maxp = 0;
    for (int p : over.ids()) maxp = std::max(maxp, size_t(p));
    g.delta.assign(maxp + 1, Tag{});
    for (int p : parties.ids()) g.delta[size_t(p)] = Tag::random(rng, kappa);

    g.lam_in = auth::deal(parties, parties, g.delta, c.input_bits(), rng, kappa);

    // parent-only verifiers of the output masks hold keys under the parent
    // unit's deltas, so soldering only re-bases the members both units share
    std::vector<Tag> dv = g.delta;
    for (int q : out_verifiers.ids()) {
        if (parties.contains(q)) continue;
        if (!parent_delta || size_t(q) >= parent_delta->size() ||
            (*parent_delta)[size_t(q)].is_zero())
            throw ValidationError("garble: no parent key for P" + std::to_string(q + 1));
        dv[size_t(q)] = (*parent_delta)[size_t(q)];
    }
    size_t wout = c.outputs.empty() ? 0 : c.outputs[0].wires.size();
    g.lam_out = auth::deal(parties, over, dv, wout, rng, kappa);

    size_t at = 0;
    for (const circ::InputGroup& ig : c.inputs) {
        g.in_off.push_back(at);
        at += ig.bundle.wires.size();
    }
    return g;
}

Setup make_setup(const plan::Plan& p, uint64_t seed, uint32_t kappa) {
    if (p.units.empty() || p.root < 0) throw ValidationError("setup: plan has no units");
    std::vector<int> parent(p.units.size(), -1);
    for (size_t u = 0; u < p.units.size(); u++)
        for (int k : p.units[u].kids) parent[size_t(k)] = int(u);

    Rng rng(seed);
    Setup s;
    s.kappa = kappa;
    s.units.resize(p.units.size());
    for (size_t u = 0; u < p.units.size(); u++) {
        int pu = parent[u];
        if (pu >= int(u)) throw ValidationError("setup: units not in root-first order");
        const plan::Unit& un = p.units[u];
        PartySet ov = pu >= 0 ? p.units[size_t(pu)].parties : un.parties;
        const std::vector<Tag>* pd = pu >= 0 ? &s.units[size_t(pu)].delta : nullptr;
        s.units[u] = garble_unit(un.circ, un.parties, rng, kappa, ov, pd);
        s.units[u].unit = int(u);
    }
    return s;
}

// --- evaluation backend ----------------------------------------------------

EvalBackend::Result DealerBackend::eval(const GarbledUnit& gu,
                                        const std::vector<uint8_t>& bhat_in) {
    const circ::Circuit& c = *gu.circ;
    if (bhat_in.size() != gu.lam_in.n) throw ValidationError("backend: masked input width");
    // sealed boundary: everything below this line sees cleartext wires, and
    // only masked bits leave through Result
    circ::Evaluator ev(c);
    size_t at = 0;
    for (size_t g = 0; g < c.inputs.size(); g++) {
        size_t w = c.inputs[g].bundle.wires.size();
        circ::Bits b(w);
        for (size_t i = 0; i < w; i++) b[i] = bhat_in[at + i] ^ gu.lam_in.secret[at + i];
        ev.set_input(g, b);
        at += w;
    }
    ev.run();
    Result r;
    for (size_t i = 0; i < c.ver_wires.size(); i++)
        if (!ev.bit(c.ver_wires[i])) {
            r.bad_ver = int(i);
            return r;
        }
    circ::Bits out = ev.get(c.outputs[0]);
    r.bhat_out.resize(out.size());
    for (size_t i = 0; i < out.size(); i++) r.bhat_out[i] = out[i] ^ gu.lam_out.secret[i];
    return r;
}

// --- input injection -------------------------------------------------------

std::vector<uint8_t> inject_input(PartyCtx& cx, const GarbledUnit& gu, size_t slot, int owner,
                                  const circ::Bits* plain) {
    const circ::Circuit& c = *gu.circ;
    if (slot >= c.inputs.size()) throw ValidationError("inject: no such input slot");
    if (!gu.parties.contains(owner))
        throw ValidationError("inject: P" + std::to_string(owner + 1) +
                              " is not a member of the unit");
    if ((cx.self == owner) != (plain != nullptr))
        throw ValidationError("inject: plaintext must come from the owner alone");
    size_t off = gu.in_off.at(slot);
    size_t w = c.inputs[slot].bundle.wires.size();
    auto ids = gu.parties.ids();

    // mask reveal: everyone hands the owner their share of lambda, MAC'd
    if (cx.self != owner) {
        const auth::Dealing::View& v = gu.lam_in.of(cx.self);
        std::vector<uint8_t> pl;
        put_bits(pl, v.bits.data() + off, w);
        for (size_t i = 0; i < w; i++) put_tag(pl, v.mac.at(size_t(owner))[off + i]);
        send_to(cx, owner, "lam", std::move(pl), w);
    }
    cx.round();

    std::vector<uint8_t> bhat;
    if (cx.self == owner) {
        if (plain->size() != w) throw ValidationError("inject: plaintext width mismatch");
        const auth::Dealing::View& mine = gu.lam_in.of(cx.self);
        std::vector<uint8_t> lam(mine.bits.begin() + long(off), mine.bits.begin() + long(off + w));
        for (int j : ids) {
            if (j == owner) continue;
            Frame f = expect(cx, j, "lam");
            size_t at = 0;
            std::vector<uint8_t> jb;
            auth::TagVec jm(w);
            try {
                jb = get_bits(f.payload, at, w);
                for (size_t i = 0; i < w; i++) jm[i] = get_tag(f.payload, at);
            } catch (const ParseError&) {
                AbortInfo ai;
                ai.reason = "malformed-frame";
                ai.unit = gu.unit;
                ai.edge = int(slot);
                ai.accused = j;
                ai.detail = "mask reveal";
                raise_abort(cx, std::move(ai));
            }
            size_t bad = 0;
            if (!auth::verify_block(gu.lam_in, owner, j, jb, jm, gu.delta[size_t(owner)], off, w,
                                    &bad)) {
                AbortInfo ai;
                ai.reason = "mac-mismatch";
                ai.unit = gu.unit;
                ai.edge = int(slot);
                ai.accused = j;
                ai.detail = "mask reveal, wire " + std::to_string(bad);
                raise_abort(cx, std::move(ai));
            }
            for (size_t i = 0; i < w; i++) lam[i] ^= jb[i];
        }
        bhat.resize(w);
        for (size_t i = 0; i < w; i++) bhat[i] = ((*plain)[i] ^ lam[i]) & 1;
        std::vector<uint8_t> pl;
        put_bits(pl, bhat.data(), w);
        for (int j : ids)
            if (j != owner) send_to(cx, j, "bhat", pl, w);
    } else {
        Frame f = expect(cx, owner, "bhat");
        size_t at = 0;
        try {
            bhat = get_bits(f.payload, at, w);
        } catch (const ParseError&) {
            AbortInfo ai;
            ai.reason = "malformed-frame";
            ai.unit = gu.unit;
            ai.edge = int(slot);
            ai.accused = owner;
            ai.detail = "masked input broadcast";
            raise_abort(cx, std::move(ai));
        }
    }
    cx.round();
    cx.echo_buf.push_back(0x01);
    put_bits(cx.echo_buf, bhat.data(), w);
    return bhat;
}

// --- soldering -------------------------------------------------------------

// Phase 1: the child's evaluator hands the child's public masked outputs to
// the parent-only members.
static std::vector<uint8_t> solder_relay(PartyCtx& cx, const GarbledUnit& child,
                                         const GarbledUnit& parent,
                                         const std::vector<uint8_t>& bhat_child, bool send_only) {
    size_t w = child.lam_out.n;
    int ec = child.parties.lowest();
    if (child.parties.contains(cx.self)) {
        if (bhat_child.size() != w) throw ValidationError("solder: child output width mismatch");
        if (cx.self == ec) {
            std::vector<uint8_t> pl;
            put_bits(pl, bhat_child.data(), w);
            for (int j : parent.parties.ids())
                if (!child.parties.contains(j)) send_to(cx, j, "brel", pl, w);
        }
        return bhat_child;
    }
    if (send_only) return {};
    Frame f = expect(cx, ec, "brel");
    size_t at = 0;
    try {
        return get_bits(f.payload, at, w);
    } catch (const ParseError&) {
        AbortInfo ai;
        ai.reason = "malformed-frame";
        ai.unit = parent.unit;
        ai.accused = ec;
        ai.detail = "child output relay";
        raise_abort(cx, std::move(ai));
    }
}

static std::vector<uint8_t> encode_share(const auth::EdgeShare& s, PartySet verifiers, size_t w) {
    std::vector<uint8_t> pl;
    pl.push_back(s.switched ? 1 : 0);
    put_tag(pl, s.delta_diff);
    put_bits(pl, s.bits.data(), w);
    for (int j : verifiers.ids()) {
        if (j == s.from) continue;
        const auth::TagVec& m = s.mac.at(size_t(j));
        for (size_t i = 0; i < w; i++) put_tag(pl, m[i]);
    }
    return pl;
}

static auth::EdgeShare decode_share(const std::vector<uint8_t>& pl, int from, PartySet verifiers,
                                    size_t w) {
    size_t at = 0;
    if (pl.empty()) throw ParseError("empty share");
    auth::EdgeShare s;
    s.from = from;
    s.switched = pl[at++] != 0;
    s.delta_diff = get_tag(pl, at);
    s.bits = get_bits(pl, at, w);
    size_t maxp = 0;
    for (int j : verifiers.ids()) maxp = std::max(maxp, size_t(j));
    s.mac.resize(maxp + 1);
    for (int j : verifiers.ids()) {
        if (j == from) continue;
        auth::TagVec& m = s.mac[size_t(j)];
        m.resize(w);
        for (size_t i = 0; i < w; i++) m[i] = get_tag(pl, at);
    }
    if (at != pl.size()) throw ParseError("share payload overlong");
    return s;
}

// Phase 2: every parent member broadcasts its share (switched for child
// members, fresh otherwise), MAC-checks all received ones, and combines.
static std::vector<uint8_t> solder_shares(PartyCtx& cx, const GarbledUnit& child,
                                          const GarbledUnit& parent, size_t slot,
                                          const std::vector<uint8_t>& bv) {
    const PartySet S = parent.parties;
    size_t w = child.lam_out.n;
    size_t off = parent.in_off.at(slot);
    if (parent.circ->inputs[slot].bundle.wires.size() != w)
        throw ValidationError("solder: slot width mismatch");

    auth::EdgeShare mine;
    if (child.parties.contains(cx.self)) {
        size_t maxp = std::max(child.delta.size(), parent.delta.size());
        std::vector<Tag> ddiff(maxp, Tag{});
        for (int q : child.parties.ids())
            ddiff[size_t(q)] = child.delta[size_t(q)] ^ parent.delta[size_t(q)];
        mine = auth::make_child_share(cx.self, child.lam_out, parent.lam_in, off, ddiff, S);
    } else {
        mine = auth::make_fresh_share(cx.self, parent.lam_in, off, w, S);
    }

    auto ids = S.ids();
    std::vector<std::vector<uint8_t>> payloads(ids.size());
    for (size_t r = 0; r < ids.size(); r++)
        if (ids[r] == cx.self) payloads[r] = encode_share(mine, S, w);
    for (size_t r = 0; r < ids.size(); r++)
        if (ids[r] != cx.self) send_to(cx, ids[r], "sold", payloads[rank_of(ids, cx.self)], w);

    std::vector<auth::EdgeShare> shares(ids.size());
    for (size_t r = 0; r < ids.size(); r++) {
        if (ids[r] == cx.self) {
            shares[r] = mine;
            continue;
        }
        Frame f = expect(cx, ids[r], "sold");
        payloads[r] = f.payload;
        try {
            shares[r] = decode_share(f.payload, ids[r], S, w);
        } catch (const ParseError&) {
            AbortInfo ai;
            ai.reason = "malformed-frame";
            ai.unit = parent.unit;
            ai.edge = int(slot);
            ai.accused = ids[r];
            ai.detail = "solder share";
            raise_abort(cx, std::move(ai));
        }
        size_t bad = 0;
        if (!auth::verify_edge_share(shares[r], cx.self, child.lam_out, parent.lam_in, off,
                                     parent.delta[size_t(cx.self)], &bad)) {
            AbortInfo ai;
            ai.reason = "mac-mismatch";
            ai.unit = parent.unit;
            ai.edge = int(slot);
            ai.accused = ids[r];
            ai.detail = "solder share, wire " + std::to_string(bad);
            raise_abort(cx, std::move(ai));
        }
    }

    cx.echo_buf.push_back(0x02);
    put_bits(cx.echo_buf, bv.data(), w);
    for (size_t r = 0; r < ids.size(); r++)
        cx.echo_buf.insert(cx.echo_buf.end(), payloads[r].begin(), payloads[r].end());

    return auth::combine_edge(bv, shares);
}

std::vector<uint8_t> solder_edge(PartyCtx& cx, const GarbledUnit& child, const GarbledUnit& parent,
                                 size_t slot, const std::vector<uint8_t>& bhat_child) {
    if (!PartySet{child.parties.mask & ~parent.parties.mask}.mask == 0)
        throw ValidationError("solder: child parties must be a subset of the parent's");
    std::vector<uint8_t> bv = solder_relay(cx, child, parent, bhat_child, false);
    cx.round();
    std::vector<uint8_t> out = solder_shares(cx, child, parent, slot, bv);
    cx.round();
    return out;
}

// --- unit evaluation -------------------------------------------------------

std::vector<uint8_t> eval_unit(PartyCtx& cx, const GarbledUnit& gu,
                               const std::vector<uint8_t>& bhat_in) {
    int e = gu.parties.lowest();
    size_t wout = gu.lam_out.n;
    std::vector<uint8_t> bout;
    if (cx.self == e) {
        EvalBackend::Result r = cx.backend->eval(gu, bhat_in);
        cx.tr->compute(e, (gu.parties.count() - 1) * gu.circ->and_count(), net::Phase::Online);
        if (r.bad_ver >= 0) {
            const std::string& label = gu.circ->ver_labels[size_t(r.bad_ver)];
            AbortInfo ai;
            ai.reason = "ver-failed";
            ai.unit = gu.unit;
            ai.edge = label_edge(label);
            ai.detected_by = e;
            ai.detail = label;
            raise_abort(cx, std::move(ai));
        }
        bout = std::move(r.bhat_out);
        std::vector<uint8_t> pl;
        put_bits(pl, bout.data(), wout);
        for (int j : gu.parties.ids())
            if (j != e) send_to(cx, j, "bout", pl, wout);
    } else {
        Frame f = expect(cx, e, "bout");
        size_t at = 0;
        try {
            bout = get_bits(f.payload, at, wout);
        } catch (const ParseError&) {
            AbortInfo ai;
            ai.reason = "malformed-frame";
            ai.unit = gu.unit;
            ai.accused = e;
            ai.detail = "masked output broadcast";
            raise_abort(cx, std::move(ai));
        }
    }
    cx.round();

    // transcript echo: everyone must have seen the same public bytes before
    // the outputs move on
    cx.echo_buf.push_back(0x03);
    put_bits(cx.echo_buf, bout.data(), wout);
    uint64_t h = fnv1a(cx.echo_buf.data(), cx.echo_buf.size());
    std::vector<uint8_t> pl;
    put_u64(pl, h);
    for (int j : gu.parties.ids())
        if (j != cx.self) send_to(cx, j, "echo", pl, 1);
    for (int j : gu.parties.ids()) {
        if (j == cx.self) continue;
        Frame f = expect(cx, j, "echo");
        size_t at = 0;
        uint64_t hj = 0;
        try {
            hj = get_u64(f.payload, at);
        } catch (const ParseError&) {
            hj = ~h;
        }
        if (hj != h) {
            AbortInfo ai;
            ai.reason = "echo-mismatch";
            ai.unit = gu.unit;
            ai.detected_by = cx.self;
            ai.detail = "unit transcript hash from P" + std::to_string(j + 1) + " differs";
            raise_abort(cx, std::move(ai));
        }
    }
    cx.round();
    cx.echo_buf.clear();
    return bout;
}

// --- output revelation -----------------------------------------------------

circ::Bits reveal_outputs(PartyCtx& cx, const GarbledUnit& gu,
                          const std::vector<uint8_t>& bhat_out) {
    size_t w = gu.lam_out.n;
    if (bhat_out.size() != w) throw ValidationError("reveal: masked output width mismatch");
    const auth::Dealing::View& mine = gu.lam_out.of(cx.self);
    for (int j : gu.parties.ids()) {
        if (j == cx.self) continue;
        std::vector<uint8_t> pl;
        put_bits(pl, mine.bits.data(), w);
        for (size_t i = 0; i < w; i++) put_tag(pl, mine.mac.at(size_t(j))[i]);
        send_to(cx, j, "orev", std::move(pl), w);
    }
    std::vector<uint8_t> lam(mine.bits);
    for (int j : gu.parties.ids()) {
        if (j == cx.self) continue;
        Frame f = expect(cx, j, "orev");
        size_t at = 0;
        std::vector<uint8_t> jb;
        auth::TagVec jm(w);
        try {
            jb = get_bits(f.payload, at, w);
            for (size_t i = 0; i < w; i++) jm[i] = get_tag(f.payload, at);
        } catch (const ParseError&) {
            AbortInfo ai;
            ai.reason = "malformed-frame";
            ai.unit = gu.unit;
            ai.accused = j;
            ai.detail = "output reveal";
            raise_abort(cx, std::move(ai));
        }
        size_t bad = 0;
        if (!auth::verify_block(gu.lam_out, cx.self, j, jb, jm, gu.delta[size_t(cx.self)], 0, w,
                                &bad)) {
            AbortInfo ai;
            ai.reason = "mac-mismatch";
            ai.unit = gu.unit;
            ai.detected_by = cx.self;
            ai.accused = j;
            ai.detail = "output reveal, wire " + std::to_string(bad);
            raise_abort(cx, std::move(ai));
        }
        for (size_t i = 0; i < w; i++) lam[i] ^= jb[i];
    }
    cx.round();
    circ::Bits out(w);
    for (size_t i = 0; i < w; i++) out[i] = (bhat_out[i] ^ lam[i]) & 1;
    return out;
}

// --- tree driver -----------------------------------------------------------

static RunMetrics party_metrics(const plan::Plan& p, const PartyCtx& cx, net::Transport& tr) {
    RunMetrics m;
    m.m = tr.m();
    for (size_t u = 0; u < p.units.size(); u++) {
        RunMetrics::UnitRow r;
        r.id = p.units[u].id;
        r.parties = p.units[u].parties;
        r.time = cx.unit_time[u];
        r.bytes = cx.unit_sent[u];
        r.rounds = cx.unit_rounds[u];
        m.units.push_back(std::move(r));
    }
    m.chan.assign(size_t(m.m), std::vector<net::ChannelStats>(size_t(m.m)));
    for (int i = 0; i < m.m; i++)
        for (int j = 0; j < m.m; j++)
            if (i != j) m.chan[size_t(i)][size_t(j)] = tr.stats(i, j);
    m.total_bytes = tr.total_bytes();
    m.total_frames = tr.total_frames();
    m.online_time = tr.max_clock();
    if (auto* sim = dynamic_cast<net::SimTransport*>(&tr))
        for (int q = 0; q < m.m; q++) m.offline_time = std::max(m.offline_time, sim->offline_clock(q));
    return m;
}

RunResult run_tree_party(const plan::Plan& p, const Setup& setup, int self,
                         const circ::Bits& bits, net::Transport& tr, const RunOptions& opt) {
    if (setup.units.size() != p.units.size())
        throw ValidationError("run: setup does not match the plan");
    DealerBackend dealer;
    PartyCtx cx;
    cx.self = self;
    cx.tr = &tr;
    cx.backend = opt.backend ? opt.backend : &dealer;
    size_t nu = p.units.size();
    cx.unit_sent.assign(nu, 0);
    cx.unit_rounds.assign(nu, 0);
    cx.unit_time.assign(nu, 0);

    // offline: synthetic preprocessing traffic with the real message pattern —
    // pairwise AND-triple volume, garbled tables to the evaluator, and the
    // per-party symmetric work — so clocks and byte counters see the phase
    uint32_t kb = setup.kappa / 8;
    for (size_t u = 0; u < nu; u++) {
        const plan::Unit& un = p.units[u];
        if (!un.parties.contains(self)) continue;
        cx.cur_unit = int(u);
        uint64_t ands = un.circ.and_count();
        int e = un.parties.lowest();
        for (int j : un.parties.ids())
            if (j != self)
                send_to(cx, j, "off", {}, ands, net::Phase::Offline, kb);
        for (int j : un.parties.ids())
            if (j != self) expect(cx, j, "off");
        if (self != e) {
            send_to(cx, e, "off", {}, ands, net::Phase::Offline, 4 * kb);
        } else {
            for (int j : un.parties.ids())
                if (j != e) expect(cx, j, "off");
        }
        tr.compute(self, 4 * ands, net::Phase::Offline);
    }

    // online, children before parents (unit ids are preorder from the root)
    std::vector<std::vector<uint8_t>> bout(nu);
    for (size_t k = nu; k-- > 0;) {
        const plan::Unit& un = p.units[k];
        bool member = un.parties.contains(self);
        if (!opt.parallel) tr.barrier(PartySet::range(tr.m()), true);
        if (!member) continue;
        cx.cur_unit = int(k);
        cx.echo_buf.clear();
        tr.barrier(un.parties, false);
        double t0 = tr.clock(self);
        const GarbledUnit& gu = setup.units[k];

        std::vector<int> solder_slots;
        for (const circ::InputGroup& g : un.circ.inputs)
            if (g.owner.kind == circ::Owner::Kind::Solder) solder_slots.push_back(g.owner.index);

        // leaf inputs first, slot by slot
        std::vector<std::vector<uint8_t>> slot_bits(un.circ.inputs.size());
        for (size_t g = 0; g < un.circ.inputs.size(); g++) {
            const circ::Owner& ow = un.circ.inputs[g].owner;
            if (ow.kind != circ::Owner::Kind::Party) continue;
            slot_bits[g] = inject_input(cx, gu, g, ow.index, ow.index == self ? &bits : nullptr);
        }
        // then all solder edges of this unit, batched: one relay flight, one
        // share flight
        bool any_relay = false, any_solder = false;
        std::vector<std::vector<uint8_t>> bv(un.circ.inputs.size());
        for (size_t g = 0; g < un.circ.inputs.size(); g++) {
            const circ::Owner& ow = un.circ.inputs[g].owner;
            if (ow.kind != circ::Owner::Kind::Solder) continue;
            any_solder = true;
            size_t rank = size_t(std::find(solder_slots.begin(), solder_slots.end(), ow.index) -
                                 solder_slots.begin());
            int kid = un.kids[rank];
            const GarbledUnit& cg = setup.units[size_t(kid)];
            if ((un.parties.mask & ~cg.parties.mask) != 0) any_relay = true;
            bv[g] = solder_relay(cx, cg, gu, bout[size_t(kid)], /*send_only=*/false);
        }
        if (any_relay) cx.round();
        for (size_t g = 0; g < un.circ.inputs.size(); g++) {
            const circ::Owner& ow = un.circ.inputs[g].owner;
            if (ow.kind != circ::Owner::Kind::Solder) continue;
            size_t rank = size_t(std::find(solder_slots.begin(), solder_slots.end(), ow.index) -
                                 solder_slots.begin());
            int kid = un.kids[rank];
            slot_bits[g] = solder_shares(cx, setup.units[size_t(kid)], gu, g, bv[g]);
        }
        if (any_solder) cx.round();

        std::vector<uint8_t> bin;
        bin.reserve(gu.lam_in.n);
        for (const auto& sb : slot_bits) bin.insert(bin.end(), sb.begin(), sb.end());

        bout[k] = eval_unit(cx, gu, bin);
        if (self == un.parties.lowest()) cx.unit_time[k] = tr.clock(self) - t0;
        for (int kid : un.kids) bout[size_t(kid)].clear();
    }

    cx.cur_unit = p.root;
    circ::Bits raw = reveal_outputs(cx, setup.units[size_t(p.root)], bout[size_t(p.root)]);
    RunResult rr;
    rr.rows = plan::decode_result(p, raw);
    rr.metrics = party_metrics(p, cx, tr);
    return rr;
}

RunResult run_tree(const plan::Plan& p, const sql::Dataset& data, net::Transport& tr,
                   const RunOptions& opt) {
    if (tr.m() < p.m) throw ValidationError("run: transport has too few parties");
    Setup setup = make_setup(p, opt.seed, opt.kappa);

    int m = p.m;
    std::vector<RunResult> res(size_t(m));
    std::vector<std::exception_ptr> errs(size_t(m));
    std::vector<std::thread> th;
    for (int q = 0; q < m; q++)
        th.emplace_back([&, q] {
            try {
                circ::Bits b = plan::encode_local(p.locals[size_t(q)], data);
                res[size_t(q)] = run_tree_party(p, setup, q, b, tr, opt);
            } catch (const AbortError&) {
                errs[size_t(q)] = std::current_exception();
            } catch (const std::exception& e) {
                // a purely local failure (encoding refusal, bad config) still
                // has to unblock everyone else
                errs[size_t(q)] = std::current_exception();
                PartyCtx cx;
                cx.self = q;
                cx.tr = &tr;
                AbortInfo ai;
                ai.reason = "local-error";
                ai.detected_by = q;
                ai.detail = e.what();
                notify_abort(cx, ai);
            }
        });
    for (auto& t : th) t.join();

    // first failure wins: a local refusal outranks the aborts it caused
    for (int q = 0; q < m; q++)
        if (errs[size_t(q)]) {
            try {
                std::rethrow_exception(errs[size_t(q)]);
            } catch (const AbortError&) {
            }
        }
    for (int q = 0; q < m; q++)
        if (errs[size_t(q)]) std::rethrow_exception(errs[size_t(q)]);

    RunResult out = std::move(res[0]);
    for (int q = 1; q < m; q++) {
        if (res[size_t(q)].rows != out.rows)
            throw Error("run: parties decoded different results");
        for (size_t u = 0; u < out.metrics.units.size(); u++) {
            RunMetrics::UnitRow& a = out.metrics.units[u];
            const RunMetrics::UnitRow& b = res[size_t(q)].metrics.units[u];
            a.time = std::max(a.time, b.time);
            a.bytes += b.bytes;
            a.rounds = std::max(a.rounds, b.rounds);
        }
    }
    return out;
}

std::string RunMetrics::str() const {
    std::string s = "unit   parties        time        bytes  rounds\n";
    char buf[160];
    for (const UnitRow& r : units) {
        snprintf(buf, sizeof buf, "%-6s %-12s %9.2f %12llu %7u\n", r.id.c_str(),
                 r.parties.str().c_str(), r.time, (unsigned long long)r.bytes, r.rounds);
        s += buf;
    }
    s += "channel bytes (row = from, col = to)\n";
    for (int i = 0; i < m; i++) {
        for (int j = 0; j < m; j++) {
            snprintf(buf, sizeof buf, "%10llu",
                     (unsigned long long)(i == j ? 0 : chan[size_t(i)][size_t(j)].bytes));
            s += buf;
        }
        s += "\n";
    }
    snprintf(buf, sizeof buf,
             "totals: frames=%llu bytes=%llu online=%.2f offline=%.2f\n"
             "solder edges batched per parent unit (one share flight per unit)\n",
             (unsigned long long)total_frames, (unsigned long long)total_bytes, online_time,
             offline_time);
    s += buf;
    return s;
}

} // namespace quilt::eng
