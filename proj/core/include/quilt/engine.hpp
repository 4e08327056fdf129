#pragma once
// Multi-party execution of a plan's unit tree over masked wires.
//
// Offline, a dealer (make_setup) garbles every unit: fresh per-party global
// keys, then authenticated XOR-shared masks for the unit's input and output
// wires. The only cross-unit coupling is that a child's output masks are
// dealt so the parent's party set can verify them later (soldering).
//
// Online, each party runs the same schedule over its units, bottom-up:
//
//   inject_input   leaf slot: the unit's parties reveal the input masks to
//                  the slot's owner (MAC-checked), who broadcasts masked bits.
//   solder_edge    child slot: child-set parties broadcast switched mask
//                  differences, parent-only parties fresh mask shares; every
//                  receiver MAC-checks every share and XOR-combines the
//                  child's public masked outputs onto the parent's masking.
//   eval_unit      the unit's evaluator (lowest party) runs the evaluation
//                  backend on the masked inputs and broadcasts masked
//                  outputs; embedded verifier bits are checked inside the
//                  backend boundary and a zero aborts with edge provenance.
//   echo round     all parties cross-check a hash of the unit's public
//                  transcript, so a broadcast that didn't reach everyone
//                  identically is caught before the outputs move upward.
//   reveal_outputs root only: output masks are reconstructed pairwise
//                  (MAC-checked) and every party decodes the result rows.
//
// Any failed check raises an abort: the detector notifies all parties with
// an abort frame carrying the provenance (first failure wins), and every
// blocked party re-raises it in place of the frame it was waiting for.
//
// The default backend is dealer-trusted: it rebuilds the wire masks from the
// dealing secrets inside a sealed per-unit boundary, evaluates the circuit in
// the clear, and re-masks the outputs. Nothing outside the boundary sees an
// unmasked bit, and the interface (masked in, masked out) is exactly what a
// cryptographic garbling backend would implement. Plaintext values live only
// at the edges — a party's own input encoding and the decoded result — and
// frames carrying plaintext would have to be tainted, which the transport
// refuses to send.

#include "quilt/authshare.hpp"
#include "quilt/planner.hpp"
#include "quilt/transport.hpp"

namespace quilt::eng {

// ---------------------------------------------------------------------------
// Dealer products for one unit. `delta[p]` is party p's global key for this
// unit (zero outside `parties`). `lam_in` masks every circuit input bit,
// held and verified by the unit's parties; `lam_out` masks the output bundle
// and is additionally verifiable by the parent unit's party set, under the
// parent's keys for parent-only members (the key switch at solder time then
// only has to bridge the members the two units share).
// ---------------------------------------------------------------------------

struct GarbledUnit {
    int unit = -1; // index into Plan::units
    PartySet parties;
    const circ::Circuit* circ = nullptr; // borrowed from the plan
    std::vector<auth::Tag> delta;
    auth::Dealing lam_in;
    auth::Dealing lam_out;
    std::vector<size_t> in_off; // input group g occupies lam_in[in_off[g] ..)
};

// Garble one unit: fresh deltas for `parties`, mask dealings for all I/O
// wires. `out_verifiers` is the party set that must be able to verify the
// output masks (the parent's parties; defaults to the unit's own). For
// verifiers outside `parties`, their dealing key comes from `parent_delta`.
GarbledUnit garble_unit(const circ::Circuit& c, PartySet parties, Rng& rng, uint32_t kappa,
                        PartySet out_verifiers = {},
                        const std::vector<auth::Tag>* parent_delta = nullptr);

// Dealer setup for a whole plan, derived from one seed: units are garbled
// root-first so every child's output dealing can name its parent's keys.
// Borrows the plan's circuits; keep the plan alive.
struct Setup {
    uint32_t kappa = 128;
    std::vector<GarbledUnit> units;
};
Setup make_setup(const plan::Plan& p, uint64_t seed, uint32_t kappa = 128);

// ---------------------------------------------------------------------------
// Evaluation backend: masked bits in, masked bits out, verifier checks
// inside. bad_ver reports the first failed verifier (index into ver_labels),
// -1 when all pass. A cryptographic backend would slot in here unchanged.
// ---------------------------------------------------------------------------

class EvalBackend {
public:
    virtual ~EvalBackend() = default;
    struct Result {
        std::vector<uint8_t> bhat_out;
        int bad_ver = -1;
    };
    virtual Result eval(const GarbledUnit& gu, const std::vector<uint8_t>& bhat_in) = 0;
};

class DealerBackend : public EvalBackend {
public:
    Result eval(const GarbledUnit& gu, const std::vector<uint8_t>& bhat_in) override;
};

// ---------------------------------------------------------------------------
// Per-party protocol context. Every step below is collective: all parties of
// the unit must enter it in the same order (they exchange messages inside).
// The context accumulates per-unit traffic/round counters as it goes.
// ---------------------------------------------------------------------------

struct PartyCtx {
    int self = -1;
    net::Transport* tr = nullptr;
    EvalBackend* backend = nullptr;

    int cur_unit = -1; // frames sent now are charged to this unit
    std::vector<uint64_t> unit_sent; // bytes, per unit
    std::vector<uint32_t> unit_rounds;
    std::vector<double> unit_time; // filled by the unit's evaluator
    std::vector<uint8_t> echo_buf; // unit's public transcript, hashed at echo
    bool abort_notified = false;

    void charge(uint64_t bytes);
    void round();
};

// Notify everyone and raise. Used for every locally detected failure; a
// received abort frame is re-raised with its original provenance instead.
[[noreturn]] void raise_abort(PartyCtx& cx, AbortInfo info);

// Reveal the slot's input masks to `owner`, who broadcasts masked bits.
// `plain` is the owner's plaintext slice (null for everyone else). Returns
// the slot's masked bits (all parties). Throws ValidationError if owner is
// not a member, AbortError on a failed MAC check.
std::vector<uint8_t> inject_input(PartyCtx& cx, const GarbledUnit& gu, size_t slot, int owner,
                                  const circ::Bits* plain);

// Move the child's masked outputs onto the parent's input masking for
// `slot`. `bhat_child` is the child's masked output (empty for parties
// outside the child set — the child's evaluator relays it). Returns the
// parent-masked bits (all parent parties).
std::vector<uint8_t> solder_edge(PartyCtx& cx, const GarbledUnit& child,
                                 const GarbledUnit& parent, size_t slot,
                                 const std::vector<uint8_t>& bhat_child);

// Backend evaluation at the unit's evaluator + masked-output broadcast +
// transcript echo round. Aborts on a failed verifier (with the edge named by
// its label) or on an echo mismatch.
std::vector<uint8_t> eval_unit(PartyCtx& cx, const GarbledUnit& gu,
                               const std::vector<uint8_t>& bhat_in);

// Reconstruct the output masks (pairwise, MAC-checked) and unmask. Returns
// plaintext output bits; every party of the unit gets them.
circ::Bits reveal_outputs(PartyCtx& cx, const GarbledUnit& gu,
                          const std::vector<uint8_t>& bhat_out);

// ---------------------------------------------------------------------------
// Tree driver.
// ---------------------------------------------------------------------------

struct RunOptions {
    uint64_t seed = 1;   // dealer randomness
    uint32_t kappa = 128;
    bool parallel = false; // overlap disjoint-party subtrees (else serial units)
    EvalBackend* backend = nullptr; // default: DealerBackend
};

struct RunMetrics {
    int m = 0;
    struct UnitRow {
        std::string id;
        PartySet parties;
        double time = 0; // evaluator's online clock span
        uint64_t bytes = 0;
        uint32_t rounds = 0;
    };
    std::vector<UnitRow> units;
    std::vector<std::vector<net::ChannelStats>> chan; // [from][to]
    uint64_t total_bytes = 0, total_frames = 0;
    double online_time = 0, offline_time = 0; // max party clock (sim)

    std::string str() const; // metrics report, one block per section
};

struct RunResult {
    sql::Rows rows;
    RunMetrics metrics;
};

// One party's full protocol run: offline charging, local-list injection,
// units bottom-up, root reveal. `bits` is this party's encoded local list.
// Returns this party's result view (identical across parties on honest runs).
RunResult run_tree_party(const plan::Plan& p, const Setup& setup, int self,
                         const circ::Bits& bits, net::Transport& tr, const RunOptions& opt);

// In-process driver: encodes every party's local list from `data`, runs one
// thread per party over `tr`, merges metrics. First failure wins: if any
// party aborted, the earliest abort is re-thrown after all threads joined.
RunResult run_tree(const plan::Plan& p, const sql::Dataset& data, net::Transport& tr,
                   const RunOptions& opt = {});

} // namespace quilt::eng
