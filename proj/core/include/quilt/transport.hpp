#pragma once
// Multi-party message plumbing. Two implementations of one interface:
//
//   SimTransport  — in-process queues with a discrete-event latency model.
//                   Per-party clocks advance by units*L[from][to] per frame
//                   (sender-serialized) and by sym_ops*L_s per compute charge.
//                   Deterministic regardless of thread interleaving: a frame's
//                   arrival time depends only on its sender's causal history.
//
//   SocketTransport — one process per party over pre-created socketpair fds;
//                   same framing, wall-clock only.
//
// Frames carry a taint flag for plaintext-valued payloads; send() refuses
// tainted frames, which turns "plaintext never crosses the wire" from a
// convention into an assertion.

#include "quilt/common.hpp"

#include <condition_variable>
#include <cstdint>
#include <deque>
#include <functional>
#include <mutex>
#include <string>
#include <utility>
#include <vector>

namespace quilt::net {

enum class Phase : uint8_t { Offline, Online };

struct Frame {
    int from = -1, to = -1;
    std::string kind;  // short tag, e.g. "lam", "bhat", "sold", "echo", "abort"
    std::vector<uint8_t> payload;
    bool taint = false;      // set on plaintext carriers; transport rejects
    uint64_t units = 0;      // protocol units for latency charging (0 = payload bits)
    uint32_t unit_bytes = 0; // synthetic volume per unit (0 = payload only)
    Phase phase = Phase::Online;
    uint64_t seq = 0;        // per-channel sequence number, set by send()

    uint64_t charged_units() const { return units ? units : payload.size(); }
    uint64_t charged_bytes() const {
        return payload.size() + (unit_bytes ? units * unit_bytes : 0);
    }

    std::vector<uint8_t> encode() const;
    static Frame decode(const std::vector<uint8_t>& buf);
};

struct ChannelStats {
    uint64_t frames = 0;
    uint64_t bytes = 0;
};

// Per-channel tamper hook: invoked (under the transport lock) before a frame
// is enqueued. May mutate bits; used by the abort-fuzz harness.
using Interceptor = std::function<void(Frame&)>;

class Transport {
public:
    virtual ~Transport() = default;
    virtual int m() const = 0;
    virtual void send(Frame f) = 0;
    virtual Frame recv(int to, int from) = 0;

    // Simulated time; no-ops on socket transport (clock() = wall seconds).
    virtual void compute(int p, uint64_t sym_ops, Phase phase) = 0;
    virtual double clock(int p) const = 0;
    // Align clocks at a unit boundary: over `s` only, or over everyone.
    virtual void barrier(PartySet s, bool global) = 0;

    virtual ChannelStats stats(int from, int to) const = 0;
    uint64_t total_bytes() const;
    uint64_t total_frames() const;
    double max_clock() const;
    double max_clock(PartySet s) const;
};

struct LatencyModel {
    double l_s = 1.0;                   // time per symmetric op
    std::vector<std::vector<double>> l; // m x m link time per unit

    static LatencyModel uniform(int m, double link, double ls);
    void validate() const; // symmetric, zero diagonal, non-negative, l_s > 0
};

class SimTransport : public Transport {
public:
    SimTransport(int m, LatencyModel lat);

    int m() const override { return m_; }
    void send(Frame f) override;
    Frame recv(int to, int from) override;
    void compute(int p, uint64_t sym_ops, Phase phase) override;
    double clock(int p) const override;
    void barrier(PartySet s, bool global) override;
    ChannelStats stats(int from, int to) const override;

    double offline_clock(int p) const;
    const LatencyModel& latency() const { return lat_; }
    void set_interceptor(Interceptor f); // applied to every sent frame

    // Trace of (from,to,kind,seq,payload size) for the replay harness.
    struct TraceEntry {
        int from, to;
        std::string kind;
        uint64_t seq;
        size_t bytes;
    };
    std::vector<TraceEntry> trace() const;
    void set_tracing(bool on);

private:
    struct Chan {
        std::deque<std::pair<Frame, double>> q; // frame + arrival time, FIFO
        uint64_t next_seq = 0;
        ChannelStats st;
    };
    Chan& chan(int from, int to) { return chans_[size_t(from) * size_t(m_) + size_t(to)]; }
    const Chan& chan(int from, int to) const {
        return chans_[size_t(from) * size_t(m_) + size_t(to)];
    }

    int m_;
    LatencyModel lat_;
    std::vector<Chan> chans_;
    std::vector<double> clk_, clk_off_;
    Interceptor icept_;
    bool tracing_ = false;
    std::vector<TraceEntry> trace_;
    mutable std::mutex mu_;
    std::condition_variable cv_;
};

// One party's endpoint of a pre-forked socketpair mesh. fds[q] talks to party
// q (unused for q == self). Stats are local to this endpoint.
class SocketTransport : public Transport {
public:
    SocketTransport(int m, int self, std::vector<int> fds);
    ~SocketTransport() override;

    int m() const override { return m_; }
    void send(Frame f) override;
    Frame recv(int to, int from) override;
    void compute(int, uint64_t, Phase) override {}
    double clock(int) const override; // wall seconds
    void barrier(PartySet, bool) override {}
    ChannelStats stats(int from, int to) const override;

private:
    int m_, self_;
    std::vector<int> fds_;
    std::vector<ChannelStats> st_; // indexed like chans
    std::vector<uint64_t> seq_out_, seq_in_;
};

// Build the full socketpair mesh before forking: mesh[p][q] is party p's fd
// for talking to q.
std::vector<std::vector<int>> socket_mesh(int m);

} // namespace quilt::net
