#include "quilt/transport.hpp"

#include <chrono>
#include <cstring>
#include <deque>
#include <sys/socket.h>
#include <unistd.h>

namespace quilt::net {

// --- wire encoding (socket mode): little-endian, length-prefixed ---

namespace {

void put_u32(std::vector<uint8_t>& b, uint32_t v) {
    for (int i = 0; i < 4; i++) b.push_back(uint8_t(v >> (8 * i)));
}
void put_u64(std::vector<uint8_t>& b, uint64_t v) {
    for (int i = 0; i < 8; i++) b.push_back(uint8_t(v >> (8 * i)));
}
uint32_t get_u32(const uint8_t* p) {
    uint32_t v = 0;
    for (int i = 0; i < 4; i++) v |= uint32_t(p[i]) << (8 * i);
    return v;
}
uint64_t get_u64(const uint8_t* p) {
    uint64_t v = 0;
    for (int i = 0; i < 8; i++) v |= uint64_t(p[i]) << (8 * i);
    return v;
}

} // namespace

std::vector<uint8_t> Frame::encode() const {
    std::vector<uint8_t> b;
    put_u32(b, uint32_t(from));
    put_u32(b, uint32_t(to));
    put_u32(b, uint32_t(kind.size()));
    b.insert(b.end(), kind.begin(), kind.end());
    b.push_back(taint ? 1 : 0);
    put_u64(b, units);
    put_u32(b, unit_bytes);
    b.push_back(uint8_t(phase));
    put_u64(b, seq);
    put_u64(b, payload.size());
    b.insert(b.end(), payload.begin(), payload.end());
    return b;
}

Frame Frame::decode(const std::vector<uint8_t>& buf) {
    Frame f;
    const uint8_t* p = buf.data();
    size_t need = 12;
    if (buf.size() < need) throw ParseError("frame: truncated header");
    f.from = int(get_u32(p));
    f.to = int(get_u32(p + 4));
    uint32_t klen = get_u32(p + 8);
    need += klen + 1 + 8 + 4 + 1 + 8 + 8;
    if (buf.size() < need) throw ParseError("frame: truncated");
    f.kind.assign(reinterpret_cast<const char*>(p + 12), klen);
    size_t at = 12 + klen;
    f.taint = p[at++] != 0;
    f.units = get_u64(p + at);
    at += 8;
    f.unit_bytes = get_u32(p + at);
    at += 4;
    f.phase = Phase(p[at++]);
    f.seq = get_u64(p + at);
    at += 8;
    uint64_t plen = get_u64(p + at);
    at += 8;
    if (buf.size() != at + plen) throw ParseError("frame: bad payload length");
    f.payload.assign(buf.begin() + long(at), buf.end());
    return f;
}

// --- base conveniences ---

uint64_t Transport::total_bytes() const {
    uint64_t t = 0;
    for (int i = 0; i < m(); i++)
        for (int j = 0; j < m(); j++) t += stats(i, j).bytes;
    return t;
}

uint64_t Transport::total_frames() const {
    uint64_t t = 0;
    for (int i = 0; i < m(); i++)
        for (int j = 0; j < m(); j++) t += stats(i, j).frames;
    return t;
}

double Transport::max_clock() const {
    double t = 0;
    for (int p = 0; p < m(); p++) t = std::max(t, clock(p));
    return t;
}

double Transport::max_clock(PartySet s) const {
    double t = 0;
    for (int p : s.ids()) t = std::max(t, clock(p));
    return t;
}

// --- latency model ---

LatencyModel LatencyModel::uniform(int m, double link, double ls) {
    LatencyModel lm;
    lm.l_s = ls;
    lm.l.assign(size_t(m), std::vector<double>(size_t(m), link));
    for (int i = 0; i < m; i++) lm.l[size_t(i)][size_t(i)] = 0;
    return lm;
}

void LatencyModel::validate() const {
    if (l_s <= 0) throw ValidationError("latency model: L_s must be positive");
    for (size_t i = 0; i < l.size(); i++) {
        if (l[i].size() != l.size()) throw ValidationError("latency model: matrix not square");
        if (l[i][i] != 0) throw ValidationError("latency model: nonzero diagonal");
        for (size_t j = 0; j < l.size(); j++) {
            if (l[i][j] < 0) throw ValidationError("latency model: negative link cost");
            if (l[i][j] != l[j][i]) throw ValidationError("latency model: asymmetric matrix");
        }
    }
}

// --- in-process discrete-event transport ---

SimTransport::SimTransport(int m, LatencyModel lat) : m_(m), lat_(std::move(lat)) {
    lat_.validate();
    if (int(lat_.l.size()) < m) throw ValidationError("latency model smaller than party count");
    chans_.resize(size_t(m) * size_t(m));
    clk_.assign(size_t(m), 0.0);
    clk_off_.assign(size_t(m), 0.0);
}

void SimTransport::send(Frame f) {
    std::unique_lock<std::mutex> lk(mu_);
    if (icept_) icept_(f);
    if (f.taint) throw ValidationError("transport: refusing tainted (plaintext) frame");
    if (f.from < 0 || f.from >= m_ || f.to < 0 || f.to >= m_ || f.from == f.to)
        throw ValidationError("transport: bad endpoints");
    Chan& c = chan(f.from, f.to);
    f.seq = c.next_seq++;
    c.st.frames++;
    c.st.bytes += f.charged_bytes();

    double transit = double(f.charged_units()) * lat_.l[size_t(f.from)][size_t(f.to)];
    std::vector<double>& lane = f.phase == Phase::Offline ? clk_off_ : clk_;
    lane[size_t(f.from)] += transit; // sender-serialized link occupancy
    double arrival = lane[size_t(f.from)];

    if (tracing_) trace_.push_back({f.from, f.to, f.kind, f.seq, f.payload.size()});
    c.q.emplace_back(std::move(f), arrival);
    cv_.notify_all();
}

Frame SimTransport::recv(int to, int from) {
    std::unique_lock<std::mutex> lk(mu_);
    auto& q = chan(from, to).q;
    cv_.wait(lk, [&] { return !q.empty(); });
    auto [f, arrival] = std::move(q.front());
    q.pop_front();
    std::vector<double>& lane = f.phase == Phase::Offline ? clk_off_ : clk_;
    lane[size_t(to)] = std::max(lane[size_t(to)], arrival);
    return std::move(f);
}

void SimTransport::compute(int p, uint64_t sym_ops, Phase phase) {
    std::lock_guard<std::mutex> lk(mu_);
    (phase == Phase::Offline ? clk_off_ : clk_)[size_t(p)] += double(sym_ops) * lat_.l_s;
}

double SimTransport::clock(int p) const {
    std::lock_guard<std::mutex> lk(mu_);
    return clk_[size_t(p)];
}

double SimTransport::offline_clock(int p) const {
    std::lock_guard<std::mutex> lk(mu_);
    return clk_off_[size_t(p)];
}

void SimTransport::barrier(PartySet s, bool global) {
    std::lock_guard<std::mutex> lk(mu_);
    double t = 0;
    if (global)
        for (int p = 0; p < m_; p++) t = std::max(t, clk_[size_t(p)]);
    else
        for (int p : s.ids()) t = std::max(t, clk_[size_t(p)]);
    for (int p : s.ids()) clk_[size_t(p)] = std::max(clk_[size_t(p)], t);
}

ChannelStats SimTransport::stats(int from, int to) const {
    std::lock_guard<std::mutex> lk(mu_);
    return chan(from, to).st;
}

void SimTransport::set_interceptor(Interceptor f) {
    std::lock_guard<std::mutex> lk(mu_);
    icept_ = std::move(f);
}

void SimTransport::set_tracing(bool on) {
    std::lock_guard<std::mutex> lk(mu_);
    tracing_ = on;
}

std::vector<SimTransport::TraceEntry> SimTransport::trace() const {
    std::lock_guard<std::mutex> lk(mu_);
    return trace_;
}

// --- socket transport ---

SocketTransport::SocketTransport(int m, int self, std::vector<int> fds)
    : m_(m), self_(self), fds_(std::move(fds)) {
    st_.resize(size_t(m) * size_t(m));
    seq_out_.assign(size_t(m), 0);
    seq_in_.assign(size_t(m), 0);
}

SocketTransport::~SocketTransport() {
    for (int q = 0; q < m_; q++)
        if (q != self_ && fds_[size_t(q)] >= 0) close(fds_[size_t(q)]);
}

static void write_all(int fd, const uint8_t* p, size_t n) {
    while (n) {
        ssize_t w = write(fd, p, n);
        if (w <= 0) throw Error("socket transport: write failed");
        p += w;
        n -= size_t(w);
    }
}

static void read_all(int fd, uint8_t* p, size_t n) {
    while (n) {
        ssize_t r = read(fd, p, n);
        if (r <= 0) throw Error("socket transport: peer closed");
        p += r;
        n -= size_t(r);
    }
}

void SocketTransport::send(Frame f) {
    if (f.taint) throw ValidationError("transport: refusing tainted (plaintext) frame");
    if (f.from != self_) throw ValidationError("socket transport: send from wrong party");
    f.seq = seq_out_[size_t(f.to)]++;
    auto& st = st_[size_t(f.from) * size_t(m_) + size_t(f.to)];
    st.frames++;
    st.bytes += f.charged_bytes();
    std::vector<uint8_t> buf = f.encode();
    uint8_t len[8];
    for (int i = 0; i < 8; i++) len[i] = uint8_t(uint64_t(buf.size()) >> (8 * i));
    write_all(fds_[size_t(f.to)], len, 8);
    write_all(fds_[size_t(f.to)], buf.data(), buf.size());
}

Frame SocketTransport::recv(int to, int from) {
    if (to != self_) throw ValidationError("socket transport: recv for wrong party");
    uint8_t len[8];
    read_all(fds_[size_t(from)], len, 8);
    uint64_t n = 0;
    for (int i = 0; i < 8; i++) n |= uint64_t(len[i]) << (8 * i);
    if (n > (1ull << 31)) throw ParseError("socket transport: oversized frame");
    std::vector<uint8_t> buf(n);
    read_all(fds_[size_t(from)], buf.data(), n);
    Frame f = Frame::decode(buf);
    if (f.seq != seq_in_[size_t(from)]++)
        throw ValidationError("socket transport: out-of-order frame");
    auto& st = st_[size_t(from) * size_t(m_) + size_t(to)];
    st.frames++;
    st.bytes += f.charged_bytes();
    return f;
}

double SocketTransport::clock(int) const {
    using namespace std::chrono;
    return duration<double>(steady_clock::now().time_since_epoch()).count();
}

ChannelStats SocketTransport::stats(int from, int to) const {
    return st_[size_t(from) * size_t(m_) + size_t(to)];
}

std::vector<std::vector<int>> socket_mesh(int m) {
    std::vector<std::vector<int>> mesh(size_t(m), std::vector<int>(size_t(m), -1));
    for (int i = 0; i < m; i++)
        for (int j = i + 1; j < m; j++) {
            int sv[2];
            if (socketpair(AF_UNIX, SOCK_STREAM, 0, sv) != 0)
                throw Error("socketpair failed");
            mesh[size_t(i)][size_t(j)] = sv[0];
            mesh[size_t(j)][size_t(i)] = sv[1];
        }
    return mesh;
}

} // namespace quilt::net
