#include "quilt/common.hpp"

#include <algorithm>
#include <sstream>

namespace quilt {

std::string AbortInfo::str() const {
    std::ostringstream os;
    os << reason;
    if (unit >= 0) os << " unit=" << unit;
    if (edge >= 0) os << " edge=" << edge;
    if (detected_by >= 0) os << " detected-by=P" << (detected_by + 1);
    if (accused >= 0) os << " accused=P" << (accused + 1);
    if (!detail.empty()) os << " (" << detail << ")";
    return os.str();
}

std::string PartySet::str() const {
    std::string out;
    for (int i = 0; i < 32; i++) {
        if (!contains(i)) continue;
        if (!out.empty()) out += ',';
        out += std::to_string(i + 1);
    }
    return out;
}

int Value::cmp(const Value& a, const Value& b) {
    if (a.w.size() != b.w.size()) return a.w.size() < b.w.size() ? -1 : 1;
    for (size_t i = a.w.size(); i-- > 0;) {
        if (a.w[i] != b.w[i]) return a.w[i] < b.w[i] ? -1 : 1;
    }
    return 0;
}

Value Value::add(const Value& a, const Value& b) {
    Value r;
    size_t n = std::max(a.w.size(), b.w.size());
    r.w.resize(n, 0);
    unsigned __int128 carry = 0;
    for (size_t i = 0; i < n; i++) {
        unsigned __int128 s = carry;
        if (i < a.w.size()) s += a.w[i];
        if (i < b.w.size()) s += b.w[i];
        r.w[i] = uint64_t(s);
        carry = s >> 64;
    }
    if (carry) r.w.push_back(uint64_t(carry));
    r.normalize();
    return r;
}

Value Value::sub(const Value& a, const Value& b) {
    if (cmp(a, b) < 0) throw ValidationError("Value::sub underflow");
    Value r;
    r.w.resize(a.w.size(), 0);
    uint64_t borrow = 0;
    for (size_t i = 0; i < a.w.size(); i++) {
        uint64_t bv = i < b.w.size() ? b.w[i] : 0;
        uint64_t av = a.w[i];
        uint64_t d = av - bv - borrow;
        borrow = (av < bv + borrow || (bv + borrow < bv)) ? 1 : 0;
        r.w[i] = d;
    }
    r.normalize();
    return r;
}

Value Value::complement(const Value& a, uint32_t width) {
    Value r;
    r.w.resize((width + 63) / 64, 0);
    for (size_t i = 0; i < r.w.size(); i++) {
        uint64_t av = i < a.w.size() ? a.w[i] : 0;
        r.w[i] = ~av;
    }
    uint32_t top = width & 63;
    if (top) r.w.back() &= (uint64_t(1) << top) - 1;
    r.normalize();
    return r;
}

// decimal conversion: schoolbook divmod/muladd on the word vector; only used
// on CSV and schema boundaries so speed is irrelevant.
static uint32_t divmod_small(std::vector<uint64_t>& w, uint32_t d) {
    unsigned __int128 rem = 0;
    for (size_t i = w.size(); i-- > 0;) {
        unsigned __int128 cur = (rem << 64) | w[i];
        w[i] = uint64_t(cur / d);
        rem = cur % d;
    }
    while (!w.empty() && w.back() == 0) w.pop_back();
    return uint32_t(rem);
}

Value Value::from_decimal(const std::string& s) {
    if (s.empty()) throw ParseError("empty numeric literal");
    Value r;
    for (char c : s) {
        if (c < '0' || c > '9') throw ParseError("bad digit in numeric literal: " + s);
        // r = r*10 + digit
        unsigned __int128 carry = uint32_t(c - '0');
        for (size_t i = 0; i < r.w.size(); i++) {
            unsigned __int128 cur = (unsigned __int128)r.w[i] * 10 + carry;
            r.w[i] = uint64_t(cur);
            carry = cur >> 64;
        }
        if (carry) r.w.push_back(uint64_t(carry));
    }
    r.normalize();
    return r;
}

std::string Value::to_decimal() const {
    if (is_zero()) return "0";
    std::vector<uint64_t> tmp = w;
    std::string out;
    while (!tmp.empty()) out += char('0' + divmod_small(tmp, 10));
    std::reverse(out.begin(), out.end());
    return out;
}

std::vector<uint8_t> Value::to_bits(uint32_t width) const {
    if (bit_width() > width)
        throw ValidationError("value " + to_decimal() + " does not fit in " +
                              std::to_string(width) + " bits");
    std::vector<uint8_t> bits(width);
    for (uint32_t i = 0; i < width; i++) bits[i] = bit(i) ? 1 : 0;
    return bits;
}

Value Value::from_bits(const uint8_t* bits, uint32_t width) {
    Value r;
    r.w.resize((width + 63) / 64, 0);
    for (uint32_t i = 0; i < width; i++)
        if (bits[i]) r.w[i >> 6] |= (uint64_t(1) << (i & 63));
    r.normalize();
    return r;
}

std::string hex64(uint64_t v) {
    static const char* d = "0123456789abcdef";
    std::string s(16, '0');
    for (int i = 15; i >= 0; i--) {
        s[i] = d[v & 15];
        v >>= 4;
    }
    return s;
}

} // namespace quilt
