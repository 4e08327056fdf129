#pragma once
// Plaintext reference implementations used to compute expected outputs for
// the circuit tests. Everything here works on vectors of u64 column values
// and is written independently of the circuit builders (no shared helpers
// beyond the tuple layout description), so a bug in the gate-level code
// cannot cancel out against a bug here.

#include "quilt/primitives.hpp"

#include <algorithm>
#include <cstdint>
#include <vector>

namespace oracle {

using quilt::prim::Agg;
using quilt::prim::CmpOp;
using quilt::prim::Layout;
using quilt::prim::SortKey;

using Row = std::vector<uint64_t>; // one value per layout column
using Rows = std::vector<Row>;

inline uint64_t width_mask(uint32_t w) { return w >= 64 ? ~0ull : (1ull << w) - 1; }

// --- encode/decode between rows and LSB-first bit vectors ---

inline quilt::circ::Bits encode_rows(const Rows& rows, const Layout& lay) {
    quilt::circ::Bits bits;
    bits.reserve(rows.size() * lay.total());
    for (const Row& r : rows) {
        for (size_t c = 0; c < lay.cols.size(); c++)
            for (uint32_t i = 0; i < lay.cols[c]; i++) bits.push_back((r[c] >> i) & 1);
    }
    return bits;
}

inline Rows decode_rows(const quilt::circ::Bits& bits, const Layout& lay) {
    size_t ew = lay.total();
    Rows rows(bits.size() / ew);
    size_t pos = 0;
    for (Row& r : rows) {
        r.assign(lay.cols.size(), 0);
        for (size_t c = 0; c < lay.cols.size(); c++)
            for (uint32_t i = 0; i < lay.cols[c]; i++)
                if (bits[pos++]) r[c] |= 1ull << i;
    }
    return rows;
}

// --- ordering under a sort key (invert = complement within column width) ---

inline bool key_less(const Row& a, const Row& b, const Layout& lay, const SortKey& key) {
    for (const SortKey::Part& p : key.parts) {
        uint64_t av = a[p.col], bv = b[p.col];
        if (p.invert) {
            av = ~av & width_mask(lay.cols[p.col]);
            bv = ~bv & width_mask(lay.cols[p.col]);
        }
        if (av != bv) return av < bv;
    }
    return false;
}

inline bool tuple_key_less(const Row& a, const Row& b, const Layout& lay) {
    return key_less(a, b, lay, SortKey::by_key(lay));
}

inline Rows sorted_rows(Rows rows, const Layout& lay, const SortKey& key) {
    std::stable_sort(rows.begin(), rows.end(),
                     [&](const Row& a, const Row& b) { return key_less(a, b, lay, key); });
    return rows;
}

inline Rows merged_rows(const Rows& l, const Rows& r, const Layout& lay, const SortKey& key) {
    Rows all = l;
    all.insert(all.end(), r.begin(), r.end());
    return sorted_rows(std::move(all), lay, key);
}

// --- monotonizer: replace zero-key rows with the nearest preceding real row ---

inline uint64_t key_value(const Row& r, const Layout& lay) {
    // concatenated key columns as one integer; tests keep total key width <= 64
    uint64_t v = 0;
    uint32_t shift = 0;
    for (uint32_t c = 0; c < lay.key_cols; c++) {
        v |= r[c] << shift;
        shift += lay.cols[c];
    }
    return v;
}

inline Rows mono_rows(const Rows& in, const Layout& lay) {
    Rows out;
    out.reserve(in.size());
    for (size_t i = 0; i < in.size(); i++) {
        if (i > 0 && key_value(in[i], lay) == 0)
            out.push_back(out.back());
        else
            out.push_back(in[i]);
    }
    return out;
}

// --- dedup: keep the last row of each equal-key run ---

inline Rows dedup_rows(const Rows& in, const Layout& lay) {
    Rows out(in.size(), Row(lay.cols.size(), 0));
    for (size_t i = 0; i < in.size(); i++) {
        bool last = i + 1 == in.size() || key_value(in[i], lay) != key_value(in[i + 1], lay);
        if (last) out[i] = in[i];
    }
    return out;
}

// --- dedup with aggregation: accumulate a run, emit at its last row ---

inline Rows dedup_agg_rows(const Rows& in, const Layout& lay, Agg agg, uint32_t agg_col,
                           uint32_t out_w) {
    uint64_t mask = width_mask(out_w);
    auto identity = [&] { return agg == Agg::Min ? mask : 0; };
    uint64_t acc = identity();
    Rows out;
    for (size_t i = 0; i < in.size(); i++) {
        bool real = key_value(in[i], lay) != 0;
        uint64_t v = agg == Agg::Count ? uint64_t(real) : (in[i][agg_col] & mask);
        if (agg == Agg::Min && !real) v = identity(); // absent rows contribute nothing
        switch (agg) {
        case Agg::Count:
        case Agg::Sum: acc = (acc + v) & mask; break;
        case Agg::Min: acc = std::min(acc, v); break;
        case Agg::Max: acc = std::max(acc, v); break;
        }
        // boundary against the next *real* key: absent rows inside a run
        // (zeroed by an upstream filter) must not split it
        uint64_t next_real = 0;
        for (size_t j = i + 1; j < in.size(); j++)
            if (key_value(in[j], lay) != 0) {
                next_real = key_value(in[j], lay);
                break;
            }
        bool boundary = key_value(in[i], lay) != next_real;
        bool emit = boundary && key_value(in[i], lay) != 0;
        Row r(lay.key_cols + 1, 0);
        if (emit) {
            for (uint32_t c = 0; c < lay.key_cols; c++) r[c] = in[i][c];
            r[lay.key_cols] = acc;
            acc = identity();
        }
        out.push_back(std::move(r));
    }
    return out;
}

// --- intersection on scalars (zero-interleaved output, odd slots) ---

inline Rows isect_rows(const Rows& l, const Rows& r, const Layout& lay) {
    Rows merged = merged_rows(l, r, lay, SortKey::by_key(lay));
    Rows out;
    for (size_t i = 1; i < merged.size(); i += 2) {
        bool m = merged[i - 1][0] == merged[i][0] ||
                 (i + 1 < merged.size() && merged[i][0] == merged[i + 1][0]);
        out.push_back(m ? merged[i] : Row{0});
    }
    return out;
}

// --- tagged intersection with payload attribution ---
// left rows: (key, payl), right rows: (key, payr); output (key, payl, payr)

inline Rows isect_tagged_rows(const Rows& l, const Rows& r, uint32_t, uint32_t payl_w,
                              uint32_t payr_w) {
    struct T {
        uint64_t key, tag, pl, pr;
    };
    std::vector<T> all;
    for (const Row& e : l) all.push_back({e[0], 0, payl_w ? e[1] : 0, 0});
    for (const Row& e : r) all.push_back({e[0], 1, 0, payr_w ? e[1] : 0});
    std::stable_sort(all.begin(), all.end(), [](const T& a, const T& b) {
        return a.key != b.key ? a.key < b.key : a.tag < b.tag;
    });
    Rows out;
    for (size_t i = 1; i < all.size(); i += 2) {
        bool mp = all[i - 1].key == all[i].key && all[i - 1].tag != all[i].tag;
        bool mn = i + 1 < all.size() && all[i].key == all[i + 1].key &&
                  all[i].tag != all[i + 1].tag;
        Row row;
        uint64_t key = 0, pl = 0, pr = 0;
        if (mp || mn) {
            key = all[i].key;
            size_t j = mp ? i - 1 : i + 1;
            pl = all[i].pl ^ all[j].pl;
            pr = all[i].pr ^ all[j].pr;
        }
        row.push_back(key);
        if (payl_w) row.push_back(pl);
        if (payr_w) row.push_back(pr);
        out.push_back(std::move(row));
    }
    return out;
}

// --- verifier predicates ---

inline bool sorted_ok(const Rows& in, const Layout& lay, bool strict) {
    for (size_t i = 0; i + 1 < in.size(); i++) {
        uint64_t a = key_value(in[i], lay), b = key_value(in[i + 1], lay);
        if (strict ? !(a < b) : !(a <= b)) return false;
    }
    return true;
}

inline bool range_ok(const Rows& in, const Layout& lay, uint32_t col, uint64_t lo, uint64_t hi) {
    uint64_t top = 1ull << (lay.cols[col] - 1);
    for (const Row& r : in) {
        uint64_t v = r[col];
        if (v == 0 || (v & top)) continue;
        if (v < lo || v > hi) return false;
    }
    return true;
}

// --- multiset compare helper (for sort-network permutation checks) ---

inline bool same_multiset(Rows a, Rows b) {
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    return a == b;
}

} // namespace oracle
