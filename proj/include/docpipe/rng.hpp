#pragma once

#include <cstdint>
#include <string_view>

namespace docpipe {

// splitmix64: tiny, fast, and good enough for reproducible corpus jitter.
// Not suitable for anything cryptographic.
struct SplitMix64 {
    uint64_t state = 0;

    explicit SplitMix64(uint64_t seed) : state(seed) {}

    uint64_t next() {
        uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    // uniform in [0, 1); 53 mantissa bits so every double is reachable
    double next_double() {
        return static_cast<double>(next() >> 11) * 0x1.0p-53;
    }

    // uniform in [0, n) without modulo bias worth worrying about at our scale
    uint64_t next_below(uint64_t n) {
        return n == 0 ? 0 : next() % n;
    }
};

inline uint64_t fnv1a_64(std::string_view s) {
    uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

// Combines a run-level seed with a page id so each page gets an independent
// stream that does not depend on iteration order.
inline uint64_t page_seed(uint64_t seed, std::string_view page_id) {
    SplitMix64 mixer(seed ^ fnv1a_64(page_id));
    return mixer.next();
}

} // namespace docpipe
