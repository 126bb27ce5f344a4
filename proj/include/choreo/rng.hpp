#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>

namespace choreo {

// Philox4x64-10 counter-based generator. Every random draw in the project
// flows through one of these, keyed by (seed, stream), so runs are
// reproducible and independent substreams never collide.
class PhiloxRng {
public:
    explicit PhiloxRng(uint64_t seed, uint64_t stream = 0)
        : key_{seed, stream}, counter_{0, 0, 0, 0} {}

    uint64_t next_u64() {
        if (buf_pos_ == 4) {
            buf_ = round10(counter_, key_);
            bump_counter();
            buf_pos_ = 0;
        }
        return buf_[buf_pos_++];
    }

    // uniform in [0,1) with 53-bit resolution
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // uniform integer in [0, n)
    uint64_t below(uint64_t n) {
        // rejection sampling to stay unbiased
        const uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        uint64_t x = next_u64();
        while (x >= limit) x = next_u64();
        return x % n;
    }

    // standard normal via Box-Muller; caches the paired deviate
    double normal() {
        if (has_cached_) {
            has_cached_ = false;
            return cached_;
        }
        // u1 in (0,1] so log stays finite
        const double u1 = static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 2.0 * std::numbers::pi * u2;
        cached_ = r * std::sin(a);
        has_cached_ = true;
        return r * std::cos(a);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

private:
    static std::pair<uint64_t, uint64_t> mulhilo(uint64_t a, uint64_t b) {
        const __uint128_t p = static_cast<__uint128_t>(a) * b;
        return {static_cast<uint64_t>(p >> 64), static_cast<uint64_t>(p)};
    }

    static std::array<uint64_t, 4> round10(std::array<uint64_t, 4> ctr,
                                           std::array<uint64_t, 2> key) {
        constexpr uint64_t kMul0 = 0xD2E7470EE14C6C93ULL;
        constexpr uint64_t kMul1 = 0xCA5A826395121157ULL;
        constexpr uint64_t kWeyl0 = 0x9E3779B97F4A7C15ULL;
        constexpr uint64_t kWeyl1 = 0xBB67AE8584CAA73BULL;
        for (int r = 0; r < 10; ++r) {
            auto [hi0, lo0] = mulhilo(kMul0, ctr[0]);
            auto [hi1, lo1] = mulhilo(kMul1, ctr[2]);
            ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
            key[0] += kWeyl0;
            key[1] += kWeyl1;
        }
        return ctr;
    }

    void bump_counter() {
        for (int i = 0; i < 4; ++i) {
            if (++counter_[i] != 0) break;
        }
    }

    std::array<uint64_t, 2> key_;
    std::array<uint64_t, 4> counter_;
    std::array<uint64_t, 4> buf_{};
    int buf_pos_ = 4;
    double cached_ = 0.0;
    bool has_cached_ = false;
};

// 64-bit FNV-1a, used for content hashes and token hashing
inline uint64_t fnv1a64(const void* data, size_t n, uint64_t h = 0xcbf29ce484222325ULL) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline uint64_t fnv1a64(std::string_view s) { return fnv1a64(s.data(), s.size()); }

}  // namespace choreo
