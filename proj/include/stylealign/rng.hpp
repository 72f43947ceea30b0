#pragma once

// Counter-based random streams built on the SplitMix64 finalizer.
// Every draw is a pure function of (key, counter), so sequences are
// reproducible bit-for-bit on any platform with IEEE-754 doubles.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <span>
#include <vector>

namespace stylealign {

constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

constexpr auto mix64(std::uint64_t z) -> std::uint64_t {
    z += kGolden;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

// Derives an independent stream key from a parent key and a tag.
constexpr auto derive_key(std::uint64_t key, std::uint64_t tag) -> std::uint64_t {
    return mix64(key ^ mix64(tag + 0x632BE59BD9B4E019ULL));
}

class CounterRng {
  public:
    explicit constexpr CounterRng(std::uint64_t key)
        : key_(key) {}

    constexpr auto next_u64() -> std::uint64_t {
        return mix64(key_ + kGolden * ++counter_);
    }

    // Uniform in [0, 1) with 53 random bits.
    auto uniform() -> double {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    // Unbiased integer in [0, n) by rejection.
    auto below(std::uint64_t n) -> std::uint64_t {
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        std::uint64_t x = next_u64();
        while (x >= limit) {
            x = next_u64();
        }
        return x % n;
    }

    // Box-Muller; one normal per call (the sine branch is discarded).
    auto normal(double mean = 0.0, double stddev = 1.0) -> double {
        double u1 = uniform();
        while (u1 <= 0.0) {
            u1 = uniform();
        }
        const double u2 = uniform();
        return mean + stddev * std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

    [[nodiscard]] constexpr auto key() const -> std::uint64_t {
        return key_;
    }

  private:
    std::uint64_t key_;
    std::uint64_t counter_ = 0;
};

// Fisher-Yates permutation of [0, n) keyed by `key`.
inline auto seeded_permutation(std::size_t n, std::uint64_t key) -> std::vector<std::size_t> {
    std::vector<std::size_t> perm(n);
    for (std::size_t i = 0; i < n; ++i) {
        perm[i] = i;
    }
    CounterRng rng(key);
    for (std::size_t i = n; i > 1; --i) {
        const auto j = static_cast<std::size_t>(rng.below(i));
        std::swap(perm[i - 1], perm[j]);
    }
    return perm;
}

}    // namespace stylealign
