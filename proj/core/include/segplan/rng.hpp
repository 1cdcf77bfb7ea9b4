// SPDX-License-Identifier: MIT
#pragma once

#include <cstdint>

namespace segplan {

/// Stateless 64-bit mixer (SplitMix64 finalizer).
std::uint64_t mix64(std::uint64_t x) noexcept;
/// Combines two values into one seed; used for child streams and per-item seeds.
std::uint64_t hash_combine(std::uint64_t a, std::uint64_t b) noexcept;

/// Counter-based random stream: draw k is a pure function of (seed, k).
class RngStream {
public:
    explicit RngStream(std::uint64_t seed = 0) noexcept : seed_(seed) {}

    std::uint64_t seed() const noexcept { return seed_; }
    std::uint64_t counter() const noexcept { return counter_; }

    /// Draw at position counter(), then advance.
    std::uint64_t next_u64() noexcept;
    /// Uniform in [0, 1).
    double uniform01() noexcept;
    /// Uniform in [a, b].
    double uniform(double a, double b) noexcept;
    /// True with probability p.
    bool bernoulli(double p) noexcept;
    /// Standard normal via Box-Muller (consumes two draws).
    double normal() noexcept;
    /// Uniform integer in [0, n), unbiased; n must be > 0.
    std::uint64_t uniform_index(std::uint64_t n) noexcept;

    /// Independent stream for a worker: seed = hash_combine(seed, worker).
    RngStream child(std::uint64_t worker) const noexcept { return RngStream(hash_combine(seed_, worker)); }

private:
    std::uint64_t seed_;
    std::uint64_t counter_ = 0;
};

}  // namespace segplan
