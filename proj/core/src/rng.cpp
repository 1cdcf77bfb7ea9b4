// SPDX-License-Identifier: MIT
#include "segplan/rng.hpp"

#include <cmath>
#include <numbers>

namespace segplan {

std::uint64_t mix64(std::uint64_t x) noexcept {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

std::uint64_t hash_combine(std::uint64_t a, std::uint64_t b) noexcept {
    return mix64(mix64(a) ^ (b + 0x632be59bd9b4e019ULL + (a << 6) + (a >> 2)));
}

std::uint64_t RngStream::next_u64() noexcept {
    return mix64(mix64(seed_) + 0x9e3779b97f4a7c15ULL * (counter_++));
}

double RngStream::uniform01() noexcept { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

double RngStream::uniform(double a, double b) noexcept {
    const double v = a + (b - a) * uniform01();
    return v > b ? b : v;
}

bool RngStream::bernoulli(double p) noexcept { return uniform01() < p; }

double RngStream::normal() noexcept {
    const double u1 = 1.0 - uniform01();
    const double u2 = uniform01();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::uint64_t RngStream::uniform_index(std::uint64_t n) noexcept {
    const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
    std::uint64_t x = next_u64();
    while (x >= limit) x = next_u64();
    return x % n;
}

}  // namespace segplan
