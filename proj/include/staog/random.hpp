#pragma once

#include <cstddef>
#include <cstdint>
#include <random>

namespace staog {

// Seeded random stream. Every sampling entry point takes one of these
// explicitly; concurrent chains must own independent streams.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

    double uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(engine_); }
    double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(engine_); }
    double normal() { return std::normal_distribution<double>(0.0, 1.0)(engine_); }
    std::size_t index(std::size_t n) { return std::uniform_int_distribution<std::size_t>(0, n - 1)(engine_); }
    bool coin() { return index(2) == 1; }

    // Derive an independent child stream (for per-chain or per-sample fan out).
    Rng split() { return Rng(engine_() ^ 0x9E3779B97F4A7C15ULL); }

    std::mt19937_64& engine() { return engine_; }

private:
    std::mt19937_64 engine_;
};

}  // namespace staog
