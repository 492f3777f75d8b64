// rng.hpp - deterministic per-stream random numbers
//
// Every Monte Carlo consumer owns one stream per logical unit (one per
// particle, one per probe batch, ...). Stream seeds are derived by mixing a
// base seed with the stream id, so results never depend on thread count or
// iteration order.
#pragma once

#include <cstdint>
#include <random>

namespace mfbsde {

// splitmix64 step; good avalanche, used only for seed derivation
inline std::uint64_t mix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

inline std::uint64_t stream_seed(std::uint64_t base, std::uint64_t stream) {
    return mix64(mix64(base) ^ mix64(stream + 0x9e3779b97f4a7c15ull));
}

// one gaussian stream: N(0,1) variates, deterministic for a given seed
class GaussianStream {
  public:
    explicit GaussianStream(std::uint64_t seed) : gen_(seed) {}
    double next() { return dist_(gen_); }

  private:
    std::mt19937_64 gen_;
    std::normal_distribution<double> dist_{0.0, 1.0};
};

} // namespace mfbsde
