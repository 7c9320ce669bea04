#pragma once

#include <cstdint>
#include <random>

namespace vand {

/// Seeded random stream with platform-stable output. The raw engine is
/// mt19937_64 (fully specified by the standard); uniforms and normals are
/// produced from raw bits here instead of std::*_distribution so that a seed
/// yields the same sequence on every platform. Streams can be split into
/// independent child streams for parallel work.
class RandomStream {
public:
    explicit RandomStream(uint64_t seed);

    uint64_t seed() const { return seed_; }

    /// Independent stream derived from (seed, tag).
    RandomStream split(uint64_t tag) const;

    double uniform();               // [0, 1)
    double normal();                // N(0, 1), Box-Muller
    int uniform_int(int lo, int hi); // inclusive range

    void fill_uniform(double* out, int64_t n);
    void fill_normal(double* out, int64_t n);

private:
    uint64_t seed_ = 0;
    std::mt19937_64 eng_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

/// splitmix64 mixing step; used for seed derivation.
uint64_t mix_seed(uint64_t seed, uint64_t tag);

} // namespace vand
