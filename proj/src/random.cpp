#include "vand/random.hpp"

#include <cmath>

namespace vand {

namespace {

uint64_t splitmix64(uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

constexpr double kTwoPi = 6.283185307179586476925286766559;

} // namespace

uint64_t mix_seed(uint64_t seed, uint64_t tag) {
    return splitmix64(seed ^ splitmix64(tag + 1));
}

RandomStream::RandomStream(uint64_t seed) : seed_(seed), eng_(seed) {}

RandomStream RandomStream::split(uint64_t tag) const {
    return RandomStream(mix_seed(seed_, tag));
}

double RandomStream::uniform() {
    // 53 random bits mapped to [0, 1)
    return static_cast<double>(eng_() >> 11) * 0x1.0p-53;
}

double RandomStream::normal() {
    if (have_spare_) {
        have_spare_ = false;
        return spare_;
    }
    double u1 = uniform();
    if (u1 <= 0.0) u1 = 0x1.0p-53;
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    spare_ = r * std::sin(kTwoPi * u2);
    have_spare_ = true;
    return r * std::cos(kTwoPi * u2);
}

int RandomStream::uniform_int(int lo, int hi) {
    const int span = hi - lo + 1;
    int v = lo + static_cast<int>(uniform() * static_cast<double>(span));
    if (v > hi) v = hi;
    return v;
}

void RandomStream::fill_uniform(double* out, int64_t n) {
    for (int64_t i = 0; i < n; ++i) out[i] = uniform();
}

void RandomStream::fill_normal(double* out, int64_t n) {
    for (int64_t i = 0; i < n; ++i) out[i] = normal();
}

} // namespace vand
