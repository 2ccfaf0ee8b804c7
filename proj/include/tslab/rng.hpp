#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

// Deterministic random generation. Everything that draws randomness in this
// library goes through SplitMix64 streams so results are reproducible
// bit-for-bit across runs and platforms (no std::*_distribution, whose
// outputs are implementation-defined).

namespace tslab {

inline std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// Stateless key derivation: mixes a seed with stream tags (epoch, step,
// purpose constants) into an independent stream seed.
inline std::uint64_t mix_key(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0) {
    std::uint64_t s = seed;
    std::uint64_t x = splitmix64(s);
    s = x ^ (a + 0x9e3779b97f4a7c15ULL);
    x = splitmix64(s);
    s = x ^ (b + 0xbf58476d1ce4e5b9ULL);
    return splitmix64(s);
}

class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() { return splitmix64(state_); }

    // Uniform in [0, 1), 53-bit resolution.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + uniform() * (hi - lo); }

    // Box-Muller, cosine branch only. Two draws per variate keeps the
    // stream layout independent of call history.
    double gaussian() {
        double u1 = uniform();
        double u2 = uniform();
        double r = std::sqrt(-2.0 * std::log(1.0 - u1));
        return r * std::cos(6.283185307179586476925286766559 * u2);
    }

    double gaussian(double mean, double sigma) { return mean + sigma * gaussian(); }

    // Bounded draw via modulo; bias is negligible for n << 2^64.
    std::size_t below(std::size_t n) { return static_cast<std::size_t>(next_u64() % n); }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = below(i);
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    std::uint64_t state_;
};

// Stream tags for deriving independent substreams from one experiment seed.
namespace rng_tag {
inline constexpr std::uint64_t kWeightInit = 0x01;
inline constexpr std::uint64_t kBatchShuffle = 0x02;
inline constexpr std::uint64_t kAugment = 0x03;
inline constexpr std::uint64_t kProbeInit = 0x04;
inline constexpr std::uint64_t kSchedule = 0x05;
inline constexpr std::uint64_t kDataset = 0x06;
}  // namespace rng_tag

}  // namespace tslab
