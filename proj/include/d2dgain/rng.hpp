#pragma once

#include <cstdint>
#include <cmath>
#include <random>

namespace d2dgain {

// splitmix64; used to derive independent stream seeds from one base seed.
inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
    return splitmix64(base + 0x9E3779B97F4A7C15ULL * (stream + 1));
}

// Named sub-streams so draw order in one stage can change without
// perturbing the others (topology must stay fixed while users move).
enum : std::uint64_t {
    kStreamBuildings = 1,
    kStreamBs = 2,
    kStreamUsers = 3,
    kStreamSamples = 1000,      // + chunk index
    kStreamNoise = 1000000ULL,  // + chunk index
    kStreamValSplit = 4,
    kStreamInit = 5,
    kStreamSplit = 6,
    kStreamDrops = 2000000ULL,  // + n_pairs * 100000 + drop index
};

// mt19937_64 with hand-rolled uniform/normal transforms. The engine's
// output sequence is pinned by the standard, and avoiding
// std::*_distribution keeps draws identical across standard libraries.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    std::uint64_t next_u64() { return gen_(); }

    // [0, 1), 53-bit resolution
    double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // standard normal via Box-Muller (no cached spare: call order == draw order)
    double normal() {
        double u1 = 1.0 - uniform();  // (0, 1], keeps the log finite
        double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
    }

private:
    std::mt19937_64 gen_;
};

}  // namespace d2dgain
