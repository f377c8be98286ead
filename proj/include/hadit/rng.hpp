#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace hadit {

// All randomness in the project flows from one named seed. Sub-streams are
// derived by hashing (seed, tag, index) with splitmix64, so any step of any
// pipeline can be reproduced in isolation without replaying a global engine.
inline uint64_t splitmix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

inline uint64_t derive_seed(uint64_t seed, uint64_t tag, uint64_t index = 0) {
    return splitmix64(splitmix64(seed ^ 0x5851f42d4c957f2dull) ^ splitmix64(tag) ^
                      splitmix64(index * 0x2545f4914f6cdd1dull + 0x9e3779b9ull));
}

// Deterministic RNG wrapper. mt19937_64's output sequence is pinned by the
// standard; the distributions below are hand-rolled so results are identical
// across standard libraries.
class Rng {
public:
    explicit Rng(uint64_t seed) : eng_(seed) {}

    uint64_t next_u64() { return eng_(); }

    // Uniform in [0, 1).
    double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [0, n).
    uint64_t below(uint64_t n) { return eng_() % n; }

    // Standard normal via Box-Muller.
    double gaussian() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 2.0 * 3.14159265358979323846 * u2;
        spare_ = r * std::sin(a);
        have_spare_ = true;
        return r * std::cos(a);
    }

private:
    std::mt19937_64 eng_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace hadit
