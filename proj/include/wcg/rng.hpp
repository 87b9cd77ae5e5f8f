#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <vector>

namespace wcg {

// splitmix64 step; used to turn (seed, tag...) tuples into stream seeds.
inline std::uint64_t mix64(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t seed) { return mix64(seed); }

template <class... Rest>
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t head, Rest... rest) {
    return derive_seed(mix64(seed ^ mix64(head + 0x6a09e667f3bcc909ULL)), rest...);
}

// Deterministic RNG stream. mt19937_64 raw output is fully specified by the
// standard; distributions are implemented here so results are stable across
// library versions.
class Rng {
  public:
    Rng() : engine_(0x853c49e6748fea9bULL) {}
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    // uniform in [0,1)
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // uniform integer in [0, n), n >= 1
    std::size_t uniform_below(std::size_t n) {
        // rejection sampling on the top bits; unbiased
        const std::uint64_t bound = n;
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
        std::uint64_t x;
        do {
            x = next_u64();
        } while (x >= limit);
        return static_cast<std::size_t>(x % bound);
    }

    // standard normal via polar method
    double normal() {
        double u, v, s;
        do {
            u = 2.0 * uniform() - 1.0;
            v = 2.0 * uniform() - 1.0;
            s = u * u + v * v;
        } while (s >= 1.0 || s == 0.0);
        return u * std::sqrt(-2.0 * std::log(s) / s);
    }

    // index into a discrete distribution given by non-negative weights
    // summing approximately to 1; the last index absorbs rounding slack.
    std::size_t categorical(std::span<const double> probs) {
        const double u = uniform();
        double acc = 0.0;
        for (std::size_t k = 0; k + 1 < probs.size(); ++k) {
            acc += probs[k];
            if (u < acc) return k;
        }
        return probs.empty() ? 0 : probs.size() - 1;
    }

    std::size_t categorical(const std::vector<double>& probs) {
        return categorical(std::span<const double>(probs.data(), probs.size()));
    }

  private:
    std::mt19937_64 engine_;
};

} // namespace wcg
