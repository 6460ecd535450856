#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace attnscope::rng {

// splitmix64; used to derive independent per-item stream seeds so that
// parallelising over items cannot change any output.
inline std::uint64_t splitmix64(std::uint64_t& state) {
    state += 0x9e3779b97f4a7c15ULL;
    std::uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b = 0) {
    std::uint64_t s = base;
    std::uint64_t h = splitmix64(s);
    s ^= a * 0x9e3779b97f4a7c15ULL;
    h ^= splitmix64(s);
    s ^= b * 0xc2b2ae3d27d4eb4fULL;
    h ^= splitmix64(s);
    return h;
}

// mt19937_64 with hand-rolled distributions. The standard distribution
// classes are implementation-defined, so using them would make seeds
// non-portable across libstdc++/libc++ builds.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    // uniform in [0,1), 53-bit resolution
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // uniform integer in [0,n); modulo bias is irrelevant at these sizes
    std::uint64_t bounded(std::uint64_t n) { return n == 0 ? 0 : engine_() % n; }

    double normal(double mean = 0.0, double sd = 1.0) {
        // Box-Muller, one value per call (second root discarded)
        double u1 = uniform();
        double u2 = uniform();
        if (u1 < 1e-300) u1 = 1e-300;
        double z = std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
        return mean + sd * z;
    }

    // normal truncated to mean +/- 2 sd, by rejection
    double truncated_normal(double mean, double sd) {
        for (;;) {
            double z = normal(0.0, 1.0);
            if (std::fabs(z) <= 2.0) return mean + sd * z;
        }
    }

    bool bernoulli(double p) { return uniform() < p; }

    // index into a discrete distribution given by nonnegative weights
    std::size_t categorical(const std::vector<double>& weights) {
        double total = 0.0;
        for (double w : weights) total += w;
        double u = uniform() * total;
        double acc = 0.0;
        for (std::size_t i = 0; i < weights.size(); ++i) {
            acc += weights[i];
            if (u < acc) return i;
        }
        return weights.empty() ? 0 : weights.size() - 1;
    }

    // Fisher-Yates; std::shuffle is implementation-defined
    template <class T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = bounded(i);
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    std::mt19937_64 engine_;
};

}  // namespace attnscope::rng
