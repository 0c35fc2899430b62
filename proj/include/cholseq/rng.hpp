#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace cholseq {

/// Seeded RNG wrapper. Gaussian samples go through an explicit Box-Muller so
/// the stream does not depend on the standard library's distribution
/// implementation (determinism is part of the contract).
class Rng {
public:
    explicit Rng(uint64_t seed) : gen_(seed) {}

    double uniform() {
        // 53-bit mantissa uniform in [0, 1).
        return static_cast<double>(gen_() >> 11) * (1.0 / 9007199254740992.0);
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    double gaussian() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 2.0 * 3.14159265358979323846 * u2;
        spare_ = r * std::sin(theta);
        has_spare_ = true;
        return r * std::cos(theta);
    }

    /// Uniform integer in [0, n).
    uint64_t next_below(uint64_t n) {
        // Rejection sampling keeps the draw unbiased.
        const uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        uint64_t x = gen_();
        while (x >= limit) x = gen_();
        return x % n;
    }

    bool bernoulli(double p) { return uniform() < p; }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (size_t i = v.size(); i > 1; --i) {
            const size_t j = static_cast<size_t>(next_below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

    /// Derive an independent stream, e.g. one per cross-validation fold.
    Rng derive(uint64_t stream) const {
        uint64_t z = seed_mix_ + 0x9E3779B97F4A7C15ULL * (stream + 1);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return Rng(z ^ (z >> 31), z);
    }

    explicit Rng(uint64_t seed, uint64_t mix) : gen_(seed), seed_mix_(mix) {}

private:
    std::mt19937_64 gen_;
    uint64_t seed_mix_ = 0;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

inline Rng make_rng(uint64_t seed) { return Rng(seed, seed); }

}  // namespace cholseq
