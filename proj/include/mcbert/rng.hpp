#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <sstream>
#include <string>
#include <vector>

namespace mcbert {

// 64-bit FNV-1a. Used for seed derivation, config hashing and input hashing.
inline uint64_t fnv1a(const void* data, size_t len, uint64_t h = 0xcbf29ce484222325ull) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ull;
    }
    return h;
}

inline uint64_t fnv1a(const std::string& s, uint64_t h = 0xcbf29ce484222325ull) {
    return fnv1a(s.data(), s.size(), h);
}

// Derive an independent stream seed from (base seed, step, tag). Pure function,
// so any point of a run can be reconstructed without replaying earlier draws.
inline uint64_t derive_seed(uint64_t base, uint64_t step, const std::string& tag) {
    uint64_t h = fnv1a(&base, sizeof(base));
    h = fnv1a(&step, sizeof(step), h);
    h = fnv1a(tag.data(), tag.size(), h);
    return h;
}

// Deterministic random stream. All distributions are hand-rolled on top of the
// raw mt19937_64 output because std::*_distribution is not bit-stable across
// standard libraries.
class Rng {
public:
    explicit Rng(uint64_t seed = 0) : gen_(seed) {}

    uint64_t next_u64() { return gen_(); }

    // Uniform in [0, 1) with 53 random bits.
    double uniform() {
        return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
    }

    // Uniform integer in [0, n). Rejection-free modulo is fine here: n is tiny
    // compared to 2^64, the bias is below 1e-15.
    int64_t uniform_int(int64_t n) {
        return static_cast<int64_t>(gen_() % static_cast<uint64_t>(n));
    }

    bool bernoulli(double p) { return uniform() < p; }

    // Standard normal via polar Box-Muller (fixed algorithm, no cached spare so
    // the stream stays easy to reason about).
    double normal() {
        for (;;) {
            const double u = 2.0 * uniform() - 1.0;
            const double v = 2.0 * uniform() - 1.0;
            const double s = u * u + v * v;
            if (s > 0.0 && s < 1.0) {
                return u * std::sqrt(-2.0 * std::log(s) / s);
            }
        }
    }

    // Normal(0, std) truncated to two standard deviations by resampling.
    double truncated_normal(double stddev) {
        for (;;) {
            const double z = normal();
            if (std::fabs(z) <= 2.0) {
                return z * stddev;
            }
        }
    }

    void fill_truncated_normal(std::vector<double>& out, double stddev) {
        for (auto& x : out) {
            x = truncated_normal(stddev);
        }
    }

    // Shuffle after creating the identity permutation (Fisher-Yates).
    std::vector<int64_t> permutation(int64_t n) {
        std::vector<int64_t> p(static_cast<size_t>(n));
        for (int64_t i = 0; i < n; ++i) {
            p[static_cast<size_t>(i)] = i;
        }
        for (int64_t i = n - 1; i > 0; --i) {
            const int64_t j = uniform_int(i + 1);
            std::swap(p[static_cast<size_t>(i)], p[static_cast<size_t>(j)]);
        }
        return p;
    }

    // mt19937_64 state round-trips through text exactly (per the standard).
    std::string serialize() const {
        std::ostringstream os;
        os << gen_;
        return os.str();
    }

    void deserialize(const std::string& s) {
        std::istringstream is(s);
        is >> gen_;
    }

private:
    std::mt19937_64 gen_;
};

} // namespace mcbert
