#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace cfmia {

// Base class for all library errors so callers can catch one type at the
// boundary (the CLI maps these to exit codes).
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

class ParseError : public Error {
public:
    using Error::Error;
};
class SchemaError : public Error {
public:
    using Error::Error;
};
class ShapeError : public Error {
public:
    using Error::Error;
};
class SizeError : public Error {
public:
    using Error::Error;
};
class NumericError : public Error {
public:
    using Error::Error;
};
class CalibrationError : public Error {
public:
    using Error::Error;
};
class QuotaError : public Error {
public:
    using Error::Error;
};
class NoCounterfactualError : public Error {
public:
    using Error::Error;
};
class DegenerateLabelsError : public Error {
public:
    using Error::Error;
};
class UndefinedMetricError : public Error {
public:
    using Error::Error;
};
class ConfigError : public Error {
public:
    using Error::Error;
};

using RowId = std::int64_t;

// Deterministic RNG used everywhere. std::mt19937_64 keeps the engine
// portable, but distributions are hand-rolled because the standard library
// leaves distribution algorithms implementation-defined and reproducibility
// across stdlib versions is part of the contract.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed ? seed : 0x9e3779b97f4a7c15ULL) {}

    std::uint64_t next_u64() {
        // splitmix64
        std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    // Uniform in [0, 1).
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // Uniform in [lo, hi).
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [0, n).
    std::uint64_t uniform_int(std::uint64_t n) {
        // Lemire-style rejection-free enough for our n << 2^64; use modulo of a
        // fresh draw with rejection to stay exactly uniform.
        if (n == 0) return 0;
        const std::uint64_t threshold = (0 - n) % n;
        for (;;) {
            const std::uint64_t r = next_u64();
            if (r >= threshold) return r % n;
        }
    }

    // Standard normal via Box-Muller (deterministic across platforms).
    double gaussian() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        while (u1 <= 1e-300) u1 = uniform();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 2.0 * 3.14159265358979323846 * u2;
        spare_ = r * std::sin(theta);
        have_spare_ = true;
        return r * std::cos(theta);
    }

    double gaussian(double mean, double stddev) { return mean + stddev * gaussian(); }

    // Fisher-Yates; std::shuffle is implementation-defined so we roll our own.
    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            const std::size_t j = static_cast<std::size_t>(uniform_int(i));
            std::swap(v[i - 1], v[j]);
        }
    }

    // Sample k distinct elements (order = selection order) without replacement.
    template <typename T>
    std::vector<T> sample(const std::vector<T>& v, std::size_t k) {
        std::vector<T> pool = v;
        shuffle(pool);
        if (k < pool.size()) pool.resize(k);
        return pool;
    }

private:
    std::uint64_t state_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

// Stable FNV-1a over a string tag; used to derive independent seed streams.
inline std::uint64_t hash_tag(const std::string& tag) {
    std::uint64_t h = 14695981039346656037ULL;
    for (unsigned char c : tag) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

// Derives a child seed from (master, purpose tag, index). Children are
// independent streams: same master + tag + index always yields the same seed.
inline std::uint64_t derive_seed(std::uint64_t master, const std::string& tag, std::uint64_t index = 0) {
    Rng r(master ^ hash_tag(tag) ^ (0x632be59bd9b4e019ULL * (index + 1)));
    return r.next_u64();
}

}  // namespace cfmia
