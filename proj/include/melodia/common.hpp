#pragma once

#include <cstdint>
#include <cstring>
#include <random>
#include <stdexcept>
#include <string>

namespace melodia {

enum class ErrorCode {
    invalid_argument,
    out_of_range,
    not_found,
    io_error,
    format_error,
    mismatch,
    numeric_error,
};

const char* error_code_name(ErrorCode code);

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(message), code_(code) {}

    ErrorCode code() const { return code_; }

private:
    ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
    throw Error(code, message);
}

inline void require(bool ok, ErrorCode code, const std::string& message) {
    if (!ok) fail(code, message);
}

// 64-bit FNV-1a. Used for file/blob identity hashes.
inline uint64_t fnv1a(const void* data, size_t len, uint64_t hash = 0xcbf29ce484222325ull) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (size_t i = 0; i < len; ++i) {
        hash ^= p[i];
        hash *= 0x100000001b3ull;
    }
    return hash;
}

inline uint64_t fnv1a_str(const std::string& s, uint64_t hash = 0xcbf29ce484222325ull) {
    return fnv1a(s.data(), s.size(), hash);
}

inline uint64_t fnv1a_u64(uint64_t v, uint64_t hash = 0xcbf29ce484222325ull) {
    unsigned char buf[8];
    std::memcpy(buf, &v, 8);
    return fnv1a(buf, 8, hash);
}

// splitmix64 finalizer; used to derive independent seeds from (seed, stream).
inline uint64_t mix_seed(uint64_t seed, uint64_t stream) {
    uint64_t z = seed + 0x9e3779b97f4a7c15ull * (stream + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

// Deterministic RNG: mt19937_64 plus explicit distribution code so streams do
// not depend on the standard library's distribution implementations.
class Rng {
public:
    explicit Rng(uint64_t seed) : engine_(seed) {}

    uint64_t next_u64() { return engine_(); }

    // [0, 1), 53-bit resolution
    double uniform() {
        return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Box-Muller, no spare caching: each call consumes exactly two uniforms.
    double normal() {
        double u1 = 0.0;
        do {
            u1 = uniform();
        } while (u1 <= 0.0);
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        return r * std::cos(6.283185307179586 * u2);
    }

    // inclusive range, rejection sampled (unbiased)
    int64_t uniform_int(int64_t lo, int64_t hi) {
        require(lo <= hi, ErrorCode::invalid_argument, "uniform_int: empty range");
        const uint64_t span = static_cast<uint64_t>(hi - lo) + 1;
        const uint64_t limit = UINT64_MAX - UINT64_MAX % span;
        uint64_t v = 0;
        do {
            v = engine_();
        } while (v >= limit);
        return lo + static_cast<int64_t>(v % span);
    }

    bool bernoulli(double p) { return uniform() < p; }

    Rng fork(uint64_t stream) const { return Rng(mix_seed(base_seed_of(), stream)); }

private:
    uint64_t base_seed_of() const {
        // forks derive from a hash of the engine state's next output without
        // perturbing this instance
        std::mt19937_64 copy = engine_;
        return copy();
    }

    std::mt19937_64 engine_;
};

}  // namespace melodia
