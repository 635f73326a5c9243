#pragma once

#include <cstdint>
#include <random>
#include <sstream>
#include <string>

namespace unloader {

// Deterministic helpers on top of mt19937_64. The std:: distributions are
// implementation-defined, so all sampling goes through these to keep outputs
// identical across compilers.

inline std::uint64_t splitmix64(std::uint64_t x)
{
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Derive an independent stream id from a base seed and a salt.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt)
{
    return splitmix64(seed ^ splitmix64(salt));
}

inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b)
{
    return mix_seed(mix_seed(seed, a), b);
}

// Uniform integer in [lo, hi], inclusive. Modulo bias is irrelevant at the
// span sizes used here; determinism is what matters.
inline int uniform_int(std::mt19937_64& g, int lo, int hi)
{
    if (hi <= lo) {
        return lo;
    }
    const std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
    return lo + static_cast<int>(g() % span);
}

// Uniform real in [lo, hi).
inline double uniform_real(std::mt19937_64& g, double lo, double hi)
{
    const double u = (g() >> 11) * 0x1.0p-53;  // [0,1) with 53 bits
    return lo + u * (hi - lo);
}

inline bool bernoulli(std::mt19937_64& g, double p)
{
    if (p <= 0.0) {
        return false;
    }
    if (p >= 1.0) {
        return true;
    }
    return uniform_real(g, 0.0, 1.0) < p;
}

inline std::string rng_to_string(const std::mt19937_64& g)
{
    std::ostringstream os;
    os << g;
    return os.str();
}

inline void rng_from_string(std::mt19937_64& g, const std::string& s)
{
    std::istringstream is(s);
    is >> g;
}

}  // namespace unloader
