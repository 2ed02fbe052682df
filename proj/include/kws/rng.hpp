#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>

namespace kws {

// Counter-based random stream. Each draw is a pure function of
// (seed, stream label, counter), so independent streams can be generated
// in any order, on any platform, with identical results.
class Rng {
  public:
    Rng(std::uint64_t seed, std::string_view stream) : key_(mix(seed ^ kKeySalt, fnv1a(stream))) {}

    Rng(std::uint64_t seed, std::string_view stream, std::uint64_t substream)
        : key_(mix(mix(seed ^ kKeySalt, fnv1a(stream)), substream)) {}

    std::uint64_t next_u64() { return mix(key_, ++counter_); }

    // Uniform in [0, 1)
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Integer in [lo, hi] inclusive
    int uniform_int(int lo, int hi) {
        std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
        return lo + static_cast<int>(next_u64() % span);
    }

    // Standard normal via Box-Muller (hand-rolled: std::normal_distribution
    // is implementation-defined and would break cross-platform determinism).
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        double u2 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(a);
        have_spare_ = true;
        return r * std::cos(a);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    // He-uniform: U(-sqrt(6/fan_in), sqrt(6/fan_in))
    double he_uniform(int fan_in) {
        double limit = std::sqrt(6.0 / static_cast<double>(fan_in));
        return uniform(-limit, limit);
    }

    static std::uint64_t fnv1a(std::string_view s) {
        std::uint64_t h = 1469598103934665603ULL;
        for (char c : s) {
            h ^= static_cast<unsigned char>(c);
            h *= 1099511628211ULL;
        }
        return h;
    }

  private:
    static constexpr std::uint64_t kKeySalt = 0x6b77732d726e6701ULL;

    // splitmix64 finalizer over key + golden-ratio-spaced counter
    static std::uint64_t mix(std::uint64_t key, std::uint64_t ctr) {
        std::uint64_t z = key + 0x9E3779B97F4A7C15ULL * (ctr + 1);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    std::uint64_t key_;
    std::uint64_t counter_ = 0;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

}  // namespace kws
