#pragma once

#include <cmath>
#include <cstdint>
#include <string>

namespace talon {

/// Counter-based deterministic PRNG keyed by (seed, stream name, draw index).
/// Any draw can be replayed by reconstructing the stream and counter, which is
/// what grad checks rely on to freeze stochastic paths.
class Rng {
public:
    Rng(std::uint64_t seed, const std::string& stream)
        : seed_(seed), stream_(stream), key_(derive_key(seed, stream)), counter_(0) {}

    std::uint64_t seed() const { return seed_; }
    const std::string& stream() const { return stream_; }
    std::uint64_t counter() const { return counter_; }
    void set_counter(std::uint64_t c) { counter_ = c; }

    /// Derived sub-stream; independent of this stream's counter.
    Rng fork(const std::string& suffix) const { return Rng(seed_, stream_ + "/" + suffix); }

    std::uint64_t next_u64() { return mix(key_ + GOLDEN * ++counter_); }

    /// Uniform in [0, 1).
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Standard normal via Box-Muller; consumes two raw draws.
    double normal() {
        double u1 = static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;  // (0, 1]
        double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * PI * u2);
    }

private:
    static constexpr std::uint64_t GOLDEN = 0x9E3779B97F4A7C15ull;
    static constexpr double PI = 3.14159265358979323846;

    static std::uint64_t fnv1a(const std::string& s) {
        std::uint64_t h = 0xcbf29ce484222325ull;
        for (unsigned char c : s) {
            h ^= c;
            h *= 0x100000001b3ull;
        }
        return h;
    }

    // splitmix64 finalizer
    static std::uint64_t mix(std::uint64_t z) {
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return z ^ (z >> 31);
    }

    static std::uint64_t derive_key(std::uint64_t seed, const std::string& stream) {
        return mix(seed * GOLDEN ^ fnv1a(stream));
    }

    std::uint64_t seed_;
    std::string stream_;
    std::uint64_t key_;
    std::uint64_t counter_;
};

}  // namespace talon
