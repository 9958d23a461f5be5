#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>
#include <utility>
#include <vector>

namespace ppg {

// splitmix64; used both as a tiny generator and to derive per-stage seeds
// from one global seed so stages are independently reproducible.
struct SplitMix64 {
    std::uint64_t state;

    explicit SplitMix64(std::uint64_t seed) : state(seed) {}

    std::uint64_t next() {
        std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }
};

inline std::uint64_t derive_seed(std::uint64_t base, std::string_view label) {
    // FNV-1a over the label, mixed with the base through splitmix.
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (char c : label) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ULL;
    }
    SplitMix64 sm(base ^ h);
    sm.next();
    return sm.next();
}

// Deterministic RNG with hand-rolled uniform/normal so trajectories are
// bit-identical across compilers (std distributions are not portable).
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : sm_(seed) {
        // warm up
        sm_.next();
        sm_.next();
    }

    std::uint64_t next_u64() { return sm_.next(); }

    // uniform in [0, 1)
    double uniform() { return static_cast<double>(sm_.next() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // index in [0, n)
    std::size_t index(std::size_t n) { return static_cast<std::size_t>(sm_.next() % n); }

    // standard normal via Box-Muller (cached second draw)
    double normal() {
        if (have_cached_) {
            have_cached_ = false;
            return cached_;
        }
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        double u2 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 6.283185307179586476925286766559 * u2;
        cached_ = r * std::sin(a);
        have_cached_ = true;
        return r * std::cos(a);
    }

    double normal(double mean, double std) { return mean + std * normal(); }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = index(i);
            std::swap(v[i - 1], v[j]);
        }
    }

  private:
    SplitMix64 sm_;
    bool have_cached_ = false;
    double cached_ = 0.0;
};

}  // namespace ppg
