#pragma once

#include <cstdint>
#include <vector>

namespace noboxlab {

// Deterministic generator. std::*_distribution is implementation-defined, so
// uniform/normal draws are produced here directly; identical seeds give
// identical streams on any conforming toolchain.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {
        // Warm up so nearby seeds diverge immediately.
        next_u64();
        next_u64();
    }

    std::uint64_t next_u64() {
        // splitmix64
        std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

    // Uniform in [0, 1).
    double uniform() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) {
        return lo + (hi - lo) * uniform();
    }

    // Standard normal via Box-Muller (no cached spare: keeps the stream
    // position a pure function of draw count).
    double normal();

    // Uniform integer in [0, n).
    std::uint64_t below(std::uint64_t n) {
        return next_u64() % n;
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        if (v.size() < 2) return;
        for (std::size_t i = v.size() - 1; i > 0; --i) {
            std::size_t j = static_cast<std::size_t>(below(i + 1));
            std::swap(v[i], v[j]);
        }
    }

    // Derive an independent stream, e.g. per-epoch shuffles.
    static std::uint64_t mix(std::uint64_t seed, std::uint64_t salt);

private:
    std::uint64_t state_;
};

}
