#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string_view>
#include <utility>

namespace annoembed {

// Seeded generator used everywhere in the toolkit.
//
// The engine is std::mt19937_64, whose output sequence is fixed by the C++
// standard. The standard distributions are not portable, so every
// conversion (uniform doubles, bounded integers, normals) is done here:
//   uniform01      (x >> 11) * 2^-53
//   uniform_index  rejection sampling on the top of the 64-bit range
//   normal         Box-Muller, one value per pair of uniforms
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }
    double uniform01();
    // Uniform integer in [0, n). n must be positive.
    std::uint64_t uniform_index(std::uint64_t n);
    double normal(double mean = 0.0, double stddev = 1.0);
    bool bernoulli(double p) { return uniform01() < p; }

    // Fisher-Yates, back to front.
    template <typename T>
    void shuffle(std::span<T> items) {
        for (std::size_t i = items.size(); i > 1; --i) {
            auto j = static_cast<std::size_t>(uniform_index(i));
            std::swap(items[i - 1], items[j]);
        }
    }

private:
    std::mt19937_64 engine_;
};

std::uint64_t splitmix64(std::uint64_t x);

// Counter scheme for sub-seeds: derive_seed(master, k) = splitmix64(master + k * golden).
// Distinct counters give independent streams from one master seed.
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t counter);

// FNV-1a, used to key per-string seeds (e.g. rows for unseen annotators).
std::uint64_t fnv1a(std::string_view s);

}  // namespace annoembed
