#pragma once

// Deterministic randomness utilities. Every stochastic component draws from
// a stream derived from the root seed and a component tag, so a single
// component can be re-run in isolation and still see the same numbers.
//
// Bounded sampling and shuffling are implemented here instead of through
// std::uniform_int_distribution / std::shuffle because those are
// implementation-defined and would break byte-identical runs across
// standard libraries.

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace procrit {

// splitmix64, the usual seed expander.
inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t fnv1a64(std::string_view text) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

// Derives an independent stream seed from (root, component tag, index).
// The tag is hashed so adding components never renumbers existing streams.
inline std::uint64_t derive_seed(std::uint64_t root, std::string_view component,
                                 std::uint64_t index = 0) {
    return splitmix64(splitmix64(root ^ fnv1a64(component)) + index);
}

// Thin wrapper over mt19937_64 with portable bounded sampling.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next() { return engine_(); }

    // Uniform integer in [0, bound) by rejection, so the result does not
    // depend on how a distribution object slices the engine output.
    std::uint64_t below(std::uint64_t bound) {
        const std::uint64_t limit = std::uint64_t(-1) - std::uint64_t(-1) % bound;
        std::uint64_t value = engine_();
        while (value >= limit) value = engine_();
        return value % bound;
    }

    // Uniform real in [0, 1) from the top 53 bits.
    double unit() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    // Fisher-Yates with the portable bounded sampler above.
    template <typename T>
    void shuffle(std::vector<T>& items) {
        for (std::size_t i = items.size(); i > 1; --i) {
            std::swap(items[i - 1], items[below(i)]);
        }
    }

  private:
    std::mt19937_64 engine_;
};

}  // namespace procrit
