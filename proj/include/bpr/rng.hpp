#pragma once
// Deterministic seed derivation. Every random stream in the pipeline is an
// mt19937_64 seeded from (global seed, identifying strings, counters).

#include <cstdint>
#include <initializer_list>
#include <random>
#include <string_view>

namespace bpr {

using Rng = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// 64-bit FNV-1a.
inline std::uint64_t fnv1a64(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

class SeedBuilder {
public:
    explicit SeedBuilder(std::uint64_t base) : state_(splitmix64(base)) {}

    SeedBuilder& mix(std::uint64_t v) {
        state_ = splitmix64(state_ ^ splitmix64(v + 0x632be59bd9b4e019ULL));
        return *this;
    }
    SeedBuilder& mix(std::string_view s) { return mix(fnv1a64(s)); }

    std::uint64_t value() const { return state_; }
    Rng rng() const { return Rng(state_); }

private:
    std::uint64_t state_;
};

// Stream tags keep independent uses of the same global seed apart.
namespace stream {
inline constexpr std::uint64_t kIct = 1;
inline constexpr std::uint64_t kInit = 2;
inline constexpr std::uint64_t kShuffle = 3;
inline constexpr std::uint64_t kDropout = 4;
inline constexpr std::uint64_t kSplits = 5;
inline constexpr std::uint64_t kOverlap = 6;
inline constexpr std::uint64_t kNoise = 7;
inline constexpr std::uint64_t kEvalIct = 8;
inline constexpr std::uint64_t kBootstrap = 9;
inline constexpr std::uint64_t kSynth = 10;
inline constexpr std::uint64_t kProvider = 11;
}  // namespace stream

}  // namespace bpr
