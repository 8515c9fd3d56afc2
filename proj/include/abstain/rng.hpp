#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace abstain {

using Rng = std::mt19937_64;

/// Derives an independent seed for a named random substream ("split", "init",
/// "batch", ...) so partial pipelines reproduce without replaying earlier draws.
constexpr std::uint64_t derive_seed(std::uint64_t root, std::string_view stream) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (char c : stream) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ULL;
    }
    std::uint64_t z = root ^ h;
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

constexpr std::uint64_t derive_seed(std::uint64_t root, std::string_view stream, std::uint64_t index) {
    return derive_seed(derive_seed(root, stream) + index, "index");
}

}  // namespace abstain
