#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace llie {

inline constexpr std::uint64_t kFnvOffset = 0xcbf29ce484222325ull;

/// 64-bit FNV-1a, chainable through `state`.
inline std::uint64_t fnv1a(const void* data, std::size_t size, std::uint64_t state = kFnvOffset) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < size; ++i) {
        state ^= p[i];
        state *= 0x100000001b3ull;
    }
    return state;
}

inline std::uint64_t fnv1a(std::string_view s, std::uint64_t state = kFnvOffset) {
    return fnv1a(s.data(), s.size(), state);
}

/// Well-mixed derived seed for a named sub-stream.
inline std::uint64_t derive_seed(std::uint64_t seed, std::string_view tag) {
    std::uint64_t z = fnv1a(tag, seed ^ 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

inline std::string hex64(std::uint64_t v) {
    static constexpr char digits[] = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i, v >>= 4) out[i] = digits[v & 0xf];
    return out;
}

}  // namespace llie
