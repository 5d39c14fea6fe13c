#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <string_view>

namespace bsdens::numerics {

/// Philox4x32-10 block function (Salmon et al. 2011).
inline std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> ctr, std::array<std::uint32_t, 2> key) {
    constexpr std::uint32_t M0 = 0xD2511F53u, M1 = 0xCD9E8D57u;
    constexpr std::uint32_t W0 = 0x9E3779B9u, W1 = 0xBB67AE85u;
    for (int round = 0; round < 10; ++round) {
        const std::uint64_t p0 = static_cast<std::uint64_t>(M0) * ctr[0];
        const std::uint64_t p1 = static_cast<std::uint64_t>(M1) * ctr[2];
        const std::uint32_t hi0 = static_cast<std::uint32_t>(p0 >> 32), lo0 = static_cast<std::uint32_t>(p0);
        const std::uint32_t hi1 = static_cast<std::uint32_t>(p1 >> 32), lo1 = static_cast<std::uint32_t>(p1);
        ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
        key[0] += W0;
        key[1] += W1;
    }
    return ctr;
}

/// Stable 32-bit identifier for a named substream (FNV-1a).
constexpr std::uint32_t substream_id(std::string_view name) {
    std::uint32_t h = 2166136261u;
    for (char c : name) {
        h ^= static_cast<std::uint8_t>(c);
        h *= 16777619u;
    }
    return h;
}

/// Counter-based normal stream addressed by (seed, substream, path); draw i is a pure function of the
/// address, so results do not depend on evaluation order or thread count.
class NormalStream {
public:
    NormalStream(std::uint64_t seed, std::uint32_t substream, std::uint32_t path)
        : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)},
          substream_(substream), path_(path) {}

    /// Pair of independent standard normals number `block` (Box-Muller on two 53-bit uniforms).
    std::array<double, 2> pair(std::uint32_t block) const {
        const auto r = philox4x32({block, 0u, path_, substream_}, key_);
        const double u1 = to_unit(r[0], r[1]);
        const double u2 = to_unit(r[2], r[3]);
        const double rad = std::sqrt(-2.0 * std::log(u1));
        const double ang = 2.0 * std::numbers::pi * u2;
        return {rad * std::cos(ang), rad * std::sin(ang)};
    }

    double normal(std::uint32_t i) const {
        const auto p = pair(i / 2);
        return p[i % 2];
    }

    /// Uniform on (0,1).
    double uniform(std::uint32_t i) const {
        const auto r = philox4x32({i, 1u, path_, substream_}, key_);
        return to_unit(r[0], r[1]);
    }

private:
    static double to_unit(std::uint32_t hi, std::uint32_t lo) {
        const std::uint64_t bits = (static_cast<std::uint64_t>(hi) << 21) ^ (lo >> 11);
        return (static_cast<double>(bits & ((1ull << 53) - 1)) + 0.5) * 0x1.0p-53;
    }

    std::array<std::uint32_t, 2> key_;
    std::uint32_t substream_;
    std::uint32_t path_;
};

}  // namespace bsdens::numerics
