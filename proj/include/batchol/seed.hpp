#pragma once

#include <cstdint>

namespace batchol {

/// splitmix64 finalizer.
constexpr std::uint64_t splitmix64(std::uint64_t z) noexcept {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/// Seed for sub-stream `index` of purpose `tag` under a master seed. Every
/// random draw in the project flows from the master seed through this.
constexpr std::uint64_t derive_seed(std::uint64_t master, std::uint64_t tag,
                                    std::uint64_t index = 0) noexcept {
    return splitmix64(splitmix64(splitmix64(master) ^ tag) ^ index);
}

namespace seed_tag {
inline constexpr std::uint64_t kTruth = 1;
inline constexpr std::uint64_t kDay = 2;
inline constexpr std::uint64_t kCorruption = 3;
inline constexpr std::uint64_t kStrategy = 4;
inline constexpr std::uint64_t kCalibration = 5;
inline constexpr std::uint64_t kTheorem = 6;
}  // namespace seed_tag

}  // namespace batchol
