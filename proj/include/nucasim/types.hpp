#pragma once

#include <cstdint>
#include <cstdlib>
#include <stdexcept>
#include <string>

namespace nucasim {

/// Where a memory request was resolved.
enum class HitLevel : uint8_t { L1, LLC_LOCAL, LLC_REMOTE, DRAM };

inline const char* to_string(HitLevel h) {
    switch (h) {
        case HitLevel::L1: return "L1";
        case HitLevel::LLC_LOCAL: return "LLC_LOCAL";
        case HitLevel::LLC_REMOTE: return "LLC_REMOTE";
        case HitLevel::DRAM: return "DRAM";
    }
    return "?";
}

/// Mesh tile coordinate. `linear()` is the row-major index used everywhere
/// a dense per-tile array is indexed.
struct TileId {
    int x = 0;
    int y = 0;

    static TileId from_linear(int idx, int mesh_width) {
        return TileId{idx % mesh_width, idx / mesh_width};
    }
    int linear(int mesh_width) const { return y * mesh_width + x; }

    bool operator==(const TileId&) const = default;
};

/// Manhattan distance, matching X-Y routing on the mesh.
inline int hop_distance(TileId a, TileId b) {
    return std::abs(a.x - b.x) + std::abs(a.y - b.y);
}

/// 64-bit simulated physical address (identity-mapped, no paging model).
struct PhysAddr {
    uint64_t raw = 0;

    constexpr PhysAddr() = default;
    constexpr explicit PhysAddr(uint64_t r) : raw(r) {}

    bool operator==(const PhysAddr&) const = default;
    auto operator<=>(const PhysAddr&) const = default;
};

/// Outcome of one simulated memory operation.
struct MemResult {
    uint32_t latency = 0;   // round-trip cycles, noise included
    HitLevel hit_level = HitLevel::L1;
    TileId serving_tile;    // tile that supplied the data (requester itself for L1/DRAM)
    TileId cha_tile;        // directory tile for the line
};

struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

struct ScenarioError : std::runtime_error {
    explicit ScenarioError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace nucasim
