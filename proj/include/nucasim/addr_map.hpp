#pragma once

#include <cstdint>

#include "nucasim/config.hpp"
#include "nucasim/types.hpp"

namespace nucasim {

// Pure address decomposition. All functions depend only on the line address,
// so two byte addresses inside the same cache line always agree.

inline uint64_t line_offset(PhysAddr a, const MachineConfig& cfg) {
    return a.raw & (cfg.line_size - 1);
}

inline uint64_t line_addr(PhysAddr a, const MachineConfig& cfg) {
    return a.raw & ~static_cast<uint64_t>(cfg.line_size - 1);
}

inline uint64_t line_number(PhysAddr a, const MachineConfig& cfg) {
    return a.raw / cfg.line_size;
}

/// LLC bank select: the bits directly above the line offset, modulo the
/// tile count. For 64 tiles and 64-byte lines this is bits [11:6], which
/// maps 0xc6fc0 to bank 63 and 0xc7000 to bank 0.
inline TileId bank_of(PhysAddr a, const MachineConfig& cfg) {
    int bank = static_cast<int>(line_number(a, cfg) % static_cast<uint64_t>(cfg.tiles()));
    return TileId::from_linear(bank, cfg.mesh_width);
}

/// Directory (CHA) home of a line: a multiplicative hash of the line
/// address reduced mod the tile count, so consecutive lines scatter across
/// the mesh the way a real address hash does.
inline TileId cha_of(PhysAddr a, const MachineConfig& cfg) {
    uint64_t line = line_addr(a, cfg);
    uint64_t h = (line * 0x9E3779B97F4A7C15ull) >> 40;
    return TileId::from_linear(static_cast<int>(h % static_cast<uint64_t>(cfg.tiles())),
                               cfg.mesh_width);
}

/// L1 set index for a line.
inline uint32_t l1_set_of(PhysAddr a, const MachineConfig& cfg) {
    return static_cast<uint32_t>(line_number(a, cfg) & (cfg.l1_sets - 1));
}

/// LLC set index within a bank: the low line-number bits. Lines land in the
/// bank of whichever tile fetched them, so consecutive lines held by one
/// tile must spread across its sets.
inline uint32_t llc_set_of(PhysAddr a, const MachineConfig& cfg) {
    return static_cast<uint32_t>(line_number(a, cfg) & (cfg.llc_sets_per_bank - 1));
}

}  // namespace nucasim
