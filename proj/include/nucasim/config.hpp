#pragma once

#include <cstdint>
#include <fstream>
#include <string>

#include <json.hpp>

#include "nucasim/types.hpp"

namespace nucasim {

/// Geometry and latency constants of the simulated chip.
///
/// Defaults model an 8x8 tiled mesh: one core + private L1D per tile, one
/// LLC bank and one directory agent (CHA) per tile, X-Y routed links.
/// The latency constants are calibrated so that, noise off, a remote LLC
/// hit with CHA and forwarder both one hop away costs 40 cycles and the
/// worst-case diagonal CHA costs well above 95.
struct MachineConfig {
    int mesh_width = 8;           // tiles per row
    int mesh_height = 8;          // tiles per column
    uint32_t line_size = 64;      // bytes, power of two
    uint32_t l1_sets = 64;        // per-core L1D sets (power of two)
    uint32_t l1_ways = 8;
    uint32_t llc_sets_per_bank = 4096;  // power of two
    uint32_t llc_ways = 8;
    uint32_t lat_l1_hit = 4;      // cycles
    uint32_t lat_llc_bank = 14;   // bank array access
    uint32_t lat_cha_lookup = 6;  // directory lookup
    uint32_t lat_per_hop = 3;     // link traversal per hop
    uint32_t lat_router = 1;      // router pipeline per traversed hop
    uint32_t lat_dram = 200;      // memory access beyond the chip
    uint32_t lat_poll_iter = 6;   // one iteration of a counting/poll loop
    uint32_t lat_dirty_inval = 100;  // serialization of a dirty-owner invalidation + transfer
    double clock_hz = 1.5e9;
    uint64_t rng_seed = 1;
    double noise_stddev = 3.0;    // Gaussian cycle noise, 0 disables

    int tiles() const { return mesh_width * mesh_height; }

    /// Worst possible clean LLC-hit round trip for this geometry.
    uint32_t worst_case_llc_hit() const {
        uint32_t max_hop = static_cast<uint32_t>((mesh_width - 1) + (mesh_height - 1));
        return lat_l1_hit + lat_cha_lookup + lat_llc_bank +
               (2 * max_hop + 2 * max_hop) * (lat_per_hop + lat_router);
    }

    void validate() const {
        auto pow2 = [](uint64_t v) { return v != 0 && (v & (v - 1)) == 0; };
        if (mesh_width < 2 || mesh_height < 2)
            throw ConfigError("mesh_width and mesh_height must be >= 2");
        if (!pow2(line_size)) throw ConfigError("line_size must be a power of two");
        if (!pow2(l1_sets)) throw ConfigError("l1_sets must be a power of two");
        if (!pow2(llc_sets_per_bank)) throw ConfigError("llc_sets_per_bank must be a power of two");
        if (l1_ways == 0 || llc_ways == 0) throw ConfigError("cache ways must be > 0");
        for (auto [v, name] : {std::pair<uint32_t, const char*>{lat_l1_hit, "lat_l1_hit"},
                               {lat_llc_bank, "lat_llc_bank"},
                               {lat_cha_lookup, "lat_cha_lookup"},
                               {lat_per_hop, "lat_per_hop"},
                               {lat_router, "lat_router"},
                               {lat_dram, "lat_dram"},
                               {lat_poll_iter, "lat_poll_iter"}}) {
            if (v == 0) throw ConfigError(std::string(name) + " must be > 0");
        }
        if (!(lat_dram > lat_llc_bank && lat_llc_bank > lat_l1_hit))
            throw ConfigError("expected lat_dram > lat_llc_bank > lat_l1_hit");
        if (noise_stddev < 0) throw ConfigError("noise_stddev must be >= 0");
        if (clock_hz <= 0) throw ConfigError("clock_hz must be > 0");
    }
};

inline void to_json(nlohmann::json& j, const MachineConfig& c) {
    j = nlohmann::json{{"mesh_width", c.mesh_width},
                       {"mesh_height", c.mesh_height},
                       {"line_size", c.line_size},
                       {"l1_sets", c.l1_sets},
                       {"l1_ways", c.l1_ways},
                       {"llc_sets_per_bank", c.llc_sets_per_bank},
                       {"llc_ways", c.llc_ways},
                       {"lat_l1_hit", c.lat_l1_hit},
                       {"lat_llc_bank", c.lat_llc_bank},
                       {"lat_cha_lookup", c.lat_cha_lookup},
                       {"lat_per_hop", c.lat_per_hop},
                       {"lat_router", c.lat_router},
                       {"lat_dram", c.lat_dram},
                       {"lat_poll_iter", c.lat_poll_iter},
                       {"lat_dirty_inval", c.lat_dirty_inval},
                       {"clock_hz", c.clock_hz},
                       {"rng_seed", c.rng_seed},
                       {"noise_stddev", c.noise_stddev}};
}

inline void from_json(const nlohmann::json& j, MachineConfig& c) {
    MachineConfig defaults;
    c = defaults;
    auto get = [&](const char* key, auto& field) {
        if (j.contains(key)) j.at(key).get_to(field);
    };
    get("mesh_width", c.mesh_width);
    get("mesh_height", c.mesh_height);
    get("line_size", c.line_size);
    get("l1_sets", c.l1_sets);
    get("l1_ways", c.l1_ways);
    get("llc_sets_per_bank", c.llc_sets_per_bank);
    get("llc_ways", c.llc_ways);
    get("lat_l1_hit", c.lat_l1_hit);
    get("lat_llc_bank", c.lat_llc_bank);
    get("lat_cha_lookup", c.lat_cha_lookup);
    get("lat_per_hop", c.lat_per_hop);
    get("lat_router", c.lat_router);
    get("lat_dram", c.lat_dram);
    get("lat_poll_iter", c.lat_poll_iter);
    get("lat_dirty_inval", c.lat_dirty_inval);
    get("clock_hz", c.clock_hz);
    get("rng_seed", c.rng_seed);
    get("noise_stddev", c.noise_stddev);
}

inline MachineConfig load_machine_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("malformed JSON in " + path + ": " + e.what());
    }
    MachineConfig cfg = j.contains("machine") ? j.at("machine").get<MachineConfig>()
                                              : j.get<MachineConfig>();
    cfg.validate();
    return cfg;
}

}  // namespace nucasim
