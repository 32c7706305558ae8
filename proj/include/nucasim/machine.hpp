#pragma once

#include <algorithm>
#include <array>
#include <bitset>
#include <cassert>
#include <cstdint>
#include <optional>
#include <random>
#include <unordered_map>
#include <vector>

#include "nucasim/addr_map.hpp"
#include "nucasim/config.hpp"
#include "nucasim/types.hpp"

namespace nucasim {

enum class Coherence : uint8_t { Invalid, Shared, Exclusive, Modified, Forward };

/// Inspection snapshot of one L1 line (tests and debug tooling).
struct CacheLineState {
    uint64_t tag = 0;  // line address
    Coherence coherence = Coherence::Invalid;
    std::optional<TileId> owner_tile;
    uint32_t lru_rank = 0;
};

/// Cycle-approximate model of a tiled mesh NUCA chip.
///
/// Each tile has a core with a private L1D and one LLC bank; a distributed
/// directory (one CHA per tile, selected by an address hash) arbitrates
/// coherence. An LLC line lives in the bank of whichever tile first fetched
/// it from memory; the directory remembers that bank as the forwarding tile.
/// A request that misses L1 and the local bank travels to the CHA and the
/// data returns from the forwarder, so the round trip grows with both
/// distances. Every operation returns its latency in cycles.
///
/// The machine is a passive state object advanced only by explicit operation
/// calls: identical configs plus identical call sequences produce identical
/// result sequences.
class SimMachine {
public:
    explicit SimMachine(MachineConfig cfg) : cfg_(cfg) {
        cfg_.validate();
        if (cfg_.tiles() > kMaxTiles) throw ConfigError("mesh exceeds supported tile count");
        l1_.assign(static_cast<size_t>(cfg_.tiles()) * cfg_.l1_sets * cfg_.l1_ways, L1Line{});
        rng_.seed(cfg_.rng_seed);
        congestion_rng_.seed(cfg_.rng_seed ^ 0x5bd1e9955bd1e995ull);
    }

    const MachineConfig& config() const { return cfg_; }

    TileId cha_of(PhysAddr a) const { return nucasim::cha_of(a, cfg_); }
    TileId bank_of(PhysAddr a) const { return nucasim::bank_of(a, cfg_); }

    /// Read one line. Walks L1 -> own bank -> CHA -> forwarder/DRAM.
    MemResult load(TileId core, PhysAddr addr) {
        const uint64_t line = line_addr(addr, cfg_);
        const int c = core.linear(cfg_.mesh_width);
        const TileId cha = cha_of(addr);
        const int h_cha = hop_distance(core, cha);
        MemResult res;
        res.cha_tile = cha;

        if (L1Line* l = l1_find(c, line)) {
            touch(l);
            res.hit_level = HitLevel::L1;
            res.serving_tile = core;
            res.latency = finalize(cfg_.lat_l1_hit, /*llc_hit=*/false, /*hops=*/0);
            post_op_check(line);
            return res;
        }

        DirEntry* d = dir_find(line);
        if (d && d->llc_valid && d->forwarder == c && d->owner < 0) {
            // Hit in the tile's own bank: served without consulting the CHA.
            d->llc_lru = ++lru_clock_;
            l1_install(c, line, Coherence::Shared, d);
            res.hit_level = HitLevel::LLC_LOCAL;
            res.serving_tile = core;
            res.latency = finalize(cfg_.lat_l1_hit + cfg_.lat_llc_bank, true, 0);
            post_op_check(line);
            return res;
        }

        if (d && d->owner >= 0 && d->owner != c) {
            // Another core holds the line M/E: the CHA makes it forward the
            // data and downgrade; the copy in its bank is refreshed.
            TileId owner = TileId::from_linear(d->owner, cfg_.mesh_width);
            int hops = 2 * h_cha + 2 * hop_distance(owner, core);
            if (L1Line* ol = l1_find(d->owner, line)) ol->state = Coherence::Shared;
            d->owner = -1;
            d->llc_lru = ++lru_clock_;
            l1_install(c, line, Coherence::Shared, d);
            res.hit_level = HitLevel::LLC_REMOTE;
            res.serving_tile = owner;
            res.latency = finalize(base_llc_cost(), true, hops);
            post_op_check(line);
            return res;
        }

        if (d && d->llc_valid) {
            TileId fwd = TileId::from_linear(d->forwarder, cfg_.mesh_width);
            int hops = 2 * h_cha + 2 * hop_distance(fwd, core);
            d->owner = -1;
            d->llc_lru = ++lru_clock_;
            l1_install(c, line, Coherence::Shared, d);
            res.hit_level = (d->forwarder == c) ? HitLevel::LLC_LOCAL : HitLevel::LLC_REMOTE;
            res.serving_tile = fwd;
            res.latency = finalize(base_llc_cost(), true, hops);
            post_op_check(line);
            return res;
        }

        // Memory fill: the line lands in the requester's bank, which becomes
        // the forwarding tile for every later sharer.
        d = dram_fill(line, c);
        d->owner = c;
        l1_install(c, line, Coherence::Exclusive, d);
        res.hit_level = HitLevel::DRAM;
        res.serving_tile = core;
        res.latency =
            finalize(cfg_.lat_l1_hit + cfg_.lat_cha_lookup + cfg_.lat_dram, false, 2 * h_cha);
        post_op_check(line);
        return res;
    }

    /// Write one 4-byte word. Acquires ownership, invalidates other copies,
    /// and bumps the word's version so watchers can detect the modification.
    MemResult store(TileId core, PhysAddr addr) {
        MemResult res = acquire_ownership(core, addr);
        const uint64_t line = line_addr(addr, cfg_);
        if (L1Line* l = l1_find(core.linear(cfg_.mesh_width), line)) l->state = Coherence::Modified;
        bump_version(addr);
        post_op_check(line);
        return res;
    }

    /// Ownership-requesting prefetch. Cheap when this core already owns the
    /// line; pays the invalidation/transfer serialization when another core
    /// holds it M/E; on an uncached line it retires once the request is
    /// accepted, without waiting for the memory fill. Leaves the line owned
    /// by `core`.
    MemResult prefetchw_probe(TileId core, PhysAddr addr) {
        MemResult res = acquire_ownership(core, addr);
        const uint64_t line = line_addr(addr, cfg_);
        if (L1Line* l = l1_find(core.linear(cfg_.mesh_width), line)) l->state = Coherence::Modified;
        post_op_check(line);
        return res;
    }

    /// Drop a line from one core's L1 without disturbing its LLC residency.
    /// A dirty copy is merged back into the line's forwarder bank.
    void flush_l1(TileId core, PhysAddr addr) {
        const uint64_t line = line_addr(addr, cfg_);
        const int c = core.linear(cfg_.mesh_width);
        L1Line* l = l1_find(c, line);
        if (!l) return;  // no-op if absent
        l->state = Coherence::Invalid;
        if (DirEntry* d = dir_find(line)) {
            d->sharers.reset(static_cast<size_t>(c));
            if (d->owner == c) d->owner = -1;
        }
        post_op_check(line);
    }

    /// Drop a line from every cache level and the directory (back-invalidate).
    void invalidate_line(PhysAddr addr) {
        const uint64_t line = line_addr(addr, cfg_);
        auto it = dir_.find(line);
        if (it == dir_.end()) return;
        for (int t = 0; t < cfg_.tiles(); t++)
            if (it->second.sharers.test(static_cast<size_t>(t))) l1_drop(t, line);
        if (it->second.llc_valid) {
            uint64_t key = llc_set_key(it->second.forwarder, line);
            auto ms = llc_sets_.find(key);
            if (ms != llc_sets_.end())
                std::erase(ms->second, line);
        }
        dir_.erase(it);
    }

    // ---- defense and congestion hooks -------------------------------------

    /// Hold every LLC-hit response until `target` cycles have elapsed
    /// (0 disables). Hit level and serving tile are unaffected.
    void set_uniform_llc_floor(uint32_t target) { llc_floor_ = target; }
    uint32_t uniform_llc_floor() const { return llc_floor_; }

    /// Add per-hop queueing delays drawn from an empirical distribution
    /// (e.g. a NoC model's steady-state waits). Empty disables.
    void set_congestion_delays(std::vector<uint32_t> delays) {
        congestion_delays_ = std::move(delays);
    }

    // ---- observation (watchers, tests, oracles) ----------------------------

    uint64_t line_version(PhysAddr a) const {
        auto it = versions_.find(line_addr(a, cfg_));
        return it == versions_.end() ? 0 : it->second.line;
    }

    /// Version of the 4-byte word at `a`, bumped by every store to it.
    uint32_t word_version(PhysAddr a) const {
        auto it = versions_.find(line_addr(a, cfg_));
        if (it == versions_.end()) return 0;
        return it->second.words[((a.raw & (cfg_.line_size - 1)) / 4) & 31];
    }

    bool l1_holds(TileId t, PhysAddr a) const {
        return l1_find(t.linear(cfg_.mesh_width), line_addr(a, cfg_)) != nullptr;
    }

    CacheLineState l1_line_state(TileId t, PhysAddr a) const {
        CacheLineState st;
        st.tag = line_addr(a, cfg_);
        if (const L1Line* l = l1_find(t.linear(cfg_.mesh_width), st.tag)) {
            st.coherence = l->state;
            st.lru_rank = static_cast<uint32_t>(l->lru);
            if (const DirEntry* d = dir_find(st.tag); d && d->owner >= 0)
                st.owner_tile = TileId::from_linear(d->owner, cfg_.mesh_width);
        }
        return st;
    }

    bool llc_holds(PhysAddr a) const {
        const DirEntry* d = dir_find(line_addr(a, cfg_));
        return d && d->llc_valid;
    }

    std::optional<TileId> llc_forwarder(PhysAddr a) const {
        const DirEntry* d = dir_find(line_addr(a, cfg_));
        if (!d || !d->llc_valid) return std::nullopt;
        return TileId::from_linear(d->forwarder, cfg_.mesh_width);
    }

    std::optional<TileId> l1_owner(PhysAddr a) const {
        const DirEntry* d = dir_find(line_addr(a, cfg_));
        if (!d || d->owner < 0) return std::nullopt;
        return TileId::from_linear(d->owner, cfg_.mesh_width);
    }

    std::vector<int> sharers(PhysAddr a) const {
        std::vector<int> out;
        const DirEntry* d = dir_find(line_addr(a, cfg_));
        if (!d) return out;
        for (int t = 0; t < cfg_.tiles(); t++)
            if (d->sharers.test(static_cast<size_t>(t))) out.push_back(t);
        return out;
    }

    uint64_t op_count() const { return ops_; }

    /// When enabled, the directory entry of every touched line is checked
    /// against the actual L1 contents after each operation.
    void set_debug_checks(bool on) { debug_checks_ = on; }

    /// Directory sharer list == set of L1s actually holding the line, owner
    /// consistent, and inclusion (every L1 copy backed by an LLC copy).
    bool audit_line(PhysAddr a) const {
        const uint64_t line = line_addr(a, cfg_);
        const DirEntry* d = dir_find(line);
        for (int t = 0; t < cfg_.tiles(); t++) {
            bool in_l1 = l1_find(t, line) != nullptr;
            bool listed = d && d->sharers.test(static_cast<size_t>(t));
            if (in_l1 != listed) return false;
            if (in_l1 && (!d || !d->llc_valid)) return false;
        }
        if (d && d->owner >= 0) {
            const L1Line* l = l1_find(d->owner, line);
            if (!l || (l->state != Coherence::Modified && l->state != Coherence::Exclusive))
                return false;
        }
        return true;
    }

    bool audit_all() const {
        for (const auto& [line, d] : dir_)
            if (!audit_line(PhysAddr{line})) return false;
        return true;
    }

private:
    static constexpr int kMaxTiles = 256;

    struct L1Line {
        uint64_t tag = 0;
        Coherence state = Coherence::Invalid;
        uint64_t lru = 0;
    };

    struct DirEntry {
        int16_t forwarder = -1;  // tile whose bank holds the line
        int16_t owner = -1;      // tile holding the line M/E in its L1, if any
        bool llc_valid = false;
        std::bitset<kMaxTiles> sharers;
        uint64_t llc_lru = 0;
    };

    struct VersionEntry {
        uint64_t line = 0;
        std::array<uint32_t, 32> words{};  // per 4-byte word within the line
    };

    uint32_t base_llc_cost() const {
        return cfg_.lat_l1_hit + cfg_.lat_cha_lookup + cfg_.lat_llc_bank;
    }

    // Shared ownership-acquisition path for store and prefetchw.
    MemResult acquire_ownership(TileId core, PhysAddr addr) {
        const uint64_t line = line_addr(addr, cfg_);
        const int c = core.linear(cfg_.mesh_width);
        const TileId cha = cha_of(addr);
        const int h_cha = hop_distance(core, cha);
        MemResult res;
        res.cha_tile = cha;

        L1Line* mine = l1_find(c, line);
        if (mine && (mine->state == Coherence::Modified || mine->state == Coherence::Exclusive)) {
            touch(mine);
            res.hit_level = HitLevel::L1;
            res.serving_tile = core;
            res.latency = finalize(cfg_.lat_l1_hit, false, 0);
            return res;
        }

        DirEntry* d = dir_find(line);
        if (mine && mine->state == Coherence::Shared) {
            // Upgrade in place: round trip to the CHA, invalidate the rest.
            touch(mine);
            invalidate_other_sharers(d, line, c);
            if (d) d->owner = static_cast<int16_t>(c);
            mine->state = Coherence::Modified;
            res.hit_level = HitLevel::L1;
            res.serving_tile = core;
            res.latency = finalize(cfg_.lat_l1_hit + cfg_.lat_cha_lookup, false, 2 * h_cha);
            return res;
        }

        if (d && d->owner >= 0 && d->owner != c) {
            // Ownership transfer from a remote M/E holder: invalidation round
            // trips plus writeback serialization dominate the probe time.
            TileId owner = TileId::from_linear(d->owner, cfg_.mesh_width);
            int hops = 2 * h_cha + 2 * hop_distance(cha, owner) + 2 * hop_distance(owner, core);
            l1_drop(d->owner, line);
            d->sharers.reset(static_cast<size_t>(d->owner));
            d->owner = -1;
            invalidate_other_sharers(d, line, c);
            d->llc_lru = ++lru_clock_;
            l1_install(c, line, Coherence::Modified, d);
            d->owner = static_cast<int16_t>(c);
            res.hit_level = HitLevel::LLC_REMOTE;
            res.serving_tile = owner;
            res.latency =
                finalize(base_llc_cost() + cfg_.lat_llc_bank + cfg_.lat_dirty_inval, true, hops);
            return res;
        }

        if (d && d->llc_valid) {
            TileId fwd = TileId::from_linear(d->forwarder, cfg_.mesh_width);
            bool local = d->forwarder == c;
            int hops = local ? 2 * h_cha : 2 * h_cha + 2 * hop_distance(fwd, core);
            invalidate_other_sharers(d, line, c);
            d->llc_lru = ++lru_clock_;
            l1_install(c, line, Coherence::Modified, d);
            d->owner = static_cast<int16_t>(c);
            res.hit_level = local ? HitLevel::LLC_LOCAL : HitLevel::LLC_REMOTE;
            res.serving_tile = fwd;
            res.latency = finalize(base_llc_cost(), true, hops);
            return res;
        }

        // Uncached: the request is accepted at the CHA and the fill proceeds
        // in the background; the probe itself completes early.
        d = dram_fill(line, c);
        l1_install(c, line, Coherence::Modified, d);
        d->owner = static_cast<int16_t>(c);
        res.hit_level = HitLevel::DRAM;
        res.serving_tile = core;
        res.latency = finalize(cfg_.lat_l1_hit + cfg_.lat_cha_lookup, false, 2 * h_cha);
        return res;
    }

    void invalidate_other_sharers(DirEntry* d, uint64_t line, int keep) {
        if (!d || d->sharers.none()) return;
        for (int t = 0; t < cfg_.tiles(); t++) {
            if (t == keep || !d->sharers.test(static_cast<size_t>(t))) continue;
            l1_drop(t, line);
            d->sharers.reset(static_cast<size_t>(t));
        }
    }

    // -- L1 structures --------------------------------------------------------

    L1Line* l1_slot(int tile, uint32_t set, uint32_t way) {
        return &l1_[(static_cast<size_t>(tile) * cfg_.l1_sets + set) * cfg_.l1_ways + way];
    }
    const L1Line* l1_slot(int tile, uint32_t set, uint32_t way) const {
        return &l1_[(static_cast<size_t>(tile) * cfg_.l1_sets + set) * cfg_.l1_ways + way];
    }

    L1Line* l1_find(int tile, uint64_t line) {
        uint32_t set = static_cast<uint32_t>((line / cfg_.line_size) & (cfg_.l1_sets - 1));
        for (uint32_t w = 0; w < cfg_.l1_ways; w++) {
            L1Line* l = l1_slot(tile, set, w);
            if (l->state != Coherence::Invalid && l->tag == line) return l;
        }
        return nullptr;
    }
    const L1Line* l1_find(int tile, uint64_t line) const {
        uint32_t set = static_cast<uint32_t>((line / cfg_.line_size) & (cfg_.l1_sets - 1));
        for (uint32_t w = 0; w < cfg_.l1_ways; w++) {
            const L1Line* l = l1_slot(tile, set, w);
            if (l->state != Coherence::Invalid && l->tag == line) return l;
        }
        return nullptr;
    }

    void touch(L1Line* l) { l->lru = ++lru_clock_; }

    void l1_install(int tile, uint64_t line, Coherence st, DirEntry* d) {
        uint32_t set = static_cast<uint32_t>((line / cfg_.line_size) & (cfg_.l1_sets - 1));
        L1Line* slot = nullptr;
        L1Line* free_way = nullptr;
        L1Line* lru_way = nullptr;
        for (uint32_t w = 0; w < cfg_.l1_ways; w++) {
            L1Line* l = l1_slot(tile, set, w);
            if (l->state != Coherence::Invalid && l->tag == line) { slot = l; break; }
            if (l->state == Coherence::Invalid) {
                if (!free_way) free_way = l;
            } else if (!lru_way || l->lru < lru_way->lru) {
                lru_way = l;
            }
        }
        if (!slot) slot = free_way ? free_way : lru_way;
        if (slot->state != Coherence::Invalid && slot->tag != line) {
            // Silent L1 eviction: the LLC keeps the data (inclusive), so only
            // the directory bookkeeping changes.
            if (DirEntry* vd = dir_find(slot->tag)) {
                vd->sharers.reset(static_cast<size_t>(tile));
                if (vd->owner == tile) vd->owner = -1;
            }
        }
        slot->tag = line;
        slot->state = st;
        slot->lru = ++lru_clock_;
        if (d) d->sharers.set(static_cast<size_t>(tile));
    }

    void l1_drop(int tile, uint64_t line) {
        if (L1Line* l = l1_find(tile, line)) l->state = Coherence::Invalid;
    }

    // -- directory / LLC --------------------------------------------------------

    DirEntry* dir_find(uint64_t line) {
        auto it = dir_.find(line);
        return it == dir_.end() ? nullptr : &it->second;
    }
    const DirEntry* dir_find(uint64_t line) const {
        auto it = dir_.find(line);
        return it == dir_.end() ? nullptr : &it->second;
    }

    DirEntry* dram_fill(uint64_t line, int tile) {
        llc_set_insert(tile, line);
        DirEntry& d = dir_[line];
        d.llc_valid = true;
        d.forwarder = static_cast<int16_t>(tile);
        d.owner = -1;
        d.llc_lru = ++lru_clock_;
        return &d;
    }

    void llc_set_insert(int bank, uint64_t line) {
        uint64_t key = llc_set_key(bank, line);
        auto& members = llc_sets_[key];
        for (uint64_t m : members)
            if (m == line) return;
        if (members.size() >= cfg_.llc_ways) {
            size_t victim = 0;
            uint64_t best = UINT64_MAX;
            for (size_t i = 0; i < members.size(); i++) {
                auto it = dir_.find(members[i]);
                uint64_t lru = it == dir_.end() ? 0 : it->second.llc_lru;
                if (lru < best) { best = lru; victim = i; }
            }
            uint64_t evicted = members[victim];
            members.erase(members.begin() + static_cast<long>(victim));
            // Inclusive hierarchy: back-invalidate every L1 copy.
            auto it = dir_.find(evicted);
            if (it != dir_.end()) {
                for (int t = 0; t < cfg_.tiles(); t++)
                    if (it->second.sharers.test(static_cast<size_t>(t))) l1_drop(t, evicted);
                dir_.erase(it);
            }
        }
        members.push_back(line);
    }

    uint64_t llc_set_key(int bank, uint64_t line) const {
        return (static_cast<uint64_t>(bank) << 32) | llc_set_of(PhysAddr{line}, cfg_);
    }

    void bump_version(PhysAddr a) {
        VersionEntry& v = versions_[line_addr(a, cfg_)];
        v.line++;
        v.words[((a.raw & (cfg_.line_size - 1)) / 4u) & 31]++;
    }

    // -- latency assembly ---------------------------------------------------------

    uint32_t finalize(uint32_t model, bool llc_hit, int hops) {
        ops_++;
        uint64_t lat = model + static_cast<uint64_t>(hops) * (cfg_.lat_per_hop + cfg_.lat_router);
        if (llc_hit && llc_floor_ > 0) lat = std::max<uint64_t>(lat, llc_floor_);
        if (!congestion_delays_.empty() && hops > 0) {
            std::uniform_int_distribution<size_t> pick(0, congestion_delays_.size() - 1);
            for (int h = 0; h < hops; h++) lat += congestion_delays_[pick(congestion_rng_)];
        }
        if (cfg_.noise_stddev > 0) {
            int64_t noisy =
                static_cast<int64_t>(lat) + std::llround(noise_(rng_) * cfg_.noise_stddev);
            lat = noisy < static_cast<int64_t>(cfg_.lat_l1_hit) ? cfg_.lat_l1_hit
                                                                : static_cast<uint64_t>(noisy);
        }
        return static_cast<uint32_t>(std::max<uint64_t>(lat, cfg_.lat_l1_hit));
    }

    void post_op_check(uint64_t line) {
        if (debug_checks_ && !audit_line(PhysAddr{line}))
            throw ScenarioError("directory/L1 consistency violated");
    }

    MachineConfig cfg_;
    std::vector<L1Line> l1_;
    std::unordered_map<uint64_t, DirEntry> dir_;
    std::unordered_map<uint64_t, std::vector<uint64_t>> llc_sets_;
    std::unordered_map<uint64_t, VersionEntry> versions_;
    uint64_t lru_clock_ = 0;
    uint64_t ops_ = 0;
    uint32_t llc_floor_ = 0;
    bool debug_checks_ = false;
    std::vector<uint32_t> congestion_delays_;
    std::mt19937_64 rng_;
    std::mt19937_64 congestion_rng_;
    std::normal_distribution<double> noise_{0.0, 1.0};
};

}  // namespace nucasim
