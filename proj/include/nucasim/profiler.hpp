#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "nucasim/machine.hpp"
#include "nucasim/types.hpp"

namespace nucasim {

struct ProfiledAddress {
    PhysAddr addr;
    uint32_t count = 0;
    double mean = 0.0;
    double stddev = 0.0;
};

/// Per-address LLC-hit latency statistics measured from one fixed tile.
struct LatencyProfile {
    TileId origin_tile;
    std::vector<ProfiledAddress> entries;
    std::vector<PhysAddr> excluded;  // residency could not be forced
};

/// Execute-and-profile: for each address force an L1 miss, reload, and
/// record the hit latency. Addresses must already be LLC-resident (a helper
/// thread loads them first); any address that falls out to memory is
/// excluded and reported.
inline LatencyProfile profile_addresses(SimMachine& m, TileId origin,
                                        const std::vector<PhysAddr>& addrs,
                                        int samples_per_addr) {
    if (samples_per_addr <= 0) throw std::invalid_argument("samples_per_addr must be positive");
    LatencyProfile prof;
    prof.origin_tile = origin;
    for (PhysAddr a : addrs) {
        double sum = 0.0, sumsq = 0.0;
        uint32_t n = 0;
        bool ok = true;
        for (int s = 0; s < samples_per_addr; s++) {
            m.flush_l1(origin, a);
            MemResult r = m.load(origin, a);
            if (r.hit_level != HitLevel::LLC_REMOTE && r.hit_level != HitLevel::LLC_LOCAL) {
                ok = false;
                break;
            }
            sum += r.latency;
            sumsq += static_cast<double>(r.latency) * r.latency;
            n++;
        }
        if (!ok) {
            prof.excluded.push_back(a);
            continue;
        }
        ProfiledAddress pa;
        pa.addr = a;
        pa.count = n;
        pa.mean = sum / n;
        double var = sumsq / n - pa.mean * pa.mean;
        pa.stddev = var > 0 ? std::sqrt(var) : 0.0;
        prof.entries.push_back(pa);
    }
    return prof;
}

struct ClassifiedAddress {
    PhysAddr addr;
    double mean = 0.0;
};

/// Near/far CHA address sets split at latency quantiles.
struct AddressClassMap {
    std::vector<ClassifiedAddress> va_near;  // sorted ascending by mean
    std::vector<ClassifiedAddress> va_far;   // sorted ascending by mean
    double threshold = 0.0;                  // midpoint of the gap between the classes
    double mean_near = 0.0;                  // class-average latency
    double mean_far = 0.0;

    bool contains(const std::vector<ClassifiedAddress>& v, PhysAddr a,
                  const MachineConfig& cfg) const {
        uint64_t line = line_addr(a, cfg);
        return std::any_of(v.begin(), v.end(), [&](const ClassifiedAddress& c) {
            return line_addr(c.addr, cfg) == line;
        });
    }
    bool is_near(PhysAddr a, const MachineConfig& cfg) const { return contains(va_near, a, cfg); }
    bool is_far(PhysAddr a, const MachineConfig& cfg) const { return contains(va_far, a, cfg); }
};

/// Split a profile into near and far sets: addresses below the low latency
/// quantile and above the high one. The spread between class means must
/// clear `min_gap` or the profile carries no usable distance signal.
inline AddressClassMap classify_addresses(const LatencyProfile& profile, double quantile_low,
                                          double quantile_high, double min_gap = 20.0) {
    const size_t n = profile.entries.size();
    if (n < 2) throw ScenarioError("classify_addresses: need at least two profiled addresses");
    if (quantile_low <= 0 || quantile_high > 1 || quantile_low > quantile_high)
        throw std::invalid_argument("classify_addresses: bad quantiles");

    // Means cluster in discrete distance levels; ordering by the rounded
    // mean (address as tie-break) keeps the quantile cut on the same side of
    // a level regardless of the measurement seed.
    std::vector<ProfiledAddress> sorted = profile.entries;
    std::sort(sorted.begin(), sorted.end(), [](const ProfiledAddress& a, const ProfiledAddress& b) {
        long la = std::lround(a.mean), lb = std::lround(b.mean);
        if (la != lb) return la < lb;
        return a.addr < b.addr;
    });

    size_t n_near = static_cast<size_t>(std::floor(static_cast<double>(n) * quantile_low));
    size_t far_start = static_cast<size_t>(std::floor(static_cast<double>(n) * quantile_high));
    if (quantile_low == quantile_high) far_start = n_near;  // median split covers everything
    if (n_near == 0 || far_start >= n)
        throw ScenarioError("classify_addresses: empty class at the given quantiles");

    AddressClassMap map;
    double sum_near = 0.0, sum_far = 0.0;
    for (size_t i = 0; i < n_near; i++) {
        map.va_near.push_back({sorted[i].addr, sorted[i].mean});
        sum_near += sorted[i].mean;
    }
    for (size_t i = far_start; i < n; i++) {
        map.va_far.push_back({sorted[i].addr, sorted[i].mean});
        sum_far += sorted[i].mean;
    }
    map.mean_near = sum_near / static_cast<double>(map.va_near.size());
    map.mean_far = sum_far / static_cast<double>(map.va_far.size());
    map.threshold = static_cast<double>(std::lround(map.va_near.back().mean) +
                                        std::lround(map.va_far.front().mean)) /
                    2.0;
    if (map.mean_far - map.mean_near < min_gap)
        throw ScenarioError("classify_addresses: class latency gap below minimum");
    return map;
}

/// The most extreme usable pair: lowest-latency near address and
/// highest-latency far address. Ties break toward the lowest raw address.
inline std::pair<PhysAddr, PhysAddr> pick_attack_pair(const AddressClassMap& map) {
    if (map.va_near.empty() || map.va_far.empty())
        throw ScenarioError("pick_attack_pair: empty class");
    auto best_near = map.va_near.front();
    for (const auto& c : map.va_near)
        if (c.mean < best_near.mean || (c.mean == best_near.mean && c.addr < best_near.addr))
            best_near = c;
    auto best_far = map.va_far.front();
    for (const auto& c : map.va_far)
        if (c.mean > best_far.mean || (c.mean == best_far.mean && c.addr < best_far.addr))
            best_far = c;
    return {best_near.addr, best_far.addr};
}

/// Plot-ready profile dump; the trailing column is simulator ground truth
/// for validation, which a real attacker would not have.
inline std::string profile_to_csv(const LatencyProfile& prof, const MachineConfig& cfg) {
    std::string out = "addr_hex,mean_cycles,stddev_cycles,count,true_cha_tile\n";
    char buf[160];
    for (const auto& e : prof.entries) {
        TileId cha = cha_of(e.addr, cfg);
        std::snprintf(buf, sizeof(buf), "0x%llx,%.4f,%.4f,%u,%d\n",
                      static_cast<unsigned long long>(e.addr.raw), e.mean, e.stddev, e.count,
                      cha.linear(cfg.mesh_width));
        out += buf;
    }
    return out;
}

}  // namespace nucasim
