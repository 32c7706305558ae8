#pragma once

#include <algorithm>
#include <cstdint>
#include <deque>
#include <random>
#include <vector>

#include "nucasim/machine.hpp"
#include "nucasim/types.hpp"

namespace nucasim {

// ---- uniform-latency defense --------------------------------------------------

enum class DefenseMode : uint8_t { Off, DelayToWorst, DelayToTarget };

struct DefenseConfig {
    DefenseMode mode = DefenseMode::Off;
    uint32_t target_latency = 0;  // used by DelayToTarget
};

struct DefenseApplied {
    uint32_t floor = 0;
    bool target_below_worst = false;  // residual leakage above the target remains
};

/// Delay every LLC-hit response so it arrives no earlier than the worst-case
/// round trip (or a configured target). Hit levels, serving tiles, and
/// functional behavior are untouched.
inline DefenseApplied apply_defense(SimMachine& m, const DefenseConfig& cfg) {
    DefenseApplied out;
    switch (cfg.mode) {
        case DefenseMode::Off:
            m.set_uniform_llc_floor(0);
            break;
        case DefenseMode::DelayToWorst:
            out.floor = m.config().worst_case_llc_hit();
            m.set_uniform_llc_floor(out.floor);
            break;
        case DefenseMode::DelayToTarget:
            out.floor = cfg.target_latency;
            out.target_below_worst = cfg.target_latency < m.config().worst_case_llc_hit();
            m.set_uniform_llc_floor(out.floor);
            break;
    }
    return out;
}

/// Two-sample Kolmogorov-Smirnov statistic. Ties are consumed whole before
/// the CDFs are compared, so integer-valued samples are handled correctly.
inline double ks_statistic(std::vector<double> a, std::vector<double> b) {
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    double d = 0.0;
    size_t i = 0, j = 0;
    while (i < a.size() && j < b.size()) {
        double x = std::min(a[i], b[j]);
        while (i < a.size() && a[i] <= x) i++;
        while (j < b.size() && b[j] <= x) j++;
        double fa = static_cast<double>(i) / static_cast<double>(a.size());
        double fb = static_cast<double>(j) / static_cast<double>(b.size());
        d = std::max(d, std::abs(fa - fb));
    }
    return d;
}

// ---- packet-level NoC saturation study -----------------------------------------

/// Uniform-random traffic on an X-Y routed mesh. Packets are several flits
/// long (cache-line payloads), links move one flit per cycle, and each
/// router output keeps a FIFO. The flit count is the calibration knob for
/// where the network saturates; the head latency at zero load stays
/// mean-hops * (lat_per_hop + lat_router) regardless.
struct NocTrafficConfig {
    int mesh_width = 8;
    int mesh_height = 8;
    double injection_rate = 0.05;  // packets per node per cycle, Bernoulli
    uint64_t sim_cycles = 70000;
    uint64_t warmup_cycles = 10000;
    int flits_per_packet = 6;
    uint32_t lat_per_hop = 3;
    uint32_t lat_router = 1;
    uint64_t rng_seed = 1;

    void validate() const {
        if (mesh_width < 2 || mesh_height < 2) throw ConfigError("noc mesh must be >= 2x2");
        if (injection_rate <= 0 || injection_rate >= 1)
            throw ConfigError("injection_rate must be in (0,1)");
        if (warmup_cycles >= sim_cycles) throw ConfigError("warmup must be < sim_cycles");
        if (flits_per_packet < 1) throw ConfigError("flits_per_packet must be >= 1");
    }
};

struct NocResult {
    double rate = 0.0;
    double mean_latency = 0.0;   // delivered packets injected after warmup
    bool saturated = false;
    uint64_t injected = 0;       // after warmup
    uint64_t delivered = 0;
    uint64_t undelivered = 0;    // still in flight at the end
    std::vector<uint32_t> hop_waits;  // per-hop queueing delays (when sampled)
};

/// Simulate one injection-rate point. `sample_waits` bounds how many
/// per-hop queueing delays are collected for congestion coupling.
inline NocResult simulate_noc(const NocTrafficConfig& cfg, size_t sample_waits = 0) {
    cfg.validate();
    const int W = cfg.mesh_width, H = cfg.mesh_height, N = W * H;
    const uint32_t hop_cost = cfg.lat_per_hop + cfg.lat_router;
    const uint32_t service = static_cast<uint32_t>(cfg.flits_per_packet);

    struct Packet {
        int dst = 0;
        uint64_t injected = 0;
        uint64_t arrived_here = 0;  // arrival time at the current router
        bool measured = false;
    };

    // Directed links: node*4 + dir, dir 0:+x 1:-x 2:+y 3:-y.
    auto link_to = [&](int node, int dir) -> int {
        int x = node % W, y = node / W;
        switch (dir) {
            case 0: return x + 1 < W ? node + 1 : -1;
            case 1: return x > 0 ? node - 1 : -1;
            case 2: return y + 1 < H ? node + W : -1;
            default: return y > 0 ? node - W : -1;
        }
    };
    auto route_dir = [&](int node, int dst) -> int {
        int x = node % W, y = node / W, dx = dst % W, dy = dst / W;
        if (x != dx) return dx > x ? 0 : 1;
        return dy > y ? 2 : 3;
    };

    std::vector<Packet> pool;
    pool.reserve(1 << 16);
    std::vector<std::deque<uint32_t>> queues(static_cast<size_t>(N) * 4);
    std::vector<uint64_t> busy_until(static_cast<size_t>(N) * 4, 0);
    // Arrival wheel covering the per-hop flight time.
    std::vector<std::vector<std::pair<uint32_t, int>>> wheel(hop_cost + 1);

    std::mt19937_64 rng(cfg.rng_seed);
    std::uniform_real_distribution<double> coin(0.0, 1.0);
    std::uniform_int_distribution<int> pick_dst(0, N - 2);

    NocResult out;
    out.rate = cfg.injection_rate;
    double lat_sum_first = 0, lat_sum_second = 0;
    uint64_t n_first = 0, n_second = 0;
    const uint64_t measure_mid = cfg.warmup_cycles + (cfg.sim_cycles - cfg.warmup_cycles) / 2;

    for (uint64_t now = 0; now < cfg.sim_cycles; now++) {
        // Deliver heads landing this cycle.
        auto& slot = wheel[now % (hop_cost + 1)];
        for (auto [pid, node] : slot) {
            Packet& p = pool[pid];
            if (node == p.dst) {
                if (p.measured) {
                    uint64_t lat = now - p.injected;
                    if (p.injected < measure_mid) { lat_sum_first += static_cast<double>(lat); n_first++; }
                    else { lat_sum_second += static_cast<double>(lat); n_second++; }
                    out.delivered++;
                }
            } else {
                p.arrived_here = now;
                queues[static_cast<size_t>(node) * 4 +
                       static_cast<size_t>(route_dir(node, p.dst))].push_back(pid);
            }
        }
        slot.clear();

        // Bernoulli injection, uniform random destination.
        for (int n = 0; n < N; n++) {
            if (coin(rng) >= cfg.injection_rate) continue;
            int dst = pick_dst(rng);
            if (dst >= n) dst++;
            Packet p;
            p.dst = dst;
            p.injected = now;
            p.arrived_here = now;
            p.measured = now >= cfg.warmup_cycles;
            if (p.measured) out.injected++;
            pool.push_back(p);
            queues[static_cast<size_t>(n) * 4 + static_cast<size_t>(route_dir(n, dst))]
                .push_back(static_cast<uint32_t>(pool.size() - 1));
        }

        // One flit per link per cycle: a free link takes the next packet and
        // stays busy for the packet's full flit count.
        for (int n = 0; n < N; n++) {
            for (int dir = 0; dir < 4; dir++) {
                size_t li = static_cast<size_t>(n) * 4 + static_cast<size_t>(dir);
                if (busy_until[li] > now || queues[li].empty()) continue;
                int next = link_to(n, dir);
                if (next < 0) { queues[li].clear(); continue; }  // off-mesh, unreachable
                uint32_t pid = queues[li].front();
                queues[li].pop_front();
                busy_until[li] = now + service;
                Packet& p = pool[pid];
                if (p.measured && sample_waits > 0 && out.hop_waits.size() < sample_waits &&
                    now >= cfg.warmup_cycles)
                    out.hop_waits.push_back(static_cast<uint32_t>(now - p.arrived_here));
                wheel[(now + hop_cost) % (hop_cost + 1)].push_back({pid, next});
            }
        }
    }

    out.undelivered = out.injected - out.delivered;
    uint64_t n_total = n_first + n_second;
    out.mean_latency = n_total ? (lat_sum_first + lat_sum_second) / static_cast<double>(n_total)
                               : 0.0;
    double mean_first = n_first ? lat_sum_first / static_cast<double>(n_first) : 0.0;
    double mean_second = n_second ? lat_sum_second / static_cast<double>(n_second) : 0.0;
    bool backlog = out.injected > 0 &&
                   static_cast<double>(out.undelivered) > 0.05 * static_cast<double>(out.injected);
    bool drifting = n_first > 0 && n_second > 0 && mean_second > 2.0 * mean_first;
    out.saturated = backlog || drifting;
    return out;
}

/// Latency-vs-rate curve. Rates must be ascending.
inline std::vector<NocResult> noc_saturation_sweep(NocTrafficConfig base,
                                                   const std::vector<double>& rates) {
    for (size_t i = 1; i < rates.size(); i++)
        if (rates[i] < rates[i - 1]) throw ConfigError("noc sweep rates must be ascending");
    std::vector<NocResult> out;
    for (double r : rates) {
        NocTrafficConfig cfg = base;
        cfg.injection_rate = r;
        out.push_back(simulate_noc(cfg));
    }
    return out;
}

/// Empirical per-hop queueing delays at a given background rate, for
/// coupling congestion into the cache model without co-simulation.
inline std::vector<uint32_t> noc_hop_wait_distribution(NocTrafficConfig cfg, double rate,
                                                       size_t max_samples = 100000) {
    cfg.injection_rate = rate;
    NocResult r = simulate_noc(cfg, max_samples);
    if (r.hop_waits.empty()) r.hop_waits.push_back(0);
    return std::move(r.hop_waits);
}

}  // namespace nucasim
