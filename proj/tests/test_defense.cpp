#include <gtest/gtest.h>

#include <random>

#include "nucasim/defense.hpp"
#include "nucasim/experiment.hpp"
#include "test_util.hpp"

using namespace nucasim;
using testutil::quiet_config;

TEST(Defense, DelayToWorstEqualizesExactly) {
    MachineConfig cfg = quiet_config();
    SimMachine m(cfg);
    TileId victim{0, 0}, holder{1, 0};
    DefenseApplied applied = apply_defense(m, DefenseConfig{DefenseMode::DelayToWorst, 0});
    EXPECT_EQ(applied.floor, cfg.worst_case_llc_hit());

    std::vector<uint32_t> near, far;
    for (int hop : {1, 2, 3}) {
        PhysAddr a = testutil::line_with_cha_hop(cfg, victim, hop, 0x4c0000);
        m.load(holder, a);
        for (int s = 0; s < 100; s++) {
            m.flush_l1(victim, a);
            near.push_back(m.load(victim, a).latency);
        }
    }
    for (int hop : {10, 12, 14}) {
        PhysAddr a = testutil::line_with_cha_hop(cfg, victim, hop, 0x6c0000);
        m.load(holder, a);
        for (int s = 0; s < 100; s++) {
            m.flush_l1(victim, a);
            far.push_back(m.load(victim, a).latency);
        }
    }
    // Noise off: the multisets are not just close, they are identical.
    std::sort(near.begin(), near.end());
    std::sort(far.begin(), far.end());
    EXPECT_EQ(near, far);
    for (uint32_t l : near) EXPECT_EQ(l, applied.floor);
}

TEST(Defense, DefendedDistributionsPassKs) {
    MachineConfig cfg;  // sigma = 3
    DefenseEvalParams p;  // heavy parts trimmed for unit scale
    SimMachine m([&] {
        MachineConfig c = cfg;
        c.rng_seed = 5;
        return c;
    }());
    RoleTiles roles;
    ProfileRun prof = run_profile(m, roles, p.profile);
    apply_defense(m, DefenseConfig{DefenseMode::DelayToWorst, 0});
    std::vector<double> near, far;
    for (int s = 0; s < 2000; s++) {
        PhysAddr a = prof.map.va_near[static_cast<size_t>(s) % prof.map.va_near.size()].addr;
        PhysAddr b = prof.map.va_far[static_cast<size_t>(s) % prof.map.va_far.size()].addr;
        m.flush_l1(roles.victim, a);
        m.flush_l1(roles.victim, b);
        near.push_back(m.load(roles.victim, a).latency);
        far.push_back(m.load(roles.victim, b).latency);
    }
    EXPECT_LE(ks_statistic(near, far), 0.05);
}

TEST(Defense, TargetBelowWorstIsFlagged) {
    MachineConfig cfg = quiet_config();
    SimMachine m(cfg);
    DefenseConfig low{DefenseMode::DelayToTarget, 100};
    EXPECT_TRUE(apply_defense(m, low).target_below_worst);
    DefenseConfig high{DefenseMode::DelayToTarget, cfg.worst_case_llc_hit() + 50};
    EXPECT_FALSE(apply_defense(m, high).target_below_worst);

    // Latencies are max(original, target): nothing ever gets faster.
    TileId victim{0, 0}, holder{1, 0};
    PhysAddr a = testutil::line_with_cha_hop(cfg, victim, 2, 0x4c0000);
    m.load(holder, a);
    m.flush_l1(victim, a);
    EXPECT_EQ(m.load(victim, a).latency, cfg.worst_case_llc_hit() + 50);
}

TEST(Defense, FunctionalResultsUntouched) {
    std::mt19937_64 rng(61);
    aes::Block key = random_block(rng), ct = random_block(rng);
    auto run = [&](bool defended) {
        MachineConfig cfg = quiet_config();
        SimMachine m(cfg);
        if (defended) apply_defense(m, DefenseConfig{DefenseMode::DelayToWorst, 0});
        AesTables tables;
        prime_l1_tables(m, TileId{0, 0}, tables);
        auto td4 = tables.td4_lines();
        hold_llc(m, TileId{1, 0}, {td4.begin(), td4.end()});
        DecryptIo io;
        io.in = ct;
        io.key_schedule = aes::AesKeySchedule::expand(key);
        return aes_decrypt(m, TileId{0, 0}, io, tables).plaintext;
    };
    EXPECT_EQ(run(false), run(true));
}

TEST(Defense, EqualizationCostsLatency) {
    MachineConfig cfg;  // sigma = 3
    cfg.rng_seed = 9;
    SimMachine m(cfg);
    RoleTiles roles;
    ProfileParams pp;
    pp.samples_per_addr = 200;
    ProfileRun prof = run_profile(m, roles, pp);
    double undefended = (prof.map.mean_near + prof.map.mean_far) / 2.0;
    apply_defense(m, DefenseConfig{DefenseMode::DelayToWorst, 0});
    double defended = 0;
    int n = 0;
    for (const auto& c : prof.map.va_near) {
        m.flush_l1(roles.victim, c.addr);
        defended += m.load(roles.victim, c.addr).latency;
        n++;
    }
    defended /= n;
    EXPECT_GT(defended, undefended);
}

TEST(Noc, ZeroLoadLatencyMatchesMeanHops) {
    NocTrafficConfig cfg;
    cfg.injection_rate = 0.002;
    cfg.sim_cycles = 60000;
    cfg.warmup_cycles = 5000;
    NocResult r = simulate_noc(cfg);
    EXPECT_FALSE(r.saturated);
    // Mean hops on an 8x8 mesh with dest != src, times per-hop cost.
    double mean_hops = (2.0 * 2.625) * 64.0 / 63.0;
    double zero_load = mean_hops * (cfg.lat_per_hop + cfg.lat_router);
    EXPECT_NEAR(r.mean_latency, zero_load, 0.05 * zero_load);
}

TEST(Noc, SweepIsMonotoneAndSaturatesByTenPercent) {
    NocTrafficConfig base;
    base.sim_cycles = 30000;
    base.warmup_cycles = 5000;
    std::vector<double> rates = {0.01, 0.03, 0.05, 0.07, 0.09, 0.1, 0.12};
    auto curve = noc_saturation_sweep(base, rates);
    bool seen_saturated = false;
    double prev = 0.0;
    for (const NocResult& r : curve) {
        if (r.saturated) {
            seen_saturated = true;
            continue;
        }
        EXPECT_FALSE(seen_saturated);  // once saturated, it stays saturated
        EXPECT_GE(r.mean_latency, prev * 0.99);
        prev = r.mean_latency;
    }
    // By rate 0.1 the network is past its knee.
    for (const NocResult& r : curve)
        if (r.rate >= 0.1) EXPECT_TRUE(r.saturated || r.mean_latency > 100.0);
}

TEST(Noc, HopWaitsGrowWithRate) {
    NocTrafficConfig cfg;
    cfg.sim_cycles = 30000;
    cfg.warmup_cycles = 5000;
    auto mean_wait = [&](double rate) {
        auto w = noc_hop_wait_distribution(cfg, rate, 50000);
        double s = 0;
        for (uint32_t x : w) s += x;
        return s / static_cast<double>(w.size());
    };
    double idle = mean_wait(0.01);
    double busy = mean_wait(0.08);
    EXPECT_GT(busy, idle);
}

TEST(Noc, RejectsBadConfigs) {
    NocTrafficConfig cfg;
    cfg.injection_rate = 1.5;
    EXPECT_THROW(cfg.validate(), ConfigError);
    cfg = NocTrafficConfig{};
    cfg.warmup_cycles = cfg.sim_cycles;
    EXPECT_THROW(cfg.validate(), ConfigError);
    NocTrafficConfig base;
    EXPECT_THROW(noc_saturation_sweep(base, {0.05, 0.01}), ConfigError);
}

TEST(AttackUnderLoad, CongestionDegradesTheToyAttack) {
    MachineConfig cfg;  // sigma = 3
    ToyParams p;
    p.bits = 1500;
    p.profile.samples_per_addr = 200;
    p.noc.sim_cycles = 30000;
    p.noc.warmup_cycles = 5000;

    ToyParams idle = p;
    double base_acc = run_toy_attack(cfg, idle, 13).accuracy;
    EXPECT_GE(base_acc, 0.95);

    ToyParams loaded = p;
    loaded.congestion_rate = 0.15;  // well past the saturation knee
    double loaded_acc = run_toy_attack(cfg, loaded, 13).accuracy;
    EXPECT_LE(loaded_acc, 0.65);
    EXPECT_LT(loaded_acc, base_acc);
}
