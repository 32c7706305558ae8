#include <gtest/gtest.h>

#include <random>

#include "nucasim/agents.hpp"
#include "test_util.hpp"

using namespace nucasim;
using testutil::quiet_config;

namespace {

class BlockedForever : public Agent {
public:
    BlockedForever() : Agent("stuck", TileId{0, 0}) {}
    StepResult step(SimMachine&, uint64_t) override {
        StepResult s;
        s.status = AgentStatus::Blocked;
        return s;
    }
};

std::vector<PhysAddr> consecutive_lines(uint64_t base, int n, uint32_t line) {
    std::vector<PhysAddr> v;
    for (int i = 0; i < n; i++) v.push_back(PhysAddr{base + static_cast<uint64_t>(i) * line});
    return v;
}

}  // namespace

TEST(Scheduler, SingleAgentTraceLength) {
    MachineConfig cfg = quiet_config();
    SimMachine m(cfg);
    LoadListAgent a("a", TileId{0, 0}, consecutive_lines(0x10000, 10, cfg.line_size));
    auto trace = run_scenario(m, {&a});
    EXPECT_EQ(trace.size(), 10u);
}

TEST(Scheduler, SameSeedSameTrace) {
    MachineConfig cfg;
    cfg.noise_stddev = 3.0;
    cfg.rng_seed = 77;
    auto run = [&] {
        SimMachine m(cfg);
        LoadListAgent a("a", TileId{0, 0}, consecutive_lines(0x10000, 50, cfg.line_size));
        LoadListAgent b("b", TileId{7, 7}, consecutive_lines(0x20000, 50, cfg.line_size));
        std::vector<std::tuple<int, uint64_t, uint32_t>> out;
        for (const TraceEntry& e : run_scenario(m, {&a, &b}))
            out.emplace_back(e.agent, e.start, e.op.result.latency);
        return out;
    };
    EXPECT_EQ(run(), run());
}

TEST(Scheduler, DeadlockDetected) {
    MachineConfig cfg = quiet_config();
    SimMachine m(cfg);
    BlockedForever stuck;
    Scheduler::Options opts;
    opts.deadlock_window = 100;
    Scheduler sched(opts);
    EXPECT_THROW(sched.run(m, {&stuck}), ScenarioError);
}

TEST(Scheduler, RunnableAgentsAllGetTurns) {
    MachineConfig cfg = quiet_config();
    SimMachine m(cfg);
    LoadListAgent a("a", TileId{0, 0}, consecutive_lines(0x10000, 200, cfg.line_size));
    LoadListAgent b("b", TileId{3, 3}, consecutive_lines(0x90000, 200, cfg.line_size));
    Scheduler sched;
    sched.run(m, {&a, &b});
    EXPECT_GE(sched.turns(0), 200u);
    EXPECT_GE(sched.turns(1), 200u);
}

TEST(Agents, PrimeBringsTd03IntoL1ButNotTd4) {
    MachineConfig cfg = quiet_config();
    SimMachine m(cfg);
    TileId victim{0, 0}, holder{1, 0};
    AesTables tables;
    auto td4 = tables.td4_lines();
    hold_llc(m, holder, {td4.begin(), td4.end()});
    prime_l1_tables(m, victim, tables);

    for (PhysAddr line : tables.td03_lines(cfg))
        EXPECT_EQ(m.load(victim, line).hit_level, HitLevel::L1);
    for (PhysAddr line : td4) EXPECT_FALSE(m.l1_holds(victim, line));
    MemResult r = m.load(victim, td4[0]);
    EXPECT_EQ(r.hit_level, HitLevel::LLC_REMOTE);

    // Priming twice is idempotent: still resident, still L1 hits.
    prime_l1_tables(m, victim, tables);
    for (PhysAddr line : tables.td03_lines(cfg))
        EXPECT_EQ(m.load(victim, line).hit_level, HitLevel::L1);

    // Too-small L1 cannot hold the tables at all.
    MachineConfig tiny = cfg;
    tiny.l1_sets = 16;
    tiny.l1_ways = 2;
    SimMachine m2(tiny);
    EXPECT_THROW(prime_l1_tables(m2, victim, tables), ConfigError);
}

TEST(Agents, HoldLlcSetsForwarderChaStaysHashed) {
    MachineConfig cfg = quiet_config();
    SimMachine m(cfg);
    TileId victim{0, 0}, holder{6, 2};
    AesTables tables;
    auto td4 = tables.td4_lines();
    hold_llc(m, holder, {td4.begin(), td4.end()});

    std::set<int> chas;
    for (PhysAddr line : td4) {
        EXPECT_EQ(m.llc_forwarder(line)->linear(cfg.mesh_width), holder.linear(cfg.mesh_width));
        MemResult r = m.load(victim, line);
        EXPECT_EQ(r.hit_level, HitLevel::LLC_REMOTE);
        EXPECT_EQ(r.serving_tile.linear(cfg.mesh_width), holder.linear(cfg.mesh_width));
        chas.insert(r.cha_tile.linear(cfg.mesh_width));
        m.flush_l1(victim, line);
    }
    EXPECT_GE(chas.size(), 2u);  // one forwarder, several directory homes

    hold_llc(m, holder, {});  // holding nothing changes nothing
    EXPECT_TRUE(m.audit_all());
}

TEST(Agents, EvictForcesMissButKeepsLlcResidency) {
    MachineConfig cfg = quiet_config();
    SimMachine m(cfg);
    TileId victim{0, 0}, attacker{1, 0};
    PhysAddr line{0x70000};
    hold_llc(m, attacker, {line});
    m.load(victim, line);
    ASSERT_TRUE(m.l1_holds(victim, line));

    EXPECT_EQ(evict_victim_l1(m, attacker, {line}), 0);
    EXPECT_FALSE(m.l1_holds(victim, line));
    MemResult r = m.load(victim, line);
    EXPECT_EQ(r.hit_level, HitLevel::LLC_REMOTE);  // still an LLC hit, not DRAM

    // An unheld line is reported and ends up uncached entirely.
    PhysAddr unheld{0x71000};
    EXPECT_EQ(evict_victim_l1(m, attacker, {unheld}), 1);
    EXPECT_EQ(m.load(victim, unheld).hit_level, HitLevel::DRAM);
}

TEST(Agents, EvictionPreservesForwarder) {
    MachineConfig cfg = quiet_config();
    SimMachine m(cfg);
    TileId victim{0, 0}, holder{1, 0};
    AesTables tables;
    auto td4 = tables.td4_lines();
    std::vector<PhysAddr> lines(td4.begin(), td4.end());
    hold_llc(m, holder, lines);
    for (int round = 0; round < 5; round++) {
        for (PhysAddr a : lines) m.load(victim, a);
        evict_victim_l1(m, holder, lines);
        hold_llc(m, holder, lines);
        for (PhysAddr a : lines)
            EXPECT_EQ(m.llc_forwarder(a)->linear(cfg.mesh_width),
                      holder.linear(cfg.mesh_width));
    }
}

namespace {

struct TimerBench {
    MachineConfig cfg = quiet_config();
    SimMachine m{cfg};
    TileId victim{0, 0}, holder{1, 0}, timer{0, 1};
    AesTables tables;
    DecryptIo io;

    TimerBench() {
        auto base = testutil::find_td4_base(cfg, victim, 2, 3, 2, 6);
        EXPECT_TRUE(base.has_value());
        tables.td4_base = PhysAddr{*base};
        // The out line's CHA must be close to the timer or the refetch after
        // the first observed store eats the whole interval.
        io.out = testutil::line_with_cha_hop(cfg, timer, 1, 0x400000);
        prime_l1_tables(m, victim, tables);
        refresh();
        // Settle the out line: the victim owns it after a warmup decryption.
        io.key_schedule = aes::AesKeySchedule::expand({});
        aes_decrypt(m, victim, io, tables);
    }

    void refresh() {
        auto td4 = tables.td4_lines();
        std::vector<PhysAddr> lines(td4.begin(), td4.end());
        evict_victim_l1(m, holder, lines);
        hold_llc(m, holder, lines);
    }

    TimerReading one(const aes::Block& key, const aes::Block& ct, TimerMethod method) {
        refresh();
        io.in = ct;
        io.key_schedule = aes::AesKeySchedule::expand(key);
        TimerAgent::Config tc;
        tc.watch_a = io.out;
        tc.watch_b = PhysAddr{io.out.raw + 4};
        tc.method = method;
        return timer_watch(m, timer, tc, victim, io, tables);
    }
};

}  // namespace

TEST(Timer, SharedPollReadingIsQuantized) {
    TimerBench b;
    std::mt19937_64 rng(31);
    for (int i = 0; i < 10; i++) {
        aes::Block key, ct;
        for (auto& v : key) v = static_cast<uint8_t>(rng());
        for (auto& v : ct) v = static_cast<uint8_t>(rng());
        TimerReading rd = b.one(key, ct, TimerMethod::SharedPoll);
        ASSERT_FALSE(rd.timed_out);
        EXPECT_EQ(rd.t26_31 % b.cfg.lat_poll_iter, 0u);
        EXPECT_EQ(rd.t26_31, rd.poll_count * b.cfg.lat_poll_iter);
        EXPECT_GT(rd.poll_count, 0u);
    }
}

// Readings must land in distance-separated bands: ground-truth LOW trials
// (all four word-1 lookups near) read lower than any trial touching a far
// line, with a gap at least the per-hop model's prediction.
TEST(Timer, ReadingsSeparateLowAndHighTrials) {
    TimerBench b;
    std::vector<uint32_t> low, high;
    std::mt19937_64 rng(32);
    while (low.size() < 8 || high.size() < 8) {
        aes::Block key, ct;
        for (auto& v : key) v = static_cast<uint8_t>(rng());
        for (auto& v : ct) v = static_cast<uint8_t>(rng());
        auto ks = aes::AesKeySchedule::expand(key);
        aes::DecryptTrace tr = aes::decrypt_trace(ks, ct);
        bool is_low = true;
        for (uint8_t idx : tr.last_round[1])
            if (hop_distance(cha_of(PhysAddr{b.tables.td4_base.raw + 64ull * (idx / 64)}, b.cfg),
                             b.victim) > 3)
                is_low = false;
        TimerReading rd = b.one(key, ct, TimerMethod::SharedPoll);
        ASSERT_FALSE(rd.timed_out);
        (is_low ? low : high).push_back(rd.t26_31);
        if (low.size() > 400) break;  // placement-dependent safety valve
    }
    ASSERT_GE(low.size(), 8u);
    ASSERT_GE(high.size(), 8u);
    uint32_t low_max = *std::max_element(low.begin(), low.end());
    uint32_t high_min = *std::min_element(high.begin(), high.end());
    EXPECT_GT(high_min, low_max);
    // Two extra CHA hops cost 2*2*(per_hop+router) on the word's slowest
    // load; the reading gap reflects it modulo one poll quantum.
    EXPECT_GE(high_min - low_max,
              2 * 2 * (b.cfg.lat_per_hop + b.cfg.lat_router) - b.cfg.lat_poll_iter);
}

TEST(Timer, TimeoutWhenVictimNeverWrites) {
    MachineConfig cfg = quiet_config();
    SimMachine m(cfg);
    TileId timer{0, 1};
    PhysAddr out{0x400000};
    m.store(TileId{0, 0}, out);  // line exists, no further writes
    TimerAgent::Config tc;
    tc.watch_a = out;
    tc.watch_b = PhysAddr{out.raw + 4};
    tc.timeout_polls = 50;
    TimerAgent agent(timer, tc);
    Scheduler sched;
    sched.run(m, {&agent}, [&](const Scheduler&) { return !agent.readings().empty(); });
    ASSERT_FALSE(agent.readings().empty());
    EXPECT_TRUE(agent.readings().front().timed_out);
}

TEST(Timer, PrefetchwMethodDetectsBothStores) {
    TimerBench b;
    std::mt19937_64 rng(33);
    aes::Block key, ct;
    for (auto& v : key) v = static_cast<uint8_t>(rng());
    for (auto& v : ct) v = static_cast<uint8_t>(rng());
    TimerReading rd = b.one(key, ct, TimerMethod::Prefetchw);
    ASSERT_FALSE(rd.timed_out);
    EXPECT_EQ(rd.method, TimerMethod::Prefetchw);
    EXPECT_GT(rd.t26_31, 0u);
}

// Enabling the timer may slow the victim's own stores to the watched line
// (coherence on the out buffer) but must not touch its Td4 load latencies.
TEST(Timer, PerturbationLimitedToTheOutLine) {
    std::mt19937_64 rng(34);
    aes::Block key, ct;
    for (auto& v : key) v = static_cast<uint8_t>(rng());
    for (auto& v : ct) v = static_cast<uint8_t>(rng());

    TimerBench quiet_bench;
    quiet_bench.refresh();
    quiet_bench.io.in = ct;
    quiet_bench.io.key_schedule = aes::AesKeySchedule::expand(key);
    SimDecryptResult alone =
        aes_decrypt(quiet_bench.m, quiet_bench.victim, quiet_bench.io, quiet_bench.tables);

    TimerBench watched;
    watched.refresh();
    watched.io.in = ct;
    watched.io.key_schedule = aes::AesKeySchedule::expand(key);
    TimerAgent::Config tc;
    tc.watch_a = watched.io.out;
    tc.watch_b = PhysAddr{watched.io.out.raw + 4};
    VictimDecryptAgent victim(watched.victim, watched.io, watched.tables);
    TimerAgent timer(watched.timer, tc);
    Scheduler sched;
    sched.run(watched.m, {&victim, &timer},
              [&](const Scheduler&) { return victim.program().done(); });

    for (int w = 0; w < 4; w++)
        for (int k = 0; k < 4; k++)
            EXPECT_EQ(victim.program().last_round_loads()[static_cast<size_t>(w)][static_cast<size_t>(k)].latency,
                      alone.last_round_loads[static_cast<size_t>(w)][static_cast<size_t>(k)].latency);
    // The second store finds the timer's shared copy and pays the upgrade,
    // while without a timer it is a plain hit on the victim's own line.
    uint32_t alone_store = 0, watched_store = 0;
    DecryptProgram replay(quiet_bench.victim, quiet_bench.io, quiet_bench.tables);
    quiet_bench.refresh();
    while (!replay.done()) replay.step(quiet_bench.m);
    alone_store = replay.store_results()[1].latency;
    watched_store = victim.program().store_results()[1].latency;
    EXPECT_GT(watched_store, alone_store);
}
