#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "nucasim/agents.hpp"
#include "nucasim/artifacts.hpp"
#include "nucasim/classifier.hpp"
#include "nucasim/covert.hpp"
#include "nucasim/defense.hpp"
#include "nucasim/hex.hpp"
#include "nucasim/keyrec.hpp"
#include "nucasim/machine.hpp"
#include "nucasim/profiler.hpp"
#include "nucasim/victims.hpp"

namespace nucasim {

// Default role placement: victim in the corner for maximal CHA-distance
// spread, helper threads on adjacent tiles so the forwarding leg stays
// short and the near-CHA hit lands on the calibrated 40-cycle mark.
struct RoleTiles {
    TileId victim{0, 0};
    TileId holder{1, 0};
    TileId timer{0, 1};
};

inline aes::Block random_block(std::mt19937_64& rng) {
    aes::Block b;
    for (auto& v : b) v = static_cast<uint8_t>(rng());
    return b;
}

// ---- profiling stage -----------------------------------------------------------

struct ProfileParams {
    uint64_t pool_base = 0x4c0000;
    int pool_count = 64;
    int samples_per_addr = 1000;
    double quantile_low = 0.25;
    double quantile_high = 0.75;
    double min_gap = 20.0;
};

struct ProfileRun {
    LatencyProfile profile;
    AddressClassMap map;
    PhysAddr attack_near, attack_far;
};

/// Execute-and-profile from the victim tile over a pool of consecutive
/// lines held in the holder's bank.
inline ProfileRun run_profile(SimMachine& m, const RoleTiles& roles, const ProfileParams& p) {
    std::vector<PhysAddr> pool;
    for (int i = 0; i < p.pool_count; i++)
        pool.push_back(PhysAddr{p.pool_base + static_cast<uint64_t>(i) * m.config().line_size});
    hold_llc(m, roles.holder, pool);
    ProfileRun run;
    run.profile = profile_addresses(m, roles.victim, pool, p.samples_per_addr);
    run.map = classify_addresses(run.profile, p.quantile_low, p.quantile_high, p.min_gap);
    auto pair = pick_attack_pair(run.map);
    run.attack_near = pair.first;
    run.attack_far = pair.second;
    return run;
}

// ---- toy secret-dependent-address attack ----------------------------------------

struct ToyParams {
    ProfileParams profile;
    int bits = 10000;
    int min_hop_gap = 8;          // required CHA-distance gap of the pair
    double congestion_rate = 0.0; // background NoC injection rate, 0 = idle
    bool defended = false;        // uniform-latency defense during the attack
    NocTrafficConfig noc;         // used when congestion_rate > 0
};

struct ToyResult {
    double accuracy = 0.0;
    double mean_near = 0.0;  // measured over transmitted 1-bits
    double mean_far = 0.0;
    double threshold = 0.0;
    PhysAddr addr_near, addr_far;
    std::vector<uint32_t> near_latencies;
    std::vector<uint32_t> far_latencies;
};

inline ToyResult run_toy_attack(const MachineConfig& cfg, const ToyParams& p, uint64_t seed) {
    MachineConfig mc = cfg;
    mc.rng_seed = seed;
    SimMachine m(mc);
    RoleTiles roles;

    // The attacker calibrates on an idle, undefended machine.
    ProfileRun prof = run_profile(m, roles, p.profile);

    ToyVictim v;
    v.addr_near = prof.attack_near;
    v.addr_far = prof.attack_far;
    int gap = hop_distance(m.cha_of(v.addr_far), roles.victim) -
              hop_distance(m.cha_of(v.addr_near), roles.victim);
    if (gap < p.min_hop_gap)
        throw ScenarioError("toy attack pair below the required CHA-distance gap");

    if (p.defended) apply_defense(m, DefenseConfig{DefenseMode::DelayToWorst, 0});
    if (p.congestion_rate > 0) {
        NocTrafficConfig noc = p.noc;
        noc.rng_seed = seed;
        m.set_congestion_delays(noc_hop_wait_distribution(noc, p.congestion_rate));
    }

    ToyResult res;
    res.threshold = prof.map.threshold;
    res.addr_near = v.addr_near;
    res.addr_far = v.addr_far;
    std::mt19937_64 rng(seed ^ 0x746f79u);
    uint64_t correct = 0;
    for (int i = 0; i < p.bits; i++) {
        int bit = static_cast<int>(rng() & 1);
        v.secret = bit ? 0xFF : 0x00;
        m.flush_l1(roles.victim, v.addr_near);
        m.flush_l1(roles.victim, v.addr_far);
        MemResult r = toy_victim_run(m, roles.victim, v, 1);
        int guess = r.latency < res.threshold ? 1 : 0;
        if (guess == bit) correct++;
        (bit ? res.near_latencies : res.far_latencies).push_back(r.latency);
    }
    res.accuracy = static_cast<double>(correct) / p.bits;
    auto mean = [](const std::vector<uint32_t>& v) {
        if (v.empty()) return 0.0;
        double s = 0;
        for (uint32_t x : v) s += x;
        return s / static_cast<double>(v.size());
    };
    res.mean_near = mean(res.near_latencies);
    res.mean_far = mean(res.far_latencies);
    return res;
}

// ---- end-to-end AES attack -------------------------------------------------------

struct AesAttackParams {
    int keys = 20;
    int trials = 4000;
    int reps_per_trial = 40;
    int train_samples = 100000;
    int boost_rounds = 50;
    std::vector<int> trial_grid = {100, 500, 1000, 2000, 4000};
    int monitored_word = 1;
    uint64_t td4_scan_base = 0x300000;
    uint64_t out_scan_base = 0x400000;
    int profile_samples = 1000;
    double td4_min_gap = 12.0;
    // Placement selection: the sorted CHA hops of the four lines must split
    // 2/2 with exactly this gap between the closest far line and the
    // farthest near line. A small gap keeps the bands close enough that
    // single samples stay fallible while the 40-sample vote saturates.
    int placement_gap_hops = 2;
    int max_low_hop = 6;  // keeps the low band fast enough for the poll timer
    int held_out_trials = 0;  // verdict-accuracy evaluation set, 0 = skip
    bool defended = false;    // enable the delay defense for the victim phase
};

struct VerdictEval {
    int trials = 0;
    int truth_low = 0;
    double accuracy_vote = 0.0;    // majority over reps_per_trial samples
    double accuracy_single = 0.0;  // first sample only
};

struct KeyRunResult {
    aes::Block key{};
    uint32_t true_word = 0;
    uint32_t recovered_word = 0;
    bool correct = false;
    bool determined = false;
    uint64_t trials_low = 0;
    std::map<int, bool> correct_at_grid;
    std::array<double, 4> margins{};
    KeyRecoveryState state;
};

struct AesAttackResult {
    uint64_t td4_base = 0;
    uint64_t out_addr = 0;
    std::vector<int> td4_hops;      // CHA distance of each Td4 line from the victim
    AddressClassMap td4_map;
    std::vector<uint8_t> low_set;
    StumpEnsemble model;
    VerdictEval verdicts;
    std::vector<KeyRunResult> keys;
    std::vector<std::pair<int, double>> accuracy_curve;
};

namespace detail {

/// Oracle-guided placement selection (experiment control, not attack code):
/// the runner sweeps the table base until the hash splits its four lines
/// into the requested near/far pattern, then re-derives the split honestly
/// by profiling.
inline uint64_t select_td4_base(const MachineConfig& cfg, TileId victim,
                                const AesAttackParams& p) {
    for (int k = 0; k < (1 << 18); k++) {
        uint64_t base = p.td4_scan_base + static_cast<uint64_t>(k) * cfg.line_size;
        std::array<int, 4> hops;
        for (int l = 0; l < 4; l++)
            hops[static_cast<size_t>(l)] = hop_distance(
                cha_of(PhysAddr{base + 64ull * static_cast<uint64_t>(l)}, cfg), victim);
        std::sort(hops.begin(), hops.end());
        if (hops[0] >= 1 && hops[1] <= p.max_low_hop &&
            hops[2] - hops[1] == p.placement_gap_hops)
            return base;
    }
    throw ScenarioError("no leakage at this placement: td4 sweep found no usable base");
}

inline uint64_t select_out_addr(const MachineConfig& cfg, TileId timer, uint64_t scan_base) {
    for (uint64_t a = scan_base;; a += cfg.line_size)
        if (hop_distance(cha_of(PhysAddr{a}, cfg), timer) <= 1) return a;
}

}  // namespace detail

struct AttackBench {
    MachineConfig cfg;
    SimMachine machine;
    RoleTiles roles;
    AttackContext ctx;
    AddressClassMap td4_map;
    std::vector<uint8_t> low_set;

    AttackBench(const MachineConfig& base_cfg, const AesAttackParams& p, uint64_t seed)
        : cfg([&] {
              MachineConfig c = base_cfg;
              c.rng_seed = seed;
              return c;
          }()),
          machine(cfg) {
        ctx.victim = roles.victim;
        ctx.holder = roles.holder;
        ctx.timer = roles.timer;
        ctx.evictor = roles.holder;  // the LLC-holder thread also runs the probes
        ctx.reps_per_trial = p.reps_per_trial;
        ctx.monitored_word = p.monitored_word;
        ctx.tables.td4_base = PhysAddr{detail::select_td4_base(cfg, roles.victim, p)};
        ctx.out_addr = PhysAddr{detail::select_out_addr(cfg, roles.timer, p.out_scan_base)};
        ctx.tables.validate(cfg);

        prime_l1_tables(machine, roles.victim, ctx.tables);
        auto td4 = ctx.tables.td4_lines();
        hold_llc(machine, roles.holder, {td4.begin(), td4.end()});

        // Settle the out buffer in the victim's bank before the timer runs.
        DecryptIo warm;
        warm.out = ctx.out_addr;
        warm.key_schedule = aes::AesKeySchedule::expand({});
        refresh_trial_state(machine, ctx);
        aes_decrypt(machine, roles.victim, warm, ctx.tables);

        // The attacker profiles the four table lines from the victim tile and
        // splits them at the median.
        std::vector<PhysAddr> lines(td4.begin(), td4.end());
        LatencyProfile prof = profile_addresses(machine, roles.victim, lines, p.profile_samples);
        td4_map = classify_addresses(prof, 0.5, 0.5, p.td4_min_gap);
        low_set = build_low_index_set(td4_map, ctx.tables, cfg);
    }

    bool truth_low(const aes::AesKeySchedule& ks, const aes::Block& ct, int word) const {
        return ground_truth_low(ks, ct, low_set, ctx.tables, word);
    }
};

inline AesAttackResult run_aes_attack(const MachineConfig& base_cfg, const AesAttackParams& p,
                                      uint64_t seed) {
    AttackBench bench(base_cfg, p, seed);
    SimMachine& m = bench.machine;
    AesAttackResult res;
    res.td4_base = bench.ctx.tables.td4_base.raw;
    res.out_addr = bench.ctx.out_addr.raw;
    res.td4_map = bench.td4_map;
    res.low_set = bench.low_set;
    for (PhysAddr line : bench.ctx.tables.td4_lines())
        res.td4_hops.push_back(hop_distance(m.cha_of(line), bench.roles.victim));

    // Steps 1-3: the attacker times decryptions of known keys and trains on
    // the oracle labels its own keys let it compute.
    std::mt19937_64 rng(seed ^ 0x61657331u);
    std::vector<LabeledSample> training;
    training.reserve(static_cast<size_t>(p.train_samples));
    while (static_cast<int>(training.size()) < p.train_samples) {
        aes::Block key = random_block(rng), ct = random_block(rng);
        auto ks = aes::AesKeySchedule::expand(key);
        DecryptIo io;
        io.in = ct;
        io.out = bench.ctx.out_addr;
        io.key_schedule = ks;
        TimerReading rd = timed_decrypt(m, bench.ctx, io);
        if (rd.timed_out) continue;
        Label label = bench.truth_low(ks, ct, p.monitored_word) ? Label::LOW : Label::HIGH;
        training.push_back(LabeledSample{static_cast<double>(rd.t26_31), label});
    }
    res.model = train_adaboost(training, p.boost_rounds);

    // The defense, when evaluated, arrives after the attacker calibrated.
    if (p.defended) apply_defense(m, DefenseConfig{DefenseMode::DelayToWorst, 0});

    // Held-out verdict accuracy (single sample vs majority vote).
    if (p.held_out_trials > 0) {
        VerdictEval ev;
        ev.trials = p.held_out_trials;
        int vote_ok = 0, single_ok = 0;
        for (int t = 0; t < p.held_out_trials; t++) {
            aes::Block key = random_block(rng), ct = random_block(rng);
            auto ks = aes::AesKeySchedule::expand(key);
            Label truth = bench.truth_low(ks, ct, p.monitored_word) ? Label::LOW : Label::HIGH;
            if (truth == Label::LOW) ev.truth_low++;
            TrialRecord rec = run_trial(m, bench.ctx, ks, ct, res.model);
            if (rec.discarded) continue;
            if (rec.verdict == truth) vote_ok++;
            if (res.model.predict(rec.readings.front()) == truth) single_ok++;
        }
        ev.accuracy_vote = static_cast<double>(vote_ok) / ev.trials;
        ev.accuracy_single = static_cast<double>(single_ok) / ev.trials;
        res.verdicts = ev;
    }

    // Steps 4-7 for each victim key, with extraction snapshots on the grid.
    std::vector<int> grid = p.trial_grid;
    std::erase_if(grid, [&](int t) { return t > p.trials || t < 1; });
    std::sort(grid.begin(), grid.end());
    if (p.keys > 0 && (grid.empty() || grid.back() != p.trials)) grid.push_back(p.trials);
    for (int k = 0; k < p.keys; k++) {
        KeyRunResult kr;
        kr.key = random_block(rng);
        auto ks = aes::AesKeySchedule::expand(kr.key);
        kr.true_word = ks.last_round_key_word(p.monitored_word);
        size_t next_grid = 0;
        for (int t = 1; t <= p.trials; t++) {
            aes::Block ct = random_block(rng);
            TrialRecord rec = run_trial(m, bench.ctx, ks, ct, res.model);
            accumulate(kr.state, rec, bench.low_set, p.monitored_word);
            while (next_grid < grid.size() && grid[next_grid] == t) {
                KeyExtraction ex = extract_key_word(kr.state);
                kr.correct_at_grid[t] = ex.all_determined && ex.word() == kr.true_word;
                next_grid++;
            }
        }
        KeyExtraction ex = extract_key_word(kr.state);
        kr.recovered_word = ex.word();
        kr.determined = ex.all_determined;
        kr.correct = ex.all_determined && ex.word() == kr.true_word;
        kr.margins = ex.margins;
        kr.trials_low = kr.state.trials_low;
        res.keys.push_back(std::move(kr));
    }
    for (int t : grid) {
        int ok = 0;
        for (const KeyRunResult& kr : res.keys)
            if (kr.correct_at_grid.count(t) && kr.correct_at_grid.at(t)) ok++;
        if (!res.keys.empty())
            res.accuracy_curve.emplace_back(t, static_cast<double>(ok) /
                                                   static_cast<double>(res.keys.size()));
    }
    return res;
}

// ---- covert channel ---------------------------------------------------------------

struct CovertParams {
    ProfileParams profile;
    int samples_per_bit = 3;
    uint32_t decode_cost = 6;
    size_t payload_bytes = 12500;            // 1e5 bits
    std::vector<size_t> sweep_payloads;      // optional payload-size sweep
    std::optional<std::vector<uint8_t>> payload;  // explicit payload wins
};

struct CovertResult {
    ChannelStats stats;
    double predicted_cycles_per_bit = 0.0;
    double measured_cycles_per_bit = 0.0;
    std::vector<std::pair<size_t, ChannelStats>> sweep;
};

inline CovertResult run_covert(const MachineConfig& base_cfg, const CovertParams& p,
                               uint64_t seed) {
    MachineConfig mc = base_cfg;
    mc.rng_seed = seed;
    SimMachine m(mc);
    RoleTiles roles;
    ProfileRun prof = run_profile(m, roles, p.profile);

    ChannelConfig ch;
    ch.addr_near = prof.attack_near;
    ch.addr_far = prof.attack_far;
    ch.threshold = prof.map.threshold;
    ch.samples_per_bit = p.samples_per_bit;
    ch.decode_cost = p.decode_cost;

    std::mt19937_64 rng(seed ^ 0x636f76u);
    std::vector<uint8_t> payload;
    if (p.payload) payload = *p.payload;
    else {
        payload.resize(p.payload_bytes);
        for (auto& b : payload) b = static_cast<uint8_t>(rng());
    }

    CovertResult res;
    ChannelRun run = run_channel(m, roles.victim, roles.timer, ch, payload);
    res.stats = run.stats;
    res.measured_cycles_per_bit = static_cast<double>(run.stats.sim_cycles) /
                                  static_cast<double>(run.stats.bits_sent);
    res.predicted_cycles_per_bit =
        static_cast<double>(run.sender_busy_cycles) / static_cast<double>(run.stats.bits_sent);

    for (size_t bytes : p.sweep_payloads) {
        std::vector<uint8_t> pl(bytes);
        for (auto& b : pl) b = static_cast<uint8_t>(rng());
        ChannelRun r = run_channel(m, roles.victim, roles.timer, ch, pl);
        res.sweep.emplace_back(bytes, r.stats);
    }
    return res;
}

// ---- defense evaluation --------------------------------------------------------------

struct DefenseEvalParams {
    ProfileParams profile;
    int ks_samples = 10000;   // per class
    ToyParams toy;
    AesAttackParams aes;
};

struct DefenseEvalResult {
    uint32_t floor = 0;
    double ks_defended = 0.0;
    double toy_accuracy = 0.0;
    int keys_total = 0;
    int keys_recovered = 0;
    double min_chi2_p = 1.0;   // across keys and byte positions
    double mean_llc_hit_undefended = 0.0;
    double mean_llc_hit_defended = 0.0;  // the performance cost of equalizing
};

inline double chi_squared_uniform_p(const std::array<uint64_t, 256>& counts);

inline DefenseEvalResult run_defense_eval(const MachineConfig& base_cfg,
                                          const DefenseEvalParams& p, uint64_t seed) {
    DefenseEvalResult res;

    // Latency equalization: near/far distributions under the defense.
    MachineConfig mc = base_cfg;
    mc.rng_seed = seed;
    SimMachine m(mc);
    RoleTiles roles;
    ProfileRun prof = run_profile(m, roles, p.profile);  // calibrated clean
    DefenseApplied applied = apply_defense(m, DefenseConfig{DefenseMode::DelayToWorst, 0});
    res.floor = applied.floor;

    auto sample_class = [&](const std::vector<ClassifiedAddress>& cls) {
        std::vector<double> out;
        out.reserve(static_cast<size_t>(p.ks_samples));
        size_t i = 0;
        while (out.size() < static_cast<size_t>(p.ks_samples)) {
            PhysAddr a = cls[i++ % cls.size()].addr;
            m.flush_l1(roles.victim, a);
            out.push_back(m.load(roles.victim, a).latency);
        }
        return out;
    };
    std::vector<double> near_def = sample_class(prof.map.va_near);
    std::vector<double> far_def = sample_class(prof.map.va_far);
    res.ks_defended = ks_statistic(near_def, far_def);
    auto mean = [](const std::vector<double>& v) {
        double s = 0;
        for (double x : v) s += x;
        return v.empty() ? 0.0 : s / static_cast<double>(v.size());
    };
    res.mean_llc_hit_defended = (mean(near_def) + mean(far_def)) / 2.0;
    res.mean_llc_hit_undefended = (prof.map.mean_near + prof.map.mean_far) / 2.0;

    // The toy attack under the defense.
    ToyParams toy = p.toy;
    toy.defended = true;
    res.toy_accuracy = run_toy_attack(base_cfg, toy, seed).accuracy;

    // Key recovery under the defense: votes should look uniform.
    AesAttackParams aes = p.aes;
    aes.defended = true;
    AesAttackResult atk = run_aes_attack(base_cfg, aes, seed);
    res.keys_total = static_cast<int>(atk.keys.size());
    for (const KeyRunResult& kr : atk.keys) {
        if (kr.correct) res.keys_recovered++;
        for (int b = 0; b < 4; b++)
            res.min_chi2_p = std::min(
                res.min_chi2_p, chi_squared_uniform_p(kr.state.counters[static_cast<size_t>(b)]));
    }
    return res;
}

}  // namespace nucasim

#include <boost/math/distributions/chi_squared.hpp>

namespace nucasim {

/// p-value of the uniformity chi-square test over 256 vote cells.
inline double chi_squared_uniform_p(const std::array<uint64_t, 256>& counts) {
    double total = 0;
    for (uint64_t c : counts) total += static_cast<double>(c);
    if (total == 0) return 1.0;
    double expect = total / 256.0;
    double stat = 0;
    for (uint64_t c : counts) {
        double d = static_cast<double>(c) - expect;
        stat += d * d / expect;
    }
    boost::math::chi_squared dist(255.0);
    return boost::math::cdf(boost::math::complement(dist, stat));
}

}  // namespace nucasim
