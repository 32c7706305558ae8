#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "nucasim/aes.hpp"
#include "nucasim/agents.hpp"
#include "nucasim/classifier.hpp"
#include "nucasim/machine.hpp"
#include "nucasim/profiler.hpp"
#include "nucasim/victims.hpp"

namespace nucasim {

/// Per-byte candidate vote histograms for one recovered round-key word.
struct KeyRecoveryState {
    std::array<std::array<uint64_t, 256>, 4> counters{};
    uint64_t trials_total = 0;
    uint64_t trials_low = 0;       // trials whose verdict was LOW
    uint64_t trials_discarded = 0; // timer timeouts
};

/// One victim decryption trial: the repeated timed observations of a single
/// ciphertext and the majority verdict over them.
struct TrialRecord {
    aes::Block ciphertext{};
    aes::Block plaintext{};
    std::vector<double> readings;  // t26_31 samples, timeouts dropped
    Label verdict = Label::HIGH;
    bool discarded = false;
};

/// Td4 indices whose cache line's CHA is near the victim. The classification
/// must split Td4's four lines into at least one near and one far line, and
/// cover all four; otherwise the placement carries no distance information
/// and the caller should re-sweep the table placement.
inline std::vector<uint8_t> build_low_index_set(const AddressClassMap& map,
                                                const AesTables& tables,
                                                const MachineConfig& cfg) {
    std::vector<uint8_t> low;
    int near_lines = 0, far_lines = 0;
    auto lines = tables.td4_lines();
    for (int l = 0; l < 4; l++) {
        bool near = map.is_near(lines[static_cast<size_t>(l)], cfg);
        bool far = map.is_far(lines[static_cast<size_t>(l)], cfg);
        if (near) near_lines++;
        else if (far) far_lines++;
        else throw ScenarioError("no leakage at this placement: unclassified Td4 line");
        if (near)
            for (int i = 64 * l; i < 64 * (l + 1); i++) low.push_back(static_cast<uint8_t>(i));
    }
    if (near_lines == 0 || far_lines == 0)
        throw ScenarioError("no leakage at this placement: Td4 lines all near or all far");
    return low;
}

/// Ground truth for one trial: do all four Td4 lookups of `word` land in
/// near lines? (Simulator-side oracle; the attack itself never calls this.)
inline bool ground_truth_low(const aes::AesKeySchedule& ks, const aes::Block& ciphertext,
                             const std::vector<uint8_t>& low_set, const AesTables& tables,
                             int word) {
    std::array<bool, 4> line_low{false, false, false, false};
    for (uint8_t i : low_set) line_low[static_cast<size_t>(tables.td4_line_of(i))] = true;
    aes::DecryptTrace tr = aes::decrypt_trace(ks, ciphertext);
    for (uint8_t idx : tr.last_round[static_cast<size_t>(word)])
        if (!line_low[static_cast<size_t>(tables.td4_line_of(idx))]) return false;
    return true;
}

/// Fold one trial into the vote histograms. HIGH verdicts contribute
/// nothing. For a LOW verdict, every low-set table value is a candidate:
/// XORing it with the observed plaintext byte votes for one key byte, and
/// the true byte is voted in every correctly-classified LOW trial while
/// wrong candidates spread out across trials.
inline void accumulate(KeyRecoveryState& state, const TrialRecord& trial,
                       const std::vector<uint8_t>& low_set, int word_index) {
    if (trial.discarded) {
        state.trials_discarded++;
        return;
    }
    state.trials_total++;
    if (trial.verdict != Label::LOW) return;
    state.trials_low++;
    for (int b = 0; b < 4; b++) {
        uint8_t p = trial.plaintext[static_cast<size_t>(4 * word_index + b)];
        auto& hist = state.counters[static_cast<size_t>(b)];
        for (uint8_t i : low_set) hist[p ^ aes::kTd4[i]]++;
    }
}

struct KeyExtraction {
    std::array<uint8_t, 4> bytes{};
    std::array<double, 4> margins{};      // (top - runner-up) / trials_low
    std::array<bool, 4> determined{};     // false on a tie
    bool all_determined = false;

    uint32_t word() const {
        return (static_cast<uint32_t>(bytes[0]) << 24) | (static_cast<uint32_t>(bytes[1]) << 16) |
               (static_cast<uint32_t>(bytes[2]) << 8) | bytes[3];
    }
};

/// Majority vote per byte position. A byte whose top two counters tie is
/// reported undetermined rather than guessed.
inline KeyExtraction extract_key_word(const KeyRecoveryState& state) {
    KeyExtraction ex;
    if (state.trials_low == 0) return ex;  // nothing determined
    for (int b = 0; b < 4; b++) {
        const auto& hist = state.counters[static_cast<size_t>(b)];
        int best = 0;
        uint64_t top = 0, second = 0;
        for (int v = 0; v < 256; v++) {
            if (hist[static_cast<size_t>(v)] > top) {
                second = top;
                top = hist[static_cast<size_t>(v)];
                best = v;
            } else if (hist[static_cast<size_t>(v)] > second) {
                second = hist[static_cast<size_t>(v)];
            }
        }
        ex.bytes[static_cast<size_t>(b)] = static_cast<uint8_t>(best);
        ex.margins[static_cast<size_t>(b)] =
            static_cast<double>(top - second) / static_cast<double>(state.trials_low);
        ex.determined[static_cast<size_t>(b)] = top > second;
    }
    ex.all_determined =
        ex.determined[0] && ex.determined[1] && ex.determined[2] && ex.determined[3];
    return ex;
}

/// Placement and roles of the end-to-end attack on one machine.
struct AttackContext {
    TileId victim;
    TileId holder;   // remote thread keeping Td4 in its LLC bank
    TileId timer;
    TileId evictor;  // remote thread forcing victim L1 misses (usually == holder)
    AesTables tables;
    PhysAddr out_addr{0x400000};
    int reps_per_trial = 40;  // repeated timed decryptions per ciphertext
    int monitored_word = 1;   // out+4 boundary
    TimerAgent::Config timer_config() const {
        TimerAgent::Config t;
        t.watch_a = PhysAddr{out_addr.raw + 4u * static_cast<unsigned>(monitored_word - 1)};
        t.watch_b = PhysAddr{out_addr.raw + 4u * static_cast<unsigned>(monitored_word)};
        return t;
    }
};

/// Force the state the channel needs before a timed decryption: Td4 out of
/// the victim L1 but refreshed in the holder's bank.
inline void refresh_trial_state(SimMachine& m, const AttackContext& ctx) {
    auto td4 = ctx.tables.td4_lines();
    std::vector<PhysAddr> lines(td4.begin(), td4.end());
    evict_victim_l1(m, ctx.evictor, lines);
    hold_llc(m, ctx.holder, lines);
}

/// One observation of one ciphertext: a full decryption with the timer
/// watching the monitored word boundary.
inline TimerReading timed_decrypt(SimMachine& m, const AttackContext& ctx, const DecryptIo& io) {
    refresh_trial_state(m, ctx);
    return timer_watch(m, ctx.timer, ctx.timer_config(), ctx.victim, io, ctx.tables);
}

/// Fig-style trial: decrypt one random ciphertext `reps_per_trial` times,
/// classify each reading, and take the majority verdict.
inline TrialRecord run_trial(SimMachine& m, const AttackContext& ctx,
                             const aes::AesKeySchedule& victim_key, const aes::Block& ciphertext,
                             const StumpEnsemble& model) {
    TrialRecord rec;
    rec.ciphertext = ciphertext;
    DecryptIo io;
    io.in = ciphertext;
    io.out = ctx.out_addr;
    io.key_schedule = victim_key;
    for (int rep = 0; rep < ctx.reps_per_trial; rep++) {
        TimerReading rd = timed_decrypt(m, ctx, io);
        if (!rd.timed_out) rec.readings.push_back(rd.t26_31);
    }
    rec.plaintext = aes::decrypt_block(victim_key, ciphertext);
    if (rec.readings.empty()) {
        rec.discarded = true;
        return rec;
    }
    rec.verdict = vote(model, rec.readings);
    return rec;
}

}  // namespace nucasim
