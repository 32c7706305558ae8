#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "nucasim/aes.hpp"
#include "nucasim/machine.hpp"
#include "nucasim/types.hpp"

namespace nucasim {

// Timing model of the unrolled decryption. Independent loads inside one
// output word overlap in the pipeline, so a word costs the slowest of its
// four lookups plus a fixed combine/XOR tail; stores retire into the store
// buffer and only occupy the issue slot.
inline constexpr uint32_t kWordCombineCost = 8;
inline constexpr uint32_t kWordAluCost = 6;
inline constexpr uint32_t kStoreIssueCost = 1;

/// Placement of the decryption tables in simulated memory.
struct AesTables {
    PhysAddr td_base{0x200000};   // Td0..Td3, 4 KiB contiguous
    PhysAddr td4_base{0x300000};  // 256 B inverse S-box

    void validate(const MachineConfig& cfg) const {
        if (td_base.raw % cfg.line_size != 0 || td4_base.raw % cfg.line_size != 0)
            throw ConfigError("table base addresses must be line-aligned");
        if (cfg.line_size != 64)
            throw ConfigError("table layout assumes 64-byte lines (Td4 = 4 lines)");
    }

    PhysAddr addr_of(aes::TableRef ref) const {
        if (ref.table == 4) return PhysAddr{td4_base.raw + ref.index};
        return PhysAddr{td_base.raw + static_cast<uint64_t>(ref.table) * 1024 +
                        static_cast<uint64_t>(ref.index) * 4};
    }

    /// The 64 cache lines covering Td0..Td3.
    std::vector<PhysAddr> td03_lines(const MachineConfig& cfg) const {
        std::vector<PhysAddr> lines;
        for (uint64_t off = 0; off < 4096; off += cfg.line_size)
            lines.push_back(PhysAddr{td_base.raw + off});
        return lines;
    }

    std::array<PhysAddr, 4> td4_lines() const {
        return {PhysAddr{td4_base.raw}, PhysAddr{td4_base.raw + 64},
                PhysAddr{td4_base.raw + 128}, PhysAddr{td4_base.raw + 192}};
    }

    /// Which of the four Td4 lines serves index i (64-byte lines).
    int td4_line_of(uint8_t index) const { return index / 64; }
};

/// One decryption call: ciphertext in, plaintext written word by word to a
/// line-aligned out buffer (all four words share one cache line).
struct DecryptIo {
    aes::Block in{};
    PhysAddr out{0x400000};
    aes::AesKeySchedule key_schedule;

    void validate(const MachineConfig& cfg) const {
        if (out.raw % cfg.line_size != 0) throw ConfigError("out buffer must be line-aligned");
        if (cfg.line_size < 16) throw ConfigError("out buffer must fit in one line");
    }
};

/// Secret-dependent-address victim: one load per invocation, target chosen
/// by one bit of the secret. A set bit selects the near-CHA address, a clear
/// bit the far one.
struct ToyVictim {
    uint8_t secret = 0;
    PhysAddr addr_near;
    PhysAddr addr_far;
    uint8_t bit_mask = 1;
};

inline MemResult toy_victim_run(SimMachine& m, TileId victim_tile, const ToyVictim& v,
                                uint8_t mask) {
    PhysAddr target = (v.secret & mask) != 0 ? v.addr_near : v.addr_far;
    if (m.l1_holds(victim_tile, target))
        throw ScenarioError("toy victim target is L1-resident; forcing agents not run");
    return m.load(victim_tile, target);
}

/// Stepwise replay of one AES decryption on the simulated machine.
///
/// Every table read is issued as a simulated load and every out-buffer write
/// as a simulated store, one machine operation per step, so concurrent
/// agents observe them. The returned cycle counts implement the overlap
/// model: the four loads of a word are issued back-to-back at the same
/// local time and the clock advances by their maximum plus the fixed tail.
class DecryptProgram {
public:
    DecryptProgram(TileId tile, const DecryptIo& io, const AesTables& tables)
        : tile_(tile), io_(io), tables_(tables),
          trace_(aes::decrypt_trace(io.key_schedule, io.in)) {}

    struct Step {
        uint32_t cycles = 0;
        bool done = false;
    };

    Step step(SimMachine& m) {
        Step out;
        switch (phase_) {
            case Phase::InitialArk:
                phase_ = Phase::MainRounds;
                out.cycles = kWordAluCost;
                break;
            case Phase::MainRounds: {
                const aes::TableRef ref = trace_.main_rounds[round_][word_][lane_];
                MemResult r = m.load(tile_, tables_.addr_of(ref));
                group_max_ = std::max(group_max_, r.latency);
                if (++lane_ == 4) {
                    lane_ = 0;
                    out.cycles = group_max_ + kWordCombineCost + kWordAluCost;
                    group_max_ = 0;
                    if (++word_ == 4) {
                        word_ = 0;
                        if (++round_ == 9) phase_ = Phase::LastRoundLoads;
                    }
                }
                break;
            }
            case Phase::LastRoundLoads: {
                uint8_t idx = trace_.last_round[word_][lane_];
                MemResult r = m.load(tile_, PhysAddr{tables_.td4_base.raw + idx});
                // All sixteen final-round loads sit in the out-of-order window
                // together, so accesses to a line whose miss is already in
                // flight ride that miss instead of the later L1 hit. The
                // line's first-touch latency is its cost for the whole round.
                uint64_t line = tables_.td4_base.raw + (idx & 0xc0u);
                uint32_t effective = r.latency;
                bool seen = false;
                for (size_t i = 0; i < n_seen_; i++) {
                    if (seen_lines_[i].first == line) {
                        effective = seen_lines_[i].second;
                        seen = true;
                        break;
                    }
                }
                if (!seen && n_seen_ < seen_lines_.size())
                    seen_lines_[n_seen_++] = {line, r.latency};
                r.latency = effective;
                last_round_loads_[word_][lane_] = r;
                group_max_ = std::max(group_max_, effective);
                if (++lane_ == 4) {
                    lane_ = 0;
                    out.cycles = group_max_ + kWordCombineCost + kWordAluCost;
                    group_max_ = 0;
                    phase_ = Phase::LastRoundStore;
                }
                break;
            }
            case Phase::LastRoundStore: {
                store_results_[word_] = m.store(tile_, PhysAddr{io_.out.raw + 4u * word_});
                store_issue_times_[word_] = local_clock_;
                out.cycles = kStoreIssueCost;
                phase_ = (++word_ == 4) ? Phase::Done : Phase::LastRoundLoads;
                break;
            }
            case Phase::Done:
                out.done = true;
                return out;
        }
        local_clock_ += out.cycles;
        out.done = phase_ == Phase::Done;
        return out;
    }

    bool done() const { return phase_ == Phase::Done; }
    const aes::DecryptTrace& trace() const { return trace_; }
    const aes::Block& plaintext() const { return trace_.plaintext; }
    TileId tile() const { return tile_; }

    /// Issue times of the four out-word stores, relative to program start.
    const std::array<uint64_t, 4>& store_issue_times() const { return store_issue_times_; }
    const std::array<std::array<MemResult, 4>, 4>& last_round_loads() const {
        return last_round_loads_;
    }
    const std::array<MemResult, 4>& store_results() const { return store_results_; }
    uint64_t local_cycles() const { return local_clock_; }

private:
    enum class Phase { InitialArk, MainRounds, LastRoundLoads, LastRoundStore, Done };

    TileId tile_;
    DecryptIo io_;
    AesTables tables_;
    aes::DecryptTrace trace_;
    Phase phase_ = Phase::InitialArk;
    size_t round_ = 0;
    size_t word_ = 0;
    size_t lane_ = 0;
    uint32_t group_max_ = 0;
    std::array<std::pair<uint64_t, uint32_t>, 4> seen_lines_{};  // Td4 line -> miss latency
    size_t n_seen_ = 0;
    uint64_t local_clock_ = 0;
    std::array<uint64_t, 4> store_issue_times_{};
    std::array<std::array<MemResult, 4>, 4> last_round_loads_{};
    std::array<MemResult, 4> store_results_{};
};

struct SimDecryptResult {
    aes::Block plaintext{};
    std::array<uint64_t, 4> store_issue_times{};
    /// Interval between the stores to out and out+4, i.e. the cost of the
    /// four Td4 lookups of output word 1 plus the fixed tail.
    uint32_t t26_31 = 0;
    uint64_t total_cycles = 0;
    std::array<std::array<MemResult, 4>, 4> last_round_loads{};
};

/// Run one decryption to completion with no concurrent observers.
inline SimDecryptResult aes_decrypt(SimMachine& m, TileId victim, const DecryptIo& io,
                                    const AesTables& tables) {
    DecryptProgram prog(victim, io, tables);
    while (!prog.done()) prog.step(m);
    SimDecryptResult res;
    res.plaintext = prog.plaintext();
    res.store_issue_times = prog.store_issue_times();
    res.t26_31 = static_cast<uint32_t>(res.store_issue_times[1] - res.store_issue_times[0]);
    res.total_cycles = prog.local_cycles();
    res.last_round_loads = prog.last_round_loads();
    return res;
}

/// Functionally correct forward cipher; support path for generating trial
/// ciphertexts, not a timing target, so it issues no simulated traffic.
inline aes::Block aes_encrypt(const aes::AesKeySchedule& ks, const aes::Block& plaintext) {
    return aes::encrypt_block(ks, plaintext);
}

}  // namespace nucasim
