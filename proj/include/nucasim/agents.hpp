#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "nucasim/machine.hpp"
#include "nucasim/types.hpp"
#include "nucasim/victims.hpp"

namespace nucasim {

enum class OpKind : uint8_t { Load, Store, Prefetchw, FlushL1, Idle };

struct OpRecord {
    OpKind kind = OpKind::Idle;
    PhysAddr addr;
    MemResult result;
};

enum class AgentStatus : uint8_t { Runnable, Blocked, Done };

/// A logical thread pinned to a tile. Each scheduling turn executes at most
/// one machine operation and reports how many cycles it consumed.
class Agent {
public:
    Agent(std::string name, TileId tile) : name_(std::move(name)), tile_(tile) {}
    virtual ~Agent() = default;

    struct StepResult {
        uint32_t cycles = 0;
        AgentStatus status = AgentStatus::Runnable;
        std::optional<OpRecord> op;
    };

    virtual StepResult step(SimMachine& m, uint64_t now) = 0;

    const std::string& name() const { return name_; }
    TileId tile() const { return tile_; }

private:
    std::string name_;
    TileId tile_;
};

struct TraceEntry {
    int agent = 0;
    uint64_t start = 0;
    OpRecord op;
};

/// Deterministic cooperative interleaving: the runnable agent with the
/// smallest local clock (ties by list position) runs next. Same machine
/// seed and agent list always produce the same trace.
class Scheduler {
public:
    struct Options {
        uint64_t max_cycles = std::numeric_limits<uint64_t>::max();
        bool record_trace = false;
        // Consecutive turns in which no agent makes progress before the run
        // is declared deadlocked.
        uint64_t deadlock_window = 100000;
    };

    Scheduler() : Scheduler(Options()) {}
    explicit Scheduler(Options opts) : opts_(opts) {}

    using Until = std::function<bool(const Scheduler&)>;

    uint64_t global_clock() const { return global_clock_; }
    /// Latest local clock across all agents, i.e. the scenario's elapsed time.
    uint64_t max_clock() const {
        uint64_t mx = 0;
        for (uint64_t c : clocks_) mx = std::max(mx, c);
        return mx;
    }
    const std::vector<TraceEntry>& trace() const { return trace_; }
    uint64_t turns(size_t agent_idx) const { return turns_[agent_idx]; }

    void run(SimMachine& m, const std::vector<Agent*>& agents, const Until& until = nullptr) {
        clocks_.assign(agents.size(), 0);
        status_.assign(agents.size(), AgentStatus::Runnable);
        turns_.assign(agents.size(), 0);
        global_clock_ = 0;
        uint64_t stall_turns = 0;
        while (true) {
            if (until && until(*this)) return;
            size_t pick = agents.size();
            for (size_t i = 0; i < agents.size(); i++) {
                if (status_[i] == AgentStatus::Done) continue;
                if (pick == agents.size() || clocks_[i] < clocks_[pick]) pick = i;
            }
            if (pick == agents.size()) return;  // all done
            if (clocks_[pick] > opts_.max_cycles) return;
            global_clock_ = clocks_[pick];
            Agent::StepResult r = agents[pick]->step(m, clocks_[pick]);
            turns_[pick]++;
            if (opts_.record_trace && r.op)
                trace_.push_back(TraceEntry{static_cast<int>(pick), clocks_[pick], *r.op});
            if (r.status == AgentStatus::Blocked && r.cycles == 0)
                r.cycles = m.config().lat_poll_iter;  // blocked agents re-poll
            clocks_[pick] += r.cycles;
            status_[pick] = r.status == AgentStatus::Done ? AgentStatus::Done : r.status;
            bool progressed = r.status != AgentStatus::Blocked || r.op.has_value();
            stall_turns = progressed ? 0 : stall_turns + 1;
            if (stall_turns > opts_.deadlock_window && all_blocked())
                throw ScenarioError("scheduler deadlock: no agent runnable");
        }
    }

private:
    bool all_blocked() const {
        bool any = false;
        for (auto s : status_) {
            if (s == AgentStatus::Runnable) return false;
            if (s == AgentStatus::Blocked) any = true;
        }
        return any;
    }

    Options opts_;
    std::vector<uint64_t> clocks_;
    std::vector<AgentStatus> status_;
    std::vector<uint64_t> turns_;
    std::vector<TraceEntry> trace_;
    uint64_t global_clock_ = 0;
};

/// Convenience wrapper matching the scenario-runner contract: interleave the
/// agents until the predicate fires (or all are done) and return the trace.
inline std::vector<TraceEntry> run_scenario(SimMachine& m, const std::vector<Agent*>& agents,
                                            const Scheduler::Until& until = nullptr,
                                            Scheduler::Options opts = {}) {
    opts.record_trace = true;
    Scheduler sched(opts);
    sched.run(m, agents, until);
    return sched.trace();
}

// ---- supporting agents of the attack ---------------------------------------

/// Bring Td0..Td3 into the victim-tile L1 (and nothing of Td4). Runs on the
/// victim's own tile, like the attacker's co-resident priming thread.
inline void prime_l1_tables(SimMachine& m, TileId primer_tile, const AesTables& tables) {
    const MachineConfig& cfg = m.config();
    uint64_t l1_bytes = static_cast<uint64_t>(cfg.l1_sets) * cfg.l1_ways * cfg.line_size;
    if (l1_bytes < 4096 + 2 * cfg.line_size)
        throw ConfigError("L1 too small to keep Td0-Td3 resident while the victim runs");
    for (PhysAddr line : tables.td03_lines(cfg)) m.load(primer_tile, line);
}

/// Load lines into the holder tile's LLC bank so later accesses from other
/// tiles are remote hits forwarded from this one bank.
inline void hold_llc(SimMachine& m, TileId holder_tile, const std::vector<PhysAddr>& lines) {
    for (PhysAddr a : lines) m.load(holder_tile, a);
}

/// Knock the target lines out of every other L1 via ownership-pulling
/// probes from the attacker tile, then write the clean copies back so LLC
/// residency (and the forwarding tile) is preserved. Returns the number of
/// lines that were not LLC-resident to begin with; those are invalidated
/// outright so a later access faults to memory.
inline int evict_victim_l1(SimMachine& m, TileId attacker_tile,
                           const std::vector<PhysAddr>& lines) {
    int unheld = 0;
    for (PhysAddr a : lines) {
        if (!m.llc_holds(a)) {
            unheld++;
            m.prefetchw_probe(attacker_tile, a);
            m.flush_l1(attacker_tile, a);
            m.invalidate_line(a);
            continue;
        }
        m.prefetchw_probe(attacker_tile, a);
        m.flush_l1(attacker_tile, a);
    }
    return unheld;
}

// ---- timer ------------------------------------------------------------------

enum class TimerMethod : uint8_t { SharedPoll, Prefetchw };

/// One timed observation of the victim's out-buffer writes.
struct TimerReading {
    uint32_t t26_31 = 0;     // cycles between the two observed modifications
    uint32_t poll_count = 0; // loop iterations between them
    TimerMethod method = TimerMethod::SharedPoll;
    bool timed_out = false;
};

/// Polls the out buffer from its own tile and measures the interval between
/// the modification of `watch_a` and of `watch_b` in counting-loop quanta.
///
/// Shared-poll reads the line and compares per-word versions; the prefetchw
/// variant has no read access and instead classifies each probe by latency:
/// above the high threshold means a remote write happened since the last
/// probe. Readings accumulate; each completed (a,b) pair appends one.
class TimerAgent : public Agent {
public:
    struct Config {
        PhysAddr watch_a;  // first monitored word (out)
        PhysAddr watch_b;  // second monitored word (out+4)
        TimerMethod method = TimerMethod::SharedPoll;
        uint32_t prefetchw_low = 100;   // below: line unmodified
        uint32_t prefetchw_high = 150;  // above: remote write detected
        uint32_t timeout_polls = 100000;
    };

    TimerAgent(TileId tile, Config cfg) : Agent("timer", tile), cfg_(cfg) {}

    StepResult step(SimMachine& m, uint64_t now) override {
        return cfg_.method == TimerMethod::SharedPoll ? poll_step(m, now) : probe_step(m, now);
    }

    const std::vector<TimerReading>& readings() const { return readings_; }
    void clear() { readings_.clear(); }

private:
    StepResult poll_step(SimMachine& m, uint64_t) {
        StepResult s;
        MemResult r = m.load(tile(), cfg_.watch_a);
        s.op = OpRecord{OpKind::Load, cfg_.watch_a, r};
        uint32_t va = m.word_version(cfg_.watch_a);
        uint32_t vb = m.word_version(cfg_.watch_b);
        const uint32_t quantum = m.config().lat_poll_iter;
        // Loop iteration plus any stall beyond the expected L1 hit.
        s.cycles = quantum + (r.latency > m.config().lat_l1_hit
                                  ? r.latency - m.config().lat_l1_hit
                                  : 0);
        if (first_) {
            first_ = false;
            last_va_ = va;
            last_vb_ = vb;
            return s;
        }
        if (!armed_) {
            if (va != last_va_) {
                last_va_ = va;
                last_vb_ = vb;  // baseline for b as of the a-observation
                armed_ = true;
                polls_since_a_ = 0;
                idle_polls_ = 0;
            } else if (++idle_polls_ > cfg_.timeout_polls) {
                emit_timeout();
            }
            return s;
        }
        polls_since_a_++;
        if (vb != last_vb_) {
            TimerReading rd;
            rd.method = TimerMethod::SharedPoll;
            rd.poll_count = polls_since_a_;
            rd.t26_31 = polls_since_a_ * quantum;
            readings_.push_back(rd);
            armed_ = false;
            last_va_ = va;
            last_vb_ = vb;
            idle_polls_ = 0;
        } else if (polls_since_a_ > cfg_.timeout_polls) {
            emit_timeout();
        }
        return s;
    }

    StepResult probe_step(SimMachine& m, uint64_t now) {
        StepResult s;
        MemResult r = m.prefetchw_probe(tile(), cfg_.watch_a);
        s.op = OpRecord{OpKind::Prefetchw, cfg_.watch_a, r};
        s.cycles = m.config().lat_poll_iter + r.latency;
        bool modified = r.latency > cfg_.prefetchw_high;
        if (modified) {
            if (!armed_) {
                armed_ = true;
                arm_time_ = now;
                polls_since_a_ = 0;
            } else {
                TimerReading rd;
                rd.method = TimerMethod::Prefetchw;
                rd.poll_count = polls_since_a_;
                rd.t26_31 = static_cast<uint32_t>(now - arm_time_);
                readings_.push_back(rd);
                armed_ = false;
            }
            idle_polls_ = 0;
        } else if (++idle_polls_ > cfg_.timeout_polls) {
            emit_timeout();
        }
        if (armed_) polls_since_a_++;
        return s;
    }

    void emit_timeout() {
        TimerReading rd;
        rd.method = cfg_.method;
        rd.timed_out = true;
        readings_.push_back(rd);
        armed_ = false;
        idle_polls_ = 0;
    }

    Config cfg_;
    bool first_ = true;
    bool armed_ = false;
    uint32_t last_va_ = 0;
    uint32_t last_vb_ = 0;
    uint32_t polls_since_a_ = 0;
    uint32_t idle_polls_ = 0;
    uint64_t arm_time_ = 0;
    std::vector<TimerReading> readings_;
};

/// Adapter running one decryption as a scheduled agent.
class VictimDecryptAgent : public Agent {
public:
    VictimDecryptAgent(TileId tile, const DecryptIo& io, const AesTables& tables)
        : Agent("victim", tile), prog_(tile, io, tables) {}

    StepResult step(SimMachine& m, uint64_t) override {
        StepResult s;
        if (prog_.done()) {
            s.status = AgentStatus::Done;
            return s;
        }
        DecryptProgram::Step st = prog_.step(m);
        s.cycles = st.cycles;
        s.status = st.done ? AgentStatus::Done : AgentStatus::Runnable;
        return s;
    }

    const DecryptProgram& program() const { return prog_; }

private:
    DecryptProgram prog_;
};

/// Issues a fixed list of loads, one per turn. Used for helper threads and
/// synthetic traffic in scheduler-level tests.
class LoadListAgent : public Agent {
public:
    LoadListAgent(std::string name, TileId tile, std::vector<PhysAddr> addrs)
        : Agent(std::move(name), tile), addrs_(std::move(addrs)) {}

    StepResult step(SimMachine& m, uint64_t) override {
        StepResult s;
        if (next_ >= addrs_.size()) {
            s.status = AgentStatus::Done;
            return s;
        }
        MemResult r = m.load(tile(), addrs_[next_++]);
        s.op = OpRecord{OpKind::Load, addrs_[next_ - 1], r};
        s.cycles = r.latency;
        s.status = next_ >= addrs_.size() ? AgentStatus::Done : AgentStatus::Runnable;
        return s;
    }

private:
    std::vector<PhysAddr> addrs_;
    size_t next_ = 0;
};

/// Run one decryption with a timer watching out/out+4 and return the timer's
/// reading for it (timeout marker if the victim never wrote).
inline TimerReading timer_watch(SimMachine& m, TileId timer_tile, TimerAgent::Config tcfg,
                                TileId victim_tile, const DecryptIo& io, const AesTables& tables) {
    VictimDecryptAgent victim(victim_tile, io, tables);
    TimerAgent timer(timer_tile, tcfg);
    Scheduler sched;
    // Let the timer drain its polls for a few quanta after the victim ends.
    sched.run(m, {&victim, &timer}, [&](const Scheduler& s) {
        return !timer.readings().empty() ||
               (victim.program().done() && s.global_clock() > victim.program().local_cycles() +
                                               16ull * m.config().lat_poll_iter);
    });
    if (timer.readings().empty()) return TimerReading{0, 0, tcfg.method, true};
    return timer.readings().front();
}

}  // namespace nucasim
