#pragma once

#include <algorithm>
#include <cstdint>
#include <vector>

#include "nucasim/agents.hpp"
#include "nucasim/machine.hpp"
#include "nucasim/types.hpp"

namespace nucasim {

/// Cooperative covert channel over the CHA distance difference: bit 1 is a
/// burst of near-address loads, bit 0 far-address loads, decoded by
/// thresholding the observed latencies.
struct ChannelConfig {
    PhysAddr addr_near;
    PhysAddr addr_far;
    double threshold = 0.0;   // strictly between the two latency bands
    int samples_per_bit = 3;
    uint32_t decode_cost = 6; // receiver compare/record per bit
};

struct ChannelStats {
    uint64_t bits_sent = 0;
    uint64_t bit_errors = 0;
    uint64_t sim_cycles = 0;
    double bandwidth_bps = 0.0;  // bits_sent * clock_hz / sim_cycles
    double error_rate = 0.0;
};

namespace detail {

struct CovertFrame {
    std::vector<uint32_t> latencies;
    bool ready = false;
};

/// Per sample: drop the target line from this L1 (the per-bit state reset),
/// reload it, and after samples_per_bit loads hand the latencies over.
class CovertSender : public Agent {
public:
    CovertSender(TileId tile, const ChannelConfig& cfg, std::vector<uint8_t> bits,
                 CovertFrame* frame)
        : Agent("sender", tile), cfg_(cfg), bits_(std::move(bits)), frame_(frame) {}

    StepResult step(SimMachine& m, uint64_t) override {
        StepResult s;
        if (bit_ >= bits_.size()) {
            s.status = AgentStatus::Done;
            return s;
        }
        PhysAddr target = bits_[bit_] ? cfg_.addr_near : cfg_.addr_far;
        if (!flushed_) {
            m.flush_l1(tile(), target);
            s.op = OpRecord{OpKind::FlushL1, target, MemResult{}};
            s.cycles = m.config().lat_l1_hit;
            flushed_ = true;
        } else {
            MemResult r = m.load(tile(), target);
            s.op = OpRecord{OpKind::Load, target, r};
            s.cycles = r.latency;
            flushed_ = false;
            pending_.push_back(r.latency);
            if (static_cast<int>(pending_.size()) == cfg_.samples_per_bit) {
                // The receiver decodes concurrently and is always faster than
                // one bit's worth of sends, so the slot is free.
                if (frame_->ready)
                    throw ScenarioError("covert receiver fell behind the sender");
                frame_->latencies = std::move(pending_);
                pending_.clear();
                frame_->ready = true;
                bit_++;
            }
        }
        busy_cycles_ += s.cycles;
        return s;
    }

    uint64_t busy_cycles() const { return busy_cycles_; }

private:
    ChannelConfig cfg_;
    std::vector<uint8_t> bits_;
    CovertFrame* frame_;
    size_t bit_ = 0;
    bool flushed_ = false;
    uint64_t busy_cycles_ = 0;
    std::vector<uint32_t> pending_;
};

/// Reads the sender's timestamps directly (strictly cooperating processes)
/// and decodes by comparing the median sample against the threshold.
class CovertReceiver : public Agent {
public:
    CovertReceiver(TileId tile, const ChannelConfig& cfg, size_t expect, CovertFrame* frame)
        : Agent("receiver", tile), cfg_(cfg), expect_(expect), frame_(frame) {}

    StepResult step(SimMachine&, uint64_t) override {
        StepResult s;
        if (decoded_.size() >= expect_) {
            s.status = AgentStatus::Done;
            return s;
        }
        if (!frame_->ready) {
            s.status = AgentStatus::Blocked;
            return s;
        }
        std::vector<uint32_t> lat = std::move(frame_->latencies);
        frame_->ready = false;
        std::sort(lat.begin(), lat.end());
        double median = lat.size() % 2 ? lat[lat.size() / 2]
                                       : (lat[lat.size() / 2 - 1] + lat[lat.size() / 2]) / 2.0;
        decoded_.push_back(median < cfg_.threshold ? 1 : 0);
        s.cycles = cfg_.decode_cost;
        s.status = decoded_.size() >= expect_ ? AgentStatus::Done : AgentStatus::Runnable;
        return s;
    }

    const std::vector<uint8_t>& decoded() const { return decoded_; }

private:
    ChannelConfig cfg_;
    size_t expect_;
    CovertFrame* frame_;
    std::vector<uint8_t> decoded_;
};

}  // namespace detail

inline std::vector<uint8_t> bytes_to_bits_msb(const std::vector<uint8_t>& payload) {
    std::vector<uint8_t> bits;
    bits.reserve(payload.size() * 8);
    for (uint8_t byte : payload)
        for (int b = 7; b >= 0; b--) bits.push_back((byte >> b) & 1);
    return bits;
}

inline std::vector<uint8_t> bits_to_bytes_msb(const std::vector<uint8_t>& bits) {
    std::vector<uint8_t> payload(bits.size() / 8, 0);
    for (size_t i = 0; i < payload.size() * 8; i++)
        payload[i / 8] = static_cast<uint8_t>((payload[i / 8] << 1) | (bits[i] & 1));
    return payload;
}

struct ChannelRun {
    ChannelStats stats;
    std::vector<uint8_t> decoded_bits;
    uint64_t sender_busy_cycles = 0;  // reset + access work, excluding sync slack
};

/// Frame the payload MSB-first and push it through the channel; both lines
/// must already be resident in a remote LLC bank (hold_llc).
inline ChannelRun run_channel(SimMachine& m, TileId sender_tile, TileId receiver_tile,
                              const ChannelConfig& cfg, const std::vector<uint8_t>& payload) {
    std::vector<uint8_t> bits = bytes_to_bits_msb(payload);
    detail::CovertFrame frame;
    detail::CovertSender sender(sender_tile, cfg, bits, &frame);
    detail::CovertReceiver receiver(receiver_tile, cfg, bits.size(), &frame);
    Scheduler sched;
    sched.run(m, {&sender, &receiver});

    ChannelRun run;
    run.decoded_bits = receiver.decoded();
    run.sender_busy_cycles = sender.busy_cycles();
    run.stats.bits_sent = bits.size();
    for (size_t i = 0; i < bits.size(); i++)
        if (run.decoded_bits[i] != bits[i]) run.stats.bit_errors++;
    run.stats.sim_cycles = sched.max_clock();
    run.stats.error_rate = bits.empty() ? 0.0
                                        : static_cast<double>(run.stats.bit_errors) /
                                              static_cast<double>(run.stats.bits_sent);
    run.stats.bandwidth_bps = run.stats.sim_cycles == 0
                                  ? 0.0
                                  : static_cast<double>(run.stats.bits_sent) *
                                        m.config().clock_hz /
                                        static_cast<double>(run.stats.sim_cycles);
    return run;
}

}  // namespace nucasim
