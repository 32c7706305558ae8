#include <gtest/gtest.h>

#include <random>

#include "nucasim/covert.hpp"
#include "nucasim/experiment.hpp"
#include "test_util.hpp"

using namespace nucasim;
using testutil::quiet_config;

namespace {

struct ChannelBench {
    MachineConfig cfg;
    SimMachine m;
    RoleTiles roles;
    ChannelConfig ch;

    explicit ChannelBench(double noise = 0.0, uint64_t seed = 1, int near_hop = 1,
                          int far_hop = 13)
        : cfg([&] {
              MachineConfig c = quiet_config();
              c.noise_stddev = noise;
              c.rng_seed = seed;
              return c;
          }()),
          m(cfg) {
        ch.addr_near = testutil::line_with_cha_hop(cfg, roles.victim, near_hop, 0x4c0000);
        ch.addr_far =
            testutil::line_with_cha_hop(cfg, roles.victim, far_hop, ch.addr_near.raw + 64);
        hold_llc(m, roles.holder, {ch.addr_near, ch.addr_far});
        int h_fwd = hop_distance(roles.holder, roles.victim);
        auto lat = [&](int h) {
            return cfg.lat_l1_hit + cfg.lat_cha_lookup + cfg.lat_llc_bank +
                   static_cast<uint32_t>(2 * h + 2 * h_fwd) * (cfg.lat_per_hop + cfg.lat_router);
        };
        ch.threshold = (lat(near_hop) + lat(far_hop)) / 2.0;
    }

    ChannelRun send(const std::vector<uint8_t>& payload) {
        return run_channel(m, roles.victim, roles.timer, ch, payload);
    }
};

std::vector<uint8_t> random_payload(size_t n, uint64_t seed) {
    std::vector<uint8_t> p(n);
    std::mt19937_64 rng(seed);
    for (auto& b : p) b = static_cast<uint8_t>(rng());
    return p;
}

}  // namespace

TEST(Covert, NoiseFreeChannelIsExact) {
    ChannelBench b;
    std::vector<uint8_t> payload = random_payload(1250, 3);  // 10^4 bits
    ChannelRun run = b.send(payload);
    EXPECT_EQ(run.stats.bit_errors, 0u);
    EXPECT_EQ(run.stats.error_rate, 0.0);
    EXPECT_EQ(bits_to_bytes_msb(run.decoded_bits), payload);
}

TEST(Covert, OneBytePayloadRoundTrips) {
    ChannelBench b;
    std::vector<uint8_t> payload = {0xA5};
    ChannelRun run = b.send(payload);
    EXPECT_EQ(run.stats.bits_sent, 8u);
    EXPECT_EQ(bits_to_bytes_msb(run.decoded_bits), payload);
}

TEST(Covert, BandwidthAccountingIsExact) {
    ChannelBench b(3.0);
    std::vector<uint8_t> payload = random_payload(500, 4);
    ChannelRun run = b.send(payload);
    // bandwidth * sim_cycles / clock_hz == bits_sent, by construction.
    double bits = run.stats.bandwidth_bps * static_cast<double>(run.stats.sim_cycles) /
                  b.cfg.clock_hz;
    EXPECT_NEAR(bits, static_cast<double>(run.stats.bits_sent), 1e-6);
}

// Cycles per bit decompose into reset + samples-per-bit accesses + decode;
// the sender's busy time predicts the end-to-end rate within one percent.
TEST(Covert, CyclesPerBitMatchTheTraceComponents) {
    ChannelBench b(3.0);
    std::vector<uint8_t> payload = random_payload(2000, 5);
    ChannelRun run = b.send(payload);
    double measured = static_cast<double>(run.stats.sim_cycles) /
                      static_cast<double>(run.stats.bits_sent);
    double predicted = static_cast<double>(run.sender_busy_cycles) /
                       static_cast<double>(run.stats.bits_sent);
    EXPECT_NEAR(measured, predicted, 0.01 * measured);
}

TEST(Covert, AdversarialThresholdShowsOneSidedErrors) {
    // Threshold planted inside the far band: far sends decode as 1.
    ChannelBench b;
    int h_fwd = hop_distance(b.roles.holder, b.roles.victim);
    uint32_t far_lat = b.cfg.lat_l1_hit + b.cfg.lat_cha_lookup + b.cfg.lat_llc_bank +
                       static_cast<uint32_t>(2 * 13 + 2 * h_fwd) *
                           (b.cfg.lat_per_hop + b.cfg.lat_router);
    b.ch.threshold = far_lat + 1.0;
    std::vector<uint8_t> payload = random_payload(200, 6);
    ChannelRun run = b.send(payload);
    std::vector<uint8_t> sent = bytes_to_bits_msb(payload);
    int zero_to_one = 0, one_to_zero = 0;
    for (size_t i = 0; i < sent.size(); i++) {
        if (sent[i] == 0 && run.decoded_bits[i] == 1) zero_to_one++;
        if (sent[i] == 1 && run.decoded_bits[i] == 0) one_to_zero++;
    }
    EXPECT_GT(zero_to_one, 0);
    EXPECT_EQ(one_to_zero, 0);
}

TEST(Covert, ErrorRateMonotoneInNoise) {
    // A deliberately tight pair (two hops apart) so noise actually bites.
    std::vector<double> rates;
    for (double sigma : {0.0, 4.0, 8.0}) {
        double errs = 0, bits = 0;
        for (uint64_t seed = 1; seed <= 5; seed++) {
            ChannelBench b(sigma, seed, 5, 7);
            ChannelRun run = b.send(random_payload(250, seed));
            errs += static_cast<double>(run.stats.bit_errors);
            bits += static_cast<double>(run.stats.bits_sent);
        }
        rates.push_back(errs / bits);
    }
    EXPECT_EQ(rates[0], 0.0);
    EXPECT_LE(rates[0], rates[1]);
    EXPECT_LE(rates[1], rates[2]);
    EXPECT_GT(rates[2], 0.0);
}

TEST(Covert, ExperimentRunnerProducesConsistentStats) {
    MachineConfig cfg;  // defaults, sigma = 3
    CovertParams p;
    p.payload_bytes = 1250;  // 10^4 bits
    CovertResult res = run_covert(cfg, p, 11);
    EXPECT_EQ(res.stats.bits_sent, 10000u);
    EXPECT_LE(res.stats.error_rate, 0.0002);
    EXPECT_NEAR(res.measured_cycles_per_bit, res.predicted_cycles_per_bit,
                0.01 * res.measured_cycles_per_bit);
    EXPECT_GT(res.stats.bandwidth_bps, 0.0);
}
