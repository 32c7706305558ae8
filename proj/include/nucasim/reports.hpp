#pragma once

#include <cstdio>
#include <string>

#include <json.hpp>

#include "nucasim/defense.hpp"
#include "nucasim/experiment.hpp"
#include "nucasim/hex.hpp"

namespace nucasim {

// Plot-ready CSV and JSON renderings of experiment results. Data files carry
// no timestamps so reruns with the same seed are byte-identical.

inline std::string to_hex_u64(uint64_t v) {
    char buf[24];
    std::snprintf(buf, sizeof(buf), "%llx", static_cast<unsigned long long>(v));
    return buf;
}

inline std::string to_hex_u32(uint32_t v) {
    char buf[12];
    std::snprintf(buf, sizeof(buf), "%08x", v);
    return buf;
}

inline std::string toy_distribution_csv(const ToyResult& r) {
    std::string out = "bit,latency_cycles\n";
    char buf[64];
    for (uint32_t l : r.near_latencies) {
        std::snprintf(buf, sizeof(buf), "1,%u\n", l);
        out += buf;
    }
    for (uint32_t l : r.far_latencies) {
        std::snprintf(buf, sizeof(buf), "0,%u\n", l);
        out += buf;
    }
    return out;
}

inline nlohmann::json toy_result_json(const ToyResult& r) {
    return nlohmann::json{{"accuracy", r.accuracy},
                          {"mean_near_cycles", r.mean_near},
                          {"mean_far_cycles", r.mean_far},
                          {"threshold_cycles", r.threshold},
                          {"addr_near", "0x" + to_hex_u64(r.addr_near.raw)},
                          {"addr_far", "0x" + to_hex_u64(r.addr_far.raw)}};
}

inline std::string accuracy_curve_csv(const std::vector<std::pair<int, double>>& curve) {
    std::string out = "trials,fraction_keys_correct\n";
    char buf[64];
    for (auto [t, f] : curve) {
        std::snprintf(buf, sizeof(buf), "%d,%.6f\n", t, f);
        out += buf;
    }
    return out;
}

inline nlohmann::json aes_attack_json(const AesAttackResult& r) {
    nlohmann::json keys = nlohmann::json::array();
    for (const KeyRunResult& k : r.keys) {
        keys.push_back({{"key", to_hex(k.key)},
                        {"true_word", to_hex_u32(k.true_word)},
                        {"recovered_word", to_hex_u32(k.recovered_word)},
                        {"correct", k.correct},
                        {"determined", k.determined},
                        {"trials_low", k.trials_low},
                        {"margins", k.margins}});
    }
    nlohmann::json j{{"td4_base", "0x" + to_hex_u64(r.td4_base)},
                     {"out_addr", "0x" + to_hex_u64(r.out_addr)},
                     {"td4_cha_hops", r.td4_hops},
                     {"low_set_size", r.low_set.size()},
                     {"model_stumps", r.model.stumps.size()},
                     {"keys", keys}};
    if (r.verdicts.trials > 0)
        j["verdicts"] = {{"trials", r.verdicts.trials},
                         {"truth_low", r.verdicts.truth_low},
                         {"accuracy_vote", r.verdicts.accuracy_vote},
                         {"accuracy_single", r.verdicts.accuracy_single}};
    return j;
}

inline nlohmann::json covert_stats_json(const ChannelStats& s) {
    return nlohmann::json{{"bits_sent", s.bits_sent},
                          {"bit_errors", s.bit_errors},
                          {"sim_cycles", s.sim_cycles},
                          {"bandwidth_bps", s.bandwidth_bps},
                          {"error_rate", s.error_rate}};
}

inline std::string covert_sweep_csv(const std::vector<std::pair<size_t, ChannelStats>>& sweep) {
    std::string out = "payload_bytes,bandwidth_bps,error_rate\n";
    char buf[96];
    for (const auto& [bytes, st] : sweep) {
        std::snprintf(buf, sizeof(buf), "%zu,%.2f,%.8f\n", bytes, st.bandwidth_bps,
                      st.error_rate);
        out += buf;
    }
    return out;
}

inline std::string noc_sweep_csv(const std::vector<NocResult>& curve) {
    std::string out = "injection_rate,mean_packet_latency,saturated\n";
    char buf[96];
    for (const NocResult& r : curve) {
        std::snprintf(buf, sizeof(buf), "%.4f,%.4f,%d\n", r.rate, r.mean_latency,
                      r.saturated ? 1 : 0);
        out += buf;
    }
    return out;
}

inline nlohmann::json defense_eval_json(const DefenseEvalResult& r) {
    return nlohmann::json{{"uniform_floor_cycles", r.floor},
                          {"ks_near_far_defended", r.ks_defended},
                          {"toy_accuracy_defended", r.toy_accuracy},
                          {"keys_total", r.keys_total},
                          {"keys_recovered_defended", r.keys_recovered},
                          {"min_chi2_uniform_p", r.min_chi2_p},
                          {"mean_llc_hit_undefended", r.mean_llc_hit_undefended},
                          {"mean_llc_hit_defended", r.mean_llc_hit_defended}};
}

}  // namespace nucasim
