#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include <json.hpp>

namespace nucasim {

enum class Label : uint8_t { LOW, HIGH };

/// One timed observation with its class. Labels are oracle-derived during
/// training, where the attacker controls the keys and can compute which
/// table lines each decryption touched.
struct LabeledSample {
    double latency = 0.0;
    Label label = Label::LOW;
};

/// Decision stump over a scalar latency: votes HIGH when
/// polarity * sign(latency - threshold) is positive.
struct Stump {
    double threshold = 0.0;
    int polarity = 1;  // +1 or -1
    double weight = 0.0;
};

struct StumpEnsemble {
    std::vector<Stump> stumps;
    int rounds = 0;

    double score(double latency) const {
        double s = 0.0;
        for (const Stump& st : stumps) {
            int sgn = latency >= st.threshold ? 1 : -1;
            s += st.weight * st.polarity * sgn;
        }
        return s;
    }

    /// Sign rule; an exact tie goes to HIGH so downstream voting discards
    /// the trial rather than casting bogus key votes.
    Label predict(double latency) const {
        if (stumps.empty()) throw std::logic_error("predict on untrained ensemble");
        return score(latency) >= 0.0 ? Label::HIGH : Label::LOW;
    }
};

/// Standard AdaBoost over decision stumps. Candidate thresholds are the
/// midpoints of consecutive distinct training latencies (plus a sentinel
/// below the minimum); each round picks the stump minimizing the weighted
/// error, with weight 0.5*ln((1-e)/e), and stops early on e >= 0.5 or a
/// perfect stump.
inline StumpEnsemble train_adaboost(const std::vector<LabeledSample>& samples, int rounds) {
    if (rounds < 1) throw std::invalid_argument("train_adaboost: rounds must be >= 1");
    size_t n_low = 0, n_high = 0;
    for (const auto& s : samples) (s.label == Label::LOW ? n_low : n_high)++;
    if (n_low == 0 || n_high == 0)
        throw std::invalid_argument("train_adaboost: both labels must be present");

    const size_t n = samples.size();
    std::vector<size_t> order(n);
    for (size_t i = 0; i < n; i++) order[i] = i;
    std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
        return samples[a].latency < samples[b].latency;
    });

    // Candidate thresholds: below everything, then between distinct values.
    std::vector<double> thresholds;
    thresholds.push_back(samples[order[0]].latency - 1.0);
    for (size_t i = 1; i < n; i++) {
        double a = samples[order[i - 1]].latency, b = samples[order[i]].latency;
        if (a != b) thresholds.push_back((a + b) / 2.0);
    }

    std::vector<double> w(n, 1.0 / static_cast<double>(n));
    StumpEnsemble model;
    constexpr double kEpsClamp = 1e-10;

    for (int round = 0; round < rounds; round++) {
        // err+ at threshold t: weight of HIGH samples below t plus weight of
        // LOW samples at/above t. One sweep over the sorted order per round.
        double w_low_total = 0.0;
        for (size_t i = 0; i < n; i++)
            if (samples[i].label == Label::LOW) w_low_total += w[i];

        double best_err = 2.0, best_thr = thresholds[0];
        int best_pol = 1;
        size_t pos = 0;
        double high_below = 0.0, low_below = 0.0;
        for (double t : thresholds) {
            while (pos < n && samples[order[pos]].latency < t) {
                if (samples[order[pos]].label == Label::HIGH) high_below += w[order[pos]];
                else low_below += w[order[pos]];
                pos++;
            }
            double err_plus = high_below + (w_low_total - low_below);
            for (int pol : {1, -1}) {
                double err = pol == 1 ? err_plus : 1.0 - err_plus;
                if (err < best_err - 1e-15) {
                    best_err = err;
                    best_thr = t;
                    best_pol = pol;
                }
            }
        }

        if (best_err >= 0.5) break;  // no stump beats chance on these weights
        double eps = std::clamp(best_err, kEpsClamp, 1.0 - kEpsClamp);
        double alpha = 0.5 * std::log((1.0 - eps) / eps);
        model.stumps.push_back(Stump{best_thr, best_pol, alpha});
        model.rounds++;
        if (best_err <= 0.0) break;  // perfect stump, done

        double sum = 0.0;
        for (size_t i = 0; i < n; i++) {
            int sgn = samples[i].latency >= best_thr ? 1 : -1;
            int pred = best_pol * sgn;  // +1 HIGH, -1 LOW
            int truth = samples[i].label == Label::HIGH ? 1 : -1;
            w[i] *= std::exp(-alpha * pred * truth);
            sum += w[i];
        }
        for (double& wi : w) wi /= sum;
    }

    if (model.stumps.empty())
        throw std::runtime_error("train_adaboost: no stump beats chance on this data");
    return model;
}

/// Majority vote over per-sample predictions; an even split goes to HIGH.
inline Label vote(const StumpEnsemble& model, const std::vector<double>& latencies) {
    if (latencies.empty()) throw std::invalid_argument("vote: empty sample list");
    size_t low = 0, high = 0;
    for (double l : latencies) (model.predict(l) == Label::LOW ? low : high)++;
    return low > high ? Label::LOW : Label::HIGH;
}

inline void to_json(nlohmann::json& j, const Stump& s) {
    j = nlohmann::json{{"threshold", s.threshold}, {"polarity", s.polarity}, {"weight", s.weight}};
}
inline void from_json(const nlohmann::json& j, Stump& s) {
    j.at("threshold").get_to(s.threshold);
    j.at("polarity").get_to(s.polarity);
    j.at("weight").get_to(s.weight);
}
inline void to_json(nlohmann::json& j, const StumpEnsemble& m) {
    j = nlohmann::json{{"stumps", m.stumps}, {"rounds", m.rounds}};
}
inline void from_json(const nlohmann::json& j, StumpEnsemble& m) {
    j.at("stumps").get_to(m.stumps);
    j.at("rounds").get_to(m.rounds);
}

}  // namespace nucasim
