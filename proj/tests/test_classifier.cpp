#include <gtest/gtest.h>

#include <random>

#include "nucasim/classifier.hpp"

using namespace nucasim;

namespace {

std::vector<LabeledSample> band_data(std::mt19937_64& rng, double low_mean, double high_mean,
                                     double sigma, int n_per_class) {
    std::normal_distribution<double> noise(0.0, sigma);
    std::vector<LabeledSample> out;
    for (int i = 0; i < n_per_class; i++) {
        out.push_back({low_mean + (sigma > 0 ? noise(rng) : 0.0), Label::LOW});
        out.push_back({high_mean + (sigma > 0 ? noise(rng) : 0.0), Label::HIGH});
    }
    return out;
}

double training_error(const StumpEnsemble& model, const std::vector<LabeledSample>& data) {
    int wrong = 0;
    for (const auto& s : data)
        if (model.predict(s.latency) != s.label) wrong++;
    return static_cast<double>(wrong) / static_cast<double>(data.size());
}

// Exhaustive best single stump, the oracle the ensemble has to beat.
double best_single_stump_error(const std::vector<LabeledSample>& data) {
    double best = 1.0;
    for (const auto& cand : data) {
        for (double offset : {-0.5, 0.5}) {
            double thr = cand.latency + offset;
            for (int pol : {1, -1}) {
                int wrong = 0;
                for (const auto& s : data) {
                    int sgn = s.latency >= thr ? 1 : -1;
                    Label pred = pol * sgn > 0 ? Label::HIGH : Label::LOW;
                    if (pred != s.label) wrong++;
                }
                best = std::min(best, static_cast<double>(wrong) / data.size());
            }
        }
    }
    return best;
}

}  // namespace

TEST(AdaBoost, SeparableBandsNeedOneRound) {
    std::mt19937_64 rng(41);
    std::vector<LabeledSample> data;
    std::uniform_real_distribution<double> low(40.0, 70.0), high(90.0, 130.0);
    for (int i = 0; i < 500; i++) {
        data.push_back({low(rng), Label::LOW});
        data.push_back({high(rng), Label::HIGH});
    }
    StumpEnsemble model = train_adaboost(data, 1);
    EXPECT_EQ(model.stumps.size(), 1u);
    EXPECT_DOUBLE_EQ(training_error(model, data), 0.0);
    EXPECT_GT(model.stumps[0].threshold, 70.0);
    EXPECT_LT(model.stumps[0].threshold, 90.0);
}

// The threshold rule "LOW iff latency < theta" is a one-stump ensemble.
TEST(AdaBoost, SingleStumpIsTheThresholdRule) {
    StumpEnsemble rule;
    rule.stumps.push_back(Stump{100.0, 1, 1.0});
    rule.rounds = 1;
    EXPECT_EQ(rule.predict(99.0), Label::LOW);
    EXPECT_EQ(rule.predict(100.0), Label::HIGH);  // at-or-above the threshold
    EXPECT_EQ(rule.predict(350.0), Label::HIGH);
}

TEST(AdaBoost, ScoreTieGoesHigh) {
    StumpEnsemble model;
    model.stumps.push_back(Stump{50.0, 1, 1.0});
    model.stumps.push_back(Stump{50.0, -1, 1.0});  // cancels exactly
    model.rounds = 2;
    EXPECT_EQ(model.predict(10.0), Label::HIGH);
    EXPECT_EQ(model.predict(90.0), Label::HIGH);
}

// Alternating bands cannot be matched by any single threshold; the boosted
// ensemble must beat the exhaustive best stump on training error.
TEST(AdaBoost, BeatsBestSingleStumpOnAlternatingBands) {
    std::vector<LabeledSample> data;
    for (int i = 0; i < 50; i++) {
        data.push_back({10.0, Label::LOW});
        data.push_back({20.0, Label::HIGH});
        data.push_back({30.0, Label::LOW});
        data.push_back({40.0, Label::HIGH});
    }
    double stump_err = best_single_stump_error(data);
    EXPECT_NEAR(stump_err, 0.25, 1e-9);
    StumpEnsemble model = train_adaboost(data, 12);
    EXPECT_GE(model.stumps.size(), 3u);
    EXPECT_LT(training_error(model, data), stump_err);
}

TEST(AdaBoost, TrainingErrorNonIncreasingPerRound) {
    std::mt19937_64 rng(42);
    std::vector<LabeledSample> data = band_data(rng, 60.0, 90.0, 12.0, 2000);
    StumpEnsemble model = train_adaboost(data, 30);
    double prev = 1.0;
    for (size_t k = 1; k <= model.stumps.size(); k++) {
        StumpEnsemble prefix;
        prefix.stumps.assign(model.stumps.begin(), model.stumps.begin() + static_cast<long>(k));
        prefix.rounds = static_cast<int>(k);
        double err = training_error(prefix, data);
        EXPECT_LE(err, prev + 1e-12);
        prev = err;
    }
}

// Shifting every latency by a constant shifts the stumps and nothing else.
TEST(AdaBoost, PredictionIsShiftConsistent) {
    std::mt19937_64 rng(43);
    std::vector<LabeledSample> data = band_data(rng, 60.0, 95.0, 5.0, 500);
    for (auto& s : data) s.latency = std::round(s.latency);
    std::vector<LabeledSample> shifted = data;
    const double c = 1000.0;
    for (auto& s : shifted) s.latency += c;

    StumpEnsemble a = train_adaboost(data, 20);
    StumpEnsemble b = train_adaboost(shifted, 20);
    ASSERT_EQ(a.stumps.size(), b.stumps.size());
    for (size_t i = 0; i < a.stumps.size(); i++) {
        EXPECT_DOUBLE_EQ(a.stumps[i].threshold + c, b.stumps[i].threshold);
        EXPECT_EQ(a.stumps[i].polarity, b.stumps[i].polarity);
        EXPECT_DOUBLE_EQ(a.stumps[i].weight, b.stumps[i].weight);
    }
    std::uniform_real_distribution<double> q(40.0, 120.0);
    for (int i = 0; i < 200; i++) {
        double x = std::round(q(rng));
        EXPECT_EQ(a.predict(x), b.predict(x + c));
    }
}

TEST(AdaBoost, HeldOutAccuracyOnNoisyBands) {
    std::mt19937_64 rng(44);
    std::vector<LabeledSample> train = band_data(rng, 62.0, 86.0, 3.0, 5000);
    std::vector<LabeledSample> test = band_data(rng, 62.0, 86.0, 3.0, 5000);
    StumpEnsemble model = train_adaboost(train, 50);
    EXPECT_GE(1.0 - training_error(model, test), 0.90);
}

TEST(AdaBoost, InputValidation) {
    std::vector<LabeledSample> one_class = {{10.0, Label::LOW}, {20.0, Label::LOW}};
    EXPECT_THROW(train_adaboost(one_class, 5), std::invalid_argument);
    std::vector<LabeledSample> ok = {{10.0, Label::LOW}, {20.0, Label::HIGH}};
    EXPECT_THROW(train_adaboost(ok, 0), std::invalid_argument);
}

TEST(Vote, MatchesPredictOnRepeatedSample) {
    std::mt19937_64 rng(45);
    StumpEnsemble model = train_adaboost(band_data(rng, 60.0, 90.0, 4.0, 500), 10);
    for (double x : {55.0, 72.0, 74.9, 75.1, 95.0}) {
        Label p = model.predict(x);
        for (int k : {1, 2, 7, 40}) EXPECT_EQ(vote(model, std::vector<double>(k, x)), p);
    }
}

TEST(Vote, EvenSplitGoesHighAndEmptyThrows) {
    StumpEnsemble model;
    model.stumps.push_back(Stump{50.0, 1, 1.0});
    model.rounds = 1;
    EXPECT_EQ(vote(model, {10.0, 90.0}), Label::HIGH);
    EXPECT_EQ(vote(model, {10.0, 10.0, 90.0}), Label::LOW);
    EXPECT_THROW(vote(model, {}), std::invalid_argument);
}

// More samples can only help on symmetric noise; check the Monte Carlo trend.
TEST(Vote, AccuracyNonDecreasingInSampleCount) {
    double acc21 = 0, acc41 = 0;
    for (uint64_t seed = 0; seed < 10; seed++) {
        std::mt19937_64 rng(100 + seed);
        StumpEnsemble model = train_adaboost(band_data(rng, 70.0, 82.0, 6.0, 2000), 30);
        std::normal_distribution<double> noise(0.0, 6.0);
        int ok21 = 0, ok41 = 0, trials = 400;
        for (int t = 0; t < trials; t++) {
            bool is_low = t % 2 == 0;
            double mean = is_low ? 70.0 : 82.0;
            std::vector<double> samples;
            for (int k = 0; k < 41; k++) samples.push_back(mean + noise(rng));
            Label truth = is_low ? Label::LOW : Label::HIGH;
            if (vote(model, {samples.begin(), samples.begin() + 21}) == truth) ok21++;
            if (vote(model, samples) == truth) ok41++;
        }
        acc21 += ok21 / static_cast<double>(trials);
        acc41 += ok41 / static_cast<double>(trials);
    }
    EXPECT_GE(acc41, acc21);
}

TEST(Model, JsonRoundTrip) {
    std::mt19937_64 rng(46);
    StumpEnsemble model = train_adaboost(band_data(rng, 60.0, 90.0, 5.0, 200), 8);
    nlohmann::json j = model;
    StumpEnsemble back = j.get<StumpEnsemble>();
    ASSERT_EQ(back.stumps.size(), model.stumps.size());
    for (size_t i = 0; i < model.stumps.size(); i++) {
        EXPECT_DOUBLE_EQ(back.stumps[i].threshold, model.stumps[i].threshold);
        EXPECT_DOUBLE_EQ(back.stumps[i].weight, model.stumps[i].weight);
        EXPECT_EQ(back.stumps[i].polarity, model.stumps[i].polarity);
    }
}
