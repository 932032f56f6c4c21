#pragma once

#include <span>
#include <string>
#include <vector>

#include "echelon/nn.hpp"

namespace echelon::tier1 {

struct ScoredSample {
    float score = 0.f;
    int label = 0;  // 1 = malware
};

// Smallest threshold t from {unique scores} U {just-above-max sentinel} with
// FPR(t) <= target_fpr, where a sample is predicted malware iff score >= t.
// The sentinel keeps the selection always feasible (FPR 0).
// In strict mode the largest feasible observed score is returned instead,
// favoring the lowest achievable FPR over TPR.
float select_threshold_for_fpr(std::span<const ScoredSample> scores, double target_fpr,
                               bool strict = false);

struct TierOneResult {
    nn::ParamSet model;
    float thd1 = 0.f;
    nn::TrainHistory history;
    // id partitions; s in m1 <=> score(s) >= thd1
    std::vector<std::string> b1_train, m1_train, b1_val, m1_val;
    std::vector<float> train_scores, val_scores;  // aligned with the input sets
    double tier1_tpr = 0.0, tier1_fpr = 0.0;      // on validation at thd1
};

struct Tier1Config {
    nn::Hyper hyper;
    nn::TrainConfig train;
    double target_fpr = 0.001;
    bool strict_threshold = false;
    uint64_t init_seed = 0;
};

TierOneResult run_tier1(std::span<const nn::TrainSample> train_set,
                        std::span<const nn::TrainSample> val_set, const Tier1Config& cfg);

}  // namespace echelon::tier1
