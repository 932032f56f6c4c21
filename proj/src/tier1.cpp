#include "echelon/tier1.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "echelon/errors.hpp"

namespace echelon::tier1 {

float select_threshold_for_fpr(std::span<const ScoredSample> scores, double target_fpr,
                               bool strict) {
    std::vector<float> benign;
    std::vector<float> candidates;
    candidates.reserve(scores.size() + 1);
    for (const auto& s : scores) {
        candidates.push_back(s.score);
        if (!s.label) benign.push_back(s.score);
    }
    if (candidates.empty() || benign.empty())
        throw DegenerateDataset("threshold selection needs at least one benign score");

    std::sort(benign.begin(), benign.end());
    std::sort(candidates.begin(), candidates.end());
    candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());
    const float sentinel = std::nextafter(candidates.back(), std::numeric_limits<float>::infinity());

    auto fpr_at = [&](float t) {
        const size_t fp = benign.end() - std::lower_bound(benign.begin(), benign.end(), t);
        return static_cast<double>(fp) / static_cast<double>(benign.size());
    };

    if (strict) {
        // Largest observed score still meeting the target; degenerates to the
        // sentinel only when no observed score is feasible.
        for (auto it = candidates.rbegin(); it != candidates.rend(); ++it)
            if (fpr_at(*it) <= target_fpr) return *it;
        return sentinel;
    }
    for (float t : candidates)
        if (fpr_at(t) <= target_fpr) return t;
    return sentinel;
}

TierOneResult run_tier1(std::span<const nn::TrainSample> train_set,
                        std::span<const nn::TrainSample> val_set, const Tier1Config& cfg) {
    TierOneResult r;
    r.model = nn::init_model(cfg.hyper, cfg.init_seed);
    r.history = nn::train(r.model, train_set, val_set, cfg.train);

    r.train_scores = nn::score_dataset(r.model, train_set);
    r.val_scores = nn::score_dataset(r.model, val_set);

    std::vector<ScoredSample> val_scored(val_set.size());
    for (size_t i = 0; i < val_set.size(); ++i) val_scored[i] = {r.val_scores[i], val_set[i].label};
    r.thd1 = select_threshold_for_fpr(val_scored, cfg.target_fpr, cfg.strict_threshold);

    auto partition = [&](std::span<const nn::TrainSample> set, const std::vector<float>& scores,
                         std::vector<std::string>& b1, std::vector<std::string>& m1) {
        for (size_t i = 0; i < set.size(); ++i)
            (scores[i] >= r.thd1 ? m1 : b1).push_back(set[i].id);
    };
    partition(train_set, r.train_scores, r.b1_train, r.m1_train);
    partition(val_set, r.val_scores, r.b1_val, r.m1_val);

    size_t tp = 0, fp = 0, pos = 0, neg = 0;
    for (size_t i = 0; i < val_set.size(); ++i) {
        const bool predicted = r.val_scores[i] >= r.thd1;
        if (val_set[i].label) {
            ++pos;
            tp += predicted;
        } else {
            ++neg;
            fp += predicted;
        }
    }
    r.tier1_tpr = pos ? static_cast<double>(tp) / pos : 0.0;
    r.tier1_fpr = neg ? static_cast<double>(fp) / neg : 0.0;
    return r;
}

}  // namespace echelon::tier1
