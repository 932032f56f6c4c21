#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "echelon/model.hpp"
#include "echelon/pe_format.hpp"

namespace echelon::eval {

// Tier-1 contributes only final positives; everything else is resolved in the
// Tier-2 stage (or by the boosting bound, which counts as a Tier-2 negative).
struct TwoTierConfusion {
    double fp1 = 0, tp1 = 0;
    double tn2 = 0, fn2 = 0, fp2 = 0, tp2 = 0;
};

double overall_fpr(const TwoTierConfusion& c);  // (fp1+fp2)/(fp1+fp2+tn2)
double overall_tpr(const TwoTierConfusion& c);  // (tp1+tp2)/(tp1+tp2+fn2)

enum class DecidingTier { Tier1, BoostBound, Tier2 };

struct Decision {
    std::string id;
    int predicted = 0;  // 1 = malware
    float tier1_score = 0.f;
    std::optional<float> tier2_score;  // set only when Tier-2 was consulted
    DecidingTier tier = DecidingTier::Tier1;
};

// Applies the two models sequentially to one parsed sample.
Decision decide(const EchelonModel& model, const pe::PeSample& sample);

struct EvalResult {
    TwoTierConfusion confusion;
    std::vector<Decision> decisions;  // input order
};

// Per-sample decisions plus aggregated confusion counts over a labeled set.
EvalResult evaluate(const EchelonModel& model, std::span<const pe::PeSample> dataset);

}  // namespace echelon::eval
