#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "echelon/nn.hpp"

namespace echelon {

enum class Tier2Mode { Section, Block, Semantic };

std::string to_string(Tier2Mode mode);
Tier2Mode tier2_mode_from_string(const std::string& s);

// Tier-2 never fires at the sentinel threshold (scores are probabilities).
inline constexpr float kThresholdSentinel = 2.0f;

// The deployable unit: both tiers, their thresholds, and the Tier-2 input
// recipe.
struct EchelonModel {
    nn::ParamSet tier1;
    float thd1 = kThresholdSentinel;
    std::vector<std::string> s_bias;             // ascending activation-ratio order
    std::map<std::string, int> section_vocab;    // name -> id, ids 1..|s_bias|
    Tier2Mode mode = Tier2Mode::Semantic;
    std::optional<nn::ParamSet> tier2;           // absent => Tier-1-only fallback
    float thd2 = kThresholdSentinel;
    std::optional<float> boosting_bound;
    double target_fpr = 0.001;

    bool tier2_active() const { return tier2.has_value() && thd2 < kThresholdSentinel; }
};

// Builds the name->id map from an s_bias list in ar-rank order.
std::map<std::string, int> make_section_vocab(const std::vector<std::string>& s_bias);

}  // namespace echelon
