#pragma once

#include <span>
#include <vector>

#include "echelon/ati.hpp"
#include "echelon/model.hpp"
#include "echelon/nn.hpp"
#include "echelon/pe_format.hpp"

namespace echelon::tier2 {

// Bytes of every s_bias section in file order, each padded to a multiple of W
// before concatenation. No s_bias content yields a single all-PAD window.
nn::TrainSample transform_section(const pe::PeSample& sample,
                                  const std::vector<std::string>& s_bias, int window);

// The distinct W-byte argmax windows owned by s_bias sections, ascending byte
// offset. Windows are verbatim slices of the padded sample.
nn::TrainSample transform_block(const pe::PeSample& sample, const std::vector<std::string>& s_bias,
                                int window, std::span<const ati::ActivationTrace> traces);

// Block tokens plus one section-vocab id per window (0 for PAD/unknown).
nn::TrainSample transform_semantic(const pe::PeSample& sample,
                                   const std::vector<std::string>& s_bias, int window,
                                   std::span<const ati::ActivationTrace> traces,
                                   const std::map<std::string, int>& vocab);

nn::TrainSample transform(Tier2Mode mode, const pe::PeSample& sample,
                          const std::vector<std::string>& s_bias, int window,
                          std::span<const ati::ActivationTrace> traces,
                          const std::map<std::string, int>& vocab);

// Minimum Tier-1 malware probability over validation malware; samples scoring
// below it bypass Tier-2 as benign. Throws NoMalwareInValidation.
float compute_boosting_bound(std::span<const float> validation_malware_scores);

// A Tier-1-predicted-benign sample as Tier-2 sees it.
struct B1Sample {
    const pe::PeSample* sample = nullptr;
    float tier1_score = 0.f;
    std::vector<ati::ActivationTrace> traces;  // from the Tier-1 model
    int label = 0;
};

struct Tier2Config {
    Tier2Mode mode = Tier2Mode::Semantic;
    double cutoff_step = 0.02;      // fraction of |S| per side; grid runs to 0.5
    bool use_boosting_bound = false;
    nn::Hyper hyper;                // Tier-1 hyperparameters; W is shared
    nn::TrainConfig train;
    double target_fpr = 0.001;
    uint64_t seed = 0;
};

struct Tier2Result {
    nn::ParamSet model;
    float thd2 = kThresholdSentinel;
    std::vector<std::string> s_bias;
    std::map<std::string, int> section_vocab;
    std::optional<float> bound;
    int cutoff = 0;
    double overall_val_tpr = 0.0, overall_val_fpr = 0.0;
};

// Algorithm-1 Tier-2 loop: for each cutoff in the grid train a fresh model on
// transformed b1_train and pick thd2 as the smallest threshold keeping the
// overall validation FPR within target; returns the grid point with the
// highest overall validation TPR (ties -> smaller cutoff).
// fp1_val/tp1_val are Tier-1's final positives on the full validation set;
// val_negatives/val_positives are the full validation class sizes.
// Throws DegenerateClass when b1_train (after bound filtering) is single-class.
Tier2Result train_tier2(std::span<const B1Sample> b1_train, std::span<const B1Sample> b1_val,
                        double fp1_val, double tp1_val, double val_negatives, double val_positives,
                        std::span<const float> validation_malware_scores, const Tier2Config& cfg);

}  // namespace echelon::tier2
