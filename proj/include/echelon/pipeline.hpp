#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "echelon/ati.hpp"
#include "echelon/evaluation.hpp"
#include "echelon/model.hpp"
#include "echelon/pe_format.hpp"

namespace echelon::pipeline {

enum class BoostingBound { Auto, On, Off };  // Auto: on when B1 imbalance > 3:1

struct RunConfig {
    double target_fpr = 0.001;
    nn::Hyper hyper;  // desk-scale defaults; see paper_preset()
    int batch_size = 64;
    double lr = 0.001;
    int max_epochs = 200;
    int patience = 5;
    double cutoff_step = 0.02;
    Tier2Mode mode = Tier2Mode::Semantic;
    BoostingBound boosting = BoostingBound::Auto;
    double train_frac = 0.64, val_frac = 0.16, test_frac = 0.20;  // (80:20):20
    int folds = 1;
    uint64_t seed = 0;
    bool strict_threshold = false;
    size_t max_sample_bytes = 1u << 20;
};

// W=500, F=128, H=128 and the published training settings; expects corpora far
// beyond desk scale.
RunConfig paper_preset();

RunConfig load_config(const std::filesystem::path& json_path);
void save_config(const RunConfig& cfg, const std::filesystem::path& json_path);

struct SplitIndices {
    std::vector<size_t> train, val, test;  // disjoint, exhaustive
};

// Stratified by class, deterministic under seed.
SplitIndices split(std::span<const pe::PeSample> dataset, double train_frac, double val_frac,
                   double test_frac, uint64_t seed);

struct RunReport {
    std::string mode;
    int fold = 0;
    double target_fpr = 0.0;
    // test-set metrics (Table-2 shaped)
    double tier1_tpr = 0.0, tier1_fpr = 0.0;
    double overall_tpr = 0.0, overall_fpr = 0.0;
    double new_tp2 = 0.0, new_fp2 = 0.0;
    size_t s_bias_size = 0, total_sections = 0;
    int cutoff = 0;
    bool tier2_fallback = false;  // DegenerateClass in B1; Tier-1-only model
    // validation-side numbers the thresholds were locked on
    double val_tier1_tpr = 0.0, val_tier1_fpr = 0.0;
    double val_overall_tpr = 0.0, val_overall_fpr = 0.0;
    eval::TwoTierConfusion confusion;
    double tier1_seconds = 0.0, tier2_seconds = 0.0;  // reported separately, never in CSV
};

struct RunOutput {
    EchelonModel model;
    RunReport report;
    ati::SectionStats stats;  // empty rows when tier-2 fell back before ATI
};

// Algorithm-1 end to end on an explicit split.
RunOutput run_on_split(const RunConfig& cfg, std::span<const pe::PeSample> dataset,
                       const SplitIndices& idx, int fold);

// Splits, trains both tiers, evaluates on the held-out test set.
RunOutput run_full(const RunConfig& cfg, std::span<const pe::PeSample> dataset);

// Fixed hold-out test set; train/val refolded cfg.folds times.
std::vector<RunOutput> run_cv(const RunConfig& cfg, std::span<const pe::PeSample> dataset);

struct SweepRow {
    int width = 0;
    bool ok = false;
    std::string error;
    RunReport report;
};

// run_full per filter width; failures are isolated per width.
std::vector<SweepRow> sweep_filter_width(const RunConfig& cfg,
                                         std::span<const pe::PeSample> dataset,
                                         std::span<const int> widths);

// Deterministic metric CSVs (no wall times; timings go to a separate file).
std::string report_csv(std::span<const RunReport> reports);
std::string report_text(std::span<const RunReport> reports);  // includes wall times
std::string timings_csv(std::span<const RunReport> reports);
std::string sweep_csv(std::span<const SweepRow> rows);

// Derives component seeds from the master seed; also used by the CV folds.
uint64_t derive_seed(uint64_t master, uint64_t index);

}  // namespace echelon::pipeline
