#pragma once

#include <map>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "echelon/nn.hpp"
#include "echelon/pe_format.hpp"

namespace echelon::ati {

// One surviving max-pool activation mapped back to its byte window and owning
// PE region. A window is attributed by its start byte.
struct ActivationTrace {
    std::string sample_id;
    int filter = 0;
    int window = 0;
    uint64_t byte_begin = 0, byte_end = 0;  // [window*W, (window+1)*W)
    std::string section;
    float value = 0.f;
};

// Builds the F traces from an already-computed forward record (one per filter).
std::vector<ActivationTrace> traces_from_record(const nn::ForwardRecord& rec,
                                                const pe::PeSample& sample, int window_bytes);

// Runs the model on the padded sample and traces every filter's argmax window.
std::vector<ActivationTrace> trace_sample(const nn::ParamSet& model, const pe::PeSample& sample);

struct TracedSample {
    int label = 0;
    std::vector<ActivationTrace> traces;
};

struct SectionRow {
    double t_plus = 0.0;   // mean malware top-activation count
    double t_minus = 0.0;  // mean benign top-activation count
    double ar = 0.0;       // (t_plus + eps) / (t_minus + eps)
};

inline constexpr double kArEpsilon = 1e-6;

struct SectionStats {
    std::map<std::string, SectionRow> rows;  // keyed by region name
    size_t n_benign = 0, n_malware = 0;
};

// Eq.-style aggregation over a traced set; throws DegenerateClass when either
// class is absent.
SectionStats compute_stats(std::span<const TracedSample> samples);

struct BiasSelection {
    std::vector<std::string> names;  // ascending activation-ratio order
    int cutoff = 0;                  // requested names per side
};

// Takes `cutoff` names from each extreme of the ar-sorted list (ties broken by
// name); returns all names when 2*cutoff covers the list.
BiasSelection select_bias(const SectionStats& stats, int cutoff);

// CSV sorted by increasing ar:
// section,t_plus,t_minus,ar,n_benign_samples,n_malware_samples
void write_stats_csv(const SectionStats& stats, std::ostream& out);

}  // namespace echelon::ati
