#include "echelon/tier2.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <unordered_set>

#include "echelon/errors.hpp"

namespace echelon::tier2 {

namespace {

uint64_t derive_seed(uint64_t master, uint64_t index) {
    uint64_t x = master ^ (0x71e8u + index * 0x9e3779b97f4a7c15ull);
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

void pad_to_multiple(std::vector<uint16_t>& tokens, int window) {
    while (tokens.size() % static_cast<size_t>(window) != 0)
        tokens.push_back(static_cast<uint16_t>(nn::kPadToken));
}

struct Region {
    std::string name;
    uint64_t begin = 0, end = 0;
};

// Full region partition of the file: header, sections, gaps.
std::vector<Region> region_partition(const pe::PeSample& sample) {
    std::vector<Region> regions;
    uint64_t pos = 0;
    bool seen = false;
    for (const auto& s : sample.sections) {
        if (s.raw_size == 0) continue;
        if (s.raw_offset > pos)
            regions.push_back({std::string(seen ? pe::kGapRegion : pe::kHeaderRegion), pos, s.raw_offset});
        regions.push_back({s.name, s.raw_offset, s.raw_offset + s.raw_size});
        pos = s.raw_offset + s.raw_size;
        seen = true;
    }
    const uint64_t len = sample.bytes.size();
    if (pos < len) regions.push_back({std::string(seen ? pe::kGapRegion : pe::kHeaderRegion), pos, len});
    return regions;
}

std::vector<int> biased_windows(const std::set<std::string>& bias,
                                std::span<const ati::ActivationTrace> traces) {
    std::vector<int> windows;
    for (const auto& t : traces)
        if (bias.count(t.section)) windows.push_back(t.window);
    std::sort(windows.begin(), windows.end());
    windows.erase(std::unique(windows.begin(), windows.end()), windows.end());
    return windows;
}

}  // namespace

nn::TrainSample transform_section(const pe::PeSample& sample,
                                  const std::vector<std::string>& s_bias, int window) {
    const std::set<std::string> bias(s_bias.begin(), s_bias.end());
    nn::TrainSample out;
    out.id = sample.id;
    out.label = sample.label == pe::Label::Malware ? 1 : 0;
    for (const auto& r : region_partition(sample)) {
        if (!bias.count(r.name)) continue;
        for (uint64_t i = r.begin; i < r.end; ++i) out.tokens.push_back(sample.bytes[i]);
        pad_to_multiple(out.tokens, window);
    }
    if (out.tokens.empty()) out.tokens.assign(window, static_cast<uint16_t>(nn::kPadToken));
    return out;
}

nn::TrainSample transform_block(const pe::PeSample& sample, const std::vector<std::string>& s_bias,
                                int window, std::span<const ati::ActivationTrace> traces) {
    const std::set<std::string> bias(s_bias.begin(), s_bias.end());
    nn::TrainSample out;
    out.id = sample.id;
    out.label = sample.label == pe::Label::Malware ? 1 : 0;
    const auto padded = nn::tokens_from_bytes(sample.bytes, window);
    for (int w : biased_windows(bias, traces)) {
        const auto begin = padded.begin() + static_cast<size_t>(w) * window;
        out.tokens.insert(out.tokens.end(), begin, begin + window);
    }
    if (out.tokens.empty()) out.tokens.assign(window, static_cast<uint16_t>(nn::kPadToken));
    return out;
}

nn::TrainSample transform_semantic(const pe::PeSample& sample,
                                   const std::vector<std::string>& s_bias, int window,
                                   std::span<const ati::ActivationTrace> traces,
                                   const std::map<std::string, int>& vocab) {
    const std::set<std::string> bias(s_bias.begin(), s_bias.end());
    nn::TrainSample out;
    out.id = sample.id;
    out.label = sample.label == pe::Label::Malware ? 1 : 0;
    const auto padded = nn::tokens_from_bytes(sample.bytes, window);
    for (int w : biased_windows(bias, traces)) {
        const auto begin = padded.begin() + static_cast<size_t>(w) * window;
        out.tokens.insert(out.tokens.end(), begin, begin + window);
        const auto region = pe::region_of_padded_offset(sample, static_cast<uint64_t>(w) * window);
        const auto it = vocab.find(std::string(region));
        out.section_ids.push_back(it == vocab.end() ? 0 : it->second);
    }
    if (out.tokens.empty()) {
        out.tokens.assign(window, static_cast<uint16_t>(nn::kPadToken));
        out.section_ids.assign(1, 0);
    }
    return out;
}

nn::TrainSample transform(Tier2Mode mode, const pe::PeSample& sample,
                          const std::vector<std::string>& s_bias, int window,
                          std::span<const ati::ActivationTrace> traces,
                          const std::map<std::string, int>& vocab) {
    switch (mode) {
        case Tier2Mode::Section: return transform_section(sample, s_bias, window);
        case Tier2Mode::Block: return transform_block(sample, s_bias, window, traces);
        case Tier2Mode::Semantic: return transform_semantic(sample, s_bias, window, traces, vocab);
    }
    return transform_semantic(sample, s_bias, window, traces, vocab);
}

float compute_boosting_bound(std::span<const float> validation_malware_scores) {
    if (validation_malware_scores.empty())
        throw NoMalwareInValidation("boosting bound needs at least one validation malware score");
    return *std::min_element(validation_malware_scores.begin(), validation_malware_scores.end());
}

Tier2Result train_tier2(std::span<const B1Sample> b1_train, std::span<const B1Sample> b1_val,
                        double fp1_val, double tp1_val, double val_negatives, double val_positives,
                        std::span<const float> validation_malware_scores, const Tier2Config& cfg) {
    std::vector<ati::TracedSample> traced(b1_train.size());
    for (size_t i = 0; i < b1_train.size(); ++i) traced[i] = {b1_train[i].label, b1_train[i].traces};
    const ati::SectionStats stats = ati::compute_stats(traced);

    std::optional<float> bound;
    if (cfg.use_boosting_bound) bound = compute_boosting_bound(validation_malware_scores);
    auto eligible = [&](const B1Sample& s) { return !bound || s.tier1_score >= *bound; };

    std::vector<const B1Sample*> train_kept;
    for (const auto& s : b1_train)
        if (eligible(s)) train_kept.push_back(&s);
    bool pos = false, neg = false;
    for (const auto* s : train_kept) (s->label ? pos : neg) = true;
    if (!pos || !neg) throw DegenerateClass("b1_train single-class after boosting-bound filtering");

    // Cut-off grid: fractions step, 2*step, ... 50% of |S| per side, deduped by
    // the resulting selection.
    const size_t n_names = stats.rows.size();
    std::vector<int> cutoffs;
    std::set<std::vector<std::string>> seen;
    for (double frac = cfg.cutoff_step; frac <= 0.5 + 1e-9; frac += cfg.cutoff_step) {
        const int c = std::max(1, static_cast<int>(std::lround(frac * static_cast<double>(n_names))));
        auto sel = ati::select_bias(stats, c);
        if (seen.insert(sel.names).second) cutoffs.push_back(c);
    }

    Tier2Result best;
    best.bound = bound;
    double best_tpr = -1.0;
    for (size_t g = 0; g < cutoffs.size(); ++g) {
        const auto sel = ati::select_bias(stats, cutoffs[g]);
        const auto vocab = make_section_vocab(sel.names);

        nn::Hyper hyper = cfg.hyper;
        hyper.semantic_aware = cfg.mode == Tier2Mode::Semantic;
        hyper.section_vocab_size = hyper.semantic_aware ? static_cast<int>(sel.names.size()) : 0;

        std::vector<nn::TrainSample> train_inputs, val_inputs;
        train_inputs.reserve(train_kept.size());
        for (const auto* s : train_kept)
            train_inputs.push_back(transform(cfg.mode, *s->sample, sel.names, hyper.window, s->traces, vocab));
        std::vector<const B1Sample*> val_kept;
        for (const auto& s : b1_val)
            if (eligible(s)) val_kept.push_back(&s);
        val_inputs.reserve(val_kept.size());
        for (const auto* s : val_kept)
            val_inputs.push_back(transform(cfg.mode, *s->sample, sel.names, hyper.window, s->traces, vocab));

        nn::ParamSet model = nn::init_model(hyper, derive_seed(cfg.seed, 2 * g));
        nn::TrainConfig tc = cfg.train;
        tc.seed = derive_seed(cfg.seed, 2 * g + 1);
        if (val_inputs.empty()) continue;
        try {
            nn::train(model, train_inputs, val_inputs, tc);
        } catch (const DegenerateDataset&) {
            continue;
        }

        const std::vector<float> scores = nn::score_dataset(model, val_inputs);
        std::vector<float> candidates = scores;
        std::sort(candidates.begin(), candidates.end());
        candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());
        candidates.push_back(kThresholdSentinel);

        for (float t : candidates) {
            double fp2 = 0, tp2 = 0;
            for (size_t i = 0; i < val_kept.size(); ++i) {
                if (scores[i] >= t) (val_kept[i]->label ? tp2 : fp2) += 1;
            }
            const double ofpr = val_negatives > 0 ? (fp1_val + fp2) / val_negatives : 0.0;
            // When fp1 alone already busts the budget no threshold can restore
            // the lock; the sentinel (Tier-2 inert) is the defined fallback.
            if (ofpr > cfg.target_fpr && (t != kThresholdSentinel || fp2 > 0)) continue;
            const double otpr = val_positives > 0 ? (tp1_val + tp2) / val_positives : 0.0;
            if (otpr > best_tpr) {
                best_tpr = otpr;
                best.model = model;
                best.thd2 = t;
                best.s_bias = sel.names;
                best.section_vocab = vocab;
                best.cutoff = cutoffs[g];
                best.overall_val_tpr = otpr;
                best.overall_val_fpr = ofpr;
            }
            break;  // smallest feasible threshold for this grid point
        }
    }
    if (best_tpr < 0.0) throw DegenerateClass("no feasible tier-2 grid point");
    return best;
}

}  // namespace echelon::tier2
