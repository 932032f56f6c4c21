#include "echelon/ati.hpp"

#include <algorithm>

#include "echelon/errors.hpp"

namespace echelon::ati {

std::vector<ActivationTrace> traces_from_record(const nn::ForwardRecord& rec,
                                                const pe::PeSample& sample, int window_bytes) {
    std::vector<ActivationTrace> traces;
    traces.reserve(rec.pooled.size());
    for (size_t f = 0; f < rec.pooled.size(); ++f) {
        ActivationTrace t;
        t.sample_id = sample.id;
        t.filter = static_cast<int>(f);
        t.window = rec.argmax_window[f];
        t.byte_begin = static_cast<uint64_t>(t.window) * window_bytes;
        t.byte_end = t.byte_begin + window_bytes;
        t.section = pe::region_of_padded_offset(sample, t.byte_begin);
        t.value = rec.pooled[f];
        traces.push_back(std::move(t));
    }
    return traces;
}

std::vector<ActivationTrace> trace_sample(const nn::ParamSet& model, const pe::PeSample& sample) {
    const auto tokens = nn::tokens_from_bytes(sample.bytes, model.hyper.window);
    const auto rec = nn::forward(model, tokens);
    return traces_from_record(rec, sample, model.hyper.window);
}

SectionStats compute_stats(std::span<const TracedSample> samples) {
    SectionStats stats;
    std::map<std::string, double> plus_sum, minus_sum;
    for (const auto& s : samples) {
        (s.label ? stats.n_malware : stats.n_benign) += 1;
        std::map<std::string, double> counts;
        for (const auto& t : s.traces) counts[t.section] += 1.0;
        auto& sum = s.label ? plus_sum : minus_sum;
        for (const auto& [name, k] : counts) sum[name] += k;
    }
    if (stats.n_benign == 0 || stats.n_malware == 0)
        throw DegenerateClass("activation-trend stats need both classes");

    for (const auto& [name, total] : plus_sum) stats.rows[name].t_plus = total / static_cast<double>(stats.n_malware);
    for (const auto& [name, total] : minus_sum) stats.rows[name].t_minus = total / static_cast<double>(stats.n_benign);
    for (auto& [name, row] : stats.rows)
        row.ar = (row.t_plus + kArEpsilon) / (row.t_minus + kArEpsilon);
    return stats;
}

namespace {

std::vector<std::string> names_by_ar(const SectionStats& stats) {
    std::vector<std::string> names;
    names.reserve(stats.rows.size());
    for (const auto& [name, row] : stats.rows) names.push_back(name);
    std::stable_sort(names.begin(), names.end(), [&](const std::string& a, const std::string& b) {
        const double ra = stats.rows.at(a).ar, rb = stats.rows.at(b).ar;
        if (ra != rb) return ra < rb;
        return a < b;
    });
    return names;
}

}  // namespace

BiasSelection select_bias(const SectionStats& stats, int cutoff) {
    BiasSelection sel;
    sel.cutoff = cutoff;
    const std::vector<std::string> sorted = names_by_ar(stats);
    const size_t n = sorted.size();
    if (2 * static_cast<size_t>(cutoff) >= n) {
        sel.names = sorted;
        return sel;
    }
    sel.names.assign(sorted.begin(), sorted.begin() + cutoff);
    sel.names.insert(sel.names.end(), sorted.end() - cutoff, sorted.end());
    return sel;
}

void write_stats_csv(const SectionStats& stats, std::ostream& out) {
    out << "section,t_plus,t_minus,ar,n_benign_samples,n_malware_samples\n";
    for (const auto& name : names_by_ar(stats)) {
        const auto& row = stats.rows.at(name);
        out << name << ',' << row.t_plus << ',' << row.t_minus << ',' << row.ar << ','
            << stats.n_benign << ',' << stats.n_malware << '\n';
    }
}

}  // namespace echelon::ati
