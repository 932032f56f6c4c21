#include "echelon/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iostream>
#include <numeric>
#include <random>
#include <sstream>

#include <json.hpp>

#include "echelon/errors.hpp"
#include "echelon/tier1.hpp"
#include "echelon/tier2.hpp"

namespace echelon::pipeline {

namespace {

using nlohmann::json;
using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

nn::TrainSample tokenize(const pe::PeSample& s, int window) {
    nn::TrainSample t;
    t.id = s.id;
    t.label = s.label == pe::Label::Malware ? 1 : 0;
    t.tokens = nn::tokens_from_bytes(s.bytes, window);
    return t;
}

}  // namespace

uint64_t derive_seed(uint64_t master, uint64_t index) {
    uint64_t x = master + 0x9e3779b97f4a7c15ull * (index + 1);
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

RunConfig paper_preset() {
    RunConfig cfg;
    cfg.hyper.window = 500;
    cfg.hyper.filters = 128;
    cfg.hyper.embed_dim = 8;
    cfg.hyper.hidden = 128;
    cfg.target_fpr = 0.001;
    cfg.batch_size = 64;
    cfg.lr = 0.001;
    cfg.max_epochs = 200;
    cfg.patience = 5;
    cfg.cutoff_step = 0.02;
    cfg.folds = 5;
    return cfg;
}

namespace {

void to_json_impl(json& j, const RunConfig& c) {
    j = {{"target_fpr", c.target_fpr},
         {"window", c.hyper.window},
         {"filters", c.hyper.filters},
         {"embed_dim", c.hyper.embed_dim},
         {"hidden", c.hyper.hidden},
         {"batch_size", c.batch_size},
         {"lr", c.lr},
         {"max_epochs", c.max_epochs},
         {"patience", c.patience},
         {"cutoff_step", c.cutoff_step},
         {"mode", to_string(c.mode)},
         {"boosting_bound", c.boosting == BoostingBound::Auto ? "auto"
                            : c.boosting == BoostingBound::On ? "on"
                                                              : "off"},
         {"train_frac", c.train_frac},
         {"val_frac", c.val_frac},
         {"test_frac", c.test_frac},
         {"folds", c.folds},
         {"seed", c.seed},
         {"strict_threshold", c.strict_threshold},
         {"max_sample_bytes", c.max_sample_bytes}};
}

void validate(const RunConfig& c) {
    if (!(c.target_fpr > 0.0 && c.target_fpr <= 1.0))
        throw std::invalid_argument("target_fpr must be in (0,1]");
    if (std::abs(c.train_frac + c.val_frac + c.test_frac - 1.0) > 1e-9)
        throw std::invalid_argument("split ratios must sum to 1");
    if (c.hyper.window <= 0 || c.hyper.filters <= 0 || c.hyper.embed_dim <= 0 ||
        c.hyper.hidden <= 0 || c.batch_size <= 0 || c.max_epochs <= 0 || c.folds <= 0)
        throw std::invalid_argument("counts in the run config must be positive");
}

}  // namespace

RunConfig load_config(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) throw IoFailure("cannot open config " + path.string());
    json j = json::parse(f);
    RunConfig c;
    if (j.value("preset", "") == "paper") c = paper_preset();
    c.target_fpr = j.value("target_fpr", c.target_fpr);
    c.hyper.window = j.value("window", c.hyper.window);
    c.hyper.filters = j.value("filters", c.hyper.filters);
    c.hyper.embed_dim = j.value("embed_dim", c.hyper.embed_dim);
    c.hyper.hidden = j.value("hidden", c.hyper.hidden);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.lr = j.value("lr", c.lr);
    c.max_epochs = j.value("max_epochs", c.max_epochs);
    c.patience = j.value("patience", c.patience);
    c.cutoff_step = j.value("cutoff_step", c.cutoff_step);
    if (j.contains("mode")) c.mode = tier2_mode_from_string(j.at("mode"));
    if (j.contains("boosting_bound")) {
        const std::string b = j.at("boosting_bound");
        c.boosting = b == "auto" ? BoostingBound::Auto : b == "on" ? BoostingBound::On : BoostingBound::Off;
    }
    c.train_frac = j.value("train_frac", c.train_frac);
    c.val_frac = j.value("val_frac", c.val_frac);
    c.test_frac = j.value("test_frac", c.test_frac);
    c.folds = j.value("folds", c.folds);
    c.seed = j.value("seed", c.seed);
    c.strict_threshold = j.value("strict_threshold", c.strict_threshold);
    c.max_sample_bytes = j.value("max_sample_bytes", c.max_sample_bytes);
    validate(c);
    return c;
}

void save_config(const RunConfig& cfg, const std::filesystem::path& path) {
    json j;
    to_json_impl(j, cfg);
    std::ofstream f(path);
    f << j.dump(2) << '\n';
    if (!f) throw IoFailure("cannot write config " + path.string());
}

SplitIndices split(std::span<const pe::PeSample> dataset, double train_frac, double val_frac,
                   double test_frac, uint64_t seed) {
    if (std::abs(train_frac + val_frac + test_frac - 1.0) > 1e-9)
        throw std::invalid_argument("split ratios must sum to 1");
    std::vector<size_t> benign, malware;
    for (size_t i = 0; i < dataset.size(); ++i)
        (dataset[i].label == pe::Label::Malware ? malware : benign).push_back(i);
    if (benign.empty() || malware.empty())
        throw DegenerateClass("stratified split needs both classes");

    SplitIndices out;
    std::mt19937_64 rng(seed);
    for (auto* cls : {&benign, &malware}) {
        std::shuffle(cls->begin(), cls->end(), rng);
        const size_t n = cls->size();
        const size_t n_test = static_cast<size_t>(std::lround(test_frac * static_cast<double>(n)));
        const size_t n_val = static_cast<size_t>(std::lround(val_frac * static_cast<double>(n)));
        size_t i = 0;
        for (; i < n_test; ++i) out.test.push_back((*cls)[i]);
        for (; i < n_test + n_val; ++i) out.val.push_back((*cls)[i]);
        for (; i < n; ++i) out.train.push_back((*cls)[i]);
    }
    std::sort(out.train.begin(), out.train.end());
    std::sort(out.val.begin(), out.val.end());
    std::sort(out.test.begin(), out.test.end());
    return out;
}

RunOutput run_on_split(const RunConfig& cfg, std::span<const pe::PeSample> dataset,
                       const SplitIndices& idx, int fold) {
    validate(cfg);
    const uint64_t fold_seed = derive_seed(cfg.seed, 100 + static_cast<uint64_t>(fold));

    std::vector<nn::TrainSample> train_tok, val_tok;
    train_tok.reserve(idx.train.size());
    for (size_t i : idx.train) train_tok.push_back(tokenize(dataset[i], cfg.hyper.window));
    val_tok.reserve(idx.val.size());
    for (size_t i : idx.val) val_tok.push_back(tokenize(dataset[i], cfg.hyper.window));

    tier1::Tier1Config t1cfg;
    t1cfg.hyper = cfg.hyper;
    t1cfg.hyper.semantic_aware = false;
    t1cfg.hyper.section_vocab_size = 0;
    t1cfg.train = {cfg.batch_size, cfg.max_epochs, cfg.patience, static_cast<float>(cfg.lr),
                   derive_seed(fold_seed, 1)};
    t1cfg.init_seed = derive_seed(fold_seed, 2);
    t1cfg.target_fpr = cfg.target_fpr;
    t1cfg.strict_threshold = cfg.strict_threshold;

    const auto t1_start = Clock::now();
    tier1::TierOneResult t1 = tier1::run_tier1(train_tok, val_tok, t1cfg);
    const double tier1_seconds = seconds_since(t1_start);

    RunOutput out;
    out.report.mode = to_string(cfg.mode);
    out.report.fold = fold;
    out.report.target_fpr = cfg.target_fpr;
    out.report.val_tier1_tpr = t1.tier1_tpr;
    out.report.val_tier1_fpr = t1.tier1_fpr;
    out.report.tier1_seconds = tier1_seconds;

    out.model.tier1 = t1.model;
    out.model.thd1 = t1.thd1;
    out.model.mode = cfg.mode;
    out.model.target_fpr = cfg.target_fpr;

    // Tier-1 validation bookkeeping for the overall-FPR lock.
    double fp1_val = 0, tp1_val = 0, val_neg = 0, val_pos = 0;
    std::vector<float> val_malware_scores;
    for (size_t i = 0; i < val_tok.size(); ++i) {
        const bool positive = val_tok[i].label == 1;
        (positive ? val_pos : val_neg) += 1;
        if (positive) val_malware_scores.push_back(t1.val_scores[i]);
        if (t1.val_scores[i] >= t1.thd1) (positive ? tp1_val : fp1_val) += 1;
    }

    const auto t2_start = Clock::now();
    auto collect_b1 = [&](std::span<const nn::TrainSample> toks, const std::vector<float>& scores,
                          const std::vector<size_t>& indices) {
        std::vector<tier2::B1Sample> b1;
        for (size_t i = 0; i < toks.size(); ++i) {
            if (scores[i] >= t1.thd1) continue;
            tier2::B1Sample s;
            s.sample = &dataset[indices[i]];
            s.tier1_score = scores[i];
            s.label = toks[i].label;
            b1.push_back(std::move(s));
        }
        const long n = static_cast<long>(b1.size());
#pragma omp parallel for schedule(dynamic)
        for (long i = 0; i < n; ++i) b1[i].traces = ati::trace_sample(t1.model, *b1[i].sample);
        return b1;
    };
    std::vector<tier2::B1Sample> b1_train = collect_b1(train_tok, t1.train_scores, idx.train);
    std::vector<tier2::B1Sample> b1_val = collect_b1(val_tok, t1.val_scores, idx.val);

    double b1_pos = 0, b1_neg = 0;
    for (const auto& s : b1_train) (s.label ? b1_pos : b1_neg) += 1;
    const bool boost = cfg.boosting == BoostingBound::On ||
                       (cfg.boosting == BoostingBound::Auto && b1_pos > 0 && b1_neg > 0 &&
                        std::max(b1_pos, b1_neg) / std::min(b1_pos, b1_neg) > 3.0);

    try {
        std::vector<ati::TracedSample> traced(b1_train.size());
        for (size_t i = 0; i < b1_train.size(); ++i) traced[i] = {b1_train[i].label, b1_train[i].traces};
        out.stats = ati::compute_stats(traced);

        tier2::Tier2Config t2cfg;
        t2cfg.mode = cfg.mode;
        t2cfg.cutoff_step = cfg.cutoff_step;
        t2cfg.use_boosting_bound = boost;
        t2cfg.hyper = t1cfg.hyper;
        t2cfg.train = {cfg.batch_size, cfg.max_epochs, cfg.patience, static_cast<float>(cfg.lr),
                       derive_seed(fold_seed, 3)};
        t2cfg.target_fpr = cfg.target_fpr;
        t2cfg.seed = derive_seed(fold_seed, 4);

        tier2::Tier2Result t2 = tier2::train_tier2(b1_train, b1_val, fp1_val, tp1_val, val_neg,
                                                   val_pos, val_malware_scores, t2cfg);
        out.model.tier2 = t2.model;
        out.model.thd2 = t2.thd2;
        out.model.s_bias = t2.s_bias;
        out.model.section_vocab = t2.section_vocab;
        out.model.boosting_bound = t2.bound;
        out.report.cutoff = t2.cutoff;
        out.report.s_bias_size = t2.s_bias.size();
        out.report.total_sections = out.stats.rows.size();
        out.report.val_overall_tpr = t2.overall_val_tpr;
        out.report.val_overall_fpr = t2.overall_val_fpr;
    } catch (const DegenerateClass& e) {
        std::cerr << "warning: tier-2 degenerate (" << e.what() << "); tier-1-only model\n";
        out.report.tier2_fallback = true;
        out.report.total_sections = out.stats.rows.size();
        out.report.val_overall_tpr = t1.tier1_tpr;
        out.report.val_overall_fpr = t1.tier1_fpr;
    }
    out.report.tier2_seconds = seconds_since(t2_start);

    // Held-out test evaluation.
    eval::EvalResult ev;
    {
        std::vector<pe::PeSample> gathered;
        gathered.reserve(idx.test.size());
        for (size_t i : idx.test) gathered.push_back(dataset[i]);
        ev = eval::evaluate(out.model, gathered);
        double pos = 0, tp1_test = 0, fp1_test = 0, neg = 0;
        for (size_t k = 0; k < gathered.size(); ++k) {
            const bool positive = gathered[k].label == pe::Label::Malware;
            (positive ? pos : neg) += 1;
            if (ev.decisions[k].tier1_score >= out.model.thd1) (positive ? tp1_test : fp1_test) += 1;
        }
        out.report.tier1_tpr = pos > 0 ? tp1_test / pos : 0.0;
        out.report.tier1_fpr = neg > 0 ? fp1_test / neg : 0.0;
    }
    out.report.confusion = ev.confusion;
    out.report.overall_fpr = eval::overall_fpr(ev.confusion);
    out.report.overall_tpr = eval::overall_tpr(ev.confusion);
    out.report.new_tp2 = ev.confusion.tp2;
    out.report.new_fp2 = ev.confusion.fp2;
    return out;
}

RunOutput run_full(const RunConfig& cfg, std::span<const pe::PeSample> dataset) {
    const SplitIndices idx =
        split(dataset, cfg.train_frac, cfg.val_frac, cfg.test_frac, derive_seed(cfg.seed, 0));
    return run_on_split(cfg, dataset, idx, 0);
}

std::vector<RunOutput> run_cv(const RunConfig& cfg, std::span<const pe::PeSample> dataset) {
    // Fixed hold-out test set; train/val refolded.
    const SplitIndices base =
        split(dataset, cfg.train_frac, cfg.val_frac, cfg.test_frac, derive_seed(cfg.seed, 0));
    std::vector<size_t> trainval = base.train;
    trainval.insert(trainval.end(), base.val.begin(), base.val.end());

    std::vector<size_t> benign, malware;
    for (size_t i : trainval)
        (dataset[i].label == pe::Label::Malware ? malware : benign).push_back(i);
    std::mt19937_64 rng(derive_seed(cfg.seed, 7));
    std::shuffle(benign.begin(), benign.end(), rng);
    std::shuffle(malware.begin(), malware.end(), rng);

    std::vector<RunOutput> outputs;
    for (int fold = 0; fold < cfg.folds; ++fold) {
        SplitIndices idx;
        idx.test = base.test;
        for (const auto& cls : {benign, malware})
            for (size_t k = 0; k < cls.size(); ++k)
                (static_cast<int>(k) % cfg.folds == fold ? idx.val : idx.train).push_back(cls[k]);
        std::sort(idx.train.begin(), idx.train.end());
        std::sort(idx.val.begin(), idx.val.end());
        RunOutput out = run_on_split(cfg, dataset, idx, fold);
        outputs.push_back(std::move(out));
    }
    return outputs;
}

std::vector<SweepRow> sweep_filter_width(const RunConfig& cfg,
                                         std::span<const pe::PeSample> dataset,
                                         std::span<const int> widths) {
    std::vector<SweepRow> rows;
    for (int w : widths) {
        SweepRow row;
        row.width = w;
        try {
            RunConfig c = cfg;
            c.hyper.window = w;
            row.report = run_full(c, dataset).report;
            row.ok = true;
        } catch (const std::exception& e) {
            row.error = e.what();
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

namespace {

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return buf;
}

}  // namespace

std::string report_csv(std::span<const RunReport> reports) {
    std::ostringstream out;
    out << "fold,mode,target_fpr,tier1_tpr,tier1_fpr,overall_tpr,overall_fpr,new_tp2,new_fp2,"
           "s_bias_size,total_sections,cutoff,tier2_fallback,val_tier1_tpr,val_tier1_fpr,"
           "val_overall_tpr,val_overall_fpr,fp1,tp1,tn2,fn2,fp2,tp2\n";
    for (const auto& r : reports) {
        const auto& c = r.confusion;
        out << r.fold << ',' << r.mode << ',' << fmt(r.target_fpr) << ',' << fmt(r.tier1_tpr) << ','
            << fmt(r.tier1_fpr) << ',' << fmt(r.overall_tpr) << ',' << fmt(r.overall_fpr) << ','
            << fmt(r.new_tp2) << ',' << fmt(r.new_fp2) << ',' << r.s_bias_size << ','
            << r.total_sections << ',' << r.cutoff << ',' << (r.tier2_fallback ? 1 : 0) << ','
            << fmt(r.val_tier1_tpr) << ',' << fmt(r.val_tier1_fpr) << ',' << fmt(r.val_overall_tpr)
            << ',' << fmt(r.val_overall_fpr) << ',' << fmt(c.fp1) << ',' << fmt(c.tp1) << ','
            << fmt(c.tn2) << ',' << fmt(c.fn2) << ',' << fmt(c.fp2) << ',' << fmt(c.tp2) << '\n';
    }
    if (reports.size() > 1) {
        auto mean_sd = [&](auto get) {
            double m = 0;
            for (const auto& r : reports) m += get(r);
            m /= static_cast<double>(reports.size());
            double v = 0;
            for (const auto& r : reports) v += (get(r) - m) * (get(r) - m);
            v = std::sqrt(v / static_cast<double>(reports.size()));
            return std::pair{m, v};
        };
        const auto [t1t, t1ts] = mean_sd([](const RunReport& r) { return r.tier1_tpr; });
        const auto [t1f, t1fs] = mean_sd([](const RunReport& r) { return r.tier1_fpr; });
        const auto [ot, ots] = mean_sd([](const RunReport& r) { return r.overall_tpr; });
        const auto [of, ofs] = mean_sd([](const RunReport& r) { return r.overall_fpr; });
        out << "mean," << reports.front().mode << ',' << fmt(reports.front().target_fpr) << ','
            << fmt(t1t) << ',' << fmt(t1f) << ',' << fmt(ot) << ',' << fmt(of) << ",,,,,,,,,,,,,,,,\n";
        out << "std,,," << fmt(t1ts) << ',' << fmt(t1fs) << ',' << fmt(ots) << ',' << fmt(ofs)
            << ",,,,,,,,,,,,,,,,\n";
    }
    return out.str();
}

std::string report_text(std::span<const RunReport> reports) {
    std::ostringstream out;
    for (const auto& r : reports) {
        out << "fold " << r.fold << " (" << r.mode << " mode, target FPR " << fmt(r.target_fpr)
            << ")\n"
            << "  tier-1   TPR " << fmt(r.tier1_tpr) << "  FPR " << fmt(r.tier1_fpr) << '\n'
            << "  overall  TPR " << fmt(r.overall_tpr) << "  FPR " << fmt(r.overall_fpr) << '\n'
            << "  tier-2 new TPs " << fmt(r.new_tp2) << "  new FPs " << fmt(r.new_fp2) << '\n'
            << "  s_bias " << r.s_bias_size << '/' << r.total_sections << " sections (cutoff "
            << r.cutoff << " per side)" << (r.tier2_fallback ? "  [tier-1-only fallback]" : "")
            << '\n'
            << "  training time  tier-1 " << fmt(r.tier1_seconds) << " s  tier-2 "
            << fmt(r.tier2_seconds) << " s\n";
    }
    return out.str();
}

std::string timings_csv(std::span<const RunReport> reports) {
    std::ostringstream out;
    out << "fold,tier1_seconds,tier2_seconds\n";
    for (const auto& r : reports)
        out << r.fold << ',' << fmt(r.tier1_seconds) << ',' << fmt(r.tier2_seconds) << '\n';
    return out.str();
}

std::string sweep_csv(std::span<const SweepRow> rows) {
    std::ostringstream out;
    out << "width,ok,error,tier1_tpr,overall_tpr,overall_fpr,new_tp2,new_fp2,s_bias_size\n";
    for (const auto& r : rows) {
        out << r.width << ',' << (r.ok ? 1 : 0) << ',' << r.error << ',';
        if (r.ok)
            out << fmt(r.report.tier1_tpr) << ',' << fmt(r.report.overall_tpr) << ','
                << fmt(r.report.overall_fpr) << ',' << fmt(r.report.new_tp2) << ','
                << fmt(r.report.new_fp2) << ',' << r.report.s_bias_size;
        else
            out << ",,,,,";
        out << '\n';
    }
    return out.str();
}

}  // namespace echelon::pipeline
