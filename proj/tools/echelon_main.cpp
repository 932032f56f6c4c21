// Command-line surface for the two-tier pipeline.
//
// Exit codes: 0 success, 1 usage error, 2 data error, 3 training degeneracy
// (tier-1-only fallback was taken).

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "echelon/ati.hpp"
#include "echelon/corpus.hpp"
#include "echelon/errors.hpp"
#include "echelon/evaluation.hpp"
#include "echelon/model_io.hpp"
#include "echelon/pipeline.hpp"
#include "echelon/reference_corpus.hpp"

namespace fs = std::filesystem;
using namespace echelon;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitDegenerate = 3;

std::vector<pe::PeSample> load_dataset(const std::string& path, size_t max_bytes) {
    const fs::path p(path);
    if (fs::is_directory(p)) {
        if (fs::exists(p / "manifest.csv")) return corpus::ingest_manifest(p / "manifest.csv", max_bytes);
        return corpus::ingest_dir(p, max_bytes);
    }
    return corpus::ingest_manifest(p, max_bytes);
}

corpus::CorpusSpec spec_from_json(const fs::path& path) {
    std::ifstream f(path);
    if (!f) throw IoFailure("cannot open corpus spec " + path.string());
    const nlohmann::json j = nlohmann::json::parse(f);
    corpus::CorpusSpec s;
    s.n_benign = j.value("n_benign", 0);
    s.n_malware = j.value("n_malware", 0);
    s.min_sections = j.value("min_sections", s.min_sections);
    s.max_sections = j.value("max_sections", s.max_sections);
    s.min_section_size = j.value("min_section_size", s.min_section_size);
    s.max_section_size = j.value("max_section_size", s.max_section_size);
    s.noise = j.value("noise", s.noise);
    s.seed = j.value("seed", s.seed);
    for (const auto& m : j.value("motifs", nlohmann::json::array())) {
        corpus::Motif motif;
        motif.section_names = m.at("section_names").get<std::vector<std::string>>();
        const std::string hex = m.value("pattern_hex", "");
        for (size_t i = 0; i + 1 < hex.size(); i += 2)
            motif.pattern.push_back(static_cast<uint8_t>(std::stoi(hex.substr(i, 2), nullptr, 16)));
        motif.p_malware = m.value("p_malware", 0.0);
        motif.p_benign = m.value("p_benign", 0.0);
        s.motifs.push_back(std::move(motif));
    }
    return s;
}

void write_file(const fs::path& path, const std::string& content) {
    std::ofstream f(path);
    f << content;
    if (!f) throw IoFailure("cannot write " + path.string());
}

void write_reports(const fs::path& dir, std::span<const pipeline::RunOutput> outputs) {
    fs::create_directories(dir);
    std::vector<pipeline::RunReport> reports;
    for (const auto& o : outputs) reports.push_back(o.report);
    write_file(dir / "report.csv", pipeline::report_csv(reports));
    write_file(dir / "report.txt", pipeline::report_text(reports));
    write_file(dir / "timings.csv", pipeline::timings_csv(reports));
    if (!outputs.empty() && !outputs.front().stats.rows.empty()) {
        std::ostringstream csv;
        ati::write_stats_csv(outputs.front().stats, csv);
        write_file(dir / "ati_stats.csv", csv.str());
    }
}

const char* tier_name(eval::DecidingTier t) {
    switch (t) {
        case eval::DecidingTier::Tier1: return "tier1";
        case eval::DecidingTier::BoostBound: return "boost-bound";
        case eval::DecidingTier::Tier2: return "tier2";
    }
    return "tier2";
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Echelon two-tier malware detector"};
    app.require_subcommand(1);

    // generate-corpus
    auto* gen = app.add_subcommand("generate-corpus", "Write a synthetic labeled PE corpus");
    std::string gen_out, gen_spec;
    int gen_benign = 100, gen_malware = 100;
    uint64_t gen_seed = 0;
    bool gen_reference = false;
    gen->add_option("--out", gen_out, "output directory")->required();
    gen->add_option("--spec", gen_spec, "corpus spec JSON");
    gen->add_flag("--reference", gen_reference, "use the built-in reference corpus spec");
    gen->add_option("--benign", gen_benign);
    gen->add_option("--malware", gen_malware);
    gen->add_option("--seed", gen_seed);

    // train
    auto* train = app.add_subcommand("train", "Run the full two-tier training pipeline");
    std::string train_data, train_model = "model.bin", train_reports = "reports", train_cfg;
    std::string train_mode;
    double train_target = -1, train_lr = -1;
    int train_window = -1, train_filters = -1, train_folds = -1, train_epochs = -1;
    int64_t train_seed = -1;
    train->add_option("--data", train_data, "dataset directory or manifest")->required();
    train->add_option("--model-out", train_model, "output model file");
    train->add_option("--report-dir", train_reports, "report output directory");
    train->add_option("--config", train_cfg, "run config JSON");
    train->add_option("--target-fpr", train_target, "override: target FPR");
    train->add_option("--mode", train_mode, "override: section|block|semantic");
    train->add_option("--window", train_window, "override: filter width W");
    train->add_option("--filters", train_filters, "override: filter count F");
    train->add_option("--folds", train_folds, "override: CV folds");
    train->add_option("--epochs", train_epochs, "override: max epochs");
    train->add_option("--lr", train_lr, "override: learning rate");
    train->add_option("--seed", train_seed, "override: master seed");

    // evaluate
    auto* ev = app.add_subcommand("evaluate", "Evaluate a saved model on a labeled dataset");
    std::string eval_model, eval_data, eval_out;
    ev->add_option("--model", eval_model)->required();
    ev->add_option("--data", eval_data)->required();
    ev->add_option("--out", eval_out, "write per-sample decisions CSV here");

    // predict
    auto* pred = app.add_subcommand("predict", "Classify individual sample files");
    std::string pred_model;
    std::vector<std::string> pred_files;
    pred->add_option("--model", pred_model)->required();
    pred->add_option("files", pred_files, "sample files")->required();

    // trace
    auto* trace = app.add_subcommand("trace", "Export activation-trend stats for a dataset");
    std::string trace_model, trace_data, trace_out = "ati_stats.csv";
    trace->add_option("--model", trace_model)->required();
    trace->add_option("--data", trace_data)->required();
    trace->add_option("--out", trace_out);

    // sweep
    auto* sweep = app.add_subcommand("sweep", "Filter-width sweep over full pipeline runs");
    std::string sweep_data, sweep_cfg, sweep_out = "sweep.csv";
    std::vector<int> sweep_widths;
    sweep->add_option("--data", sweep_data)->required();
    sweep->add_option("--config", sweep_cfg);
    sweep->add_option("--widths", sweep_widths, "filter widths")->required();
    sweep->add_option("--out", sweep_out);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : kExitUsage;
    }

    try {
        if (*gen) {
            corpus::CorpusSpec spec;
            if (gen_reference)
                spec = corpus::reference_spec(gen_benign, gen_malware, gen_seed);
            else if (!gen_spec.empty())
                spec = spec_from_json(gen_spec);
            else {
                std::cerr << "generate-corpus needs --spec or --reference\n";
                return kExitUsage;
            }
            if (gen->count("--benign")) spec.n_benign = gen_benign;
            if (gen->count("--malware")) spec.n_malware = gen_malware;
            if (gen->count("--seed")) spec.seed = gen_seed;
            const auto manifest = corpus::generate(spec, gen_out);
            std::cout << "wrote " << manifest.size() << " samples under " << gen_out << '\n';
            return 0;
        }

        if (*train) {
            pipeline::RunConfig cfg;
            if (!train_cfg.empty()) cfg = pipeline::load_config(train_cfg);
            if (train_target >= 0) cfg.target_fpr = train_target;
            if (!train_mode.empty()) cfg.mode = tier2_mode_from_string(train_mode);
            if (train_window > 0) cfg.hyper.window = train_window;
            if (train_filters > 0) cfg.hyper.filters = train_filters;
            if (train_folds > 0) cfg.folds = train_folds;
            if (train_epochs > 0) cfg.max_epochs = train_epochs;
            if (train_lr > 0) cfg.lr = train_lr;
            if (train_seed >= 0) cfg.seed = static_cast<uint64_t>(train_seed);

            const auto dataset = load_dataset(train_data, cfg.max_sample_bytes);
            std::vector<pipeline::RunOutput> outputs;
            if (cfg.folds > 1) {
                outputs = pipeline::run_cv(cfg, dataset);
            } else {
                outputs.push_back(pipeline::run_full(cfg, dataset));
            }
            write_reports(train_reports, outputs);
            if (outputs.size() == 1) {
                save_model(outputs.front().model, fs::path(train_model));
            } else {
                for (const auto& o : outputs) {
                    fs::path p(train_model);
                    p.replace_filename(p.stem().string() + "_fold" + std::to_string(o.report.fold) +
                                       p.extension().string());
                    save_model(o.model, p);
                }
            }
            std::cout << pipeline::report_text(
                std::vector<pipeline::RunReport>{outputs.front().report});
            for (const auto& o : outputs)
                if (o.report.tier2_fallback) return kExitDegenerate;
            return 0;
        }

        if (*ev) {
            const EchelonModel model = load_model(fs::path(eval_model));
            const auto dataset = load_dataset(eval_data, 1u << 20);
            const auto result = eval::evaluate(model, dataset);
            std::cout << "overall TPR " << eval::overall_tpr(result.confusion) << "  overall FPR "
                      << eval::overall_fpr(result.confusion) << '\n';
            if (!eval_out.empty()) {
                std::ostringstream csv;
                csv << "id,predicted,tier1_score,tier2_score,tier\n";
                for (const auto& d : result.decisions) {
                    csv << d.id << ',' << d.predicted << ',' << d.tier1_score << ',';
                    if (d.tier2_score) csv << *d.tier2_score;
                    csv << ',' << tier_name(d.tier) << '\n';
                }
                write_file(eval_out, csv.str());
            }
            return 0;
        }

        if (*pred) {
            const EchelonModel model = load_model(fs::path(pred_model));
            std::cout << "file,label,tier1_score,tier2_score,tier,boost_short_circuit\n";
            size_t failures = 0;
            for (const auto& file : pred_files) {
                std::ifstream f(file, std::ios::binary);
                std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(f)),
                                           std::istreambuf_iterator<char>());
                try {
                    pe::PeSample sample = pe::parse_pe(std::move(bytes));
                    sample.id = file;
                    const auto d = eval::decide(model, sample);
                    std::cout << file << ',' << (d.predicted ? "malware" : "benign") << ','
                              << d.tier1_score << ',';
                    if (d.tier2_score) std::cout << *d.tier2_score;
                    std::cout << ',' << tier_name(d.tier) << ','
                              << (d.tier == eval::DecidingTier::BoostBound ? 1 : 0) << '\n';
                } catch (const MalformedPe& e) {
                    std::cout << file << ",error:" << e.what() << ",,,,\n";
                    ++failures;
                }
            }
            return failures == pred_files.size() ? kExitData : 0;
        }

        if (*trace) {
            const EchelonModel model = load_model(fs::path(trace_model));
            const auto dataset = load_dataset(trace_data, 1u << 20);
            std::vector<ati::TracedSample> traced;
            for (const auto& s : dataset)
                traced.push_back({s.label == pe::Label::Malware ? 1 : 0,
                                  ati::trace_sample(model.tier1, s)});
            const auto stats = ati::compute_stats(traced);
            std::ostringstream csv;
            ati::write_stats_csv(stats, csv);
            write_file(trace_out, csv.str());
            std::cout << "wrote " << trace_out << " (" << stats.rows.size() << " regions)\n";
            return 0;
        }

        if (*sweep) {
            pipeline::RunConfig cfg;
            if (!sweep_cfg.empty()) cfg = pipeline::load_config(sweep_cfg);
            const auto dataset = load_dataset(sweep_data, cfg.max_sample_bytes);
            const auto rows = pipeline::sweep_filter_width(cfg, dataset, sweep_widths);
            write_file(sweep_out, pipeline::sweep_csv(rows));
            std::cout << pipeline::sweep_csv(rows);
            return 0;
        }
    } catch (const EmptyDataset& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitData;
    } catch (const IoFailure& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitData;
    } catch (const MalformedPe& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitData;
    } catch (const DegenerateClass& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitDegenerate;
    } catch (const DegenerateDataset& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitDegenerate;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitUsage;
    }
    return 0;
}
