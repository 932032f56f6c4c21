#include "echelon/evaluation.hpp"

#include "echelon/ati.hpp"
#include "echelon/errors.hpp"
#include "echelon/tier2.hpp"

namespace echelon::eval {

double overall_fpr(const TwoTierConfusion& c) {
    const double denom = c.fp1 + c.fp2 + c.tn2;
    if (denom <= 0) throw NoNegatives("overall FPR needs at least one negative");
    return (c.fp1 + c.fp2) / denom;
}

double overall_tpr(const TwoTierConfusion& c) {
    const double denom = c.tp1 + c.tp2 + c.fn2;
    if (denom <= 0) throw NoPositives("overall TPR needs at least one positive");
    return (c.tp1 + c.tp2) / denom;
}

Decision decide(const EchelonModel& model, const pe::PeSample& sample) {
    Decision d;
    d.id = sample.id;

    const auto tokens = nn::tokens_from_bytes(sample.bytes, model.tier1.hyper.window);
    const auto rec = nn::forward(model.tier1, tokens);
    d.tier1_score = rec.probability;
    if (d.tier1_score >= model.thd1) {
        d.predicted = 1;
        d.tier = DecidingTier::Tier1;
        return d;
    }
    if (model.boosting_bound && d.tier1_score < *model.boosting_bound) {
        d.predicted = 0;
        d.tier = DecidingTier::BoostBound;
        return d;
    }
    d.tier = DecidingTier::Tier2;
    if (!model.tier2) {
        d.predicted = 0;
        return d;
    }
    const auto traces = ati::traces_from_record(rec, sample, model.tier1.hyper.window);
    const auto input = tier2::transform(model.mode, sample, model.s_bias,
                                        model.tier2->hyper.window, traces, model.section_vocab);
    d.tier2_score = nn::score(*model.tier2, input);
    d.predicted = *d.tier2_score >= model.thd2 ? 1 : 0;
    return d;
}

EvalResult evaluate(const EchelonModel& model, std::span<const pe::PeSample> dataset) {
    EvalResult r;
    r.decisions.resize(dataset.size());
    const long count = static_cast<long>(dataset.size());
#pragma omp parallel for schedule(dynamic)
    for (long i = 0; i < count; ++i) r.decisions[i] = decide(model, dataset[i]);

    for (size_t i = 0; i < dataset.size(); ++i) {
        const bool actual = dataset[i].label == pe::Label::Malware;
        const auto& d = r.decisions[i];
        if (d.tier == DecidingTier::Tier1) {
            (actual ? r.confusion.tp1 : r.confusion.fp1) += 1;
        } else if (d.predicted) {
            (actual ? r.confusion.tp2 : r.confusion.fp2) += 1;
        } else {
            (actual ? r.confusion.fn2 : r.confusion.tn2) += 1;
        }
    }
    return r;
}

}  // namespace echelon::eval
