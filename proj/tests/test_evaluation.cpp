#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "echelon/errors.hpp"
#include "echelon/evaluation.hpp"
#include "echelon/tier2.hpp"

using namespace echelon;

TEST_CASE("overall rates follow the two-tier definitions") {
    eval::TwoTierConfusion c{.fp1 = 3, .tp1 = 10, .tn2 = 87, .fn2 = 5, .fp2 = 2, .tp2 = 4};
    CHECK(eval::overall_fpr(c) == doctest::Approx((3.0 + 2.0) / (3 + 2 + 87)));
    CHECK(eval::overall_tpr(c) == doctest::Approx((10.0 + 4.0) / (10 + 4 + 5)));
}

TEST_CASE("published mean fold counts reproduce the published rates") {
    // 5-fold mean counts for the semantic-aware run; the derived percentages
    // should match the reported 0.09% FPR and 93.97% TPR.
    eval::TwoTierConfusion c{.fp1 = 16.4, .tp1 = 18210.2, .tn2 = 20436.5,
                             .fn2 = 1233.4, .fp2 = 2.1, .tp2 = 1010.4};
    CHECK(std::round(eval::overall_fpr(c) * 10000.0) / 10000.0 == doctest::Approx(0.0009));
    CHECK(std::round(eval::overall_tpr(c) * 10000.0) / 10000.0 == doctest::Approx(0.9397));
}

TEST_CASE("rates without the relevant class throw") {
    eval::TwoTierConfusion no_neg{.tp1 = 5, .fn2 = 1};
    CHECK_THROWS_AS(eval::overall_fpr(no_neg), NoNegatives);
    eval::TwoTierConfusion no_pos{.fp1 = 5, .tn2 = 1};
    CHECK_THROWS_AS(eval::overall_tpr(no_pos), NoPositives);
}

TEST_CASE("rates are invariant to uniform count scaling") {
    eval::TwoTierConfusion c{.fp1 = 1, .tp1 = 7, .tn2 = 40, .fn2 = 2, .fp2 = 1, .tp2 = 3};
    for (double k : {2.0, 5.0, 10.0}) {
        eval::TwoTierConfusion scaled{.fp1 = c.fp1 * k, .tp1 = c.tp1 * k, .tn2 = c.tn2 * k,
                                      .fn2 = c.fn2 * k, .fp2 = c.fp2 * k, .tp2 = c.tp2 * k};
        CHECK(eval::overall_fpr(scaled) == doctest::Approx(eval::overall_fpr(c)));
        CHECK(eval::overall_tpr(scaled) == doctest::Approx(eval::overall_tpr(c)));
    }
}

namespace {

// Tier-1 score is controlled by the first byte: embedding is keyed so that
// higher first-window content pushes the logit up monotonically.
EchelonModel controllable_model() {
    nn::Hyper h{.window = 4, .filters = 1, .embed_dim = 1, .hidden = 1};
    EchelonModel m;
    m.tier1 = nn::ParamSet::zeros(h);
    for (int tok = 0; tok < 256; ++tok)
        m.tier1.embedding[tok] = static_cast<float>(tok) / 255.f;
    for (int t = 0; t < h.window; ++t) m.tier1.conv_w[t] = 1.f;
    m.tier1.fc_w = {1.f};
    m.tier1.out_w = {4.f};
    m.tier1.out_b = {-2.f};
    m.thd1 = 0.5f;  // fires when the max window mean byte is above ~2/3 of 255
    m.target_fpr = 0.1;
    return m;
}

pe::PeSample byte_sample(const std::string& id, uint8_t fill, pe::Label label) {
    pe::PeSample s;
    s.id = id;
    s.label = label;
    s.bytes.assign(16, fill);
    s.sections.push_back({".all", 0, 16, 0x1000});
    return s;
}

}  // namespace

TEST_CASE("tier-1 positives are final and tagged as tier-1 decisions") {
    const auto m = controllable_model();
    const auto hot = byte_sample("hot", 0xFF, pe::Label::Malware);
    const auto cold = byte_sample("cold", 0x00, pe::Label::Benign);

    const auto d_hot = eval::decide(m, hot);
    CHECK(d_hot.predicted == 1);
    CHECK(d_hot.tier == eval::DecidingTier::Tier1);
    CHECK(!d_hot.tier2_score.has_value());

    const auto d_cold = eval::decide(m, cold);
    CHECK(d_cold.predicted == 0);
    CHECK(d_cold.tier == eval::DecidingTier::Tier2);  // consulted, absent model -> benign
    CHECK(!d_cold.tier2_score.has_value());
}

TEST_CASE("boosting bound short-circuits below-bound samples") {
    auto m = controllable_model();
    m.boosting_bound = 0.4f;
    const auto cold = byte_sample("cold", 0x00, pe::Label::Benign);
    const auto d = eval::decide(m, cold);
    CHECK(d.tier1_score < 0.4f);
    CHECK(d.predicted == 0);
    CHECK(d.tier == eval::DecidingTier::BoostBound);
}

TEST_CASE("sentinel tier-2 threshold reproduces tier-1-only decisions") {
    auto with_tier2 = controllable_model();
    nn::Hyper h2{.window = 4, .filters = 1, .embed_dim = 1, .hidden = 1};
    with_tier2.tier2 = nn::init_model(h2, 3);
    with_tier2.s_bias = {".all"};
    with_tier2.section_vocab = make_section_vocab(with_tier2.s_bias);
    with_tier2.mode = Tier2Mode::Section;
    with_tier2.thd2 = kThresholdSentinel;
    CHECK(!with_tier2.tier2_active());

    const auto tier1_only = controllable_model();
    std::vector<pe::PeSample> set;
    std::mt19937_64 rng(4);
    for (int i = 0; i < 20; ++i) {
        auto s = byte_sample("s" + std::to_string(i), static_cast<uint8_t>(rng()),
                             i % 2 ? pe::Label::Malware : pe::Label::Benign);
        set.push_back(std::move(s));
    }
    const auto a = eval::evaluate(with_tier2, set);
    const auto b = eval::evaluate(tier1_only, set);
    for (size_t i = 0; i < set.size(); ++i) {
        CHECK(a.decisions[i].predicted == b.decisions[i].predicted);
        CHECK(a.decisions[i].tier1_score == b.decisions[i].tier1_score);
    }
    CHECK(a.confusion.fp1 == b.confusion.fp1);
    CHECK(a.confusion.tn2 == b.confusion.tn2);
}

TEST_CASE("tier-2 decisions use the transformed input and its threshold") {
    auto m = controllable_model();
    m.thd1 = kThresholdSentinel;  // force every sample down to tier-2
    // tier-2 fires on 0xEE bytes inside ".all"
    nn::Hyper h2{.window = 4, .filters = 1, .embed_dim = 1, .hidden = 1};
    m.tier2 = nn::ParamSet::zeros(h2);
    m.tier2->embedding[0xEE] = 1.f;
    for (int t = 0; t < 4; ++t) m.tier2->conv_w[t] = 1.f;
    m.tier2->fc_w = {1.f};
    m.tier2->out_w = {10.f};
    m.tier2->out_b = {-5.f};
    m.s_bias = {".all"};
    m.section_vocab = make_section_vocab(m.s_bias);
    m.mode = Tier2Mode::Section;
    m.thd2 = 0.6f;

    auto evil = byte_sample("evil", 0xEE, pe::Label::Malware);
    const auto d = eval::decide(m, evil);
    CHECK(d.tier1_score < m.thd1);
    CHECK(d.tier == eval::DecidingTier::Tier2);
    REQUIRE(d.tier2_score.has_value());
    CHECK(*d.tier2_score > 0.6f);
    CHECK(d.predicted == 1);

    auto plain = byte_sample("plain", 0x00, pe::Label::Benign);
    const auto d2 = eval::decide(m, plain);
    CHECK(d2.predicted == 0);
    REQUIRE(d2.tier2_score.has_value());
    CHECK(*d2.tier2_score < 0.6f);
}

TEST_CASE("evaluate aggregates decisions into the confusion counters") {
    const auto m = controllable_model();
    std::vector<pe::PeSample> set = {
        byte_sample("tp", 0xFF, pe::Label::Malware),   // tier-1 positive, actual malware
        byte_sample("fp", 0xFF, pe::Label::Benign),    // tier-1 positive, actual benign
        byte_sample("fn", 0x00, pe::Label::Malware),   // never fires
        byte_sample("tn", 0x00, pe::Label::Benign),
    };
    const auto r = eval::evaluate(m, set);
    CHECK(r.confusion.tp1 == 1);
    CHECK(r.confusion.fp1 == 1);
    CHECK(r.confusion.fn2 == 1);
    CHECK(r.confusion.tn2 == 1);
    CHECK(r.confusion.tp2 == 0);
    CHECK(r.confusion.fp2 == 0);
    CHECK(r.decisions.size() == 4);
    CHECK(r.decisions[0].id == "tp");  // input order preserved
    CHECK(eval::overall_fpr(r.confusion) == doctest::Approx(0.5));
    CHECK(eval::overall_tpr(r.confusion) == doctest::Approx(0.5));
}

TEST_CASE("replicating benign samples leaves both rates unchanged") {
    const auto m = controllable_model();
    std::vector<pe::PeSample> base;
    std::mt19937_64 rng(9);
    for (int i = 0; i < 30; ++i)
        base.push_back(byte_sample("s" + std::to_string(i), static_cast<uint8_t>(rng()),
                                   i % 3 == 0 ? pe::Label::Malware : pe::Label::Benign));
    const auto r0 = eval::evaluate(m, base);
    for (int k : {5, 10}) {
        std::vector<pe::PeSample> inflated = base;
        for (const auto& s : base)
            if (s.label == pe::Label::Benign)
                for (int j = 1; j < k; ++j) inflated.push_back(s);
        const auto rk = eval::evaluate(m, inflated);
        CHECK(eval::overall_fpr(rk.confusion) == doctest::Approx(eval::overall_fpr(r0.confusion)));
        CHECK(eval::overall_tpr(rk.confusion) == doctest::Approx(eval::overall_tpr(r0.confusion)));
    }
}
