#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "echelon/errors.hpp"
#include "echelon/nn.hpp"
#include "echelon/nn_reference.hpp"
#include "test_util.hpp"

using namespace echelon;
using testutil::oracle_probability;

TEST_CASE("all-zero weights give an indifferent classifier") {
    nn::Hyper h{.window = 4, .filters = 3, .embed_dim = 2, .hidden = 2};
    auto m = nn::ParamSet::zeros(h);
    std::vector<uint16_t> tokens(8, 42);
    auto rec = nn::forward(m, tokens);
    CHECK(rec.probability == doctest::Approx(0.5));
    for (float v : rec.pooled) CHECK(v == 0.f);
    for (int w : rec.argmax_window) CHECK(w == 0);  // ties resolve to the first window
}

TEST_CASE("hand-computed single-filter forward pass") {
    nn::Hyper h{.window = 2, .filters = 1, .embed_dim = 1, .hidden = 1};
    auto m = nn::ParamSet::zeros(h);
    m.embedding[0] = 1.f;    // token 0
    m.embedding[1] = -1.f;   // token 1
    m.embedding[2] = 2.f;    // token 2
    m.embedding[3] = 0.5f;   // token 3
    m.conv_w = {0.5f, 0.25f};
    m.conv_b = {0.1f};
    m.gate_w = {-0.3f, 0.2f};
    m.gate_b = {0.05f};
    m.fc_w = {0.7f};
    m.fc_b = {-0.1f};
    m.out_w = {1.5f};
    m.out_b = {0.2f};

    const std::vector<uint16_t> tokens = {0, 1, 2, 3};
    auto rec = nn::forward(m, tokens);

    auto sig = [](double x) { return 1.0 / (1.0 + std::exp(-x)); };
    // window 0 embeds to (1, -1), window 1 to (2, 0.5)
    const double act0 = (0.1 + 0.5 * 1 + 0.25 * -1) * sig(0.05 - 0.3 * 1 + 0.2 * -1);
    const double act1 = (0.1 + 0.5 * 2 + 0.25 * 0.5) * sig(0.05 - 0.3 * 2 + 0.2 * 0.5);
    const double pooled = std::max(act0, act1);
    const double hidden = std::max(0.0, 0.7 * pooled - 0.1);
    const double expected = sig(0.2 + 1.5 * hidden);

    CHECK(act1 > act0);
    CHECK(rec.argmax_window[0] == 1);
    CHECK(rec.pooled[0] == doctest::Approx(pooled).epsilon(1e-5));
    CHECK(rec.probability == doctest::Approx(expected).epsilon(1e-5));
}

TEST_CASE("identical windows tie to the first one") {
    nn::Hyper h{.window = 2, .filters = 2, .embed_dim = 2, .hidden = 2};
    auto m = nn::init_model(h, 9);
    const std::vector<uint16_t> tokens = {7, 9, 7, 9, 7, 9};  // three identical windows
    auto rec = nn::forward(m, tokens);
    for (int f = 0; f < h.filters; ++f) CHECK(rec.argmax_window[f] == 0);
}

TEST_CASE("semantic features expose the argmax window's section id") {
    nn::Hyper h{.window = 2, .filters = 2, .embed_dim = 2, .hidden = 2,
                .semantic_aware = true, .section_vocab_size = 4};
    auto m = nn::init_model(h, 11);
    std::mt19937_64 rng(3);
    const auto tokens = testutil::random_tokens(rng, 8);
    const std::vector<int> ids = {3, 0, 2, 1};
    auto rec = nn::forward(m, tokens, ids);
    REQUIRE(rec.section_features.size() == 2);
    for (int f = 0; f < 2; ++f)
        CHECK(rec.section_features[f] ==
              doctest::Approx(ids[rec.argmax_window[f]] / 4.0));
    CHECK(rec.probability == doctest::Approx(oracle_probability(m, tokens, ids)).epsilon(1e-5));
}

TEST_CASE("shape violations throw") {
    nn::Hyper h{.window = 4, .filters = 1, .embed_dim = 1, .hidden = 1};
    auto m = nn::ParamSet::zeros(h);
    CHECK_THROWS_AS(nn::forward(m, std::vector<uint16_t>{1, 2, 3}), ShapeMismatch);
    CHECK_THROWS_AS(nn::forward(m, std::vector<uint16_t>{}), ShapeMismatch);
    nn::Hyper hs = h;
    hs.semantic_aware = true;
    hs.section_vocab_size = 2;
    auto ms = nn::ParamSet::zeros(hs);
    CHECK_THROWS_AS(nn::forward(ms, std::vector<uint16_t>(4, 0)), ShapeMismatch);  // missing ids
}

TEST_CASE("parallel kernel agrees with the serial reference") {
    std::mt19937_64 rng(17);
    for (int trial = 0; trial < 30; ++trial) {
        nn::Hyper h{.window = 3 + trial % 5, .filters = 1 + trial % 6,
                    .embed_dim = 1 + trial % 3, .hidden = 4};
        auto m = nn::init_model(h, 100 + trial);
        const int L = 1 + static_cast<int>(rng() % 9);
        const auto tokens = testutil::random_tokens(rng, L * h.window);
        auto a = nn::forward(m, tokens);
        auto b = nn::reference::forward(m, tokens);
        REQUIRE(a.pooled.size() == b.pooled.size());
        for (size_t f = 0; f < a.pooled.size(); ++f) {
            CHECK(a.argmax_window[f] == b.argmax_window[f]);
            CHECK(a.pooled[f] == doctest::Approx(b.pooled[f]).epsilon(1e-5));
        }
        CHECK(a.probability == doctest::Approx(b.probability).epsilon(1e-5));
        // and both agree with the double-precision oracle
        CHECK(a.probability == doctest::Approx(oracle_probability(m, tokens)).epsilon(1e-4));
    }
}

TEST_CASE("reference window activations locate the pooled maximum") {
    std::mt19937_64 rng(23);
    nn::Hyper h{.window = 4, .filters = 3, .embed_dim = 2, .hidden = 4};
    auto m = nn::init_model(h, 55);
    const auto tokens = testutil::random_tokens(rng, 6 * h.window);
    auto rec = nn::forward(m, tokens);
    for (int f = 0; f < h.filters; ++f) {
        const auto acts = nn::reference::window_activations(m, tokens, f);
        REQUIRE(acts.size() == 6);
        float best = acts[0];
        int best_l = 0;
        for (int l = 1; l < 6; ++l)
            if (acts[l] > best) {
                best = acts[l];
                best_l = l;
            }
        CHECK(rec.argmax_window[f] == best_l);
        CHECK(rec.pooled[f] == doctest::Approx(best).epsilon(1e-5));
    }
}

TEST_CASE("analytic gradients match central finite differences") {
    std::mt19937_64 rng(31);
    int done = 0;
    while (done < 5) {
        nn::Hyper h{.window = 2 + static_cast<int>(rng() % 3),
                    .filters = 1 + static_cast<int>(rng() % 4),
                    .embed_dim = 1 + static_cast<int>(rng() % 2),
                    .hidden = 2 + static_cast<int>(rng() % 3)};
        auto m = nn::init_model(h, rng());
        const int L = 2 + static_cast<int>(rng() % 4);
        const auto tokens = testutil::random_tokens(rng, L * h.window);
        const int target = static_cast<int>(rng() % 2);
        const double step = 1e-4;
        if (testutil::min_top2_gap(m, tokens) < 50 * step) continue;  // argmax could flip
        ++done;

        auto grad = nn::ParamSet::zeros(h);
        nn::backward(m, tokens, {}, target, grad);

        double ginf = 0.0;
        const size_t n = m.param_count();
        std::vector<double> fd(n);
        for (size_t i = 0; i < n; ++i) {
            const float orig = testutil::get_param(m, i);
            testutil::set_param(m, i, orig + static_cast<float>(step));
            const double up = testutil::oracle_loss(m, tokens, {}, target);
            testutil::set_param(m, i, orig - static_cast<float>(step));
            const double down = testutil::oracle_loss(m, tokens, {}, target);
            testutil::set_param(m, i, orig);
            fd[i] = (up - down) / (2 * step);
            ginf = std::max(ginf, std::abs(fd[i]));
        }
        REQUIRE(ginf > 0.0);
        for (size_t i = 0; i < n; ++i) {
            const double a = testutil::get_param(grad, i);
            const double denom = std::max({std::abs(a), std::abs(fd[i]), ginf});
            CHECK(std::abs(a - fd[i]) / denom <= 1e-4);
        }
    }
}

TEST_CASE("bce loss and clamping") {
    CHECK(nn::bce_loss(0.5f, 1) == doctest::Approx(std::log(2.0)));
    CHECK(nn::bce_loss(0.5f, 0) == doctest::Approx(std::log(2.0)));
    CHECK(nn::bce_loss(1.0f, 1) == doctest::Approx(-std::log(1.0 - 1e-7)));  // clamped, finite
    CHECK(nn::bce_loss(0.0f, 1) == doctest::Approx(-std::log(1e-7f)));
    CHECK(std::isfinite(nn::bce_loss(0.0f, 0)));
}

TEST_CASE("adam moves parameters against the gradient at roughly lr") {
    nn::Hyper h{.window = 1, .filters = 1, .embed_dim = 1, .hidden = 1};
    auto m = nn::ParamSet::zeros(h);
    auto g = nn::ParamSet::zeros(h);
    g.out_b[0] = 0.5f;
    auto st = nn::AdamState::zeros(h);
    nn::adam_step(m, g, st, 0.01f);
    // bias-corrected first step is -lr * g/|g| for any nonzero gradient
    CHECK(m.out_b[0] == doctest::Approx(-0.01).epsilon(1e-3));
    CHECK(m.conv_b[0] == 0.f);  // zero gradient leaves the parameter alone
    for (int i = 0; i < 50; ++i) nn::adam_step(m, g, st, 0.01f);
    CHECK(m.out_b[0] < -0.4f);  // keeps descending under a constant gradient
    CHECK(m.all_finite());
}

TEST_CASE("adam rejects mismatched gradient shapes") {
    nn::Hyper h{.window = 2, .filters = 2, .embed_dim = 1, .hidden = 2};
    auto m = nn::ParamSet::zeros(h);
    auto st = nn::AdamState::zeros(h);
    auto bad = nn::ParamSet::zeros(nn::Hyper{.window = 2, .filters = 3, .embed_dim = 1, .hidden = 2});
    CHECK_THROWS_AS(nn::adam_step(m, bad, st, 0.01f), ShapeMismatch);
}

TEST_CASE("token padding yields a positive multiple of the window") {
    auto t = nn::tokens_from_bytes(std::vector<uint8_t>{1, 2, 3, 4, 5}, 4);
    REQUIRE(t.size() == 8);
    CHECK(t[4] == 5);
    for (size_t i = 5; i < 8; ++i) CHECK(t[i] == nn::kPadToken);
    CHECK(nn::tokens_from_bytes({}, 4).size() == 4);  // empty input still scores
    auto exact = nn::tokens_from_bytes(std::vector<uint8_t>(8, 1), 4);
    CHECK(exact.size() == 8);  // no padding when already aligned
}

namespace {

// Separable toy task: malware samples start with high bytes, benign with low.
std::vector<nn::TrainSample> toy_set(int n, uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::vector<nn::TrainSample> set;
    for (int i = 0; i < n; ++i) {
        const int label = i % 2;
        std::vector<uint8_t> bytes(16);
        for (auto& b : bytes)
            b = static_cast<uint8_t>(label ? 200 + rng() % 56 : rng() % 56);
        set.push_back({std::to_string(i), nn::tokens_from_bytes(bytes, 4), {}, label});
    }
    return set;
}

}  // namespace

TEST_CASE("training separates a trivially separable task") {
    nn::Hyper h{.window = 4, .filters = 4, .embed_dim = 4, .hidden = 8};
    auto m = nn::init_model(h, 1);
    const auto train_set = toy_set(40, 2);
    const auto val_set = toy_set(20, 3);
    nn::TrainConfig tc{.batch_size = 8, .max_epochs = 60, .patience = 8, .lr = 0.01f, .seed = 4};
    auto hist = nn::train(m, train_set, val_set, tc);
    REQUIRE(!hist.val_loss.empty());
    CHECK(hist.best_epoch >= 0);
    CHECK(hist.val_loss.back() <= hist.val_loss.front() * 1.5f);

    // the restored parameters reproduce the best validation loss
    const auto scores = nn::score_dataset(m, val_set);
    float val = 0.f;
    for (size_t i = 0; i < val_set.size(); ++i) val += nn::bce_loss(scores[i], val_set[i].label);
    val /= static_cast<float>(val_set.size());
    float best = hist.val_loss[0];
    for (float v : hist.val_loss) best = std::min(best, v);
    CHECK(val == doctest::Approx(best).epsilon(1e-5));

    // the learned model actually separates the classes
    float worst_pos = 1.f, worst_neg = 0.f;
    for (size_t i = 0; i < val_set.size(); ++i)
        if (val_set[i].label)
            worst_pos = std::min(worst_pos, scores[i]);
        else
            worst_neg = std::max(worst_neg, scores[i]);
    CHECK(worst_pos > worst_neg);
}

TEST_CASE("training is deterministic under a fixed seed") {
    nn::Hyper h{.window = 4, .filters = 2, .embed_dim = 2, .hidden = 4};
    const auto train_set = toy_set(20, 5);
    const auto val_set = toy_set(10, 6);
    nn::TrainConfig tc{.batch_size = 4, .max_epochs = 8, .patience = 3, .lr = 0.01f, .seed = 7};
    auto m1 = nn::init_model(h, 9);
    auto m2 = nn::init_model(h, 9);
    auto h1 = nn::train(m1, train_set, val_set, tc);
    auto h2 = nn::train(m2, train_set, val_set, tc);
    CHECK(m1 == m2);
    CHECK(h1.train_loss == h2.train_loss);
    CHECK(h1.val_loss == h2.val_loss);
}

TEST_CASE("single-class or empty training sets are rejected") {
    nn::Hyper h{.window = 4, .filters = 2, .embed_dim = 2, .hidden = 4};
    auto m = nn::init_model(h, 1);
    auto set = toy_set(10, 8);
    std::vector<nn::TrainSample> benign_only;
    for (const auto& s : set)
        if (!s.label) benign_only.push_back(s);
    nn::TrainConfig tc;
    CHECK_THROWS_AS(nn::train(m, benign_only, set, tc), DegenerateDataset);
    CHECK_THROWS_AS(nn::train(m, {}, set, tc), DegenerateDataset);
    CHECK_THROWS_AS(nn::train(m, set, {}, tc), DegenerateDataset);
}

TEST_CASE("zero patience stops at the first non-improving epoch") {
    nn::Hyper h{.window = 4, .filters = 2, .embed_dim = 2, .hidden = 4};
    auto m = nn::init_model(h, 2);
    nn::TrainConfig tc{.batch_size = 4, .max_epochs = 100, .patience = 0, .lr = 0.05f, .seed = 1};
    auto hist = nn::train(m, toy_set(16, 9), toy_set(8, 10), tc);
    // every epoch except possibly the last must have improved
    for (size_t i = 0; i + 1 < hist.val_loss.size(); ++i) {
        float best = hist.val_loss[0];
        for (size_t j = 1; j <= i; ++j) best = std::min(best, hist.val_loss[j]);
        if (i + 2 < hist.val_loss.size()) CHECK(hist.val_loss[i + 1] < best);
    }
}

TEST_CASE("score_dataset matches per-sample scoring") {
    nn::Hyper h{.window = 4, .filters = 3, .embed_dim = 2, .hidden = 4};
    auto m = nn::init_model(h, 13);
    const auto set = toy_set(17, 11);
    const auto scores = nn::score_dataset(m, set);
    REQUIRE(scores.size() == set.size());
    for (size_t i = 0; i < set.size(); ++i) CHECK(scores[i] == nn::score(m, set[i]));
}

TEST_CASE("init_model is seeded and bounded") {
    nn::Hyper h{.window = 8, .filters = 4, .embed_dim = 4, .hidden = 8};
    auto a = nn::init_model(h, 5);
    auto b = nn::init_model(h, 5);
    auto c = nn::init_model(h, 6);
    CHECK(a == b);
    CHECK(a != c);
    const float bound = 1.f / std::sqrt(static_cast<float>(h.window * h.embed_dim));
    for (float v : a.conv_w) CHECK(std::abs(v) <= bound);
    for (float v : a.conv_b) CHECK(v == 0.f);
    CHECK(a.param_count() ==
          a.embedding.size() + a.conv_w.size() + a.gate_w.size() + a.conv_b.size() +
              a.gate_b.size() + a.fc_w.size() + a.fc_b.size() + a.out_w.size() + a.out_b.size());
}
