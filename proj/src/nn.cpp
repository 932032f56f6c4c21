#include "echelon/nn.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "echelon/errors.hpp"

namespace echelon::nn {

namespace {

inline float sigmoidf(float x) { return 1.f / (1.f + std::exp(-x)); }

void check_input(const Hyper& h, std::span<const uint16_t> tokens, std::span<const int> section_ids) {
    if (tokens.empty() || tokens.size() % static_cast<size_t>(h.window) != 0)
        throw ShapeMismatch("token count " + std::to_string(tokens.size()) +
                            " is not a positive multiple of W=" + std::to_string(h.window));
    const size_t windows = tokens.size() / h.window;
    if (h.semantic_aware) {
        if (section_ids.size() != windows)
            throw ShapeMismatch("semantic-aware model needs one section id per window");
        if (h.section_vocab_size <= 0)
            throw ShapeMismatch("semantic-aware model with empty section vocabulary");
    }
}

// Intermediates shared by forward and backward.
struct Activations {
    std::vector<float> emb;     // n x D
    std::vector<float> acts;    // L x F, gated
    std::vector<float> fc_in;   // fc_inputs
    std::vector<float> hidden;  // H, post-ReLU
    float logit = 0.f;
    ForwardRecord rec;
};

Activations run_forward(const ParamSet& model, std::span<const uint16_t> tokens,
                        std::span<const int> section_ids) {
    const Hyper& h = model.hyper;
    check_input(h, tokens, section_ids);
    const int W = h.window, F = h.filters, D = h.embed_dim, H = h.hidden;
    const int n = static_cast<int>(tokens.size());
    const int L = n / W;
    const int wd = W * D;

    Activations a;
    a.emb.resize(static_cast<size_t>(n) * D);
    for (int i = 0; i < n; ++i) {
        const float* row = model.embedding.data() + static_cast<size_t>(tokens[i]) * D;
        std::copy(row, row + D, a.emb.data() + static_cast<size_t>(i) * D);
    }

    a.acts.resize(static_cast<size_t>(L) * F);
#pragma omp parallel for schedule(static)
    for (int l = 0; l < L; ++l) {
        const float* win = a.emb.data() + static_cast<size_t>(l) * wd;
        float* out = a.acts.data() + static_cast<size_t>(l) * F;
        for (int f = 0; f < F; ++f) {
            const float* cw = model.conv_w.data() + static_cast<size_t>(f) * wd;
            const float* gw = model.gate_w.data() + static_cast<size_t>(f) * wd;
            float c = model.conv_b[f], g = model.gate_b[f];
            for (int k = 0; k < wd; ++k) {
                c += cw[k] * win[k];
                g += gw[k] * win[k];
            }
            out[f] = c * sigmoidf(g);
        }
    }

    a.rec.pooled.assign(F, 0.f);
    a.rec.argmax_window.assign(F, 0);
    for (int f = 0; f < F; ++f) {
        float best = a.acts[f];
        int best_l = 0;
        for (int l = 1; l < L; ++l) {
            const float v = a.acts[static_cast<size_t>(l) * F + f];
            if (v > best) {  // strict: first window wins ties
                best = v;
                best_l = l;
            }
        }
        a.rec.pooled[f] = best;
        a.rec.argmax_window[f] = best_l;
    }

    a.fc_in = a.rec.pooled;
    if (h.semantic_aware) {
        a.rec.section_features.resize(F);
        for (int f = 0; f < F; ++f)
            a.rec.section_features[f] =
                static_cast<float>(section_ids[a.rec.argmax_window[f]]) / h.section_vocab_size;
        a.fc_in.insert(a.fc_in.end(), a.rec.section_features.begin(), a.rec.section_features.end());
    }

    const int in = h.fc_inputs();
    a.hidden.resize(H);
    for (int j = 0; j < H; ++j) {
        const float* row = model.fc_w.data() + static_cast<size_t>(j) * in;
        float z = model.fc_b[j];
        for (int i = 0; i < in; ++i) z += row[i] * a.fc_in[i];
        a.hidden[j] = z > 0.f ? z : 0.f;
    }
    a.logit = model.out_b[0];
    for (int j = 0; j < H; ++j) a.logit += model.out_w[j] * a.hidden[j];
    a.rec.probability = sigmoidf(a.logit);
    return a;
}

}  // namespace

ParamSet ParamSet::zeros(const Hyper& h) {
    ParamSet p;
    p.hyper = h;
    p.embedding.assign(static_cast<size_t>(kVocabSize) * h.embed_dim, 0.f);
    p.conv_w.assign(static_cast<size_t>(h.filters) * h.window * h.embed_dim, 0.f);
    p.gate_w = p.conv_w;
    p.conv_b.assign(h.filters, 0.f);
    p.gate_b = p.conv_b;
    p.fc_w.assign(static_cast<size_t>(h.hidden) * h.fc_inputs(), 0.f);
    p.fc_b.assign(h.hidden, 0.f);
    p.out_w.assign(h.hidden, 0.f);
    p.out_b.assign(1, 0.f);
    return p;
}

size_t ParamSet::param_count() const {
    return embedding.size() + conv_w.size() + gate_w.size() + conv_b.size() + gate_b.size() +
           fc_w.size() + fc_b.size() + out_w.size() + out_b.size();
}

bool ParamSet::all_finite() const {
    ParamSet& self = const_cast<ParamSet&>(*this);
    for (const auto& t : tensor_refs(self))
        for (float v : *t.data)
            if (!std::isfinite(v)) return false;
    return true;
}

std::vector<TensorRef> tensor_refs(ParamSet& p) {
    return {{"embedding", &p.embedding}, {"conv_w", &p.conv_w}, {"gate_w", &p.gate_w},
            {"conv_b", &p.conv_b},       {"gate_b", &p.gate_b}, {"fc_w", &p.fc_w},
            {"fc_b", &p.fc_b},           {"out_w", &p.out_w},   {"out_b", &p.out_b}};
}

ParamSet init_model(const Hyper& h, uint64_t seed) {
    ParamSet p = ParamSet::zeros(h);
    std::mt19937_64 rng(seed);
    auto fill = [&rng](std::vector<float>& t, int fan_in) {
        const float bound = 1.f / std::sqrt(static_cast<float>(fan_in));
        std::uniform_real_distribution<float> dist(-bound, bound);
        for (float& v : t) v = dist(rng);
    };
    fill(p.embedding, h.embed_dim);
    fill(p.conv_w, h.window * h.embed_dim);
    fill(p.gate_w, h.window * h.embed_dim);
    fill(p.fc_w, h.fc_inputs());
    fill(p.out_w, h.hidden);
    // biases start at zero
    return p;
}

ForwardRecord forward(const ParamSet& model, std::span<const uint16_t> tokens,
                      std::span<const int> section_ids) {
    return run_forward(model, tokens, section_ids).rec;
}

float bce_loss(float probability, int target) {
    const float p = std::clamp(probability, 1e-7f, 1.f - 1e-7f);
    return target ? -std::log(p) : -std::log(1.f - p);
}

float backward(const ParamSet& model, std::span<const uint16_t> tokens,
               std::span<const int> section_ids, int target, ParamSet& grad) {
    const Hyper& h = model.hyper;
    Activations a = run_forward(model, tokens, section_ids);
    const int W = h.window, F = h.filters, D = h.embed_dim, H = h.hidden;
    const int wd = W * D;
    const int in = h.fc_inputs();

    const float p = a.rec.probability;
    const float loss = bce_loss(p, target);
    // d(loss)/d(logit); zero when the clamp is active, so analytic gradients
    // stay consistent with finite differences of the clamped loss.
    const float dlogit = (p <= 1e-7f || p >= 1.f - 1e-7f) ? 0.f : p - static_cast<float>(target);

    grad.out_b[0] += dlogit;
    std::vector<float> dhidden(H);
    for (int j = 0; j < H; ++j) {
        grad.out_w[j] += dlogit * a.hidden[j];
        dhidden[j] = a.hidden[j] > 0.f ? dlogit * model.out_w[j] : 0.f;
    }

    std::vector<float> dfc_in(in, 0.f);
    for (int j = 0; j < H; ++j) {
        const float dj = dhidden[j];
        if (dj == 0.f) continue;
        grad.fc_b[j] += dj;
        float* grow = grad.fc_w.data() + static_cast<size_t>(j) * in;
        const float* wrow = model.fc_w.data() + static_cast<size_t>(j) * in;
        for (int i = 0; i < in; ++i) {
            grow[i] += dj * a.fc_in[i];
            dfc_in[i] += dj * wrow[i];
        }
    }
    // section-id features are inputs, not parameters: dfc_in[F..2F) is dropped

    const int n = static_cast<int>(tokens.size());
    std::vector<float> demb(static_cast<size_t>(n) * D, 0.f);
    for (int f = 0; f < F; ++f) {
        const float dact = dfc_in[f];
        if (dact == 0.f) continue;
        const int l = a.rec.argmax_window[f];
        const float* win = a.emb.data() + static_cast<size_t>(l) * wd;
        const float* cw = model.conv_w.data() + static_cast<size_t>(f) * wd;
        const float* gw = model.gate_w.data() + static_cast<size_t>(f) * wd;
        float c = model.conv_b[f], g = model.gate_b[f];
        for (int k = 0; k < wd; ++k) {
            c += cw[k] * win[k];
            g += gw[k] * win[k];
        }
        const float sg = sigmoidf(g);
        const float dc = dact * sg;
        const float dg = dact * c * sg * (1.f - sg);
        grad.conv_b[f] += dc;
        grad.gate_b[f] += dg;
        float* gcw = grad.conv_w.data() + static_cast<size_t>(f) * wd;
        float* ggw = grad.gate_w.data() + static_cast<size_t>(f) * wd;
        float* dwin = demb.data() + static_cast<size_t>(l) * wd;
        for (int k = 0; k < wd; ++k) {
            gcw[k] += dc * win[k];
            ggw[k] += dg * win[k];
            dwin[k] += dc * cw[k] + dg * gw[k];
        }
    }

    // Scatter window gradients into the embedding table; only argmax windows
    // carry gradient, so visit those positions alone.
    std::vector<int> windows = a.rec.argmax_window;
    std::sort(windows.begin(), windows.end());
    windows.erase(std::unique(windows.begin(), windows.end()), windows.end());
    for (int l : windows) {
        for (int t = 0; t < W; ++t) {
            const int pos = l * W + t;
            float* gr = grad.embedding.data() + static_cast<size_t>(tokens[pos]) * D;
            const float* dw = demb.data() + static_cast<size_t>(pos) * D;
            for (int d = 0; d < D; ++d) gr[d] += dw[d];
        }
    }
    return loss;
}

AdamState AdamState::zeros(const Hyper& h) {
    AdamState s;
    s.m = ParamSet::zeros(h);
    s.v = ParamSet::zeros(h);
    return s;
}

void adam_step(ParamSet& model, const ParamSet& grad, AdamState& state, float lr, float beta1,
               float beta2, float eps) {
    state.step += 1;
    const float bc1 = 1.f - std::pow(beta1, static_cast<float>(state.step));
    const float bc2 = 1.f - std::pow(beta2, static_cast<float>(state.step));
    auto pt = tensor_refs(model);
    auto gt = tensor_refs(const_cast<ParamSet&>(grad));
    auto mt = tensor_refs(state.m);
    auto vt = tensor_refs(state.v);
    for (size_t t = 0; t < pt.size(); ++t) {
        auto& p = *pt[t].data;
        const auto& g = *gt[t].data;
        auto& m = *mt[t].data;
        auto& v = *vt[t].data;
        if (g.size() != p.size()) throw ShapeMismatch("gradient shape differs from model");
        for (size_t i = 0; i < p.size(); ++i) {
            m[i] = beta1 * m[i] + (1.f - beta1) * g[i];
            v[i] = beta2 * v[i] + (1.f - beta2) * g[i] * g[i];
            const float mhat = m[i] / bc1;
            const float vhat = v[i] / bc2;
            p[i] -= lr * mhat / (std::sqrt(vhat) + eps);
        }
    }
}

float score(const ParamSet& model, const TrainSample& s) {
    return forward(model, s.tokens, s.section_ids).probability;
}

std::vector<float> score_dataset(const ParamSet& model, std::span<const TrainSample> set) {
    std::vector<float> out(set.size());
    const long count = static_cast<long>(set.size());
#pragma omp parallel for schedule(dynamic)
    for (long i = 0; i < count; ++i) out[i] = score(model, set[i]);
    return out;
}

TrainHistory train(ParamSet& model, std::span<const TrainSample> train_set,
                   std::span<const TrainSample> val_set, const TrainConfig& cfg) {
    if (train_set.empty() || val_set.empty()) throw DegenerateDataset("empty training or validation set");
    bool has_pos = false, has_neg = false;
    for (const auto& s : train_set) (s.label ? has_pos : has_neg) = true;
    if (!has_pos || !has_neg) throw DegenerateDataset("training set holds a single class");

    std::mt19937_64 rng(cfg.seed);
    AdamState state = AdamState::zeros(model.hyper);
    ParamSet grad = ParamSet::zeros(model.hyper);
    std::vector<size_t> order(train_set.size());
    std::iota(order.begin(), order.end(), 0);

    TrainHistory hist;
    ParamSet best = model;
    float best_val = std::numeric_limits<float>::infinity();
    int since_improve = 0;

    for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        float epoch_loss = 0.f;
        size_t batches = 0;
        for (size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const size_t end = std::min(order.size(), start + cfg.batch_size);
            for (auto& t : tensor_refs(grad)) std::fill(t.data->begin(), t.data->end(), 0.f);
            float batch_loss = 0.f;
            for (size_t i = start; i < end; ++i) {
                const auto& s = train_set[order[i]];
                batch_loss += backward(model, s.tokens, s.section_ids, s.label, grad);
            }
            const float scale = 1.f / static_cast<float>(end - start);
            for (auto& t : tensor_refs(grad))
                for (float& v : *t.data) v *= scale;
            adam_step(model, grad, state, cfg.lr);
            epoch_loss += batch_loss * scale;
            ++batches;
        }
        hist.train_loss.push_back(epoch_loss / static_cast<float>(batches));

        const std::vector<float> val_scores = score_dataset(model, val_set);
        float val_loss = 0.f;
        for (size_t i = 0; i < val_set.size(); ++i) val_loss += bce_loss(val_scores[i], val_set[i].label);
        val_loss /= static_cast<float>(val_set.size());
        hist.val_loss.push_back(val_loss);

        if (val_loss < best_val) {
            best_val = val_loss;
            best = model;
            hist.best_epoch = epoch;
            since_improve = 0;
        } else {
            ++since_improve;
            if (since_improve > cfg.patience) break;
        }
    }
    model = best;
    return hist;
}

std::vector<uint16_t> tokens_from_bytes(std::span<const uint8_t> bytes, int window) {
    std::vector<uint16_t> tokens(bytes.begin(), bytes.end());
    const size_t w = static_cast<size_t>(window);
    const size_t target = tokens.empty() ? w : ((tokens.size() + w - 1) / w) * w;
    tokens.resize(target, static_cast<uint16_t>(kPadToken));
    return tokens;
}

}  // namespace echelon::nn
