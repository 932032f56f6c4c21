#include "echelon/nn_reference.hpp"

#include <cmath>

#include "echelon/errors.hpp"

namespace echelon::nn::reference {

namespace {

float sigmoid(float x) { return 1.f / (1.f + std::exp(-x)); }

// Gated activation of one (window, filter) pair, scalar loops only.
float activation_at(const ParamSet& model, std::span<const uint16_t> tokens, int window_idx,
                    int filter) {
    const Hyper& h = model.hyper;
    float conv = model.conv_b[filter];
    float gate = model.gate_b[filter];
    for (int t = 0; t < h.window; ++t) {
        const uint16_t tok = tokens[static_cast<size_t>(window_idx) * h.window + t];
        for (int d = 0; d < h.embed_dim; ++d) {
            const float e = model.embedding[static_cast<size_t>(tok) * h.embed_dim + d];
            const size_t w = (static_cast<size_t>(filter) * h.window + t) * h.embed_dim + d;
            conv += model.conv_w[w] * e;
            gate += model.gate_w[w] * e;
        }
    }
    return conv * sigmoid(gate);
}

}  // namespace

std::vector<float> window_activations(const ParamSet& model, std::span<const uint16_t> tokens,
                                      int filter) {
    const int L = static_cast<int>(tokens.size()) / model.hyper.window;
    std::vector<float> acts(L);
    for (int l = 0; l < L; ++l) acts[l] = activation_at(model, tokens, l, filter);
    return acts;
}

ForwardRecord forward(const ParamSet& model, std::span<const uint16_t> tokens,
                      std::span<const int> section_ids) {
    const Hyper& h = model.hyper;
    if (tokens.empty() || tokens.size() % static_cast<size_t>(h.window) != 0)
        throw ShapeMismatch("token count is not a positive multiple of W");
    const int L = static_cast<int>(tokens.size()) / h.window;
    if (h.semantic_aware && section_ids.size() != static_cast<size_t>(L))
        throw ShapeMismatch("semantic-aware model needs one section id per window");

    ForwardRecord rec;
    rec.pooled.resize(h.filters);
    rec.argmax_window.resize(h.filters);
    for (int f = 0; f < h.filters; ++f) {
        const std::vector<float> acts = window_activations(model, tokens, f);
        int best = 0;
        for (int l = 1; l < L; ++l)
            if (acts[l] > acts[best]) best = l;
        rec.pooled[f] = acts[best];
        rec.argmax_window[f] = best;
    }

    std::vector<float> fc_in = rec.pooled;
    if (h.semantic_aware) {
        rec.section_features.resize(h.filters);
        for (int f = 0; f < h.filters; ++f)
            rec.section_features[f] =
                static_cast<float>(section_ids[rec.argmax_window[f]]) / h.section_vocab_size;
        fc_in.insert(fc_in.end(), rec.section_features.begin(), rec.section_features.end());
    }

    const int in = h.fc_inputs();
    float logit = model.out_b[0];
    for (int j = 0; j < h.hidden; ++j) {
        float z = model.fc_b[j];
        for (int i = 0; i < in; ++i) z += model.fc_w[static_cast<size_t>(j) * in + i] * fc_in[i];
        if (z < 0.f) z = 0.f;
        logit += model.out_w[j] * z;
    }
    rec.probability = 1.f / (1.f + std::exp(-logit));
    return rec;
}

}  // namespace echelon::nn::reference
