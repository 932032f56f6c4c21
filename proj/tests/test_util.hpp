// Shared test oracles: an independent double-precision re-derivation of the
// network math (used for finite differences and agreement checks) plus small
// helpers for poking individual parameters.
#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "echelon/nn.hpp"

namespace testutil {

inline double dsigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Double-precision forward pass, written straight from the architecture
// definition and independent of the library kernels.
inline double oracle_probability(const echelon::nn::ParamSet& m,
                                 std::span<const uint16_t> tokens,
                                 std::span<const int> section_ids = {}) {
    const auto& h = m.hyper;
    const int W = h.window, F = h.filters, D = h.embed_dim, H = h.hidden;
    const int L = static_cast<int>(tokens.size()) / W;

    std::vector<double> fc_in;
    for (int f = 0; f < F; ++f) {
        double best = -1e300;
        int best_l = 0;
        for (int l = 0; l < L; ++l) {
            double c = m.conv_b[f], g = m.gate_b[f];
            for (int t = 0; t < W; ++t) {
                const uint16_t tok = tokens[static_cast<size_t>(l) * W + t];
                for (int d = 0; d < D; ++d) {
                    const double e = m.embedding[static_cast<size_t>(tok) * D + d];
                    c += m.conv_w[(static_cast<size_t>(f) * W + t) * D + d] * e;
                    g += m.gate_w[(static_cast<size_t>(f) * W + t) * D + d] * e;
                }
            }
            const double act = c * dsigmoid(g);
            if (act > best) {
                best = act;
                best_l = l;
            }
        }
        fc_in.push_back(best);
        if (h.semantic_aware)
            fc_in.push_back(static_cast<double>(section_ids[best_l]) / h.section_vocab_size);
    }
    // reorder: pooled values first, then section features, matching fc layout
    if (h.semantic_aware) {
        std::vector<double> reordered(2 * F);
        for (int f = 0; f < F; ++f) {
            reordered[f] = fc_in[2 * f];
            reordered[F + f] = fc_in[2 * f + 1];
        }
        fc_in = reordered;
    }

    const int in = h.fc_inputs();
    double logit = m.out_b[0];
    for (int j = 0; j < H; ++j) {
        double z = m.fc_b[j];
        for (int i = 0; i < in; ++i) z += m.fc_w[static_cast<size_t>(j) * in + i] * fc_in[i];
        logit += m.out_w[j] * (z > 0.0 ? z : 0.0);
    }
    return dsigmoid(logit);
}

inline double oracle_loss(const echelon::nn::ParamSet& m, std::span<const uint16_t> tokens,
                          std::span<const int> section_ids, int target) {
    double p = oracle_probability(m, tokens, section_ids);
    p = std::min(std::max(p, 1e-7), 1.0 - 1e-7);
    return target ? -std::log(p) : -std::log(1.0 - p);
}

// Flat parameter access across the fixed tensor order.
inline float get_param(echelon::nn::ParamSet& m, size_t flat) {
    for (auto& t : echelon::nn::tensor_refs(m)) {
        if (flat < t.data->size()) return (*t.data)[flat];
        flat -= t.data->size();
    }
    return 0.f;
}

inline void set_param(echelon::nn::ParamSet& m, size_t flat, float v) {
    for (auto& t : echelon::nn::tensor_refs(m)) {
        if (flat < t.data->size()) {
            (*t.data)[flat] = v;
            return;
        }
        flat -= t.data->size();
    }
}

// Smallest gap between the top two window activations over all filters, in
// double precision; finite differences need this gap to dominate the step so
// the argmax cannot flip.
inline double min_top2_gap(const echelon::nn::ParamSet& m, std::span<const uint16_t> tokens) {
    const auto& h = m.hyper;
    const int W = h.window, F = h.filters, D = h.embed_dim;
    const int L = static_cast<int>(tokens.size()) / W;
    double min_gap = 1e300;
    for (int f = 0; f < F; ++f) {
        double best = -1e300, second = -1e300;
        for (int l = 0; l < L; ++l) {
            double c = m.conv_b[f], g = m.gate_b[f];
            for (int t = 0; t < W; ++t) {
                const uint16_t tok = tokens[static_cast<size_t>(l) * W + t];
                for (int d = 0; d < D; ++d) {
                    const double e = m.embedding[static_cast<size_t>(tok) * D + d];
                    c += m.conv_w[(static_cast<size_t>(f) * W + t) * D + d] * e;
                    g += m.gate_w[(static_cast<size_t>(f) * W + t) * D + d] * e;
                }
            }
            const double act = c * dsigmoid(g);
            if (act > best) {
                second = best;
                best = act;
            } else if (act > second) {
                second = act;
            }
        }
        if (L > 1) min_gap = std::min(min_gap, best - second);
    }
    return min_gap;
}

inline std::vector<uint16_t> random_tokens(std::mt19937_64& rng, int n, bool with_pad = true) {
    std::uniform_int_distribution<int> dist(0, with_pad ? 256 : 255);
    std::vector<uint16_t> t(n);
    for (auto& v : t) v = static_cast<uint16_t>(dist(rng));
    return t;
}

}  // namespace testutil
