#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace echelon::nn {

// Byte vocabulary 0..255 plus a distinguishable padding token.
inline constexpr int kPadToken = 256;
inline constexpr int kVocabSize = 257;

struct Hyper {
    int window = 64;    // W: convolution filter width, also the stride
    int filters = 32;   // F
    int embed_dim = 8;  // D
    int hidden = 64;    // H: width of the fully connected hidden layer
    bool semantic_aware = false;
    int section_vocab_size = 0;  // |s_bias|; scales section-id features to [0,1]

    int fc_inputs() const { return semantic_aware ? 2 * filters : filters; }
    bool operator==(const Hyper&) const = default;
};

// All learnable parameters of the gated-conv architecture. Doubles as the
// gradient container (same shapes).
struct ParamSet {
    Hyper hyper;
    std::vector<float> embedding;        // kVocabSize x D
    std::vector<float> conv_w, gate_w;   // F x W x D
    std::vector<float> conv_b, gate_b;   // F
    std::vector<float> fc_w;             // H x fc_inputs
    std::vector<float> fc_b;             // H
    std::vector<float> out_w;            // H
    std::vector<float> out_b;            // 1

    static ParamSet zeros(const Hyper& h);
    size_t param_count() const;
    bool all_finite() const;
    bool operator==(const ParamSet&) const = default;
};

struct TensorRef {
    const char* name;
    std::vector<float>* data;
};
// Fixed enumeration order; serialization and Adam rely on it.
std::vector<TensorRef> tensor_refs(ParamSet& p);

// Seeded uniform init in [-1/sqrt(fan_in), +1/sqrt(fan_in)].
ParamSet init_model(const Hyper& h, uint64_t seed);

struct ForwardRecord {
    std::vector<float> pooled;        // F, gated activation surviving max pool
    std::vector<int> argmax_window;   // F, first window attaining the max
    std::vector<float> section_features;  // F when semantic_aware, else empty
    float probability = 0.f;
};

// tokens length must be a positive multiple of W; section_ids (one id per
// window) are required iff the model is semantic-aware.
ForwardRecord forward(const ParamSet& model, std::span<const uint16_t> tokens,
                      std::span<const int> section_ids = {});

// Binary cross entropy with the probability clamped to [1e-7, 1-1e-7].
float bce_loss(float probability, int target);

// Accumulates exact gradients into `grad` (caller zeros it) and returns the
// sample loss. Max pooling routes gradient only to each filter's argmax window.
float backward(const ParamSet& model, std::span<const uint16_t> tokens,
               std::span<const int> section_ids, int target, ParamSet& grad);

struct AdamState {
    ParamSet m, v;
    long step = 0;
    static AdamState zeros(const Hyper& h);
};

void adam_step(ParamSet& model, const ParamSet& grad, AdamState& state, float lr,
               float beta1 = 0.9f, float beta2 = 0.999f, float eps = 1e-8f);

struct TrainSample {
    std::string id;
    std::vector<uint16_t> tokens;
    std::vector<int> section_ids;  // empty unless semantic-aware
    int label = 0;                 // 1 = malware
};

struct TrainConfig {
    int batch_size = 64;
    int max_epochs = 200;
    int patience = 5;
    float lr = 1e-3f;
    uint64_t seed = 0;
};

struct TrainHistory {
    std::vector<float> train_loss;  // per epoch, mean over batches
    std::vector<float> val_loss;    // per epoch
    int best_epoch = -1;
};

// Mini-batch training with seeded shuffling and early stopping on validation
// loss; leaves `model` at the best-validation-epoch parameters.
// Throws DegenerateDataset when the training set holds a single class.
TrainHistory train(ParamSet& model, std::span<const TrainSample> train_set,
                   std::span<const TrainSample> val_set, const TrainConfig& cfg);

float score(const ParamSet& model, const TrainSample& s);

// Scores every sample; parallel across samples, deterministic output order.
std::vector<float> score_dataset(const ParamSet& model, std::span<const TrainSample> set);

// Widens bytes to tokens and pads with kPadToken to a positive multiple of W.
std::vector<uint16_t> tokens_from_bytes(std::span<const uint8_t> bytes, int window);

}  // namespace echelon::nn
