#pragma once

#include <array>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "litho/layers.hpp"

namespace litho {

/// The four topologies. They share three Conv3x3+ReLU stages (64, 48, 32
/// filters) and a Dense(200)+ReLU+Dropout+Dense(classes)+Softmax head and
/// differ only in what sits between the last convolution and the head:
/// Model1 pools and flattens (fixed 256x256 inputs), Model2 uses SPP,
/// Model3 uses GAP and Model4 averages the SPP bins per channel.
enum class ModelVariant { Model1 = 1, Model2 = 2, Model3 = 3, Model4 = 4 };

ModelVariant variant_from_int(int n);
int variant_to_int(ModelVariant v);
const char* variant_name(ModelVariant v);
ModelVariant variant_from_name(const std::string& name);

struct ModelSpec {
    ModelVariant variant = ModelVariant::Model1;
    std::array<int, 3> conv_filters{64, 48, 32};
    int dense_width = 200;
    int classes = 3;
    double drop_prob = 0.5;
    PyramidSpec pyramid{};

    bool fixed_input() const { return variant == ModelVariant::Model1; }
    int fixed_input_extent() const { return 256; }
    int min_input_extent() const { return fixed_input() ? 256 : 32; }
};

struct Model {
    ModelSpec spec;
    std::uint64_t init_seed = 0;
    std::vector<Layer> layers;
};

/// Builds a variant with He-initialized weights and zero biases drawn from
/// the given seed. Same seed, same parameters.
Model build_model(ModelVariant variant, std::uint64_t seed);

/// The trainable set, in layer order, weights before bias.
struct ParamSet {
    struct Entry {
        std::string id;
        Tensor weights;
        Tensor bias;
    };
    std::vector<Entry> entries;
};

ParamSet extract_params(const Model& model);
void apply_params(Model& model, const ParamSet& params);
long long count_params(const ParamSet& params);
long long count_params(const Model& model);

/// Per-layer gradient accumulators mirroring the model's parameters.
struct ModelGrads {
    std::vector<Tensor> weights;  // empty Tensor for parameter-free layers
    std::vector<Tensor> bias;
};

ModelGrads zero_grads(const Model& model);

/// Runs the full stack on one CxHxW image and returns the class
/// probabilities. `caches` must be provided when a backward pass follows.
Tensor model_forward(const Model& model, const Tensor& image, Mode mode,
                     std::mt19937_64* dropout_rng,
                     std::vector<LayerCache>* caches);

/// Backpropagates dL/dprobabilities through the cached stack, accumulating
/// parameter gradients into `grads`; returns dL/dimage.
Tensor model_backward(const Model& model, const std::vector<LayerCache>& caches,
                      const Tensor& grad_probs, ModelGrads& grads);

/// Checkpoint file: one JSON header line (format version, variant, seed and
/// layer shapes) followed by the raw little-endian doubles of every
/// parameter tensor in layer order, weights before bias.
void save_checkpoint(const Model& model, const std::string& path);
Model load_checkpoint(const std::string& path);

}  // namespace litho
