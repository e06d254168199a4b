#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "litho/kernels.hpp"
#include "litho/tensor.hpp"

namespace litho {

/// Pyramid grid sizes for spatial pyramid pooling. The default three-level
/// pyramid [1, 2, 4] yields 1 + 4 + 16 = 21 bins per channel.
struct PyramidSpec {
    std::vector<int> levels{1, 2, 4};

    int total_bins() const {
        int n = 0;
        for (int g : levels) n += g * g;
        return n;
    }
    int max_level() const;
};

struct SppResult {
    Tensor output;  // shape C x total_bins, bins level-major within a channel
    std::vector<std::size_t> argmax;  // winning flat input index per bin
};

/// Max-pools each channel over every pyramid grid. Bin (i,j) of an g x g
/// level covers rows [floor(i*H/g), ceil((i+1)*H/g)) and the analogous
/// columns, so the output length depends only on the channel count and the
/// spec, never on H or W.
SppResult spp_forward_cached(const Tensor& input, const PyramidSpec& spec);
Tensor spp_forward(const Tensor& input, const PyramidSpec& spec);

Tensor spp_backward(const std::vector<std::size_t>& argmax,
                    const std::vector<int>& input_shape, const Tensor& grad_out);

/// Mean over all axes but the first; CxHxW -> C, CxB -> C.
Tensor gap_forward(const Tensor& input);
Tensor gap_backward(const std::vector<int>& input_shape, const Tensor& grad_out);

/// SPP followed by a per-channel average of the bins: the parameter-free
/// multiscale head that keeps the output at C values.
Tensor gap_over_spp(const Tensor& input, const PyramidSpec& spec);

enum class Mode { Train, Infer };

struct DropoutResult {
    Tensor output;
    Tensor mask;  // 0 for dropped, 1/(1-p) for kept
};

/// Inverted dropout: in Train mode each element is zeroed with probability p
/// and survivors are scaled by 1/(1-p); in Infer mode the identity.
DropoutResult dropout_forward(const Tensor& input, double p, Mode mode,
                              std::mt19937_64& rng);

enum class LayerKind {
    Conv3x3,
    ReLU,
    MaxPool,
    SPP,
    GAP,
    Dense,
    Dropout,
    SoftmaxOutput,
};

const char* layer_kind_name(LayerKind kind);

/// One stage of a model stack. Only Conv3x3 and Dense carry parameters.
struct Layer {
    LayerKind kind{};
    std::string id;
    Tensor weights;
    Tensor bias;
    double drop_prob = 0.0;  // Dropout
    PyramidSpec pyramid;     // SPP

    bool has_params() const {
        return kind == LayerKind::Conv3x3 || kind == LayerKind::Dense;
    }
};

Layer make_conv3x3(std::string id, int in_channels, int out_channels,
                   std::mt19937_64& rng);
Layer make_dense(std::string id, int inputs, int outputs, std::mt19937_64& rng);
Layer make_plain(LayerKind kind, std::string id);
Layer make_dropout(std::string id, double p);
Layer make_spp(std::string id, PyramidSpec spec);

/// Forward state consumed by layer_backward.
struct LayerCache {
    bool valid = false;
    Tensor input;                     // Conv3x3 / Dense / ReLU / SoftmaxOutput input
    std::vector<int> input_shape;     // pooling and GAP geometry
    std::vector<std::size_t> argmax;  // MaxPool / SPP winners
    Tensor mask;                      // Dropout
    Tensor output;                    // SoftmaxOutput probabilities
};

struct LayerGrads {
    Tensor input;
    Tensor weights;  // empty for parameter-free layers
    Tensor bias;
};

/// Runs one layer. `cache` may be null when no backward pass will follow;
/// `dropout_rng` is only consulted by Dropout layers in Train mode.
Tensor layer_forward(const Layer& layer, const Tensor& input, Mode mode,
                     std::mt19937_64* dropout_rng, LayerCache* cache);

/// Consumes the forward cache; throws std::logic_error when called without
/// a matching forward.
LayerGrads layer_backward(const Layer& layer, const LayerCache& cache,
                          const Tensor& grad_out);

}  // namespace litho
