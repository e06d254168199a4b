#include "litho/layers.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "litho/rng.hpp"

namespace litho {

namespace {

void check_spp_input(const Tensor& input, const PyramidSpec& spec) {
    if (input.rank() != 3) {
        throw std::invalid_argument("spp: input must be CxHxW");
    }
    if (spec.levels.empty()) {
        throw std::invalid_argument("spp: pyramid needs at least one level");
    }
    for (int g : spec.levels) {
        if (g < 1) throw std::invalid_argument("spp: pyramid levels must be >= 1");
    }
    const int finest = spec.max_level();
    if (input.extent(1) < finest || input.extent(2) < finest) {
        throw std::invalid_argument(
            "spp: input " + std::to_string(input.extent(1)) + "x" +
            std::to_string(input.extent(2)) + " is smaller than the finest pyramid grid " +
            std::to_string(finest) + "x" + std::to_string(finest) +
            "; feed images whose feature maps keep H,W >= " + std::to_string(finest));
    }
}

}  // namespace

int PyramidSpec::max_level() const {
    return *std::max_element(levels.begin(), levels.end());
}

SppResult spp_forward_cached(const Tensor& input, const PyramidSpec& spec) {
    check_spp_input(input, spec);
    const int c = input.extent(0), h = input.extent(1), w = input.extent(2);
    const int bins = spec.total_bins();

    SppResult res{Tensor({c, bins}), {}};
    res.argmax.resize(static_cast<std::size_t>(c) * bins);
    const double* in = input.data();
    double* out = res.output.data();

    std::size_t oi = 0;
    for (int ch = 0; ch < c; ++ch) {
        const std::size_t plane = static_cast<std::size_t>(ch) * h * w;
        for (int g : spec.levels) {
            for (int i = 0; i < g; ++i) {
                const int r0 = (i * h) / g;
                const int r1 = std::min(h, ((i + 1) * h + g - 1) / g);
                for (int j = 0; j < g; ++j, ++oi) {
                    const int c0 = (j * w) / g;
                    const int c1 = std::min(w, ((j + 1) * w + g - 1) / g);
                    double best = in[plane + static_cast<std::size_t>(r0) * w + c0];
                    std::size_t best_idx = plane + static_cast<std::size_t>(r0) * w + c0;
                    for (int y = r0; y < r1; ++y) {
                        const std::size_t row = plane + static_cast<std::size_t>(y) * w;
                        for (int x = c0; x < c1; ++x) {
                            if (in[row + x] > best) {
                                best = in[row + x];
                                best_idx = row + x;
                            }
                        }
                    }
                    out[oi] = best;
                    res.argmax[oi] = best_idx;
                }
            }
        }
    }
    return res;
}

Tensor spp_forward(const Tensor& input, const PyramidSpec& spec) {
    return spp_forward_cached(input, spec).output;
}

Tensor spp_backward(const std::vector<std::size_t>& argmax,
                    const std::vector<int>& input_shape, const Tensor& grad_out) {
    if (argmax.size() != grad_out.size()) {
        throw std::invalid_argument("spp_backward: argmax map does not match grad_out");
    }
    Tensor grad_in(input_shape);
    // cells that win several bins accumulate every bin's gradient
    for (std::size_t i = 0; i < argmax.size(); ++i) {
        grad_in[argmax[i]] += grad_out[i];
    }
    return grad_in;
}

Tensor gap_forward(const Tensor& input) {
    if (input.rank() < 2) {
        throw std::invalid_argument("gap: input must have a channel axis plus data axes");
    }
    const int c = input.extent(0);
    const std::size_t per = input.size() / static_cast<std::size_t>(c);
    Tensor out({c});
    const double* in = input.data();
    for (int ch = 0; ch < c; ++ch) {
        double sum = 0.0;
        const double* p = in + static_cast<std::size_t>(ch) * per;
        for (std::size_t i = 0; i < per; ++i) sum += p[i];
        out[static_cast<std::size_t>(ch)] = sum / static_cast<double>(per);
    }
    return out;
}

Tensor gap_backward(const std::vector<int>& input_shape, const Tensor& grad_out) {
    Tensor grad_in(input_shape);
    const int c = input_shape[0];
    if (grad_out.size() != static_cast<std::size_t>(c)) {
        throw std::invalid_argument("gap_backward: grad_out length must equal channel count");
    }
    const std::size_t per = grad_in.size() / static_cast<std::size_t>(c);
    double* gi = grad_in.data();
    for (int ch = 0; ch < c; ++ch) {
        const double v = grad_out[static_cast<std::size_t>(ch)] / static_cast<double>(per);
        double* p = gi + static_cast<std::size_t>(ch) * per;
        for (std::size_t i = 0; i < per; ++i) p[i] = v;
    }
    return grad_in;
}

Tensor gap_over_spp(const Tensor& input, const PyramidSpec& spec) {
    return gap_forward(spp_forward(input, spec));
}

DropoutResult dropout_forward(const Tensor& input, double p, Mode mode,
                              std::mt19937_64& rng) {
    if (p < 0.0 || p >= 1.0) {
        throw std::invalid_argument("dropout: probability must be in [0, 1)");
    }
    DropoutResult res{input, Tensor(input.shape())};
    if (mode == Mode::Infer || p == 0.0) {
        res.mask.fill(1.0);
        return res;
    }
    const double keep_scale = 1.0 / (1.0 - p);
    for (std::size_t i = 0; i < input.size(); ++i) {
        if (unit_real(rng) < p) {
            res.mask[i] = 0.0;
            res.output[i] = 0.0;
        } else {
            res.mask[i] = keep_scale;
            res.output[i] = input[i] * keep_scale;
        }
    }
    return res;
}

const char* layer_kind_name(LayerKind kind) {
    switch (kind) {
        case LayerKind::Conv3x3: return "Conv3x3";
        case LayerKind::ReLU: return "ReLU";
        case LayerKind::MaxPool: return "MaxPool";
        case LayerKind::SPP: return "SPP";
        case LayerKind::GAP: return "GAP";
        case LayerKind::Dense: return "Dense";
        case LayerKind::Dropout: return "Dropout";
        case LayerKind::SoftmaxOutput: return "SoftmaxOutput";
    }
    return "?";
}

namespace {

Tensor he_normal(std::vector<int> shape, int fan_in, std::mt19937_64& rng) {
    Tensor t(std::move(shape));
    std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / static_cast<double>(fan_in)));
    for (std::size_t i = 0; i < t.size(); ++i) {
        t[i] = dist(rng);
    }
    return t;
}

}  // namespace

Layer make_conv3x3(std::string id, int in_channels, int out_channels,
                   std::mt19937_64& rng) {
    Layer l;
    l.kind = LayerKind::Conv3x3;
    l.id = std::move(id);
    l.weights = he_normal({out_channels, in_channels, 3, 3}, in_channels * 9, rng);
    l.bias = Tensor({out_channels});
    return l;
}

Layer make_dense(std::string id, int inputs, int outputs, std::mt19937_64& rng) {
    Layer l;
    l.kind = LayerKind::Dense;
    l.id = std::move(id);
    l.weights = he_normal({inputs, outputs}, inputs, rng);
    l.bias = Tensor({outputs});
    return l;
}

Layer make_plain(LayerKind kind, std::string id) {
    Layer l;
    l.kind = kind;
    l.id = std::move(id);
    return l;
}

Layer make_dropout(std::string id, double p) {
    if (p < 0.0 || p >= 1.0) {
        throw std::invalid_argument("dropout: probability must be in [0, 1)");
    }
    Layer l;
    l.kind = LayerKind::Dropout;
    l.id = std::move(id);
    l.drop_prob = p;
    return l;
}

Layer make_spp(std::string id, PyramidSpec spec) {
    Layer l;
    l.kind = LayerKind::SPP;
    l.id = std::move(id);
    l.pyramid = std::move(spec);
    return l;
}

Tensor layer_forward(const Layer& layer, const Tensor& input, Mode mode,
                     std::mt19937_64* dropout_rng, LayerCache* cache) {
    if (cache) {
        *cache = LayerCache{};
        cache->valid = true;
        cache->input_shape = input.shape();
    }
    switch (layer.kind) {
        case LayerKind::Conv3x3: {
            if (cache) cache->input = input;
            return conv2d(input, layer.weights, layer.bias, /*padding=*/1, /*stride=*/1);
        }
        case LayerKind::ReLU: {
            if (cache) cache->input = input;
            return relu(input);
        }
        case LayerKind::MaxPool: {
            MaxPoolResult r = maxpool2d(input);
            if (cache) cache->argmax = std::move(r.argmax);
            return std::move(r.output);
        }
        case LayerKind::SPP: {
            SppResult r = spp_forward_cached(input, layer.pyramid);
            if (cache) cache->argmax = std::move(r.argmax);
            return std::move(r.output);
        }
        case LayerKind::GAP:
            return gap_forward(input);
        case LayerKind::Dense: {
            // flattening happens here: the dense layer consumes whatever
            // shape the tail produced, in row-major order
            Tensor flat({static_cast<int>(input.size())}, input.buffer());
            if (cache) cache->input = flat;
            return matmul_affine(flat, layer.weights, layer.bias);
        }
        case LayerKind::Dropout: {
            if (mode == Mode::Train && !dropout_rng) {
                throw std::logic_error("dropout in Train mode needs an rng stream");
            }
            static std::mt19937_64 unused_rng;
            DropoutResult r = dropout_forward(input, layer.drop_prob, mode,
                                              dropout_rng ? *dropout_rng : unused_rng);
            if (cache) cache->mask = std::move(r.mask);
            return std::move(r.output);
        }
        case LayerKind::SoftmaxOutput: {
            Tensor probs = softmax(input);
            if (cache) cache->output = probs;
            return probs;
        }
    }
    throw std::logic_error("layer_forward: unknown layer kind");
}

LayerGrads layer_backward(const Layer& layer, const LayerCache& cache,
                          const Tensor& grad_out) {
    if (!cache.valid) {
        throw std::logic_error("layer_backward(" + layer.id +
                               "): no forward cache; run layer_forward first");
    }
    LayerGrads g;
    switch (layer.kind) {
        case LayerKind::Conv3x3: {
            Conv2dGrads cg = conv2d_backward(cache.input, layer.weights, grad_out, 1, 1);
            g.input = std::move(cg.input);
            g.weights = std::move(cg.weights);
            g.bias = std::move(cg.bias);
            return g;
        }
        case LayerKind::ReLU:
            g.input = relu_backward(cache.input, grad_out);
            return g;
        case LayerKind::MaxPool:
            g.input = maxpool2d_backward(cache.argmax, cache.input_shape, grad_out);
            return g;
        case LayerKind::SPP:
            g.input = spp_backward(cache.argmax, cache.input_shape, grad_out);
            return g;
        case LayerKind::GAP:
            g.input = gap_backward(cache.input_shape, grad_out);
            return g;
        case LayerKind::Dense: {
            AffineGrads ag = matmul_affine_backward(cache.input, layer.weights, grad_out);
            g.input = Tensor(cache.input_shape, std::move(ag.input.buffer()));
            g.weights = std::move(ag.weights);
            g.bias = std::move(ag.bias);
            return g;
        }
        case LayerKind::Dropout: {
            require_same_shape(cache.mask, grad_out, "dropout backward");
            Tensor gi = grad_out;
            for (std::size_t i = 0; i < gi.size(); ++i) {
                gi[i] *= cache.mask[i];
            }
            g.input = std::move(gi);
            return g;
        }
        case LayerKind::SoftmaxOutput: {
            // dL/dz_i = y_i * (dL/dy_i - sum_j dL/dy_j * y_j)
            const Tensor& y = cache.output;
            require_same_shape(y, grad_out, "softmax backward");
            double dot = 0.0;
            for (std::size_t i = 0; i < y.size(); ++i) {
                dot += grad_out[i] * y[i];
            }
            Tensor gi = zeros_like(y);
            for (std::size_t i = 0; i < y.size(); ++i) {
                gi[i] = y[i] * (grad_out[i] - dot);
            }
            g.input = std::move(gi);
            return g;
        }
    }
    throw std::logic_error("layer_backward: unknown layer kind");
}

}  // namespace litho
