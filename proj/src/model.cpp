#include "litho/model.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "json.hpp"

namespace litho {

using nlohmann::json;

static_assert(std::endian::native == std::endian::little,
              "checkpoint blobs are little-endian; big-endian hosts need a byte swap");

ModelVariant variant_from_int(int n) {
    if (n < 1 || n > 4) {
        throw std::invalid_argument("model variant must be 1..4, got " + std::to_string(n));
    }
    return static_cast<ModelVariant>(n);
}

int variant_to_int(ModelVariant v) {
    return static_cast<int>(v);
}

const char* variant_name(ModelVariant v) {
    switch (v) {
        case ModelVariant::Model1: return "Model1";
        case ModelVariant::Model2: return "Model2";
        case ModelVariant::Model3: return "Model3";
        case ModelVariant::Model4: return "Model4";
    }
    return "?";
}

ModelVariant variant_from_name(const std::string& name) {
    for (int n = 1; n <= 4; ++n) {
        if (name == variant_name(static_cast<ModelVariant>(n))) {
            return static_cast<ModelVariant>(n);
        }
    }
    throw std::invalid_argument("unknown model variant \"" + name + "\"");
}

Model build_model(ModelVariant variant, std::uint64_t seed) {
    Model m;
    m.spec.variant = variant;
    m.init_seed = seed;
    std::mt19937_64 rng(seed);

    const auto& f = m.spec.conv_filters;
    m.layers.push_back(make_conv3x3("conv1", 1, f[0], rng));
    m.layers.push_back(make_plain(LayerKind::ReLU, "relu1"));
    m.layers.push_back(make_plain(LayerKind::MaxPool, "pool1"));
    m.layers.push_back(make_conv3x3("conv2", f[0], f[1], rng));
    m.layers.push_back(make_plain(LayerKind::ReLU, "relu2"));
    m.layers.push_back(make_plain(LayerKind::MaxPool, "pool2"));
    m.layers.push_back(make_conv3x3("conv3", f[1], f[2], rng));
    m.layers.push_back(make_plain(LayerKind::ReLU, "relu3"));

    int dense_inputs = 0;
    switch (variant) {
        case ModelVariant::Model1: {
            m.layers.push_back(make_plain(LayerKind::MaxPool, "pool3"));
            const int side = m.spec.fixed_input_extent() / 8;  // three 2x2 pools
            dense_inputs = f[2] * side * side;
            break;
        }
        case ModelVariant::Model2:
            m.layers.push_back(make_spp("spp", m.spec.pyramid));
            dense_inputs = f[2] * m.spec.pyramid.total_bins();
            break;
        case ModelVariant::Model3:
            m.layers.push_back(make_plain(LayerKind::GAP, "gap"));
            dense_inputs = f[2];
            break;
        case ModelVariant::Model4:
            m.layers.push_back(make_spp("spp", m.spec.pyramid));
            m.layers.push_back(make_plain(LayerKind::GAP, "gap"));
            dense_inputs = f[2];
            break;
    }

    m.layers.push_back(make_dense("fc1", dense_inputs, m.spec.dense_width, rng));
    m.layers.push_back(make_plain(LayerKind::ReLU, "relu4"));
    m.layers.push_back(make_dropout("drop", m.spec.drop_prob));
    m.layers.push_back(make_dense("fc2", m.spec.dense_width, m.spec.classes, rng));
    m.layers.push_back(make_plain(LayerKind::SoftmaxOutput, "softmax"));
    return m;
}

ParamSet extract_params(const Model& model) {
    ParamSet p;
    for (const Layer& l : model.layers) {
        if (l.has_params()) {
            p.entries.push_back({l.id, l.weights, l.bias});
        }
    }
    return p;
}

void apply_params(Model& model, const ParamSet& params) {
    std::size_t next = 0;
    for (Layer& l : model.layers) {
        if (!l.has_params()) continue;
        if (next >= params.entries.size()) {
            throw std::invalid_argument("apply_params: parameter set has too few entries");
        }
        const ParamSet::Entry& e = params.entries[next++];
        if (e.id != l.id || !e.weights.same_shape(l.weights) || !e.bias.same_shape(l.bias)) {
            throw std::invalid_argument("apply_params: entry \"" + e.id +
                                        "\" does not match layer \"" + l.id + "\"");
        }
        l.weights = e.weights;
        l.bias = e.bias;
    }
    if (next != params.entries.size()) {
        throw std::invalid_argument("apply_params: parameter set has extra entries");
    }
}

long long count_params(const ParamSet& params) {
    long long n = 0;
    for (const auto& e : params.entries) {
        n += static_cast<long long>(e.weights.size()) + static_cast<long long>(e.bias.size());
    }
    return n;
}

long long count_params(const Model& model) {
    return count_params(extract_params(model));
}

ModelGrads zero_grads(const Model& model) {
    ModelGrads g;
    g.weights.resize(model.layers.size());
    g.bias.resize(model.layers.size());
    for (std::size_t i = 0; i < model.layers.size(); ++i) {
        if (model.layers[i].has_params()) {
            g.weights[i] = zeros_like(model.layers[i].weights);
            g.bias[i] = zeros_like(model.layers[i].bias);
        }
    }
    return g;
}

namespace {

void check_model_input(const ModelSpec& spec, const Tensor& image) {
    if (image.rank() != 3 || image.extent(0) != 1) {
        throw std::invalid_argument("model input must be a 1xHxW grayscale tensor");
    }
    const int h = image.extent(1), w = image.extent(2);
    if (spec.fixed_input()) {
        if (h != spec.fixed_input_extent() || w != spec.fixed_input_extent()) {
            throw std::invalid_argument(
                variant_name(spec.variant) + std::string(" requires 256x256 inputs, got ") +
                std::to_string(h) + "x" + std::to_string(w));
        }
    } else if (h < spec.min_input_extent() || w < spec.min_input_extent()) {
        throw std::invalid_argument(
            variant_name(spec.variant) + std::string(" needs H,W >= ") +
            std::to_string(spec.min_input_extent()) + ", got " + std::to_string(h) + "x" +
            std::to_string(w));
    }
}

}  // namespace

Tensor model_forward(const Model& model, const Tensor& image, Mode mode,
                     std::mt19937_64* dropout_rng,
                     std::vector<LayerCache>* caches) {
    check_model_input(model.spec, image);
    if (caches) {
        caches->resize(model.layers.size());
    }
    Tensor x = image;
    for (std::size_t i = 0; i < model.layers.size(); ++i) {
        x = layer_forward(model.layers[i], x, mode, dropout_rng,
                          caches ? &(*caches)[i] : nullptr);
    }
    return x;
}

Tensor model_backward(const Model& model, const std::vector<LayerCache>& caches,
                      const Tensor& grad_probs, ModelGrads& grads) {
    if (caches.size() != model.layers.size()) {
        throw std::logic_error("model_backward: cache list does not match the layer stack");
    }
    Tensor g = grad_probs;
    for (std::size_t i = model.layers.size(); i-- > 0;) {
        LayerGrads lg = layer_backward(model.layers[i], caches[i], g);
        if (model.layers[i].has_params()) {
            for (std::size_t j = 0; j < lg.weights.size(); ++j) {
                grads.weights[i][j] += lg.weights[j];
            }
            for (std::size_t j = 0; j < lg.bias.size(); ++j) {
                grads.bias[i][j] += lg.bias[j];
            }
        }
        g = std::move(lg.input);
    }
    return g;
}

void save_checkpoint(const Model& model, const std::string& path) {
    json header;
    header["format_version"] = 1;
    header["kind"] = "litho-checkpoint";
    header["variant"] = variant_name(model.spec.variant);
    header["init_seed"] = model.init_seed;
    header["classes"] = model.spec.classes;
    json layers = json::array();
    for (const Layer& l : model.layers) {
        if (!l.has_params()) continue;
        layers.push_back({{"id", l.id},
                          {"weights", l.weights.shape()},
                          {"bias", l.bias.shape()}});
    }
    header["layers"] = layers;

    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw std::runtime_error("cannot open checkpoint for writing: " + path);
    }
    out << header.dump() << '\n';
    for (const Layer& l : model.layers) {
        if (!l.has_params()) continue;
        out.write(reinterpret_cast<const char*>(l.weights.data()),
                  static_cast<std::streamsize>(l.weights.size() * sizeof(double)));
        out.write(reinterpret_cast<const char*>(l.bias.data()),
                  static_cast<std::streamsize>(l.bias.size() * sizeof(double)));
    }
    if (!out) {
        throw std::runtime_error("short write while saving checkpoint: " + path);
    }
}

Model load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw std::runtime_error("cannot open checkpoint: " + path);
    }
    std::string header_line;
    if (!std::getline(in, header_line)) {
        throw std::runtime_error("checkpoint " + path + ": missing header line");
    }
    json header;
    try {
        header = json::parse(header_line);
    } catch (const json::parse_error& e) {
        throw std::runtime_error("checkpoint " + path + ": corrupt header: " + e.what());
    }

    auto require = [&](const char* field) -> const json& {
        if (!header.contains(field)) {
            throw std::runtime_error("checkpoint " + path + ": header missing field \"" +
                                     field + "\"");
        }
        return header.at(field);
    };
    if (require("format_version").get<int>() != 1) {
        throw std::runtime_error("checkpoint " + path + ": unsupported format_version");
    }
    ModelVariant variant;
    try {
        variant = variant_from_name(require("variant").get<std::string>());
    } catch (const std::invalid_argument& e) {
        throw std::runtime_error("checkpoint " + path + ": field \"variant\": " + e.what());
    }
    const auto seed = require("init_seed").get<std::uint64_t>();

    Model model = build_model(variant, seed);
    const json& layers = require("layers");
    std::size_t li = 0;
    for (Layer& l : model.layers) {
        if (!l.has_params()) continue;
        if (li >= layers.size()) {
            throw std::runtime_error("checkpoint " + path + ": field \"layers\" too short");
        }
        const json& e = layers[li++];
        if (e.at("id").get<std::string>() != l.id ||
            e.at("weights").get<std::vector<int>>() != l.weights.shape() ||
            e.at("bias").get<std::vector<int>>() != l.bias.shape()) {
            throw std::runtime_error("checkpoint " + path + ": layer \"" + l.id +
                                     "\" shape does not match the " + variant_name(variant) +
                                     " topology");
        }
        in.read(reinterpret_cast<char*>(l.weights.data()),
                static_cast<std::streamsize>(l.weights.size() * sizeof(double)));
        in.read(reinterpret_cast<char*>(l.bias.data()),
                static_cast<std::streamsize>(l.bias.size() * sizeof(double)));
        if (!in) {
            throw std::runtime_error("checkpoint " + path +
                                     ": parameter blob shorter than the declared shapes (layer \"" +
                                     l.id + "\")");
        }
    }
    if (li != layers.size()) {
        throw std::runtime_error("checkpoint " + path + ": field \"layers\" has extra entries");
    }
    if (in.peek() != std::ifstream::traits_type::eof()) {
        throw std::runtime_error("checkpoint " + path +
                                 ": trailing bytes after the parameter blob");
    }
    return model;
}

}  // namespace litho
