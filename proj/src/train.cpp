#include "litho/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include "litho/rng.hpp"

namespace litho {

namespace {

constexpr double kLogClamp = 1e-12;

void check_loss_args(const Tensor& predicted, const Tensor& target,
                     const std::vector<double>& class_weights) {
    if (predicted.rank() != 2 || target.rank() != 2) {
        throw std::invalid_argument("cross_entropy: predicted and target must be NxC");
    }
    require_same_shape(predicted, target, "cross_entropy");
    const int classes = predicted.extent(1);
    if (!class_weights.empty() && static_cast<int>(class_weights.size()) != classes) {
        throw std::invalid_argument("cross_entropy: class weight count must equal C");
    }
    for (int n = 0; n < target.extent(0); ++n) {
        int ones = 0;
        for (int c = 0; c < classes; ++c) {
            const double y = target[static_cast<std::size_t>(n) * classes + c];
            if (y == 1.0) {
                ++ones;
            } else if (y != 0.0) {
                throw std::invalid_argument("cross_entropy: target row " + std::to_string(n) +
                                            " is not one-hot");
            }
        }
        if (ones != 1) {
            throw std::invalid_argument("cross_entropy: target row " + std::to_string(n) +
                                        " is not one-hot");
        }
    }
}

int argmax_class(const double* probs, int classes) {
    int best = 0;
    for (int c = 1; c < classes; ++c) {
        if (probs[c] > probs[best]) best = c;
    }
    return best;
}

}  // namespace

void TrainConfig::validate(int classes) const {
    if (learning_rate <= 0) throw std::invalid_argument("learning rate must be > 0");
    if (beta1 <= 0 || beta1 >= 1 || beta2 <= 0 || beta2 >= 1) {
        throw std::invalid_argument("adam betas must lie in (0, 1)");
    }
    if (epsilon <= 0) throw std::invalid_argument("adam epsilon must be > 0");
    if (batch_size < 1) throw std::invalid_argument("batch size must be >= 1");
    if (max_epochs < 1) throw std::invalid_argument("max epochs must be >= 1");
    if (patience < 1) throw std::invalid_argument("patience must be >= 1");
    if (!class_weights.empty()) {
        if (static_cast<int>(class_weights.size()) != classes) {
            throw std::invalid_argument("class weight count must equal the class count");
        }
        for (double w : class_weights) {
            if (w <= 0) throw std::invalid_argument("class weights must be > 0");
        }
    }
}

double weighted_cross_entropy(const Tensor& predicted, const Tensor& target,
                              const std::vector<double>& class_weights) {
    check_loss_args(predicted, target, class_weights);
    const int n = predicted.extent(0), classes = predicted.extent(1);
    double sum = 0.0;
    for (int i = 0; i < n; ++i) {
        for (int c = 0; c < classes; ++c) {
            const std::size_t idx = static_cast<std::size_t>(i) * classes + c;
            if (target[idx] == 1.0) {
                const double w = class_weights.empty() ? 1.0 : class_weights[c];
                sum += w * -std::log(std::max(predicted[idx], kLogClamp));
            }
        }
    }
    return sum / static_cast<double>(n);
}

Tensor weighted_cross_entropy_grad(const Tensor& predicted, const Tensor& target,
                                   const std::vector<double>& class_weights) {
    check_loss_args(predicted, target, class_weights);
    const int n = predicted.extent(0), classes = predicted.extent(1);
    Tensor grad = zeros_like(predicted);
    for (int i = 0; i < n; ++i) {
        for (int c = 0; c < classes; ++c) {
            const std::size_t idx = static_cast<std::size_t>(i) * classes + c;
            if (target[idx] == 1.0) {
                const double w = class_weights.empty() ? 1.0 : class_weights[c];
                grad[idx] = -w / (std::max(predicted[idx], kLogClamp) * n);
            }
        }
    }
    return grad;
}

std::vector<double> class_weights_from_counts(const std::vector<long long>& counts) {
    if (counts.empty()) {
        throw std::invalid_argument("class_weights_from_counts: no counts");
    }
    long long mx = 0;
    for (long long c : counts) {
        if (c <= 0) {
            throw std::invalid_argument("class_weights_from_counts: counts must be positive");
        }
        mx = std::max(mx, c);
    }
    std::vector<double> w(counts.size());
    for (std::size_t i = 0; i < counts.size(); ++i) {
        w[i] = static_cast<double>(mx) / static_cast<double>(counts[i]);
    }
    return w;
}

AdamState make_adam_state(const Model& model) {
    AdamState s;
    s.weights.resize(model.layers.size());
    s.bias.resize(model.layers.size());
    for (std::size_t i = 0; i < model.layers.size(); ++i) {
        if (model.layers[i].has_params()) {
            s.weights[i] = {zeros_like(model.layers[i].weights),
                            zeros_like(model.layers[i].weights)};
            s.bias[i] = {zeros_like(model.layers[i].bias), zeros_like(model.layers[i].bias)};
        }
    }
    return s;
}

namespace {

void adam_update_tensor(Tensor& param, const Tensor& grad, AdamState::Moments& mom,
                        const TrainConfig& cfg, double bias_corr1, double bias_corr2) {
    require_same_shape(param, grad, "adam_step");
    for (std::size_t i = 0; i < param.size(); ++i) {
        const double g = grad[i];
        mom.m[i] = cfg.beta1 * mom.m[i] + (1.0 - cfg.beta1) * g;
        mom.v[i] = cfg.beta2 * mom.v[i] + (1.0 - cfg.beta2) * g * g;
        const double mhat = mom.m[i] / bias_corr1;
        const double vhat = mom.v[i] / bias_corr2;
        param[i] -= cfg.learning_rate * mhat / (std::sqrt(vhat) + cfg.epsilon);
    }
}

}  // namespace

void adam_step(Model& model, const ModelGrads& grads, AdamState& state,
               const TrainConfig& cfg) {
    if (grads.weights.size() != model.layers.size() ||
        state.weights.size() != model.layers.size()) {
        throw std::invalid_argument("adam_step: grads/state do not match the model");
    }
    state.step += 1;
    const double bias_corr1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
    const double bias_corr2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
    for (std::size_t i = 0; i < model.layers.size(); ++i) {
        if (!model.layers[i].has_params()) continue;
        adam_update_tensor(model.layers[i].weights, grads.weights[i], state.weights[i],
                           cfg, bias_corr1, bias_corr2);
        adam_update_tensor(model.layers[i].bias, grads.bias[i], state.bias[i],
                           cfg, bias_corr1, bias_corr2);
    }
}

namespace {

struct EvalPass {
    double loss = 0;
    double acc = 0;
};

EvalPass run_validation(const Model& model, const std::vector<Sample>& samples,
                        const std::vector<double>& weights) {
    EvalPass out;
    const int classes = model.spec.classes;
    long long correct = 0;
    for (const Sample& s : samples) {
        const Tensor probs = model_forward(model, s.image, Mode::Infer, nullptr, nullptr);
        const double w = weights.empty() ? 1.0 : weights[static_cast<std::size_t>(s.label)];
        out.loss += w * -std::log(std::max(probs[static_cast<std::size_t>(s.label)], kLogClamp));
        if (argmax_class(probs.data(), classes) == s.label) ++correct;
    }
    out.loss /= static_cast<double>(samples.size());
    out.acc = static_cast<double>(correct) / static_cast<double>(samples.size());
    return out;
}

}  // namespace

TrainResult train_model(Model& model, const std::vector<Sample>& train_set,
                        const std::vector<Sample>& val_set, const TrainConfig& cfg) {
    if (train_set.empty() || val_set.empty()) {
        throw std::runtime_error("train_model: train and validation sets must be non-empty");
    }
    cfg.validate(model.spec.classes);
    const int classes = model.spec.classes;
    for (const Sample& s : train_set) {
        if (s.label < 0 || s.label >= classes) {
            throw std::runtime_error("train_model: label out of range");
        }
    }

    std::mt19937_64 shuffle_rng(mix_seed(cfg.seed, 0x5u));
    std::mt19937_64 dropout_rng(mix_seed(cfg.seed, 0xdu));

    AdamState adam = make_adam_state(model);
    ModelGrads grads = zero_grads(model);
    std::vector<LayerCache> caches;

    std::vector<std::size_t> order(train_set.size());
    std::iota(order.begin(), order.end(), 0);

    TrainResult result;
    double best_val = 0;
    int epochs_without_improvement = 0;

    for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), shuffle_rng);

        double train_loss_sum = 0;
        long long train_correct = 0;

        for (std::size_t start = 0; start < order.size();
             start += static_cast<std::size_t>(cfg.batch_size)) {
            const std::size_t stop =
                std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
            const double batch_n = static_cast<double>(stop - start);

            for (auto& gw : grads.weights) gw.fill(0.0);
            for (auto& gb : grads.bias) gb.fill(0.0);

            // per-sample accumulation: images may differ in size, so stacked
            // batches are not possible; the summed gradients are identical
            for (std::size_t k = start; k < stop; ++k) {
                const Sample& s = train_set[order[k]];
                const Tensor probs = model_forward(model, s.image, Mode::Train,
                                                   &dropout_rng, &caches);
                const double w = cfg.class_weights.empty()
                                     ? 1.0
                                     : cfg.class_weights[static_cast<std::size_t>(s.label)];
                const double p = std::max(probs[static_cast<std::size_t>(s.label)], kLogClamp);
                train_loss_sum += w * -std::log(p);
                if (argmax_class(probs.data(), classes) == s.label) ++train_correct;

                Tensor grad_probs({classes});
                grad_probs[static_cast<std::size_t>(s.label)] = -w / (p * batch_n);
                model_backward(model, caches, grad_probs, grads);
            }
            adam_step(model, grads, adam, cfg);
        }

        const EvalPass val = run_validation(model, val_set, cfg.class_weights);
        EpochStats stats;
        stats.epoch = epoch;
        stats.train_loss = train_loss_sum / static_cast<double>(train_set.size());
        stats.train_acc =
            static_cast<double>(train_correct) / static_cast<double>(train_set.size());
        stats.val_loss = val.loss;
        stats.val_acc = val.acc;
        result.history.push_back(stats);

        if (result.best_epoch == 0 || val.loss < best_val) {
            best_val = val.loss;
            result.best_epoch = epoch;
            result.best_params = extract_params(model);
            epochs_without_improvement = 0;
        } else if (++epochs_without_improvement >= cfg.patience) {
            break;
        }
    }

    apply_params(model, result.best_params);
    return result;
}

void write_history_csv(const std::vector<EpochStats>& history, const std::string& path) {
    std::ofstream out(path);
    if (!out) {
        throw std::runtime_error("cannot open history file for writing: " + path);
    }
    out << "epoch,train_loss,val_loss,train_acc,val_acc\n";
    char line[160];
    for (const EpochStats& e : history) {
        std::snprintf(line, sizeof(line), "%d,%.6f,%.6f,%.6f,%.6f\n", e.epoch, e.train_loss,
                      e.val_loss, e.train_acc, e.val_acc);
        out << line;
    }
}

}  // namespace litho
