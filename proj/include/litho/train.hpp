#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "litho/model.hpp"

namespace litho {

struct TrainConfig {
    double learning_rate = 0.001;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    int batch_size = 32;
    int max_epochs = 200;
    int patience = 10;
    std::vector<double> class_weights;  // empty means all ones
    std::uint64_t seed = 0;

    void validate(int classes) const;
};

/// Mean weighted negative log likelihood over a batch:
///   loss = -(1/N) sum_n sum_c w_c * y_{n,c} * log(max(p_{n,c}, 1e-12))
/// `predicted` and `target` are NxC; each target row must be one-hot.
/// With unit weights this is the plain cross-entropy.
double weighted_cross_entropy(const Tensor& predicted, const Tensor& target,
                              const std::vector<double>& class_weights);

/// dL/dpredicted for the loss above (ignoring the clamp's dead zone).
Tensor weighted_cross_entropy_grad(const Tensor& predicted, const Tensor& target,
                                   const std::vector<double>& class_weights);

/// w_c = max(counts) / counts_c, so the rarest class gets the largest
/// gradient multiplier and the most frequent class gets exactly 1.
std::vector<double> class_weights_from_counts(const std::vector<long long>& counts);

/// First and second moment accumulators per parameter tensor.
struct AdamState {
    struct Moments {
        Tensor m, v;
    };
    std::vector<Moments> weights, bias;  // indexed like Model::layers
    long long step = 0;
};

AdamState make_adam_state(const Model& model);

/// One bias-corrected Adam update applied to the model parameters in place.
void adam_step(Model& model, const ModelGrads& grads, AdamState& state,
               const TrainConfig& cfg);

struct Sample {
    Tensor image;  // 1xHxW, already preprocessed
    int label = 0;
};

struct EpochStats {
    int epoch = 0;  // 1-based
    double train_loss = 0, val_loss = 0;
    double train_acc = 0, val_acc = 0;
};

struct TrainResult {
    ParamSet best_params;
    int best_epoch = 0;  // 1-based epoch with the lowest validation loss
    std::vector<EpochStats> history;
};

/// Mini-batch training with seeded shuffling, per-sample gradient
/// accumulation (images may differ in size), validation after every epoch
/// and patience-based early stopping. The model is left holding the best
/// parameters, which are also returned.
TrainResult train_model(Model& model, const std::vector<Sample>& train_set,
                        const std::vector<Sample>& val_set, const TrainConfig& cfg);

void write_history_csv(const std::vector<EpochStats>& history, const std::string& path);

}  // namespace litho
