#pragma once

#include <functional>
#include <string>
#include <vector>

#include "litho/dataset.hpp"
#include "litho/model.hpp"

namespace litho {

enum class Granularity { Image, Plug };

const char* granularity_name(Granularity g);

/// Confusion counts plus the derived accuracy and per-class
/// precision/recall/F1. Zero-denominator metrics are reported as 0 with the
/// class flagged in `degenerate`.
struct EvalReport {
    Granularity granularity = Granularity::Image;
    std::vector<std::vector<long long>> confusion;  // rows true, cols predicted
    long long total = 0;
    double accuracy = 0;
    std::vector<double> precision, recall, f1;
    std::vector<long long> support;      // items per true class
    std::vector<bool> degenerate;        // zero-denominator convention fired
    long long tie_count = 0;             // plug granularity: tie-broken votes
};

std::vector<std::vector<long long>> confusion_matrix(const std::vector<int>& truth,
                                                     const std::vector<int>& predicted,
                                                     int classes);

EvalReport metrics_from_confusion(const std::vector<std::vector<long long>>& matrix,
                                  Granularity granularity);

/// Modal predicted class of one plug's slices. Ties break to the lowest
/// class index and set *tie.
int majority_vote(const std::vector<int>& predictions, int classes, bool* tie = nullptr);

/// One plug's slices, ready for inference.
struct PlugSamples {
    std::string plug_id;
    int label = 0;
    std::vector<Tensor> images;
};

using PredictFn = std::function<Tensor(const Tensor&)>;

/// Per-plug, per-image argmax class under the given predictor.
std::vector<std::vector<int>> predict_classes(const PredictFn& predict,
                                              const std::vector<PlugSamples>& plugs);

/// Scores an already-predicted split at the requested granularity; plug
/// granularity majority-votes each plug first.
EvalReport report_from_predictions(const std::vector<std::vector<int>>& predictions,
                                   const std::vector<PlugSamples>& plugs,
                                   Granularity granularity);

/// Inference (dropout off) plus scoring in one call.
EvalReport evaluate_split(const Model& model, const std::vector<PlugSamples>& plugs,
                          Granularity granularity);
EvalReport evaluate_split(const PredictFn& predict, const std::vector<PlugSamples>& plugs,
                          Granularity granularity);

/// Human-readable report (confusion matrix plus the metric table).
std::string format_report(const EvalReport& report);
void write_report(const EvalReport& report, const std::string& path);

}  // namespace litho
