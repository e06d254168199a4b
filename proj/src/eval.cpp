#include "litho/eval.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace litho {

const char* granularity_name(Granularity g) {
    return g == Granularity::Image ? "image" : "plug";
}

std::vector<std::vector<long long>> confusion_matrix(const std::vector<int>& truth,
                                                     const std::vector<int>& predicted,
                                                     int classes) {
    if (truth.size() != predicted.size()) {
        throw std::invalid_argument("confusion_matrix: item count mismatch");
    }
    std::vector<std::vector<long long>> m(static_cast<std::size_t>(classes),
                                          std::vector<long long>(static_cast<std::size_t>(classes), 0));
    for (std::size_t i = 0; i < truth.size(); ++i) {
        if (truth[i] < 0 || truth[i] >= classes || predicted[i] < 0 || predicted[i] >= classes) {
            throw std::invalid_argument("confusion_matrix: class index out of range");
        }
        ++m[static_cast<std::size_t>(truth[i])][static_cast<std::size_t>(predicted[i])];
    }
    return m;
}

EvalReport metrics_from_confusion(const std::vector<std::vector<long long>>& matrix,
                                  Granularity granularity) {
    const std::size_t classes = matrix.size();
    EvalReport r;
    r.granularity = granularity;
    r.confusion = matrix;
    r.precision.assign(classes, 0.0);
    r.recall.assign(classes, 0.0);
    r.f1.assign(classes, 0.0);
    r.support.assign(classes, 0);
    r.degenerate.assign(classes, false);

    long long total = 0, trace = 0;
    for (std::size_t i = 0; i < classes; ++i) {
        if (matrix[i].size() != classes) {
            throw std::invalid_argument("metrics: confusion matrix must be square");
        }
        for (std::size_t j = 0; j < classes; ++j) {
            total += matrix[i][j];
            r.support[i] += matrix[i][j];
        }
        trace += matrix[i][i];
    }
    r.total = total;
    r.accuracy = total > 0 ? static_cast<double>(trace) / static_cast<double>(total) : 0.0;

    for (std::size_t c = 0; c < classes; ++c) {
        long long tp = matrix[c][c];
        long long predicted_c = 0;
        for (std::size_t i = 0; i < classes; ++i) predicted_c += matrix[i][c];
        const long long actual_c = r.support[c];

        if (predicted_c > 0) {
            r.precision[c] = static_cast<double>(tp) / static_cast<double>(predicted_c);
        } else {
            r.degenerate[c] = true;
        }
        if (actual_c > 0) {
            r.recall[c] = static_cast<double>(tp) / static_cast<double>(actual_c);
        } else {
            r.degenerate[c] = true;
        }
        if (r.precision[c] + r.recall[c] > 0) {
            r.f1[c] = 2.0 * r.precision[c] * r.recall[c] / (r.precision[c] + r.recall[c]);
        } else {
            r.degenerate[c] = true;
        }
    }
    return r;
}

int majority_vote(const std::vector<int>& predictions, int classes, bool* tie) {
    if (predictions.empty()) {
        throw std::invalid_argument("majority_vote: no predictions");
    }
    std::vector<long long> counts(static_cast<std::size_t>(classes), 0);
    for (int p : predictions) {
        if (p < 0 || p >= classes) {
            throw std::invalid_argument("majority_vote: class index out of range");
        }
        ++counts[static_cast<std::size_t>(p)];
    }
    int best = 0;
    for (int c = 1; c < classes; ++c) {
        if (counts[static_cast<std::size_t>(c)] > counts[static_cast<std::size_t>(best)]) {
            best = c;  // ties keep the lowest class index
        }
    }
    if (tie) {
        *tie = false;
        for (int c = 0; c < classes; ++c) {
            if (c != best && counts[static_cast<std::size_t>(c)] ==
                                 counts[static_cast<std::size_t>(best)]) {
                *tie = true;
                break;
            }
        }
    }
    return best;
}

std::vector<std::vector<int>> predict_classes(const PredictFn& predict,
                                              const std::vector<PlugSamples>& plugs) {
    if (plugs.empty()) {
        throw std::runtime_error("evaluate: empty split");
    }
    std::vector<std::vector<int>> out;
    out.reserve(plugs.size());
    for (const PlugSamples& plug : plugs) {
        if (plug.images.empty()) {
            throw std::runtime_error("evaluate: plug \"" + plug.plug_id + "\" has no images");
        }
        std::vector<int> preds;
        preds.reserve(plug.images.size());
        for (const Tensor& img : plug.images) {
            const Tensor probs = predict(img);
            int best = 0;
            for (std::size_t c = 1; c < probs.size(); ++c) {
                if (probs[c] > probs[static_cast<std::size_t>(best)]) {
                    best = static_cast<int>(c);
                }
            }
            preds.push_back(best);
        }
        out.push_back(std::move(preds));
    }
    return out;
}

EvalReport report_from_predictions(const std::vector<std::vector<int>>& predictions,
                                   const std::vector<PlugSamples>& plugs,
                                   Granularity granularity) {
    if (predictions.size() != plugs.size()) {
        throw std::invalid_argument("report: predictions do not match plugs");
    }
    std::vector<int> truth, pred;
    long long ties = 0;
    for (std::size_t i = 0; i < plugs.size(); ++i) {
        if (granularity == Granularity::Image) {
            for (int p : predictions[i]) {
                truth.push_back(plugs[i].label);
                pred.push_back(p);
            }
        } else {
            bool tie = false;
            const int vote = majority_vote(predictions[i], kNumClasses, &tie);
            truth.push_back(plugs[i].label);
            pred.push_back(vote);
            if (tie) ++ties;
        }
    }
    EvalReport r = metrics_from_confusion(confusion_matrix(truth, pred, kNumClasses), granularity);
    r.tie_count = ties;
    return r;
}

EvalReport evaluate_split(const PredictFn& predict, const std::vector<PlugSamples>& plugs,
                          Granularity granularity) {
    return report_from_predictions(predict_classes(predict, plugs), plugs, granularity);
}

EvalReport evaluate_split(const Model& model, const std::vector<PlugSamples>& plugs,
                          Granularity granularity) {
    return evaluate_split(
        [&model](const Tensor& img) {
            return model_forward(model, img, Mode::Infer, nullptr, nullptr);
        },
        plugs, granularity);
}

std::string format_report(const EvalReport& r) {
    std::ostringstream os;
    char buf[160];
    os << "granularity: " << granularity_name(r.granularity) << "\n";
    os << "items: " << r.total << "\n";
    std::snprintf(buf, sizeof(buf), "accuracy: %.6f\n", r.accuracy);
    os << buf;
    if (r.granularity == Granularity::Plug) {
        os << "vote_ties: " << r.tie_count << "\n";
    }
    os << "confusion (rows true, cols predicted):\n";
    for (std::size_t i = 0; i < r.confusion.size(); ++i) {
        os << "  " << lithology_name(static_cast<Lithology>(i)) << ":";
        for (long long v : r.confusion[i]) {
            os << ' ' << v;
        }
        os << '\n';
    }
    os << "class,precision,recall,f1,support,degenerate\n";
    for (std::size_t c = 0; c < r.precision.size(); ++c) {
        std::snprintf(buf, sizeof(buf), "%s,%.6f,%.6f,%.6f,%lld,%d\n",
                      lithology_name(static_cast<Lithology>(c)), r.precision[c], r.recall[c],
                      r.f1[c], r.support[c], r.degenerate[c] ? 1 : 0);
        os << buf;
    }
    return os.str();
}

void write_report(const EvalReport& report, const std::string& path) {
    std::ofstream out(path);
    if (!out) {
        throw std::runtime_error("cannot open report for writing: " + path);
    }
    out << format_report(report);
}

}  // namespace litho
