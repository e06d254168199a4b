#include "litho/runs.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <set>
#include <stdexcept>
#include <thread>

#include "json.hpp"

#include "litho/rng.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace litho {

const char* image_mode_name(ImageMode m) {
    return m == ImageMode::Resized ? "resized" : "original";
}

ImageMode image_mode_from_name(const std::string& name) {
    if (name == "resized") return ImageMode::Resized;
    if (name == "original") return ImageMode::Original;
    throw std::invalid_argument("image mode must be resized|original, got \"" + name + "\"");
}

void RunConfig::validate() const {
    if (variant == ModelVariant::Model1 && image_mode == ImageMode::Original) {
        throw std::invalid_argument(
            "Model1 has a fixed 256x256 input and cannot run on original-size images; "
            "use --image-mode resized");
    }
    if (k < 2) throw std::invalid_argument("k must be >= 2");
    if (workers < 1) throw std::invalid_argument("workers must be >= 1");
    if (resize_to < 1) throw std::invalid_argument("resize size must be positive");
}

std::uint64_t run_seed(std::uint64_t global_seed, int test_fold, int val_fold) {
    return mix_seed(mix_seed(global_seed, 0x7e57ULL + static_cast<std::uint64_t>(test_fold)),
                    0x7a1ULL + static_cast<std::uint64_t>(val_fold));
}

std::vector<PlugSamples> load_plugs(const DatasetManifest& manifest,
                                    const std::string& manifest_dir, ImageMode mode,
                                    int resize_to) {
    manifest.validate();
    std::vector<PlugSamples> plugs;
    std::map<std::string, std::size_t> index;
    for (const ManifestRecord& rec : manifest.records) {
        auto [it, inserted] = index.emplace(rec.plug_id, plugs.size());
        if (inserted) {
            PlugSamples p;
            p.plug_id = rec.plug_id;
            p.label = static_cast<int>(rec.label);
            plugs.push_back(std::move(p));
        }
        ImageF64 img = image_from_png((fs::path(manifest_dir) / rec.path).string());
        if (mode == ImageMode::Resized) {
            img = resize_bilinear(img, resize_to, resize_to);
        }
        plugs[it->second].images.push_back(image_to_tensor(standardize(img)));
    }
    return plugs;
}

SplitViews split_by_folds(const std::vector<PlugSamples>& plugs, const FoldPlan& plan,
                          int test_fold, int val_fold) {
    if (test_fold < 0 || test_fold >= plan.k || val_fold < 0 || val_fold >= plan.k ||
        test_fold == val_fold) {
        throw std::invalid_argument("split_by_folds: invalid fold pair");
    }
    SplitViews views;
    for (const PlugSamples& plug : plugs) {
        const int fold = plan.fold_of(plug.plug_id);
        if (fold < 0) {
            throw std::runtime_error("fold plan does not cover plug \"" + plug.plug_id + "\"");
        }
        if (fold == test_fold) {
            views.test.push_back(plug);
        } else if (fold == val_fold) {
            views.val.push_back(plug);
        } else {
            views.train.push_back(plug);
        }
    }

    // leakage guard: a plug id may appear in exactly one role
    std::set<std::string> seen;
    for (const auto* split : {&views.train, &views.val, &views.test}) {
        for (const PlugSamples& p : *split) {
            if (!seen.insert(p.plug_id).second) {
                throw std::runtime_error("plug \"" + p.plug_id + "\" leaked across splits");
            }
        }
    }
    if (views.train.empty() || views.val.empty() || views.test.empty()) {
        throw std::runtime_error("split_by_folds: a split came out empty; check the fold plan");
    }
    return views;
}

namespace {

std::vector<Sample> flatten_split(const std::vector<PlugSamples>& plugs) {
    std::vector<Sample> out;
    for (const PlugSamples& p : plugs) {
        for (const Tensor& img : p.images) {
            out.push_back({img, p.label});
        }
    }
    return out;
}

std::vector<double> weights_from_split(const std::vector<PlugSamples>& plugs) {
    std::vector<long long> counts(kNumClasses, 0);
    for (const PlugSamples& p : plugs) {
        counts[static_cast<std::size_t>(p.label)] += static_cast<long long>(p.images.size());
    }
    // classes absent from the training split keep weight 1
    long long mx = 1;
    for (long long c : counts) mx = std::max(mx, c);
    std::vector<double> w(kNumClasses, 1.0);
    for (std::size_t c = 0; c < counts.size(); ++c) {
        if (counts[c] > 0) {
            w[c] = static_cast<double>(mx) / static_cast<double>(counts[c]);
        }
    }
    return w;
}

}  // namespace

RunOutcome run_single(const std::vector<PlugSamples>& plugs, const FoldPlan& plan,
                      int test_fold, int val_fold, const RunConfig& cfg,
                      const std::string& run_dir) {
    const SplitViews views = split_by_folds(plugs, plan, test_fold, val_fold);
    fs::create_directories(run_dir);

    TrainConfig tc = cfg.train;
    tc.seed = run_seed(cfg.train.seed, test_fold, val_fold);
    if (tc.class_weights.empty()) {
        tc.class_weights = weights_from_split(views.train);
    }

    Model model = build_model(cfg.variant, mix_seed(tc.seed, 0x1417ULL));
    const std::vector<Sample> train_set = flatten_split(views.train);
    const std::vector<Sample> val_set = flatten_split(views.val);
    const TrainResult result = train_model(model, train_set, val_set, tc);

    save_checkpoint(model, (fs::path(run_dir) / "checkpoint").string());
    write_history_csv(result.history, (fs::path(run_dir) / "history.csv").string());

    RunOutcome outcome;
    outcome.test_fold = test_fold;
    outcome.val_fold = val_fold;
    outcome.epochs = static_cast<int>(result.history.size());
    outcome.best_epoch = result.best_epoch;

    const auto predictions = predict_classes(
        [&model](const Tensor& img) {
            return model_forward(model, img, Mode::Infer, nullptr, nullptr);
        },
        views.test);
    outcome.image_report = report_from_predictions(predictions, views.test, Granularity::Image);
    outcome.plug_report = report_from_predictions(predictions, views.test, Granularity::Plug);

    write_report(outcome.image_report, (fs::path(run_dir) / "report_image.txt").string());
    write_report(outcome.plug_report, (fs::path(run_dir) / "report_plug.txt").string());
    return outcome;
}

namespace {

void append_metric_row(std::string& csv, const std::string& run_id, const std::string& test,
                       const std::string& val, const char* granularity,
                       const std::vector<double>& values) {
    char buf[64];
    csv += run_id + ',' + test + ',' + val + ',' + granularity;
    for (double v : values) {
        std::snprintf(buf, sizeof(buf), ",%.6f", v);
        csv += buf;
    }
    csv += '\n';
}

std::vector<double> report_row_values(const EvalReport& r) {
    std::vector<double> v;
    v.push_back(r.accuracy);
    for (int c = 0; c < kNumClasses; ++c) {
        v.push_back(r.precision[static_cast<std::size_t>(c)]);
        v.push_back(r.recall[static_cast<std::size_t>(c)]);
        v.push_back(r.f1[static_cast<std::size_t>(c)]);
    }
    return v;
}

std::vector<double> column_mean(const std::vector<std::vector<double>>& rows) {
    std::vector<double> mean(rows.front().size(), 0.0);
    for (const auto& r : rows) {
        for (std::size_t i = 0; i < r.size(); ++i) mean[i] += r[i];
    }
    for (double& m : mean) m /= static_cast<double>(rows.size());
    return mean;
}

// sample standard deviation, matching the mean +/- std convention of
// cross-validation result tables
std::vector<double> column_std(const std::vector<std::vector<double>>& rows,
                               const std::vector<double>& mean) {
    std::vector<double> sd(mean.size(), 0.0);
    if (rows.size() < 2) return sd;
    for (const auto& r : rows) {
        for (std::size_t i = 0; i < r.size(); ++i) {
            sd[i] += (r[i] - mean[i]) * (r[i] - mean[i]);
        }
    }
    for (double& s : sd) s = std::sqrt(s / static_cast<double>(rows.size() - 1));
    return sd;
}

}  // namespace

void write_aggregate_csv(const std::vector<RunOutcome>& outcomes, const std::string& path) {
    std::string csv = "run_id,test_fold,val_fold,granularity,accuracy";
    for (int c = 0; c < kNumClasses; ++c) {
        const char* name = lithology_name(static_cast<Lithology>(c));
        csv += std::string(",precision_") + name + ",recall_" + name + ",f1_" + name;
    }
    csv += '\n';

    for (Granularity g : {Granularity::Image, Granularity::Plug}) {
        std::vector<std::vector<double>> rows;
        std::map<int, std::vector<std::vector<double>>> by_test_fold;
        for (const RunOutcome& o : outcomes) {
            const EvalReport& r = g == Granularity::Image ? o.image_report : o.plug_report;
            const auto values = report_row_values(r);
            rows.push_back(values);
            by_test_fold[o.test_fold].push_back(values);
            append_metric_row(csv, std::to_string(o.test_fold) + "_" + std::to_string(o.val_fold),
                              std::to_string(o.test_fold), std::to_string(o.val_fold),
                              granularity_name(g), values);
        }
        if (rows.empty()) continue;

        // aggregation 1: over all k*(k-1) runs
        const auto mean_runs = column_mean(rows);
        append_metric_row(csv, "mean_runs", "", "", granularity_name(g), mean_runs);
        append_metric_row(csv, "std_runs", "", "", granularity_name(g),
                          column_std(rows, mean_runs));

        // aggregation 2: inner runs averaged per test fold first
        std::vector<std::vector<double>> fold_rows;
        for (const auto& [fold, fr] : by_test_fold) {
            fold_rows.push_back(column_mean(fr));
        }
        const auto mean_folds = column_mean(fold_rows);
        append_metric_row(csv, "mean_folds", "", "", granularity_name(g), mean_folds);
        append_metric_row(csv, "std_folds", "", "", granularity_name(g),
                          column_std(fold_rows, mean_folds));
    }

    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw std::runtime_error("cannot open aggregate csv for writing: " + path);
    }
    out << csv;
}

NestedCvResult nested_cv(const std::vector<PlugSamples>& plugs, const FoldPlan& plan,
                         const RunConfig& cfg) {
    cfg.validate();

    // fail fast if any run would leak plugs between roles
    for (const FoldPlan::Run& r : plan.runs) {
        split_by_folds(plugs, plan, r.test_fold, r.val_fold);
    }

    NestedCvResult result;
    result.plan = plan;
    result.outcomes.resize(plan.runs.size());

    std::atomic<std::size_t> next{0};
    std::mutex error_mutex;
    std::exception_ptr first_error;

    auto worker = [&]() {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= plan.runs.size()) return;
            const FoldPlan::Run& r = plan.runs[i];
            const std::string run_dir =
                (fs::path(cfg.out_dir) / "runs" /
                 (std::to_string(r.test_fold) + "_" + std::to_string(r.val_fold)))
                    .string();
            try {
                result.outcomes[i] =
                    run_single(plugs, plan, r.test_fold, r.val_fold, cfg, run_dir);
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!first_error) first_error = std::current_exception();
                return;
            }
        }
    };

    if (cfg.workers <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int i = 0; i < cfg.workers; ++i) {
            pool.emplace_back(worker);
        }
        for (std::thread& t : pool) t.join();
    }
    if (first_error) std::rethrow_exception(first_error);

    result.aggregate_csv_path = (fs::path(cfg.out_dir) / "aggregate.csv").string();
    write_aggregate_csv(result.outcomes, result.aggregate_csv_path);
    return result;
}

void write_config_echo(const RunConfig& cfg, const std::string& path) {
    json j;
    j["model"] = variant_name(cfg.variant);
    j["image_mode"] = image_mode_name(cfg.image_mode);
    j["resize_to"] = cfg.resize_to;
    j["k"] = cfg.k;
    j["workers"] = cfg.workers;
    j["manifest"] = cfg.manifest_path;
    j["out_dir"] = cfg.out_dir;
    j["train"] = {{"learning_rate", cfg.train.learning_rate},
                  {"beta1", cfg.train.beta1},
                  {"beta2", cfg.train.beta2},
                  {"epsilon", cfg.train.epsilon},
                  {"batch_size", cfg.train.batch_size},
                  {"max_epochs", cfg.train.max_epochs},
                  {"patience", cfg.train.patience},
                  {"class_weights", cfg.train.class_weights},
                  {"seed", cfg.train.seed}};
    std::ofstream out(path);
    if (!out) {
        throw std::runtime_error("cannot open config echo for writing: " + path);
    }
    out << j.dump(2) << '\n';
}

}  // namespace litho
