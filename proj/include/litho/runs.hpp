#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "litho/dataset.hpp"
#include "litho/eval.hpp"
#include "litho/train.hpp"

namespace litho {

enum class ImageMode { Resized, Original };

const char* image_mode_name(ImageMode m);
ImageMode image_mode_from_name(const std::string& name);

/// Everything one experiment needs. `train.seed` acts as the global seed:
/// fold planning and the per-run seeds derive from it.
struct RunConfig {
    ModelVariant variant = ModelVariant::Model3;
    TrainConfig train;
    ImageMode image_mode = ImageMode::Resized;
    int resize_to = 256;
    int k = 6;
    int workers = 1;
    std::string manifest_path;
    std::string out_dir;

    void validate() const;  // rejects Model1 with original-size images
};

/// Per-run training seed: a pure function of the global seed and the fold
/// pair, so parallel scheduling cannot change any result.
std::uint64_t run_seed(std::uint64_t global_seed, int test_fold, int val_fold);

/// Images of one plug, loaded and preprocessed (resize when requested, then
/// per-image standardization).
std::vector<PlugSamples> load_plugs(const DatasetManifest& manifest,
                                    const std::string& manifest_dir, ImageMode mode,
                                    int resize_to);

struct SplitViews {
    std::vector<PlugSamples> train, val, test;
};

/// Splits loaded plugs by fold role; throws when any plug is missing from
/// the plan or any two roles intersect.
SplitViews split_by_folds(const std::vector<PlugSamples>& plugs, const FoldPlan& plan,
                          int test_fold, int val_fold);

struct RunOutcome {
    int test_fold = 0, val_fold = 0;
    EvalReport image_report, plug_report;
    int epochs = 0, best_epoch = 0;
};

/// Trains one fold pair and writes checkpoint, history.csv,
/// report_image.txt and report_plug.txt into run_dir.
RunOutcome run_single(const std::vector<PlugSamples>& plugs, const FoldPlan& plan,
                      int test_fold, int val_fold, const RunConfig& cfg,
                      const std::string& run_dir);

struct NestedCvResult {
    FoldPlan plan;
    std::vector<RunOutcome> outcomes;  // ordered by (test fold, val fold)
    std::string aggregate_csv_path;
};

/// Runs every (test, validation) pair of the plan across `cfg.workers`
/// threads and writes runs/<test>_<val>/ trees plus aggregate.csv under
/// cfg.out_dir. Results are byte-identical regardless of worker count.
NestedCvResult nested_cv(const std::vector<PlugSamples>& plugs, const FoldPlan& plan,
                         const RunConfig& cfg);

/// Aggregate CSV: one row per run and granularity with accuracy and
/// per-class precision/recall/F1, then mean/std rows over all runs and over
/// per-test-fold averages.
void write_aggregate_csv(const std::vector<RunOutcome>& outcomes, const std::string& path);

/// Machine-readable echo of the resolved configuration, written next to
/// every command's outputs.
void write_config_echo(const RunConfig& cfg, const std::string& path);

}  // namespace litho
