// Command-line front end: synthesize data, plan folds, train and evaluate
// single runs, and drive the full nested cross-validation.

#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"

#include "litho/dataset.hpp"
#include "litho/eval.hpp"
#include "litho/model.hpp"
#include "litho/rng.hpp"
#include "litho/runs.hpp"
#include "litho/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct CliOptions {
    // shared
    std::string manifest;
    std::string plan_path;
    std::string out_dir;
    int model = 3;
    std::string image_mode = "resized";
    int resize_to = 256;
    std::uint64_t seed = 0;
    int k = 6;
    int workers = 1;
    // train hyperparameters
    double learning_rate = 0.001;
    int batch_size = 32;
    int max_epochs = 200;
    int patience = 10;
    // synth
    int plugs_per_class = 6;
    int slices = 20;
    int size = 64;
    // single-run folds
    int test_fold = 0;
    int val_fold = 1;
    // eval
    std::string checkpoint;
    std::string granularity = "image";
    std::string split = "test";
};

litho::RunConfig to_run_config(const CliOptions& o) {
    litho::RunConfig cfg;
    cfg.variant = litho::variant_from_int(o.model);
    cfg.image_mode = litho::image_mode_from_name(o.image_mode);
    cfg.resize_to = o.resize_to;
    cfg.k = o.k;
    cfg.workers = o.workers;
    cfg.manifest_path = o.manifest;
    cfg.out_dir = o.out_dir;
    cfg.train.learning_rate = o.learning_rate;
    cfg.train.batch_size = o.batch_size;
    cfg.train.max_epochs = o.max_epochs;
    cfg.train.patience = o.patience;
    cfg.train.seed = o.seed;
    return cfg;
}

void add_train_flags(CLI::App* cmd, CliOptions& o) {
    cmd->add_option("--lr", o.learning_rate, "Adam learning rate");
    cmd->add_option("--batch-size", o.batch_size, "mini-batch size");
    cmd->add_option("--epochs", o.max_epochs, "epoch budget");
    cmd->add_option("--patience", o.patience, "early-stopping patience (epochs)");
}

litho::FoldPlan plan_or_load(const CliOptions& o, const litho::DatasetManifest& manifest) {
    if (!o.plan_path.empty()) {
        return litho::load_fold_plan(o.plan_path);
    }
    return litho::plan_folds(manifest, o.k, litho::mix_seed(o.seed, 0xf01dULL));
}

void print_warnings(const litho::FoldPlan& plan) {
    for (const std::string& w : plan.warnings) {
        std::cerr << "warning: " << w << "\n";
    }
}

int cmd_synth(const CliOptions& o) {
    litho::SynthConfig cfg;
    cfg.plugs_per_class = o.plugs_per_class;
    cfg.slices_per_plug = o.slices;
    cfg.image_size = o.size;
    cfg.seed = o.seed;
    litho::synth_generate(cfg, o.out_dir);

    json echo = {{"command", "synth"},
                 {"plugs_per_class", cfg.plugs_per_class},
                 {"slices", cfg.slices_per_plug},
                 {"size", cfg.image_size},
                 {"seed", cfg.seed},
                 {"out", o.out_dir}};
    std::ofstream(fs::path(o.out_dir) / "config.json") << echo.dump(2) << '\n';
    std::cout << (fs::path(o.out_dir) / "manifest.csv").string() << "\n";
    return 0;
}

int cmd_params(const CliOptions& o, const std::string& out_file) {
    const litho::Model model = litho::build_model(litho::variant_from_int(o.model), o.seed);
    const long long count = litho::count_params(model);
    std::cout << count << "\n";
    if (!out_file.empty()) {
        json j = {{"command", "params"},
                  {"model", litho::variant_name(model.spec.variant)},
                  {"parameters", count}};
        std::ofstream(out_file) << j.dump(2) << '\n';
    }
    return 0;
}

int cmd_plan_folds(const CliOptions& o) {
    const auto manifest = litho::read_manifest(o.manifest);
    const auto plan = litho::plan_folds(manifest, o.k, litho::mix_seed(o.seed, 0xf01dULL));
    print_warnings(plan);
    fs::create_directories(o.out_dir);
    litho::save_fold_plan(plan, (fs::path(o.out_dir) / "fold_plan.json").string());

    json echo = {{"command", "plan-folds"},
                 {"manifest", o.manifest},
                 {"k", o.k},
                 {"seed", o.seed},
                 {"runs", plan.runs.size()},
                 {"out", o.out_dir}};
    std::ofstream(fs::path(o.out_dir) / "config.json") << echo.dump(2) << '\n';
    std::cout << (fs::path(o.out_dir) / "fold_plan.json").string() << "\n";
    return 0;
}

int cmd_train(const CliOptions& o) {
    litho::RunConfig cfg = to_run_config(o);
    cfg.validate();
    const auto manifest = litho::read_manifest(o.manifest);
    const auto plan = plan_or_load(o, manifest);
    print_warnings(plan);
    const auto plugs = litho::load_plugs(manifest, fs::path(o.manifest).parent_path().string(),
                                         cfg.image_mode, cfg.resize_to);

    fs::create_directories(cfg.out_dir);
    litho::save_fold_plan(plan, (fs::path(cfg.out_dir) / "fold_plan.json").string());
    litho::write_config_echo(cfg, (fs::path(cfg.out_dir) / "config.json").string());

    const auto outcome =
        litho::run_single(plugs, plan, o.test_fold, o.val_fold, cfg, cfg.out_dir);
    std::printf("run %d_%d: %d epochs (best %d), image accuracy %.4f, plug accuracy %.4f\n",
                outcome.test_fold, outcome.val_fold, outcome.epochs, outcome.best_epoch,
                outcome.image_report.accuracy, outcome.plug_report.accuracy);
    return 0;
}

int cmd_eval(const CliOptions& o) {
    litho::RunConfig cfg = to_run_config(o);
    const litho::Model model = litho::load_checkpoint(o.checkpoint);
    cfg.variant = model.spec.variant;
    cfg.validate();

    const auto manifest = litho::read_manifest(o.manifest);
    const auto plan = plan_or_load(o, manifest);
    const auto plugs = litho::load_plugs(manifest, fs::path(o.manifest).parent_path().string(),
                                         cfg.image_mode, cfg.resize_to);
    const auto views = litho::split_by_folds(plugs, plan, o.test_fold, o.val_fold);
    const auto& split = o.split == "train" ? views.train
                        : o.split == "val" ? views.val
                                           : views.test;

    const auto granularity = o.granularity == "plug" ? litho::Granularity::Plug
                                                     : litho::Granularity::Image;
    const auto report = litho::evaluate_split(model, split, granularity);

    fs::create_directories(cfg.out_dir);
    litho::write_config_echo(cfg, (fs::path(cfg.out_dir) / "config.json").string());
    const std::string report_path =
        (fs::path(cfg.out_dir) / (std::string("report_") + o.granularity + ".txt")).string();
    litho::write_report(report, report_path);
    std::cout << litho::format_report(report);
    return 0;
}

int cmd_nested_cv(const CliOptions& o) {
    litho::RunConfig cfg = to_run_config(o);
    cfg.validate();
    const auto manifest = litho::read_manifest(o.manifest);
    const auto plan = plan_or_load(o, manifest);
    print_warnings(plan);
    const auto plugs = litho::load_plugs(manifest, fs::path(o.manifest).parent_path().string(),
                                         cfg.image_mode, cfg.resize_to);

    fs::create_directories(cfg.out_dir);
    litho::save_fold_plan(plan, (fs::path(cfg.out_dir) / "fold_plan.json").string());
    litho::write_config_echo(cfg, (fs::path(cfg.out_dir) / "config.json").string());

    const auto result = litho::nested_cv(plugs, plan, cfg);
    std::printf("completed %zu runs; aggregate written to %s\n", result.outcomes.size(),
                result.aggregate_csv_path.c_str());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"CNN lithology classification of micro-CT slices"};
    app.require_subcommand(1);
    app.set_config("--config", "", "read options from a TOML-style config file");
    app.allow_config_extras(CLI::config_extras_mode::ignore_all);

    CliOptions o;
    std::string params_out;

    CLI::App* synth = app.add_subcommand("synth", "generate a synthetic texture dataset");
    synth->add_option("--plugs-per-class", o.plugs_per_class);
    synth->add_option("--slices", o.slices, "slices per plug");
    synth->add_option("--size", o.size, "square image extent (min 32)");
    synth->add_option("--seed", o.seed);
    synth->add_option("--out", o.out_dir)->required();

    CLI::App* params = app.add_subcommand("params", "print a model's trainable parameter count");
    params->add_option("--model", o.model, "1..4")->required();
    params->add_option("--out", params_out, "also write a JSON summary here");

    CLI::App* plan = app.add_subcommand("plan-folds", "assign plugs to stratified folds");
    plan->add_option("--manifest", o.manifest)->required();
    plan->add_option("--k", o.k);
    plan->add_option("--seed", o.seed);
    plan->add_option("--out", o.out_dir)->required();

    CLI::App* train = app.add_subcommand("train", "train one fold pair");
    train->add_option("--manifest", o.manifest)->required();
    train->add_option("--plan", o.plan_path, "existing fold_plan.json (default: plan in place)");
    train->add_option("--model", o.model, "1..4");
    train->add_option("--image-mode", o.image_mode, "resized|original")
        ->check(CLI::IsMember({"resized", "original"}));
    train->add_option("--resize-to", o.resize_to);
    train->add_option("--k", o.k);
    train->add_option("--seed", o.seed);
    train->add_option("--test-fold", o.test_fold);
    train->add_option("--val-fold", o.val_fold);
    add_train_flags(train, o);
    train->add_option("--out", o.out_dir)->required();

    CLI::App* eval = app.add_subcommand("eval", "evaluate a checkpoint on a split");
    eval->add_option("--manifest", o.manifest)->required();
    eval->add_option("--plan", o.plan_path, "existing fold_plan.json (default: plan in place)");
    eval->add_option("--checkpoint", o.checkpoint)->required();
    eval->add_option("--image-mode", o.image_mode, "resized|original")
        ->check(CLI::IsMember({"resized", "original"}));
    eval->add_option("--resize-to", o.resize_to);
    eval->add_option("--k", o.k);
    eval->add_option("--seed", o.seed);
    eval->add_option("--test-fold", o.test_fold);
    eval->add_option("--val-fold", o.val_fold);
    eval->add_option("--split", o.split, "train|val|test")
        ->check(CLI::IsMember({"train", "val", "test"}));
    eval->add_option("--granularity", o.granularity, "image|plug")
        ->check(CLI::IsMember({"image", "plug"}));
    eval->add_option("--out", o.out_dir)->required();

    CLI::App* nested = app.add_subcommand("nested-cv", "train and score all k*(k-1) fold pairs");
    nested->add_option("--manifest", o.manifest)->required();
    nested->add_option("--plan", o.plan_path, "existing fold_plan.json (default: plan in place)");
    nested->add_option("--model", o.model, "1..4");
    nested->add_option("--image-mode", o.image_mode, "resized|original")
        ->check(CLI::IsMember({"resized", "original"}));
    nested->add_option("--resize-to", o.resize_to);
    nested->add_option("--k", o.k);
    nested->add_option("--seed", o.seed);
    nested->add_option("--workers", o.workers, "parallel training workers");
    add_train_flags(nested, o);
    nested->add_option("--out", o.out_dir)->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (synth->parsed()) return cmd_synth(o);
        if (params->parsed()) return cmd_params(o, params_out);
        if (plan->parsed()) return cmd_plan_folds(o);
        if (train->parsed()) return cmd_train(o);
        if (eval->parsed()) return cmd_eval(o);
        if (nested->parsed()) return cmd_nested_cv(o);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
