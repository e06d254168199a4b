#include <sys/wait.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "litho/dataset.hpp"
#include "litho/model.hpp"
#include "litho/runs.hpp"
#include "temp_dir.hpp"

namespace fs = std::filesystem;
using namespace litho;
using litho::testing::TempDir;

namespace {

std::string file_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

struct CliResult {
    int exit_code;
    std::string output;  // stdout + stderr
};

CliResult run_cli(const std::string& args, const std::string& log_path) {
    const std::string cmd = std::string(LITHO_CLI_BIN) + " " + args + " >" + log_path + " 2>&1";
    const int status = std::system(cmd.c_str());
    CliResult res;
    res.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    std::ifstream in(log_path);
    std::stringstream ss;
    ss << in.rdbuf();
    res.output = ss.str();
    return res;
}

RunConfig tiny_config(const std::string& manifest, const std::string& out) {
    RunConfig cfg;
    cfg.variant = ModelVariant::Model3;
    cfg.image_mode = ImageMode::Original;
    cfg.k = 3;
    cfg.manifest_path = manifest;
    cfg.out_dir = out;
    cfg.train.seed = 5;
    cfg.train.max_epochs = 2;
    cfg.train.patience = 2;
    cfg.train.batch_size = 4;
    return cfg;
}

}  // namespace

TEST_SUITE("pipeline") {

TEST_CASE("run seeds depend on the fold pair, not scheduling") {
    CHECK(run_seed(1, 0, 1) != run_seed(1, 0, 2));
    CHECK(run_seed(1, 0, 1) != run_seed(1, 1, 0));
    CHECK(run_seed(1, 2, 1) == run_seed(1, 2, 1));
    CHECK(run_seed(2, 2, 1) != run_seed(1, 2, 1));
}

TEST_CASE("model1 with original-size images is rejected") {
    RunConfig cfg;
    cfg.variant = ModelVariant::Model1;
    cfg.image_mode = ImageMode::Original;
    CHECK_THROWS_WITH_AS(cfg.validate(), doctest::Contains("fixed 256x256"),
                         std::invalid_argument);
    cfg.image_mode = ImageMode::Resized;
    CHECK_NOTHROW(cfg.validate());
}

TEST_CASE("split_by_folds partitions without leakage") {
    TempDir tmp("split");
    synth_generate({3, 2, 32, 9}, tmp.str());
    const auto manifest = read_manifest(tmp.sub("manifest.csv"));
    const auto plugs = load_plugs(manifest, tmp.str(), ImageMode::Original, 0);
    const FoldPlan plan = plan_folds(manifest, 3, 4);

    for (const auto& run : plan.runs) {
        const SplitViews v = split_by_folds(plugs, plan, run.test_fold, run.val_fold);
        CHECK(v.train.size() + v.val.size() + v.test.size() == plugs.size());
        CHECK(!v.train.empty());
        CHECK(!v.val.empty());
        CHECK(!v.test.empty());
    }
    CHECK_THROWS_AS(split_by_folds(plugs, plan, 1, 1), std::invalid_argument);
}

TEST_CASE("nested cv produces one directory per run plus the aggregate") {
    TempDir data("cvdata"), out("cvout");
    synth_generate({3, 2, 32, 10}, data.str());
    const auto manifest = read_manifest(data.sub("manifest.csv"));
    const auto plugs = load_plugs(manifest, data.str(), ImageMode::Original, 0);
    const FoldPlan plan = plan_folds(manifest, 3, 10);

    RunConfig cfg = tiny_config(data.sub("manifest.csv"), out.str());
    const NestedCvResult result = nested_cv(plugs, plan, cfg);
    CHECK(result.outcomes.size() == 6);  // k*(k-1) with k=3

    int run_dirs = 0;
    for (const auto& entry : fs::directory_iterator(out.path / "runs")) {
        if (entry.is_directory()) {
            ++run_dirs;
            CHECK(fs::exists(entry.path() / "checkpoint"));
            CHECK(fs::exists(entry.path() / "history.csv"));
            CHECK(fs::exists(entry.path() / "report_image.txt"));
            CHECK(fs::exists(entry.path() / "report_plug.txt"));
        }
    }
    CHECK(run_dirs == 6);
    CHECK(fs::exists(out.path / "aggregate.csv"));

    const std::string csv = file_bytes(out.sub("aggregate.csv"));
    CHECK(csv.find("mean_runs") != std::string::npos);
    CHECK(csv.find("std_runs") != std::string::npos);
    CHECK(csv.find("mean_folds") != std::string::npos);
    CHECK(csv.find("plug") != std::string::npos);
}

TEST_CASE("nested cv is byte-deterministic, serial and parallel") {
    TempDir data("detdata"), out1("det1"), out2("det2"), out3("det3");
    synth_generate({3, 2, 32, 11}, data.str());
    const auto manifest = read_manifest(data.sub("manifest.csv"));
    const auto plugs = load_plugs(manifest, data.str(), ImageMode::Original, 0);
    const FoldPlan plan = plan_folds(manifest, 3, 11);

    RunConfig serial = tiny_config(data.sub("manifest.csv"), out1.str());
    nested_cv(plugs, plan, serial);

    RunConfig repeat = tiny_config(data.sub("manifest.csv"), out2.str());
    nested_cv(plugs, plan, repeat);

    RunConfig parallel = tiny_config(data.sub("manifest.csv"), out3.str());
    parallel.workers = 3;
    nested_cv(plugs, plan, parallel);

    const std::string a = file_bytes(out1.sub("aggregate.csv"));
    CHECK(a == file_bytes(out2.sub("aggregate.csv")));
    CHECK(a == file_bytes(out3.sub("aggregate.csv")));
    // spot-check one run's artifacts byte for byte
    CHECK(file_bytes(out1.sub("runs/0_1/checkpoint")) ==
          file_bytes(out3.sub("runs/0_1/checkpoint")));
    CHECK(file_bytes(out1.sub("runs/2_0/history.csv")) ==
          file_bytes(out3.sub("runs/2_0/history.csv")));
}

TEST_CASE("run_single then eval: plug report counts plugs, train split overfits") {
    TempDir data("single"), out("singleout");
    synth_generate({3, 4, 32, 12}, data.str());
    const auto manifest = read_manifest(data.sub("manifest.csv"));
    const auto plugs = load_plugs(manifest, data.str(), ImageMode::Original, 0);
    const FoldPlan plan = plan_folds(manifest, 3, 12);

    RunConfig cfg = tiny_config(data.sub("manifest.csv"), out.str());
    cfg.train.max_epochs = 25;
    cfg.train.patience = 25;
    const RunOutcome outcome = run_single(plugs, plan, 0, 1, cfg, out.str());
    CHECK(outcome.plug_report.total == 3);   // one fold of plugs
    CHECK(outcome.image_report.total == 12);  // 3 plugs x 4 slices

    const std::string history = file_bytes(out.sub("history.csv"));
    CHECK(history.rfind("epoch,train_loss,val_loss,train_acc,val_acc\n", 0) == 0);
    CHECK(std::count(history.begin(), history.end(), '\n') ==
          1 + outcome.epochs);  // header + one row per epoch

    // reload the checkpoint and score the training split: the capacity
    // check expects a perfect fit on plug granularity
    const Model model = load_checkpoint(out.sub("checkpoint"));
    const SplitViews views = split_by_folds(plugs, plan, 0, 1);
    const EvalReport on_train = evaluate_split(model, views.train, Granularity::Plug);
    CHECK(on_train.accuracy == doctest::Approx(1.0));
}

TEST_CASE("cli: params prints the published counts") {
    TempDir tmp("cli_params");
    auto r1 = run_cli("params --model 1", tmp.sub("log1"));
    CHECK(r1.exit_code == 0);
    CHECK(r1.output == "6596595\n");
    auto r2 = run_cli("params --model 2", tmp.sub("log2"));
    CHECK(r2.output == "177395\n");
    auto r4 = run_cli("params --model 4", tmp.sub("log4"));
    CHECK(r4.output == "49395\n");
    auto bad = run_cli("params --model 9", tmp.sub("log9"));
    CHECK(bad.exit_code != 0);
}

TEST_CASE("cli: synth writes the dataset and validates the floor") {
    TempDir tmp("cli_synth");
    const std::string out = tmp.sub("data");
    auto r = run_cli("synth --plugs-per-class 2 --slices 2 --size 32 --seed 3 --out " + out,
                     tmp.sub("log"));
    CHECK(r.exit_code == 0);
    CHECK(fs::exists(fs::path(out) / "manifest.csv"));
    CHECK(fs::exists(fs::path(out) / "config.json"));
    int pngs = 0;
    for (const auto& e : fs::directory_iterator(fs::path(out) / "images")) {
        pngs += e.path().extension() == ".png";
    }
    CHECK(pngs == 12);  // 3 classes x 2 plugs x 2 slices

    auto floor = run_cli("synth --plugs-per-class 1 --slices 1 --size 16 --seed 3 --out " +
                             tmp.sub("bad"),
                         tmp.sub("floorlog"));
    CHECK(floor.exit_code != 0);
    CHECK(floor.output.find(">= 32") != std::string::npos);
}

TEST_CASE("cli: synth reruns are byte-identical") {
    TempDir tmp("cli_synth_det");
    const std::string args = "synth --plugs-per-class 1 --slices 2 --size 32 --seed 8 --out ";
    CHECK(run_cli(args + tmp.sub("a"), tmp.sub("loga")).exit_code == 0);
    CHECK(run_cli(args + tmp.sub("b"), tmp.sub("logb")).exit_code == 0);
    CHECK(file_bytes(tmp.sub("a/manifest.csv")) == file_bytes(tmp.sub("b/manifest.csv")));
    const auto manifest = read_manifest(tmp.sub("a/manifest.csv"));
    for (const auto& rec : manifest.records) {
        CHECK(file_bytes(tmp.sub("a/" + rec.path)) == file_bytes(tmp.sub("b/" + rec.path)));
    }
}

TEST_CASE("cli: plan-folds, train, eval round trip") {
    TempDir tmp("cli_train");
    const std::string data = tmp.sub("data");
    REQUIRE(run_cli("synth --plugs-per-class 3 --slices 2 --size 32 --seed 5 --out " + data,
                    tmp.sub("log1"))
                .exit_code == 0);

    auto plan = run_cli("plan-folds --manifest " + data + "/manifest.csv --k 3 --seed 5 --out " +
                            tmp.sub("plan"),
                        tmp.sub("log2"));
    CHECK(plan.exit_code == 0);
    CHECK(fs::exists(tmp.path / "plan" / "fold_plan.json"));

    auto train = run_cli("train --manifest " + data + "/manifest.csv --plan " +
                             tmp.sub("plan/fold_plan.json") +
                             " --model 3 --image-mode original --test-fold 0 --val-fold 1"
                             " --epochs 2 --patience 2 --seed 5 --out " +
                             tmp.sub("run"),
                         tmp.sub("log3"));
    CHECK(train.exit_code == 0);
    CHECK(fs::exists(tmp.path / "run" / "checkpoint"));
    CHECK(fs::exists(tmp.path / "run" / "config.json"));
    CHECK(fs::exists(tmp.path / "run" / "history.csv"));

    auto eval = run_cli("eval --manifest " + data + "/manifest.csv --plan " +
                            tmp.sub("plan/fold_plan.json") + " --checkpoint " +
                            tmp.sub("run/checkpoint") +
                            " --image-mode original --test-fold 0 --val-fold 1 --split test"
                            " --granularity plug --out " +
                            tmp.sub("evalout"),
                        tmp.sub("log4"));
    CHECK(eval.exit_code == 0);
    CHECK(eval.output.find("granularity: plug") != std::string::npos);
    CHECK(eval.output.find("items: 3") != std::string::npos);

    // Model1 checkpoints cannot be evaluated on original-size images
    auto m1train = run_cli("train --manifest " + data + "/manifest.csv --plan " +
                               tmp.sub("plan/fold_plan.json") +
                               " --model 1 --image-mode original --test-fold 0 --val-fold 1"
                               " --epochs 1 --out " +
                               tmp.sub("m1run"),
                           tmp.sub("log5"));
    CHECK(m1train.exit_code != 0);
    CHECK(m1train.output.find("fixed 256x256") != std::string::npos);

    save_checkpoint(build_model(ModelVariant::Model1, 3), tmp.sub("m1.ckpt"));
    auto m1eval = run_cli("eval --manifest " + data + "/manifest.csv --plan " +
                              tmp.sub("plan/fold_plan.json") + " --checkpoint " +
                              tmp.sub("m1.ckpt") +
                              " --image-mode original --test-fold 0 --val-fold 1 --out " +
                              tmp.sub("m1eval"),
                          tmp.sub("log6"));
    CHECK(m1eval.exit_code != 0);
    CHECK(m1eval.output.find("fixed 256x256") != std::string::npos);
}

TEST_CASE("cli: config file supplies options and explicit flags win") {
    TempDir tmp("cli_config");
    {
        std::ofstream cfg(tmp.sub("run.toml"));
        cfg << "[synth]\n"
            << "plugs-per-class = 1\n"
            << "slices = 2\n"
            << "size = 32\n"
            << "seed = 5\n"
            << "out = \"" << tmp.sub("from_config") << "\"\n";
    }
    auto from_config = run_cli("--config " + tmp.sub("run.toml") + " synth", tmp.sub("log1"));
    CHECK(from_config.exit_code == 0);
    CHECK(fs::exists(tmp.path / "from_config" / "manifest.csv"));

    // the same config with --seed overridden on the command line
    auto overridden = run_cli("--config " + tmp.sub("run.toml") + " synth --seed 6 --out " +
                                  tmp.sub("flag_out"),
                              tmp.sub("log2"));
    CHECK(overridden.exit_code == 0);
    const auto manifest = read_manifest(tmp.sub("flag_out/manifest.csv"));
    CHECK(file_bytes(tmp.sub("from_config/" + manifest.records[0].path)) !=
          file_bytes(tmp.sub("flag_out/" + manifest.records[0].path)));
}

TEST_CASE("cli: nested-cv writes k*(k-1) run directories and is rerun-stable") {
    TempDir tmp("cli_cv");
    const std::string data = tmp.sub("data");
    REQUIRE(run_cli("synth --plugs-per-class 3 --slices 2 --size 32 --seed 6 --out " + data,
                    tmp.sub("log1"))
                .exit_code == 0);

    const std::string common = "nested-cv --manifest " + data +
                               "/manifest.csv --model 3 --image-mode original --k 3 --seed 6"
                               " --epochs 1 --out ";
    CHECK(run_cli(common + tmp.sub("cv1"), tmp.sub("log2")).exit_code == 0);
    CHECK(run_cli(common + tmp.sub("cv2") + " --workers 2", tmp.sub("log3")).exit_code == 0);

    int run_dirs = 0;
    for (const auto& e : fs::directory_iterator(tmp.path / "cv1" / "runs")) {
        run_dirs += e.is_directory();
    }
    CHECK(run_dirs == 6);
    CHECK(file_bytes(tmp.sub("cv1/aggregate.csv")) == file_bytes(tmp.sub("cv2/aggregate.csv")));
    CHECK(fs::exists(tmp.path / "cv1" / "fold_plan.json"));
    CHECK(fs::exists(tmp.path / "cv1" / "config.json"));
}

}  // TEST_SUITE
