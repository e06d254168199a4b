#include <cmath>
#include <random>

#include "doctest.h"
#include "litho/dataset.hpp"
#include "litho/eval.hpp"
#include "litho/rng.hpp"
#include "litho/runs.hpp"
#include "litho/train.hpp"
#include "temp_dir.hpp"

using namespace litho;
using litho::testing::TempDir;

namespace {

// single-scalar model: one Dense(1->1) layer, weight set explicitly
Model scalar_model(double theta) {
    std::mt19937_64 rng(0);
    Model m;
    m.spec.classes = 1;
    m.layers.push_back(make_dense("w", 1, 1, rng));
    m.layers[0].weights[0] = theta;
    m.layers[0].bias[0] = 0.0;
    return m;
}

std::vector<Sample> flatten(const std::vector<PlugSamples>& plugs) {
    std::vector<Sample> out;
    for (const auto& p : plugs) {
        for (const auto& img : p.images) out.push_back({img, p.label});
    }
    return out;
}

}  // namespace

TEST_SUITE("train") {

TEST_CASE("uniform prediction cross-entropy is ln 3") {
    const Tensor probs({1, 3}, {1.0 / 3, 1.0 / 3, 1.0 / 3});
    const Tensor target({1, 3}, {1, 0, 0});
    CHECK(std::abs(weighted_cross_entropy(probs, target, {}) - std::log(3.0)) < 1e-12);
}

TEST_CASE("perfect prediction has (clamped) zero loss") {
    const Tensor probs({2, 3}, {1, 0, 0, 0, 0, 1});
    const Tensor target({2, 3}, {1, 0, 0, 0, 0, 1});
    CHECK(weighted_cross_entropy(probs, target, {}) == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("weighted hand case: 1.33 * -ln(0.5)") {
    const Tensor probs({1, 3}, {0.5, 0.25, 0.25});
    const Tensor target({1, 3}, {1, 0, 0});
    const double loss = weighted_cross_entropy(probs, target, {1.33, 1.33, 1.0});
    CHECK(std::abs(loss - 0.9218) < 1e-4);
    CHECK(loss == doctest::Approx(1.33 * std::log(2.0)));
}

TEST_CASE("non-one-hot targets are rejected") {
    const Tensor probs({1, 3}, {0.5, 0.25, 0.25});
    CHECK_THROWS_AS(weighted_cross_entropy(probs, Tensor({1, 3}, {0.5, 0.5, 0}), {}),
                    std::invalid_argument);
    CHECK_THROWS_AS(weighted_cross_entropy(probs, Tensor({1, 3}, {1, 1, 0}), {}),
                    std::invalid_argument);
    CHECK_THROWS_AS(weighted_cross_entropy(probs, Tensor({1, 3}), {}), std::invalid_argument);
}

TEST_CASE("class weights from counts") {
    const auto w = class_weights_from_counts({1800, 1800, 2400});
    CHECK(w[0] == doctest::Approx(4.0 / 3));
    CHECK(w[1] == doctest::Approx(4.0 / 3));
    CHECK(w[2] == doctest::Approx(1.0));
    CHECK(std::abs(w[0] - 1.33) < 0.005);

    const auto equal = class_weights_from_counts({7, 7, 7});
    for (double v : equal) CHECK(v == 1.0);

    const auto pair = class_weights_from_counts({10, 40});
    CHECK(pair[0] == doctest::Approx(4.0));
    CHECK(pair[1] == doctest::Approx(1.0));

    CHECK_THROWS_AS(class_weights_from_counts({5, 0}), std::invalid_argument);
}

TEST_CASE("softmax + weighted CE gradient equals the closed form") {
    std::mt19937_64 rng(60);
    const std::vector<double> weights = {1.33, 1.33, 1.0};
    const Layer sm = make_plain(LayerKind::SoftmaxOutput, "softmax");

    for (int rep = 0; rep < 25; ++rep) {
        Tensor logits({3});
        for (std::size_t i = 0; i < 3; ++i) logits[i] = uniform_real(rng, -3, 3);
        const int label = static_cast<int>(rng() % 3);
        Tensor target({1, 3});
        target[static_cast<std::size_t>(label)] = 1.0;

        LayerCache cache;
        const Tensor probs = layer_forward(sm, logits, Mode::Infer, nullptr, &cache);
        const Tensor probs_row({1, 3}, {probs[0], probs[1], probs[2]});
        const Tensor dprobs_row = weighted_cross_entropy_grad(probs_row, target, weights);
        const Tensor dprobs({3}, {dprobs_row[0], dprobs_row[1], dprobs_row[2]});
        const Tensor dlogits = layer_backward(sm, cache, dprobs).input;

        // closed form: w_label * (probs - onehot) for N = 1
        for (std::size_t c = 0; c < 3; ++c) {
            const double want =
                weights[static_cast<std::size_t>(label)] *
                (probs[c] - (static_cast<int>(c) == label ? 1.0 : 0.0));
            CHECK(std::abs(dlogits[c] - want) < 1e-10);
        }
    }
}

TEST_CASE("weights from counts balance per-class gradient mass") {
    // uniform predictions: every sample's logit gradient has L1 norm
    // w_label * 4/3, so class totals c_k * w_k * 4/3 must all equal max_count * 4/3
    const std::vector<long long> counts = {10, 20, 40};
    const auto weights = class_weights_from_counts(counts);
    const Tensor probs({1, 3}, {1.0 / 3, 1.0 / 3, 1.0 / 3});

    std::vector<double> class_mass(3, 0.0);
    for (int cls = 0; cls < 3; ++cls) {
        Tensor target({1, 3});
        target[static_cast<std::size_t>(cls)] = 1.0;
        const Tensor dprobs = weighted_cross_entropy_grad(probs, target, weights);
        // push through the softmax identity: dz = w * (p - y)
        for (int c = 0; c < 3; ++c) {
            const double dz = weights[static_cast<std::size_t>(cls)] *
                              (1.0 / 3 - (c == cls ? 1.0 : 0.0));
            class_mass[static_cast<std::size_t>(cls)] +=
                std::abs(dz) * static_cast<double>(counts[static_cast<std::size_t>(cls)]);
        }
        (void)dprobs;
    }
    for (int cls = 1; cls < 3; ++cls) {
        CHECK(std::abs(class_mass[static_cast<std::size_t>(cls)] / class_mass[0] - 1.0) < 0.01);
    }
}

TEST_CASE("adam: zero gradient at step one leaves parameters unchanged") {
    Model m = scalar_model(0.7);
    AdamState state = make_adam_state(m);
    const ModelGrads grads = zero_grads(m);
    TrainConfig cfg;
    adam_step(m, grads, state, cfg);
    CHECK(m.layers[0].weights[0] == 0.7);
}

TEST_CASE("adam: first unit-gradient step moves by about -lr") {
    Model m = scalar_model(0.0);
    AdamState state = make_adam_state(m);
    ModelGrads grads = zero_grads(m);
    grads.weights[0][0] = 1.0;
    TrainConfig cfg;
    adam_step(m, grads, state, cfg);
    // bias-corrected m^ = v^ = 1 at step 1
    CHECK(m.layers[0].weights[0] == doctest::Approx(-0.001).epsilon(1e-6));
}

TEST_CASE("adam: constant gradient decreases the parameter monotonically") {
    Model m = scalar_model(0.0);
    AdamState state = make_adam_state(m);
    ModelGrads grads = zero_grads(m);
    grads.weights[0][0] = 0.37;
    TrainConfig cfg;
    double prev = 0.0;
    for (int step = 0; step < 100; ++step) {
        adam_step(m, grads, state, cfg);
        CHECK(m.layers[0].weights[0] < prev);
        prev = m.layers[0].weights[0];
    }
}

TEST_CASE("adam rejects mismatched gradients") {
    Model m = scalar_model(0.0);
    Model other = build_model(ModelVariant::Model3, 1);
    AdamState state = make_adam_state(m);
    const ModelGrads wrong = zero_grads(other);
    TrainConfig cfg;
    CHECK_THROWS_AS(adam_step(m, wrong, state, cfg), std::invalid_argument);
}

TEST_CASE("train config validation") {
    TrainConfig cfg;
    cfg.learning_rate = 0;
    CHECK_THROWS_AS(cfg.validate(3), std::invalid_argument);
    cfg = TrainConfig{};
    cfg.beta2 = 1.0;
    CHECK_THROWS_AS(cfg.validate(3), std::invalid_argument);
    cfg = TrainConfig{};
    cfg.class_weights = {1.0, -1.0, 1.0};
    CHECK_THROWS_AS(cfg.validate(3), std::invalid_argument);
    cfg.class_weights = {1.0, 1.0};
    CHECK_THROWS_AS(cfg.validate(3), std::invalid_argument);
}

TEST_CASE("empty train or validation set is an error") {
    Model m = build_model(ModelVariant::Model3, 1);
    const std::vector<Sample> none;
    const std::vector<Sample> one = {{Tensor({1, 32, 32}), 0}};
    TrainConfig cfg;
    CHECK_THROWS_AS(train_model(m, none, one, cfg), std::runtime_error);
    CHECK_THROWS_AS(train_model(m, one, none, cfg), std::runtime_error);
}

TEST_CASE("rising validation loss stops after patience and restores the best epoch") {
    TempDir tmp("patience");
    synth_generate({1, 6, 32, 5}, tmp.str());
    const auto manifest = read_manifest(tmp.sub("manifest.csv"));
    const auto plugs = load_plugs(manifest, tmp.str(), ImageMode::Original, 0);
    const auto train_set = flatten(plugs);

    // validation uses the same images with deliberately wrong labels, so
    // fitting the train set drives the validation loss up from epoch 1
    std::vector<Sample> val_set = train_set;
    for (Sample& s : val_set) s.label = (s.label + 1) % 3;

    TrainConfig cfg;
    cfg.seed = 7;
    cfg.max_epochs = 20;
    cfg.patience = 1;
    cfg.batch_size = 6;

    Model model = build_model(ModelVariant::Model3, 11);
    const TrainResult result = train_model(model, train_set, val_set, cfg);
    CHECK(result.best_epoch == 1);
    CHECK(result.history.size() == 2);
    CHECK(result.history[1].val_loss > result.history[0].val_loss);

    // an identical run capped at one epoch lands on the same parameters
    TrainConfig one_epoch = cfg;
    one_epoch.max_epochs = 1;
    Model reference = build_model(ModelVariant::Model3, 11);
    train_model(reference, train_set, val_set, one_epoch);
    const ParamSet a = extract_params(model), b = extract_params(reference);
    for (std::size_t i = 0; i < a.entries.size(); ++i) {
        for (std::size_t j = 0; j < a.entries[i].weights.size(); ++j) {
            CHECK(a.entries[i].weights[j] == b.entries[i].weights[j]);
        }
    }
}

TEST_CASE("identical seeds and data give bit-identical training") {
    TempDir tmp("determinism");
    synth_generate({1, 4, 32, 3}, tmp.str());
    const auto manifest = read_manifest(tmp.sub("manifest.csv"));
    const auto plugs = load_plugs(manifest, tmp.str(), ImageMode::Original, 0);
    const auto all = flatten(plugs);
    const std::vector<Sample> train_set(all.begin(), all.begin() + 6);
    const std::vector<Sample> val_set(all.begin() + 6, all.end());

    TrainConfig cfg;
    cfg.seed = 99;
    cfg.max_epochs = 3;
    cfg.patience = 3;
    cfg.batch_size = 4;

    Model m1 = build_model(ModelVariant::Model3, 5);
    Model m2 = build_model(ModelVariant::Model3, 5);
    const TrainResult r1 = train_model(m1, train_set, val_set, cfg);
    const TrainResult r2 = train_model(m2, train_set, val_set, cfg);

    REQUIRE(r1.history.size() == r2.history.size());
    for (std::size_t e = 0; e < r1.history.size(); ++e) {
        CHECK(r1.history[e].train_loss == r2.history[e].train_loss);
        CHECK(r1.history[e].val_loss == r2.history[e].val_loss);
    }
    const ParamSet a = extract_params(m1), b = extract_params(m2);
    for (std::size_t i = 0; i < a.entries.size(); ++i) {
        for (std::size_t j = 0; j < a.entries[i].weights.size(); ++j) {
            CHECK(a.entries[i].weights[j] == b.entries[i].weights[j]);
        }
    }
}

TEST_CASE("best parameters achieve the minimum recorded validation loss") {
    TempDir tmp("bestval");
    synth_generate({2, 4, 32, 21}, tmp.str());
    const auto manifest = read_manifest(tmp.sub("manifest.csv"));
    const auto plugs = load_plugs(manifest, tmp.str(), ImageMode::Original, 0);

    std::vector<Sample> train_set, val_set;
    for (const auto& p : plugs) {
        auto& dst = p.plug_id.find("_p00") != std::string::npos ? train_set : val_set;
        for (const auto& img : p.images) dst.push_back({img, p.label});
    }

    TrainConfig cfg;
    cfg.seed = 3;
    cfg.max_epochs = 6;
    cfg.patience = 6;
    cfg.batch_size = 8;

    Model model = build_model(ModelVariant::Model3, 2);
    const TrainResult result = train_model(model, train_set, val_set, cfg);
    double min_val = result.history.front().val_loss;
    for (const auto& e : result.history) min_val = std::min(min_val, e.val_loss);
    CHECK(result.history[static_cast<std::size_t>(result.best_epoch - 1)].val_loss ==
          doctest::Approx(min_val));
}

TEST_CASE("overfit capacity check: 60-image set reaches 95% train accuracy") {
    TempDir tmp("overfit");
    synth_generate({2, 10, 32, 17}, tmp.str());  // 60 images
    const auto manifest = read_manifest(tmp.sub("manifest.csv"));
    const auto plugs = load_plugs(manifest, tmp.str(), ImageMode::Original, 0);

    std::vector<PlugSamples> train_plugs, val_plugs;
    for (const auto& p : plugs) {
        (p.plug_id.find("_p00") != std::string::npos ? train_plugs : val_plugs).push_back(p);
    }

    TrainConfig cfg;
    cfg.seed = 1;
    cfg.max_epochs = 50;
    cfg.patience = 50;
    cfg.batch_size = 10;

    Model model = build_model(ModelVariant::Model3, 8);
    train_model(model, flatten(train_plugs), flatten(val_plugs), cfg);

    const EvalReport on_train = evaluate_split(model, train_plugs, Granularity::Image);
    CHECK(on_train.accuracy >= 0.95);
}

}  // TEST_SUITE
