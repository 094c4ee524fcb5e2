#include <doctest.h>

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "rgcl/error.hpp"
#include "rgcl/synthetic.hpp"
#include "rgcl/training.hpp"
#include "test_support.hpp"

using namespace rgcl;
using rgcl::testing::rel_error;
using rgcl::testing::scratch_dir;

namespace {

TrainConfig small_config(std::uint64_t seed = 1) {
    TrainConfig c;
    c.batch_size = 4;
    c.epochs = 2;
    c.seed = seed;
    c.encoder = {GnnType::gin, {8, 8}, Pooling::add};
    c.generator = {{GnnType::gcn, {8}, Pooling::add}, 8};
    c.projector = {8, 8};
    return c;
}

GraphDataset small_dataset(std::size_t count = 10, std::uint64_t seed = 0) {
    PlantedMotifSpec spec;
    spec.min_nodes = 7;
    spec.max_nodes = 10;
    spec.feature_dim = 4;
    spec.seed = seed;
    return generate_planted_motif_dataset(spec, count);
}

std::string read_file(const std::filesystem::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

TEST_CASE("config validation names the field") {
    TrainConfig c;
    c.rho = 0.0;
    try {
        c.validate();
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()) == "config field 'rho' violates: 0 < rho <= 1");
    }
    c = {};
    c.tau = -1;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = {};
    c.batch_size = 1;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    CHECK_THROWS_AS(train_config_from_json(nlohmann::json::parse(R"({"lambda": -0.5})")), ConfigError);
    CHECK_THROWS_AS(train_config_from_json(nlohmann::json::parse(R"({"variant": "bogus"})")), ConfigError);
}

TEST_CASE("config JSON round-trip and defaults") {
    TrainConfig d = train_config_from_json(nlohmann::json::object());
    CHECK(d.batch_size == 32);
    CHECK(d.epochs == 20);
    CHECK(d.learning_rate == 0.01);
    CHECK(d.tau == 0.2);
    CHECK(d.lambda == 0.1);
    CHECK(d.rho == 0.8);
    CHECK(d.encoder == EncoderConfig{GnnType::gin, {32, 32, 32}, Pooling::add});
    CHECK(d.generator.gnn.gnn_type == GnnType::gcn);
    CHECK(d.generator.gnn.layer_dims == std::vector<std::size_t>{32, 32});
    TrainConfig c = small_config(7);
    c.variant = Variant::no_independence;
    CHECK(train_config_from_json(to_json(c)) == c);
    CHECK(c.effective_lambda() == 0.0);
    CHECK(train_config_from_json(nlohmann::json::parse(R"({"pooling": "mean"})")).encoder.pooling ==
          Pooling::mean);
}

TEST_CASE("first Adam step moves each parameter by lr against the gradient sign") {
    ParamMap p{{"w", Tensor::column({1.0, -2.0, 0.5})}};
    ParamMap g{{"w", Tensor::column({3.0, -0.1, 0.0})}};
    AdamState s;
    adam_update(p, g, s, 0.01, 1);
    CHECK(p["w"][0] == doctest::Approx(0.99));
    CHECK(p["w"][1] == doctest::Approx(-1.99));
    CHECK(p["w"][2] == 0.5);
    CHECK_THROWS_AS(adam_update(p, g, s, 0.01, 0), InvalidArgument);
    ParamMap missing;
    CHECK_THROWS_AS(adam_update(p, missing, s, 0.01, 2), InvalidArgument);
}

TEST_CASE("Adam descends a quadratic bowl") {
    const std::vector<double> target{3.0, -1.0, 0.25, 10.0};
    const std::vector<double> curvature{1.0, 10.0, 0.1, 2.0};
    ParamMap p{{"x", Tensor::column({0.0, 0.0, 0.0, 0.0})}};
    AdamState s;
    for (std::size_t step = 1; step <= 3000; ++step) {
        Tensor g(4, 1);
        for (std::size_t i = 0; i < 4; ++i) g[i] = curvature[i] * (p["x"][i] - target[i]);
        adam_update(p, {{"x", g}}, s, 0.05, step);
    }
    for (std::size_t i = 0; i < 4; ++i) CHECK(p["x"][i] == doctest::Approx(target[i]).epsilon(1e-3));
}

TEST_CASE("minibatches cover each epoch and wrap the last batch") {
    TrainConfig c = small_config();
    CHECK(steps_per_epoch(10, 4) == 3);
    std::multiset<std::size_t> seen;
    for (std::size_t step = 0; step < 3; ++step) {
        auto idx = minibatch_indices(10, c, step);
        CHECK(idx.size() == 4);
        seen.insert(idx.begin(), idx.end());
    }
    for (std::size_t i = 0; i < 10; ++i) CHECK(seen.count(i) >= 1);
    CHECK(minibatch_indices(10, c, 3) != minibatch_indices(10, c, 0));
    CHECK(minibatch_indices(3, c, 0).size() == 3);
}

TEST_CASE("full objective gradients match finite differences over 20 seeds") {
    GraphDataset ds = small_dataset(2);
    for (Variant variant : {Variant::full, Variant::no_independence}) {
        double worst = 0.0;
        for (std::uint64_t seed = 1; seed <= 20; ++seed) {
            TrainConfig c = small_config(seed);
            c.variant = variant;
            c.encoder = {GnnType::gin, {4, 3}, Pooling::add};
            c.generator = {{GnnType::gcn, {4}, Pooling::add}, 3};
            c.projector = {4, 3};
            TrainState s = init_train_state(c, ds.feature_dim);
            // Zero-initialized biases put dead ReLU rows exactly on the kink.
            Rng rng(seed);
            for (auto& [name, t] : s.params)
                if (name.find(".b") != std::string::npos || name.find("eps") != std::string::npos)
                    t = rgcl::testing::random_tensor(t.rows(), t.cols(), rng, -0.3, 0.3);
            const ObjectiveGradients g = objective_gradients(s, ds.graphs, seed);
            for (auto& [name, t] : s.params) {
                for (std::size_t j = 0; j < t.size(); ++j) {
                    const double orig = t[j];
                    t[j] = orig + 1e-5;
                    const double up = evaluate_objective(s, ds.graphs, seed).report.total;
                    t[j] = orig - 1e-5;
                    const double down = evaluate_objective(s, ds.graphs, seed).report.total;
                    t[j] = orig;
                    worst = std::max(worst, rel_error(g.grads.at(name)[j], (up - down) / 2e-5));
                }
            }
        }
        CAPTURE(to_string(variant));
        CHECK(worst < 1e-4);
    }
}

TEST_CASE("tower counts per variant") {
    GraphDataset ds = small_dataset(8);
    std::vector<Graph> batch(ds.graphs.begin(), ds.graphs.begin() + 4);
    for (auto [variant, towers] : {std::pair{Variant::full, 3}, {Variant::no_independence, 2},
                                   {Variant::no_rationale_views, 3}}) {
        TrainConfig c = small_config();
        c.variant = variant;
        TrainState s = init_train_state(c, ds.feature_dim);
        StepResult r = train_step(s, batch);
        CHECK(r.passes.calls == static_cast<std::size_t>(towers));
        CHECK(r.passes.graphs == 4u * towers);
        if (variant == Variant::no_independence) {
            CHECK(r.report.l_in == 0.0);
            CHECK(r.complement_grad_norm == 0.0);
        } else {
            CHECK(r.complement_grad_norm > 0.0);
        }
        if (variant == Variant::no_rationale_views) CHECK(r.generator_grad_norm == 0.0);
        else CHECK(r.generator_grad_norm > 0.0);
    }
}

TEST_CASE("no_rv leaves generator parameters untouched") {
    GraphDataset ds = small_dataset(8);
    TrainConfig c = small_config();
    c.variant = Variant::no_rationale_views;
    TrainState s = init_train_state(c, ds.feature_dim);
    const ParamMap before = params_with_prefix(s.params, "gen.");
    pretrain(s, ds);
    CHECK(params_with_prefix(s.params, "gen.") == before);
    CHECK(params_with_prefix(s.params, "enc.") != params_with_prefix(init_train_state(c, 4).params, "enc."));
}

TEST_CASE("non-finite loss raises and leaves the state alone") {
    GraphDataset ds = small_dataset(4);
    TrainState s = init_train_state(small_config(), ds.feature_dim);
    s.params["proj.w2"][0] = std::nan("");
    const ParamMap before = s.params;
    const std::string rng_before = rng_state(s.rng);
    CHECK_THROWS_AS(train_step(s, ds.graphs), NumericError);
    CHECK(s.step == 0);
    CHECK(s.history.empty());
    CHECK(rng_state(s.rng) == rng_before);
    CHECK(s.params.at("enc.0.w1") == before.at("enc.0.w1"));
}

TEST_CASE("pretraining is deterministic and writes metrics") {
    GraphDataset ds = small_dataset();
    auto a = scratch_dir("det_a"), b = scratch_dir("det_b");
    PretrainOptions oa, ob;
    oa.output_dir = a;
    ob.output_dir = b;
    TrainState sa = pretrain(ds, small_config(), oa);
    TrainState sb = pretrain(ds, small_config(), ob);
    CHECK(sa.step == 6);
    CHECK(read_file(metrics_path(a)) == read_file(metrics_path(b)));
    CHECK(sa.params == sb.params);
    CHECK(std::filesystem::exists(a / "checkpoint_final.json"));
    std::size_t lines = 0;
    std::ifstream in(metrics_path(a));
    for (std::string line; std::getline(in, line);) {
        auto j = nlohmann::json::parse(line);
        CHECK(j.at("step") == ++lines);
        CHECK(std::isfinite(j.at("total").get<double>()));
    }
    CHECK(lines == 6);
    TrainState sc = pretrain(ds, small_config(2));
    CHECK(sc.params != sa.params);
}

TEST_CASE("checkpoint round-trip and resume") {
    GraphDataset ds = small_dataset();
    TrainConfig c = small_config();
    c.checkpoint_every = 2;
    auto dir = scratch_dir("resume");
    PretrainOptions stop;
    stop.output_dir = dir;
    stop.stop_after_step = 2;
    TrainState partial = pretrain(ds, c, stop);
    CHECK(partial.step == 2);
    CHECK(std::filesystem::exists(dir / "checkpoint_step_2.json"));

    TrainState loaded = load_checkpoint(dir / "checkpoint_step_2.json");
    CHECK(loaded.params == partial.params);
    CHECK(loaded.optimizer.first_moment == partial.optimizer.first_moment);
    CHECK(loaded.optimizer.second_moment == partial.optimizer.second_moment);
    CHECK(loaded.rng == partial.rng);
    CHECK(loaded.config == partial.config);
    CHECK(loaded.history.size() == 2);

    PretrainOptions rest;
    rest.output_dir = dir;
    pretrain(loaded, ds, rest);
    TrainState straight = pretrain(ds, c);
    CHECK(loaded.params == straight.params);
    REQUIRE(loaded.history.size() == straight.history.size());
    for (std::size_t i = 0; i < straight.history.size(); ++i)
        CHECK(loaded.history[i].total == straight.history[i].total);
}

TEST_CASE("corrupt checkpoints are rejected") {
    GraphDataset ds = small_dataset(4);
    TrainState s = init_train_state(small_config(), ds.feature_dim);
    auto dir = scratch_dir("corrupt");
    save_checkpoint(s, dir / "ok.json");
    const std::string text = read_file(dir / "ok.json");
    std::ofstream(dir / "cut.json") << text.substr(0, text.size() / 2);
    CHECK_THROWS_AS(load_checkpoint(dir / "cut.json"), FormatError);
    CHECK_THROWS_AS(load_checkpoint(dir / "absent.json"), FormatError);

    auto j = nlohmann::json::parse(text);
    j["format_version"] = 99;
    std::ofstream(dir / "version.json") << j.dump();
    CHECK_THROWS_AS(load_checkpoint(dir / "version.json"), FormatError);

    TrainConfig wide = small_config();
    wide.encoder.layer_dims = {16, 16};
    TrainState other = init_train_state(wide, ds.feature_dim);
    const ParamMap before = other.params;
    CHECK_THROWS_AS(load_checkpoint_into(other, dir / "ok.json"), Error);
    CHECK(other.params == before);
}
