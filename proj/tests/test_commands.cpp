#include <doctest.h>

#include <cstdlib>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

#include "rgcl/commands.hpp"
#include "rgcl/error.hpp"
#include "rgcl/graph_io.hpp"
#include "test_support.hpp"

using namespace rgcl;
using rgcl::testing::data_dir;
using rgcl::testing::scratch_dir;

namespace {

struct CliRun {
    int code;
    std::string out, err;
};

CliRun cli(std::vector<std::string> args) {
    args.insert(args.begin(), "rgcl");
    std::vector<char*> argv;
    for (auto& a : args) argv.push_back(a.data());
    std::ostringstream out, err;
    const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
    return {code, out.str(), err.str()};
}

void write(const std::filesystem::path& p, const std::string& text) { std::ofstream(p) << text; }

const char* kSmallModel = R"("batch_size": 8, "epochs": 2,
  "encoder": {"gnn_type": "gin", "layer_dims": [8, 8], "pooling": "add"},
  "generator": {"gnn_type": "gcn", "layer_dims": [8], "mlp_hidden": 8},
  "projector": {"hidden": 8, "out": 8})";

}  // namespace

TEST_CASE("synth, pretrain, eval and rationale export") {
    auto dir = scratch_dir("cli");
    write(dir / "spec.json", R"({"motif_size": 4, "background_size_range": [8, 12], "num_classes": 2,
                                 "feature_dim": 4, "noise_std": 0.1, "edge_prob_background": 0.2, "seed": 3})");
    CliRun s = cli({"synth", "--spec", (dir / "spec.json").string(), "--count", "24", "--out",
                    (dir / "data.json").string()});
    REQUIRE(s.code == 0);
    CHECK(s.out.size() == 65);
    CHECK(s.out.substr(0, 64) == dataset_hash(load_json_dataset(dir / "data.json")));
    CliRun again = cli({"synth", "--spec", (dir / "spec.json").string(), "--count", "24", "--out",
                        (dir / "again.json").string()});
    CHECK(again.out == s.out);

    write(dir / "run.json", std::string("{") + kSmallModel +
                                R"(, "seed": 4, "dataset": {"json": "data.json"}, "output_dir": "out"})");
    CliRun p = cli({"pretrain", "--config", (dir / "run.json").string()});
    CHECK_MESSAGE(p.code == 0, p.err);
    CHECK(std::filesystem::exists(dir / "out" / "checkpoint_final.json"));
    CHECK(std::filesystem::exists(dir / "out" / "metrics.jsonl"));

    CliRun e = cli({"eval", "--config", (dir / "run.json").string(), "--checkpoint",
                    (dir / "out" / "checkpoint_final.json").string()});
    CHECK_MESSAGE(e.code == 0, e.err);
    CHECK(e.out.find("probe_test") != std::string::npos);
    auto res = nlohmann::json::parse(std::ifstream(dir / "out" / "eval_full.json"));
    CHECK(res.contains("probe"));
    CHECK(res.contains("rationale"));

    CliRun r = cli({"rationale", "--checkpoint", (dir / "out" / "checkpoint_final.json").string(),
                    "--dataset", "json:" + (dir / "data.json").string(), "--out",
                    (dir / "rat.json").string()});
    CHECK_MESSAGE(r.code == 0, r.err);
    auto rat = nlohmann::json::parse(std::ifstream(dir / "rat.json"));
    REQUIRE(rat.size() == 24);
    CHECK(rat[0]["topk"].size() == 4);
}

TEST_CASE("error exit codes") {
    auto dir = scratch_dir("cli_err");
    write(dir / "bad_rho.json", R"({"rho": 0, "dataset": {"json": "x.json"}})");
    CliRun c = cli({"pretrain", "--config", (dir / "bad_rho.json").string()});
    CHECK(c.code == 2);
    CHECK(c.err.find("rho") != std::string::npos);

    write(dir / "no_data.json", R"({"dataset": {"tu": "missing_dir"}})");
    CHECK(cli({"pretrain", "--config", (dir / "no_data.json").string()}).code == 3);
    CHECK(cli({"pretrain", "--config", (dir / "absent.json").string()}).code == 2);
    CHECK(cli({"frobnicate"}).code == 2);
    CHECK(cli({"pretrain"}).code == 2);

    write(dir / "tu.json", std::string("{") + kSmallModel + R"(, "dataset": {"tu": ")" +
                               (data_dir() / "NONCONTIG").string() + R"("}})");
    CliRun bad = cli({"pretrain", "--config", (dir / "tu.json").string()});
    CHECK(bad.code == 3);
    CHECK(bad.err.find("non-contiguous") != std::string::npos);
}

TEST_CASE("seed override from the environment") {
    auto dir = scratch_dir("cli_env");
    write(dir / "run.json", R"({"seed": 1, "dataset": {"synthetic": {"seed": 2}, "count": 5}})");
    setenv("RGCL_SEED", "99", 1);
    CHECK(load_run_config(dir / "run.json").train.seed == 99);
    setenv("RGCL_SEED", "abc", 1);
    CHECK_THROWS_AS(load_run_config(dir / "run.json"), ConfigError);
    unsetenv("RGCL_SEED");
    RunConfig rc = load_run_config(dir / "run.json");
    CHECK(rc.train.seed == 1);
    CHECK(rc.dataset.kind == DatasetSource::Kind::synthetic);
    CHECK(load_dataset(rc.dataset).size() == 5);
    CHECK(rc.output_dir == "rgcl_out");
}

TEST_CASE("two-cell sweep writes a summary CSV") {
    auto dir = scratch_dir("cli_sweep");
    write(dir / "run.json", std::string("{") + kSmallModel +
                                R"(, "dataset": {"synthetic": {"background_size_range": [8, 10], "feature_dim": 4}, "count": 16},
                                   "output_dir": "out"})");
    write(dir / "grid.json", R"({"tau": [0.2], "lambda": [0.0, 0.1], "rho": [0.8], "seeds": [1]})");
    CliRun r = cli({"sweep", "--config", (dir / "run.json").string(), "--grid", (dir / "grid.json").string(),
                    "--jobs", "2"});
    REQUIRE_MESSAGE(r.code == 0, r.err);
    std::ifstream csv(dir / "out" / "sweep.csv");
    std::vector<std::string> lines;
    for (std::string l; std::getline(csv, l);) lines.push_back(l);
    REQUIRE(lines.size() == 3);
    CHECK(lines[0] == "tau,lambda,rho,seed,probe_test_acc,rationale_precision");
    CHECK(lines[1].rfind("0.2,0.0,0.8,1,", 0) == 0);
    CHECK(lines[2].rfind("0.2,0.1,0.8,1,", 0) == 0);
}

#ifdef RGCL_CLI_PATH
TEST_CASE("installed binary reports usage errors") {
    const std::string cmd = std::string(RGCL_CLI_PATH) + " pretrain --config /nonexistent.json 2>/dev/null";
    const int status = std::system(cmd.c_str());
    REQUIRE(WIFEXITED(status));
    CHECK(WEXITSTATUS(status) == 2);
}
#endif
