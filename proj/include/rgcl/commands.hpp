#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "rgcl/synthetic.hpp"
#include "rgcl/training.hpp"

namespace rgcl {

/// Exit codes of the command-line tool.
enum ExitCode : int {
    kExitOk = 0,
    kExitFailure = 1,
    kExitConfig = 2,
    kExitData = 3,
    kExitNumeric = 4,
};

struct DatasetSource {
    enum class Kind { tu, json, synthetic };
    Kind kind = Kind::synthetic;
    std::filesystem::path path;  // tu / json
    PlantedMotifSpec spec;       // synthetic
    std::size_t count = 0;       // synthetic
};

/// Run configuration file: every TrainConfig field plus
///   "dataset": {"tu": dir} | {"json": path} | {"synthetic": {...}, "count": n}
///   "output_dir": path, "probe_train_fraction": fraction (default 0.8)
struct RunConfig {
    TrainConfig train;
    DatasetSource dataset;
    std::filesystem::path output_dir = "rgcl_out";
    double probe_train_fraction = 0.8;
};

/// Relative paths resolve against `base_dir`. Throws ConfigError.
RunConfig run_config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir);
/// Reads and validates a config file; RGCL_SEED, when set, overrides the seed.
RunConfig load_run_config(const std::filesystem::path& path);
nlohmann::json to_json(const RunConfig& c);

GraphDataset load_dataset(const DatasetSource& source);
/// "tu:<dir>", "json:<file>", or a bare path (directory = TU, file = JSON).
DatasetSource parse_dataset_argument(const std::string& arg);

struct SweepGrid {
    std::vector<double> tau;
    std::vector<double> lambda;
    std::vector<double> rho;
    std::vector<std::uint64_t> seeds;
};
SweepGrid load_sweep_grid(const std::filesystem::path& path, std::uint64_t default_seed);

struct SweepRow {
    double tau = 0.0, lambda = 0.0, rho = 0.0;
    std::uint64_t seed = 0;
    double probe_test_acc = 0.0;
    double rationale_precision = 0.0;
};

int cmd_synth(const std::filesystem::path& spec_path, std::size_t count,
              const std::filesystem::path& out, std::ostream& log);
int cmd_pretrain(const std::filesystem::path& config_path, const std::optional<std::string>& variant,
                 std::ostream& log);
int cmd_eval(const std::filesystem::path& config_path, const std::filesystem::path& checkpoint,
             const std::optional<std::string>& variant, std::ostream& log);
int cmd_rationale(const std::filesystem::path& checkpoint, const std::string& dataset,
                  const std::filesystem::path& out, std::ostream& log);
int cmd_sweep(const std::filesystem::path& config_path, const std::filesystem::path& grid_path,
              std::size_t jobs, std::ostream& log);

/// Full CLI entry point; maps library errors onto ExitCode values.
int run_cli(int argc, char** argv, std::ostream& out, std::ostream& err);

}  // namespace rgcl
