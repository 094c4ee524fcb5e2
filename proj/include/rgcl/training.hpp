#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "rgcl/contrastive.hpp"
#include "rgcl/encoder.hpp"
#include "rgcl/graph.hpp"
#include "rgcl/rationale.hpp"

namespace rgcl {

/// Which pipeline a run uses.
///  full                - generator-driven rationales, complements and l_in
///  no_rationale_views  - generator bypassed; uniform scores for every draw
///  no_independence     - lambda = 0 and no complement tower (two towers)
enum class Variant { full, no_rationale_views, no_independence };

std::string to_string(Variant v);
Variant parse_variant(const std::string& s);

struct TrainConfig {
    std::size_t batch_size = 32;
    std::size_t epochs = 20;
    double learning_rate = 0.01;
    double tau = 0.2;
    double lambda = 0.1;
    double rho = 0.8;
    std::uint64_t seed = 0;
    EncoderConfig encoder{GnnType::gin, {32, 32, 32}, Pooling::add};
    GeneratorConfig generator{};
    ProjectorConfig projector{};
    std::size_t checkpoint_every = 0;  // 0: only the final checkpoint
    Variant variant = Variant::full;

    /// Throws ConfigError naming the offending field.
    void validate() const;
    /// lambda actually applied (forced to 0 for no_independence).
    double effective_lambda() const { return variant == Variant::no_independence ? 0.0 : lambda; }
    bool operator==(const TrainConfig&) const = default;
};

nlohmann::json to_json(const TrainConfig& c);
/// Missing fields keep their defaults. Validates the result.
TrainConfig train_config_from_json(const nlohmann::json& j);

struct AdamState {
    ParamMap first_moment;
    ParamMap second_moment;
};

constexpr double kAdamBeta1 = 0.9;
constexpr double kAdamBeta2 = 0.999;
constexpr double kAdamEpsilon = 1e-8;

/// One bias-corrected Adam step; `step` is 1-based.
void adam_update(ParamMap& params, const ParamMap& grads, AdamState& state, double lr,
                 std::size_t step);

struct TrainState {
    TrainConfig config;
    std::size_t feature_dim = 0;
    ParamMap params;  // "enc.*", "gen.*", "proj.*"
    AdamState optimizer;
    std::size_t step = 0;
    Rng rng;
    std::vector<LossReport> history;
};

TrainState init_train_state(const TrainConfig& config, std::size_t feature_dim);

struct StepResult {
    LossReport report;
    PassCounter passes;       // graphs pushed through the backbone encoder
    double encoder_grad_norm = 0.0;
    double generator_grad_norm = 0.0;
    double projector_grad_norm = 0.0;
    double complement_grad_norm = 0.0;  // d(loss)/d(c), 0 without complements
};

/// Forward pass of the three-tower objective without touching the state.
/// `sampling_seed` fixes every rationale/complement draw.
struct ForwardOutputs {
    Tensor first, second, complement;  // projected rows; complement empty if skipped
    LossReport report;
    PassCounter passes;
};
ForwardOutputs evaluate_objective(const TrainState& state, std::span<const Graph> batch,
                                  std::uint64_t sampling_seed);

struct ObjectiveGradients {
    LossReport report;
    ParamMap grads;  // every parameter, zeros where the loss does not depend on it
};
ObjectiveGradients objective_gradients(const TrainState& state, std::span<const Graph> batch,
                                       std::uint64_t sampling_seed);

/// Joint update of encoder, generator and projector on one minibatch.
/// Throws NumericError (leaving the state untouched) on a non-finite loss.
StepResult train_step(TrainState& state, std::span<const Graph> batch);

struct PretrainOptions {
    std::optional<std::filesystem::path> output_dir;  // checkpoints + metrics.jsonl
    std::optional<std::size_t> stop_after_step;       // simulate an interruption
    std::function<void(const StepResult&)> on_step;
};

std::size_t steps_per_epoch(std::size_t dataset_size, std::size_t batch_size);

/// Graph indices forming minibatch `step` of the run; the last batch of an
/// epoch wraps around the epoch's permutation so every batch has
/// min(N, |dataset|) graphs.
std::vector<std::size_t> minibatch_indices(std::size_t dataset_size, const TrainConfig& config,
                                           std::size_t step);

/// Runs epochs x ceil(|dataset| / N) steps from `state.step` onwards.
void pretrain(TrainState& state, const GraphDataset& dataset, const PretrainOptions& options = {});
TrainState pretrain(const GraphDataset& dataset, const TrainConfig& config,
                    const PretrainOptions& options = {});

constexpr int kCheckpointFormatVersion = 1;

nlohmann::json checkpoint_to_json(const TrainState& state);
TrainState checkpoint_from_json(const nlohmann::json& j);
void save_checkpoint(const TrainState& state, const std::filesystem::path& path);
TrainState load_checkpoint(const std::filesystem::path& path);
/// Loads into `state`, requiring parameter shapes that match state.config;
/// `state` is left untouched on any error.
void load_checkpoint_into(TrainState& state, const std::filesystem::path& path);

std::filesystem::path metrics_path(const std::filesystem::path& output_dir);

}  // namespace rgcl
