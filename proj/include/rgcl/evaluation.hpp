#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "rgcl/training.hpp"

namespace rgcl {

/// Graph embeddings with the rationale module disabled: no attribution
/// weighting and no projection head. One row per graph.
Tensor embed_graphs(const GraphDataset& dataset, const ParamMap& encoder_params,
                    const EncoderConfig& config);

struct ClassCounts {
    int label = 0;
    std::size_t train = 0;
    std::size_t test = 0;
    std::size_t test_correct = 0;
};

struct ProbeResult {
    double train_accuracy = 0.0;
    double test_accuracy = 0.0;
    std::size_t iterations = 0;
    std::vector<ClassCounts> per_class;
};

nlohmann::json to_json(const ProbeResult& r);

constexpr double kProbeL2 = 1e-4;
constexpr double kProbeGradTol = 1e-6;
constexpr std::size_t kProbeMaxIters = 5000;

/// Multinomial logistic regression on standardized embeddings, fit by
/// full-batch gradient descent with an L2 penalty. Deterministic in
/// `split_seed`.
ProbeResult linear_probe(const Tensor& embeddings, const std::vector<int>& labels,
                         std::uint64_t split_seed, double train_fraction = 0.8);

struct RationaleScore {
    std::vector<double> per_graph;
    double mean_precision = 0.0;
    double random_baseline = 0.0;  // mean over graphs of k / |V|
};

nlohmann::json to_json(const RationaleScore& s);

/// Maps a graph to its per-node probabilities (|V| x 1).
using NodeScorer = std::function<Tensor(const Graph&)>;

NodeScorer generator_scorer(const ParamMap& params, const GeneratorConfig& config);
NodeScorer uniform_scorer();
/// Scorer matching a trained state's variant (uniform for no_rv).
NodeScorer variant_scorer(const TrainState& state);

/// Top-k_g nodes by score (ties to the lower index) against each graph's
/// rationale mask, k_g = number of masked nodes.
RationaleScore rationale_precision(const GraphDataset& dataset, const NodeScorer& scorer);
RationaleScore rationale_precision(const GraphDataset& dataset, const ParamMap& generator_params,
                                   const GeneratorConfig& config);

/// Mean cosine similarities between projected views over a dataset.
struct ViewAgreement {
    double positive = 0.0;    // cos(r'_n, r''_n)
    double complement = 0.0;  // cos(r'_n, c_n)
};
ViewAgreement measure_view_agreement(const TrainState& state, const GraphDataset& dataset,
                                     std::uint64_t sampling_seed);

struct EvalResult {
    Variant variant = Variant::full;
    std::uint64_t seed = 0;
    std::optional<ProbeResult> probe;
    std::optional<RationaleScore> rationale;
};

nlohmann::json to_json(const EvalResult& r);

/// Embeds, probes (when labels exist) and scores rationales (when masks exist).
EvalResult evaluate_state(const TrainState& state, const GraphDataset& dataset,
                          std::uint64_t split_seed, double train_fraction = 0.8);

struct AblationResult {
    EvalResult eval;
    std::vector<LossReport> history;
    double encoder_passes_per_anchor = 0.0;  // per step, averaged over the run
    TrainState state;
};

/// Pretrains `variant` from scratch with `config` and evaluates it.
AblationResult run_ablation(Variant variant, const GraphDataset& dataset, TrainConfig config,
                            std::uint64_t split_seed);

}  // namespace rgcl
