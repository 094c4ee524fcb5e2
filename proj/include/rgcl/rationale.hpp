#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "rgcl/encoder.hpp"
#include "rgcl/graph.hpp"
#include "rgcl/params.hpp"
#include "rgcl/rng.hpp"

namespace rgcl {

/// Generator r(.): a GNN followed by a per-node two-layer MLP that emits one
/// score per node, softmax-normalized within each graph.
struct GeneratorConfig {
    EncoderConfig gnn{GnnType::gcn, {32, 32}, Pooling::add};
    std::size_t mlp_hidden = 32;

    void validate() const;
    bool operator==(const GeneratorConfig&) const = default;
};

nlohmann::json to_json(const GeneratorConfig& c);
GeneratorConfig generator_config_from_json(const nlohmann::json& j);

ParamMap init_generator_params(const GeneratorConfig& config, std::size_t d_in,
                               std::uint64_t seed, const std::string& prefix = "gen");

/// Per-node probabilities p(v|g) for every node of the batch (n x 1), summing
/// to one within each graph.
Var attribute_nodes(const GraphBatch& batch, const BoundParams& params,
                    const GeneratorConfig& config, const std::string& prefix = "gen");

struct AttributionScores {
    Tensor probs;  // |V| x 1
};

AttributionScores attribute_nodes(const Graph& g, const ParamMap& params,
                                  const GeneratorConfig& config,
                                  const std::string& prefix = "gen");

/// Complement weights and attribution are 1 - p clamped into this band.
constexpr double kComplementClamp = 1e-6;

/// max(1, round(rho * n)); throws InvalidArgument unless 0 < rho <= 1.
std::size_t view_size(std::size_t num_nodes, double rho);

/// Weighted sampling of k distinct indices without replacement: each index
/// gets key log(w_i) + Gumbel noise and the k largest keys win. Returned in
/// ascending index order.
std::vector<std::size_t> gumbel_top_k(std::span<const double> weights, std::size_t k, Rng& rng);

struct RationaleView {
    Graph subgraph;
    std::vector<std::size_t> kept;
    Tensor attribution;  // p(v|g) of kept nodes, in subgraph order
};

struct ComplementView {
    Graph subgraph;
    std::vector<std::size_t> kept;
    Tensor attribution;  // clamp(1 - p(v|g)) of kept nodes
};

std::vector<double> rationale_weights(const Tensor& probs);
std::vector<double> complement_weights(const Tensor& probs);

RationaleView sample_rationale(const Graph& g, const AttributionScores& scores, double rho,
                               Rng& rng);
ComplementView sample_complement(const Graph& g, const AttributionScores& scores, double rho,
                                 Rng& rng);

/// Indices of the k largest probabilities; ties go to the lower index.
std::vector<std::size_t> top_k_nodes(std::span<const double> probs, std::size_t k);

/// {"graph_index": i, "probs": [...], "topk": [...]}
nlohmann::json rationale_export_record(std::size_t graph_index, const Tensor& probs,
                                       std::size_t k);

}  // namespace rgcl
