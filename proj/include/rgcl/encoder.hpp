#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "rgcl/graph.hpp"
#include "rgcl/params.hpp"

namespace rgcl {

enum class GnnType { gin, gcn };
enum class Pooling { mean, add };

std::string to_string(GnnType t);
std::string to_string(Pooling p);
GnnType parse_gnn_type(const std::string& s);
Pooling parse_pooling(const std::string& s);

struct EncoderConfig {
    GnnType gnn_type = GnnType::gin;
    std::vector<std::size_t> layer_dims{32, 32, 32};
    Pooling pooling = Pooling::add;

    void validate() const;
    std::size_t out_dim() const { return layer_dims.back(); }
    bool operator==(const EncoderConfig&) const = default;
};

nlohmann::json to_json(const EncoderConfig& c);
EncoderConfig encoder_config_from_json(const nlohmann::json& j);

/// Counts graphs pushed through encode_graph.
struct PassCounter {
    std::size_t calls = 0;
    std::size_t graphs = 0;
};

/// Glorot-uniform weights, zero biases, GIN eps = 0. Names are
/// "<prefix>.<layer>.<w1|b1|w2|b2|eps>" for GIN and "<prefix>.<layer>.<w|b>"
/// for GCN.
ParamMap init_encoder_params(const EncoderConfig& config, std::size_t d_in, std::uint64_t seed,
                             const std::string& prefix = "enc");

/// Two affine maps with a ReLU in between.
Var mlp2(const Var& x, const Var& w1, const Var& b1, const Var& w2, const Var& b2);

/// H'_v = MLP((1 + eps) H_v + sum_{u in N(v)} H_u)
Var gin_layer(const GraphBatch& batch, const Var& h, const BoundParams& params,
              const std::string& layer_prefix);

/// H' = ReLU(Â H W + b), Â = D^-1/2 (A + I) D^-1/2.
Var gcn_layer(const GraphBatch& batch, const Var& h, const BoundParams& params,
              const std::string& layer_prefix);

/// Stacked layers; ReLU between GIN layers (GCN layers carry their own).
Var encode_nodes(const GraphBatch& batch, const Var& x, const BoundParams& params,
                 const EncoderConfig& config, const std::string& prefix = "enc");

/// Per-graph representation. When `attribution` (one row per batch node) is
/// given, node embeddings are scaled by it before pooling.
Var encode_graph(const GraphBatch& batch, const BoundParams& params, const EncoderConfig& config,
                 const std::optional<Var>& attribution = std::nullopt,
                 const std::string& prefix = "enc", PassCounter* counter = nullptr);

}  // namespace rgcl
