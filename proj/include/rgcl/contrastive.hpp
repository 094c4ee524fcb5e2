#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "rgcl/params.hpp"

namespace rgcl {

/// Projection head h(.): one ReLU hidden layer, then row-wise L2 normalization.
struct ProjectorConfig {
    std::size_t hidden = 32;
    std::size_t out = 32;

    void validate() const;
    bool operator==(const ProjectorConfig&) const = default;
};

nlohmann::json to_json(const ProjectorConfig& c);
ProjectorConfig projector_config_from_json(const nlohmann::json& j);

ParamMap init_projector_params(std::size_t in_dim, const ProjectorConfig& config,
                               std::uint64_t seed, const std::string& prefix = "proj");

Var project(const Var& x, const BoundParams& params, const std::string& prefix = "proj");

/// Projected views of a minibatch of N anchors; row n belongs to anchor n.
struct BatchViews {
    Var first;                      // r'_n, N x d
    Var second;                     // r''_n, N x d
    std::optional<Var> complement;  // c_n, N x d

    std::size_t size() const { return first.rows(); }
};

/// A term of a loss denominator: which view set and which anchor's row.
struct ViewRef {
    enum class Set { first, second, complement };
    Set set;
    std::size_t index;

    bool operator==(const ViewRef&) const = default;
};

/// {r'_i, r''_i : i != n}, 2(N - 1) terms.
std::vector<ViewRef> sufficiency_denominator(std::size_t num_anchors, std::size_t anchor);
/// The positive r''_n followed by every complement c_i, N + 1 terms.
std::vector<ViewRef> independence_denominator(std::size_t num_anchors, std::size_t anchor);

/// Per-anchor sufficiency losses (N x 1):
/// -log exp(r'_n.r''_n / tau) / sum_{r- in R-_n} exp(r'_n.r- / tau).
Var sufficiency_losses(const BatchViews& views, double tau);
/// Per-anchor independence losses (N x 1):
/// -log exp(pos) / (exp(pos) + sum_{c in C} exp(r'_n.c / tau)).
Var independence_losses(const BatchViews& views, double tau);

/// Scalar loss of one anchor (row selection of the vectorized form).
Var sufficiency_loss(const BatchViews& views, std::size_t anchor, double tau);
Var independence_loss(const BatchViews& views, std::size_t anchor, double tau);

struct LossReport {
    double l_su = 0.0;  // mean over anchors
    double l_in = 0.0;  // mean over anchors; 0 when no complements were drawn
    double total = 0.0;
    double tau = 0.0;
    double lambda = 0.0;
};

nlohmann::json to_json(const LossReport& r, std::size_t step);

struct RgclLoss {
    Var total;
    LossReport report;
};

/// (1/N) sum_n (l_su^n + lambda * l_in^n). Without complements only the
/// sufficiency term is formed, which requires lambda == 0.
RgclLoss rgcl_loss(const BatchViews& views, double tau, double lambda);

}  // namespace rgcl
