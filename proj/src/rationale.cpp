#include "rgcl/rationale.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "rgcl/error.hpp"

namespace rgcl {

using nlohmann::json;

void GeneratorConfig::validate() const {
    gnn.validate();
    if (mlp_hidden < 1) throw InvalidArgument("generator mlp_hidden must be >= 1");
}

json to_json(const GeneratorConfig& c) {
    json j = to_json(c.gnn);
    j.erase("pooling");
    j["mlp_hidden"] = c.mlp_hidden;
    return j;
}

GeneratorConfig generator_config_from_json(const json& j) {
    GeneratorConfig c;
    c.gnn.gnn_type = parse_gnn_type(j.value("gnn_type", to_string(c.gnn.gnn_type)));
    c.gnn.layer_dims = j.value("layer_dims", c.gnn.layer_dims);
    c.mlp_hidden = j.value("mlp_hidden", c.mlp_hidden);
    return c;
}

ParamMap init_generator_params(const GeneratorConfig& config, std::size_t d_in,
                               std::uint64_t seed, const std::string& prefix) {
    config.validate();
    ParamMap p = init_encoder_params(config.gnn, d_in, seed, prefix + ".gnn");
    Rng rng(split_seed(seed, 1));
    const std::size_t d = config.gnn.out_dim();
    p[prefix + ".mlp.w1"] = glorot_uniform(d, config.mlp_hidden, rng);
    p[prefix + ".mlp.b1"] = Tensor(1, config.mlp_hidden);
    p[prefix + ".mlp.w2"] = glorot_uniform(config.mlp_hidden, 1, rng);
    p[prefix + ".mlp.b2"] = Tensor(1, 1);
    return p;
}

Var attribute_nodes(const GraphBatch& batch, const BoundParams& params,
                    const GeneratorConfig& config, const std::string& prefix) {
    const Var& first_w = params[prefix + ".gnn.0." + (config.gnn.gnn_type == GnnType::gin ? "w1" : "w")];
    if (first_w.rows() != batch.node_features.cols())
        throw InvalidArgument("attribute_nodes: generator expects feature dim " +
                              std::to_string(first_w.rows()) + ", graph has " +
                              std::to_string(batch.node_features.cols()));
    Tape& tape = *first_w.tape();
    Var x = tape.constant(batch.node_features);
    Var h = encode_nodes(batch, x, params, config.gnn, prefix + ".gnn");
    Var scores = mlp2(h, params[prefix + ".mlp.w1"], params[prefix + ".mlp.b1"],
                      params[prefix + ".mlp.w2"], params[prefix + ".mlp.b2"]);
    return ad::segment_softmax(scores, batch.graph_id, batch.num_graphs());
}

AttributionScores attribute_nodes(const Graph& g, const ParamMap& params,
                                  const GeneratorConfig& config, const std::string& prefix) {
    Tape tape;
    BoundParams bound(tape, params, false);
    const Graph* one = &g;
    GraphBatch batch = batch_graphs(std::span<const Graph>(one, 1));
    return {attribute_nodes(batch, bound, config, prefix).value()};
}

std::size_t view_size(std::size_t num_nodes, double rho) {
    if (!(rho > 0.0 && rho <= 1.0))
        throw InvalidArgument("sampling ratio rho must lie in (0, 1], got " + std::to_string(rho));
    const auto k = static_cast<std::size_t>(std::llround(rho * static_cast<double>(num_nodes)));
    return std::clamp<std::size_t>(k, 1, std::max<std::size_t>(1, num_nodes));
}

std::vector<std::size_t> gumbel_top_k(std::span<const double> weights, std::size_t k, Rng& rng) {
    const std::size_t n = weights.size();
    if (k > n) throw InvalidArgument("gumbel_top_k: k exceeds population");
    std::vector<std::pair<double, std::size_t>> keys(n);
    for (std::size_t i = 0; i < n; ++i) {
        if (!(weights[i] > 0.0) || !std::isfinite(weights[i]))
            throw InvalidArgument("gumbel_top_k: weights must be positive and finite");
        const double gumbel = -std::log(-std::log(uniform_open01(rng)));
        keys[i] = {std::log(weights[i]) + gumbel, i};
    }
    std::partial_sort(keys.begin(), keys.begin() + static_cast<std::ptrdiff_t>(k), keys.end(),
                      [](const auto& a, const auto& b) { return a.first > b.first; });
    std::vector<std::size_t> out(k);
    for (std::size_t i = 0; i < k; ++i) out[i] = keys[i].second;
    std::sort(out.begin(), out.end());
    return out;
}

std::vector<double> rationale_weights(const Tensor& probs) {
    std::vector<double> w(probs.size());
    for (std::size_t i = 0; i < w.size(); ++i)
        w[i] = std::max(probs[i], std::numeric_limits<double>::min());
    return w;
}

std::vector<double> complement_weights(const Tensor& probs) {
    std::vector<double> w(probs.size());
    for (std::size_t i = 0; i < w.size(); ++i)
        w[i] = std::clamp(1.0 - probs[i], kComplementClamp, 1.0 - kComplementClamp);
    return w;
}

namespace {

void check_scores(const Graph& g, const AttributionScores& scores) {
    if (scores.probs.rows() != g.num_nodes() || scores.probs.cols() != 1)
        throw InvalidArgument("attribution scores do not match the graph's node count");
}

}  // namespace

RationaleView sample_rationale(const Graph& g, const AttributionScores& scores, double rho,
                               Rng& rng) {
    check_scores(g, scores);
    const std::size_t k = view_size(g.num_nodes(), rho);
    RationaleView view;
    view.kept = gumbel_top_k(rationale_weights(scores.probs), k, rng);
    view.subgraph = induced_subgraph(g, view.kept);
    view.attribution = Tensor(k, 1);
    for (std::size_t i = 0; i < k; ++i) view.attribution[i] = scores.probs[view.kept[i]];
    return view;
}

ComplementView sample_complement(const Graph& g, const AttributionScores& scores, double rho,
                                 Rng& rng) {
    check_scores(g, scores);
    const std::size_t k = view_size(g.num_nodes(), rho);
    const std::vector<double> w = complement_weights(scores.probs);
    ComplementView view;
    view.kept = gumbel_top_k(w, k, rng);
    view.subgraph = induced_subgraph(g, view.kept);
    view.attribution = Tensor(k, 1);
    for (std::size_t i = 0; i < k; ++i) view.attribution[i] = w[view.kept[i]];
    return view;
}

std::vector<std::size_t> top_k_nodes(std::span<const double> probs, std::size_t k) {
    std::vector<std::size_t> order(probs.size());
    std::iota(order.begin(), order.end(), 0);
    k = std::min(k, order.size());
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(),
                      [&](std::size_t a, std::size_t b) {
                          if (probs[a] != probs[b]) return probs[a] > probs[b];
                          return a < b;
                      });
    order.resize(k);
    return order;
}

json rationale_export_record(std::size_t graph_index, const Tensor& probs, std::size_t k) {
    return {{"graph_index", graph_index},
            {"probs", probs.storage()},
            {"topk", top_k_nodes(probs.values(), k)}};
}

}  // namespace rgcl
