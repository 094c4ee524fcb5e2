#include "rgcl/encoder.hpp"

#include <cmath>

#include "rgcl/error.hpp"

namespace rgcl {

using nlohmann::json;

std::string to_string(GnnType t) { return t == GnnType::gin ? "gin" : "gcn"; }
std::string to_string(Pooling p) { return p == Pooling::mean ? "mean" : "add"; }

GnnType parse_gnn_type(const std::string& s) {
    if (s == "gin" || s == "GIN") return GnnType::gin;
    if (s == "gcn" || s == "GCN") return GnnType::gcn;
    throw ConfigError("gnn_type must be 'gin' or 'gcn', got '" + s + "'");
}

Pooling parse_pooling(const std::string& s) {
    if (s == "mean") return Pooling::mean;
    if (s == "add" || s == "sum") return Pooling::add;
    throw ConfigError("pooling must be 'mean' or 'add', got '" + s + "'");
}

void EncoderConfig::validate() const {
    if (layer_dims.empty()) throw InvalidArgument("encoder layer_dims must be nonempty");
    for (std::size_t w : layer_dims)
        if (w < 1) throw InvalidArgument("encoder layer widths must be >= 1");
}

json to_json(const EncoderConfig& c) {
    return {{"gnn_type", to_string(c.gnn_type)},
            {"layer_dims", c.layer_dims},
            {"pooling", to_string(c.pooling)}};
}

EncoderConfig encoder_config_from_json(const json& j) {
    EncoderConfig c;
    c.gnn_type = parse_gnn_type(j.value("gnn_type", to_string(c.gnn_type)));
    c.layer_dims = j.value("layer_dims", c.layer_dims);
    c.pooling = parse_pooling(j.value("pooling", to_string(c.pooling)));
    return c;
}

ParamMap init_encoder_params(const EncoderConfig& config, std::size_t d_in, std::uint64_t seed,
                             const std::string& prefix) {
    config.validate();
    Rng rng(seed);
    ParamMap p;
    std::size_t prev = d_in;
    for (std::size_t l = 0; l < config.layer_dims.size(); ++l) {
        const std::size_t d = config.layer_dims[l];
        const std::string base = prefix + "." + std::to_string(l) + ".";
        if (config.gnn_type == GnnType::gin) {
            p[base + "w1"] = glorot_uniform(prev, d, rng);
            p[base + "b1"] = Tensor(1, d);
            p[base + "w2"] = glorot_uniform(d, d, rng);
            p[base + "b2"] = Tensor(1, d);
            p[base + "eps"] = Tensor::scalar(0.0);
        } else {
            p[base + "w"] = glorot_uniform(prev, d, rng);
            p[base + "b"] = Tensor(1, d);
        }
        prev = d;
    }
    return p;
}

Var mlp2(const Var& x, const Var& w1, const Var& b1, const Var& w2, const Var& b2) {
    Var hidden = ad::relu(ad::add(ad::matmul(x, w1), b1));
    return ad::add(ad::matmul(hidden, w2), b2);
}

namespace {

void check_rows(const GraphBatch& batch, const Var& h, const char* op) {
    if (h.rows() != batch.num_nodes())
        throw InvalidArgument(std::string(op) + ": feature rows " + std::to_string(h.rows()) +
                              " != batch nodes " + std::to_string(batch.num_nodes()));
}

}  // namespace

Var gin_layer(const GraphBatch& batch, const Var& h, const BoundParams& params,
              const std::string& layer_prefix) {
    check_rows(batch, h, "gin_layer");
    const Var& w1 = params[layer_prefix + "w1"];
    if (w1.rows() != h.cols())
        throw InvalidArgument("gin_layer: input width " + std::to_string(h.cols()) +
                              " != weight rows " + std::to_string(w1.rows()));
    Var neighbours = ad::scatter_edges(h, batch.edges, batch.num_nodes());
    // (1 + eps) * h, with eps a learnable 1x1 broadcast over every entry.
    Tensor ones(h.rows(), 1, 1.0);
    Var eps_col = ad::matmul(h.tape()->constant(std::move(ones)), params[layer_prefix + "eps"]);
    Var self = ad::add(h, ad::mul(h, eps_col));
    return mlp2(ad::add(self, neighbours), w1, params[layer_prefix + "b1"],
                params[layer_prefix + "w2"], params[layer_prefix + "b2"]);
}

Var gcn_layer(const GraphBatch& batch, const Var& h, const BoundParams& params,
              const std::string& layer_prefix) {
    check_rows(batch, h, "gcn_layer");
    const Var& w = params[layer_prefix + "w"];
    if (w.rows() != h.cols())
        throw InvalidArgument("gcn_layer: input width " + std::to_string(h.cols()) +
                              " != weight rows " + std::to_string(w.rows()));
    const std::size_t n = batch.num_nodes();
    std::vector<double> deg(n, 1.0);  // self-loop
    for (const auto& [u, v] : batch.edges) deg[v] += 1.0;
    std::vector<Edge> edges = batch.edges;
    std::vector<double> weights;
    weights.reserve(edges.size() + n);
    for (const auto& [u, v] : batch.edges) weights.push_back(1.0 / std::sqrt(deg[u] * deg[v]));
    for (std::size_t v = 0; v < n; ++v) {
        edges.emplace_back(v, v);
        weights.push_back(1.0 / deg[v]);
    }
    Var hw = ad::matmul(h, w);
    Var propagated = ad::scatter_edges(hw, edges, n, weights);
    return ad::relu(ad::add(propagated, params[layer_prefix + "b"]));
}

Var encode_nodes(const GraphBatch& batch, const Var& x, const BoundParams& params,
                 const EncoderConfig& config, const std::string& prefix) {
    config.validate();
    Var h = x;
    const std::size_t layers = config.layer_dims.size();
    for (std::size_t l = 0; l < layers; ++l) {
        const std::string base = prefix + "." + std::to_string(l) + ".";
        if (config.gnn_type == GnnType::gin) {
            h = gin_layer(batch, h, params, base);
            if (l + 1 < layers) h = ad::relu(h);
        } else {
            h = gcn_layer(batch, h, params, base);
        }
    }
    return h;
}

Var encode_graph(const GraphBatch& batch, const BoundParams& params, const EncoderConfig& config,
                 const std::optional<Var>& attribution, const std::string& prefix,
                 PassCounter* counter) {
    Tape& tape = *params.vars().begin()->second.tape();
    if (attribution && (attribution->rows() != batch.num_nodes() || attribution->cols() != 1))
        throw InvalidArgument("encode_graph: attribution must be " +
                              std::to_string(batch.num_nodes()) + "x1, got " +
                              std::to_string(attribution->rows()) + "x" +
                              std::to_string(attribution->cols()));
    Var x = tape.constant(batch.node_features);
    Var h = encode_nodes(batch, x, params, config, prefix);
    if (attribution) h = ad::mul(h, *attribution);
    if (counter) {
        ++counter->calls;
        counter->graphs += batch.num_graphs();
    }
    return config.pooling == Pooling::mean
               ? ad::segment_mean(h, batch.graph_id, batch.num_graphs())
               : ad::segment_sum(h, batch.graph_id, batch.num_graphs());
}

}  // namespace rgcl
