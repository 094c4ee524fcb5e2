#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "rgcl/tensor.hpp"

namespace rgcl {

using Edge = std::pair<std::size_t, std::size_t>;

/// Node-attributed undirected graph. Every undirected edge is stored twice
/// (u->v and v->u) so aggregation needs no symmetry handling.
struct Graph {
    Tensor node_features;  // |V| x d_in
    std::vector<Edge> edges;
    std::optional<int> label;
    std::optional<std::vector<bool>> rationale_mask;

    std::size_t num_nodes() const { return node_features.rows(); }
    std::size_t feature_dim() const { return node_features.cols(); }

    /// Throws InvalidArgument when an invariant is broken.
    void validate() const;

    bool operator==(const Graph&) const = default;
};

/// Builds a graph from undirected edge pairs: drops self-loops and duplicates,
/// then stores both directions sorted by (src, dst).
Graph make_graph(Tensor node_features, std::span<const Edge> undirected_edges,
                 std::optional<int> label = std::nullopt,
                 std::optional<std::vector<bool>> rationale_mask = std::nullopt);

struct GraphDataset {
    std::vector<Graph> graphs;
    std::size_t feature_dim = 0;
    std::optional<int> num_classes;

    std::size_t size() const { return graphs.size(); }
    bool empty() const { return graphs.empty(); }
    void validate() const;

    bool operator==(const GraphDataset&) const = default;
};

/// Disjoint union of several graphs.
struct GraphBatch {
    Tensor node_features;
    std::vector<Edge> edges;
    std::vector<std::size_t> graph_id;  // node -> source graph
    std::vector<std::size_t> sizes;     // nodes per graph
    std::vector<std::size_t> offsets;   // first node of each graph
    std::vector<std::size_t> edge_counts;

    std::size_t num_graphs() const { return sizes.size(); }
    std::size_t num_nodes() const { return graph_id.size(); }
};

GraphBatch batch_graphs(std::span<const Graph> graphs);
/// Splits a batch back into its graphs (labels and masks are not carried).
std::vector<Graph> unbatch(const GraphBatch& batch);

/// Subgraph on `keep` with nodes renumbered densely in ascending original
/// order; an edge survives iff both endpoints are kept.
Graph induced_subgraph(const Graph& g, std::span<const std::size_t> keep);

/// Applies a node relabeling: node i of `g` becomes node perm[i].
Graph permute_nodes(const Graph& g, std::span<const std::size_t> perm);

}  // namespace rgcl
