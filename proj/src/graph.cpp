#include "rgcl/graph.hpp"

#include <algorithm>
#include <string>

#include "rgcl/error.hpp"

namespace rgcl {

void Graph::validate() const {
    const std::size_t n = num_nodes();
    if (n == 0) throw InvalidArgument("graph has no nodes");
    for (const auto& [u, v] : edges)
        if (u >= n || v >= n)
            throw InvalidArgument("edge (" + std::to_string(u) + "," + std::to_string(v) +
                                  ") references a node outside [0," + std::to_string(n) + ")");
    if (rationale_mask && rationale_mask->size() != n)
        throw InvalidArgument("rationale mask length " + std::to_string(rationale_mask->size()) +
                              " != node count " + std::to_string(n));
}

Graph make_graph(Tensor node_features, std::span<const Edge> undirected_edges,
                 std::optional<int> label, std::optional<std::vector<bool>> rationale_mask) {
    Graph g;
    g.node_features = std::move(node_features);
    g.label = label;
    g.rationale_mask = std::move(rationale_mask);
    g.edges.reserve(2 * undirected_edges.size());
    for (const auto& [u, v] : undirected_edges) {
        if (u == v) continue;
        g.edges.emplace_back(u, v);
        g.edges.emplace_back(v, u);
    }
    std::sort(g.edges.begin(), g.edges.end());
    g.edges.erase(std::unique(g.edges.begin(), g.edges.end()), g.edges.end());
    g.validate();
    return g;
}

void GraphDataset::validate() const {
    for (std::size_t i = 0; i < graphs.size(); ++i) {
        const Graph& g = graphs[i];
        g.validate();
        if (g.feature_dim() != feature_dim)
            throw InvalidArgument("graph " + std::to_string(i) + " has feature dim " +
                                  std::to_string(g.feature_dim()) + ", dataset expects " +
                                  std::to_string(feature_dim));
        if (g.label && num_classes && (*g.label < 0 || *g.label >= *num_classes))
            throw InvalidArgument("graph " + std::to_string(i) + " label " +
                                  std::to_string(*g.label) + " outside [0," +
                                  std::to_string(*num_classes) + ")");
    }
}

GraphBatch batch_graphs(std::span<const Graph> graphs) {
    if (graphs.empty()) throw InvalidArgument("batch_graphs: empty graph list");
    const std::size_t d = graphs.front().feature_dim();
    std::size_t total = 0;
    for (const Graph& g : graphs) {
        if (g.feature_dim() != d)
            throw InvalidArgument("batch_graphs: feature dims differ (" + std::to_string(d) +
                                  " vs " + std::to_string(g.feature_dim()) + ")");
        total += g.num_nodes();
    }

    GraphBatch b;
    b.node_features = Tensor(total, d);
    b.graph_id.reserve(total);
    std::size_t offset = 0;
    for (std::size_t gi = 0; gi < graphs.size(); ++gi) {
        const Graph& g = graphs[gi];
        std::copy(g.node_features.values().begin(), g.node_features.values().end(),
                  b.node_features.values().begin() + static_cast<std::ptrdiff_t>(offset * d));
        for (const auto& [u, v] : g.edges) b.edges.emplace_back(u + offset, v + offset);
        b.graph_id.insert(b.graph_id.end(), g.num_nodes(), gi);
        b.sizes.push_back(g.num_nodes());
        b.offsets.push_back(offset);
        b.edge_counts.push_back(g.edges.size());
        offset += g.num_nodes();
    }
    return b;
}

std::vector<Graph> unbatch(const GraphBatch& batch) {
    std::vector<Graph> out;
    out.reserve(batch.num_graphs());
    const std::size_t d = batch.node_features.cols();
    std::size_t edge_pos = 0;
    for (std::size_t gi = 0; gi < batch.num_graphs(); ++gi) {
        const std::size_t off = batch.offsets[gi], n = batch.sizes[gi];
        Graph g;
        auto first = batch.node_features.values().begin() + static_cast<std::ptrdiff_t>(off * d);
        g.node_features = Tensor(n, d, std::vector<double>(first, first + static_cast<std::ptrdiff_t>(n * d)));
        for (std::size_t e = 0; e < batch.edge_counts[gi]; ++e, ++edge_pos) {
            const auto& [u, v] = batch.edges[edge_pos];
            g.edges.emplace_back(u - off, v - off);
        }
        out.push_back(std::move(g));
    }
    return out;
}

Graph induced_subgraph(const Graph& g, std::span<const std::size_t> keep) {
    if (keep.empty()) throw InvalidArgument("induced_subgraph: empty keep set");
    const std::size_t n = g.num_nodes();
    std::vector<std::size_t> sorted(keep.begin(), keep.end());
    std::sort(sorted.begin(), sorted.end());
    sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());

    constexpr std::size_t kDropped = static_cast<std::size_t>(-1);
    std::vector<std::size_t> new_index(n, kDropped);
    for (std::size_t i = 0; i < sorted.size(); ++i) {
        if (sorted[i] >= n)
            throw InvalidArgument("induced_subgraph: node " + std::to_string(sorted[i]) +
                                  " out of range");
        new_index[sorted[i]] = i;
    }

    const std::size_t d = g.feature_dim();
    Graph sub;
    sub.node_features = Tensor(sorted.size(), d);
    for (std::size_t i = 0; i < sorted.size(); ++i)
        for (std::size_t c = 0; c < d; ++c) sub.node_features(i, c) = g.node_features(sorted[i], c);
    for (const auto& [u, v] : g.edges)
        if (new_index[u] != kDropped && new_index[v] != kDropped)
            sub.edges.emplace_back(new_index[u], new_index[v]);
    sub.label = g.label;
    if (g.rationale_mask) {
        std::vector<bool> mask(sorted.size());
        for (std::size_t i = 0; i < sorted.size(); ++i) mask[i] = (*g.rationale_mask)[sorted[i]];
        sub.rationale_mask = std::move(mask);
    }
    return sub;
}

Graph permute_nodes(const Graph& g, std::span<const std::size_t> perm) {
    const std::size_t n = g.num_nodes();
    if (perm.size() != n) throw InvalidArgument("permute_nodes: permutation length mismatch");
    std::vector<bool> seen(n, false);
    for (std::size_t p : perm) {
        if (p >= n || seen[p]) throw InvalidArgument("permute_nodes: not a permutation");
        seen[p] = true;
    }
    const std::size_t d = g.feature_dim();
    Graph out;
    out.node_features = Tensor(n, d);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t c = 0; c < d; ++c) out.node_features(perm[i], c) = g.node_features(i, c);
    for (const auto& [u, v] : g.edges) out.edges.emplace_back(perm[u], perm[v]);
    std::sort(out.edges.begin(), out.edges.end());
    out.label = g.label;
    if (g.rationale_mask) {
        std::vector<bool> mask(n);
        for (std::size_t i = 0; i < n; ++i) mask[perm[i]] = (*g.rationale_mask)[i];
        out.rationale_mask = std::move(mask);
    }
    return out;
}

}  // namespace rgcl
