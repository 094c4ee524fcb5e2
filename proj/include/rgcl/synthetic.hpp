#pragma once

#include <cstddef>
#include <cstdint>

#include <nlohmann/json.hpp>

#include "rgcl/graph.hpp"

namespace rgcl {

/// Parameters of the planted-motif benchmark. Each graph is a class-specific
/// motif of `motif_size` nodes wired into an Erdos-Renyi background; the
/// total node count is drawn uniformly from [min_nodes, max_nodes].
struct PlantedMotifSpec {
    std::size_t motif_size = 5;
    std::size_t min_nodes = 15;
    std::size_t max_nodes = 25;
    int num_classes = 2;
    std::size_t feature_dim = 8;
    double noise_std = 0.1;
    double edge_prob_background = 0.15;
    std::uint64_t seed = 0;

    void validate() const;
};

nlohmann::json to_json(const PlantedMotifSpec& spec);
PlantedMotifSpec planted_motif_spec_from_json(const nlohmann::json& j);

/// Undirected motif edges for a class; distinct classes get distinct wiring.
std::vector<Edge> motif_edges(int cls, std::size_t motif_size);

/// Feature signature shared by every motif node of a class (one-hot at
/// index 1 + cls; index 0 marks background nodes).
std::vector<double> motif_signature(int cls, std::size_t feature_dim);

/// Deterministic in `spec.seed`. Graph i has label i % num_classes and a
/// rationale mask marking exactly its motif nodes; node order is shuffled.
GraphDataset generate_planted_motif_dataset(const PlantedMotifSpec& spec, std::size_t count);

}  // namespace rgcl
