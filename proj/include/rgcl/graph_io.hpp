#pragma once

#include <filesystem>
#include <string>

#include <nlohmann/json.hpp>

#include "rgcl/graph.hpp"

namespace rgcl {

/// Reads a TU-format dataset directory (DS_A.txt, DS_graph_indicator.txt and
/// optionally DS_graph_labels.txt / DS_node_labels.txt, where DS is the
/// directory name). Node labels become one-hot features; without them every
/// node gets the constant feature 1.0. Graph labels are remapped to
/// 0..C-1 in ascending order of their raw value.
GraphDataset load_tu_dataset(const std::filesystem::path& dir);

nlohmann::json dataset_to_json(const GraphDataset& ds);
GraphDataset dataset_from_json(const nlohmann::json& j);

GraphDataset load_json_dataset(const std::filesystem::path& path);
void save_json_dataset(const GraphDataset& ds, const std::filesystem::path& path);

/// Hex SHA-256 of the canonical JSON serialization.
std::string dataset_hash(const GraphDataset& ds);

std::string sha256_hex(const std::string& bytes);

}  // namespace rgcl
