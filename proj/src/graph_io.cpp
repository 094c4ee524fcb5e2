#include "rgcl/graph_io.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "rgcl/error.hpp"

namespace rgcl {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::vector<std::string> read_lines(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open " + path.string());
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) {
        line.erase(std::remove_if(line.begin(), line.end(),
                                  [](char c) { return c == '\r' || c == ' ' || c == '\t'; }),
                   line.end());
        if (!line.empty()) lines.push_back(line);
    }
    return lines;
}

long parse_long(const std::string& s, const fs::path& file, std::size_t line_no) {
    try {
        std::size_t pos = 0;
        long v = std::stol(s, &pos);
        if (pos != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw FormatError(file.filename().string() + ":" + std::to_string(line_no + 1) +
                          ": expected an integer, got '" + s + "'");
    }
}

std::vector<long> read_int_column(const fs::path& path) {
    auto lines = read_lines(path);
    std::vector<long> out;
    out.reserve(lines.size());
    for (std::size_t i = 0; i < lines.size(); ++i) out.push_back(parse_long(lines[i], path, i));
    return out;
}

// Maps raw integer labels onto 0..C-1 in ascending raw order.
std::map<long, int> label_index(const std::vector<long>& raw) {
    std::map<long, int> idx;
    for (long v : raw) idx.emplace(v, 0);
    int next = 0;
    for (auto& [_, i] : idx) i = next++;
    return idx;
}

}  // namespace

GraphDataset load_tu_dataset(const fs::path& dir) {
    fs::path norm = dir.lexically_normal();
    if (norm.filename().empty()) norm = norm.parent_path();
    const std::string name = norm.filename().string();
    auto file = [&](const std::string& suffix) { return dir / (name + "_" + suffix + ".txt"); };

    const fs::path a_path = file("A");
    const fs::path ind_path = file("graph_indicator");
    for (const fs::path& p : {a_path, ind_path})
        if (!fs::exists(p)) throw FormatError("missing mandatory TU file " + p.string());

    const std::vector<long> indicator = read_int_column(ind_path);
    if (indicator.empty()) throw FormatError(ind_path.string() + ": no nodes");
    // Graph ids must start at 1, never decrease, and never skip a value.
    if (indicator.front() != 1)
        throw FormatError(ind_path.string() + ": graph ids must start at 1");
    for (std::size_t i = 1; i < indicator.size(); ++i) {
        const long prev = indicator[i - 1], cur = indicator[i];
        if (cur != prev && cur != prev + 1)
            throw FormatError(ind_path.string() + ":" + std::to_string(i + 1) +
                              ": non-contiguous graph indicator (" + std::to_string(prev) +
                              " followed by " + std::to_string(cur) + ")");
    }
    const std::size_t num_graphs = static_cast<std::size_t>(indicator.back());
    const std::size_t total_nodes = indicator.size();

    std::vector<std::size_t> first_node(num_graphs, 0), count(num_graphs, 0);
    for (std::size_t v = 0; v < total_nodes; ++v) {
        const std::size_t g = static_cast<std::size_t>(indicator[v] - 1);
        if (count[g] == 0) first_node[g] = v;
        ++count[g];
    }

    // Features.
    std::size_t feature_dim = 1;
    std::vector<int> node_class;
    if (fs::exists(file("node_labels"))) {
        const auto raw = read_int_column(file("node_labels"));
        if (raw.size() != total_nodes)
            throw FormatError(file("node_labels").string() + ": has " +
                              std::to_string(raw.size()) + " lines, expected " +
                              std::to_string(total_nodes));
        const auto idx = label_index(raw);
        feature_dim = idx.size();
        for (long v : raw) node_class.push_back(idx.at(v));
    }

    // Edges, grouped per graph in local indices.
    std::vector<std::vector<Edge>> edges(num_graphs);
    const auto a_lines = read_lines(a_path);
    for (std::size_t i = 0; i < a_lines.size(); ++i) {
        const auto comma = a_lines[i].find(',');
        if (comma == std::string::npos)
            throw FormatError(a_path.filename().string() + ":" + std::to_string(i + 1) +
                              ": expected 'i, j'");
        const long u = parse_long(a_lines[i].substr(0, comma), a_path, i);
        const long v = parse_long(a_lines[i].substr(comma + 1), a_path, i);
        if (u < 1 || v < 1 || static_cast<std::size_t>(u) > total_nodes ||
            static_cast<std::size_t>(v) > total_nodes)
            throw FormatError(a_path.filename().string() + ":" + std::to_string(i + 1) +
                              ": node id out of range");
        const std::size_t gu = static_cast<std::size_t>(indicator[u - 1] - 1);
        const std::size_t gv = static_cast<std::size_t>(indicator[v - 1] - 1);
        if (gu != gv)
            throw FormatError(a_path.filename().string() + ":" + std::to_string(i + 1) +
                              ": edge crosses graphs");
        edges[gu].emplace_back(static_cast<std::size_t>(u - 1) - first_node[gu],
                               static_cast<std::size_t>(v - 1) - first_node[gu]);
    }

    std::vector<int> graph_class;
    std::optional<int> num_classes;
    if (fs::exists(file("graph_labels"))) {
        const auto raw = read_int_column(file("graph_labels"));
        if (raw.size() != num_graphs)
            throw FormatError(file("graph_labels").string() + ": has " +
                              std::to_string(raw.size()) + " lines, expected " +
                              std::to_string(num_graphs));
        const auto idx = label_index(raw);
        num_classes = static_cast<int>(idx.size());
        for (long v : raw) graph_class.push_back(idx.at(v));
    }

    GraphDataset ds;
    ds.feature_dim = feature_dim;
    ds.num_classes = num_classes;
    ds.graphs.reserve(num_graphs);
    for (std::size_t g = 0; g < num_graphs; ++g) {
        Tensor x(count[g], feature_dim, node_class.empty() ? 1.0 : 0.0);
        if (!node_class.empty())
            for (std::size_t i = 0; i < count[g]; ++i)
                x(i, static_cast<std::size_t>(node_class[first_node[g] + i])) = 1.0;
        std::optional<int> label;
        if (!graph_class.empty()) label = graph_class[g];
        ds.graphs.push_back(make_graph(std::move(x), edges[g], label));
    }
    return ds;
}

json dataset_to_json(const GraphDataset& ds) {
    json graphs = json::array();
    for (const Graph& g : ds.graphs) {
        json jg;
        json x = json::array();
        for (std::size_t r = 0; r < g.num_nodes(); ++r) {
            json row = json::array();
            for (std::size_t c = 0; c < g.feature_dim(); ++c) row.push_back(g.node_features(r, c));
            x.push_back(std::move(row));
        }
        jg["x"] = std::move(x);
        json e = json::array();
        for (const auto& [u, v] : g.edges)
            if (u < v) e.push_back({u, v});
        jg["edges"] = std::move(e);
        if (g.label) jg["y"] = *g.label;
        if (g.rationale_mask) {
            json m = json::array();
            for (bool b : *g.rationale_mask) m.push_back(b);
            jg["rationale"] = std::move(m);
        }
        graphs.push_back(std::move(jg));
    }
    json j;
    j["graphs"] = std::move(graphs);
    j["feature_dim"] = ds.feature_dim;
    if (ds.num_classes) j["num_classes"] = *ds.num_classes;
    return j;
}

GraphDataset dataset_from_json(const json& j) {
    try {
        GraphDataset ds;
        ds.feature_dim = j.at("feature_dim").get<std::size_t>();
        if (j.contains("num_classes")) ds.num_classes = j.at("num_classes").get<int>();
        int max_label = -1;
        for (const json& jg : j.at("graphs")) {
            const json& x = jg.at("x");
            const std::size_t n = x.size();
            Tensor feats(n, ds.feature_dim);
            for (std::size_t r = 0; r < n; ++r) {
                if (x[r].size() != ds.feature_dim)
                    throw FormatError("graph " + std::to_string(ds.graphs.size()) + " node " +
                                      std::to_string(r) + " has " + std::to_string(x[r].size()) +
                                      " features, expected " + std::to_string(ds.feature_dim));
                for (std::size_t c = 0; c < ds.feature_dim; ++c) feats(r, c) = x[r][c].get<double>();
            }
            std::vector<Edge> edges;
            for (const json& e : jg.at("edges")) {
                if (e.size() != 2) throw FormatError("edge must be a [u, v] pair");
                edges.emplace_back(e[0].get<std::size_t>(), e[1].get<std::size_t>());
            }
            std::optional<int> label;
            if (jg.contains("y") && !jg.at("y").is_null()) {
                label = jg.at("y").get<int>();
                max_label = std::max(max_label, *label);
            }
            std::optional<std::vector<bool>> mask;
            if (jg.contains("rationale") && !jg.at("rationale").is_null())
                mask = jg.at("rationale").get<std::vector<bool>>();
            try {
                ds.graphs.push_back(make_graph(std::move(feats), edges, label, std::move(mask)));
            } catch (const InvalidArgument& e) {
                throw FormatError("graph " + std::to_string(ds.graphs.size()) + ": " + e.what());
            }
        }
        if (!ds.num_classes && max_label >= 0) ds.num_classes = max_label + 1;
        try {
            ds.validate();
        } catch (const InvalidArgument& e) {
            throw FormatError(e.what());
        }
        return ds;
    } catch (const json::exception& e) {
        throw FormatError(std::string("malformed graph JSON: ") + e.what());
    }
}

GraphDataset load_json_dataset(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open " + path.string());
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
    return dataset_from_json(j);
}

void save_json_dataset(const GraphDataset& ds, const fs::path& path) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw FormatError("cannot write " + path.string());
    out << dataset_to_json(ds).dump() << '\n';
    if (!out) throw FormatError("write failed for " + path.string());
}

std::string sha256_hex(const std::string& bytes) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1)
        throw Error("SHA-256 digest failed");
    std::string hex;
    hex.reserve(2 * len);
    char buf[3];
    for (unsigned int i = 0; i < len; ++i) {
        std::snprintf(buf, sizeof(buf), "%02x", digest[i]);
        hex += buf;
    }
    return hex;
}

std::string dataset_hash(const GraphDataset& ds) { return sha256_hex(dataset_to_json(ds).dump()); }

}  // namespace rgcl
