#include "rgcl/synthetic.hpp"

#include <algorithm>
#include <numeric>
#include <random>
#include <sstream>

#include "rgcl/error.hpp"
#include "rgcl/rng.hpp"

namespace rgcl {

using nlohmann::json;

std::string rng_state(const Rng& rng) {
    std::ostringstream os;
    os << rng;
    return os.str();
}

void set_rng_state(Rng& rng, const std::string& state) {
    std::istringstream is(state);
    Rng tmp;
    is >> tmp;
    if (is.fail()) throw FormatError("malformed rng state");
    rng = tmp;
}

void PlantedMotifSpec::validate() const {
    if (motif_size < 2) throw InvalidArgument("motif_size must be >= 2");
    if (min_nodes < motif_size)
        throw InvalidArgument("min_nodes must be >= motif_size");
    if (max_nodes < min_nodes) throw InvalidArgument("max_nodes must be >= min_nodes");
    if (num_classes < 1) throw InvalidArgument("num_classes must be >= 1");
    if (feature_dim < static_cast<std::size_t>(num_classes) + 1)
        throw InvalidArgument("feature_dim must be >= num_classes + 1");
    if (!(noise_std >= 0.0)) throw InvalidArgument("noise_std must be >= 0");
    if (!(edge_prob_background >= 0.0 && edge_prob_background <= 1.0))
        throw InvalidArgument("edge_prob_background must lie in [0, 1]");
}

json to_json(const PlantedMotifSpec& s) {
    return {{"motif_size", s.motif_size},
            {"background_size_range", {s.min_nodes, s.max_nodes}},
            {"num_classes", s.num_classes},
            {"feature_dim", s.feature_dim},
            {"noise_std", s.noise_std},
            {"edge_prob_background", s.edge_prob_background},
            {"seed", s.seed}};
}

PlantedMotifSpec planted_motif_spec_from_json(const json& j) {
    PlantedMotifSpec s;
    try {
        s.motif_size = j.value("motif_size", s.motif_size);
        if (j.contains("background_size_range")) {
            const auto& r = j.at("background_size_range");
            if (!r.is_array() || r.size() != 2)
                throw ConfigError("background_size_range must be [min, max]");
            s.min_nodes = r[0].get<std::size_t>();
            s.max_nodes = r[1].get<std::size_t>();
        }
        s.num_classes = j.value("num_classes", s.num_classes);
        s.feature_dim = j.value("feature_dim", s.feature_dim);
        s.noise_std = j.value("noise_std", s.noise_std);
        s.edge_prob_background = j.value("edge_prob_background", s.edge_prob_background);
        s.seed = j.value("seed", s.seed);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("synthetic spec: ") + e.what());
    }
    try {
        s.validate();
    } catch (const InvalidArgument& e) {
        throw ConfigError(std::string("synthetic spec: ") + e.what());
    }
    return s;
}

std::vector<Edge> motif_edges(int cls, std::size_t k) {
    std::vector<Edge> e;
    auto ring = [&] {
        for (std::size_t i = 0; i + 1 < k; ++i) e.emplace_back(i, i + 1);
        if (k > 2) e.emplace_back(k - 1, 0);
    };
    switch (cls) {
        case 0:
            ring();
            break;
        case 1:
            for (std::size_t i = 0; i < k; ++i)
                for (std::size_t j = i + 1; j < k; ++j) e.emplace_back(i, j);
            break;
        case 2:
            for (std::size_t i = 1; i < k; ++i) e.emplace_back(0, i);
            break;
        case 3:
            for (std::size_t i = 0; i + 1 < k; ++i) e.emplace_back(i, i + 1);
            break;
        default: {
            ring();
            const std::size_t hop = 2 + static_cast<std::size_t>(cls - 4) % std::max<std::size_t>(1, k - 3);
            for (std::size_t i = 0; i < k; ++i) e.emplace_back(i, (i + hop) % k);
            break;
        }
    }
    return e;
}

std::vector<double> motif_signature(int cls, std::size_t feature_dim) {
    std::vector<double> s(feature_dim, 0.0);
    s.at(1 + static_cast<std::size_t>(cls)) = 1.0;
    return s;
}

GraphDataset generate_planted_motif_dataset(const PlantedMotifSpec& spec, std::size_t count) {
    spec.validate();
    if (count < 1) throw InvalidArgument("count must be >= 1");

    Rng rng(spec.seed);
    std::normal_distribution<double> noise(0.0, 1.0);
    const std::size_t d = spec.feature_dim;
    const std::size_t k = spec.motif_size;

    GraphDataset ds;
    ds.feature_dim = d;
    ds.num_classes = spec.num_classes;
    ds.graphs.reserve(count);
    for (std::size_t gi = 0; gi < count; ++gi) {
        const int cls = static_cast<int>(gi % static_cast<std::size_t>(spec.num_classes));
        const std::size_t n =
            spec.min_nodes + static_cast<std::size_t>(rng() % (spec.max_nodes - spec.min_nodes + 1));
        const std::size_t bg = n - k;

        // Motif occupies local ids [0, k), background [k, n) before shuffling.
        std::vector<Edge> edges = motif_edges(cls, k);
        for (std::size_t i = k; i < n; ++i)
            for (std::size_t j = i + 1; j < n; ++j)
                if (uniform_open01(rng) < spec.edge_prob_background) edges.emplace_back(i, j);
        if (bg > 0) {
            // Two anchor edges tie the motif into the background.
            for (int a = 0; a < 2; ++a) {
                const std::size_t m = static_cast<std::size_t>(rng() % k);
                const std::size_t b = k + static_cast<std::size_t>(rng() % bg);
                edges.emplace_back(m, b);
            }
        }

        Tensor x(n, d);
        const std::vector<double> sig = motif_signature(cls, d);
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t c = 0; c < d; ++c) {
                const double base = i < k ? sig[c] : (c == 0 ? 1.0 : 0.0);
                x(i, c) = base + (spec.noise_std > 0.0 ? spec.noise_std * noise(rng) : 0.0);
            }
        }

        std::vector<std::size_t> perm(n);
        std::iota(perm.begin(), perm.end(), 0);
        std::shuffle(perm.begin(), perm.end(), rng);

        std::vector<bool> mask(n, false);
        for (std::size_t i = 0; i < k; ++i) mask[i] = true;
        Graph g = make_graph(std::move(x), edges, cls, std::move(mask));
        ds.graphs.push_back(permute_nodes(g, perm));
    }
    return ds;
}

}  // namespace rgcl
