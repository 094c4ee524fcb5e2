#include "rgcl/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "rgcl/error.hpp"

namespace rgcl {

using nlohmann::json;

Tensor embed_graphs(const GraphDataset& dataset, const ParamMap& encoder_params,
                    const EncoderConfig& config) {
    const std::size_t d_out = config.out_dim();
    Tensor out(dataset.size(), d_out);
    constexpr std::size_t kChunk = 64;
    for (std::size_t start = 0; start < dataset.size(); start += kChunk) {
        const std::size_t end = std::min(dataset.size(), start + kChunk);
        std::span<const Graph> chunk(dataset.graphs.data() + start, end - start);
        Tape tape;
        BoundParams bound(tape, params_with_prefix(encoder_params, "enc."), false);
        const GraphBatch batch = batch_graphs(chunk);
        const std::string first_w = config.gnn_type == GnnType::gin ? "enc.0.w1" : "enc.0.w";
        if (bound[first_w].rows() != batch.node_features.cols())
            throw InvalidArgument("embed_graphs: encoder expects feature dim " +
                                  std::to_string(bound[first_w].rows()) + ", dataset has " +
                                  std::to_string(batch.node_features.cols()));
        const Tensor& x = encode_graph(batch, bound, config).value();
        for (std::size_t r = 0; r < x.rows(); ++r)
            for (std::size_t c = 0; c < d_out; ++c) out(start + r, c) = x(r, c);
    }
    return out;
}

json to_json(const ProbeResult& r) {
    json classes = json::array();
    for (const ClassCounts& c : r.per_class)
        classes.push_back({{"label", c.label},
                           {"train", c.train},
                           {"test", c.test},
                           {"test_correct", c.test_correct}});
    return {{"train_accuracy", r.train_accuracy},
            {"test_accuracy", r.test_accuracy},
            {"iterations", r.iterations},
            {"per_class", std::move(classes)}};
}

namespace {

// Largest eigenvalue of X^T X / n by power iteration.
double gram_spectral_norm(const std::vector<std::vector<double>>& x, std::size_t dim) {
    std::vector<double> v(dim, 1.0 / std::sqrt(static_cast<double>(dim)));
    double lambda = 0.0;
    for (int it = 0; it < 200; ++it) {
        std::vector<double> w(dim, 0.0);
        for (const auto& row : x) {
            double dot = 0.0;
            for (std::size_t j = 0; j < dim; ++j) dot += row[j] * v[j];
            for (std::size_t j = 0; j < dim; ++j) w[j] += dot * row[j];
        }
        double norm = 0.0;
        for (double& e : w) {
            e /= static_cast<double>(x.size());
            norm += e * e;
        }
        norm = std::sqrt(norm);
        if (norm == 0.0) return 0.0;
        lambda = norm;
        for (std::size_t j = 0; j < dim; ++j) v[j] = w[j] / norm;
    }
    return lambda;
}

}  // namespace

ProbeResult linear_probe(const Tensor& embeddings, const std::vector<int>& labels,
                         std::uint64_t split_seed, double train_fraction) {
    const std::size_t m = embeddings.rows();
    if (labels.size() != m) throw InvalidArgument("linear_probe: label count != embedding rows");
    if (m < 2) throw InvalidArgument("linear_probe: need at least 2 samples");
    if (!(train_fraction > 0.0 && train_fraction < 1.0))
        throw InvalidArgument("linear_probe: train_fraction must lie in (0, 1)");

    std::vector<std::size_t> order(m);
    std::iota(order.begin(), order.end(), 0);
    Rng rng(split_seed);
    std::shuffle(order.begin(), order.end(), rng);
    const std::size_t n_train = std::clamp<std::size_t>(
        static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(m))), 1, m - 1);
    const std::vector<std::size_t> train(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
    const std::vector<std::size_t> test(order.begin() + static_cast<std::ptrdiff_t>(n_train), order.end());

    std::map<int, std::size_t> class_index;
    for (int y : labels) class_index.emplace(y, 0);
    {
        std::size_t next = 0;
        for (auto& [_, i] : class_index) i = next++;
    }
    const std::size_t num_classes = class_index.size();
    std::vector<bool> in_train(num_classes, false);
    for (std::size_t i : train) in_train[class_index.at(labels[i])] = true;
    if (std::count(in_train.begin(), in_train.end(), true) < 2)
        throw InvalidArgument("linear_probe: train split contains a single class");

    // Standardize with train statistics; append a bias column.
    const std::size_t d = embeddings.cols();
    std::vector<double> mu(d, 0.0), sd(d, 0.0);
    for (std::size_t i : train)
        for (std::size_t c = 0; c < d; ++c) mu[c] += embeddings(i, c);
    for (double& v : mu) v /= static_cast<double>(n_train);
    for (std::size_t i : train)
        for (std::size_t c = 0; c < d; ++c) sd[c] += std::pow(embeddings(i, c) - mu[c], 2);
    for (double& v : sd) {
        v = std::sqrt(v / static_cast<double>(n_train));
        if (v < 1e-12) v = 1.0;
    }
    const std::size_t dim = d + 1;
    auto features = [&](std::size_t i) {
        std::vector<double> f(dim, 1.0);
        for (std::size_t c = 0; c < d; ++c) f[c] = (embeddings(i, c) - mu[c]) / sd[c];
        return f;
    };
    std::vector<std::vector<double>> xtr;
    std::vector<std::size_t> ytr;
    for (std::size_t i : train) {
        xtr.push_back(features(i));
        ytr.push_back(class_index.at(labels[i]));
    }

    const double lipschitz = 1.1 * (0.5 * gram_spectral_norm(xtr, dim) + kProbeL2);
    const double lr = lipschitz > 0.0 ? 1.0 / lipschitz : 1.0;

    std::vector<double> w(dim * num_classes, 0.0);  // row-major dim x C
    std::vector<double> grad(w.size());
    std::vector<double> p(num_classes);
    ProbeResult result;
    for (std::size_t it = 0; it < kProbeMaxIters; ++it) {
        std::fill(grad.begin(), grad.end(), 0.0);
        for (std::size_t s = 0; s < xtr.size(); ++s) {
            const auto& x = xtr[s];
            double mx = -INFINITY;
            for (std::size_t k = 0; k < num_classes; ++k) {
                double z = 0.0;
                for (std::size_t j = 0; j < dim; ++j) z += x[j] * w[j * num_classes + k];
                p[k] = z;
                mx = std::max(mx, z);
            }
            double sum = 0.0;
            for (double& v : p) sum += (v = std::exp(v - mx));
            for (std::size_t k = 0; k < num_classes; ++k) {
                const double delta = p[k] / sum - (k == ytr[s] ? 1.0 : 0.0);
                for (std::size_t j = 0; j < dim; ++j) grad[j * num_classes + k] += delta * x[j];
            }
        }
        double gnorm = 0.0;
        for (std::size_t j = 0; j < dim; ++j)
            for (std::size_t k = 0; k < num_classes; ++k) {
                double& g = grad[j * num_classes + k];
                g /= static_cast<double>(xtr.size());
                if (j < d) g += kProbeL2 * w[j * num_classes + k];
                gnorm += g * g;
            }
        result.iterations = it + 1;
        if (std::sqrt(gnorm) < kProbeGradTol) break;
        for (std::size_t i = 0; i < w.size(); ++i) w[i] -= lr * grad[i];
    }

    auto predict = [&](std::size_t i) {
        const auto x = features(i);
        std::size_t best = 0;
        double best_z = -INFINITY;
        for (std::size_t k = 0; k < num_classes; ++k) {
            double z = 0.0;
            for (std::size_t j = 0; j < dim; ++j) z += x[j] * w[j * num_classes + k];
            if (z > best_z) {
                best_z = z;
                best = k;
            }
        }
        return best;
    };

    result.per_class.resize(num_classes);
    for (const auto& [label, k] : class_index) result.per_class[k].label = label;
    std::size_t train_correct = 0, test_correct = 0;
    for (std::size_t i : train) {
        const std::size_t y = class_index.at(labels[i]);
        ++result.per_class[y].train;
        if (predict(i) == y) ++train_correct;
    }
    for (std::size_t i : test) {
        const std::size_t y = class_index.at(labels[i]);
        ++result.per_class[y].test;
        if (predict(i) == y) {
            ++test_correct;
            ++result.per_class[y].test_correct;
        }
    }
    result.train_accuracy = static_cast<double>(train_correct) / static_cast<double>(train.size());
    result.test_accuracy = static_cast<double>(test_correct) / static_cast<double>(test.size());
    return result;
}

json to_json(const RationaleScore& s) {
    return {{"mean_precision", s.mean_precision},
            {"random_baseline", s.random_baseline},
            {"per_graph", s.per_graph}};
}

NodeScorer generator_scorer(const ParamMap& params, const GeneratorConfig& config) {
    ParamMap gen = params_with_prefix(params, "gen.");
    return [gen = std::move(gen), config](const Graph& g) {
        return attribute_nodes(g, gen, config, "gen").probs;
    };
}

NodeScorer uniform_scorer() {
    return [](const Graph& g) {
        return Tensor(g.num_nodes(), 1, 1.0 / static_cast<double>(g.num_nodes()));
    };
}

NodeScorer variant_scorer(const TrainState& state) {
    if (state.config.variant == Variant::no_rationale_views) return uniform_scorer();
    return generator_scorer(state.params, state.config.generator);
}

RationaleScore rationale_precision(const GraphDataset& dataset, const NodeScorer& scorer) {
    RationaleScore score;
    if (dataset.empty()) return score;
    double sum = 0.0, baseline = 0.0;
    for (std::size_t i = 0; i < dataset.size(); ++i) {
        const Graph& g = dataset.graphs[i];
        if (!g.rationale_mask)
            throw InvalidArgument("rationale_precision: graph " + std::to_string(i) +
                                  " has no rationale mask");
        const auto& mask = *g.rationale_mask;
        const std::size_t k = static_cast<std::size_t>(std::count(mask.begin(), mask.end(), true));
        if (k == 0)
            throw InvalidArgument("rationale_precision: graph " + std::to_string(i) +
                                  " has an empty rationale mask");
        const Tensor probs = scorer(g);
        if (probs.size() != g.num_nodes())
            throw InvalidArgument("rationale_precision: scorer returned wrong length");
        std::size_t hits = 0;
        for (std::size_t v : top_k_nodes(probs.values(), k)) hits += mask[v] ? 1 : 0;
        const double precision = static_cast<double>(hits) / static_cast<double>(k);
        score.per_graph.push_back(precision);
        sum += precision;
        baseline += static_cast<double>(k) / static_cast<double>(g.num_nodes());
    }
    score.mean_precision = sum / static_cast<double>(dataset.size());
    score.random_baseline = baseline / static_cast<double>(dataset.size());
    return score;
}

RationaleScore rationale_precision(const GraphDataset& dataset, const ParamMap& generator_params,
                                   const GeneratorConfig& config) {
    return rationale_precision(dataset, generator_scorer(generator_params, config));
}

ViewAgreement measure_view_agreement(const TrainState& state, const GraphDataset& dataset,
                                     std::uint64_t sampling_seed) {
    if (dataset.size() < 2) throw InvalidArgument("measure_view_agreement: need >= 2 graphs");
    const std::size_t n = std::max<std::size_t>(2, state.config.batch_size);
    double pos = 0.0, comp = 0.0;
    std::size_t rows = 0, comp_rows = 0;
    for (std::size_t start = 0, chunk = 0; start < dataset.size(); start += n, ++chunk) {
        // A trailing single graph is paired with its predecessor.
        const std::size_t begin = std::min(start, dataset.size() - 2);
        const std::size_t end = std::min(dataset.size(), start + n);
        std::span<const Graph> batch(dataset.graphs.data() + begin, end - begin);
        const ForwardOutputs out = evaluate_objective(state, batch, split_seed(sampling_seed, chunk));
        for (std::size_t r = start - begin; r < batch.size(); ++r) {
            double dp = 0.0, dc = 0.0;
            for (std::size_t c = 0; c < out.first.cols(); ++c) {
                dp += out.first(r, c) * out.second(r, c);
                if (out.complement.size()) dc += out.first(r, c) * out.complement(r, c);
            }
            pos += dp;
            ++rows;
            if (out.complement.size()) {
                comp += dc;
                ++comp_rows;
            }
        }
    }
    ViewAgreement a;
    a.positive = pos / static_cast<double>(rows);
    a.complement = comp_rows ? comp / static_cast<double>(comp_rows) : std::nan("");
    return a;
}

json to_json(const EvalResult& r) {
    json j = {{"variant", to_string(r.variant)}, {"seed", r.seed}};
    j["probe"] = r.probe ? to_json(*r.probe) : json(nullptr);
    j["rationale"] = r.rationale ? to_json(*r.rationale) : json(nullptr);
    return j;
}

EvalResult evaluate_state(const TrainState& state, const GraphDataset& dataset,
                          std::uint64_t split_seed, double train_fraction) {
    EvalResult r;
    r.variant = state.config.variant;
    r.seed = state.config.seed;
    if (dataset.empty()) return r;
    const bool labelled = std::all_of(dataset.graphs.begin(), dataset.graphs.end(),
                                      [](const Graph& g) { return g.label.has_value(); });
    if (labelled) {
        const Tensor emb = embed_graphs(dataset, state.params, state.config.encoder);
        std::vector<int> labels;
        for (const Graph& g : dataset.graphs) labels.push_back(*g.label);
        r.probe = linear_probe(emb, labels, split_seed, train_fraction);
    }
    const bool masked = std::all_of(dataset.graphs.begin(), dataset.graphs.end(),
                                    [](const Graph& g) { return g.rationale_mask.has_value(); });
    if (masked) r.rationale = rationale_precision(dataset, variant_scorer(state));
    return r;
}

AblationResult run_ablation(Variant variant, const GraphDataset& dataset, TrainConfig config,
                            std::uint64_t split_seed) {
    config.variant = variant;
    AblationResult out;
    std::size_t steps = 0, graph_passes = 0, anchors = 0;
    PretrainOptions options;
    options.on_step = [&](const StepResult& r) {
        ++steps;
        graph_passes += r.passes.graphs;
    };
    out.state = pretrain(dataset, config, options);
    anchors = steps * std::min(config.batch_size, dataset.size());
    out.encoder_passes_per_anchor =
        anchors ? static_cast<double>(graph_passes) / static_cast<double>(anchors) : 0.0;
    out.history = out.state.history;
    out.eval = evaluate_state(out.state, dataset, split_seed);
    return out;
}

}  // namespace rgcl
