#include "rgcl/training.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "rgcl/error.hpp"

namespace rgcl {

namespace fs = std::filesystem;
using nlohmann::json;

std::string to_string(Variant v) {
    switch (v) {
        case Variant::full:
            return "full";
        case Variant::no_rationale_views:
            return "no_rv";
        case Variant::no_independence:
            return "no_i";
    }
    return "full";
}

Variant parse_variant(const std::string& s) {
    if (s == "full") return Variant::full;
    if (s == "no_rv" || s == "no_rationale_views") return Variant::no_rationale_views;
    if (s == "no_i" || s == "no_independence") return Variant::no_independence;
    throw ConfigError("variant must be one of full|no_rv|no_i, got '" + s + "'");
}

void TrainConfig::validate() const {
    auto fail = [](const std::string& field, const std::string& constraint) {
        throw ConfigError("config field '" + field + "' violates: " + constraint);
    };
    if (batch_size < 2) fail("batch_size", "N >= 2");
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate))
        fail("learning_rate", "learning_rate > 0");
    if (!(tau > 0.0) || !std::isfinite(tau)) fail("tau", "tau > 0");
    if (!(lambda >= 0.0) || !std::isfinite(lambda)) fail("lambda", "lambda >= 0");
    if (!(rho > 0.0 && rho <= 1.0)) fail("rho", "0 < rho <= 1");
    if (encoder.layer_dims.empty()) fail("encoder.layer_dims", "nonempty");
    if (std::any_of(encoder.layer_dims.begin(), encoder.layer_dims.end(),
                    [](std::size_t w) { return w < 1; }))
        fail("encoder.layer_dims", "widths >= 1");
    if (generator.gnn.layer_dims.empty()) fail("generator.layer_dims", "nonempty");
    if (std::any_of(generator.gnn.layer_dims.begin(), generator.gnn.layer_dims.end(),
                    [](std::size_t w) { return w < 1; }))
        fail("generator.layer_dims", "widths >= 1");
    if (generator.mlp_hidden < 1) fail("generator.mlp_hidden", ">= 1");
    if (projector.hidden < 1) fail("projector.hidden", ">= 1");
    if (projector.out < 1) fail("projector.out", ">= 1");
}

json to_json(const TrainConfig& c) {
    return {{"batch_size", c.batch_size},
            {"epochs", c.epochs},
            {"learning_rate", c.learning_rate},
            {"tau", c.tau},
            {"lambda", c.lambda},
            {"rho", c.rho},
            {"seed", c.seed},
            {"encoder", to_json(c.encoder)},
            {"generator", to_json(c.generator)},
            {"projector", to_json(c.projector)},
            {"checkpoint_every", c.checkpoint_every},
            {"variant", to_string(c.variant)}};
}

TrainConfig train_config_from_json(const json& j) {
    TrainConfig c;
    try {
        if (!j.is_object()) throw ConfigError("config must be a JSON object");
        c.batch_size = j.value("batch_size", c.batch_size);
        c.epochs = j.value("epochs", c.epochs);
        c.learning_rate = j.value("learning_rate", c.learning_rate);
        c.tau = j.value("tau", c.tau);
        c.lambda = j.value("lambda", c.lambda);
        c.rho = j.value("rho", c.rho);
        c.seed = j.value("seed", c.seed);
        if (j.contains("encoder")) c.encoder = encoder_config_from_json(j.at("encoder"));
        if (j.contains("generator")) c.generator = generator_config_from_json(j.at("generator"));
        if (j.contains("projector")) c.projector = projector_config_from_json(j.at("projector"));
        if (j.contains("pooling")) c.encoder.pooling = parse_pooling(j.at("pooling").get<std::string>());
        c.checkpoint_every = j.value("checkpoint_every", c.checkpoint_every);
        if (j.contains("variant")) c.variant = parse_variant(j.at("variant").get<std::string>());
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
    c.validate();
    return c;
}

void adam_update(ParamMap& params, const ParamMap& grads, AdamState& state, double lr,
                 std::size_t step) {
    if (step < 1) throw InvalidArgument("adam_update: step is 1-based");
    const double bc1 = 1.0 - std::pow(kAdamBeta1, static_cast<double>(step));
    const double bc2 = 1.0 - std::pow(kAdamBeta2, static_cast<double>(step));
    for (auto& [name, p] : params) {
        auto git = grads.find(name);
        if (git == grads.end()) throw InvalidArgument("adam_update: no gradient for '" + name + "'");
        const Tensor& g = git->second;
        if (!g.same_shape(p)) throw InvalidArgument("adam_update: shape mismatch for '" + name + "'");
        Tensor& m = state.first_moment.try_emplace(name, p.rows(), p.cols()).first->second;
        Tensor& v = state.second_moment.try_emplace(name, p.rows(), p.cols()).first->second;
        if (!m.same_shape(p) || !v.same_shape(p))
            throw InvalidArgument("adam_update: moment shape mismatch for '" + name + "'");
        for (std::size_t i = 0; i < p.size(); ++i) {
            m[i] = kAdamBeta1 * m[i] + (1.0 - kAdamBeta1) * g[i];
            v[i] = kAdamBeta2 * v[i] + (1.0 - kAdamBeta2) * g[i] * g[i];
            const double m_hat = m[i] / bc1;
            const double v_hat = v[i] / bc2;
            p[i] -= lr * m_hat / (std::sqrt(v_hat) + kAdamEpsilon);
        }
    }
}

TrainState init_train_state(const TrainConfig& config, std::size_t feature_dim) {
    config.validate();
    if (feature_dim < 1) throw InvalidArgument("feature_dim must be >= 1");
    TrainState s;
    s.config = config;
    s.feature_dim = feature_dim;
    s.params = init_encoder_params(config.encoder, feature_dim, split_seed(config.seed, 11), "enc");
    merge_params(s.params,
                 init_generator_params(config.generator, feature_dim, split_seed(config.seed, 12), "gen"));
    merge_params(s.params, init_projector_params(config.encoder.out_dim(), config.projector,
                                                 split_seed(config.seed, 13), "proj"));
    s.rng.seed(split_seed(config.seed, 14));
    return s;
}

namespace {

struct Towers {
    Var first, second;
    std::optional<Var> complement;
    PassCounter passes;
};

struct SampledViews {
    std::vector<Graph> graphs;
    std::vector<std::size_t> global_index;  // anchor-batch node of every view node
};

void add_view(SampledViews& views, const Graph& g, std::span<const std::size_t> kept,
              std::size_t offset) {
    views.graphs.push_back(induced_subgraph(g, kept));
    for (std::size_t v : kept) views.global_index.push_back(offset + v);
}

Towers forward_towers(Tape& tape, const BoundParams& params, const TrainConfig& config,
                      std::span<const Graph> batch, std::uint64_t sampling_seed) {
    const GraphBatch anchors = batch_graphs(batch);
    const bool with_complement = config.variant != Variant::no_independence;

    Var probs;
    if (config.variant == Variant::no_rationale_views) {
        Tensor uniform(anchors.num_nodes(), 1);
        for (std::size_t i = 0; i < anchors.num_nodes(); ++i)
            uniform[i] = 1.0 / static_cast<double>(anchors.sizes[anchors.graph_id[i]]);
        probs = tape.constant(std::move(uniform));
    } else {
        probs = attribute_nodes(anchors, params, config.generator, "gen");
    }

    SampledViews first, second, complement;
    for (std::size_t n = 0; n < batch.size(); ++n) {
        const Graph& g = batch[n];
        const std::size_t off = anchors.offsets[n];
        Tensor p(g.num_nodes(), 1);
        for (std::size_t v = 0; v < g.num_nodes(); ++v) p[v] = probs.value()[off + v];
        const std::size_t k = view_size(g.num_nodes(), config.rho);
        Rng rng(split_seed(sampling_seed, n));
        const std::vector<double> rw = rationale_weights(p);
        add_view(first, g, gumbel_top_k(rw, k, rng), off);
        add_view(second, g, gumbel_top_k(rw, k, rng), off);
        if (with_complement) add_view(complement, g, gumbel_top_k(complement_weights(p), k, rng), off);
    }

    Towers t;
    auto tower = [&](const SampledViews& views, bool is_complement) {
        const GraphBatch vb = batch_graphs(views.graphs);
        Var att = ad::gather_rows(probs, views.global_index);
        if (is_complement)
            att = ad::clamp(ad::affine(att, -1.0, 1.0), kComplementClamp, 1.0 - kComplementClamp);
        Var x = encode_graph(vb, params, config.encoder, att, "enc", &t.passes);
        return project(x, params, "proj");
    };
    t.first = tower(first, false);
    t.second = tower(second, false);
    if (with_complement) t.complement = tower(complement, true);
    return t;
}

void check_batch(const TrainState& state, std::span<const Graph> batch) {
    if (batch.size() < 2)
        throw InvalidArgument("a training batch needs at least 2 graphs, got " +
                              std::to_string(batch.size()));
    for (const Graph& g : batch)
        if (g.feature_dim() != state.feature_dim)
            throw InvalidArgument("graph feature dim " + std::to_string(g.feature_dim()) +
                                  " != model feature dim " + std::to_string(state.feature_dim));
}

Tensor copy_rows(const Var& v) { return v.value(); }

double grad_norm_with_prefix(const ParamMap& grads, const std::string& prefix) {
    return l2_norm(params_with_prefix(grads, prefix));
}

}  // namespace

ForwardOutputs evaluate_objective(const TrainState& state, std::span<const Graph> batch,
                                  std::uint64_t sampling_seed) {
    check_batch(state, batch);
    Tape tape;
    BoundParams bound(tape, state.params, false);
    Towers t = forward_towers(tape, bound, state.config, batch, sampling_seed);
    BatchViews views{t.first, t.second, t.complement};
    RgclLoss loss = rgcl_loss(views, state.config.tau, state.config.effective_lambda());
    ForwardOutputs out;
    out.first = copy_rows(t.first);
    out.second = copy_rows(t.second);
    if (t.complement) out.complement = copy_rows(*t.complement);
    out.report = loss.report;
    out.passes = t.passes;
    return out;
}

ObjectiveGradients objective_gradients(const TrainState& state, std::span<const Graph> batch,
                                       std::uint64_t sampling_seed) {
    check_batch(state, batch);
    Tape tape;
    BoundParams bound(tape, state.params, true);
    Towers t = forward_towers(tape, bound, state.config, batch, sampling_seed);
    BatchViews views{t.first, t.second, t.complement};
    RgclLoss loss = rgcl_loss(views, state.config.tau, state.config.effective_lambda());
    const Gradients grads = tape.backward(loss.total);
    return {loss.report, bound.gradients(grads)};
}

StepResult train_step(TrainState& state, std::span<const Graph> batch) {
    check_batch(state, batch);
    const Rng rng_before = state.rng;
    const std::uint64_t sampling_seed = state.rng();

    Tape tape;
    BoundParams bound(tape, state.params, true);
    Towers t;
    RgclLoss loss;
    try {
        t = forward_towers(tape, bound, state.config, batch, sampling_seed);
        if (t.complement) tape.retain_grad(*t.complement);
        BatchViews views{t.first, t.second, t.complement};
        loss = rgcl_loss(views, state.config.tau, state.config.effective_lambda());
    } catch (const NumericError&) {
        state.rng = rng_before;
        throw;
    }
    if (!std::isfinite(loss.report.total)) {
        state.rng = rng_before;
        std::ostringstream msg;
        msg << "non-finite loss at step " << state.step + 1 << " (l_su=" << loss.report.l_su
            << ", l_in=" << loss.report.l_in << ", total=" << loss.report.total << ")";
        throw NumericError(msg.str());
    }

    const Gradients grads = tape.backward(loss.total);
    const ParamMap param_grads = bound.gradients(grads);

    StepResult r;
    r.report = loss.report;
    r.passes = t.passes;
    r.encoder_grad_norm = grad_norm_with_prefix(param_grads, "enc.");
    r.generator_grad_norm = grad_norm_with_prefix(param_grads, "gen.");
    r.projector_grad_norm = grad_norm_with_prefix(param_grads, "proj.");
    if (t.complement && grads.contains(*t.complement)) {
        double s = 0.0;
        for (double v : grads.of(*t.complement).values()) s += v * v;
        r.complement_grad_norm = std::sqrt(s);
    }

    ++state.step;
    adam_update(state.params, param_grads, state.optimizer, state.config.learning_rate, state.step);
    state.history.push_back(loss.report);
    return r;
}

std::size_t steps_per_epoch(std::size_t dataset_size, std::size_t batch_size) {
    return (dataset_size + batch_size - 1) / batch_size;
}

std::vector<std::size_t> minibatch_indices(std::size_t dataset_size, const TrainConfig& config,
                                           std::size_t step) {
    const std::size_t per_epoch = steps_per_epoch(dataset_size, config.batch_size);
    const std::size_t epoch = step / per_epoch;
    const std::size_t within = step % per_epoch;
    std::vector<std::size_t> perm(dataset_size);
    std::iota(perm.begin(), perm.end(), 0);
    Rng shuffle_rng(split_seed(config.seed, 1000 + epoch));
    std::shuffle(perm.begin(), perm.end(), shuffle_rng);
    const std::size_t n = std::min(config.batch_size, dataset_size);
    std::vector<std::size_t> out(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = perm[(within * config.batch_size + i) % dataset_size];
    return out;
}

fs::path metrics_path(const fs::path& output_dir) { return output_dir / "metrics.jsonl"; }

void pretrain(TrainState& state, const GraphDataset& dataset, const PretrainOptions& options) {
    state.config.validate();
    if (dataset.empty()) throw InvalidArgument("pretrain: empty dataset");
    if (dataset.size() < 2) throw InvalidArgument("pretrain: need at least 2 graphs per batch");
    if (dataset.feature_dim != state.feature_dim)
        throw InvalidArgument("pretrain: dataset feature dim " + std::to_string(dataset.feature_dim) +
                              " != model feature dim " + std::to_string(state.feature_dim));

    const std::size_t total = state.config.epochs * steps_per_epoch(dataset.size(), state.config.batch_size);
    std::ofstream metrics;
    if (options.output_dir) {
        fs::create_directories(*options.output_dir);
        const fs::path mp = metrics_path(*options.output_dir);
        // A resumed run appends to the metrics of the run it continues.
        metrics.open(mp, state.step == 0 ? std::ios::trunc : std::ios::app);
        if (!metrics) throw FormatError("cannot write metrics file " + mp.string());
    }

    std::vector<Graph> batch;
    while (state.step < total) {
        if (options.stop_after_step && state.step >= *options.stop_after_step) break;
        batch.clear();
        for (std::size_t i : minibatch_indices(dataset.size(), state.config, state.step))
            batch.push_back(dataset.graphs[i]);
        const StepResult r = train_step(state, batch);
        if (options.on_step) options.on_step(r);
        if (metrics.is_open()) {
            metrics << to_json(r.report, state.step).dump() << '\n';
            metrics.flush();
        }
        if (options.output_dir && state.config.checkpoint_every > 0 &&
            state.step % state.config.checkpoint_every == 0)
            save_checkpoint(state, *options.output_dir /
                                       ("checkpoint_step_" + std::to_string(state.step) + ".json"));
    }
    if (options.output_dir) save_checkpoint(state, *options.output_dir / "checkpoint_final.json");
}

TrainState pretrain(const GraphDataset& dataset, const TrainConfig& config,
                    const PretrainOptions& options) {
    TrainState state = init_train_state(config, dataset.feature_dim);
    pretrain(state, dataset, options);
    return state;
}

namespace {

json params_to_json(const ParamMap& params) {
    json j = json::object();
    for (const auto& [name, t] : params)
        j[name] = {{"shape", {t.rows(), t.cols()}}, {"values", t.storage()}};
    return j;
}

ParamMap params_from_json(const json& j) {
    ParamMap out;
    for (const auto& [name, jt] : j.items()) {
        const auto shape = jt.at("shape").get<std::vector<std::size_t>>();
        if (shape.size() != 2) throw FormatError("parameter '" + name + "' shape must have 2 dims");
        auto values = jt.at("values").get<std::vector<double>>();
        if (values.size() != shape[0] * shape[1])
            throw FormatError("parameter '" + name + "' value count does not match its shape");
        out.emplace(name, Tensor(shape[0], shape[1], std::move(values)));
    }
    return out;
}

void require_matching_shapes(const ParamMap& expected, const ParamMap& got, const std::string& what) {
    for (const auto& [name, t] : expected) {
        auto it = got.find(name);
        if (it == got.end()) throw FormatError(what + ": missing parameter '" + name + "'");
        if (!it->second.same_shape(t))
            throw FormatError(what + ": shape mismatch for '" + name + "' (checkpoint " +
                              std::to_string(it->second.rows()) + "x" +
                              std::to_string(it->second.cols()) + ", config " +
                              std::to_string(t.rows()) + "x" + std::to_string(t.cols()) + ")");
    }
    for (const auto& [name, _] : got)
        if (!expected.count(name)) throw FormatError(what + ": unexpected parameter '" + name + "'");
}

}  // namespace

json checkpoint_to_json(const TrainState& s) {
    json history = json::array();
    for (std::size_t i = 0; i < s.history.size(); ++i) history.push_back(to_json(s.history[i], i + 1));
    return {{"format_version", kCheckpointFormatVersion},
            {"config", to_json(s.config)},
            {"feature_dim", s.feature_dim},
            {"step", s.step},
            {"params", params_to_json(s.params)},
            {"opt",
             {{"m", params_to_json(s.optimizer.first_moment)},
              {"v", params_to_json(s.optimizer.second_moment)}}},
            {"rng", rng_state(s.rng)},
            {"history", std::move(history)}};
}

TrainState checkpoint_from_json(const json& j) {
    try {
        const int version = j.at("format_version").get<int>();
        if (version != kCheckpointFormatVersion)
            throw FormatError("unsupported checkpoint format_version " + std::to_string(version) +
                              " (expected " + std::to_string(kCheckpointFormatVersion) + ")");
        TrainConfig config;
        try {
            config = train_config_from_json(j.at("config"));
        } catch (const ConfigError& e) {
            throw FormatError(std::string("checkpoint config: ") + e.what());
        }
        TrainState s = init_train_state(config, j.at("feature_dim").get<std::size_t>());
        ParamMap params = params_from_json(j.at("params"));
        require_matching_shapes(s.params, params, "checkpoint");
        s.params = std::move(params);
        s.optimizer.first_moment = params_from_json(j.at("opt").at("m"));
        s.optimizer.second_moment = params_from_json(j.at("opt").at("v"));
        if (!s.optimizer.first_moment.empty())
            require_matching_shapes(s.params, s.optimizer.first_moment, "checkpoint optimizer");
        if (!s.optimizer.second_moment.empty())
            require_matching_shapes(s.params, s.optimizer.second_moment, "checkpoint optimizer");
        s.step = j.at("step").get<std::size_t>();
        set_rng_state(s.rng, j.at("rng").get<std::string>());
        for (const json& h : j.at("history")) {
            LossReport r;
            r.l_su = h.at("l_su").get<double>();
            r.l_in = h.at("l_in").get<double>();
            r.total = h.at("total").get<double>();
            r.tau = config.tau;
            r.lambda = config.effective_lambda();
            s.history.push_back(r);
        }
        return s;
    } catch (const json::exception& e) {
        throw FormatError(std::string("malformed checkpoint: ") + e.what());
    }
}

void save_checkpoint(const TrainState& state, const fs::path& path) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    // Write to a sibling file and rename so a crash never leaves a torn checkpoint.
    const fs::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp);
        if (!out) throw FormatError("cannot write checkpoint " + tmp.string());
        out << checkpoint_to_json(state).dump() << '\n';
        if (!out) throw FormatError("write failed for checkpoint " + tmp.string());
    }
    fs::rename(tmp, path);
}

TrainState load_checkpoint(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open checkpoint " + path.string());
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
    try {
        return checkpoint_from_json(j);
    } catch (const FormatError& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
}

void load_checkpoint_into(TrainState& state, const fs::path& path) {
    TrainState loaded = load_checkpoint(path);
    const TrainState reference = init_train_state(state.config, state.feature_dim);
    require_matching_shapes(reference.params, loaded.params, path.string());
    state = std::move(loaded);
}

}  // namespace rgcl
