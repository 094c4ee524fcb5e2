#include "rgcl/commands.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <mutex>
#include <ostream>
#include <sstream>
#include <thread>

#include "rgcl/error.hpp"
#include "rgcl/evaluation.hpp"
#include "rgcl/graph_io.hpp"

namespace rgcl {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json read_json_file(const fs::path& path, bool config_file) {
    std::ifstream in(path);
    if (!in) {
        const std::string msg = "cannot open " + path.string();
        if (config_file) throw ConfigError(msg);
        throw FormatError(msg);
    }
    try {
        json j;
        in >> j;
        return j;
    } catch (const json::exception& e) {
        const std::string msg = path.string() + ": " + e.what();
        if (config_file) throw ConfigError(msg);
        throw FormatError(msg);
    }
}

void write_json_file(const json& j, const fs::path& path) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw FormatError("cannot write " + path.string());
    out << j.dump(2) << '\n';
}

fs::path resolve(const fs::path& p, const fs::path& base) {
    return p.is_absolute() || base.empty() ? p : base / p;
}

std::string fixed(double v, int digits = 4) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(digits) << v;
    return os.str();
}

}  // namespace

RunConfig run_config_from_json(const json& j, const fs::path& base_dir) {
    if (!j.is_object()) throw ConfigError("run config must be a JSON object");
    RunConfig c;
    c.train = train_config_from_json(j);
    try {
        if (j.contains("output_dir")) c.output_dir = resolve(j.at("output_dir").get<std::string>(), base_dir);
        c.probe_train_fraction = j.value("probe_train_fraction", c.probe_train_fraction);
        if (!(c.probe_train_fraction > 0.0 && c.probe_train_fraction < 1.0))
            throw ConfigError("config field 'probe_train_fraction' violates: 0 < fraction < 1");
        if (!j.contains("dataset")) throw ConfigError("config field 'dataset' is required");
        const json& d = j.at("dataset");
        const int sources = static_cast<int>(d.contains("tu")) + static_cast<int>(d.contains("json")) +
                            static_cast<int>(d.contains("synthetic"));
        if (sources != 1)
            throw ConfigError("config field 'dataset' violates: exactly one of tu|json|synthetic");
        if (d.contains("tu")) {
            c.dataset.kind = DatasetSource::Kind::tu;
            c.dataset.path = resolve(d.at("tu").get<std::string>(), base_dir);
        } else if (d.contains("json")) {
            c.dataset.kind = DatasetSource::Kind::json;
            c.dataset.path = resolve(d.at("json").get<std::string>(), base_dir);
        } else {
            c.dataset.kind = DatasetSource::Kind::synthetic;
            c.dataset.spec = planted_motif_spec_from_json(d.at("synthetic"));
            c.dataset.count = d.value("count", std::size_t{500});
            if (c.dataset.count < 1) throw ConfigError("config field 'dataset.count' violates: >= 1");
        }
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
    return c;
}

RunConfig load_run_config(const fs::path& path) {
    json j = read_json_file(path, true);
    if (const char* env = std::getenv("RGCL_SEED"); env && *env) {
        try {
            std::size_t pos = 0;
            const unsigned long long seed = std::stoull(env, &pos);
            if (pos != std::string(env).size()) throw std::invalid_argument(env);
            if (j.is_object()) j["seed"] = seed;
        } catch (const std::exception&) {
            throw ConfigError(std::string("RGCL_SEED must be a non-negative integer, got '") + env + "'");
        }
    }
    return run_config_from_json(j, path.parent_path());
}

json to_json(const RunConfig& c) {
    json j = to_json(c.train);
    j["output_dir"] = c.output_dir.string();
    j["probe_train_fraction"] = c.probe_train_fraction;
    switch (c.dataset.kind) {
        case DatasetSource::Kind::tu:
            j["dataset"] = {{"tu", c.dataset.path.string()}};
            break;
        case DatasetSource::Kind::json:
            j["dataset"] = {{"json", c.dataset.path.string()}};
            break;
        case DatasetSource::Kind::synthetic:
            j["dataset"] = {{"synthetic", to_json(c.dataset.spec)}, {"count", c.dataset.count}};
            break;
    }
    return j;
}

GraphDataset load_dataset(const DatasetSource& source) {
    switch (source.kind) {
        case DatasetSource::Kind::tu:
            return load_tu_dataset(source.path);
        case DatasetSource::Kind::json:
            return load_json_dataset(source.path);
        case DatasetSource::Kind::synthetic:
            return generate_planted_motif_dataset(source.spec, source.count);
    }
    throw InvalidArgument("unknown dataset source");
}

DatasetSource parse_dataset_argument(const std::string& arg) {
    DatasetSource s;
    if (arg.rfind("tu:", 0) == 0) {
        s.kind = DatasetSource::Kind::tu;
        s.path = arg.substr(3);
    } else if (arg.rfind("json:", 0) == 0) {
        s.kind = DatasetSource::Kind::json;
        s.path = arg.substr(5);
    } else {
        s.path = arg;
        s.kind = fs::is_directory(s.path) ? DatasetSource::Kind::tu : DatasetSource::Kind::json;
    }
    return s;
}

SweepGrid load_sweep_grid(const fs::path& path, std::uint64_t default_seed) {
    const json j = read_json_file(path, true);
    SweepGrid g;
    try {
        g.tau = j.at("tau").get<std::vector<double>>();
        g.lambda = j.at("lambda").get<std::vector<double>>();
        g.rho = j.at("rho").get<std::vector<double>>();
        g.seeds = j.value("seeds", std::vector<std::uint64_t>{default_seed});
    } catch (const json::exception& e) {
        throw ConfigError(std::string("sweep grid: ") + e.what());
    }
    if (g.tau.empty() || g.lambda.empty() || g.rho.empty() || g.seeds.empty())
        throw ConfigError("sweep grid: every axis needs at least one value");
    return g;
}

int cmd_synth(const fs::path& spec_path, std::size_t count, const fs::path& out, std::ostream& log) {
    const PlantedMotifSpec spec = planted_motif_spec_from_json(read_json_file(spec_path, true));
    if (count < 1) throw ConfigError("--count must be >= 1");
    const GraphDataset ds = generate_planted_motif_dataset(spec, count);
    save_json_dataset(ds, out);
    log << dataset_hash(ds) << '\n';
    return kExitOk;
}

namespace {

void apply_variant(RunConfig& rc, const std::optional<std::string>& variant) {
    if (variant) rc.train.variant = parse_variant(*variant);
}

void print_eval_summary(const EvalResult& r, std::ostream& log) {
    log << "variant   seed  probe_train  probe_test  rationale_prec  random_baseline\n";
    log << std::left << std::setw(10) << to_string(r.variant) << std::setw(6) << r.seed
        << std::setw(13) << (r.probe ? fixed(r.probe->train_accuracy) : "-") << std::setw(12)
        << (r.probe ? fixed(r.probe->test_accuracy) : "-") << std::setw(16)
        << (r.rationale ? fixed(r.rationale->mean_precision) : "-")
        << (r.rationale ? fixed(r.rationale->random_baseline) : "-") << '\n';
}

}  // namespace

int cmd_pretrain(const fs::path& config_path, const std::optional<std::string>& variant,
                 std::ostream& log) {
    RunConfig rc = load_run_config(config_path);
    apply_variant(rc, variant);
    const GraphDataset ds = load_dataset(rc.dataset);
    fs::create_directories(rc.output_dir);
    write_json_file(to_json(rc), rc.output_dir / "config.json");
    PretrainOptions opts;
    opts.output_dir = rc.output_dir;
    const TrainState state = pretrain(ds, rc.train, opts);
    log << "pretrained " << state.step << " steps on " << ds.size() << " graphs";
    if (!state.history.empty()) log << "; final loss " << fixed(state.history.back().total, 6);
    log << "\ncheckpoint: " << (rc.output_dir / "checkpoint_final.json").string() << '\n';
    return kExitOk;
}

int cmd_eval(const fs::path& config_path, const fs::path& checkpoint,
             const std::optional<std::string>& variant, std::ostream& log) {
    RunConfig rc = load_run_config(config_path);
    apply_variant(rc, variant);
    const GraphDataset ds = load_dataset(rc.dataset);
    TrainState state = load_checkpoint(checkpoint);
    if (variant) state.config.variant = rc.train.variant;
    const EvalResult r = evaluate_state(state, ds, rc.train.seed, rc.probe_train_fraction);
    const fs::path out = rc.output_dir / ("eval_" + to_string(state.config.variant) + ".json");
    write_json_file(to_json(r), out);
    print_eval_summary(r, log);
    log << "results: " << out.string() << '\n';
    return kExitOk;
}

int cmd_rationale(const fs::path& checkpoint, const std::string& dataset, const fs::path& out,
                  std::ostream& log) {
    const TrainState state = load_checkpoint(checkpoint);
    const GraphDataset ds = load_dataset(parse_dataset_argument(dataset));
    const NodeScorer scorer = variant_scorer(state);
    json records = json::array();
    for (std::size_t i = 0; i < ds.size(); ++i) {
        const Graph& g = ds.graphs[i];
        const std::size_t k = g.rationale_mask
                                  ? static_cast<std::size_t>(std::count(g.rationale_mask->begin(),
                                                                        g.rationale_mask->end(), true))
                                  : view_size(g.num_nodes(), state.config.rho);
        records.push_back(rationale_export_record(i, scorer(g), std::max<std::size_t>(k, 1)));
    }
    write_json_file(records, out);
    log << "exported " << ds.size() << " rationale records to " << out.string() << '\n';
    return kExitOk;
}

int cmd_sweep(const fs::path& config_path, const fs::path& grid_path, std::size_t jobs,
              std::ostream& log) {
    const RunConfig base = load_run_config(config_path);
    const SweepGrid grid = load_sweep_grid(grid_path, base.train.seed);
    const GraphDataset ds = load_dataset(base.dataset);

    std::vector<RunConfig> cells;
    for (double tau : grid.tau)
        for (double lambda : grid.lambda)
            for (double rho : grid.rho)
                for (std::uint64_t seed : grid.seeds) {
                    RunConfig c = base;
                    c.train.tau = tau;
                    c.train.lambda = lambda;
                    c.train.rho = rho;
                    c.train.seed = seed;
                    c.train.validate();
                    std::ostringstream name;
                    name << "tau_" << tau << "_lambda_" << lambda << "_rho_" << rho << "_seed_" << seed;
                    c.output_dir = base.output_dir / "sweep" / name.str();
                    cells.push_back(std::move(c));
                }

    std::vector<SweepRow> rows(cells.size());
    std::atomic<std::size_t> next{0};
    std::mutex error_mutex;
    std::exception_ptr first_error;
    auto worker = [&] {
        for (std::size_t i = next++; i < cells.size(); i = next++) {
            try {
                const RunConfig& c = cells[i];
                fs::create_directories(c.output_dir);
                write_json_file(to_json(c), c.output_dir / "config.json");
                PretrainOptions opts;
                opts.output_dir = c.output_dir;
                const TrainState state = pretrain(ds, c.train, opts);
                const EvalResult r = evaluate_state(state, ds, c.train.seed, c.probe_train_fraction);
                write_json_file(to_json(r), c.output_dir / ("eval_" + to_string(c.train.variant) + ".json"));
                rows[i] = {c.train.tau, c.train.lambda, c.train.rho, c.train.seed,
                           r.probe ? r.probe->test_accuracy : std::nan(""),
                           r.rationale ? r.rationale->mean_precision : std::nan("")};
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!first_error) first_error = std::current_exception();
            }
        }
    };
    const std::size_t n_threads = std::clamp<std::size_t>(jobs, 1, std::max<std::size_t>(1, cells.size()));
    if (n_threads == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (std::size_t t = 0; t < n_threads; ++t) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }
    if (first_error) std::rethrow_exception(first_error);

    const fs::path csv = base.output_dir / "sweep.csv";
    fs::create_directories(base.output_dir);
    std::ofstream out(csv);
    if (!out) throw FormatError("cannot write " + csv.string());
    out << "tau,lambda,rho,seed,probe_test_acc,rationale_precision\n";
    // json::dump gives the shortest text that round-trips each double.
    auto num = [](double v) { return json(v).dump(); };
    for (const SweepRow& r : rows)
        out << num(r.tau) << ',' << num(r.lambda) << ',' << num(r.rho) << ',' << r.seed << ','
            << num(r.probe_test_acc) << ',' << num(r.rationale_precision) << '\n';
    log << "swept " << rows.size() << " cells; summary: " << csv.string() << '\n';
    return kExitOk;
}

int run_cli(int argc, char** argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Rationale-aware graph contrastive pre-training"};
    app.require_subcommand(1);

    fs::path spec_path, out_path, config_path, checkpoint_path, grid_path;
    std::size_t count = 0, jobs = 1;
    std::string variant_str, dataset_arg;

    auto* synth = app.add_subcommand("synth", "Generate a planted-motif dataset as JSON");
    synth->add_option("--spec", spec_path, "PlantedMotifSpec JSON file")->required();
    synth->add_option("--count", count, "Number of graphs")->required();
    synth->add_option("--out", out_path, "Output graph JSON")->required();

    auto* pre = app.add_subcommand("pretrain", "Pre-train encoder, generator and projector");
    pre->add_option("--config", config_path, "Run config JSON")->required();
    pre->add_option("--variant", variant_str, "full|no_rv|no_i (overrides config)");

    auto* eval = app.add_subcommand("eval", "Probe embeddings and score rationales");
    eval->add_option("--config", config_path, "Run config JSON")->required();
    eval->add_option("--checkpoint", checkpoint_path, "Checkpoint JSON")->required();
    eval->add_option("--variant", variant_str, "full|no_rv|no_i");

    auto* rat = app.add_subcommand("rationale", "Export per-node attribution probabilities");
    rat->add_option("--checkpoint", checkpoint_path, "Checkpoint JSON")->required();
    rat->add_option("--dataset", dataset_arg, "tu:<dir> | json:<file> | path")->required();
    rat->add_option("--out", out_path, "Output JSON")->required();

    auto* sweep = app.add_subcommand("sweep", "Grid over tau, lambda and rho");
    sweep->add_option("--config", config_path, "Run config JSON")->required();
    sweep->add_option("--grid", grid_path, "Grid JSON {tau:[], lambda:[], rho:[], seeds:[]}")->required();
    sweep->add_option("--jobs", jobs, "Cells run in parallel")->default_val(1);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitConfig;
    }

    auto variant = [&]() -> std::optional<std::string> {
        if (variant_str.empty()) return std::nullopt;
        return variant_str;
    };
    try {
        if (*synth) return cmd_synth(spec_path, count, out_path, out);
        if (*pre) return cmd_pretrain(config_path, variant(), out);
        if (*eval) return cmd_eval(config_path, checkpoint_path, variant(), out);
        if (*rat) return cmd_rationale(checkpoint_path, dataset_arg, out_path, out);
        if (*sweep) return cmd_sweep(config_path, grid_path, jobs, out);
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const NumericError& e) {
        err << "numeric failure: " << e.what() << '\n';
        return kExitNumeric;
    } catch (const Error& e) {
        err << "data error: " << e.what() << '\n';
        return kExitData;
    } catch (const fs::filesystem_error& e) {
        err << "data error: " << e.what() << '\n';
        return kExitData;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kExitFailure;
    }
    return kExitFailure;
}

}  // namespace rgcl
