#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

#include "rgcl/commands.hpp"
#include "rgcl/error.hpp"
#include "rgcl/evaluation.hpp"
#include "rgcl/graph_io.hpp"
#include "rgcl/synthetic.hpp"
#include "rgcl/training.hpp"

namespace py = pybind11;
using nlohmann::json;

namespace {

py::object to_py(const json& j) { return py::module_::import("json").attr("loads")(j.dump()); }

json from_py(const py::object& o) {
    return json::parse(py::module_::import("json").attr("dumps")(o).cast<std::string>());
}

std::vector<std::vector<double>> rows_of(const rgcl::Tensor& t) {
    std::vector<std::vector<double>> out(t.rows(), std::vector<double>(t.cols()));
    for (std::size_t r = 0; r < t.rows(); ++r)
        for (std::size_t c = 0; c < t.cols(); ++c) out[r][c] = t(r, c);
    return out;
}

py::dict graph_dict(const rgcl::Graph& g) {
    py::dict d;
    d["x"] = rows_of(g.node_features);
    std::vector<std::pair<std::size_t, std::size_t>> edges;
    for (const auto& [u, v] : g.edges)
        if (u < v) edges.emplace_back(u, v);
    d["edges"] = edges;
    d["y"] = g.label ? py::object(py::int_(*g.label)) : py::none();
    d["rationale"] = g.rationale_mask ? py::object(py::cast(*g.rationale_mask)) : py::none();
    return d;
}

}  // namespace

PYBIND11_MODULE(_rgcl, m) {
    m.doc() = "Rationale-aware graph contrastive pre-training";

    static py::exception<rgcl::ConfigError> config_error(m, "ConfigError", PyExc_ValueError);
    static py::exception<rgcl::FormatError> format_error(m, "FormatError", PyExc_ValueError);
    static py::exception<rgcl::NumericError> numeric_error(m, "NumericError", PyExc_ArithmeticError);
    py::register_exception_translator([](std::exception_ptr p) {
        try {
            if (p) std::rethrow_exception(p);
        } catch (const rgcl::ConfigError& e) {
            PyErr_SetString(config_error.ptr(), e.what());
        } catch (const rgcl::FormatError& e) {
            PyErr_SetString(format_error.ptr(), e.what());
        } catch (const rgcl::NumericError& e) {
            PyErr_SetString(numeric_error.ptr(), e.what());
        } catch (const rgcl::InvalidArgument& e) {
            PyErr_SetString(PyExc_ValueError, e.what());
        }
    });

    py::class_<rgcl::GraphDataset>(m, "Dataset")
        .def("__len__", &rgcl::GraphDataset::size)
        .def_readonly("feature_dim", &rgcl::GraphDataset::feature_dim)
        .def_readonly("num_classes", &rgcl::GraphDataset::num_classes)
        .def("graph", [](const rgcl::GraphDataset& ds, std::size_t i) {
            if (i >= ds.size()) throw py::index_error("graph index out of range");
            return graph_dict(ds.graphs[i]);
        })
        .def("hash", &rgcl::dataset_hash)
        .def("to_json", [](const rgcl::GraphDataset& ds) { return to_py(rgcl::dataset_to_json(ds)); })
        .def_static("from_json", [](const py::object& o) { return rgcl::dataset_from_json(from_py(o)); })
        .def("save", [](const rgcl::GraphDataset& ds, const std::filesystem::path& p) {
            rgcl::save_json_dataset(ds, p);
        });

    m.def("load_tu", &rgcl::load_tu_dataset, py::arg("directory"));
    m.def("load_json", &rgcl::load_json_dataset, py::arg("path"));
    m.def(
        "generate_planted_motif",
        [](const py::object& spec, std::size_t count) {
            return rgcl::generate_planted_motif_dataset(
                rgcl::planted_motif_spec_from_json(spec.is_none() ? json::object() : from_py(spec)), count);
        },
        py::arg("spec") = py::none(), py::arg("count") = 500);

    py::class_<rgcl::TrainState>(m, "TrainState")
        .def_readonly("step", &rgcl::TrainState::step)
        .def_readonly("feature_dim", &rgcl::TrainState::feature_dim)
        .def_property_readonly("config", [](const rgcl::TrainState& s) { return to_py(rgcl::to_json(s.config)); })
        .def_property_readonly("history",
                               [](const rgcl::TrainState& s) {
                                   py::list out;
                                   for (std::size_t i = 0; i < s.history.size(); ++i)
                                       out.append(to_py(rgcl::to_json(s.history[i], i + 1)));
                                   return out;
                               })
        .def("save", &rgcl::save_checkpoint, py::arg("path"))
        .def(
            "embed",
            [](const rgcl::TrainState& s, const rgcl::GraphDataset& ds) {
                return rows_of(rgcl::embed_graphs(ds, s.params, s.config.encoder));
            },
            py::arg("dataset"));

    m.def("load_checkpoint", &rgcl::load_checkpoint, py::arg("path"));

    m.def(
        "pretrain",
        [](const rgcl::GraphDataset& ds, const py::object& config,
           const std::optional<std::filesystem::path>& output_dir) {
            const rgcl::TrainConfig c =
                rgcl::train_config_from_json(config.is_none() ? json::object() : from_py(config));
            rgcl::PretrainOptions o;
            o.output_dir = output_dir;
            py::gil_scoped_release release;
            return rgcl::pretrain(ds, c, o);
        },
        py::arg("dataset"), py::arg("config") = py::none(), py::arg("output_dir") = py::none());

    m.def(
        "evaluate",
        [](const rgcl::TrainState& s, const rgcl::GraphDataset& ds, std::uint64_t split_seed,
           double train_fraction) { return to_py(rgcl::to_json(rgcl::evaluate_state(s, ds, split_seed, train_fraction))); },
        py::arg("state"), py::arg("dataset"), py::arg("split_seed") = 0, py::arg("train_fraction") = 0.8);

    m.def(
        "rationale_scores",
        [](const rgcl::TrainState& s, const rgcl::GraphDataset& ds) {
            const rgcl::NodeScorer scorer = rgcl::variant_scorer(s);
            std::vector<std::vector<double>> out;
            for (const rgcl::Graph& g : ds.graphs) out.push_back(scorer(g).storage());
            return out;
        },
        py::arg("state"), py::arg("dataset"));

    m.def(
        "run_cli",
        [](std::vector<std::string> args) {
            args.insert(args.begin(), "rgcl");
            std::vector<char*> argv;
            for (auto& a : args) argv.push_back(a.data());
            std::ostringstream out, err;
            const int code = rgcl::run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
            return py::make_tuple(code, out.str(), err.str());
        },
        py::arg("args"));
}
