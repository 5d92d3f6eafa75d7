#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "json.hpp"

#include "tandem/common.hpp"
#include "tandem/condbo.hpp"
#include "tandem/engine.hpp"
#include "tandem/feops.hpp"
#include "tandem/fetree.hpp"
#include "tandem/learners.hpp"
#include "tandem/metafeat.hpp"
#include "tandem/scheduler.hpp"
#include "tandem/tabular.hpp"

namespace py = pybind11;

PYBIND11_MAKE_OPAQUE(tandem::Pipeline);

namespace {

using namespace tandem;

py::object json_to_py(const nlohmann::json& doc) {
    return py::module_::import("json").attr("loads")(doc.dump());
}

nlohmann::json py_to_json(const py::object& obj) {
    const auto text = py::module_::import("json").attr("dumps")(obj).cast<std::string>();
    return nlohmann::json::parse(text);
}

py::dict table_to_dict(const DataTable& table) {
    py::dict out;
    for (const Column& col : table.columns) {
        py::list cells;
        for (std::size_t r = 0; r < col.size(); ++r) {
            if (col.missing(r)) {
                cells.append(py::none());
            } else if (col.kind == ColumnKind::Numeric) {
                cells.append(col.num[r]);
            } else {
                cells.append(*col.cat[r]);
            }
        }
        out[py::str(col.name)] = cells;
    }
    return out;
}

DataTable table_from_dict(const py::dict& columns, const std::string& target,
                          const std::string& task) {
    DataTable table;
    table.target = target;
    table.task = task_kind_from_string(task);
    for (const auto& item : columns) {
        const auto name = item.first.cast<std::string>();
        const auto cells = item.second.cast<py::sequence>();
        bool categorical = false;
        for (const auto& cell : cells) {
            if (!cell.is_none() && py::isinstance<py::str>(cell)) {
                categorical = true;
                break;
            }
        }
        if (categorical) {
            std::vector<std::optional<std::string>> values;
            for (const auto& cell : cells) {
                if (cell.is_none()) {
                    values.push_back(std::nullopt);
                } else {
                    values.push_back(cell.cast<std::string>());
                }
            }
            table.columns.push_back(Column::categorical(name, std::move(values)));
        } else {
            std::vector<double> values;
            for (const auto& cell : cells) {
                if (cell.is_none()) {
                    values.push_back(std::numeric_limits<double>::quiet_NaN());
                } else {
                    values.push_back(cell.cast<double>());
                }
            }
            table.columns.push_back(Column::numeric(name, std::move(values)));
        }
    }
    validate_table(table);
    return table;
}

std::vector<OperationSpec> specs_from_py(const py::list& specs) {
    std::vector<OperationSpec> out;
    for (const auto& doc : specs) {
        out.push_back(operation_spec_from_json(py_to_json(doc.cast<py::object>())));
    }
    return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "joint feature engineering and hyperparameter search";

    py::register_exception<Error>(m, "Error");

    py::class_<DataTable>(m, "DataTable")
        .def_static(
            "from_dict",
            [](const py::dict& columns, const std::string& target, const std::string& task) {
                return table_from_dict(columns, target, task);
            },
            py::arg("columns"), py::arg("target"), py::arg("task"))
        .def("__len__", &DataTable::n_rows)
        .def_property_readonly("target", [](const DataTable& t) { return t.target; })
        .def_property_readonly("task", [](const DataTable& t) { return to_string(t.task); })
        .def_property_readonly("column_names",
                               [](const DataTable& t) {
                                   std::vector<std::string> names;
                                   for (const Column& col : t.columns) {
                                       names.push_back(col.name);
                                   }
                                   return names;
                               })
        .def_property_readonly("feature_names", &DataTable::feature_names)
        .def("to_dict", &table_to_dict)
        .def("__repr__", [](const DataTable& t) {
            return "DataTable(" + std::to_string(t.n_rows()) + " rows, " +
                   std::to_string(t.columns.size()) + " columns, target '" + t.target + "')";
        });

    py::class_<Pipeline>(m, "Pipeline")
        .def("specs",
             [](const Pipeline& p) {
                 py::list out;
                 for (const OperationSpec& spec : pipeline_specs(p)) {
                     out.append(json_to_py(to_json(spec)));
                 }
                 return out;
             })
        .def("__len__", [](const Pipeline& p) { return p.size(); });

    m.def(
        "load_dataset",
        [](const std::string& data_path, const std::string& schema_path) {
            return load_csv(data_path, schema_path);
        },
        py::arg("data_path"), py::arg("schema_path"));

    m.def(
        "split",
        [](const DataTable& table, double train_fraction, double val_fraction,
           double test_fraction, std::uint64_t seed) {
            SplitSpec spec;
            spec.train_fraction = train_fraction;
            spec.val_fraction = val_fraction;
            spec.test_fraction = test_fraction;
            spec.seed = seed;
            Split split = split_table(table, spec);
            return py::make_tuple(std::move(split.train), std::move(split.val),
                                  std::move(split.test));
        },
        py::arg("table"), py::arg("train_fraction") = 0.6, py::arg("val_fraction") = 0.2,
        py::arg("test_fraction") = 0.2, py::arg("seed") = 0);

    m.def("meta_features",
          [](const DataTable& table) {
              const MetaFeatureVector meta = compute_meta_features(table);
              return std::vector<double>(meta.values.begin(), meta.values.end());
          },
          py::arg("table"));
    m.def("meta_feature_names", [] {
        const auto& names = meta_feature_names();
        return std::vector<std::string>(names.begin(), names.end());
    });

    m.def(
        "validate_step",
        [](const py::list& specs, const DataTable& table) {
            return validate_step(specs_from_py(specs), table.schema());
        },
        py::arg("specs"), py::arg("table"));

    m.def(
        "fit_pipeline",
        [](const py::list& specs, const DataTable& train) {
            return fit_pipeline(specs_from_py(specs), train);
        },
        py::arg("specs"), py::arg("train"));
    m.def("apply_pipeline", &apply_pipeline, py::arg("pipeline"), py::arg("table"));

    m.def("known_learners", &known_learners);
    m.def(
        "default_config",
        [](const std::string& learner) { return json_to_py(config_to_json(default_config(learner))); },
        py::arg("learner"));
    m.def(
        "train_and_score",
        [](const std::string& learner, const py::dict& config, const DataTable& train,
           const DataTable& eval) {
            const Configuration parsed =
                config_from_json(py_to_json(config), hyperparameter_space(learner));
            return train_and_score(learner, parsed, train, eval);
        },
        py::arg("learner"), py::arg("config"), py::arg("train"), py::arg("eval"));

    m.def("expected_improvement", &expected_improvement, py::arg("mean"), py::arg("variance"),
          py::arg("incumbent"));

    m.def(
        "pareto_select",
        [](const std::vector<std::pair<double, double>>& points) {
            std::vector<MemoryEntry> entries;
            entries.reserve(points.size());
            for (std::size_t i = 0; i < points.size(); ++i) {
                MemoryEntry entry;
                entry.reason = std::to_string(i);
                entry.v = points[i].first;
                entry.delta_v = points[i].second;
                entries.push_back(std::move(entry));
            }
            std::vector<std::size_t> survivors;
            for (const MemoryEntry& entry : pareto_select(entries)) {
                survivors.push_back(std::stoul(entry.reason));
            }
            return survivors;
        },
        py::arg("points"));

    m.def(
        "simulate_neutral",
        [](long budget, double p1, double c2) {
            const NeutralSimulation sim = simulate_neutral(budget, p1, c2);
            py::dict out;
            out["n_fe"] = sim.n_fe;
            out["n_hpo"] = sim.n_hpo;
            out["q_trace"] = sim.q_trace;
            out["fe_picks"] = std::vector<bool>(sim.fe_picks.begin(), sim.fe_picks.end());
            return out;
        },
        py::arg("budget"), py::arg("p1"), py::arg("c2") = 1.4142135623730951);
    m.def("balanced_prior_bound", &balanced_prior_bound, py::arg("budget"));
    m.def("balanced_prior_ok", &balanced_prior_ok, py::arg("budget"), py::arg("p1"));

    m.def(
        "run",
        [](const std::string& config_path) {
            const RunConfig config = load_run_config(config_path);
            const RunReport report = run(config);
            return json_to_py(report_to_json(report, config));
        },
        py::arg("config_path"));
}
