#include <charconv>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "tandem/common.hpp"
#include "tandem/engine.hpp"
#include "tandem/scheduler.hpp"
#include "tandem/tabular.hpp"

namespace {

using namespace tandem;

constexpr int kOk = 0;
constexpr int kUsageError = 1;
constexpr int kRuntimeError = 2;

std::string format_number(double value) {
    char buffer[64];
    const auto [end, ec] = std::to_chars(buffer, buffer + sizeof buffer, value);
    (void)ec;
    return std::string(buffer, end);
}

std::string render_pipeline(const std::vector<OperationSpec>& pipeline) {
    if (pipeline.empty()) {
        return "(root, no transforms)";
    }
    std::string text;
    for (std::size_t i = 0; i < pipeline.size(); ++i) {
        if (i > 0) {
            text += " -> ";
        }
        text += to_string(pipeline[i].kind);
        text += '(';
        for (std::size_t j = 0; j < pipeline[i].inputs.size(); ++j) {
            if (j > 0) {
                text += ", ";
            }
            text += pipeline[i].inputs[j];
        }
        text += ')';
    }
    return text;
}

std::string render_pipeline(const nlohmann::json& pipeline) {
    std::vector<OperationSpec> specs;
    for (const auto& doc : pipeline) {
        specs.push_back(operation_spec_from_json(doc));
    }
    return render_pipeline(specs);
}

void emit(const std::string& text, const std::string& out_path) {
    if (out_path.empty()) {
        std::cout << text;
        return;
    }
    std::ofstream out(out_path, std::ios::binary);
    if (!out) {
        throw IoError("cannot write output file: " + out_path);
    }
    out << text;
}

void append_simulation_row(std::ostringstream& csv, long budget, double p1, double c2) {
    const NeutralSimulation sim = simulate_neutral(budget, p1, c2);
    double max_abs_q = 0.0;
    for (const double q : sim.q_trace) {
        max_abs_q = std::max(max_abs_q, std::abs(q));
    }
    csv << budget << ',' << format_number(p1) << ',' << sim.n_fe << ',' << sim.n_hpo << ','
        << format_number(max_abs_q) << '\n';
}

int cmd_schedule_sim(long budget, double p1, double c2, bool trace, bool sweep,
                     const std::string& out_path) {
    if (budget < 2) {
        std::cerr << "schedule-sim needs a budget of at least 2\n";
        return kUsageError;
    }
    std::ostringstream csv;
    if (sweep) {
        csv << "budget,p1,n_fe,n_hpo,max_abs_q\n";
        for (long m = 2; m <= budget; ++m) {
            const double bound = balanced_prior_bound(m);
            for (int i = 0; i < 10; ++i) {
                append_simulation_row(csv, m, 0.5 + (bound - 0.5) * (i / 10.0), c2);
            }
        }
    } else {
        if (p1 < 0.0) {
            std::cerr << "schedule-sim needs --p1 unless --sweep is given\n";
            return kUsageError;
        }
        if (!balanced_prior_ok(budget, p1)) {
            std::cerr << "p1 = " << format_number(p1) << " is outside the balanced range [0.5, "
                      << format_number(balanced_prior_bound(budget)) << ") for budget "
                      << budget << '\n';
            return kUsageError;
        }
        if (trace) {
            const NeutralSimulation sim = simulate_neutral(budget, p1, c2);
            csv << "m,action,q\n";
            csv << "0,init," << format_number(sim.q_trace[0]) << '\n';
            for (long m = 1; m <= budget; ++m) {
                csv << m << ',' << (sim.fe_picks[m - 1] ? "fe" : "hpo") << ','
                    << format_number(sim.q_trace[m]) << '\n';
            }
        } else {
            csv << "budget,p1,n_fe,n_hpo,max_abs_q\n";
            append_simulation_row(csv, budget, p1, c2);
        }
    }
    emit(csv.str(), out_path);
    return kOk;
}

int cmd_run(const std::string& config_path) {
    const RunConfig config = load_run_config(config_path);
    const RunReport report = run(config);

    std::cout << "root score:      " << format_number(report.root_score) << '\n';
    std::cout << "best validation: " << format_number(report.best_validation) << " (node "
              << report.best_node << ")\n";
    std::cout << "test score:      " << format_number(report.test_score) << '\n';
    std::cout << "pipeline:        " << render_pipeline(report.best_pipeline) << '\n';
    std::cout << "config:          " << config_to_json(report.best_config).dump() << '\n';
    std::cout << "scheduler:       fe " << report.n_fe << " steps (" << report.s_fe
              << " successes), hpo " << report.n_hpo << " steps (" << report.s_hpo
              << " successes), " << report.aborted << " aborted\n";
    std::cout << "tree:            " << report.tree_size << " nodes, "
              << report.observation_count << " observations\n";
    for (const std::string& warning : report.warnings) {
        std::cout << "warning:         " << warning << '\n';
    }
    if (!config.output_dir.empty()) {
        std::cout << "artifacts:       " << config.output_dir << '\n';
    }
    return kOk;
}

int cmd_inspect(const std::string& report_path) {
    std::ifstream in(report_path, std::ios::binary);
    if (!in) {
        throw IoError("cannot read report file: " + report_path);
    }
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw IoError("malformed report file " + report_path + ": " + e.what());
    }

    const auto& constants = doc.at("constants");
    const auto& best = doc.at("best");
    const auto& scheduler = doc.at("scheduler");
    std::cout << "run:             budget " << constants.at("budget").dump() << ", learner "
              << constants.at("learner").get<std::string>() << ", seed "
              << constants.at("seed").dump() << ", backend "
              << constants.at("backend").get<std::string>() << '\n';
    std::cout << "root score:      " << doc.at("root_score").dump() << '\n';
    std::cout << "best validation: " << best.at("validation_score").dump() << " (node "
              << best.at("node").dump() << ")\n";
    std::cout << "test score:      " << best.at("test_score").dump() << '\n';
    std::cout << "pipeline:        " << render_pipeline(best.at("pipeline")) << '\n';
    std::cout << "config:          " << best.at("config").dump() << '\n';
    std::cout << "scheduler:       fe " << scheduler.at("n_fe").dump() << " steps ("
              << scheduler.at("s_fe").dump() << " successes), hpo "
              << scheduler.at("n_hpo").dump() << " steps (" << scheduler.at("s_hpo").dump()
              << " successes), " << doc.at("aborted_steps").dump() << " aborted\n";
    std::cout << "tree:            " << doc.at("tree_size").dump() << " nodes, "
              << doc.at("observations").dump() << " observations\n";
    for (const auto& warning : doc.at("warnings")) {
        std::cout << "warning:         " << warning.get<std::string>() << '\n';
    }
    return kOk;
}

int cmd_validate(const std::string& data_path, const std::string& schema_path) {
    try {
        const TableSchema schema = load_schema(schema_path);
        const DataTable table = load_csv(data_path, schema);
        std::cout << "ok: " << table.n_rows() << " rows, " << table.columns.size()
                  << " columns, target \"" << table.target << "\" (" << to_string(table.task)
                  << ")\n";
        for (const Column& col : table.columns) {
            std::size_t missing = 0;
            for (std::size_t r = 0; r < col.size(); ++r) {
                missing += col.missing(r) ? 1 : 0;
            }
            std::cout << "  " << col.name << ": " << to_string(col.kind) << ", " << missing
                      << " missing\n";
        }
        return kOk;
    } catch (const SchemaError& e) {
        std::cerr << "invalid: " << e.what() << '\n';
        return kUsageError;
    } catch (const SpecError& e) {
        std::cerr << "invalid: " << e.what() << '\n';
        return kUsageError;
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"joint feature engineering and hyperparameter search"};
    app.require_subcommand(1);

    std::string config_path;
    CLI::App* run_cmd = app.add_subcommand("run", "execute a search from a config file");
    run_cmd->add_option("--config", config_path, "run configuration JSON")
        ->required()
        ->check(CLI::ExistingFile);

    long budget = 0;
    double p1 = -1.0;
    double c2 = 1.4142135623730951;
    bool trace = false;
    bool sweep = false;
    std::string out_path;
    CLI::App* sim_cmd =
        app.add_subcommand("schedule-sim", "simulate the scheduler under neutral rewards");
    sim_cmd->add_option("--budget", budget, "total step budget")->required();
    sim_cmd->add_option("--p1", p1, "prior weight of the feature engineering arm");
    sim_cmd->add_option("--c2", c2, "exploration constant");
    CLI::Option* trace_opt = sim_cmd->add_flag("--trace", trace, "emit the per-step trace");
    CLI::Option* sweep_opt =
        sim_cmd->add_flag("--sweep", sweep, "sweep budgets 2..budget with 10 priors each");
    trace_opt->excludes(sweep_opt);
    sim_cmd->add_option("--out", out_path, "write the CSV here instead of stdout");

    std::string report_path;
    CLI::App* inspect_cmd = app.add_subcommand("inspect", "summarize a finished report");
    inspect_cmd->add_option("--report", report_path, "report JSON file")
        ->required()
        ->check(CLI::ExistingFile);

    std::string data_path;
    std::string schema_path;
    CLI::App* validate_cmd =
        app.add_subcommand("validate", "check a dataset against its schema without running");
    validate_cmd->add_option("--data", data_path, "CSV dataset")->required()->check(
        CLI::ExistingFile);
    validate_cmd->add_option("--schema", schema_path, "schema sidecar JSON")
        ->required()
        ->check(CLI::ExistingFile);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kUsageError;
    }

    try {
        if (run_cmd->parsed()) {
            return cmd_run(config_path);
        }
        if (sim_cmd->parsed()) {
            return cmd_schedule_sim(budget, p1, c2, trace, sweep, out_path);
        }
        if (inspect_cmd->parsed()) {
            return cmd_inspect(report_path);
        }
        if (validate_cmd->parsed()) {
            return cmd_validate(data_path, schema_path);
        }
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kRuntimeError;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kRuntimeError;
    }
    return kUsageError;
}
