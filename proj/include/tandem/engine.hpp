#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "tandem/fetree.hpp"
#include "tandem/learners.hpp"
#include "tandem/proposer.hpp"
#include "tandem/scheduler.hpp"
#include "tandem/tabular.hpp"

namespace tandem {

struct RunConfig {
    std::string dataset_path;
    std::string schema_path;
    std::string learner = "ridge";
    long budget = 200;
    std::uint64_t seed = 1;
    double c1 = 1.4142135623730951;
    double c2 = 1.4142135623730951;
    double p1 = 0.9;
    std::string backend = "scripted";
    LlmSettings llm;
    // Name of the environment variable holding the LLM credential.
    std::string api_key_env = "TANDEM_API_KEY";
    std::vector<Proposal> script;
    SplitSpec split;
    std::size_t cache_budget = 64;
    std::string output_dir;
};

// Reads the JSON run configuration. Unknown keys and structural problems
// throw SpecError; tuning values that merely void the balanced-budget
// guarantee are left to validate_run_config's warnings.
RunConfig load_run_config(const std::string& path);

// Hard violations (budget < 2, non-positive exploration constants, unknown
// learner or backend) throw SpecError; the returned strings are non-fatal
// warnings, currently only a prior outside the balanced range.
std::vector<std::string> validate_run_config(const RunConfig& config);

struct HistoryEntry {
    long step = 0;
    SchedulerAction action = SchedulerAction::FE;
    int node = 0;
    double score = 0.0;
    bool new_best = false;
};

struct RunReport {
    int best_node = 0;
    std::vector<OperationSpec> best_pipeline;
    Configuration best_config;
    double best_validation = 0.0;
    double test_score = 0.0;
    double root_score = 0.0;
    // One entry per budgeted step that produced an evaluation; steps aborted
    // before any evaluation are counted separately.
    std::vector<HistoryEntry> history;
    long aborted = 0;
    long n_fe = 0;
    long n_hpo = 0;
    long s_fe = 0;
    long s_hpo = 0;
    double range_lo = 0.0;
    double range_hi = 0.0;
    std::size_t tree_size = 0;
    std::size_t observation_count = 0;
    std::vector<std::string> warnings;
};

nlohmann::json report_to_json(const RunReport& report, const RunConfig& config);

// "step,action,score,best" rows: a step-0 init row for the root evaluation,
// then one row per history entry.
std::string curve_csv(const RunReport& report);

// Frequency-encodes every categorical feature column with counts fitted on
// the train split, so learners always see numeric features. Unseen eval
// categories encode to 0; all-numeric tables pass through unchanged.
std::pair<DataTable, DataTable> terminal_encoding_guard(const DataTable& train,
                                                        const DataTable& eval);

// Refits the pipeline on train+val, trains the learner with the winning
// configuration on the transformed result, and scores the transformed test
// split.
double refit_final(const std::vector<OperationSpec>& pipeline, const Configuration& config,
                   const DataTable& train, const DataTable& val, const DataTable& test,
                   const std::string& learner);

// The full cycle on an already-loaded table with a caller-owned proposer:
// root initialization, budgeted scheduler loop, final refit, and, when
// output_dir is set, events.jsonl / report.json / curve.csv. `notes` carries
// the schema sidecar's column annotations into prompts.
RunReport run_with(const RunConfig& config, const DataTable& table, ProposerBackend& backend,
                   const std::map<std::string, std::string>& notes = {});

// Loads the dataset and schema from the configured paths, builds the
// configured backend (scripted from config.script, or the HTTP client with
// the credential from api_key_env), and delegates to run_with.
RunReport run(const RunConfig& config);

}  // namespace tandem
