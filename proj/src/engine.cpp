#include "tandem/engine.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <set>
#include <utility>

#include "tandem/condbo.hpp"

namespace tandem {

namespace {

using nlohmann::json;

void reject_unknown_keys(const json& object, const std::set<std::string>& known,
                         const std::string& where) {
    for (const auto& [key, value] : object.items()) {
        (void)value;
        if (!known.contains(key)) {
            throw SpecError("unknown " + where + " key: " + key);
        }
    }
}

double number_field(const json& object, const std::string& key, double fallback) {
    if (!object.contains(key)) {
        return fallback;
    }
    if (!object.at(key).is_number()) {
        throw SpecError("run config field must be a number: " + key);
    }
    return object.at(key).get<double>();
}

long integer_field(const json& object, const std::string& key, long fallback) {
    if (!object.contains(key)) {
        return fallback;
    }
    if (!object.at(key).is_number_integer()) {
        throw SpecError("run config field must be an integer: " + key);
    }
    return object.at(key).get<long>();
}

std::string string_field(const json& object, const std::string& key, std::string fallback) {
    if (!object.contains(key)) {
        return fallback;
    }
    if (!object.at(key).is_string()) {
        throw SpecError("run config field must be a string: " + key);
    }
    return object.at(key).get<std::string>();
}

Proposal proposal_from_json(const json& entry, std::size_t index) {
    const std::string where = "script entry " + std::to_string(index + 1);
    if (!entry.is_object()) {
        throw SpecError(where + " must be a JSON object");
    }
    reject_unknown_keys(entry, {"reason", "way", "required_feature_columns", "operations"},
                        where);
    Proposal proposal;
    proposal.reason = string_field(entry, "reason", "");
    proposal.way = string_field(entry, "way", "");
    if (entry.contains("required_feature_columns")) {
        if (!entry.at("required_feature_columns").is_array()) {
            throw SpecError(where + " required_feature_columns must be an array");
        }
        for (const auto& name : entry.at("required_feature_columns")) {
            if (!name.is_string()) {
                throw SpecError(where + " required_feature_columns must hold strings");
            }
            proposal.required_features.push_back(name.get<std::string>());
        }
    }
    if (!entry.contains("operations") || !entry.at("operations").is_array()) {
        throw SpecError(where + " needs an operations array");
    }
    for (const auto& op : entry.at("operations")) {
        proposal.ops.push_back(operation_spec_from_json(op));
    }
    return proposal;
}

std::string format_double(double value) {
    std::array<char, 32> buffer;
    const auto result = std::to_chars(buffer.data(), buffer.data() + buffer.size(), value);
    return std::string(buffer.data(), result.ptr);
}

// Buffered event sink; records are appended under a lock and written as one
// JSON object per line when the run finishes.
class EventLog {
  public:
    void append(json record) {
        const std::lock_guard<std::mutex> lock(mutex_);
        records_.push_back(std::move(record));
    }

    std::size_t evaluation_count() const {
        std::size_t count = 0;
        for (const auto& record : records_) {
            if (record.at("event") == "evaluation") {
                ++count;
            }
        }
        return count;
    }

    void write(const std::filesystem::path& path) const {
        std::ofstream out(path);
        if (!out) {
            throw IoError("cannot write event log: " + path.string());
        }
        for (const auto& record : records_) {
            out << record.dump() << "\n";
        }
    }

  private:
    mutable std::mutex mutex_;
    std::vector<json> records_;
};

// Decorates any backend with prompt/reply event records tagged by the
// current budget step.
class LoggingBackend : public ProposerBackend {
  public:
    LoggingBackend(ProposerBackend& inner, EventLog& log) : inner_(inner), log_(log) {}

    void set_step(long step) {
        step_ = step;
    }

    std::string complete(const std::string& prompt, double temperature) override {
        log_.append({{"event", "prompt"},
                     {"step", step_},
                     {"temperature", temperature},
                     {"content", prompt}});
        try {
            const std::string reply = inner_.complete(prompt, temperature);
            log_.append({{"event", "reply"}, {"step", step_}, {"content", reply}});
            return reply;
        } catch (const Error& error) {
            log_.append({{"event", "backend_error"}, {"step", step_}, {"error", error.what()}});
            throw;
        }
    }

    std::string name() const override {
        return inner_.name();
    }

  private:
    ProposerBackend& inner_;
    EventLog& log_;
    long step_ = 0;
};

std::vector<OperationSpec> pipeline_to_node(const SearchTree& tree, int id) {
    std::vector<int> chain;
    for (int at = id;;) {
        chain.push_back(at);
        const auto& parent = tree.node(at).parent;
        if (!parent.has_value()) {
            break;
        }
        at = *parent;
    }
    std::reverse(chain.begin(), chain.end());
    std::vector<OperationSpec> specs;
    for (int at : chain) {
        for (const FittedOperation& op : tree.node(at).step) {
            specs.push_back(op.spec);
        }
    }
    return specs;
}

}  // namespace

RunConfig load_run_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open run config: " + path);
    }
    json doc = json::parse(in, nullptr, false);
    if (doc.is_discarded()) {
        throw SpecError("run config is not valid JSON: " + path);
    }
    if (!doc.is_object()) {
        throw SpecError("run config must be a JSON object");
    }
    reject_unknown_keys(doc,
                        {"dataset", "schema", "learner", "budget", "seed", "c1", "c2", "p1",
                         "p2", "backend", "llm", "script", "split", "cache_budget",
                         "output_dir"},
                        "run config");

    RunConfig config;
    config.dataset_path = string_field(doc, "dataset", "");
    config.schema_path = string_field(doc, "schema", "");
    config.learner = string_field(doc, "learner", config.learner);
    config.budget = integer_field(doc, "budget", config.budget);
    config.seed = static_cast<std::uint64_t>(integer_field(doc, "seed", 1));
    config.c1 = number_field(doc, "c1", config.c1);
    config.c2 = number_field(doc, "c2", config.c2);
    config.p1 = number_field(doc, "p1", config.p1);
    if (doc.contains("p2")) {
        const double p2 = number_field(doc, "p2", 1.0 - config.p1);
        if (std::abs(config.p1 + p2 - 1.0) > 1e-9) {
            throw SpecError("run config priors must satisfy p1 + p2 = 1");
        }
    }
    config.backend = string_field(doc, "backend", config.backend);
    if (doc.contains("llm")) {
        const json& llm = doc.at("llm");
        if (!llm.is_object()) {
            throw SpecError("run config llm settings must be an object");
        }
        reject_unknown_keys(llm, {"base_url", "path", "model", "timeout_seconds", "api_key_env"},
                            "llm settings");
        config.llm.base_url = string_field(llm, "base_url", config.llm.base_url);
        config.llm.path = string_field(llm, "path", config.llm.path);
        config.llm.model = string_field(llm, "model", config.llm.model);
        config.llm.timeout_seconds =
            static_cast<int>(integer_field(llm, "timeout_seconds", config.llm.timeout_seconds));
        config.api_key_env = string_field(llm, "api_key_env", config.api_key_env);
    }
    if (doc.contains("script")) {
        if (!doc.at("script").is_array()) {
            throw SpecError("run config script must be an array");
        }
        for (std::size_t i = 0; i < doc.at("script").size(); ++i) {
            config.script.push_back(proposal_from_json(doc.at("script")[i], i));
        }
    }
    if (doc.contains("split")) {
        const json& split = doc.at("split");
        if (!split.is_object()) {
            throw SpecError("run config split must be an object");
        }
        reject_unknown_keys(split, {"train_fraction", "val_fraction", "test_fraction", "seed"},
                            "split");
        config.split.train_fraction =
            number_field(split, "train_fraction", config.split.train_fraction);
        config.split.val_fraction = number_field(split, "val_fraction", config.split.val_fraction);
        config.split.test_fraction =
            number_field(split, "test_fraction", config.split.test_fraction);
        config.split.seed = static_cast<std::uint64_t>(
            integer_field(split, "seed", static_cast<long>(config.seed)));
    } else {
        config.split.seed = config.seed;
    }
    config.cache_budget = static_cast<std::size_t>(
        integer_field(doc, "cache_budget", static_cast<long>(config.cache_budget)));
    config.output_dir = string_field(doc, "output_dir", "");
    return config;
}

std::vector<std::string> validate_run_config(const RunConfig& config) {
    if (config.budget < 2) {
        throw SpecError("run budget must be at least 2");
    }
    if (!(config.c1 > 0.0) || !(config.c2 > 0.0)) {
        throw SpecError("exploration constants c1 and c2 must be positive");
    }
    if (!(config.p1 >= 0.5 && config.p1 <= 1.0)) {
        throw SpecError("prior p1 must lie in [0.5, 1]");
    }
    const auto learners = known_learners();
    if (std::find(learners.begin(), learners.end(), config.learner) == learners.end()) {
        throw SpecError("unknown learner: " + config.learner);
    }
    if (config.backend != "scripted" && config.backend != "llm") {
        throw SpecError("unknown proposer backend: " + config.backend);
    }
    std::vector<std::string> warnings;
    if (!balanced_prior_ok(config.budget, config.p1)) {
        warnings.push_back("prior p1=" + format_double(config.p1) +
                           " is outside [0.5, " +
                           format_double(balanced_prior_bound(config.budget)) +
                           ") for budget " + std::to_string(config.budget) +
                           "; the even budget split is not guaranteed");
    }
    return warnings;
}

std::pair<DataTable, DataTable> terminal_encoding_guard(const DataTable& train,
                                                        const DataTable& eval) {
    OperationSpec spec;
    spec.kind = OpKind::FrequencyEncode;
    spec.params = nlohmann::json::object();
    for (const Column& column : train.columns) {
        if (column.kind == ColumnKind::Categorical && column.name != train.target) {
            spec.inputs.push_back(column.name);
        }
    }
    if (spec.inputs.empty()) {
        return {train, eval};
    }
    const Pipeline guard = fit_pipeline({spec}, train);
    return {apply_pipeline(guard, train), apply_pipeline(guard, eval)};
}

double refit_final(const std::vector<OperationSpec>& pipeline, const Configuration& config,
                   const DataTable& train, const DataTable& val, const DataTable& test,
                   const std::string& learner) {
    const DataTable combined = concat_rows(train, val);
    DataTable fitted = combined;
    DataTable held_out = test;
    if (!pipeline.empty()) {
        const Pipeline refit = fit_pipeline(pipeline, combined);
        fitted = apply_pipeline(refit, combined);
        held_out = apply_pipeline(refit, test);
    }
    const auto [guarded_fit, guarded_test] = terminal_encoding_guard(fitted, held_out);
    return train_and_score(learner, config, guarded_fit, guarded_test);
}

nlohmann::json report_to_json(const RunReport& report, const RunConfig& config) {
    json history = json::array();
    for (const HistoryEntry& entry : report.history) {
        history.push_back({{"step", entry.step},
                           {"action", to_string(entry.action)},
                           {"node", entry.node},
                           {"score", entry.score},
                           {"new_best", entry.new_best}});
    }
    json pipeline = json::array();
    for (const OperationSpec& spec : report.best_pipeline) {
        pipeline.push_back(to_json(spec));
    }
    return json{
        {"constants",
         {{"budget", config.budget},
          {"seed", config.seed},
          {"learner", config.learner},
          {"backend", config.backend},
          {"c1", config.c1},
          {"c2", config.c2},
          {"p1", config.p1},
          {"p2", 1.0 - config.p1},
          {"cache_budget", config.cache_budget},
          {"split",
           {{"train_fraction", config.split.train_fraction},
            {"val_fraction", config.split.val_fraction},
            {"test_fraction", config.split.test_fraction},
            {"seed", config.split.seed}}},
          {"search",
           {{"root_initializations", kRootInitializations},
            {"node_explorations", kNodeExplorations},
            {"node_exploitations", kNodeExploitations}}},
          {"surrogate",
           {{"trees", kSurrogateTrees},
            {"cold_start_observations", kColdStartObservations},
            {"neighbors_per_config", kNeighborsPerConfig},
            {"random_draws", kRandomDraws},
            {"pool_cap", kPoolCap},
            {"variance_floor", kVarianceFloor},
            {"perturbation_width", kPerturbationWidth}}}}},
        {"best",
         {{"node", report.best_node},
          {"pipeline", pipeline},
          {"config", config_to_json(report.best_config)},
          {"validation_score", report.best_validation},
          {"test_score", report.test_score}}},
        {"root_score", report.root_score},
        {"history", history},
        {"aborted_steps", report.aborted},
        {"scheduler",
         {{"n_fe", report.n_fe},
          {"n_hpo", report.n_hpo},
          {"s_fe", report.s_fe},
          {"s_hpo", report.s_hpo}}},
        {"range", {{"lo", report.range_lo}, {"hi", report.range_hi}}},
        {"tree_size", report.tree_size},
        {"observations", report.observation_count},
        {"warnings", report.warnings},
    };
}

std::string curve_csv(const RunReport& report) {
    std::string out = "step,action,score,best\n";
    out += "0,init," + format_double(report.root_score) + "," +
           format_double(report.root_score) + "\n";
    double best = report.root_score;
    for (const HistoryEntry& entry : report.history) {
        best = std::max(best, entry.score);
        out += std::to_string(entry.step) + "," + to_string(entry.action) + "," +
               format_double(entry.score) + "," + format_double(best) + "\n";
    }
    return out;
}

RunReport run_with(const RunConfig& config, const DataTable& table, ProposerBackend& backend,
                   const std::map<std::string, std::string>& notes) {
    RunReport report;
    report.warnings = validate_run_config(config);
    validate_table(table);
    const Split split = split_table(table, config.split);

    const HyperparameterSpace space = hyperparameter_space(config.learner);
    const Configuration default_cfg = default_config(config.learner);
    const std::string& learner = config.learner;

    SearchTree tree(split.train, split.val, config.c1, config.cache_budget, default_cfg);
    SchedulerState sched = make_scheduler(config.budget, config.p1, config.c2);
    std::mt19937_64 rng(config.seed);

    EventLog log;
    LoggingBackend logged(backend, log);
    std::vector<Observation> observations;

    const Evaluator evaluate = [&learner](const DataTable& fit_table,
                                          const DataTable& eval_table,
                                          const Configuration& candidate) {
        const auto [guarded_fit, guarded_eval] = terminal_encoding_guard(fit_table, eval_table);
        return train_and_score(learner, candidate, guarded_fit, guarded_eval);
    };

    log.append({{"event", "run_start"},
                {"budget", config.budget},
                {"learner", learner},
                {"seed", config.seed},
                {"backend", backend.name()}});

    // The root's free default-configuration evaluation: the score that seeds
    // the global range, the observation set, and the incumbent.
    {
        const auto root_tables = tree.tables(0);
        const double root_score = evaluate(root_tables->train, root_tables->val, default_cfg);
        tree.record_evaluation(0, default_cfg, root_score);
        tree.localized_vmax_update(0, root_score);
        observations.push_back(Observation{
            0, encode_observation(tree.node(0).meta, default_cfg, space), root_score});
        log.append({{"event", "evaluation"},
                    {"step", 0},
                    {"kind", "root"},
                    {"node", 0},
                    {"config", config_to_json(default_cfg)},
                    {"score", root_score}});
        report.root_score = root_score;
        report.best_validation = root_score;
        report.best_node = 0;
        report.best_config = default_cfg;
    }

    const auto note_best = [&report](double score, int node, const Configuration& candidate) {
        if (score > report.best_validation) {
            report.best_validation = score;
            report.best_node = node;
            report.best_config = candidate;
            return true;
        }
        return false;
    };

    const auto build_context = [&](int base, const std::vector<int>& path,
                                   Directive directive) {
        ProposerContext ctx;
        const auto tables = tree.tables(base);
        ctx.task = tables->train.task;
        ctx.target = tables->train.target;
        ctx.learner = learner;
        ctx.n_rows = tables->train.n_rows();
        ctx.schema = tables->train.schema();
        ctx.summaries = column_summaries(tables->train);
        ctx.notes = notes;
        for (int id : path) {
            AncestorStep step;
            const TreeNode& node = tree.node(id);
            step.reason = node.reason;
            step.way = id == 0 ? "do nothing" : node.way;
            step.score = node.evaluations.front().second;
            ctx.ancestors.push_back(step);
        }
        ctx.directive = directive;
        if (directive == Directive::Exploitation) {
            std::set<std::string> available;
            for (const std::string& name : tables->train.feature_names()) {
                available.insert(name);
            }
            for (const MemoryEntry& entry :
                 pareto_select(memory_filter(tree.memory(), available))) {
                ctx.memory.push_back(MemoryNote{entry.reason, entry.way, entry.v, entry.delta_v});
            }
        }
        return ctx;
    };

    for (long m = 1; m <= config.budget; ++m) {
        const SchedulerAction action = pucb_select(sched);
        log.append({{"event", "selection"},
                    {"step", m},
                    {"action", to_string(action)},
                    {"n_fe", sched.n_fe},
                    {"n_hpo", sched.n_hpo}});
        bool success = false;

        if (action == SchedulerAction::FE) {
            json record{{"event", "fe_step"}, {"step", m}, {"ok", false}};
            logged.set_step(m);
            try {
                const std::vector<int> path = tree.uct_select();
                const int base = path.back();
                record["base"] = base;
                const Directive directive = tree.consume_directive(base);
                record["directive"] = to_string(directive);

                const ProposerContext ctx = build_context(base, path, directive);
                const ProposeResult proposed = propose(ctx, logged, rng);
                record["attempts"] = proposed.attempts;
                record["fallback"] = proposed.fallback;

                const double best_before = tree.range().hi;
                const ExpandResult result = tree.expand_and_playout(base, proposed.proposal,
                                                                    evaluate);
                if (result.ok) {
                    const long reward =
                        tree.backpropagate(result.node_id, result.score, best_before);
                    const Configuration& used =
                        tree.node(result.node_id).evaluations.front().first;
                    observations.push_back(Observation{
                        result.node_id,
                        encode_observation(tree.node(result.node_id).meta, used, space),
                        result.score});
                    log.append({{"event", "evaluation"},
                                {"step", m},
                                {"kind", "playout"},
                                {"node", result.node_id},
                                {"config", config_to_json(used)},
                                {"score", result.score}});
                    success = result.score > result.parent_score;
                    const bool fresh = note_best(result.score, result.node_id, used);
                    report.history.push_back(
                        HistoryEntry{m, action, result.node_id, result.score, fresh});
                    record["ok"] = true;
                    record["node"] = result.node_id;
                    record["score"] = result.score;
                    record["reward"] = reward;
                } else {
                    ++report.aborted;
                    record["error"] = result.error;
                }
            } catch (const Error& error) {
                ++report.aborted;
                record["error"] = error.what();
            }
            record["success"] = success;
            log.append(record);
        } else {
            json record{{"event", "hpo_step"}, {"step", m}, {"ok", false}};
            try {
                const HpoChoice choice = hpo_step(tree, observations, space, rng);
                record["node"] = choice.node;
                record["cold_start"] = choice.cold_start;
                record["ei"] = choice.ei;
                record["pool_size"] = choice.pool_size;

                const double prior_best = tree.best_own_score(choice.node);
                const auto tables = tree.tables(choice.node);
                const double score = evaluate(tables->train, tables->val, choice.config);
                tree.record_evaluation(choice.node, choice.config, score);
                tree.localized_vmax_update(choice.node, score);
                observations.push_back(Observation{
                    choice.node,
                    encode_observation(tree.node(choice.node).meta, choice.config, space),
                    score});
                log.append({{"event", "evaluation"},
                            {"step", m},
                            {"kind", "hpo"},
                            {"node", choice.node},
                            {"config", config_to_json(choice.config)},
                            {"score", score}});
                success = score > prior_best;
                const bool fresh = note_best(score, choice.node, choice.config);
                report.history.push_back(HistoryEntry{m, action, choice.node, score, fresh});
                record["ok"] = true;
                record["score"] = score;
            } catch (const Error& error) {
                ++report.aborted;
                record["error"] = error.what();
            }
            record["success"] = success;
            log.append(record);
        }
        record_outcome(sched, action, success);
    }

    report.n_fe = sched.n_fe;
    report.n_hpo = sched.n_hpo;
    report.s_fe = sched.s_fe;
    report.s_hpo = sched.s_hpo;
    report.range_lo = tree.range().lo;
    report.range_hi = tree.range().hi;
    report.tree_size = tree.size();
    report.observation_count = observations.size();
    report.best_pipeline = pipeline_to_node(tree, report.best_node);
    report.test_score = refit_final(report.best_pipeline, report.best_config, split.train,
                                    split.val, split.test, learner);

    log.append({{"event", "run_end"},
                {"best_node", report.best_node},
                {"best_validation", report.best_validation},
                {"test_score", report.test_score},
                {"aborted", report.aborted},
                {"evaluations", log.evaluation_count()}});

    if (!config.output_dir.empty()) {
        const std::filesystem::path dir(config.output_dir);
        std::filesystem::create_directories(dir);
        log.write(dir / "events.jsonl");
        std::ofstream report_out(dir / "report.json");
        if (!report_out) {
            throw IoError("cannot write report: " + (dir / "report.json").string());
        }
        report_out << report_to_json(report, config).dump(2) << "\n";
        std::ofstream curve_out(dir / "curve.csv");
        if (!curve_out) {
            throw IoError("cannot write curve: " + (dir / "curve.csv").string());
        }
        curve_out << curve_csv(report);
    }
    return report;
}

RunReport run(const RunConfig& config) {
    if (config.dataset_path.empty() || config.schema_path.empty()) {
        throw SpecError("run config needs dataset and schema paths");
    }
    const TableSchema schema = load_schema(config.schema_path);
    const DataTable table = load_csv(config.dataset_path, schema);
    if (config.backend == "scripted") {
        ScriptedBackend backend(config.script);
        return run_with(config, table, backend, schema.notes);
    }
    LlmSettings settings = config.llm;
    if (const char* key = std::getenv(config.api_key_env.c_str())) {
        settings.api_key = key;
    }
    LlmBackend backend(settings);
    return run_with(config, table, backend, schema.notes);
}

}  // namespace tandem
