// Acceptance gate: one line per criterion, nonzero exit when any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "tandem/common.hpp"
#include "tandem/condbo.hpp"
#include "tandem/engine.hpp"
#include "tandem/feops.hpp"
#include "tandem/fetree.hpp"
#include "tandem/learners.hpp"
#include "tandem/metafeat.hpp"
#include "tandem/proposer.hpp"
#include "tandem/scheduler.hpp"
#include "tandem/tabular.hpp"

#include "helpers.hpp"

using namespace tandem;
using tandem::testing::make_spec;
using tandem::testing::mixed_table;
using tandem::testing::one_spec_per_kind;
using tandem::testing::scramble_rows;
using tandem::testing::tables_equal;

namespace {

constexpr double kPi = 3.141592653589793;
constexpr double kSqrt2 = 1.4142135623730951;

struct Outcome {
    bool pass = true;
    std::string detail;

    void fail(const std::string& message) {
        pass = false;
        if (detail.empty()) {
            detail = message;
        }
    }
    void require(bool condition, const std::string& message) {
        if (!condition) {
            fail(message);
        }
    }
};

DataTable wave_table(std::size_t rows, unsigned seed) {
    std::vector<double> hour, drift, y;
    unsigned state = seed * 2654435761u + 7u;
    for (std::size_t i = 0; i < rows; ++i) {
        state = state * 1664525u + 1013904223u;
        const double h = static_cast<double>(i % 24);
        hour.push_back(h);
        drift.push_back(3.0 * ((state >> 8) / 16777216.0));
        y.push_back(5.0 * std::sin(2.0 * kPi * h / 24.0) + 2.0);
    }
    DataTable t;
    t.columns.push_back(Column::numeric("hour", hour));
    t.columns.push_back(Column::numeric("drift", drift));
    t.columns.push_back(Column::numeric("y", y));
    t.target = "y";
    t.task = TaskKind::Regression;
    return t;
}

Proposal make_proposal(const std::string& reason, std::vector<std::string> required,
                       std::vector<OperationSpec> ops) {
    Proposal p;
    p.reason = reason;
    p.way = "scripted: " + reason;
    p.required_features = std::move(required);
    p.ops = std::move(ops);
    return p;
}

std::vector<Proposal> wave_script() {
    return {
        make_proposal("scale drift", {"drift"},
                      {make_spec(OpKind::StandardScale, {}, {"drift"})}),
        make_proposal("soften drift", {"drift"}, {make_spec(OpKind::Log1p, {}, {"drift"})}),
        make_proposal("interact hour with drift", {"hour", "drift"},
                      {make_spec(OpKind::Arithmetic, {{"op", "*"}}, {"hour", "drift"},
                                 {"hour_by_drift"})}),
        make_proposal("encode the daily cycle", {"hour"},
                      {make_spec(OpKind::CyclicEncode, {{"period", 24.0}}, {"hour"})}),
        make_proposal("wave of drift", {"drift"},
                      {make_spec(OpKind::Unary, {{"fn", "sin"}}, {"drift"}, {"drift_sin"})}),
    };
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return buffer.str();
}

// Tie-averaged ranks, 1-based.
std::vector<double> tied_ranks(const std::vector<double>& values) {
    std::vector<std::size_t> order(values.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
    std::vector<double> ranks(values.size());
    std::size_t i = 0;
    while (i < order.size()) {
        std::size_t j = i;
        while (j + 1 < order.size() && values[order[j + 1]] == values[order[i]]) {
            ++j;
        }
        const double shared = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t k = i; k <= j; ++k) {
            ranks[order[k]] = shared;
        }
        i = j + 1;
    }
    return ranks;
}

double spearman(const std::vector<double>& a, const std::vector<double>& b) {
    const auto ra = tied_ranks(a);
    const auto rb = tied_ranks(b);
    const double n = static_cast<double>(a.size());
    const double ma = std::accumulate(ra.begin(), ra.end(), 0.0) / n;
    const double mb = std::accumulate(rb.begin(), rb.end(), 0.0) / n;
    double cov = 0.0;
    double va = 0.0;
    double vb = 0.0;
    for (std::size_t i = 0; i < ra.size(); ++i) {
        cov += (ra[i] - ma) * (rb[i] - mb);
        va += (ra[i] - ma) * (ra[i] - ma);
        vb += (rb[i] - mb) * (rb[i] - mb);
    }
    return cov / std::sqrt(va * vb);
}

Outcome equilibrium_sweep() {
    Outcome out;
    double max_residual = 0.0;
    for (long budget = 2; budget <= 400; ++budget) {
        const double bound = balanced_prior_bound(budget);
        for (int i = 0; i < 10; ++i) {
            const double p1 = 0.5 + (bound - 0.5) * (i / 10.0);
            const NeutralSimulation sim = simulate_neutral(budget, p1, kSqrt2);
            const long gap = sim.n_fe - sim.n_hpo;
            out.require(gap >= -1 && gap <= 1,
                        "count gap " + std::to_string(gap) + " at budget " +
                            std::to_string(budget));
            if (budget % 2 == 0) {
                out.require(gap == 0, "uneven split at even budget " + std::to_string(budget));
            }
            for (const double q : sim.q_trace) {
                out.require(std::abs(q) < 1.0, "witness escaped (-1, 1) at budget " +
                                                   std::to_string(budget));
            }
            const auto state = make_scheduler(budget, p1, kSqrt2);
            const double delta = (p1 - 0.5) / static_cast<double>(budget);
            for (long m = 0; m < budget; ++m) {
                const double w_fe = prior_weight(state, SchedulerAction::FE, m);
                const double picked = sim.fe_picks[static_cast<std::size_t>(m)] ? 1.0 : 0.0;
                const double predicted = sim.q_trace[static_cast<std::size_t>(m)] + w_fe -
                                         picked -
                                         delta * static_cast<double>(m + 3);
                max_residual = std::max(
                    max_residual,
                    std::abs(sim.q_trace[static_cast<std::size_t>(m + 1)] - predicted));
            }
        }
    }
    out.require(max_residual <= 1e-9,
                "recurrence residual " + std::to_string(max_residual));
    return out;
}

Outcome reference_instance() {
    Outcome out;
    const NeutralSimulation sim = simulate_neutral(200, 0.9, kSqrt2);
    out.require(sim.n_fe == 100, "n_fe = " + std::to_string(sim.n_fe));
    out.require(sim.n_hpo == 100, "n_hpo = " + std::to_string(sim.n_hpo));
    out.require(sim.q_trace[0] == 0.8, "q_trace[0] = " + std::to_string(sim.q_trace[0]));
    return out;
}

Outcome pareto_oracle() {
    Outcome out;
    std::mt19937_64 rng(4242);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    for (int instance = 0; instance < 1000; ++instance) {
        const std::size_t n = 1 + rng() % 500;
        std::vector<MemoryEntry> entries(n);
        for (std::size_t i = 0; i < n; ++i) {
            auto coordinate = [&] {
                const double u = unif(rng);
                return unif(rng) < 0.3 ? std::round(4.0 * u) / 4.0 : u;
            };
            entries[i].reason = std::to_string(i);
            entries[i].v = coordinate();
            entries[i].delta_v = coordinate();
        }

        std::vector<std::string> oracle;
        for (std::size_t i = 0; i < n; ++i) {
            bool dominated = false;
            for (std::size_t j = 0; j < n && !dominated; ++j) {
                dominated = entries[j].v >= entries[i].v &&
                            entries[j].delta_v >= entries[i].delta_v &&
                            (entries[j].v > entries[i].v ||
                             entries[j].delta_v > entries[i].delta_v);
            }
            if (!dominated) {
                oracle.push_back(entries[i].reason);
            }
        }

        std::vector<std::string> fast;
        for (const MemoryEntry& survivor : pareto_select(entries)) {
            fast.push_back(survivor.reason);
        }
        if (fast != oracle) {
            out.fail("mismatch on instance " + std::to_string(instance) + " with n = " +
                     std::to_string(n));
            return out;
        }
    }
    return out;
}

Outcome ei_monte_carlo() {
    Outcome out;
    out.require(expected_improvement(2.0, 0.0, 1.0) == 1.0, "zero-sigma gain limit");
    out.require(expected_improvement(0.5, 0.0, 1.0) == 0.0, "zero-sigma shortfall limit");

    const std::vector<double> diffs = {-2.0, -1.0, 0.0, 0.5, 2.0};
    const std::vector<double> sigmas = {0.05, 0.1, 0.25, 0.5, 1.0};
    std::mt19937_64 rng(2024);
    std::normal_distribution<double> normal(0.0, 1.0);
    double worst = 0.0;
    for (const double diff : diffs) {
        for (const double sigma : sigmas) {
            const double closed = expected_improvement(diff, sigma * sigma, 0.0);
            double total = 0.0;
            const int pairs = 500000;  // antithetic halves, one million draws
            for (int i = 0; i < pairs; ++i) {
                const double z = normal(rng);
                total += 0.5 * (std::max(0.0, diff + sigma * z) +
                                std::max(0.0, diff - sigma * z));
            }
            const double estimate = total / pairs;
            worst = std::max(worst, std::abs(estimate - closed));
        }
    }
    out.require(worst <= 2e-3, "worst grid deviation " + std::to_string(worst));
    return out;
}

Outcome surrogate_lift() {
    Outcome out;
    const auto space = hyperparameter_space("ridge");
    const std::vector<MetaFeatureVector> metas = {
        compute_meta_features(mixed_table(60, 1)),
        compute_meta_features(mixed_table(90, 2)),
        compute_meta_features(mixed_table(120, 3)),
    };
    const std::vector<double> state_effect = {0.0, 2.0, 4.0};
    const auto config_effect = [](const Configuration& config) {
        const double lo = std::log(1e-6);
        const double hi = std::log(1e3);
        double h = 0.5 * (std::log(config_double(config, "reg_strength")) - lo) / (hi - lo);
        h += 0.3 * static_cast<double>(config_long(config, "max_iters") - 50) / 1950.0;
        h += config_string(config, "fit_intercept") == "true" ? 0.2 : 0.0;
        return h;
    };

    const int n_obs = 60;
    const int n_folds = 5;
    double with_meta = 0.0;
    double config_only = 0.0;
    for (unsigned seed = 0; seed < 10; ++seed) {
        std::mt19937_64 rng(1000 + seed);
        std::vector<std::vector<double>> full_x;
        std::vector<std::vector<double>> bare_x;
        std::vector<double> truth;
        for (int i = 0; i < n_obs; ++i) {
            const int state = i % 3;
            const auto config = sample_config(space, rng);
            const auto x = encode_observation(metas[state], config, space);
            full_x.push_back(x);
            bare_x.emplace_back(x.end() - 3, x.end());
            truth.push_back(state_effect[state] + config_effect(config));
        }

        const auto out_of_fold = [&](const std::vector<std::vector<double>>& x) {
            std::vector<double> predictions(n_obs, 0.0);
            for (int fold = 0; fold < n_folds; ++fold) {
                std::vector<std::vector<double>> train_x;
                std::vector<double> train_y;
                for (int i = 0; i < n_obs; ++i) {
                    if (i % n_folds != fold) {
                        train_x.push_back(x[i]);
                        train_y.push_back(truth[i]);
                    }
                }
                const auto forest =
                    RandomForest::fit(train_x, train_y, kSurrogateTrees, seed * 31 + fold);
                for (int i = 0; i < n_obs; ++i) {
                    if (i % n_folds == fold) {
                        predictions[i] = forest.predict(x[i]).first;
                    }
                }
            }
            return spearman(predictions, truth);
        };

        with_meta += out_of_fold(full_x);
        config_only += out_of_fold(bare_x);
    }
    with_meta /= 10.0;
    config_only /= 10.0;
    out.require(with_meta >= 0.6, "conditioned spearman " + std::to_string(with_meta));
    out.require(with_meta >= config_only + 0.1,
                "lift " + std::to_string(with_meta - config_only));
    return out;
}

Outcome tree_invariants() {
    Outcome out;
    const DataTable table = mixed_table(60, 5);
    const Split split = split_table(table, SplitSpec{});
    const Configuration cfg = default_config("ridge");
    SearchTree shifted(split.train, split.val, kSqrt2, 128, cfg);
    SearchTree base(split.train, split.val, kSqrt2, 128, cfg);

    double playout_score = 0.0;
    const Evaluator eval_base = [&](const DataTable&, const DataTable&, const Configuration&) {
        return playout_score;
    };
    const Evaluator eval_shifted = [&](const DataTable&, const DataTable&,
                                       const Configuration&) { return playout_score + 2.0; };

    base.record_evaluation(0, cfg, 0.4);
    base.localized_vmax_update(0, 0.4);
    shifted.record_evaluation(0, cfg, 2.4);
    shifted.localized_vmax_update(0, 2.4);

    std::mt19937_64 rng(77);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    long playouts = 0;
    long expansions = 0;
    int fresh = 0;

    const auto palette = [&]() -> Proposal {
        const int k = fresh++;
        const std::string name = "f" + std::to_string(k);
        switch (k % 4) {
            case 0:
                return make_proposal("interact", {"plain", "skewed"},
                                     {make_spec(OpKind::Arithmetic, {{"op", "*"}},
                                                {"plain", "skewed"}, {name})});
            case 1:
                return make_proposal("wave", {"plain"},
                                     {make_spec(OpKind::Unary, {{"fn", "sin"}}, {"plain"},
                                                {name})});
            case 2:
                return make_proposal("rescale", {"plain"},
                                     {make_spec(OpKind::StandardScale, {}, {"plain"})});
            default:
                return make_proposal("squash", {"skewed"},
                                     {make_spec(OpKind::MinMaxScale, {}, {"skewed"})});
        }
    };

    const auto check_structure = [&] {
        out.require(base.size() == shifted.size(), "tree sizes diverged");
        for (std::size_t i = 1; i < base.size(); ++i) {
            const TreeNode& node = base.node(static_cast<int>(i));
            out.require(base.node(*node.parent).v_max >= node.v_max,
                        "v_max heap violated at node " + std::to_string(i));
            const TreeNode& twin = shifted.node(static_cast<int>(i));
            out.require(shifted.node(*twin.parent).v_max >= twin.v_max,
                        "v_max heap violated in the shifted twin at node " + std::to_string(i));
        }
        out.require(base.node(0).n == playouts,
                    "root visits " + std::to_string(base.node(0).n) + " != playouts " +
                        std::to_string(playouts));
        out.require(base.uct_select() == shifted.uct_select(),
                    "uct path changed under a +2 score shift");
    };

    for (int step = 0; step < 10000 && out.pass; ++step) {
        const double u = unif(rng);
        if (u < 0.45) {
            const auto path_base = base.uct_select();
            const auto path_shifted = shifted.uct_select();
            out.require(path_base == path_shifted, "uct paths diverged before expansion");
            if (!out.pass) {
                break;
            }
            const int node = path_base.back();
            bool base_ok = true;
            bool shifted_ok = true;
            try {
                base.consume_directive(node);
            } catch (const StateError&) {
                base_ok = false;
            }
            try {
                shifted.consume_directive(node);
            } catch (const StateError&) {
                shifted_ok = false;
            }
            out.require(base_ok == shifted_ok, "directive quotas diverged");
            if (!base_ok || !out.pass) {
                continue;
            }
            const Proposal proposal = palette();
            playout_score = unif(rng);
            const double best_before = base.range().hi;
            const double shifted_before = shifted.range().hi;
            const ExpandResult r_base = base.expand_and_playout(node, proposal, eval_base);
            const ExpandResult r_shifted =
                shifted.expand_and_playout(node, proposal, eval_shifted);
            out.require(r_base.ok && r_shifted.ok, "expansion failed: " + r_base.error);
            if (!out.pass) {
                break;
            }
            const long reward_base =
                base.backpropagate(r_base.node_id, r_base.score, best_before);
            const long reward_shifted =
                shifted.backpropagate(r_shifted.node_id, r_shifted.score, shifted_before);
            out.require(reward_base == reward_shifted, "rewards diverged under the shift");
            ++playouts;
            ++expansions;
        } else if (u < 0.80) {
            const int node = static_cast<int>(rng() % base.size());
            const double v = unif(rng);
            const long reward_base = base.backpropagate(node, v, base.range().hi);
            const long reward_shifted =
                shifted.backpropagate(node, v + 2.0, shifted.range().hi);
            out.require(reward_base == reward_shifted, "rewards diverged under the shift");
            ++playouts;
        } else {
            const int node = static_cast<int>(rng() % base.size());
            const double v = unif(rng);
            base.record_evaluation(node, cfg, v);
            base.localized_vmax_update(node, v);
            shifted.record_evaluation(node, cfg, v + 2.0);
            shifted.localized_vmax_update(node, v + 2.0);
        }
        if (step % 1000 == 999) {
            check_structure();
        }
    }
    check_structure();
    out.require(expansions > 1000, "too few expansions: " + std::to_string(expansions));
    return out;
}

Outcome no_leakage() {
    Outcome out;
    const std::vector<OperationSpec> specs = one_spec_per_kind();
    out.require(specs.size() == all_op_kinds().size(), "operation kind left uncovered");
    const DataTable train = mixed_table(80, 11);
    const DataTable val = mixed_table(40, 12);
    for (const OperationSpec& spec : specs) {
        try {
            const FittedOperation fitted = fit_operation(spec, train);
            const DataTable train_before = apply_operation(fitted, train);
            const DataTable val_before = apply_operation(fitted, val);

            const DataTable hostile = scramble_rows(val, 13);
            const DataTable ignored = apply_operation(fitted, hostile);
            (void)ignored;

            const DataTable train_after = apply_operation(fitted, train);
            const DataTable val_after = apply_operation(fitted, val);
            out.require(tables_equal(train_before, train_after),
                        "transformed training cells changed for " + to_string(spec.kind));
            out.require(tables_equal(val_before, val_after),
                        "fitted state drifted for " + to_string(spec.kind));
        } catch (const Error& e) {
            out.fail(to_string(spec.kind) + " threw: " + e.what());
        }
    }
    return out;
}

Outcome deterministic_artifacts() {
    Outcome out;
    const auto root = std::filesystem::temp_directory_path() / "tandem_acceptance";
    std::filesystem::remove_all(root);

    RunConfig config;
    config.budget = 20;
    config.seed = 33;

    const std::vector<std::string> artifacts = {"report.json", "curve.csv", "events.jsonl"};
    for (const std::string name : {"one", "two"}) {
        config.output_dir = (root / name).string();
        ScriptedBackend backend(wave_script());
        const RunReport report = run_with(config, wave_table(120, 3), backend);
        (void)report;
    }
    for (const std::string& artifact : artifacts) {
        const std::string a = read_file(root / "one" / artifact);
        const std::string b = read_file(root / "two" / artifact);
        out.require(!a.empty(), artifact + " is empty");
        out.require(a == b, artifact + " differs between identical runs");
    }
    return out;
}

Outcome cyclic_smoke() {
    Outcome out;
    int recovered = 0;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        RunConfig config;
        config.budget = 50;
        config.seed = seed;
        ScriptedBackend backend(wave_script());
        const RunReport report = run_with(config, wave_table(168, 9), backend);
        out.require(report.best_validation > report.root_score,
                    "no improvement at seed " + std::to_string(seed));
        const bool has_cycle =
            std::any_of(report.best_pipeline.begin(), report.best_pipeline.end(),
                        [](const OperationSpec& spec) {
                            return spec.kind == OpKind::CyclicEncode;
                        });
        recovered += has_cycle ? 1 : 0;
    }
    out.require(recovered >= 4,
                "cyclic encoding recovered in only " + std::to_string(recovered) + "/5 seeds");
    return out;
}

Outcome skewed_allocation() {
    Outcome out;
    auto state = make_scheduler(100, 0.9, kSqrt2);
    for (int m = 0; m < 100; ++m) {
        const SchedulerAction action = pucb_select(state);
        record_outcome(state, action, action == SchedulerAction::FE);
    }
    out.require(state.n_fe + state.n_hpo == 100, "budget not conserved");
    out.require(state.n_fe >= 60,
                "fe share " + std::to_string(state.n_fe) + "/100 under persistent success");
    return out;
}

struct Criterion {
    std::string name;
    std::function<Outcome()> run;
    double budget_seconds;
};

}  // namespace

int main() {
    const std::vector<Criterion> criteria = {
        {"budget equilibrium sweep", equilibrium_sweep, 30.0},
        {"reference scheduler instance", reference_instance, 30.0},
        {"pareto oracle equivalence", pareto_oracle, 10.0},
        {"expected improvement versus monte carlo", ei_monte_carlo, 60.0},
        {"surrogate meta-feature lift", surrogate_lift, 60.0},
        {"search tree invariants", tree_invariants, 120.0},
        {"operation no-leakage", no_leakage, 60.0},
        {"deterministic artifacts", deterministic_artifacts, 60.0},
        {"cyclic improvement smoke", cyclic_smoke, 120.0},
        {"skewed reward allocation", skewed_allocation, 30.0},
    };

    int failures = 0;
    for (const Criterion& criterion : criteria) {
        const auto start = std::chrono::steady_clock::now();
        Outcome outcome;
        try {
            outcome = criterion.run();
        } catch (const std::exception& e) {
            outcome.fail(std::string("exception: ") + e.what());
        }
        const double seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        outcome.require(seconds < criterion.budget_seconds,
                        "took " + std::to_string(seconds) + "s, budget " +
                            std::to_string(criterion.budget_seconds) + "s");
        if (outcome.pass) {
            std::printf("[PASS] %s (%.2fs)\n", criterion.name.c_str(), seconds);
        } else {
            ++failures;
            std::printf("[FAIL] %s (%.2fs): %s\n", criterion.name.c_str(), seconds,
                        outcome.detail.c_str());
        }
    }
    if (failures > 0) {
        std::printf("%d of %zu criteria failed\n", failures, criteria.size());
        return 1;
    }
    std::printf("all %zu criteria passed\n", criteria.size());
    return 0;
}
