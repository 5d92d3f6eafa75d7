#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "tandem/common.hpp"
#include "tandem/condbo.hpp"
#include "tandem/fetree.hpp"
#include "tandem/learners.hpp"
#include "tandem/metafeat.hpp"

#include "helpers.hpp"

using namespace tandem;
using tandem::testing::make_spec;

namespace {

SearchTree make_tree(unsigned seed = 1) {
    return SearchTree(tandem::testing::mixed_table(60, seed),
                      tandem::testing::mixed_table(25, seed + 100), 1.4142135623730951, 64,
                      default_config("ridge"));
}

Proposal step_proposal(OpKind kind, const std::string& column) {
    Proposal p;
    p.reason = "transform " + column;
    p.way = "apply one operation to '" + column + "'";
    p.required_features = {column};
    p.ops = {make_spec(kind, {}, {column})};
    return p;
}

Evaluator constant_evaluator(double score) {
    return [score](const DataTable&, const DataTable&, const Configuration&) { return score; };
}

MetaFeatureVector flat_meta(double fill) {
    MetaFeatureVector meta;
    meta.values.fill(fill);
    return meta;
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

}  // namespace

TEST_CASE("observation encoding is meta first then dimensions in declaration order") {
    const auto space = hyperparameter_space("ridge");
    MetaFeatureVector meta;
    for (std::size_t i = 0; i < meta.values.size(); ++i) {
        meta.values[i] = 0.25 * static_cast<double>(i);
    }
    Configuration config{{"reg_strength", 100.0},
                         {"max_iters", 250L},
                         {"fit_intercept", std::string("false")}};

    const auto x = encode_observation(meta, config, space);
    REQUIRE(x.size() == kMetaFeatureCount + space.dims.size());
    for (std::size_t i = 0; i < kMetaFeatureCount; ++i) {
        CHECK(x[i] == meta.values[i]);
    }
    CHECK(x[18] == std::log(100.0));
    CHECK(x[19] == 250.0);
    CHECK(x[20] == 1.0);

    const auto again = encode_observation(meta, config, space);
    CHECK(x == again);
}

TEST_CASE("observation encoding rejects configurations outside the space") {
    const auto space = hyperparameter_space("ridge");
    const auto meta = flat_meta(0.0);

    CHECK_THROWS_AS(encode_observation(meta, Configuration{}, space), SpecError);

    Configuration wrong_choice = default_config("ridge");
    wrong_choice["fit_intercept"] = std::string("maybe");
    CHECK_THROWS_AS(encode_observation(meta, wrong_choice, space), SpecError);
}

TEST_CASE("forest recovers a step function") {
    std::vector<std::vector<double>> x;
    std::vector<double> y;
    for (int i = 0; i < 200; ++i) {
        const double v = (static_cast<double>(i) + 0.5) / 200.0;
        x.push_back({v});
        y.push_back(v < 0.5 ? 0.0 : 1.0);
    }
    const auto forest = RandomForest::fit(x, y, 25, 7);

    for (double probe : {0.1, 0.2, 0.3, 0.4}) {
        CHECK(std::abs(forest.predict({probe}).first) <= 0.1);
    }
    for (double probe : {0.6, 0.7, 0.8, 0.9}) {
        CHECK(std::abs(forest.predict({probe}).first - 1.0) <= 0.1);
    }
    CHECK(forest.predict({0.25}).second >= 1e-8);
}

TEST_CASE("a single tree without bootstrap memorizes distinct training points") {
    const std::vector<std::vector<double>> x = {{0.0}, {0.3}, {0.9}, {1.7}, {2.4}};
    const std::vector<double> y = {1.0, -2.0, 0.5, 3.0, 7.0};
    const auto forest = RandomForest::fit(x, y, 1, 3, false);

    for (std::size_t i = 0; i < x.size(); ++i) {
        const auto [mean, variance] = forest.predict(x[i]);
        CHECK(mean == y[i]);
        CHECK(variance == 1e-8);
    }
}

TEST_CASE("forest fitting and prediction guard their inputs") {
    CHECK_THROWS_AS(RandomForest::fit({{0.0}}, {1.0}, 25, 1), StateError);
    CHECK_THROWS_AS(RandomForest::fit({{0.0}, {1.0, 2.0}}, {1.0, 2.0}, 25, 1), SpecError);
    CHECK_THROWS_AS(RandomForest::fit({{0.0}, {1.0}}, {1.0}, 25, 1), SpecError);
    CHECK_THROWS_AS(RandomForest::fit({{0.0}, {1.0}}, {1.0, 2.0}, 0, 1), SpecError);

    const auto forest = RandomForest::fit({{0.0}, {1.0}}, {1.0, 2.0}, 5, 1);
    CHECK(forest.dimension() == 1);
    CHECK_THROWS_AS(forest.predict({0.0, 1.0}), SpecError);
}

TEST_CASE("surrogate needs two observations and floors a unanimous variance") {
    CHECK_THROWS_AS(fit_surrogate({}, 1), StateError);
    CHECK_THROWS_AS(fit_surrogate({Observation{0, {0.0, 1.0}, 0.5}}, 1), StateError);

    std::vector<Observation> observations;
    for (int i = 0; i < 5; ++i) {
        observations.push_back(
            Observation{0, {static_cast<double>(i), static_cast<double>(i % 2)}, 3.25});
    }
    const auto surrogate = fit_surrogate(observations, 11);
    CHECK(surrogate.dim == 2);

    for (const auto& probe : {std::vector<double>{0.0, 0.0}, std::vector<double>{9.0, 1.0}}) {
        const auto [mean, variance] = predict(surrogate, probe);
        CHECK(mean == 3.25);
        CHECK(variance == 1e-8);
    }
    CHECK_THROWS_AS(predict(surrogate, {1.0}), SpecError);
}

TEST_CASE("expected improvement matches its closed forms") {
    CHECK(expected_improvement(1.0, 0.0, 2.0) == 0.0);
    CHECK(expected_improvement(2.0, 0.0, 2.0) == 0.0);
    CHECK(expected_improvement(2.5, 0.0, 2.0) == 0.5);

    // mean equal to the incumbent at unit variance leaves exactly the
    // standard normal density at zero.
    const double at_zero = expected_improvement(4.0, 1.0, 4.0);
    CHECK(at_zero == doctest::Approx(0.3989422804014327).epsilon(1e-12));

    // Far above the incumbent the improvement is essentially certain.
    const double far = expected_improvement(10.0, 1.0, 0.0);
    CHECK(std::abs(far - 10.0) / 10.0 < 1e-6);

    // Monte Carlo cross-check of the z = 0 value via antithetic pairs.
    std::mt19937_64 rng(2024);
    std::normal_distribution<double> normal(0.0, 1.0);
    double total = 0.0;
    const int pairs = 1000000;
    for (int i = 0; i < pairs; ++i) {
        const double u = normal(rng);
        total += 0.5 * (std::max(0.0, u) + std::max(0.0, -u));
    }
    CHECK(std::abs(total / pairs - at_zero) < 1e-3);
}

TEST_CASE("expected improvement is monotone on grids") {
    const double incumbent = 1.0;
    for (double sigma : {0.1, 0.5, 1.0, 3.0}) {
        double previous = -1.0;
        for (double z = -6.0; z <= 6.0; z += 0.5) {
            const double ei = expected_improvement(incumbent + z * sigma, sigma * sigma,
                                                   incumbent);
            CHECK(ei >= 0.0);
            CHECK(ei > previous);
            previous = ei;
        }
    }
    for (double mean : {-1.0, 0.0, 0.5}) {
        double previous = 0.0;
        for (double sigma = 0.25; sigma <= 3.0; sigma += 0.25) {
            const double ei = expected_improvement(mean, sigma * sigma, incumbent);
            CHECK(ei > previous);
            previous = ei;
        }
    }
}

TEST_CASE("candidate pool counts locals and randoms per node") {
    const auto space = hyperparameter_space("ridge");

    SUBCASE("one node with one evaluated configuration") {
        auto tree = make_tree();
        tree.record_evaluation(0, default_config("ridge"), 0.1);
        std::mt19937_64 rng(5);
        const auto pool = build_pool(tree, space, rng);
        CHECK(pool.size() >= 501);
        CHECK(pool.size() <= 504);
        for (const auto& candidate : pool) {
            CHECK(candidate.node == 0);
            CHECK(validate_config(space, candidate.config).empty());
            CHECK(candidate.x.size() == kMetaFeatureCount + space.dims.size());
        }
    }

    SUBCASE("three nodes each pair with every random draw") {
        auto tree = make_tree();
        tree.record_evaluation(0, default_config("ridge"), 0.1);
        REQUIRE(tree.expand_and_playout(0, step_proposal(OpKind::StandardScale, "plain"),
                                        constant_evaluator(0.3))
                    .ok);
        REQUIRE(tree.expand_and_playout(0, step_proposal(OpKind::Log1p, "skewed"),
                                        constant_evaluator(0.4))
                    .ok);
        REQUIRE(tree.size() == 3);

        std::mt19937_64 rng(6);
        const auto pool = build_pool(tree, space, rng);
        std::array<std::size_t, 3> per_node{};
        for (const auto& candidate : pool) {
            REQUIRE(candidate.node >= 0);
            REQUIRE(candidate.node < 3);
            ++per_node[static_cast<std::size_t>(candidate.node)];
        }
        for (std::size_t count : per_node) {
            CHECK(count >= 501);
            CHECK(count <= 504);
        }
    }
}

TEST_CASE("degenerate dimensions are never perturbed") {
    SUBCASE("a space with one single-choice dimension collapses the pool") {
        HyperparameterSpace space;
        space.learner = "toy";
        Dimension frozen;
        frozen.name = "frozen";
        frozen.kind = DomainKind::Categorical;
        frozen.choices = {"only"};
        space.dims.push_back(frozen);

        auto tree = make_tree();
        tree.record_evaluation(0, Configuration{{"frozen", std::string("only")}}, 0.2);
        std::mt19937_64 rng(7);
        const auto pool = build_pool(tree, space, rng);
        REQUIRE(pool.size() == 1);
        CHECK(pool.front().node == 0);
        CHECK(config_string(pool.front().config, "frozen") == "only");
    }

    SUBCASE("an eligible dimension absorbs all the perturbation") {
        HyperparameterSpace space;
        space.learner = "toy";
        Dimension frozen;
        frozen.name = "frozen";
        frozen.kind = DomainKind::Categorical;
        frozen.choices = {"only"};
        Dimension knob;
        knob.name = "knob";
        knob.kind = DomainKind::Continuous;
        knob.scale = DomainScale::Linear;
        knob.lo = 0.0;
        knob.hi = 10.0;
        space.dims.push_back(frozen);
        space.dims.push_back(knob);

        auto tree = make_tree();
        tree.record_evaluation(
            0, Configuration{{"frozen", std::string("only")}, {"knob", 5.0}}, 0.2);
        std::mt19937_64 rng(8);
        const auto pool = build_pool(tree, space, rng);
        CHECK(pool.size() >= 501);
        CHECK(pool.size() <= 504);
        for (const auto& candidate : pool) {
            CHECK(config_string(candidate.config, "frozen") == "only");
            const double knob_value = config_double(candidate.config, "knob");
            CHECK(knob_value >= 0.0);
            CHECK(knob_value <= 10.0);
        }
    }
}

TEST_CASE("oversized pools are subsampled to the cap") {
    const auto space = hyperparameter_space("ridge");
    auto tree = make_tree();
    std::mt19937_64 seeder(17);
    for (int i = 0; i < 10000; ++i) {
        tree.record_evaluation(0, sample_config(space, seeder), 0.0);
    }

    std::mt19937_64 rng(18);
    const auto pool = build_pool(tree, space, rng);
    CHECK(pool.size() == 20000);
    CHECK(validate_config(space, pool.front().config).empty());
    CHECK(validate_config(space, pool.back().config).empty());
}

TEST_CASE("hpo step falls back to random below eight observations") {
    const auto space = hyperparameter_space("ridge");
    auto tree = make_tree();
    tree.record_evaluation(0, default_config("ridge"), 0.1);
    REQUIRE(tree.expand_and_playout(0, step_proposal(OpKind::StandardScale, "plain"),
                                    constant_evaluator(0.3))
                .ok);

    std::vector<Observation> observations;
    const auto meta = flat_meta(0.5);
    std::mt19937_64 seeder(31);
    for (int i = 0; i < 7; ++i) {
        const auto config = sample_config(space, seeder);
        observations.push_back(
            Observation{0, encode_observation(meta, config, space), 0.1 * i});
    }

    std::mt19937_64 rng(32);
    const auto choice = hpo_step(tree, observations, space, rng);
    CHECK(choice.cold_start);
    CHECK(choice.node >= 0);
    CHECK(choice.node < static_cast<int>(tree.size()));
    CHECK(validate_config(space, choice.config).empty());
    CHECK(choice.ei == 0.0);
    CHECK(choice.pool_size == 0);
}

TEST_CASE("hpo step is deterministic and scored once warm") {
    const auto space = hyperparameter_space("ridge");
    auto tree = make_tree();
    tree.record_evaluation(0, default_config("ridge"), 0.1);
    REQUIRE(tree.expand_and_playout(0, step_proposal(OpKind::StandardScale, "plain"),
                                    constant_evaluator(0.3))
                .ok);
    REQUIRE(tree.expand_and_playout(0, step_proposal(OpKind::Log1p, "skewed"),
                                    constant_evaluator(0.4))
                .ok);

    std::vector<Observation> observations;
    std::mt19937_64 seeder(41);
    for (int i = 0; i < 12; ++i) {
        const int node = i % static_cast<int>(tree.size());
        const auto config = sample_config(space, seeder);
        const auto x = encode_observation(tree.node(node).meta, config, space);
        observations.push_back(Observation{node, x, 0.05 * i + (node == 2 ? 0.4 : 0.0)});
    }

    std::mt19937_64 first_rng(99);
    std::mt19937_64 second_rng(99);
    const auto first = hpo_step(tree, observations, space, first_rng);
    const auto second = hpo_step(tree, observations, space, second_rng);

    CHECK_FALSE(first.cold_start);
    CHECK(first.ei >= 0.0);
    CHECK(first.pool_size >= 501);
    CHECK(first.node >= 0);
    CHECK(first.node < static_cast<int>(tree.size()));
    CHECK(validate_config(space, first.config).empty());

    CHECK(first.node == second.node);
    CHECK(first.ei == second.ei);
    CHECK(first.pool_size == second.pool_size);
    CHECK(config_to_json(first.config) == config_to_json(second.config));
}

TEST_CASE("meta features sharpen the surrogate across states") {
    const auto space = hyperparameter_space("ridge");
    const std::vector<MetaFeatureVector> metas = {
        compute_meta_features(tandem::testing::mixed_table(60, 1)),
        compute_meta_features(tandem::testing::mixed_table(90, 2)),
        compute_meta_features(tandem::testing::mixed_table(120, 3)),
    };
    for (const auto& meta : metas) {
        for (double value : meta.values) {
            REQUIRE(std::isfinite(value));
        }
    }
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

    CHECK(with_meta >= 0.6);
    CHECK(with_meta >= config_only + 0.1);
}
