#include "tandem/condbo.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>
#include <string>

namespace tandem {

namespace {

double encoded_value(const Dimension& dim, const ConfigValue& value) {
    switch (dim.kind) {
        case DomainKind::Continuous: {
            const double v = std::get<double>(value);
            return dim.scale == DomainScale::Log ? std::log(v) : v;
        }
        case DomainKind::Integer:
            return static_cast<double>(std::get<long>(value));
        case DomainKind::Categorical: {
            const std::string& choice = std::get<std::string>(value);
            const auto it = std::find(dim.choices.begin(), dim.choices.end(), choice);
            return static_cast<double>(it - dim.choices.begin());
        }
    }
    throw SpecError("unknown dimension kind");
}

// Resamples exactly one eligible dimension of `config`. Dimensions that
// cannot change (single-choice categoricals, collapsed ranges) are never
// picked; with nothing eligible the configuration comes back unchanged.
Configuration perturb(const Configuration& config, const HyperparameterSpace& space,
                      std::mt19937_64& rng) {
    std::vector<const Dimension*> eligible;
    for (const Dimension& dim : space.dims) {
        const bool frozen =
            (dim.kind == DomainKind::Categorical && dim.choices.size() < 2) ||
            (dim.kind != DomainKind::Categorical && dim.hi <= dim.lo);
        if (!frozen) {
            eligible.push_back(&dim);
        }
    }
    Configuration neighbor = config;
    if (eligible.empty()) {
        return neighbor;
    }
    std::uniform_int_distribution<std::size_t> pick_dim(0, eligible.size() - 1);
    const Dimension& dim = *eligible[pick_dim(rng)];

    switch (dim.kind) {
        case DomainKind::Continuous: {
            const double lo = dim.scale == DomainScale::Log ? std::log(dim.lo) : dim.lo;
            const double hi = dim.scale == DomainScale::Log ? std::log(dim.hi) : dim.hi;
            const double current = encoded_value(dim, config.at(dim.name));
            std::normal_distribution<double> step(0.0, kPerturbationWidth * (hi - lo));
            const double moved = std::clamp(current + step(rng), lo, hi);
            const double raw = dim.scale == DomainScale::Log ? std::exp(moved) : moved;
            neighbor[dim.name] = std::clamp(raw, dim.lo, dim.hi);
            break;
        }
        case DomainKind::Integer: {
            static constexpr long kDeltas[] = {-2, -1, 1, 2};
            std::uniform_int_distribution<int> pick_delta(0, 3);
            const long current = std::get<long>(config.at(dim.name));
            const long moved = current + kDeltas[pick_delta(rng)];
            neighbor[dim.name] = std::clamp(moved, static_cast<long>(dim.lo),
                                            static_cast<long>(dim.hi));
            break;
        }
        case DomainKind::Categorical: {
            const std::string& current = std::get<std::string>(config.at(dim.name));
            std::vector<std::string> others;
            for (const std::string& choice : dim.choices) {
                if (choice != current) {
                    others.push_back(choice);
                }
            }
            std::uniform_int_distribution<std::size_t> pick_choice(0, others.size() - 1);
            neighbor[dim.name] = others[pick_choice(rng)];
            break;
        }
    }
    return neighbor;
}

}  // namespace

std::vector<double> encode_observation(const MetaFeatureVector& meta,
                                       const Configuration& config,
                                       const HyperparameterSpace& space) {
    const auto violations = validate_config(space, config);
    if (!violations.empty()) {
        throw SpecError("cannot encode configuration: " + violations.front());
    }
    std::vector<double> x;
    x.reserve(kMetaFeatureCount + space.dims.size());
    x.insert(x.end(), meta.values.begin(), meta.values.end());
    for (const Dimension& dim : space.dims) {
        x.push_back(encoded_value(dim, config.at(dim.name)));
    }
    return x;
}

RandomForest RandomForest::fit(const std::vector<std::vector<double>>& x,
                               const std::vector<double>& y, int n_trees,
                               std::uint64_t seed, bool bootstrap) {
    if (x.size() != y.size()) {
        throw SpecError("feature and target row counts differ");
    }
    if (x.size() < 2) {
        throw StateError("forest fitting needs at least two rows");
    }
    if (n_trees < 1) {
        throw SpecError("forest needs at least one tree");
    }
    const std::size_t n = x.size();
    const std::size_t d = x.front().size();
    for (const auto& row : x) {
        if (row.size() != d) {
            throw SpecError("feature rows have inconsistent dimensions");
        }
    }
    const std::size_t mtry =
        std::max<std::size_t>(1, static_cast<std::size_t>(std::sqrt(static_cast<double>(d))));

    RandomForest forest;
    forest.dim_ = d;
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<std::size_t> pick_row(0, n - 1);

    struct Grower {
        const std::vector<std::vector<double>>& x;
        const std::vector<double>& y;
        std::size_t d;
        std::size_t mtry;
        std::mt19937_64& rng;
        Tree& tree;

        int grow(std::vector<std::size_t>& rows) {
            double sum = 0.0;
            double sq = 0.0;
            for (std::size_t row : rows) {
                sum += y[row];
                sq += y[row] * y[row];
            }
            const double count = static_cast<double>(rows.size());
            const double mean = sum / count;
            const double sse = sq - sum * sum / count;

            Node node;
            node.value = mean;
            const int index = static_cast<int>(tree.nodes.size());
            tree.nodes.push_back(node);
            if (rows.size() < 2 || sse <= 1e-12) {
                return index;
            }

            // Random subset of features considered at this split.
            std::vector<std::size_t> features(d);
            std::iota(features.begin(), features.end(), std::size_t{0});
            for (std::size_t i = 0; i < mtry; ++i) {
                std::uniform_int_distribution<std::size_t> pick(i, d - 1);
                std::swap(features[i], features[pick(rng)]);
            }

            double best_sse = sse - 1e-12;
            int best_feature = -1;
            double best_threshold = 0.0;
            std::vector<std::size_t> sorted = rows;
            for (std::size_t f = 0; f < mtry; ++f) {
                const std::size_t feature = features[f];
                std::sort(sorted.begin(), sorted.end(),
                          [&](std::size_t a, std::size_t b) {
                              return x[a][feature] < x[b][feature];
                          });
                double left_sum = 0.0;
                double left_sq = 0.0;
                for (std::size_t i = 0; i + 1 < sorted.size(); ++i) {
                    const double value = y[sorted[i]];
                    left_sum += value;
                    left_sq += value * value;
                    const double here = x[sorted[i]][feature];
                    const double next = x[sorted[i + 1]][feature];
                    if (here == next) {
                        continue;
                    }
                    const double n_left = static_cast<double>(i + 1);
                    const double n_right = count - n_left;
                    const double right_sum = sum - left_sum;
                    const double right_sq = sq - left_sq;
                    const double split_sse =
                        (left_sq - left_sum * left_sum / n_left) +
                        (right_sq - right_sum * right_sum / n_right);
                    if (split_sse < best_sse) {
                        best_sse = split_sse;
                        best_feature = static_cast<int>(feature);
                        best_threshold = 0.5 * (here + next);
                    }
                }
            }
            if (best_feature < 0) {
                return index;
            }

            std::vector<std::size_t> left_rows;
            std::vector<std::size_t> right_rows;
            for (std::size_t row : rows) {
                (x[row][best_feature] <= best_threshold ? left_rows : right_rows)
                    .push_back(row);
            }
            const int left = grow(left_rows);
            const int right = grow(right_rows);
            tree.nodes[index].feature = best_feature;
            tree.nodes[index].threshold = best_threshold;
            tree.nodes[index].left = left;
            tree.nodes[index].right = right;
            return index;
        }
    };

    forest.trees_.resize(static_cast<std::size_t>(n_trees));
    for (Tree& tree : forest.trees_) {
        std::vector<std::size_t> rows(n);
        if (bootstrap) {
            for (std::size_t& row : rows) {
                row = pick_row(rng);
            }
        } else {
            std::iota(rows.begin(), rows.end(), std::size_t{0});
        }
        Grower grower{x, y, d, mtry, rng, tree};
        grower.grow(rows);
    }
    return forest;
}

double RandomForest::predict_tree(const Tree& tree, const std::vector<double>& x) const {
    int index = 0;
    while (tree.nodes[index].feature >= 0) {
        const Node& node = tree.nodes[index];
        index = x[node.feature] <= node.threshold ? node.left : node.right;
    }
    return tree.nodes[index].value;
}

std::pair<double, double> RandomForest::predict(const std::vector<double>& x) const {
    if (x.size() != dim_) {
        throw SpecError("prediction input has dimension " + std::to_string(x.size()) +
                        ", forest expects " + std::to_string(dim_));
    }
    double sum = 0.0;
    double sq = 0.0;
    for (const Tree& tree : trees_) {
        const double value = predict_tree(tree, x);
        sum += value;
        sq += value * value;
    }
    const double count = static_cast<double>(trees_.size());
    const double mean = sum / count;
    const double variance = std::max(sq / count - mean * mean, kVarianceFloor);
    return {mean, variance};
}

std::size_t RandomForest::dimension() const {
    return dim_;
}

Surrogate fit_surrogate(const std::vector<Observation>& observations, std::uint64_t seed) {
    if (observations.size() < 2) {
        throw StateError("surrogate fitting needs at least two observations");
    }
    std::vector<std::vector<double>> x;
    std::vector<double> y;
    x.reserve(observations.size());
    y.reserve(observations.size());
    for (const Observation& obs : observations) {
        x.push_back(obs.x);
        y.push_back(obs.v);
    }
    Surrogate surrogate;
    surrogate.forest = RandomForest::fit(x, y, kSurrogateTrees, seed);
    surrogate.dim = surrogate.forest.dimension();
    return surrogate;
}

std::pair<double, double> predict(const Surrogate& surrogate, const std::vector<double>& x) {
    return surrogate.forest.predict(x);
}

double expected_improvement(double mean, double variance, double incumbent) {
    const double sigma = std::sqrt(std::max(variance, 0.0));
    if (sigma < 1e-9) {
        return std::max(0.0, mean - incumbent);
    }
    const double z = (mean - incumbent) / sigma;
    const double pdf = std::exp(-0.5 * z * z) / std::sqrt(2.0 * M_PI);
    const double cdf = 0.5 * std::erfc(-z / std::sqrt(2.0));
    return std::max(0.0, sigma * (z * cdf + pdf));
}

std::vector<Candidate> build_pool(const SearchTree& tree, const HyperparameterSpace& space,
                                  std::mt19937_64& rng) {
    std::vector<Candidate> pool;
    std::set<std::pair<int, std::vector<double>>> seen;
    const auto add = [&](int node, Configuration config, std::vector<double> x) {
        if (seen.emplace(node, x).second) {
            pool.push_back(Candidate{node, std::move(config), std::move(x)});
        }
    };

    // Local refinements around everything each node has already tried.
    for (std::size_t id = 0; id < tree.size(); ++id) {
        const TreeNode& node = tree.node(static_cast<int>(id));
        for (const auto& evaluation : node.evaluations) {
            for (std::size_t k = 0; k < kNeighborsPerConfig; ++k) {
                Configuration neighbor = perturb(evaluation.first, space, rng);
                auto x = encode_observation(node.meta, neighbor, space);
                add(static_cast<int>(id), std::move(neighbor), std::move(x));
            }
        }
    }

    // Global draws, each offered to every dataset state.
    for (std::size_t draw = 0; draw < kRandomDraws; ++draw) {
        const Configuration config = sample_config(space, rng);
        for (std::size_t id = 0; id < tree.size(); ++id) {
            auto x = encode_observation(tree.node(static_cast<int>(id)).meta, config, space);
            add(static_cast<int>(id), config, std::move(x));
        }
    }

    if (pool.size() > kPoolCap) {
        std::vector<Candidate> capped;
        capped.reserve(kPoolCap);
        std::sample(pool.begin(), pool.end(), std::back_inserter(capped), kPoolCap, rng);
        pool = std::move(capped);
    }
    return pool;
}

HpoChoice hpo_step(const SearchTree& tree, const std::vector<Observation>& observations,
                   const HyperparameterSpace& space, std::mt19937_64& rng) {
    HpoChoice choice;
    if (observations.size() < kColdStartObservations) {
        choice.cold_start = true;
        std::uniform_int_distribution<std::size_t> pick_node(0, tree.size() - 1);
        choice.node = static_cast<int>(pick_node(rng));
        choice.config = sample_config(space, rng);
        return choice;
    }

    const Surrogate surrogate = fit_surrogate(observations, rng());
    double incumbent = observations.front().v;
    for (const Observation& obs : observations) {
        incumbent = std::max(incumbent, obs.v);
    }

    std::vector<Candidate> pool = build_pool(tree, space, rng);
    choice.pool_size = pool.size();
    double best_ei = -1.0;
    std::size_t best_index = 0;
    for (std::size_t i = 0; i < pool.size(); ++i) {
        const auto [mean, variance] = predict(surrogate, pool[i].x);
        const double ei = expected_improvement(mean, variance, incumbent);
        if (ei > best_ei) {
            best_ei = ei;
            best_index = i;
        }
    }
    choice.node = pool[best_index].node;
    choice.config = std::move(pool[best_index].config);
    choice.ei = best_ei;
    return choice;
}

}  // namespace tandem
