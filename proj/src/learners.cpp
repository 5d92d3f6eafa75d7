#include "tandem/learners.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <sstream>
#include <unordered_map>

#include "tandem/common.hpp"

namespace tandem {
namespace {

// Training draws (bootstrap, subsampling) use their own fixed seed so that a
// score depends only on the data and the configuration, never on the caller's
// random state.
constexpr std::uint64_t kInternalTrainSeed = 0x7e11ab1eu;

Dimension continuous_dim(std::string name, double lo, double hi, DomainScale scale) {
    Dimension d;
    d.name = std::move(name);
    d.kind = DomainKind::Continuous;
    d.scale = scale;
    d.lo = lo;
    d.hi = hi;
    return d;
}

Dimension integer_dim(std::string name, long lo, long hi) {
    Dimension d;
    d.name = std::move(name);
    d.kind = DomainKind::Integer;
    d.lo = static_cast<double>(lo);
    d.hi = static_cast<double>(hi);
    return d;
}

Dimension categorical_dim(std::string name, std::vector<std::string> choices) {
    Dimension d;
    d.name = std::move(name);
    d.kind = DomainKind::Categorical;
    d.choices = std::move(choices);
    return d;
}

std::string value_type_name(const ConfigValue& v) {
    if (std::holds_alternative<double>(v)) return "real";
    if (std::holds_alternative<long>(v)) return "integer";
    return "string";
}

// check_ranges=false is the structural check train_and_score relies on: every
// dimension present with the right value type and a known choice. Numeric
// range violations are left to validate_config so limiting configurations
// (for example an enormous regularizer) can still be scored.
std::vector<std::string> config_violations(const HyperparameterSpace& space,
                                           const Configuration& config, bool check_ranges) {
    std::vector<std::string> violations;
    for (const auto& entry : config) {
        if (!space.has_dim(entry.first)) {
            violations.push_back("unknown dimension '" + entry.first + "'");
        }
    }
    for (const Dimension& d : space.dims) {
        const auto it = config.find(d.name);
        if (it == config.end()) {
            violations.push_back("missing dimension '" + d.name + "'");
            continue;
        }
        const ConfigValue& v = it->second;
        switch (d.kind) {
            case DomainKind::Continuous: {
                if (!std::holds_alternative<double>(v)) {
                    violations.push_back("dimension '" + d.name + "' expects a real, got " +
                                         value_type_name(v));
                    break;
                }
                const double x = std::get<double>(v);
                if (!std::isfinite(x) || (check_ranges && (x < d.lo || x > d.hi))) {
                    violations.push_back("dimension '" + d.name + "' out of range");
                }
                break;
            }
            case DomainKind::Integer: {
                if (!std::holds_alternative<long>(v)) {
                    violations.push_back("dimension '" + d.name + "' expects an integer, got " +
                                         value_type_name(v));
                    break;
                }
                const long x = std::get<long>(v);
                if (check_ranges && (x < static_cast<long>(d.lo) || x > static_cast<long>(d.hi))) {
                    violations.push_back("dimension '" + d.name + "' out of range");
                }
                break;
            }
            case DomainKind::Categorical: {
                if (!std::holds_alternative<std::string>(v)) {
                    violations.push_back("dimension '" + d.name + "' expects a choice, got " +
                                         value_type_name(v));
                    break;
                }
                const std::string& x = std::get<std::string>(v);
                if (std::find(d.choices.begin(), d.choices.end(), x) == d.choices.end()) {
                    violations.push_back("dimension '" + d.name + "' has no choice '" + x + "'");
                }
                break;
            }
        }
    }
    return violations;
}

struct Design {
    Eigen::MatrixXd x;
    std::vector<std::string> names;
    Eigen::VectorXd train_mean;
};

// Feature matrix with train-mean imputation of missing cells. Columns are the
// table's feature columns in order; all of them must be numeric.
Design build_design(const DataTable& train) {
    Design d;
    d.names = train.feature_names();
    const Eigen::Index n = static_cast<Eigen::Index>(train.n_rows());
    const Eigen::Index p = static_cast<Eigen::Index>(d.names.size());
    d.x.resize(n, p);
    d.train_mean = Eigen::VectorXd::Zero(p);
    for (Eigen::Index j = 0; j < p; ++j) {
        const Column& col = train.column(d.names[static_cast<std::size_t>(j)]);
        if (col.kind != ColumnKind::Numeric) {
            throw TrainError("learner requires numeric features, column '" + col.name +
                             "' is categorical");
        }
        double sum = 0.0;
        std::size_t finite = 0;
        for (double v : col.num) {
            if (std::isfinite(v)) {
                sum += v;
                ++finite;
            }
        }
        const double mean = finite > 0 ? sum / static_cast<double>(finite) : 0.0;
        d.train_mean[j] = mean;
        for (Eigen::Index i = 0; i < n; ++i) {
            const double v = col.num[static_cast<std::size_t>(i)];
            d.x(i, j) = std::isfinite(v) ? v : mean;
        }
    }
    return d;
}

Eigen::MatrixXd apply_design(const Design& d, const DataTable& table) {
    const Eigen::Index n = static_cast<Eigen::Index>(table.n_rows());
    const Eigen::Index p = static_cast<Eigen::Index>(d.names.size());
    Eigen::MatrixXd x(n, p);
    for (Eigen::Index j = 0; j < p; ++j) {
        const std::string& name = d.names[static_cast<std::size_t>(j)];
        if (!table.has_column(name)) {
            throw TrainError("evaluation split lacks feature column '" + name + "'");
        }
        const Column& col = table.column(name);
        if (col.kind != ColumnKind::Numeric) {
            throw TrainError("learner requires numeric features, column '" + col.name +
                             "' is categorical");
        }
        for (Eigen::Index i = 0; i < n; ++i) {
            const double v = col.num[static_cast<std::size_t>(i)];
            x(i, j) = std::isfinite(v) ? v : d.train_mean[j];
        }
    }
    return x;
}

Eigen::VectorXd regression_target(const DataTable& table) {
    const auto coded = numeric_coded_target(table);
    return Eigen::Map<const Eigen::VectorXd>(coded.data(),
                                             static_cast<Eigen::Index>(coded.size()));
}

std::vector<int> coded_labels(const DataTable& table, const std::vector<std::string>& labels) {
    std::unordered_map<std::string, int> index;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        index.emplace(labels[i], static_cast<int>(i));
    }
    const Column& target = table.target_column();
    std::vector<int> coded(table.n_rows());
    for (std::size_t r = 0; r < table.n_rows(); ++r) {
        const auto it = index.find(target_label(target, r));
        coded[r] = it == index.end() ? -1 : it->second;
    }
    return coded;
}

double mse_score(const Eigen::VectorXd& pred, const Eigen::VectorXd& truth) {
    return -(pred - truth).squaredNorm() / static_cast<double>(truth.size());
}

double error_rate_score(const std::vector<int>& pred, const std::vector<int>& truth) {
    std::size_t wrong = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        if (pred[i] != truth[i]) ++wrong;
    }
    return -static_cast<double>(wrong) / static_cast<double>(truth.size());
}

Eigen::MatrixXd softmax_rows(Eigen::MatrixXd logits) {
    for (Eigen::Index i = 0; i < logits.rows(); ++i) {
        const double m = logits.row(i).maxCoeff();
        logits.row(i) = (logits.row(i).array() - m).exp();
        logits.row(i) /= logits.row(i).sum();
    }
    return logits;
}

// Closed-form ridge regression, intercept unregularized via centering.
double ridge_regression_score(const Configuration& config, const Design& design,
                              const Eigen::VectorXd& y_train, const Eigen::MatrixXd& x_eval,
                              const Eigen::VectorXd& y_eval) {
    const double reg = config_double(config, "reg_strength");
    const bool intercept = config_string(config, "fit_intercept") == "true";
    const Eigen::Index p = design.x.cols();

    Eigen::MatrixXd x = design.x;
    Eigen::VectorXd y = y_train;
    Eigen::RowVectorXd x_mean = Eigen::RowVectorXd::Zero(p);
    double y_mean = 0.0;
    if (intercept) {
        x_mean = x.colwise().mean();
        y_mean = y.mean();
        x.rowwise() -= x_mean;
        y.array() -= y_mean;
    }
    Eigen::MatrixXd gram = x.transpose() * x;
    gram.diagonal().array() += reg;
    const Eigen::VectorXd w = gram.ldlt().solve(x.transpose() * y);
    const double b = intercept ? y_mean - x_mean.dot(w) : 0.0;

    const Eigen::VectorXd pred = (x_eval * w).array() + b;
    return mse_score(pred, y_eval);
}

// Multinomial logistic regression with L2 on the weights (intercept free),
// plain gradient descent with a Lipschitz-safe step size.
double ridge_classification_score(const Configuration& config, const Design& design,
                                  const std::vector<int>& y_train, std::size_t n_classes,
                                  const Eigen::MatrixXd& x_eval, const std::vector<int>& y_eval) {
    const double reg = config_double(config, "reg_strength");
    const long max_iters = config_long(config, "max_iters");
    const bool intercept = config_string(config, "fit_intercept") == "true";

    const Eigen::Index n = design.x.rows();
    const Eigen::Index p = design.x.cols();
    const Eigen::Index k = static_cast<Eigen::Index>(n_classes);

    Eigen::MatrixXd x = design.x;
    Eigen::RowVectorXd x_mean = Eigen::RowVectorXd::Zero(p);
    if (intercept) {
        x_mean = x.colwise().mean();
        x.rowwise() -= x_mean;
    }
    Eigen::MatrixXd onehot = Eigen::MatrixXd::Zero(n, k);
    for (Eigen::Index i = 0; i < n; ++i) {
        onehot(i, y_train[static_cast<std::size_t>(i)]) = 1.0;
    }

    Eigen::MatrixXd w = Eigen::MatrixXd::Zero(p, k);
    Eigen::RowVectorXd b = Eigen::RowVectorXd::Zero(k);
    const double lipschitz =
        0.5 * x.squaredNorm() / static_cast<double>(n) + reg + 1e-12;
    const double step = 1.0 / lipschitz;
    for (long it = 0; it < max_iters; ++it) {
        Eigen::MatrixXd logits = x * w;
        logits.rowwise() += b;
        const Eigen::MatrixXd residual = softmax_rows(std::move(logits)) - onehot;
        const Eigen::MatrixXd grad_w =
            x.transpose() * residual / static_cast<double>(n) + reg * w;
        w -= step * grad_w;
        if (intercept) {
            b -= step * (residual.colwise().sum() / static_cast<double>(n));
        }
    }

    Eigen::MatrixXd eval_logits = x_eval * w;
    if (intercept) {
        eval_logits -= (x_mean * w).replicate(eval_logits.rows(), 1);
    }
    eval_logits.rowwise() += b;
    std::vector<int> pred(static_cast<std::size_t>(eval_logits.rows()));
    for (Eigen::Index i = 0; i < eval_logits.rows(); ++i) {
        Eigen::Index best = 0;
        eval_logits.row(i).maxCoeff(&best);
        pred[static_cast<std::size_t>(i)] = static_cast<int>(best);
    }
    return error_rate_score(pred, y_eval);
}

StumpForestParams stump_params(const Configuration& config) {
    StumpForestParams p;
    p.n_rounds = config_long(config, "n_rounds");
    p.learning_rate = config_double(config, "learning_rate");
    p.max_depth = config_long(config, "max_depth");
    p.subsample = config_double(config, "subsample");
    return p;
}

double boosted_regression_score(const Configuration& config, const Design& design,
                                const Eigen::VectorXd& y_train, const Eigen::MatrixXd& x_eval,
                                const Eigen::VectorXd& y_eval) {
    std::mt19937_64 rng(kInternalTrainSeed);
    BoostedTrees model;
    model.fit(design.x, y_train, stump_params(config), rng);
    return mse_score(model.predict(x_eval), y_eval);
}

double boosted_classification_score(const Configuration& config, const Design& design,
                                    const std::vector<int>& y_train, std::size_t n_classes,
                                    const Eigen::MatrixXd& x_eval,
                                    const std::vector<int>& y_eval) {
    const StumpForestParams params = stump_params(config);
    std::mt19937_64 rng(kInternalTrainSeed);
    Eigen::MatrixXd scores(x_eval.rows(), static_cast<Eigen::Index>(n_classes));
    for (std::size_t c = 0; c < n_classes; ++c) {
        Eigen::VectorXd indicator(design.x.rows());
        for (Eigen::Index i = 0; i < design.x.rows(); ++i) {
            indicator[i] = y_train[static_cast<std::size_t>(i)] == static_cast<int>(c) ? 1.0 : 0.0;
        }
        BoostedTrees model;
        model.fit(design.x, indicator, params, rng);
        scores.col(static_cast<Eigen::Index>(c)) = model.predict(x_eval);
    }
    std::vector<int> pred(static_cast<std::size_t>(x_eval.rows()));
    for (Eigen::Index i = 0; i < scores.rows(); ++i) {
        Eigen::Index best = 0;
        scores.row(i).maxCoeff(&best);
        pred[static_cast<std::size_t>(i)] = static_cast<int>(best);
    }
    return error_rate_score(pred, y_eval);
}

}  // namespace

bool HyperparameterSpace::has_dim(const std::string& name) const {
    return std::any_of(dims.begin(), dims.end(),
                       [&](const Dimension& d) { return d.name == name; });
}

const Dimension& HyperparameterSpace::dim(const std::string& name) const {
    for (const Dimension& d : dims) {
        if (d.name == name) return d;
    }
    throw SpecError("space for '" + learner + "' has no dimension '" + name + "'");
}

std::size_t HyperparameterSpace::encoded_size() const { return dims.size(); }

std::vector<std::string> known_learners() { return {"ridge", "boosted_stumps"}; }

HyperparameterSpace hyperparameter_space(const std::string& learner) {
    HyperparameterSpace space;
    space.learner = learner;
    if (learner == "ridge") {
        space.dims.push_back(continuous_dim("reg_strength", 1e-6, 1e3, DomainScale::Log));
        space.dims.push_back(integer_dim("max_iters", 50, 2000));
        space.dims.push_back(categorical_dim("fit_intercept", {"true", "false"}));
        return space;
    }
    if (learner == "boosted_stumps") {
        space.dims.push_back(integer_dim("n_rounds", 10, 500));
        space.dims.push_back(continuous_dim("learning_rate", 1e-3, 1.0, DomainScale::Log));
        space.dims.push_back(integer_dim("max_depth", 1, 3));
        space.dims.push_back(continuous_dim("subsample", 0.5, 1.0, DomainScale::Linear));
        return space;
    }
    throw SpecError("unknown learner '" + learner + "'");
}

Configuration default_config(const std::string& learner) {
    if (learner == "ridge") {
        return {{"reg_strength", 1.0}, {"max_iters", 500L}, {"fit_intercept", std::string("true")}};
    }
    if (learner == "boosted_stumps") {
        return {{"n_rounds", 100L},
                {"learning_rate", 0.1},
                {"max_depth", 1L},
                {"subsample", 1.0}};
    }
    throw SpecError("unknown learner '" + learner + "'");
}

std::vector<std::string> validate_config(const HyperparameterSpace& space,
                                         const Configuration& config) {
    return config_violations(space, config, true);
}

Configuration sample_config(const HyperparameterSpace& space, std::mt19937_64& rng) {
    Configuration config;
    for (const Dimension& d : space.dims) {
        switch (d.kind) {
            case DomainKind::Continuous: {
                if (d.scale == DomainScale::Log) {
                    std::uniform_real_distribution<double> u(std::log(d.lo), std::log(d.hi));
                    config[d.name] = std::clamp(std::exp(u(rng)), d.lo, d.hi);
                } else {
                    std::uniform_real_distribution<double> u(d.lo, d.hi);
                    config[d.name] = u(rng);
                }
                break;
            }
            case DomainKind::Integer: {
                std::uniform_int_distribution<long> u(static_cast<long>(d.lo),
                                                      static_cast<long>(d.hi));
                config[d.name] = u(rng);
                break;
            }
            case DomainKind::Categorical: {
                std::uniform_int_distribution<std::size_t> u(0, d.choices.size() - 1);
                config[d.name] = d.choices[u(rng)];
                break;
            }
        }
    }
    return config;
}

nlohmann::json config_to_json(const Configuration& config) {
    nlohmann::json j = nlohmann::json::object();
    for (const auto& [name, value] : config) {
        if (std::holds_alternative<double>(value)) {
            j[name] = std::get<double>(value);
        } else if (std::holds_alternative<long>(value)) {
            j[name] = std::get<long>(value);
        } else {
            j[name] = std::get<std::string>(value);
        }
    }
    return j;
}

Configuration config_from_json(const nlohmann::json& j, const HyperparameterSpace& space) {
    if (!j.is_object()) {
        throw SpecError("configuration must be a JSON object");
    }
    for (const auto& [key, value] : j.items()) {
        (void)value;
        if (!space.has_dim(key)) {
            throw SpecError("configuration has unknown dimension '" + key + "'");
        }
    }
    Configuration config;
    for (const Dimension& d : space.dims) {
        if (!j.contains(d.name)) {
            throw SpecError("configuration misses dimension '" + d.name + "'");
        }
        const nlohmann::json& v = j.at(d.name);
        switch (d.kind) {
            case DomainKind::Continuous:
                if (!v.is_number()) {
                    throw SpecError("dimension '" + d.name + "' expects a number");
                }
                config[d.name] = v.get<double>();
                break;
            case DomainKind::Integer:
                if (!v.is_number_integer()) {
                    throw SpecError("dimension '" + d.name + "' expects an integer");
                }
                config[d.name] = v.get<long>();
                break;
            case DomainKind::Categorical:
                if (!v.is_string()) {
                    throw SpecError("dimension '" + d.name + "' expects a string choice");
                }
                config[d.name] = v.get<std::string>();
                break;
        }
    }
    return config;
}

double config_double(const Configuration& config, const std::string& name) {
    const auto it = config.find(name);
    if (it == config.end() || !std::holds_alternative<double>(it->second)) {
        throw SpecError("configuration has no real-valued '" + name + "'");
    }
    return std::get<double>(it->second);
}

long config_long(const Configuration& config, const std::string& name) {
    const auto it = config.find(name);
    if (it == config.end() || !std::holds_alternative<long>(it->second)) {
        throw SpecError("configuration has no integer-valued '" + name + "'");
    }
    return std::get<long>(it->second);
}

const std::string& config_string(const Configuration& config, const std::string& name) {
    const auto it = config.find(name);
    if (it == config.end() || !std::holds_alternative<std::string>(it->second)) {
        throw SpecError("configuration has no string-valued '" + name + "'");
    }
    return std::get<std::string>(it->second);
}

double train_and_score(const std::string& learner, const Configuration& config,
                       const DataTable& train, const DataTable& eval) {
    const HyperparameterSpace space = hyperparameter_space(learner);
    const auto violations = config_violations(space, config, false);
    if (!violations.empty()) {
        std::ostringstream msg;
        msg << "invalid configuration for '" << learner << "':";
        for (const auto& v : violations) msg << " " << v << ";";
        throw SpecError(msg.str());
    }
    if (train.n_rows() == 0 || eval.n_rows() == 0) {
        throw TrainError("train and evaluation splits must be non-empty");
    }
    if (train.task != eval.task) {
        throw TrainError("train and evaluation splits disagree on the task");
    }

    const Design design = build_design(train);
    const Eigen::MatrixXd x_eval = apply_design(design, eval);

    if (train.task == TaskKind::Regression) {
        const Eigen::VectorXd y_train = regression_target(train);
        const Eigen::VectorXd y_eval = regression_target(eval);
        if (learner == "ridge") {
            return ridge_regression_score(config, design, y_train, x_eval, y_eval);
        }
        return boosted_regression_score(config, design, y_train, x_eval, y_eval);
    }

    const auto labels = class_labels(train);
    if (labels.size() < 2) {
        throw TrainError("classification training split has a single class");
    }
    const auto y_train = coded_labels(train, labels);
    const auto y_eval = coded_labels(eval, labels);
    if (learner == "ridge") {
        return ridge_classification_score(config, design, y_train, labels.size(), x_eval, y_eval);
    }
    return boosted_classification_score(config, design, y_train, labels.size(), x_eval, y_eval);
}

void BoostedTrees::fit(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                       const StumpForestParams& params, std::mt19937_64& rng) {
    trees_.clear();
    learning_rate_ = params.learning_rate;
    base_ = y.size() > 0 ? y.mean() : 0.0;

    const Eigen::Index n = x.rows();
    Eigen::VectorXd current = Eigen::VectorXd::Constant(n, base_);
    std::vector<Eigen::Index> all_rows(static_cast<std::size_t>(n));
    std::iota(all_rows.begin(), all_rows.end(), 0);

    const auto n_sub = static_cast<std::size_t>(std::max<double>(
        1.0, std::floor(params.subsample * static_cast<double>(n))));

    for (long round = 0; round < params.n_rounds; ++round) {
        std::vector<Eigen::Index> rows = all_rows;
        if (n_sub < rows.size()) {
            std::shuffle(rows.begin(), rows.end(), rng);
            rows.resize(n_sub);
        }
        const Eigen::VectorXd residual = y - current;
        Tree tree;
        grow(tree, x, residual, rows, 0, params.max_depth);
        for (Eigen::Index i = 0; i < n; ++i) {
            current[i] += learning_rate_ * predict_tree(tree, x, i);
        }
        trees_.push_back(std::move(tree));
    }
}

Eigen::VectorXd BoostedTrees::predict(const Eigen::MatrixXd& x) const {
    Eigen::VectorXd out = Eigen::VectorXd::Constant(x.rows(), base_);
    for (const Tree& tree : trees_) {
        for (Eigen::Index i = 0; i < x.rows(); ++i) {
            out[i] += learning_rate_ * predict_tree(tree, x, i);
        }
    }
    return out;
}

double BoostedTrees::predict_tree(const Tree& tree, const Eigen::MatrixXd& x, Eigen::Index row) {
    int node = 0;
    while (!tree.nodes[static_cast<std::size_t>(node)].leaf) {
        const Node& nd = tree.nodes[static_cast<std::size_t>(node)];
        node = x(row, nd.feature) <= nd.threshold ? nd.left : nd.right;
    }
    return tree.nodes[static_cast<std::size_t>(node)].value;
}

int BoostedTrees::grow(Tree& tree, const Eigen::MatrixXd& x, const Eigen::VectorXd& residual,
                       std::vector<Eigen::Index>& rows, long depth, long max_depth) {
    const int id = static_cast<int>(tree.nodes.size());
    tree.nodes.emplace_back();

    double sum = 0.0;
    for (Eigen::Index r : rows) sum += residual[r];
    const double mean = sum / static_cast<double>(rows.size());
    tree.nodes[static_cast<std::size_t>(id)].value = mean;
    if (depth >= max_depth || rows.size() < 2) {
        return id;
    }

    double node_sse = 0.0;
    for (Eigen::Index r : rows) {
        const double d = residual[r] - mean;
        node_sse += d * d;
    }

    int best_feature = -1;
    double best_threshold = 0.0;
    double best_sse = node_sse - 1e-12;
    std::vector<Eigen::Index> sorted = rows;
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
        std::sort(sorted.begin(), sorted.end(),
                  [&](Eigen::Index a, Eigen::Index b) { return x(a, j) < x(b, j); });
        double left_sum = 0.0;
        double left_sq = 0.0;
        double total_sq = 0.0;
        for (Eigen::Index r : sorted) total_sq += residual[r] * residual[r];
        const double total_sum = sum;
        for (std::size_t i = 0; i + 1 < sorted.size(); ++i) {
            const double v = residual[sorted[i]];
            left_sum += v;
            left_sq += v * v;
            const double here = x(sorted[i], j);
            const double next = x(sorted[i + 1], j);
            if (here == next) continue;
            const auto n_left = static_cast<double>(i + 1);
            const auto n_right = static_cast<double>(sorted.size() - i - 1);
            const double right_sum = total_sum - left_sum;
            const double right_sq = total_sq - left_sq;
            const double sse = (left_sq - left_sum * left_sum / n_left) +
                               (right_sq - right_sum * right_sum / n_right);
            if (sse < best_sse) {
                best_sse = sse;
                best_feature = static_cast<int>(j);
                best_threshold = here + 0.5 * (next - here);
            }
        }
    }
    if (best_feature < 0) {
        return id;
    }

    std::vector<Eigen::Index> left_rows;
    std::vector<Eigen::Index> right_rows;
    for (Eigen::Index r : rows) {
        (x(r, best_feature) <= best_threshold ? left_rows : right_rows).push_back(r);
    }
    const int left = grow(tree, x, residual, left_rows, depth + 1, max_depth);
    const int right = grow(tree, x, residual, right_rows, depth + 1, max_depth);
    Node& node = tree.nodes[static_cast<std::size_t>(id)];
    node.leaf = false;
    node.feature = best_feature;
    node.threshold = best_threshold;
    node.left = left;
    node.right = right;
    return id;
}

}  // namespace tandem
