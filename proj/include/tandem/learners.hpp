#pragma once

#include <Eigen/Dense>
#include <map>
#include <random>
#include <string>
#include <variant>
#include <vector>

#include "json.hpp"

#include "tandem/tabular.hpp"

namespace tandem {

enum class DomainKind { Continuous, Integer, Categorical };
enum class DomainScale { Linear, Log };

struct Dimension {
    std::string name;
    DomainKind kind = DomainKind::Continuous;
    DomainScale scale = DomainScale::Linear;
    double lo = 0.0;
    double hi = 0.0;
    std::vector<std::string> choices;
};

struct HyperparameterSpace {
    std::string learner;
    std::vector<Dimension> dims;

    bool has_dim(const std::string& name) const;
    const Dimension& dim(const std::string& name) const;
    std::size_t encoded_size() const;
};

using ConfigValue = std::variant<double, long, std::string>;
using Configuration = std::map<std::string, ConfigValue>;

std::vector<std::string> known_learners();
HyperparameterSpace hyperparameter_space(const std::string& learner);
Configuration default_config(const std::string& learner);

std::vector<std::string> validate_config(const HyperparameterSpace& space,
                                         const Configuration& config);
Configuration sample_config(const HyperparameterSpace& space, std::mt19937_64& rng);

nlohmann::json config_to_json(const Configuration& config);
Configuration config_from_json(const nlohmann::json& j, const HyperparameterSpace& space);

double config_double(const Configuration& config, const std::string& name);
long config_long(const Configuration& config, const std::string& name);
const std::string& config_string(const Configuration& config, const std::string& name);

// Validation score, maximization convention: classification -(error rate),
// regression -(mean squared error).
double train_and_score(const std::string& learner, const Configuration& config,
                       const DataTable& train, const DataTable& eval);

struct StumpForestParams {
    long n_rounds = 100;
    double learning_rate = 0.1;
    long max_depth = 1;
    double subsample = 1.0;
};

// Least-squares gradient boosting over exact greedy regression trees.
class BoostedTrees {
  public:
    void fit(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
             const StumpForestParams& params, std::mt19937_64& rng);
    Eigen::VectorXd predict(const Eigen::MatrixXd& x) const;

  private:
    struct Node {
        bool leaf = true;
        double value = 0.0;
        int feature = -1;
        double threshold = 0.0;
        int left = -1;
        int right = -1;
    };
    struct Tree {
        std::vector<Node> nodes;
    };

    double base_ = 0.0;
    double learning_rate_ = 0.1;
    std::vector<Tree> trees_;

    static double predict_tree(const Tree& tree, const Eigen::MatrixXd& x, Eigen::Index row);
    static int grow(Tree& tree, const Eigen::MatrixXd& x, const Eigen::VectorXd& residual,
                    std::vector<Eigen::Index>& rows, long depth, long max_depth);
};

}  // namespace tandem
