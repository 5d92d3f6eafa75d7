#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <utility>
#include <vector>

#include "tandem/fetree.hpp"
#include "tandem/learners.hpp"
#include "tandem/metafeat.hpp"

namespace tandem {

// One surrogate training row: a dataset state's meta-features concatenated
// with an encoded configuration, labeled by the raw score it earned.
struct Observation {
    int node = 0;
    std::vector<double> x;
    double v = 0.0;
};

// Fixed-order encoding: the meta-features first, then every space dimension
// in declaration order (log-scale continuous values as log(value), integers
// as reals, categoricals as their choice index). Throws SpecError when the
// configuration does not fit the space.
std::vector<double> encode_observation(const MetaFeatureVector& meta,
                                       const Configuration& config,
                                       const HyperparameterSpace& space);

// Regression forest: bootstrap samples, square-root feature subsetting at
// every split, variance-reduction split criterion, leaves grown to purity
// or a single row. Deterministic for a fixed seed.
class RandomForest {
  public:
    static RandomForest fit(const std::vector<std::vector<double>>& x,
                            const std::vector<double>& y, int n_trees,
                            std::uint64_t seed, bool bootstrap = true);

    // Cross-tree mean and variance; the variance is floored at 1e-8 so a
    // unanimous ensemble still reports nonzero uncertainty.
    std::pair<double, double> predict(const std::vector<double>& x) const;

    std::size_t dimension() const;

  private:
    struct Node {
        double value = 0.0;
        int feature = -1;  // -1 marks a leaf
        double threshold = 0.0;
        int left = -1;
        int right = -1;
    };
    struct Tree {
        std::vector<Node> nodes;
    };

    double predict_tree(const Tree& tree, const std::vector<double>& x) const;

    std::size_t dim_ = 0;
    std::vector<Tree> trees_;
};

inline constexpr int kSurrogateTrees = 25;
inline constexpr double kVarianceFloor = 1e-8;
inline constexpr std::size_t kColdStartObservations = 8;
inline constexpr std::size_t kNeighborsPerConfig = 4;
inline constexpr std::size_t kRandomDraws = 500;
inline constexpr std::size_t kPoolCap = 20000;
inline constexpr double kPerturbationWidth = 0.2;

struct Surrogate {
    RandomForest forest;
    std::size_t dim = 0;
};

// Fits the 25-tree forest on the observation rows. Throws StateError with
// fewer than two observations.
Surrogate fit_surrogate(const std::vector<Observation>& observations, std::uint64_t seed);

// Mean and floored variance; SpecError on a dimension mismatch.
std::pair<double, double> predict(const Surrogate& surrogate, const std::vector<double>& x);

// EI for maximization: with z = (mean - incumbent)/sigma this is
// sigma*(z*Phi(z) + phi(z)), and max(0, mean - incumbent) once sigma
// degenerates below 1e-9.
double expected_improvement(double mean, double variance, double incumbent);

struct Candidate {
    int node = 0;
    Configuration config;
    std::vector<double> x;
};

// The hybrid pool: four one-dimension perturbations of every evaluated
// configuration at its own node, plus 500 uniform configurations paired
// with every node's meta-features. Deduplicated on (node, encoding) and
// capped at 20,000 entries by uniform subsampling.
std::vector<Candidate> build_pool(const SearchTree& tree, const HyperparameterSpace& space,
                                  std::mt19937_64& rng);

struct HpoChoice {
    int node = 0;
    Configuration config;
    bool cold_start = false;
    double ei = 0.0;
    std::size_t pool_size = 0;
};

// The joint (state, configuration) suggestion. Below eight observations the
// choice is a uniform node and configuration, flagged as cold start;
// otherwise the EI argmax over the candidate pool, first occurrence winning
// ties. The incumbent is the best raw score among the observations.
HpoChoice hpo_step(const SearchTree& tree, const std::vector<Observation>& observations,
                   const HyperparameterSpace& space, std::mt19937_64& rng);

}  // namespace tandem
