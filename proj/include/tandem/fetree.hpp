#pragma once

#include <array>
#include <cstddef>
#include <functional>
#include <list>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "tandem/feops.hpp"
#include "tandem/learners.hpp"
#include "tandem/metafeat.hpp"
#include "tandem/proposer.hpp"
#include "tandem/tabular.hpp"

namespace tandem {

// Running min/max over every raw score observed anywhere in the search, from
// feature-engineering playouts and hyperparameter evaluations alike. Only
// widens.
struct GlobalRange {
    bool initialized = false;
    double lo = 0.0;
    double hi = 0.0;

    void widen(double v);
};

// Min-max normalization into [0, 1]. A collapsed range maps everything to
// 0.5. Throws StateError before the first observation.
double normalize_score(double v, const GlobalRange& range);

// One successful expansion, remembered globally so later prompts can reuse
// it. delta_v is fixed at creation: the child's score minus the base node's
// best own score at that moment.
struct MemoryEntry {
    std::string reason;
    std::string way;
    std::vector<std::string> required_features;
    std::vector<OperationSpec> op_specs;
    double v = 0.0;
    double delta_v = 0.0;
};

// Entries whose required columns are all present in `available`.
std::vector<MemoryEntry> memory_filter(const std::vector<MemoryEntry>& memory,
                                       const std::set<std::string>& available);

// Non-dominated entries in (v, delta_v): a dominator is >= on both
// coordinates and > on at least one. Exact duplicates survive together.
// Survivors keep their input order.
std::vector<MemoryEntry> pareto_select(const std::vector<MemoryEntry>& candidates);

struct TreeNode {
    int id = 0;
    std::optional<int> parent;
    std::vector<int> children;
    // The fitted operations that turned the parent's state into this one;
    // empty at the root.
    std::vector<FittedOperation> step;
    long n = 0;
    long r = 0;
    std::optional<double> v_max;
    // Expansion attempts from this node, indexed by Directive; failures
    // count too.
    std::array<long, 3> directive_counts{};
    std::vector<std::pair<Configuration, double>> evaluations;
    std::optional<Configuration> best_config;
    MetaFeatureVector meta{};
    std::string reason;
    std::string way;
    SchemaView schema;
};

// Expansion quotas: the root spends kRootInitializations Initialization
// attempts; every other node spends kNodeExplorations Exploration attempts
// and then kNodeExploitations Exploitation attempts. Failures count.
inline constexpr long kRootInitializations = 5;
inline constexpr long kNodeExplorations = 2;
inline constexpr long kNodeExploitations = 2;

struct NodeTables {
    DataTable train;
    DataTable val;
};

struct ExpandResult {
    bool ok = false;
    int node_id = -1;
    double score = 0.0;
    // The base node's best own score, the baseline for delta_v and for the
    // scheduler's success test.
    double parent_score = 0.0;
    std::string error;
};

using Evaluator = std::function<double(const DataTable& train, const DataTable& val,
                                       const Configuration& config)>;

// The Monte Carlo search tree over dataset states. Node 0 is the root (the
// untransformed split); ids are dense and never reused. All mutation happens
// on the caller's single thread.
class SearchTree {
  public:
    // cache_budget bounds how many non-root node states stay materialized;
    // anything evicted is recomputed by replaying its ancestors' fitted
    // operations. The root tables are always pinned.
    SearchTree(DataTable train, DataTable val, double c1, std::size_t cache_budget,
               Configuration default_config);

    std::size_t size() const;
    const TreeNode& node(int id) const;
    const GlobalRange& range() const;
    const std::vector<MemoryEntry>& memory() const;
    double c1() const;

    // Root-to-target path, descending by UCT score among children and
    // stopping at the first node whose directive quota is unmet. Ties pick
    // the lowest child id. When every node on the greedy path is exhausted
    // the path still ends at its final node; the caller decides what an
    // exhausted tree means.
    std::vector<int> uct_select() const;

    // Q(s) = R/N + normalized v_max. Requires at least one visit.
    double node_q(int id) const;

    bool fully_expanded(int id) const;
    Directive choose_directive(int id) const;
    // choose_directive plus the tally increment. Call before building the
    // proposal so failed attempts consume quota too.
    Directive consume_directive(int id);

    // Fits the proposal on the base state, scores the transformed split with
    // the inherited configuration (base best_config, else the default), and
    // adds the child node plus a MemoryEntry. Any fit/apply/evaluate failure
    // returns a failure record and leaves the tree untouched; quota
    // accounting already happened in consume_directive. No visit counts
    // change here: call backpropagate with the result.
    ExpandResult expand_and_playout(int base_id, const Proposal& proposal,
                                    const Evaluator& evaluator);

    // Binary-reward update after a playout: r = 1 iff v is a strict
    // improvement on the global best BEFORE this evaluation; N += 1, R += r,
    // and v_max absorbs v for the node and every ancestor. Returns r.
    long backpropagate(int id, double v, double global_best_before);

    // Raises v_max along the ancestor chain without touching N or R;
    // hyperparameter evaluations report through this.
    void localized_vmax_update(int id, double v);

    // Appends one (configuration, score) own-evaluation and keeps best_config
    // the argmax over them.
    void record_evaluation(int id, const Configuration& config, double v);

    // Best own-evaluation score; StateError when the node has none.
    double best_own_score(int id) const;

    // This node's train/val tables, from cache or by replay. The snapshot
    // stays valid even if the cache evicts it later.
    std::shared_ptr<const NodeTables> tables(int id) const;

  private:
    void check_id(int id) const;
    std::shared_ptr<const NodeTables> materialize(int id) const;
    void cache_insert(int id, std::shared_ptr<const NodeTables> state) const;

    double c1_ = 1.0;
    std::size_t cache_budget_ = 64;
    Configuration default_config_;
    std::vector<TreeNode> nodes_;
    GlobalRange range_;
    std::vector<MemoryEntry> memory_;
    std::shared_ptr<const NodeTables> root_tables_;
    // Most recently used non-root states, front first.
    mutable std::list<int> lru_;
    mutable std::map<int, std::shared_ptr<const NodeTables>> cache_;
};

}  // namespace tandem
