#include "tandem/fetree.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace tandem {

void GlobalRange::widen(double v) {
    if (!initialized) {
        initialized = true;
        lo = v;
        hi = v;
        return;
    }
    lo = std::min(lo, v);
    hi = std::max(hi, v);
}

double normalize_score(double v, const GlobalRange& range) {
    if (!range.initialized) {
        throw StateError("score range has no observations yet");
    }
    const double width = range.hi - range.lo;
    if (width < 1e-12) {
        return 0.5;
    }
    return (v - range.lo) / width;
}

std::vector<MemoryEntry> memory_filter(const std::vector<MemoryEntry>& memory,
                                       const std::set<std::string>& available) {
    std::vector<MemoryEntry> kept;
    for (const MemoryEntry& entry : memory) {
        const bool satisfied =
            std::all_of(entry.required_features.begin(), entry.required_features.end(),
                        [&](const std::string& name) { return available.count(name) != 0; });
        if (satisfied) {
            kept.push_back(entry);
        }
    }
    return kept;
}

std::vector<MemoryEntry> pareto_select(const std::vector<MemoryEntry>& candidates) {
    const std::size_t n = candidates.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (candidates[a].v != candidates[b].v) {
            return candidates[a].v > candidates[b].v;
        }
        return candidates[a].delta_v > candidates[b].delta_v;
    });

    // Sweep by strictly decreasing v. A group of equal-v entries survives
    // only if its best delta_v beats everything with higher v, and within
    // the group only the best-delta entries (duplicates included) are
    // non-dominated.
    std::vector<char> kept(n, 0);
    double best_prev_delta = 0.0;
    bool has_prev = false;
    std::size_t i = 0;
    while (i < n) {
        const double group_v = candidates[order[i]].v;
        std::size_t j = i;
        double group_delta = -std::numeric_limits<double>::infinity();
        while (j < n && candidates[order[j]].v == group_v) {
            group_delta = std::max(group_delta, candidates[order[j]].delta_v);
            ++j;
        }
        if (!has_prev || group_delta > best_prev_delta) {
            for (std::size_t k = i; k < j; ++k) {
                if (candidates[order[k]].delta_v == group_delta) {
                    kept[order[k]] = 1;
                }
            }
        }
        best_prev_delta = has_prev ? std::max(best_prev_delta, group_delta) : group_delta;
        has_prev = true;
        i = j;
    }

    std::vector<MemoryEntry> frontier;
    for (std::size_t k = 0; k < n; ++k) {
        if (kept[k]) {
            frontier.push_back(candidates[k]);
        }
    }
    return frontier;
}

SearchTree::SearchTree(DataTable train, DataTable val, double c1,
                       std::size_t cache_budget, Configuration default_config)
    : c1_(c1), cache_budget_(cache_budget), default_config_(std::move(default_config)) {
    validate_table(train);
    validate_table(val);
    TreeNode root;
    root.id = 0;
    root.meta = compute_meta_features(train);
    root.schema = train.schema();
    nodes_.push_back(std::move(root));
    root_tables_ = std::make_shared<const NodeTables>(
        NodeTables{std::move(train), std::move(val)});
}

std::size_t SearchTree::size() const {
    return nodes_.size();
}

void SearchTree::check_id(int id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= nodes_.size()) {
        throw StateError("unknown tree node id: " + std::to_string(id));
    }
}

const TreeNode& SearchTree::node(int id) const {
    check_id(id);
    return nodes_[id];
}

const GlobalRange& SearchTree::range() const {
    return range_;
}

const std::vector<MemoryEntry>& SearchTree::memory() const {
    return memory_;
}

double SearchTree::c1() const {
    return c1_;
}

double SearchTree::node_q(int id) const {
    check_id(id);
    const TreeNode& node = nodes_[id];
    if (node.n < 1) {
        throw StateError("node has no completed playouts");
    }
    if (!node.v_max.has_value()) {
        throw StateError("node has no observed score");
    }
    return static_cast<double>(node.r) / static_cast<double>(node.n) +
           normalize_score(*node.v_max, range_);
}

bool SearchTree::fully_expanded(int id) const {
    check_id(id);
    const TreeNode& node = nodes_[id];
    if (!node.parent.has_value()) {
        return node.directive_counts[0] >= kRootInitializations;
    }
    return node.directive_counts[1] >= kNodeExplorations &&
           node.directive_counts[2] >= kNodeExploitations;
}

Directive SearchTree::choose_directive(int id) const {
    check_id(id);
    const TreeNode& node = nodes_[id];
    if (!node.parent.has_value()) {
        if (node.directive_counts[0] < kRootInitializations) {
            return Directive::Initialization;
        }
        throw StateError("root is fully expanded");
    }
    if (node.directive_counts[1] < kNodeExplorations) {
        return Directive::Exploration;
    }
    if (node.directive_counts[2] < kNodeExploitations) {
        return Directive::Exploitation;
    }
    throw StateError("node is fully expanded");
}

Directive SearchTree::consume_directive(int id) {
    const Directive directive = choose_directive(id);
    nodes_[id].directive_counts[static_cast<std::size_t>(directive)] += 1;
    return directive;
}

std::vector<int> SearchTree::uct_select() const {
    std::vector<int> path{0};
    int current = 0;
    while (fully_expanded(current)) {
        const TreeNode& node = nodes_[current];
        if (node.children.empty()) {
            break;
        }
        if (node.n < 1) {
            throw StateError("cannot descend through an unvisited node");
        }
        int best = -1;
        double best_score = -std::numeric_limits<double>::infinity();
        for (int child_id : node.children) {
            const TreeNode& child = nodes_[child_id];
            if (child.n < 1) {
                throw StateError("child without a completed playout");
            }
            const double score =
                node_q(child_id) +
                c1_ * std::sqrt(std::log(static_cast<double>(node.n)) /
                                static_cast<double>(child.n));
            if (score > best_score) {
                best_score = score;
                best = child_id;
            }
        }
        path.push_back(best);
        current = best;
    }
    return path;
}

ExpandResult SearchTree::expand_and_playout(int base_id, const Proposal& proposal,
                                            const Evaluator& evaluator) {
    check_id(base_id);
    ExpandResult result;
    std::optional<double> baseline;
    {
        const TreeNode& base = nodes_[base_id];
        if (!base.evaluations.empty()) {
            baseline = best_own_score(base_id);
        } else if (base.v_max.has_value()) {
            baseline = base.v_max;
        }
    }

    try {
        const auto base_tables = tables(base_id);
        Pipeline pipeline = fit_pipeline(proposal.ops, base_tables->train);
        DataTable new_train = apply_pipeline(pipeline, base_tables->train);
        DataTable new_val = apply_pipeline(pipeline, base_tables->val);
        validate_table(new_train);
        validate_table(new_val);

        const TreeNode& base = nodes_[base_id];
        const Configuration config =
            base.best_config.has_value() ? *base.best_config : default_config_;
        const double v = evaluator(new_train, new_val, config);

        TreeNode child;
        child.id = static_cast<int>(nodes_.size());
        child.parent = base_id;
        child.step = std::move(pipeline);
        child.evaluations.emplace_back(config, v);
        child.best_config = config;
        child.meta = compute_meta_features(new_train);
        child.reason = proposal.reason;
        child.way = proposal.way;
        child.schema = new_train.schema();

        const int child_id = child.id;
        nodes_.push_back(std::move(child));
        nodes_[base_id].children.push_back(child_id);
        cache_insert(child_id, std::make_shared<const NodeTables>(NodeTables{
                                   std::move(new_train), std::move(new_val)}));

        MemoryEntry entry;
        entry.reason = proposal.reason;
        entry.way = proposal.way;
        entry.required_features = proposal.required_features;
        entry.op_specs = proposal.ops;
        entry.v = v;
        entry.delta_v = v - baseline.value_or(v);
        memory_.push_back(std::move(entry));

        result.ok = true;
        result.node_id = child_id;
        result.score = v;
        result.parent_score = baseline.value_or(v);
    } catch (const Error& err) {
        result.ok = false;
        result.error = err.what();
        result.parent_score = baseline.value_or(0.0);
    }
    return result;
}

long SearchTree::backpropagate(int id, double v, double global_best_before) {
    check_id(id);
    const long reward = v > global_best_before ? 1 : 0;
    range_.widen(v);
    std::optional<int> cursor = id;
    while (cursor.has_value()) {
        TreeNode& node = nodes_[*cursor];
        node.n += 1;
        node.r += reward;
        node.v_max = node.v_max.has_value() ? std::max(*node.v_max, v) : v;
        cursor = node.parent;
    }
    return reward;
}

void SearchTree::localized_vmax_update(int id, double v) {
    check_id(id);
    range_.widen(v);
    std::optional<int> cursor = id;
    while (cursor.has_value()) {
        TreeNode& node = nodes_[*cursor];
        node.v_max = node.v_max.has_value() ? std::max(*node.v_max, v) : v;
        cursor = node.parent;
    }
}

void SearchTree::record_evaluation(int id, const Configuration& config, double v) {
    check_id(id);
    TreeNode& node = nodes_[id];
    const bool better = node.evaluations.empty() || v > best_own_score(id);
    node.evaluations.emplace_back(config, v);
    if (better) {
        node.best_config = config;
    }
    range_.widen(v);
}

double SearchTree::best_own_score(int id) const {
    check_id(id);
    const TreeNode& node = nodes_[id];
    if (node.evaluations.empty()) {
        throw StateError("node has no evaluations");
    }
    double best = node.evaluations.front().second;
    for (const auto& entry : node.evaluations) {
        best = std::max(best, entry.second);
    }
    return best;
}

std::shared_ptr<const NodeTables> SearchTree::tables(int id) const {
    check_id(id);
    if (id == 0) {
        return root_tables_;
    }
    const auto it = cache_.find(id);
    if (it != cache_.end()) {
        const auto pos = std::find(lru_.begin(), lru_.end(), id);
        if (pos != lru_.end()) {
            lru_.erase(pos);
        }
        lru_.push_front(id);
        return it->second;
    }
    return materialize(id);
}

std::shared_ptr<const NodeTables> SearchTree::materialize(int id) const {
    std::vector<int> chain;
    std::optional<int> cursor = id;
    while (cursor.has_value() && *cursor != 0) {
        chain.push_back(*cursor);
        cursor = nodes_[*cursor].parent;
    }
    std::reverse(chain.begin(), chain.end());

    DataTable train = root_tables_->train;
    DataTable val = root_tables_->val;
    for (int step_id : chain) {
        train = apply_pipeline(nodes_[step_id].step, train);
        val = apply_pipeline(nodes_[step_id].step, val);
    }
    auto state = std::make_shared<const NodeTables>(
        NodeTables{std::move(train), std::move(val)});
    cache_insert(id, state);
    return state;
}

void SearchTree::cache_insert(int id, std::shared_ptr<const NodeTables> state) const {
    cache_[id] = std::move(state);
    lru_.push_front(id);
    while (lru_.size() > cache_budget_) {
        cache_.erase(lru_.back());
        lru_.pop_back();
    }
}

}  // namespace tandem
