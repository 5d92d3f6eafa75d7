#include "tandem/scheduler.hpp"

#include <cmath>

#include "tandem/common.hpp"

namespace tandem {

std::string to_string(SchedulerAction action) {
    return action == SchedulerAction::FE ? "fe" : "hpo";
}

SchedulerState make_scheduler(long budget, double p1, double c2) {
    if (budget < 1) {
        throw SpecError("scheduler budget must be at least 1");
    }
    if (!(p1 >= 0.5 && p1 <= 1.0)) {
        throw SpecError("scheduler prior p1 must lie in [0.5, 1]");
    }
    if (!(c2 > 0.0)) {
        throw SpecError("scheduler exploration constant c2 must be positive");
    }
    SchedulerState state;
    state.budget = budget;
    state.p1 = p1;
    state.c2 = c2;
    return state;
}

double prior_weight(const SchedulerState& state, SchedulerAction action, long m) {
    if (m < 0 || m > state.budget) {
        throw StateError("prior weight step out of range");
    }
    // The m/M form makes the endpoint exact: at m = M the ratio is exactly 1,
    // so w_FE collapses to 0.5 with no rounding residue. The HPO weight is
    // the exact complement.
    const double ratio = static_cast<double>(m) / static_cast<double>(state.budget);
    const double fe = state.p1 - (state.p1 - 0.5) * ratio;
    return action == SchedulerAction::FE ? fe : 1.0 - fe;
}

double exploitation_term(const SchedulerState& state, SchedulerAction action) {
    if (state.neutral) {
        return 0.5;
    }
    const long n = action == SchedulerAction::FE ? state.n_fe : state.n_hpo;
    const long s = action == SchedulerAction::FE ? state.s_fe : state.s_hpo;
    if (n == 0) {
        return 0.5;
    }
    return static_cast<double>(s) / static_cast<double>(n);
}

SchedulerAction pucb_select(SchedulerState& state) {
    if (state.step >= state.budget) {
        throw StateError("selection budget exhausted");
    }
    const long total = state.n_fe + state.n_hpo;
    const double root = total == 0 ? 1.0 : std::sqrt(static_cast<double>(total));
    const double fe_score =
        exploitation_term(state, SchedulerAction::FE) +
        state.c2 * prior_weight(state, SchedulerAction::FE, state.step) * root /
            (1.0 + static_cast<double>(state.n_fe));
    const double hpo_score =
        exploitation_term(state, SchedulerAction::HPO) +
        state.c2 * prior_weight(state, SchedulerAction::HPO, state.step) * root /
            (1.0 + static_cast<double>(state.n_hpo));
    state.pending = fe_score >= hpo_score ? SchedulerAction::FE : SchedulerAction::HPO;
    return *state.pending;
}

void record_outcome(SchedulerState& state, SchedulerAction action, bool success) {
    if (!state.pending) {
        throw StateError("no selection is pending an outcome");
    }
    if (*state.pending != action) {
        throw StateError("recorded action does not match the pending selection");
    }
    if (action == SchedulerAction::FE) {
        state.n_fe += 1;
        state.s_fe += success ? 1 : 0;
    } else {
        state.n_hpo += 1;
        state.s_hpo += success ? 1 : 0;
    }
    state.step += 1;
    state.pending.reset();
}

double balanced_prior_bound(long budget) {
    return (static_cast<double>(budget) + 1.5) / (static_cast<double>(budget) + 3.0);
}

bool balanced_prior_ok(long budget, double p1) {
    return p1 >= 0.5 && p1 < balanced_prior_bound(budget);
}

NeutralSimulation simulate_neutral(long budget, double p1, double c2) {
    if (budget < 1) {
        throw SpecError("scheduler budget must be at least 1");
    }
    if (!balanced_prior_ok(budget, p1)) {
        throw SpecError("prior p1 outside the balanced-budget range [0.5, (M+1.5)/(M+3))");
    }
    SchedulerState state = make_scheduler(budget, p1, c2);
    state.neutral = true;

    const auto witness = [&state]() {
        const double fe = prior_weight(state, SchedulerAction::FE, state.step);
        const double hpo = prior_weight(state, SchedulerAction::HPO, state.step);
        return fe * (1.0 + static_cast<double>(state.n_hpo)) -
               hpo * (1.0 + static_cast<double>(state.n_fe));
    };

    NeutralSimulation out;
    out.q_trace.reserve(static_cast<std::size_t>(budget) + 1);
    out.fe_picks.reserve(static_cast<std::size_t>(budget));
    out.q_trace.push_back(witness());
    for (long m = 0; m < budget; ++m) {
        const SchedulerAction action = pucb_select(state);
        record_outcome(state, action, false);
        out.fe_picks.push_back(action == SchedulerAction::FE);
        out.q_trace.push_back(witness());
    }
    out.n_fe = state.n_fe;
    out.n_hpo = state.n_hpo;
    return out;
}

}  // namespace tandem
