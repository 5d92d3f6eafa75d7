#pragma once

#include <optional>
#include <string>
#include <vector>

namespace tandem {

enum class SchedulerAction { FE, HPO };

std::string to_string(SchedulerAction action);

// Two-armed prior-weighted bandit over the FE and HPO optimizers. The prior
// weights decay linearly from (p1, 1-p1) at step 0 to (0.5, 0.5) at the final
// step; exploitation terms are empirical success rates with a 0.5 cold start.
struct SchedulerState {
    long budget = 0;
    long step = 0;
    double p1 = 0.9;
    double c2 = 1.4142135623730951;
    long n_fe = 0;
    long n_hpo = 0;
    long s_fe = 0;
    long s_hpo = 0;
    // Pins both exploitation terms at the cold-start value, used by the
    // balanced-budget simulation.
    bool neutral = false;
    std::optional<SchedulerAction> pending;
};

SchedulerState make_scheduler(long budget, double p1, double c2);

double prior_weight(const SchedulerState& state, SchedulerAction action, long m);
double exploitation_term(const SchedulerState& state, SchedulerAction action);

// Argmax of Q(a) + c2 * w_a(m) * sqrt(N_FE + N_HPO) / (1 + N_a); the square
// root is replaced by 1 before the first outcome so priors decide the first
// pick. Ties go to FE. The chosen action stays pending until record_outcome.
SchedulerAction pucb_select(SchedulerState& state);
void record_outcome(SchedulerState& state, SchedulerAction action, bool success);

// Upper end (exclusive) of the prior range with a guaranteed even budget
// split: p1 must lie in [0.5, (M + 1.5)/(M + 3)).
double balanced_prior_bound(long budget);
bool balanced_prior_ok(long budget, double p1);

struct NeutralSimulation {
    long n_fe = 0;
    long n_hpo = 0;
    // q_trace[m] = w_FE(m)*(1 + N_HPO(m)) - w_HPO(m)*(1 + N_FE(m)), the
    // balance witness, recorded for m = 0..budget.
    std::vector<double> q_trace;
    std::vector<bool> fe_picks;
};

// Runs the selector for the full budget with neutral rewards and records the
// balance witness at every step. Refuses priors outside the balanced range.
NeutralSimulation simulate_neutral(long budget, double p1, double c2);

}  // namespace tandem
