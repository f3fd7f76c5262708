#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "rl3/tabular_mdp.hpp"

namespace rl3 {

constexpr double kDefaultLaplaceCoeff = 0.1;
constexpr double kDefaultBellmanTol = 0.01;

/// Q-estimates over the full concrete state set. Unvisited states keep the
/// default value 0 for every action.
struct QTable {
    int num_states = 0;
    int num_actions = 0;
    std::vector<double> q;          // [s][a]
    std::vector<uint8_t> known;     // [s], 1 once the state entered the model

    void reset(int s, int a) {
        num_states = s;
        num_actions = a;
        q.assign(static_cast<size_t>(s) * a, 0.0);
        known.assign(s, 0);
    }
    double value(int s, int a) const { return q[static_cast<size_t>(s) * num_actions + a]; }
    double& value_ref(int s, int a) { return q[static_cast<size_t>(s) * num_actions + a]; }
    double state_value(int s) const {
        double best = value(s, 0);
        for (int a = 1; a < num_actions; ++a) best = std::max(best, value(s, a));
        return best;
    }
    int greedy_action(int s) const {
        int best = 0;
        for (int a = 1; a < num_actions; ++a)
            if (value(s, a) > value(s, best)) best = a;
        return best;
    }

    std::string dump() const;
};

/// Per-(s,a) visit counts within one meta-episode.
struct CountTable {
    int num_states = 0;
    int num_actions = 0;
    std::vector<int64_t> n;  // [s][a]

    void reset(int s, int a) {
        num_states = s;
        num_actions = a;
        n.assign(static_cast<size_t>(s) * a, 0);
    }
    int64_t count(int s, int a) const { return n[static_cast<size_t>(s) * num_actions + a]; }
    void increment(int s, int a) { ++n[static_cast<size_t>(s) * num_actions + a]; }
    int64_t total() const {
        int64_t t = 0;
        for (auto v : n) t += v;
        return t;
    }
};

/// Incremental maximum-likelihood model over the states visited so far.
/// Transition rows are Laplace-smoothed over the visited set; rewards use the
/// plain sample mean. States enter the model on first contact and are never
/// removed within a meta-episode.
class ModelEstimate {
public:
    ModelEstimate() = default;
    ModelEstimate(int num_states, int num_actions, double laplace_coeff = kDefaultLaplaceCoeff);

    void reset(int num_states, int num_actions);

    /// Records one transition. `terminal_next` marks s_next as a terminal
    /// state; terminal states keep value 0 in value iteration and never
    /// accumulate outgoing transition mass (the stepper never leaves them).
    void update(int s, int a, double r, int s_next, bool terminal_next);

    /// Smoothed probabilities over `visited_states()`, in ascending state order.
    /// For a never-tried (s,a) this is the smoothing-only uniform row.
    std::vector<double> transition_row(int s, int a) const;

    /// Sample-mean reward; 0 for a never-tried pair.
    double reward_estimate(int s, int a) const;

    bool visited(int s) const { return visited_flag_[s] != 0; }
    /// Ascending state indices; this ordering fixes the sweep and inner-sum
    /// order of value iteration, which keeps results independent of visit order.
    const std::vector<int>& visited_states() const { return visited_sorted_; }
    int64_t sa_count(int s, int a) const { return sa_counts_[idx(s, a)]; }
    int64_t transition_count(int s, int a, int s2) const {
        return trans_counts_[(static_cast<size_t>(s) * num_actions_ + a) * num_states_ + s2];
    }
    bool is_terminal(int s) const { return terminal_flag_[s] != 0; }
    double laplace_coeff() const { return laplace_coeff_; }
    int num_states() const { return num_states_; }
    int num_actions() const { return num_actions_; }

    std::string dump() const;

private:
    size_t idx(int s, int a) const { return static_cast<size_t>(s) * num_actions_ + a; }
    void touch(int s);

    int num_states_ = 0;
    int num_actions_ = 0;
    double laplace_coeff_ = kDefaultLaplaceCoeff;
    std::vector<int64_t> trans_counts_;  // [s][a][s']
    std::vector<int64_t> sa_counts_;     // [s][a]
    std::vector<double> reward_sum_;     // [s][a]
    std::vector<uint8_t> visited_flag_;
    std::vector<uint8_t> terminal_flag_;
    std::vector<int> visited_sorted_;
};

/// Finite-horizon value iteration on the estimated model, discount 1.
/// Runs at most `horizon` synchronous sweeps over the visited states and
/// stops early once the largest Bellman update falls below `bellman_tol`.
QTable value_iteration(const ModelEstimate& model, int horizon,
                       double bellman_tol = kDefaultBellmanTol);

/// Same backup loop on a true MDP restricted to a subset of states, with
/// transition mass to excluded states renormalized onto the subset. Used by
/// the estimated-vs-true substitution analysis.
QTable value_iteration_true_restricted(const TabularMdp& mdp, const std::vector<int>& states,
                                       int horizon, double bellman_tol = kDefaultBellmanTol);

struct OracleSolution {
    QTable q;
    double optimal_return = 0.0;  // from the start distribution
};

/// Exact finite-horizon optimum on the true model: `horizon` full sweeps,
/// no early stop, terminal states pinned at 0.
OracleSolution oracle_solve(const TabularMdp& mdp, int horizon);

/// Best achievable expected return over a whole interaction budget, where
/// episode ends (terminal entry or task-horizon expiry) restart the task from
/// its start distribution. Exact dynamic program over (state, episode step,
/// remaining budget); this is the normalizer for oracle-fraction scores.
double oracle_meta_return(const TabularMdp& mdp, int budget);

/// Greedy-state tables of the dynamic program above, exposed so an oracle
/// policy can act with full knowledge of the task. q_by_step[t] is the
/// Q-table given `t` steps already spent in the meta-episode at episode step
/// `ep` (flattened as t * (task_horizon or budget) + ep internally).
class OracleMetaPolicy {
public:
    OracleMetaPolicy(const TabularMdp& mdp, int budget);
    int action(int state, int episode_step, int meta_step) const;
    double value() const { return value_; }

private:
    int budget_;
    int horizon_slots_;
    int num_states_;
    int num_actions_;
    std::vector<int> best_action_;  // [meta_step][episode_step][state]
    double value_ = 0.0;
};

}  // namespace rl3
