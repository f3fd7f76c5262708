#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "rl3/rng.hpp"
#include "rl3/tabular_mdp.hpp"

namespace rl3 {

/// Log-space Bayes posterior over Bernoulli bandit tasks from summary
/// statistics alone. `tasks[i]` holds arm success probabilities, Q the
/// per-arm mean reward, N the per-arm pull counts. Q[k]*N[k] must be integral
/// (success counts); throws otherwise. Returns normalized log-posterior.
std::vector<double> bernoulli_posterior_from_stats(const std::vector<double>& log_prior,
                                                   const std::vector<std::vector<double>>& tasks,
                                                   const std::vector<double>& q,
                                                   const std::vector<double>& n);

/// Same posterior straight from the action/reward sequence; the two must
/// agree to ~1e-12, which is the executable form of the sufficiency argument.
std::vector<double> bernoulli_posterior_from_trajectory(
    const std::vector<double>& log_prior, const std::vector<std::vector<double>>& tasks,
    const std::vector<int>& actions, const std::vector<double>& rewards);

/// Gaussian bandit log-likelihood from (Q, N, Var): the closed form carries a
/// per-arm reward-variance term, so (Q, N) alone cannot determine it.
/// Arms with N[k] == 0 contribute nothing.
double gaussian_loglik_from_stats(const std::vector<double>& mean, const std::vector<double>& stddev,
                                  const std::vector<double>& q, const std::vector<double>& n,
                                  const std::vector<double>& var);

double gaussian_loglik_from_trajectory(const std::vector<double>& mean,
                                       const std::vector<double>& stddev,
                                       const std::vector<int>& actions,
                                       const std::vector<double>& rewards);

/// Two single-arm trajectories with identical (Q, N) whose likelihoods under
/// the unit Gaussian arm with mean `mu` differ by exactly 1/sigma^2 when
/// sigma = 1: the insufficiency witness.
struct GaussianWitness {
    std::vector<double> rewards_a;  // {mu, mu}
    std::vector<double> rewards_b;  // {mu-1, mu+1}
    double q = 0.0;
    double n = 2.0;
    double var_a = 0.0;
    double var_b = 1.0;
    double loglik_a = 0.0;
    double loglik_b = 0.0;
    double loglik_gap() const { return loglik_a - loglik_b; }
};
GaussianWitness gaussian_insufficiency_witness(double mu = 1.0, double sigma = 1.0);

/// Finite-horizon optimal Q (discount 1) for a reward table on a shared
/// transition function; the building block of the uniqueness check.
std::vector<double> q_star(const std::vector<double>& transition, int num_states, int num_actions,
                           const std::vector<double>& reward, int horizon);

/// True iff the optimal Q tables under R1 and R2 (same transitions) match
/// everywhere within `tol`.
bool q_uniqueness_check(const std::vector<double>& transition, int num_states, int num_actions,
                        const std::vector<double>& reward1, const std::vector<double>& reward2,
                        int horizon, double tol = 1e-10);

struct DuplicateExperimentSpec {
    int num_mdps = 5000;
    int num_states = 3;
    int num_actions = 2;
    double alpha = 1.0;  // Dirichlet concentration for transition rows
    double beta = 1.0;   // reward stddev around mean 1
    double delta = 0.1;  // max-norm duplicate threshold
    int task_horizon = 10;
    uint64_t seed = 0;
    int threads = 1;
};

/// Q* tables (flattened, one row per sampled MDP) for the duplicate scan.
std::vector<std::vector<double>> sample_q_tables(const DuplicateExperimentSpec& spec);

/// Number of unordered pairs with max-norm distance below delta. Sorts on the
/// first table entry and scans a sliding window, so the full quadratic pair
/// set is touched only when many tables coincide on that entry.
int64_t count_duplicate_pairs(const std::vector<std::vector<double>>& tables, double delta);

struct DuplicateReport {
    DuplicateExperimentSpec spec;
    int64_t duplicate_pairs = 0;
    int64_t total_pairs = 0;  // n(n-1)/2 unordered pairs
    double fraction = 0.0;
    std::string text() const;
};
DuplicateReport duplicate_probability(const DuplicateExperimentSpec& spec);

/// Fraction of delta-duplicate Q-estimate pairs at each rollout step under a
/// shared uniform-random policy (the time-indexed companion to the Q* scan).
std::vector<double> duplicate_fraction_over_time(const DuplicateExperimentSpec& spec, int steps,
                                                 int stride = 5);

struct ClassifierExperimentSpec {
    int num_tasks = 100;
    int steps = 50;
    int train_rollouts = 4;
    int test_rollouts = 2;
    int snapshot_stride = 1;
    int hidden = 64;
    int epochs = 200;
    double learning_rate = 3e-4;
    double alpha = 0.1;     // Dirichlet concentration
    double reward_std = 0.5;  // mean-reward spread around 1
    uint64_t seed = 0;
    int threads = 1;
};

struct ClassifierCurve {
    std::vector<int> timesteps;
    std::vector<double> accuracy;  // held-out accuracy per snapshot
    std::string metadata;          // parameters and optimizer settings
    std::string csv() const;
};

/// Trains a one-hidden-layer classifier to identify the task from Q-estimate
/// snapshots, one fit per recorded timestep, and reports held-out accuracy.
ClassifierCurve task_classifier_experiment(const ClassifierExperimentSpec& spec);

}  // namespace rl3
