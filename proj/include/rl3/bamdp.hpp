#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "rl3/rng.hpp"
#include "rl3/tabular_mdp.hpp"

namespace rl3 {

/// Probability weights over a fixed finite task set.
struct Belief {
    std::vector<double> weights;

    void normalize();
    bool valid(double tol = 1e-12) const;
    static Belief uniform(int n) {
        Belief b;
        b.weights.assign(n, 1.0 / n);
        return b;
    }
};

/// Task sets must share state/action spaces and use discrete reward support
/// (deterministic or Bernoulli); Gaussian rewards are excluded here and
/// handled analytically elsewhere.
struct BamdpProblem {
    std::vector<TabularMdp> tasks;
    Belief prior;
    int horizon = 0;
    double gamma = 1.0;

    /// Enforces the exact-solver size limits (<=4 tasks, <=4 states,
    /// horizon <=6) and shape consistency; throws on violation.
    void validate() const;
};

/// Bayes update after observing (s, a, r, s'). Throws when the observation
/// has zero likelihood under every task.
Belief belief_update(const std::vector<TabularMdp>& tasks, const Belief& belief, int s, int a,
                     double r, int s_next);

struct BamdpNode {
    int state = 0;
    int depth = 0;
    Belief belief;
    double value = 0.0;
    int best_action = 0;
    std::vector<int> greedy_actions;  // all actions within 1e-12 of the max
    // Per action: expected immediate reward and (probability, child node) edges.
    struct Edge {
        double prob = 0.0;
        int child = -1;  // -1 for leaves (horizon or terminal)
    };
    std::vector<double> action_reward;
    std::vector<std::vector<Edge>> action_edges;
};

/// Exact solution of the belief MDP over the reachable tree. Nodes with
/// matching (state, depth) and beliefs equal to within 1e-12 are merged.
struct BamdpSolution {
    std::vector<BamdpNode> nodes;
    int root = 0;
    double gamma = 1.0;
    double root_value() const { return nodes[root].value; }

    /// Recomputes a node's value from its stored children; the solver
    /// invariant is |recompute - stored| <= 1e-12 at every node.
    double recompute_from_children(int node_index) const;
};

BamdpSolution solve_bamdp(const BamdpProblem& problem);

/// Numeric verification over one solved instance: the optimistic object-level
/// bound at every node, and epsilon-equivalence at nodes whose belief support
/// has collapsed onto tasks with matching optimal Q tables.
struct BoundsReport {
    struct NodeRow {
        int node = 0;
        int state = 0;
        int depth = 0;
        double meta_value = 0.0;
        double object_bound = 0.0;  // max_i V*_i at the remaining horizon
        double bound_gap = 0.0;     // object_bound - meta_value
        bool collapsed = false;     // support tasks share Q* at this horizon
        double collapse_gap = 0.0;  // |max_a Q_i - meta_value| when collapsed
        std::vector<double> residuals;  // meta_value - V*_i per task
    };
    std::vector<NodeRow> rows;
    int bound_violations = 0;      // object_bound < meta_value - 1e-9
    int collapsed_nodes = 0;
    int collapse_violations = 0;   // collapse_gap > epsilon at a collapsed node
    double worst_bound_gap = 0.0;  // most negative gap seen
    double epsilon = 1e-9;

    std::string summary() const;
    std::string csv() const;
};

BoundsReport verify_bounds(const BamdpProblem& problem, const BamdpSolution& solution,
                           double epsilon = 1e-9);

/// Draws an instance within the exact-solver limits: shared state/action
/// shapes, rewards on a small shared discrete support so beliefs do not
/// collapse after a single observation.
BamdpProblem random_admissible_instance(Rng& rng);

}  // namespace rl3
