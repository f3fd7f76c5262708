#include "rl3/bamdp.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "rl3/tabular_rl.hpp"

namespace rl3 {

namespace {

constexpr double kMergeTol = 1e-12;
constexpr double kGreedyTol = 1e-12;

// Probability of observing reward r for (s,a) under one task.
double reward_likelihood(const TabularMdp& task, int s, int a, double r) {
    switch (task.reward_kind) {
        case RewardKind::deterministic:
            return std::abs(r - task.reward(s, a)) <= kMergeTol ? 1.0 : 0.0;
        case RewardKind::bernoulli: {
            const double p = task.reward(s, a);
            if (r == 1.0) return p;
            if (r == 0.0) return 1.0 - p;
            return 0.0;
        }
        default: fail("belief updates need discrete reward support");
    }
}

// Distinct observable reward values for (s,a) across the task set.
std::vector<double> reward_support(const std::vector<TabularMdp>& tasks, int s, int a) {
    std::vector<double> support;
    for (const auto& task : tasks) {
        if (task.reward_kind == RewardKind::bernoulli) {
            support.push_back(0.0);
            support.push_back(1.0);
        } else {
            support.push_back(task.reward(s, a));
        }
    }
    std::sort(support.begin(), support.end());
    support.erase(std::unique(support.begin(), support.end()), support.end());
    return support;
}

struct NodeKey {
    int state;
    int depth;
    std::vector<int64_t> quantized;  // weights rounded to the merge grid

    bool operator<(const NodeKey& other) const {
        if (state != other.state) return state < other.state;
        if (depth != other.depth) return depth < other.depth;
        return quantized < other.quantized;
    }
};

NodeKey make_key(int state, int depth, const Belief& belief) {
    NodeKey key{state, depth, {}};
    key.quantized.reserve(belief.weights.size());
    for (double w : belief.weights)
        key.quantized.push_back(static_cast<int64_t>(std::llround(w / kMergeTol)));
    return key;
}

class Solver {
public:
    explicit Solver(const BamdpProblem& problem) : p_(problem) {}

    BamdpSolution run() {
        Belief prior = p_.prior;
        prior.normalize();
        int start_state = 0;
        // Deterministic start: all tasks share the start distribution's
        // support in our admissible instances; expand every start state.
        // The root is defined for the (single) most likely start state when
        // the distribution is degenerate, which it is for all our families.
        double best = -1.0;
        for (int s = 0; s < p_.tasks[0].num_states; ++s) {
            if (p_.tasks[0].start_dist[s] > best) {
                best = p_.tasks[0].start_dist[s];
                start_state = s;
            }
        }
        solution_.root = expand(start_state, 0, prior);
        return std::move(solution_);
    }

private:
    int expand(int state, int depth, const Belief& belief) {
        const NodeKey key = make_key(state, depth, belief);
        auto it = index_.find(key);
        if (it != index_.end()) return it->second;

        const int id = static_cast<int>(solution_.nodes.size());
        index_[key] = id;
        solution_.nodes.push_back({});
        {
            BamdpNode node;
            node.state = state;
            node.depth = depth;
            node.belief = belief;
            solution_.nodes[id] = std::move(node);
        }

        const int A = p_.tasks[0].num_actions;
        const int S = p_.tasks[0].num_states;
        std::vector<double> action_values(A, 0.0);
        std::vector<double> action_reward(A, 0.0);
        std::vector<std::vector<BamdpNode::Edge>> action_edges(A);

        const bool leaf = depth >= p_.horizon || p_.tasks[0].is_terminal(state);
        if (!leaf) {
            for (int a = 0; a < A; ++a) {
                double immediate = 0.0;
                for (size_t i = 0; i < p_.tasks.size(); ++i)
                    immediate += belief.weights[i] * p_.tasks[i].reward(state, a);
                action_reward[a] = immediate;

                double future = 0.0;
                for (double r : reward_support(p_.tasks, state, a)) {
                    for (int s2 = 0; s2 < S; ++s2) {
                        double prob = 0.0;
                        Belief next;
                        next.weights.assign(p_.tasks.size(), 0.0);
                        for (size_t i = 0; i < p_.tasks.size(); ++i) {
                            const double li = belief.weights[i] *
                                              reward_likelihood(p_.tasks[i], state, a, r) *
                                              p_.tasks[i].trans(state, a, s2);
                            next.weights[i] = li;
                            prob += li;
                        }
                        if (prob <= 0.0) continue;
                        for (auto& w : next.weights) w /= prob;
                        const int child = expand(s2, depth + 1, next);
                        action_edges[a].push_back({prob, child});
                        future += prob * solution_.nodes[child].value;
                    }
                }
                action_values[a] = immediate + p_.gamma * future;
            }
        }

        BamdpNode& node = solution_.nodes[id];
        node.action_reward = std::move(action_reward);
        node.action_edges = std::move(action_edges);
        if (leaf) {
            node.value = 0.0;
            node.best_action = 0;
        } else {
            node.best_action = 0;
            for (int a = 1; a < A; ++a)
                if (action_values[a] > action_values[node.best_action]) node.best_action = a;
            node.value = action_values[node.best_action];
            for (int a = 0; a < A; ++a)
                if (action_values[a] >= node.value - kGreedyTol) node.greedy_actions.push_back(a);
        }
        return id;
    }

    const BamdpProblem& p_;
    BamdpSolution solution_;
    std::map<NodeKey, int> index_;
};

}  // namespace

void Belief::normalize() {
    double total = 0.0;
    for (double w : weights) total += w;
    if (total <= 0.0) fail("belief has no mass");
    for (auto& w : weights) w /= total;
}

bool Belief::valid(double tol) const {
    double total = 0.0;
    for (double w : weights) {
        if (w < 0.0) return false;
        total += w;
    }
    return std::abs(total - 1.0) <= tol;
}

void BamdpProblem::validate() const {
    if (tasks.empty()) fail("empty task set");
    if (tasks.size() > 4) fail("exact solver limit: at most 4 tasks");
    const int S = tasks[0].num_states;
    const int A = tasks[0].num_actions;
    if (S > 4) fail("exact solver limit: at most 4 states");
    if (horizon < 1 || horizon > 6) fail("exact solver limit: horizon in [1,6]");
    if (prior.weights.size() != tasks.size()) fail("prior size does not match task set");
    if (!prior.valid(1e-9)) fail("prior is not a probability vector");
    for (const auto& task : tasks) {
        if (task.num_states != S || task.num_actions != A)
            fail("tasks must share state and action spaces");
        if (task.reward_kind != RewardKind::deterministic &&
            task.reward_kind != RewardKind::bernoulli)
            fail("belief updates need discrete reward support");
        std::string why;
        if (!task.validate(&why)) fail("invalid task: " + why);
    }
    for (int s = 0; s < S; ++s) {
        const bool t0 = tasks[0].is_terminal(s);
        for (const auto& task : tasks)
            if (task.is_terminal(s) != t0) fail("tasks must agree on terminal states");
    }
}

Belief belief_update(const std::vector<TabularMdp>& tasks, const Belief& belief, int s, int a,
                     double r, int s_next) {
    Belief next;
    next.weights.assign(tasks.size(), 0.0);
    double total = 0.0;
    for (size_t i = 0; i < tasks.size(); ++i) {
        const double li =
            belief.weights[i] * reward_likelihood(tasks[i], s, a, r) * tasks[i].trans(s, a, s_next);
        next.weights[i] = li;
        total += li;
    }
    if (total <= 0.0) fail("observation impossible under every task in the belief support");
    for (auto& w : next.weights) w /= total;
    return next;
}

double BamdpSolution::recompute_from_children(int node_index) const {
    const BamdpNode& node = nodes[node_index];
    const bool leaf = std::all_of(node.action_edges.begin(), node.action_edges.end(),
                                  [](const auto& e) { return e.empty(); });
    if (leaf) return node.value;
    double best = -std::numeric_limits<double>::infinity();
    for (size_t a = 0; a < node.action_edges.size(); ++a) {
        double future = 0.0;
        for (const auto& edge : node.action_edges[a]) future += edge.prob * nodes[edge.child].value;
        best = std::max(best, node.action_reward[a] + gamma * future);
    }
    return best;
}

BamdpSolution solve_bamdp(const BamdpProblem& problem) {
    problem.validate();
    Solver solver(problem);
    BamdpSolution solution = solver.run();
    solution.gamma = problem.gamma;
    return solution;
}

BoundsReport verify_bounds(const BamdpProblem& problem, const BamdpSolution& solution,
                           double epsilon) {
    BoundsReport report;
    report.epsilon = epsilon;
    const int n_tasks = static_cast<int>(problem.tasks.size());

    // Optimal object-level tables per task for every remaining horizon.
    std::vector<std::vector<OracleSolution>> by_horizon(problem.horizon + 1);
    for (int h = 0; h <= problem.horizon; ++h) {
        by_horizon[h].reserve(n_tasks);
        for (const auto& task : problem.tasks) by_horizon[h].push_back(oracle_solve(task, h));
    }

    for (size_t idx = 0; idx < solution.nodes.size(); ++idx) {
        const BamdpNode& node = solution.nodes[idx];
        const int remaining = problem.horizon - node.depth;
        BoundsReport::NodeRow row;
        row.node = static_cast<int>(idx);
        row.state = node.state;
        row.depth = node.depth;
        row.meta_value = node.value;

        double vmax = -std::numeric_limits<double>::infinity();
        row.residuals.resize(n_tasks);
        for (int i = 0; i < n_tasks; ++i) {
            double vi = 0.0;
            if (remaining > 0 && !problem.tasks[i].is_terminal(node.state))
                vi = by_horizon[remaining][i].q.state_value(node.state);
            vmax = std::max(vmax, vi);
            row.residuals[i] = node.value - vi;
        }
        row.object_bound = vmax;
        row.bound_gap = vmax - node.value;
        if (row.bound_gap < -1e-9) report.bound_violations += 1;
        report.worst_bound_gap = std::min(report.worst_bound_gap, row.bound_gap);

        // Collapse case: support restricted to tasks with matching Q tables.
        std::vector<int> support;
        for (int i = 0; i < n_tasks; ++i)
            if (node.belief.weights[i] > 1e-12) support.push_back(i);
        bool collapsed = !support.empty() && remaining > 0;
        for (size_t u = 1; u < support.size() && collapsed; ++u) {
            const auto& qa = by_horizon[remaining][support[0]].q;
            const auto& qb = by_horizon[remaining][support[u]].q;
            for (size_t j = 0; j < qa.q.size(); ++j)
                if (std::abs(qa.q[j] - qb.q[j]) > 1e-12) {
                    collapsed = false;
                    break;
                }
        }
        row.collapsed = collapsed;
        if (collapsed) {
            report.collapsed_nodes += 1;
            double vi = 0.0;
            if (!problem.tasks[support[0]].is_terminal(node.state))
                vi = by_horizon[remaining][support[0]].q.state_value(node.state);
            row.collapse_gap = std::abs(vi - node.value);
            if (row.collapse_gap > epsilon) report.collapse_violations += 1;
        }
        report.rows.push_back(std::move(row));
    }
    return report;
}

std::string BoundsReport::summary() const {
    std::ostringstream out;
    out << "bamdp bounds report: " << rows.size() << " nodes\n";
    out << "  optimistic bound violations: " << bound_violations
        << " (worst gap " << format_double_short(worst_bound_gap) << ")\n";
    out << "  collapsed-support nodes: " << collapsed_nodes << ", epsilon-equivalence violations ("
        << format_double_short(epsilon) << "): " << collapse_violations << "\n";
    return out.str();
}

std::string BoundsReport::csv() const {
    std::string out = "node,state,depth,meta_value,object_bound,bound_gap,collapsed,collapse_gap\n";
    for (const auto& row : rows) {
        out += std::to_string(row.node) + "," + std::to_string(row.state) + "," +
               std::to_string(row.depth) + "," + format_double(row.meta_value) + "," +
               format_double(row.object_bound) + "," + format_double(row.bound_gap) + "," +
               (row.collapsed ? "1" : "0") + "," + format_double(row.collapse_gap) + "\n";
    }
    return out;
}

BamdpProblem random_admissible_instance(Rng& rng) {
    BamdpProblem problem;
    const int n_tasks = 2 + rng.uniform_index(3);  // 2..4
    const int S = 2 + rng.uniform_index(3);        // 2..4
    const int A = 2 + rng.uniform_index(2);        // 2..3
    problem.horizon = 2 + rng.uniform_index(3);    // 2..4
    problem.gamma = 1.0;

    // Shared discrete reward support so observations only partially identify
    // the task.
    const double support[3] = {0.0, 0.5, 1.0};
    for (int i = 0; i < n_tasks; ++i) {
        TabularMdp task;
        task.num_states = S;
        task.num_actions = A;
        task.task_horizon = problem.horizon;
        task.reward_kind = RewardKind::deterministic;
        task.allocate();
        task.start_dist[0] = 1.0;
        std::vector<double> row(S);
        for (int s = 0; s < S; ++s) {
            for (int a = 0; a < A; ++a) {
                task.reward_ref(s, a) = support[rng.uniform_index(3)];
                rng.dirichlet(1.0, row);
                for (int s2 = 0; s2 < S; ++s2) task.trans_ref(s, a, s2) = row[s2];
            }
        }
        problem.tasks.push_back(std::move(task));
    }
    // Occasionally duplicate a task so collapsed beliefs with multi-task
    // support show up too.
    if (n_tasks >= 2 && rng.bernoulli(0.25)) problem.tasks[1] = problem.tasks[0];

    Belief prior;
    prior.weights.resize(n_tasks);
    for (auto& w : prior.weights) w = 0.1 + rng.uniform01();
    prior.normalize();
    problem.prior = prior;
    return problem;
}

}  // namespace rl3
