#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "rl3/util.hpp"

namespace rl3 {

/// How observed step rewards are produced from the reward model.
enum class RewardKind : uint8_t {
    deterministic,     // r = mean_reward(s,a)
    gaussian_unit,     // r ~ N(mean_reward(s,a), 1)
    bernoulli,         // r ~ Bernoulli(mean_reward(s,a)), values {0,1}
    next_state_table,  // r = state_reward[s'] (tile-entry rewards)
};

/// Ground-truth finite MDP. `mean_reward` always holds E[r | s,a], whatever
/// the sampling rule, so planners can use it directly.
struct TabularMdp {
    int num_states = 0;
    int num_actions = 0;
    std::vector<double> transition;    // [s][a][s'] flattened, rows sum to 1
    std::vector<double> mean_reward;   // [s][a]
    RewardKind reward_kind = RewardKind::deterministic;
    std::vector<double> state_reward;  // per-state entry reward (next_state_table only)
    std::vector<double> start_dist;    // [s]
    int task_horizon = 0;              // 0 = unbounded, episodes end only at terminals
    std::vector<uint8_t> terminal;     // [s]

    double trans(int s, int a, int s2) const {
        return transition[(static_cast<size_t>(s) * num_actions + a) * num_states + s2];
    }
    double& trans_ref(int s, int a, int s2) {
        return transition[(static_cast<size_t>(s) * num_actions + a) * num_states + s2];
    }
    const double* trans_row(int s, int a) const {
        return &transition[(static_cast<size_t>(s) * num_actions + a) * num_states];
    }
    double reward(int s, int a) const { return mean_reward[static_cast<size_t>(s) * num_actions + a]; }
    double& reward_ref(int s, int a) { return mean_reward[static_cast<size_t>(s) * num_actions + a]; }
    bool is_terminal(int s) const { return terminal[s] != 0; }

    void allocate() {
        transition.assign(static_cast<size_t>(num_states) * num_actions * num_states, 0.0);
        mean_reward.assign(static_cast<size_t>(num_states) * num_actions, 0.0);
        start_dist.assign(num_states, 0.0);
        terminal.assign(num_states, 0);
    }

    /// Checks the distribution invariants; returns false and fills `why` on violation.
    bool validate(std::string* why = nullptr) const;

    uint64_t content_hash() const {
        Fnv1a h;
        h.add_i32(num_states);
        h.add_i32(num_actions);
        h.add_i32(task_horizon);
        h.add_i32(static_cast<int32_t>(reward_kind));
        h.add_f64s(transition);
        h.add_f64s(mean_reward);
        h.add_f64s(state_reward);
        h.add_f64s(start_dist);
        for (auto t : terminal) h.add_i32(t);
        return h.value();
    }
};

}  // namespace rl3
