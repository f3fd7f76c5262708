#pragma once

#include <memory>
#include <optional>
#include <vector>

#include "rl3/abstraction.hpp"
#include "rl3/envs.hpp"
#include "rl3/tabular_rl.hpp"

namespace rl3 {

/// Bumped whenever any observation layout below changes, and written into
/// checkpoints so stale ones fail loudly instead of silently misreading.
constexpr int kObsLayoutVersion = 1;

/// Flat layout of the value-augmented observation:
///   [ one-hot state | advantages | state value | action counts | t_ep | t ]
/// Advantages are Q(s,.) - max_a Q(s,a), so componentwise <= 0 with at least
/// one exact 0 once the state is known. Dimension is |S| + 2k + 3.
struct AugLayout {
    int num_states = 0;
    int num_actions = 0;
    int dim() const { return num_states + 2 * num_actions + 3; }
    int one_hot() const { return 0; }
    int advantages() const { return num_states; }
    int state_value() const { return num_states + num_actions; }
    int counts() const { return num_states + num_actions + 1; }
    int episode_time() const { return num_states + 2 * num_actions + 1; }
    int meta_time() const { return num_states + 2 * num_actions + 2; }
};

/// RL2-style observation:
///   [ one-hot state | prev action one-hot | prev reward | t_ep | t ]
/// Everything mapped into [0,1]. Dimension is |S| + k + 3.
struct Rl2Layout {
    int num_states = 0;
    int num_actions = 0;
    int dim() const { return num_states + num_actions + 3; }
};

/// Policy input dimensions per algorithm. rl3 concatenates the RL2 fields
/// with the augmentation tail (advantages, value, counts); rl3_markov sees
/// only the augmentation fields, with no state or history information.
inline int rl2_obs_dim(int num_states, int num_actions) { return num_states + num_actions + 3; }
inline int rl3_obs_dim(int num_states, int num_actions) { return num_states + 3 * num_actions + 4; }
inline int markov_obs_dim(int num_actions) { return 2 * num_actions + 1; }

struct VamdpOptions {
    bool raw_q = false;           // ablation: raw Q row in the advantage slots
    bool use_true_model = false;  // substitute the true MDP (restricted to visited states)
    double laplace_coeff = kDefaultLaplaceCoeff;
    double bellman_tol = kDefaultBellmanTol;
    std::optional<AbstractionConfig> abstraction;  // the coarse variant
};

struct VamdpStepResult {
    double reward = 0.0;
    bool meta_terminated = false;
    bool episode_ended = false;
};

/// Value-augmenting wrapper: runs object-level model estimation plus value
/// iteration after every step and exposes Q-derived observation features.
/// The inner task auto-resets at episode boundaries while Q, N and the model
/// persist; everything resets together only at meta-episode boundaries.
class VamdpEnv {
public:
    VamdpEnv(const TabularMdp* mdp, TaskFamily family, int interaction_budget, uint64_t seed,
             VamdpOptions options = {});

    /// Starts a fresh meta-episode: zeroes t, t_ep, Q, N and the model.
    void reset();
    VamdpStepResult step(int action);

    /// The spec'd augmented observation (AugLayout), |S| + 2k + 3 wide.
    std::vector<double> aug_observation() const;
    /// RL2 fields followed by the augmentation tail, |S| + 3k + 4 wide.
    std::vector<double> rl3_observation() const;
    /// Augmentation fields only: advantages, value, counts. 2k + 1 wide.
    std::vector<double> markov_observation() const;

    const QTable& q() const { return q_; }
    const CountTable& counts() const { return counts_; }
    const ModelEstimate& model() const { return model_; }
    const StateAbstraction* abstraction() const { return abstraction_ ? &*abstraction_ : nullptr; }
    int t() const { return t_; }
    int episode_step() const { return env_.episode_step(); }
    int state() const { return env_.state(); }
    int budget() const { return budget_; }
    bool meta_terminated() const { return t_ >= budget_; }
    const TabularMdp& mdp() const { return *mdp_; }
    AugLayout aug_layout() const { return {mdp_->num_states, mdp_->num_actions}; }

private:
    int abstract_id(int s);
    void recompute_q();
    void write_rl2_fields(std::vector<double>& out) const;
    void write_aug_tail(std::vector<double>& out) const;

    const TabularMdp* mdp_;
    TaskFamily family_;
    int budget_;
    VamdpOptions options_;
    FamilyTraits traits_;
    Env env_;
    ModelEstimate model_;       // over abstract ids (identical to concrete without abstraction)
    QTable q_abstract_;         // value iteration output over abstract ids
    QTable q_;                  // concrete-state view used for observations
    CountTable counts_;         // concrete visit counts
    std::optional<StateAbstraction> abstraction_;
    int t_ = 0;
    int prev_action_ = -1;
    double prev_reward_ = 0.0;
    int vi_horizon_;
};

/// Plain RL2 wrapper: same inner auto-reset behavior, no object-level RL.
class Rl2Env {
public:
    Rl2Env(const TabularMdp* mdp, TaskFamily family, int interaction_budget, uint64_t seed);

    void reset();
    VamdpStepResult step(int action);
    std::vector<double> observation() const;

    int t() const { return t_; }
    int state() const { return env_.state(); }
    bool meta_terminated() const { return t_ >= budget_; }
    const TabularMdp& mdp() const { return *mdp_; }

private:
    const TabularMdp* mdp_;
    int budget_;
    FamilyTraits traits_;
    Env env_;
    int t_ = 0;
    int prev_action_ = -1;
    double prev_reward_ = 0.0;
};

}  // namespace rl3
