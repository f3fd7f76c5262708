#include "rl3/vamdp.hpp"

#include <algorithm>
#include <cmath>

namespace rl3 {

namespace {

double clamp01(double x) { return std::clamp(x, 0.0, 1.0); }

}  // namespace

VamdpEnv::VamdpEnv(const TabularMdp* mdp, TaskFamily family, int interaction_budget, uint64_t seed,
                   VamdpOptions options)
    : mdp_(mdp),
      family_(family),
      budget_(interaction_budget),
      options_(std::move(options)),
      traits_(family_traits(family, mdp->task_horizon, interaction_budget)),
      env_(mdp, seed) {
    if (interaction_budget < 1) fail("interaction budget must be at least 1");
    vi_horizon_ = mdp->task_horizon > 0 ? mdp->task_horizon : interaction_budget;
    reset();
}

void VamdpEnv::reset() {
    t_ = 0;
    prev_action_ = -1;
    prev_reward_ = 0.0;
    model_ = ModelEstimate(mdp_->num_states, mdp_->num_actions, options_.laplace_coeff);
    q_abstract_.reset(mdp_->num_states, mdp_->num_actions);
    q_.reset(mdp_->num_states, mdp_->num_actions);
    counts_.reset(mdp_->num_states, mdp_->num_actions);
    if (options_.abstraction) {
        abstraction_.emplace(mdp_->num_states, options_.abstraction->max_cluster_size,
                             options_.abstraction->radius, options_.abstraction->distance);
    } else {
        abstraction_.reset();
    }
    env_.reset();
}

int VamdpEnv::abstract_id(int s) { return abstraction_ ? abstraction_->assign(s) : s; }

void VamdpEnv::recompute_q() {
    if (options_.use_true_model) {
        std::vector<int> visited = model_.visited_states();
        q_abstract_ = value_iteration_true_restricted(*mdp_, visited, vi_horizon_,
                                                      options_.bellman_tol);
    } else {
        q_abstract_ = value_iteration(model_, vi_horizon_, options_.bellman_tol);
    }
    if (!abstraction_) {
        q_ = q_abstract_;
        return;
    }
    // Concrete states read the Q row of their abstract state.
    q_.reset(mdp_->num_states, mdp_->num_actions);
    for (int s : abstraction_->visit_order()) {
        const int id = abstraction_->id_of(s);
        q_.known[s] = q_abstract_.known[id];
        for (int a = 0; a < mdp_->num_actions; ++a)
            q_.value_ref(s, a) = q_abstract_.value(id, a);
    }
}

VamdpStepResult VamdpEnv::step(int action) {
    if (meta_terminated()) fail("vamdp step past the interaction budget");
    const int s = env_.state();
    const StepResult inner = env_.step(action);

    t_ += 1;
    counts_.increment(s, action);
    const int abs_s = abstract_id(s);
    const int abs_next = abstract_id(inner.next_state);
    model_.update(abs_s, action, inner.reward, abs_next, inner.terminal);
    recompute_q();

    VamdpStepResult result;
    result.reward = inner.reward;
    result.episode_ended = inner.terminated();
    if (inner.terminated()) env_.reset();  // Q, N and the model persist
    prev_action_ = action;
    prev_reward_ = inner.reward;
    result.meta_terminated = meta_terminated();
    return result;
}

std::vector<double> VamdpEnv::aug_observation() const {
    const AugLayout lay = aug_layout();
    std::vector<double> obs(lay.dim(), 0.0);
    const int s = env_.state();
    const int k = mdp_->num_actions;
    obs[lay.one_hot() + s] = 1.0;

    const double scale = traits_.value_scale;
    double vmax = 0.0;
    if (q_.known[s]) {
        vmax = q_.state_value(s);
        for (int a = 0; a < k; ++a) {
            const double feature = options_.raw_q ? q_.value(s, a) : q_.value(s, a) - vmax;
            obs[lay.advantages() + a] = feature / scale;
        }
        obs[lay.state_value()] = vmax / scale;
    }
    for (int a = 0; a < k; ++a)
        obs[lay.counts() + a] = static_cast<double>(counts_.count(s, a)) / (1.0 + t_);
    obs[lay.episode_time()] =
        clamp01(static_cast<double>(env_.episode_step()) / traits_.episode_time_denom);
    obs[lay.meta_time()] = clamp01(static_cast<double>(t_) / budget_);
    return obs;
}

void VamdpEnv::write_rl2_fields(std::vector<double>& out) const {
    const int S = mdp_->num_states;
    const int k = mdp_->num_actions;
    out[env_.state()] = 1.0;
    if (prev_action_ >= 0) out[S + prev_action_] = 1.0;
    out[S + k] = clamp01((prev_reward_ - traits_.reward_lo) / (traits_.reward_hi - traits_.reward_lo));
    out[S + k + 1] = clamp01(static_cast<double>(env_.episode_step()) / traits_.episode_time_denom);
    out[S + k + 2] = clamp01(static_cast<double>(t_) / budget_);
}

void VamdpEnv::write_aug_tail(std::vector<double>& out) const {
    const int s = env_.state();
    const int k = mdp_->num_actions;
    const size_t base = out.size() - static_cast<size_t>(2 * k + 1);
    const double scale = traits_.value_scale;
    if (q_.known[s]) {
        const double vmax = q_.state_value(s);
        for (int a = 0; a < k; ++a) {
            const double feature = options_.raw_q ? q_.value(s, a) : q_.value(s, a) - vmax;
            out[base + a] = feature / scale;
        }
        out[base + k] = vmax / scale;
    }
    for (int a = 0; a < k; ++a)
        out[base + k + 1 + a] = static_cast<double>(counts_.count(s, a)) / (1.0 + t_);
}

std::vector<double> VamdpEnv::rl3_observation() const {
    const int S = mdp_->num_states;
    const int k = mdp_->num_actions;
    std::vector<double> obs(rl3_obs_dim(S, k), 0.0);
    write_rl2_fields(obs);
    write_aug_tail(obs);
    return obs;
}

std::vector<double> VamdpEnv::markov_observation() const {
    const int k = mdp_->num_actions;
    std::vector<double> obs(markov_obs_dim(k), 0.0);
    write_aug_tail(obs);
    return obs;
}

Rl2Env::Rl2Env(const TabularMdp* mdp, TaskFamily family, int interaction_budget, uint64_t seed)
    : mdp_(mdp),
      budget_(interaction_budget),
      traits_(family_traits(family, mdp->task_horizon, interaction_budget)),
      env_(mdp, seed) {
    if (interaction_budget < 1) fail("interaction budget must be at least 1");
    reset();
}

void Rl2Env::reset() {
    t_ = 0;
    prev_action_ = -1;
    prev_reward_ = 0.0;
    env_.reset();
}

VamdpStepResult Rl2Env::step(int action) {
    if (meta_terminated()) fail("rl2 step past the interaction budget");
    const StepResult inner = env_.step(action);
    t_ += 1;
    VamdpStepResult result;
    result.reward = inner.reward;
    result.episode_ended = inner.terminated();
    if (inner.terminated()) env_.reset();
    prev_action_ = action;
    prev_reward_ = inner.reward;
    result.meta_terminated = meta_terminated();
    return result;
}

std::vector<double> Rl2Env::observation() const {
    const int S = mdp_->num_states;
    const int k = mdp_->num_actions;
    std::vector<double> obs(rl2_obs_dim(S, k), 0.0);
    obs[env_.state()] = 1.0;
    if (prev_action_ >= 0) obs[S + prev_action_] = 1.0;
    obs[S + k] = clamp01((prev_reward_ - traits_.reward_lo) / (traits_.reward_hi - traits_.reward_lo));
    obs[S + k + 1] = clamp01(static_cast<double>(env_.episode_step()) / traits_.episode_time_denom);
    obs[S + k + 2] = clamp01(static_cast<double>(t_) / budget_);
    return obs;
}

}  // namespace rl3
