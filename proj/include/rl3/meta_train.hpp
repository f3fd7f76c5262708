#pragma once

#include <functional>
#include <optional>
#include <vector>

#include "rl3/seqmodel.hpp"
#include "rl3/vamdp.hpp"

namespace rl3 {

enum class Algorithm : uint8_t { rl2, rl3, rl3_coarse, rl3_markov };

std::string algorithm_name(Algorithm a);
Algorithm algorithm_from_name(const std::string& name);

struct PpoConfig {
    double learning_rate = 3e-4;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-7;
    double critic_weight_decay = 1e-2;
    int batch_size = 32768;     // timesteps collected per iteration
    int minibatch_size = 4096;  // timesteps per optimizer step
    int epochs = 8;
    double clip = 0.2;
    double max_kl = 0.01;
    double entropy_coeff = 0.01;
    // Linear decay target; entropy_coeff is used as a constant when negative.
    double entropy_coeff_final = -1.0;
    double gamma = 0.99;
    double gae_lambda = 0.3;
    double value_loss_coeff = 0.5;
    bool normalize_advantages = true;
    int threads = 2;

    /// Sequences are never split, so env and minibatch counts come from
    /// rounding the timestep budgets to whole meta-episodes.
    int num_envs(int budget) const {
        return std::max(1, (batch_size + budget / 2) / budget);
    }
    int minibatch_sequences(int budget) const {
        return std::max(1, (minibatch_size + budget / 2) / budget);
    }
    void validate() const;
};

/// One meta-episode of experience: H timesteps against a single task.
struct MetaEpisodeBuffer {
    uint64_t task_seed = 0;
    int obs_dim = 0;
    std::vector<double> observations;  // [H, obs_dim]
    std::vector<int> actions;          // [H]
    std::vector<double> rewards;       // [H]
    std::vector<double> log_probs;     // [H]
    std::vector<double> values;        // [H]
    std::vector<uint8_t> done;         // [H], 1 only at the meta-episode end
    std::vector<double> advantages;    // [H]
    std::vector<double> returns;       // [H]

    int length() const { return static_cast<int>(actions.size()); }
    double reward_sum() const {
        double s = 0.0;
        for (double r : rewards) s += r;
        return s;
    }
};

/// Generalized advantage estimation over the buffer as one episode: inner
/// task resets do not cut the return, only the meta-episode end does, with a
/// terminal bootstrap value of 0.
void compute_gae(MetaEpisodeBuffer& buffer, double gamma, double lambda);

/// Uniform stepper over the wrapper appropriate for each algorithm.
class RolloutEnv {
public:
    RolloutEnv(Algorithm algorithm, const TabularMdp* mdp, TaskFamily family, int budget,
               uint64_t env_seed, const VamdpOptions& options);

    std::vector<double> observation() const;
    VamdpStepResult step(int action);
    int obs_dim() const;
    int num_actions() const { return mdp_->num_actions; }
    const VamdpEnv* vamdp() const { return vamdp_ ? &*vamdp_ : nullptr; }

private:
    Algorithm algorithm_;
    const TabularMdp* mdp_;
    std::optional<VamdpEnv> vamdp_;
    std::optional<Rl2Env> rl2_;
};

struct RolloutRequest {
    Algorithm algorithm = Algorithm::rl3;
    TaskFamily family = TaskFamily::bandits;
    int budget = 0;
    int n_envs = 0;
    /// Deterministic per index; faults are rethrown with the task seed attached.
    std::function<GeneratedTask(int)> make_task;
    uint64_t seed_root = 0;  // action and env stepping streams derive from this
    VamdpOptions vamdp_options;
    int threads = 1;
    bool greedy = false;  // argmax instead of sampling, for determinism checks
};

/// Rolls every environment for exactly `budget` steps under the actor's
/// categorical outputs, recording critic values along the way. Results are
/// ordered by environment index and independent of the thread count.
template <class Model>
std::vector<MetaEpisodeBuffer> collect_rollouts(const Model& actor, const Model& critic,
                                                const RolloutRequest& request);

struct PpoStats {
    double mean_return = 0.0;  // mean of per-buffer reward sums
    double policy_loss = 0.0;
    double value_loss = 0.0;
    double entropy = 0.0;
    double approx_kl = 0.0;  // full-batch estimate where optimization stopped
    double entropy_coeff_used = 0.0;
    int epochs_run = 0;
    int minibatches_run = 0;
    bool kl_early_stop = false;
};

/// Clipped-surrogate PPO over whole-sequence minibatches with entropy bonus,
/// per-minibatch advantage normalization and a KL trip-wire: optimization
/// stops once the running KL(old||new) estimate exceeds max_kl (the
/// triggering minibatch keeps its update). Throws on non-finite losses with
/// the offending minibatch description.
template <class Model>
PpoStats ppo_update(Model& actor, Model& critic, AdamOptimizer& actor_opt,
                    AdamOptimizer& critic_opt, std::vector<MetaEpisodeBuffer>& batch,
                    const PpoConfig& config, double entropy_coeff, Rng& shuffle_rng);

}  // namespace rl3
