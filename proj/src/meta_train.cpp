#include "rl3/meta_train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace rl3 {

namespace {

constexpr uint64_t kActionStreamTag = 0x61637431;
constexpr uint64_t kEnvStreamTag = 0x656e7631;
constexpr int kGradChunks = 16;  // fixed so reductions ignore the thread count

}  // namespace

std::string algorithm_name(Algorithm a) {
    switch (a) {
        case Algorithm::rl2: return "rl2";
        case Algorithm::rl3: return "rl3";
        case Algorithm::rl3_coarse: return "rl3_coarse";
        case Algorithm::rl3_markov: return "rl3_markov";
    }
    return "?";
}

Algorithm algorithm_from_name(const std::string& name) {
    if (name == "rl2") return Algorithm::rl2;
    if (name == "rl3") return Algorithm::rl3;
    if (name == "rl3_coarse") return Algorithm::rl3_coarse;
    if (name == "rl3_markov") return Algorithm::rl3_markov;
    fail("unknown algorithm: " + name);
}

void PpoConfig::validate() const {
    if (learning_rate <= 0.0) fail("learning rate must be positive");
    if (batch_size < minibatch_size) fail("batch size smaller than minibatch size");
    if (epochs < 1) fail("need at least one epoch");
    if (clip <= 0.0 || max_kl <= 0.0) fail("clip and max_kl must be positive");
    if (gamma < 0.0 || gamma > 1.0 || gae_lambda < 0.0 || gae_lambda > 1.0)
        fail("gamma and lambda must lie in [0,1]");
}

void compute_gae(MetaEpisodeBuffer& buffer, double gamma, double lambda) {
    const int T = buffer.length();
    buffer.advantages.assign(T, 0.0);
    buffer.returns.assign(T, 0.0);
    double gae = 0.0;
    for (int t = T - 1; t >= 0; --t) {
        const double next_value = t + 1 < T ? buffer.values[t + 1] : 0.0;
        const double delta = buffer.rewards[t] + gamma * next_value - buffer.values[t];
        gae = delta + gamma * lambda * gae;
        buffer.advantages[t] = gae;
        buffer.returns[t] = gae + buffer.values[t];
    }
}

RolloutEnv::RolloutEnv(Algorithm algorithm, const TabularMdp* mdp, TaskFamily family, int budget,
                       uint64_t env_seed, const VamdpOptions& options)
    : algorithm_(algorithm), mdp_(mdp) {
    if (algorithm == Algorithm::rl2) {
        rl2_.emplace(mdp, family, budget, env_seed);
    } else {
        VamdpOptions opt = options;
        if (algorithm != Algorithm::rl3_coarse) opt.abstraction.reset();
        vamdp_.emplace(mdp, family, budget, env_seed, std::move(opt));
    }
}

std::vector<double> RolloutEnv::observation() const {
    switch (algorithm_) {
        case Algorithm::rl2: return rl2_->observation();
        case Algorithm::rl3:
        case Algorithm::rl3_coarse: return vamdp_->rl3_observation();
        case Algorithm::rl3_markov: return vamdp_->markov_observation();
    }
    fail("bad algorithm");
}

VamdpStepResult RolloutEnv::step(int action) {
    return algorithm_ == Algorithm::rl2 ? rl2_->step(action) : vamdp_->step(action);
}

int RolloutEnv::obs_dim() const {
    switch (algorithm_) {
        case Algorithm::rl2: return rl2_obs_dim(mdp_->num_states, mdp_->num_actions);
        case Algorithm::rl3:
        case Algorithm::rl3_coarse: return rl3_obs_dim(mdp_->num_states, mdp_->num_actions);
        case Algorithm::rl3_markov: return markov_obs_dim(mdp_->num_actions);
    }
    fail("bad algorithm");
}

template <class Model>
std::vector<MetaEpisodeBuffer> collect_rollouts(const Model& actor, const Model& critic,
                                                const RolloutRequest& request) {
    if (request.n_envs < 1) fail("need at least one rollout environment");
    if (request.budget > actor.max_context()) fail("interaction budget exceeds model context");

    std::vector<MetaEpisodeBuffer> buffers(request.n_envs);
    parallel_for(request.n_envs, request.threads, [&](int env_index) {
        GeneratedTask task = request.make_task(env_index);
        try {
            RolloutEnv env(request.algorithm, &task.mdp, request.family, request.budget,
                           derive_seed(request.seed_root, kEnvStreamTag, env_index),
                           request.vamdp_options);
            Rng action_rng(derive_seed(request.seed_root, kActionStreamTag, env_index));

            const int T = request.budget;
            const int n_actions = env.num_actions();
            MetaEpisodeBuffer& buf = buffers[env_index];
            buf.task_seed = task.seed;
            buf.obs_dim = env.obs_dim();
            buf.observations.resize(static_cast<size_t>(T) * buf.obs_dim);
            buf.actions.resize(T);
            buf.rewards.resize(T);
            buf.log_probs.resize(T);
            buf.values.resize(T);
            buf.done.assign(T, 0);

            typename Model::Cache actor_cache, critic_cache;
            actor.cache_reset(actor_cache);
            critic.cache_reset(critic_cache);
            std::vector<double> logits(n_actions), log_probs(n_actions);
            double value = 0.0;

            std::vector<double> obs = env.observation();
            for (int t = 0; t < T; ++t) {
                std::copy(obs.begin(), obs.end(),
                          buf.observations.begin() + static_cast<size_t>(t) * buf.obs_dim);
                actor.forward_incremental(actor_cache, obs.data(), logits.data());
                critic.forward_incremental(critic_cache, obs.data(), &value);
                log_softmax(logits.data(), n_actions, log_probs.data());

                int a;
                if (request.greedy) {
                    a = 0;
                    for (int i = 1; i < n_actions; ++i)
                        if (log_probs[i] > log_probs[a]) a = i;
                } else {
                    for (int i = 0; i < n_actions; ++i) logits[i] = std::exp(log_probs[i]);
                    a = action_rng.categorical(logits.data(), n_actions);
                }

                const VamdpStepResult result = env.step(a);
                buf.actions[t] = a;
                buf.rewards[t] = result.reward;
                buf.log_probs[t] = log_probs[a];
                buf.values[t] = value;
                if (t + 1 == T) buf.done[t] = 1;
                obs = env.observation();
            }
        } catch (const std::exception& e) {
            std::ostringstream msg;
            msg << "rollout env " << env_index << " (task seed " << task.seed << "): " << e.what();
            throw std::runtime_error(msg.str());
        }
    });
    return buffers;
}

namespace {

struct MinibatchSums {
    double policy_loss = 0.0;
    double value_loss = 0.0;
    double entropy = 0.0;
    double kl = 0.0;
    bool finite = true;
};

// Per-sequence PPO loss gradients; fills actor/critic dout buffers and the
// scalar sums for one sequence. adv_* give the minibatch normalization.
template <class Model>
void sequence_losses(const Model& actor, const Model& critic, const MetaEpisodeBuffer& buf,
                     double adv_shift, double adv_scale, double clip, double entropy_coeff,
                     double value_coeff, typename Model::Workspace& actor_ws,
                     typename Model::Workspace& critic_ws, std::vector<double>& actor_dout,
                     std::vector<double>& critic_dout, MinibatchSums& sums) {
    const int T = buf.length();
    const int O = actor.output_dim();
    actor.forward(buf.observations.data(), T, actor_ws);
    critic.forward(buf.observations.data(), T, critic_ws);
    actor_dout.assign(static_cast<size_t>(T) * O, 0.0);
    critic_dout.assign(T, 0.0);

    std::vector<double> log_probs(O);
    for (int t = 0; t < T; ++t) {
        const double* logits = actor_ws.out.data() + static_cast<size_t>(t) * O;
        log_softmax(logits, O, log_probs.data());
        const int a = buf.actions[t];
        const double adv = (buf.advantages[t] - adv_shift) * adv_scale;
        const double log_ratio = log_probs[a] - buf.log_probs[t];
        const double ratio = std::exp(log_ratio);

        const double surr1 = ratio * adv;
        const double surr2 = std::clamp(ratio, 1.0 - clip, 1.0 + clip) * adv;
        sums.policy_loss += -std::min(surr1, surr2);
        sums.kl += (ratio - 1.0) - log_ratio;

        double entropy = 0.0;
        for (int i = 0; i < O; ++i) entropy -= std::exp(log_probs[i]) * log_probs[i];
        sums.entropy += entropy;

        // d(-min(surr1, surr2))/dlogp: active only on the unclipped branch
        const double dlogp = surr1 <= surr2 ? -adv * ratio : 0.0;
        double* dout = actor_dout.data() + static_cast<size_t>(t) * O;
        for (int i = 0; i < O; ++i) {
            const double p = std::exp(log_probs[i]);
            dout[i] = dlogp * ((i == a ? 1.0 : 0.0) - p);
            // entropy bonus: d(-c H)/dlogit_i = c p_i (log p_i + H)
            dout[i] += entropy_coeff * p * (log_probs[i] + entropy);
        }

        const double v = critic_ws.out[t];
        const double err = v - buf.returns[t];
        sums.value_loss += 0.5 * err * err;
        critic_dout[t] = value_coeff * err;

        if (!std::isfinite(sums.policy_loss) || !std::isfinite(sums.value_loss) ||
            !std::isfinite(entropy))
            sums.finite = false;
    }
}

}  // namespace

template <class Model>
PpoStats ppo_update(Model& actor, Model& critic, AdamOptimizer& actor_opt,
                    AdamOptimizer& critic_opt, std::vector<MetaEpisodeBuffer>& batch,
                    const PpoConfig& config, double entropy_coeff, Rng& shuffle_rng) {
    config.validate();
    const int n_seqs = static_cast<int>(batch.size());
    if (n_seqs < 1) fail("empty batch");
    const int T = batch[0].length();
    const int mb_seqs = std::min(n_seqs, config.minibatch_sequences(T));

    PpoStats stats;
    double total_return = 0.0;
    for (const auto& buf : batch) total_return += buf.reward_sum();
    stats.mean_return = total_return / n_seqs;
    stats.entropy_coeff_used = entropy_coeff;

    const size_t actor_n = actor.params().total();
    const size_t critic_n = critic.params().total();
    const int chunks = std::min(kGradChunks, mb_seqs);
    std::vector<std::vector<double>> actor_grads(chunks), critic_grads(chunks);
    std::vector<MinibatchSums> chunk_sums(chunks);
    std::vector<typename Model::Workspace> actor_ws(chunks), critic_ws(chunks);
    std::vector<std::vector<double>> actor_dout(chunks), critic_dout(chunks);
    std::vector<double> actor_grad_total(actor_n), critic_grad_total(critic_n);

    std::vector<int> order(n_seqs);
    std::iota(order.begin(), order.end(), 0);

    double loss_sum = 0.0, vloss_sum = 0.0, entropy_sum = 0.0, kl_last = 0.0;
    int64_t steps_seen = 0;
    bool stop = false;

    for (int epoch = 0; epoch < config.epochs && !stop; ++epoch) {
        // Fisher-Yates on sequence order; sequences stay whole.
        for (int i = n_seqs - 1; i > 0; --i)
            std::swap(order[i], order[static_cast<int>(shuffle_rng.uniform_int(i + 1))]);

        for (int start = 0; start + mb_seqs <= n_seqs && !stop; start += mb_seqs) {
            const int count = mb_seqs;
            const int64_t mb_steps = static_cast<int64_t>(count) * T;

            double adv_shift = 0.0, adv_scale = 1.0;
            if (config.normalize_advantages) {
                double mean = 0.0;
                for (int i = 0; i < count; ++i)
                    for (double a : batch[order[start + i]].advantages) mean += a;
                mean /= static_cast<double>(mb_steps);
                double var = 0.0;
                for (int i = 0; i < count; ++i)
                    for (double a : batch[order[start + i]].advantages) var += (a - mean) * (a - mean);
                var /= static_cast<double>(mb_steps);
                adv_shift = mean;
                adv_scale = 1.0 / (std::sqrt(var) + 1e-8);
            }

            for (int c = 0; c < chunks; ++c) {
                actor_grads[c].assign(actor_n, 0.0);
                critic_grads[c].assign(critic_n, 0.0);
                chunk_sums[c] = MinibatchSums{};
            }
            const int per_chunk = (count + chunks - 1) / chunks;
            parallel_for(chunks, config.threads, [&](int c) {
                for (int i = c * per_chunk; i < std::min(count, (c + 1) * per_chunk); ++i) {
                    const MetaEpisodeBuffer& buf = batch[order[start + i]];
                    sequence_losses(actor, critic, buf, adv_shift, adv_scale, config.clip,
                                    entropy_coeff, config.value_loss_coeff, actor_ws[c],
                                    critic_ws[c], actor_dout[c], critic_dout[c], chunk_sums[c]);
                    actor.backward(actor_ws[c], actor_dout[c].data(), actor_grads[c].data());
                    critic.backward(critic_ws[c], critic_dout[c].data(), critic_grads[c].data());
                }
            });

            MinibatchSums mb{};
            for (const auto& s : chunk_sums) {
                mb.policy_loss += s.policy_loss;
                mb.value_loss += s.value_loss;
                mb.entropy += s.entropy;
                mb.kl += s.kl;
                mb.finite = mb.finite && s.finite;
            }
            if (!mb.finite) {
                std::ostringstream msg;
                msg << "non-finite loss in epoch " << epoch << ", minibatch at sequence " << start
                    << " (first task seed " << batch[order[start]].task_seed << ")";
                fail(msg.str());
            }

            const double inv_steps = 1.0 / static_cast<double>(mb_steps);
            std::fill(actor_grad_total.begin(), actor_grad_total.end(), 0.0);
            std::fill(critic_grad_total.begin(), critic_grad_total.end(), 0.0);
            for (int c = 0; c < chunks; ++c) {
                for (size_t i = 0; i < actor_n; ++i) actor_grad_total[i] += actor_grads[c][i];
                for (size_t i = 0; i < critic_n; ++i) critic_grad_total[i] += critic_grads[c][i];
            }
            for (auto& g : actor_grad_total) g *= inv_steps;
            for (auto& g : critic_grad_total) g *= inv_steps;

            actor_opt.step(actor.params().flat(), actor_grad_total);
            critic_opt.step(critic.params().flat(), critic_grad_total);

            loss_sum += mb.policy_loss * inv_steps;
            vloss_sum += mb.value_loss * inv_steps;
            entropy_sum += mb.entropy * inv_steps;
            kl_last = mb.kl * inv_steps;
            steps_seen += 1;
            stats.minibatches_run += 1;

            if (kl_last > config.max_kl) {
                stats.kl_early_stop = true;
                stop = true;
            }
        }
        if (!stop) stats.epochs_run = epoch + 1;
    }

    if (steps_seen > 0) {
        stats.policy_loss = loss_sum / static_cast<double>(steps_seen);
        stats.value_loss = vloss_sum / static_cast<double>(steps_seen);
        stats.entropy = entropy_sum / static_cast<double>(steps_seen);
    }

    // Full-batch KL(old||new) where optimization stopped, via a fresh forward.
    {
        const int chunks_kl = std::min(kGradChunks, n_seqs);
        std::vector<double> kl_parts(chunks_kl, 0.0);
        const int per_chunk = (n_seqs + chunks_kl - 1) / chunks_kl;
        parallel_for(chunks_kl, config.threads, [&](int c) {
            typename Model::Workspace ws;
            std::vector<double> log_probs(actor.output_dim());
            for (int i = c * per_chunk; i < std::min(n_seqs, (c + 1) * per_chunk); ++i) {
                const auto& buf = batch[i];
                actor.forward(buf.observations.data(), buf.length(), ws);
                for (int t = 0; t < buf.length(); ++t) {
                    log_softmax(ws.out.data() + static_cast<size_t>(t) * actor.output_dim(),
                                actor.output_dim(), log_probs.data());
                    const double log_ratio = log_probs[buf.actions[t]] - buf.log_probs[t];
                    kl_parts[c] += (std::exp(log_ratio) - 1.0) - log_ratio;
                }
            }
        });
        double kl_total = 0.0;
        for (double p : kl_parts) kl_total += p;
        stats.approx_kl = kl_total / (static_cast<double>(n_seqs) * T);
    }
    return stats;
}

template std::vector<MetaEpisodeBuffer> collect_rollouts<Transformer>(const Transformer&,
                                                                      const Transformer&,
                                                                      const RolloutRequest&);
template std::vector<MetaEpisodeBuffer> collect_rollouts<MarkovNet>(const MarkovNet&,
                                                                    const MarkovNet&,
                                                                    const RolloutRequest&);
template PpoStats ppo_update<Transformer>(Transformer&, Transformer&, AdamOptimizer&,
                                          AdamOptimizer&, std::vector<MetaEpisodeBuffer>&,
                                          const PpoConfig&, double, Rng&);
template PpoStats ppo_update<MarkovNet>(MarkovNet&, MarkovNet&, AdamOptimizer&, AdamOptimizer&,
                                        std::vector<MetaEpisodeBuffer>&, const PpoConfig&, double,
                                        Rng&);

}  // namespace rl3
