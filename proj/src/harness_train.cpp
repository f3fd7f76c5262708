#include <chrono>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "rl3/checkpoint.hpp"
#include "rl3/harness.hpp"

namespace rl3 {

namespace {

namespace fs = std::filesystem;

constexpr uint64_t kActorInitTag = 0x61696e69;
constexpr uint64_t kCriticInitTag = 0x63696e69;
constexpr uint64_t kRolloutTag = 0x726f6c6c;
constexpr uint64_t kShuffleTag = 0x73687566;

double entropy_coeff_at(const PpoConfig& ppo, int iteration, int total_iterations) {
    if (ppo.entropy_coeff_final < 0.0 || total_iterations <= 1) return ppo.entropy_coeff;
    const double frac = static_cast<double>(iteration) / (total_iterations - 1);
    return ppo.entropy_coeff + frac * (ppo.entropy_coeff_final - ppo.entropy_coeff);
}

VamdpOptions vamdp_options_for(const ExperimentConfig& cfg) {
    VamdpOptions opt;
    opt.raw_q = cfg.raw_q_layout;
    if (cfg.algorithm == Algorithm::rl3_coarse) {
        const FamilyShape shape = family_shape(cfg.task);
        AbstractionConfig abs;
        abs.max_cluster_size = cfg.cluster_size;
        abs.radius = cfg.cluster_radius;
        const int width = static_cast<int>(std::lround(std::sqrt(shape.num_states)));
        abs.distance = cfg.task.family == TaskFamily::gridworld ? grid_manhattan(width)
                                                                : identity_metric();
        opt.abstraction = std::move(abs);
    }
    return opt;
}

struct LogFiles {
    std::ofstream stats;
    std::ofstream seeds;
    std::ofstream timing;
};

void write_stats_header(std::ofstream& out) {
    out << "iteration,mean_return,policy_loss,value_loss,entropy,approx_kl,entropy_coeff,"
           "epochs_run,minibatches,kl_early_stop\n";
}

// Column layout above stays fixed; the determinism gate compares these files
// byte for byte, so nothing time- or machine-dependent may enter them.
void write_stats_row(std::ofstream& out, int iteration, const PpoStats& s) {
    out << iteration << "," << format_double(s.mean_return) << "," << format_double(s.policy_loss)
        << "," << format_double(s.value_loss) << "," << format_double(s.entropy) << ","
        << format_double(s.approx_kl) << "," << format_double(s.entropy_coeff_used) << ","
        << s.epochs_run << "," << s.minibatches_run << "," << (s.kl_early_stop ? 1 : 0) << "\n";
    out.flush();
}

template <class Model>
void save_training_checkpoint(const std::string& path, const ExperimentConfig& cfg,
                              const Model& actor, const Model& critic,
                              const AdamOptimizer& actor_opt, const AdamOptimizer& critic_opt,
                              int next_iteration) {
    Checkpoint ck;
    ck.header["config"] = cfg.emit();
    ck.header["algorithm"] = algorithm_name(cfg.algorithm);
    ck.set_header_int("obs_layout_version", kObsLayoutVersion);
    ck.set_header_int("iteration", next_iteration);
    ck.set_header_int("actor_input_dim", actor.input_dim());
    ck.set_header_int("actor_output_dim", actor.output_dim());
    ck.set_header_int("critic_input_dim", critic.input_dim());
    ck.set_header_int("actor_adam_steps", actor_opt.steps_taken());
    ck.set_header_int("critic_adam_steps", critic_opt.steps_taken());
    ck.set_header_int("master_seed", static_cast<int64_t>(cfg.master_seed));
    ck.put_params("actor.", actor.params());
    ck.put_params("critic.", critic.params());
    ck.blobs["actor_adam.m"] = actor_opt.moment1();
    ck.blobs["actor_adam.v"] = actor_opt.moment2();
    ck.blobs["critic_adam.m"] = critic_opt.moment1();
    ck.blobs["critic_adam.v"] = critic_opt.moment2();
    const std::string tmp = path + ".tmp";
    ck.save(tmp);
    fs::rename(tmp, path);
}

// Drops stats rows past the checkpointed iteration so a resumed run appends
// cleanly after an interrupt.
void truncate_log_to(const std::string& path, int keep_iterations) {
    if (!fs::exists(path)) return;
    std::ifstream in(path);
    std::string line, kept;
    bool header = true;
    int rows = 0;
    while (std::getline(in, line)) {
        if (header) {
            kept = line + "\n";
            header = false;
            continue;
        }
        if (rows >= keep_iterations) break;
        kept += line + "\n";
        ++rows;
    }
    in.close();
    std::ofstream out(path, std::ios::trunc);
    out << kept;
}

// Everything that must match for a checkpoint to be resumable: the config
// minus the iteration budget (resuming with a larger budget is the normal
// way to extend a run) and minus the output directory itself.
std::string resume_signature(const ExperimentConfig& cfg) {
    std::istringstream in(cfg.emit());
    std::string line, keep;
    while (std::getline(in, line)) {
        if (line.rfind("iterations = ", 0) == 0) continue;
        if (line.rfind("output_dir = ", 0) == 0) continue;
        keep += line + "\n";
    }
    return keep;
}

template <class Model>
TrainResult train_loop(const ExperimentConfig& cfg, Model& actor, Model& critic) {
    const fs::path dir(cfg.output_dir);
    fs::create_directories(dir);
    const std::string ckpt_path = (dir / "checkpoint_latest.bin").string();
    const std::string log_path = (dir / "training_log.csv").string();
    const std::string seed_log_path = (dir / "task_seeds.csv").string();
    const std::string timing_path = (dir / "timing.csv").string();

    AdamOptimizer actor_opt(actor.params().total(), cfg.ppo.learning_rate, cfg.ppo.adam_beta1,
                            cfg.ppo.adam_beta2, cfg.ppo.adam_eps, 0.0);
    AdamOptimizer critic_opt(critic.params().total(), cfg.ppo.learning_rate, cfg.ppo.adam_beta1,
                             cfg.ppo.adam_beta2, cfg.ppo.adam_eps, cfg.ppo.critic_weight_decay);

    int start_iteration = 0;
    if (fs::exists(ckpt_path)) {
        const Checkpoint ck = Checkpoint::load(ckpt_path);
        if (resume_signature(ExperimentConfig::parse(ck.header_str("config"))) !=
            resume_signature(cfg))
            fail("output dir holds a checkpoint for a different config: " + ckpt_path);
        ck.get_params("actor.", actor.params());
        ck.get_params("critic.", critic.params());
        actor_opt.restore(ck.header_int("actor_adam_steps"), ck.blobs.at("actor_adam.m"),
                          ck.blobs.at("actor_adam.v"));
        critic_opt.restore(ck.header_int("critic_adam_steps"), ck.blobs.at("critic_adam.m"),
                           ck.blobs.at("critic_adam.v"));
        start_iteration = static_cast<int>(ck.header_int("iteration"));
        truncate_log_to(log_path, start_iteration);
        truncate_log_to(timing_path, start_iteration);
    } else {
        Rng actor_rng(derive_seed(cfg.master_seed, kActorInitTag, 0));
        Rng critic_rng(derive_seed(cfg.master_seed, kCriticInitTag, 0));
        actor.init_params(actor_rng);
        critic.init_params(critic_rng);
    }

    LogFiles logs;
    const bool fresh = start_iteration == 0;
    logs.stats.open(log_path, fresh ? std::ios::trunc : std::ios::app);
    logs.seeds.open(seed_log_path, fresh ? std::ios::trunc : std::ios::app);
    logs.timing.open(timing_path, fresh ? std::ios::trunc : std::ios::app);
    if (fresh) {
        write_stats_header(logs.stats);
        logs.seeds << "iteration,env_index,task_seed\n";
        logs.timing << "iteration,seconds\n";
    }

    const int n_envs = cfg.ppo.num_envs(cfg.interaction_budget);
    const VamdpOptions vamdp_options = vamdp_options_for(cfg);

    TrainResult result;
    result.checkpoint_path = ckpt_path;
    result.log_path = log_path;

    for (int iteration = start_iteration; iteration < cfg.iterations; ++iteration) {
        const auto started = std::chrono::steady_clock::now();

        RolloutRequest request;
        request.algorithm = cfg.algorithm;
        request.family = cfg.task.family;
        request.budget = cfg.interaction_budget;
        request.n_envs = n_envs;
        request.seed_root = derive_seed(cfg.master_seed, kRolloutTag, iteration);
        request.vamdp_options = vamdp_options;
        request.threads = cfg.ppo.threads;
        const int64_t counter_base = static_cast<int64_t>(iteration) * n_envs;
        request.make_task = [&cfg, counter_base](int i) {
            return generate_task(cfg.task, train_task_seed(cfg.master_seed, counter_base + i));
        };

        std::vector<MetaEpisodeBuffer> batch = collect_rollouts(actor, critic, request);
        for (auto& buf : batch) compute_gae(buf, cfg.ppo.gamma, cfg.ppo.gae_lambda);
        for (int i = 0; i < n_envs; ++i)
            logs.seeds << iteration << "," << i << "," << batch[i].task_seed << "\n";

        Rng shuffle_rng(derive_seed(cfg.master_seed, kShuffleTag, iteration));
        const double entropy_coeff = entropy_coeff_at(cfg.ppo, iteration, cfg.iterations);
        const PpoStats stats = ppo_update(actor, critic, actor_opt, critic_opt, batch, cfg.ppo,
                                          entropy_coeff, shuffle_rng);
        write_stats_row(logs.stats, iteration, stats);
        result.final_mean_return = stats.mean_return;
        result.iterations_run = iteration + 1;

        const double seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
        logs.timing << iteration << "," << format_double_short(seconds) << "\n";
        logs.timing.flush();
        logs.seeds.flush();

        if ((iteration + 1) % cfg.checkpoint_every == 0 || iteration + 1 == cfg.iterations)
            save_training_checkpoint(ckpt_path, cfg, actor, critic, actor_opt, critic_opt,
                                     iteration + 1);
    }

    if (cfg.iterations == 0 || start_iteration >= cfg.iterations)
        save_training_checkpoint(ckpt_path, cfg, actor, critic, actor_opt, critic_opt,
                                 std::max(start_iteration, cfg.iterations));
    return result;
}

}  // namespace

TrainResult run_training(const ExperimentConfig& cfg) {
    cfg.validate();
    const FamilyShape shape = family_shape(cfg.task);
    const int obs_dim = observation_dim(cfg.algorithm, shape);

    if (cfg.algorithm == Algorithm::rl3_markov) {
        MarkovNetConfig net;
        net.input_dim = obs_dim;
        net.hidden = cfg.markov_hidden;
        net.output_dim = shape.num_actions;
        MarkovNet actor(net);
        net.output_dim = 1;
        MarkovNet critic(net);
        return train_loop(cfg, actor, critic);
    }

    TransformerConfig net;
    net.layers = cfg.decoder_layers;
    net.heads = cfg.attention_heads;
    net.model_width = cfg.decoder_size;
    net.ff_mult = cfg.ff_mult;
    net.max_context = cfg.interaction_budget;
    net.input_dim = obs_dim;
    net.output_dim = shape.num_actions;
    Transformer actor(net);
    net.output_dim = 1;
    Transformer critic(net);
    return train_loop(cfg, actor, critic);
}

}  // namespace rl3
