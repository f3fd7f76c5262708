#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "rl3/envs.hpp"
#include "rl3/meta_train.hpp"
#include "rl3/seqmodel.hpp"

namespace rl3 {

/// Full experiment description. Serializes to a flat key=value text file
/// whose keys follow the hyperparameter table names; parse(emit(c)) == c.
struct ExperimentConfig {
    TaskDistributionSpec task;
    Algorithm algorithm = Algorithm::rl3;
    int interaction_budget = 20;  // H
    PpoConfig ppo;
    // function approximator
    int decoder_layers = 2;
    int attention_heads = 4;
    int decoder_size = 64;
    int ff_mult = 4;
    std::string activation = "gelu";
    int markov_hidden = 64;
    // schedule and bookkeeping
    int iterations = 200;
    int eval_set_size = 1000;
    int checkpoint_every = 50;
    uint64_t master_seed = 1;
    std::string output_dir = "runs/experiment";
    // rl3 options
    bool raw_q_layout = false;
    int cluster_size = 2;
    double cluster_radius = 1.0;

    void validate() const;
    std::string emit() const;
    static ExperimentConfig parse(const std::string& text);
    static ExperimentConfig parse_file(const std::string& path);
    bool operator==(const ExperimentConfig& other) const { return emit() == other.emit(); }
};

/// State/action shape shared by every task of a family spec.
struct FamilyShape {
    int num_states = 0;
    int num_actions = 0;
};
FamilyShape family_shape(const TaskDistributionSpec& spec);

/// Policy input width for an algorithm on a family.
int observation_dim(Algorithm algorithm, const FamilyShape& shape);

/// Task seed streams. Train and eval counters live in disjoint intervals of
/// the derivation space; overflow asserts rather than aliasing.
uint64_t train_task_seed(uint64_t master_seed, int64_t counter);
uint64_t eval_task_seed(uint64_t master_seed, int64_t counter);

/// Evaluation task sets are stored as (spec, per-task seeds, content hashes)
/// so a few kilobytes pin down the exact tasks; load verifies the hashes by
/// regenerating.
struct EvalSet {
    TaskDistributionSpec spec;
    std::vector<uint64_t> seeds;
    std::vector<uint64_t> hashes;

    int size() const { return static_cast<int>(seeds.size()); }
    void save(const std::string& path) const;
    static EvalSet load(const std::string& path, bool verify_hashes = true);
};
EvalSet make_eval_set(const TaskDistributionSpec& spec, int n, uint64_t master_seed);

struct TrainResult {
    std::string checkpoint_path;
    std::string log_path;
    double final_mean_return = 0.0;
    int iterations_run = 0;
};

/// Outer training loop: seeded task stream, rollouts, PPO updates, CSV logs,
/// periodic checkpoints. Resumes from <output_dir>/checkpoint_latest.bin when
/// present. The stats log is bit-reproducible for a fixed config; wall-clock
/// timings go to a separate file.
TrainResult run_training(const ExperimentConfig& config);

struct EvalOptions {
    bool greedy = false;
    std::optional<std::string> ood_variant;  // regenerate the set's seeds under a variant
    int threads = 2;
};

struct EvalReport {
    std::vector<double> returns;
    std::vector<double> oracle_returns;
    double mean_return = 0.0;
    double std_error = 0.0;
    double oracle_fraction = 0.0;  // sum(returns) / sum(oracle returns)
    bool oracle_fraction_above_one = false;
    std::string metadata;

    std::string text() const;
    std::string csv() const;
};

EvalReport run_eval(const std::string& checkpoint_path, const EvalSet& eval_set,
                    const EvalOptions& options);

/// Scripted reference policies evaluated on the same task sets.
enum class BaselinePolicy : uint8_t { uniform_random, ucb1, oracle };
EvalReport run_baseline_eval(BaselinePolicy policy, const EvalSet& eval_set, int budget,
                             uint64_t seed, int threads);

/// Training-curve post-processing for the efficiency plots.
std::vector<double> smoothed_returns(const std::vector<double>& returns, int window = 5);
/// First iteration whose smoothed return is within 1% of the best sustained
/// (smoothed) return anywhere in the log.
int convergence_iteration(const std::vector<double>& returns, int window = 5);
/// First iteration whose smoothed return reaches `target`; -1 if never.
int match_iteration(const std::vector<double>& returns, double target, int window = 5);
/// Iterations `candidate` needs to match `baseline`'s converged return,
/// as a fraction of `baseline`'s convergence iteration.
double efficiency_fraction(const std::vector<double>& candidate,
                           const std::vector<double>& baseline, int window = 5);

/// Reads the mean_return column of a training log CSV.
std::vector<double> read_training_returns(const std::string& log_path);

/// Emits plot-data CSVs and SVG renderings for training curves, score bars
/// and efficiency fractions into `out_dir`.
void emit_training_curves(const std::vector<std::string>& log_paths,
                          const std::vector<std::string>& labels, const std::string& out_dir,
                          const std::string& name);
void emit_score_bars(const std::vector<EvalReport>& reports, const std::vector<std::string>& labels,
                     const std::string& out_dir, const std::string& name);
void emit_efficiency(const std::vector<std::string>& candidate_logs,
                     const std::vector<std::string>& labels, const std::string& baseline_log,
                     const std::string& out_dir, const std::string& name);

}  // namespace rl3
