#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "rl3/analysis.hpp"
#include "rl3/bamdp.hpp"
#include "rl3/harness.hpp"

namespace fs = std::filesystem;
using namespace rl3;

namespace {

void write_file(const fs::path& path, const std::string& content) {
    fs::create_directories(path.parent_path().empty() ? "." : path.parent_path());
    std::ofstream out(path);
    if (!out) fail("cannot write " + path.string());
    out << content;
    std::cout << "wrote " << path.string() << "\n";
}

TaskDistributionSpec spec_from_flags(const std::string& family, const std::string& variant,
                                     int arms, double alpha, int grid_size,
                                     const std::string& filter) {
    TaskDistributionSpec spec;
    spec.family = family_from_name(family);
    spec.variant = variant;
    spec.num_arms = arms;
    spec.dirichlet_alpha = alpha;
    spec.grid_size = grid_size;
    if (filter == "literal") spec.grid_filter = GridFilterMode::literal;
    else if (filter == "flipped") spec.grid_filter = GridFilterMode::flipped;
    else if (filter == "solvable") spec.grid_filter = GridFilterMode::solvable;
    else fail("unknown grid filter: " + filter);
    spec.validate();
    return spec;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"meta-RL lab: value-augmented meta-RL (rl3) and its rl2 baseline"};
    app.require_subcommand(1);

    // ---- train ----
    auto* train = app.add_subcommand("train", "run meta-training from a config file");
    std::string train_config;
    uint64_t train_seed = 0;
    bool train_seed_set = false;
    std::string train_out;
    int train_iters = -1;
    int train_seeds = 1;
    std::string train_report = "all";
    train->add_option("--config", train_config, "experiment config file")->required();
    train->add_option("--seed", train_seed, "master seed override")
        ->each([&](const std::string&) { train_seed_set = true; });
    train->add_option("--output", train_out, "output directory override");
    train->add_option("--iterations", train_iters, "iteration budget override");
    train->add_option("--seeds", train_seeds, "train this many consecutive master seeds");
    train->add_option("--report", train_report,
                      "all | median: with --seeds, pick the median-performing model");

    // ---- eval ----
    auto* eval = app.add_subcommand("eval", "evaluate a checkpoint or baseline on an eval set");
    std::string eval_ckpt, eval_set_path, eval_ood, eval_baseline, eval_out;
    bool eval_greedy = false;
    bool eval_no_verify = false;
    int eval_threads = 2;
    int eval_budget = 0;
    uint64_t eval_seed = 9;
    eval->add_option("--checkpoint", eval_ckpt, "trained checkpoint file");
    eval->add_option("--eval-set", eval_set_path, "eval set file")->required();
    eval->add_option("--ood", eval_ood, "variant override for OOD evaluation");
    eval->add_flag("--greedy", eval_greedy, "argmax actions instead of sampling");
    eval->add_option("--baseline", eval_baseline, "uniform_random | ucb1 | oracle");
    eval->add_option("--budget", eval_budget, "interaction budget for baselines");
    eval->add_option("--seed", eval_seed, "action-sampling seed for baselines");
    eval->add_option("--threads", eval_threads, "worker threads");
    eval->add_option("--out", eval_out, "write report text/CSV under this prefix");
    eval->add_flag("--no-verify", eval_no_verify, "skip eval-set hash verification");

    // ---- make-eval-set ----
    auto* mkset = app.add_subcommand("make-eval-set", "generate and store an eval task set");
    std::string ms_family = "bandits", ms_variant, ms_out = "eval_set.bin", ms_filter = "solvable";
    int ms_n = 1000, ms_arms = 5, ms_grid = 13;
    double ms_alpha = 1.0;
    uint64_t ms_seed = 7;
    mkset->add_option("--family", ms_family, "bandits | random_mdps | gridworld")->required();
    mkset->add_option("--n", ms_n, "number of tasks");
    mkset->add_option("--seed", ms_seed, "master seed (eval seed interval)");
    mkset->add_option("--variant", ms_variant, "family variant");
    mkset->add_option("--arms", ms_arms, "bandit arms");
    mkset->add_option("--alpha", ms_alpha, "dirichlet alpha");
    mkset->add_option("--grid-size", ms_grid, "grid size");
    mkset->add_option("--grid-filter", ms_filter, "literal | flipped | solvable");
    mkset->add_option("--out", ms_out, "output file")->required();

    // ---- analyze ----
    auto* analyze = app.add_subcommand("analyze", "run an appendix-style analysis experiment");
    analyze->require_subcommand(1);
    std::string an_out = "analysis";
    int an_threads = 2;
    uint64_t an_seed = 11;
    analyze->add_option("--out", an_out, "output directory");
    analyze->add_option("--threads", an_threads, "worker threads");
    analyze->add_option("--seed", an_seed, "experiment seed");

    auto* an_dup = analyze->add_subcommand("duplicates", "duplicate Q* pair fraction");
    int dup_n = 5000;
    double dup_alpha = 1.0, dup_beta = 1.0, dup_delta = 0.1;
    bool dup_timed = false;
    an_dup->add_option("--num-mdps", dup_n, "sampled MDP count");
    an_dup->add_option("--alpha", dup_alpha, "Dirichlet alpha");
    an_dup->add_option("--beta", dup_beta, "reward stddev");
    an_dup->add_option("--delta", dup_delta, "max-norm duplicate threshold");
    an_dup->add_flag("--over-time", dup_timed, "also emit the Q-estimate duplicate curve");

    auto* an_clf = analyze->add_subcommand("classifier", "task identification from Q-estimates");
    int clf_tasks = 100, clf_steps = 50, clf_stride = 1;
    an_clf->add_option("--tasks", clf_tasks, "task count");
    an_clf->add_option("--steps", clf_steps, "rollout steps");
    an_clf->add_option("--stride", clf_stride, "snapshot stride");

    auto* an_suff = analyze->add_subcommand(
        "sufficiency", "Bernoulli (Q,N) sufficiency and the Gaussian insufficiency witness");
    int suff_trajs = 1000;
    an_suff->add_option("--trajectories", suff_trajs, "random trajectories to check");

    auto* an_bamdp = analyze->add_subcommand("bamdp", "belief-MDP bound verification");
    int bam_instances = 100;
    an_bamdp->add_option("--instances", bam_instances, "random instances");

    auto* an_plots = analyze->add_subcommand("plots", "training-curve and score plot data");
    std::vector<std::string> pl_logs, pl_labels;
    std::string pl_baseline, pl_name = "experiment";
    an_plots->add_option("--logs", pl_logs, "training_log.csv paths")->required();
    an_plots->add_option("--labels", pl_labels, "one label per log")->required();
    an_plots->add_option("--baseline-log", pl_baseline, "baseline log for efficiency fractions");
    an_plots->add_option("--name", pl_name, "output file prefix");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*train) {
            ExperimentConfig cfg = ExperimentConfig::parse_file(train_config);
            if (train_seed_set) cfg.master_seed = train_seed;
            if (!train_out.empty()) cfg.output_dir = train_out;
            if (train_iters >= 0) cfg.iterations = train_iters;
            cfg.validate();
            if (train_seeds <= 1) {
                const TrainResult result = run_training(cfg);
                std::cout << "trained " << result.iterations_run
                          << " iterations, final mean return "
                          << format_double_short(result.final_mean_return) << "\n"
                          << "checkpoint: " << result.checkpoint_path << "\n"
                          << "log: " << result.log_path << "\n";
            } else {
                // multi-seed protocol: train each seed in its own directory,
                // score every model on one shared eval set, report the median
                const std::string base_dir = cfg.output_dir;
                const EvalSet set = make_eval_set(cfg.task, cfg.eval_set_size, cfg.master_seed);
                struct SeedRun {
                    uint64_t seed;
                    TrainResult result;
                    double eval_mean;
                };
                std::vector<SeedRun> seed_runs;
                for (int s = 0; s < train_seeds; ++s) {
                    ExperimentConfig run_cfg = cfg;
                    run_cfg.master_seed = cfg.master_seed + static_cast<uint64_t>(s);
                    run_cfg.output_dir = base_dir + "_seed" + std::to_string(s);
                    const TrainResult result = run_training(run_cfg);
                    EvalOptions options;
                    options.threads = run_cfg.ppo.threads;
                    const EvalReport report = run_eval(result.checkpoint_path, set, options);
                    std::cout << "seed " << run_cfg.master_seed << ": eval mean "
                              << format_double_short(report.mean_return) << " +- "
                              << format_double_short(report.std_error) << "\n";
                    seed_runs.push_back({run_cfg.master_seed, result, report.mean_return});
                }
                if (train_report == "median") {
                    std::sort(seed_runs.begin(), seed_runs.end(),
                              [](const SeedRun& a, const SeedRun& b) {
                                  return a.eval_mean < b.eval_mean;
                              });
                    const SeedRun& median = seed_runs[seed_runs.size() / 2];
                    std::cout << "median model: seed " << median.seed << ", eval mean "
                              << format_double_short(median.eval_mean) << "\n"
                              << "checkpoint: " << median.result.checkpoint_path << "\n";
                }
            }
        } else if (*eval) {
            const EvalSet set = EvalSet::load(eval_set_path, !eval_no_verify);
            EvalReport report;
            if (!eval_baseline.empty()) {
                if (eval_budget <= 0) fail("--budget is required with --baseline");
                BaselinePolicy policy;
                if (eval_baseline == "uniform_random") policy = BaselinePolicy::uniform_random;
                else if (eval_baseline == "ucb1") policy = BaselinePolicy::ucb1;
                else if (eval_baseline == "oracle") policy = BaselinePolicy::oracle;
                else fail("unknown baseline: " + eval_baseline);
                report = run_baseline_eval(policy, set, eval_budget, eval_seed, eval_threads);
            } else {
                if (eval_ckpt.empty()) fail("--checkpoint or --baseline is required");
                EvalOptions options;
                options.greedy = eval_greedy;
                options.threads = eval_threads;
                if (!eval_ood.empty()) options.ood_variant = eval_ood;
                report = run_eval(eval_ckpt, set, options);
            }
            std::cout << report.text();
            if (!eval_out.empty()) {
                write_file(eval_out + "_report.txt", report.text());
                write_file(eval_out + "_returns.csv", report.csv());
            }
        } else if (*mkset) {
            const TaskDistributionSpec spec =
                spec_from_flags(ms_family, ms_variant, ms_arms, ms_alpha, ms_grid, ms_filter);
            const EvalSet set = make_eval_set(spec, ms_n, ms_seed);
            set.save(ms_out);
            std::cout << "wrote " << ms_out << " (" << set.size() << " tasks)\n";
        } else if (*analyze) {
            fs::create_directories(an_out);
            if (*an_dup) {
                DuplicateExperimentSpec spec;
                spec.num_mdps = dup_n;
                spec.alpha = dup_alpha;
                spec.beta = dup_beta;
                spec.delta = dup_delta;
                spec.seed = an_seed;
                spec.threads = an_threads;
                const DuplicateReport report = duplicate_probability(spec);
                std::cout << report.text();
                write_file(fs::path(an_out) / "duplicates_report.txt", report.text());
                std::string csv = "duplicate_pairs,total_pairs,fraction\n";
                csv += std::to_string(report.duplicate_pairs) + "," +
                       std::to_string(report.total_pairs) + "," + format_double(report.fraction) +
                       "\n";
                write_file(fs::path(an_out) / "duplicates.csv", csv);
                if (dup_timed) {
                    const auto curve = duplicate_fraction_over_time(spec, 50, 5);
                    std::string tcsv = "timestep,duplicate_fraction\n";
                    for (size_t i = 0; i < curve.size(); ++i)
                        tcsv += std::to_string(i * 5) + "," + format_double(curve[i]) + "\n";
                    write_file(fs::path(an_out) / "duplicates_over_time.csv", tcsv);
                }
            } else if (*an_clf) {
                ClassifierExperimentSpec spec;
                spec.num_tasks = clf_tasks;
                spec.steps = clf_steps;
                spec.snapshot_stride = clf_stride;
                spec.seed = an_seed;
                spec.threads = an_threads;
                const ClassifierCurve curve = task_classifier_experiment(spec);
                std::cout << curve.metadata << "\n";
                for (size_t i = 0; i < curve.timesteps.size(); ++i)
                    std::cout << "  t=" << curve.timesteps[i]
                              << " accuracy=" << format_double_short(curve.accuracy[i]) << "\n";
                write_file(fs::path(an_out) / "classifier_accuracy.csv", curve.csv());
                write_file(fs::path(an_out) / "classifier_report.txt", curve.metadata + "\n");
            } else if (*an_suff) {
                Rng rng(an_seed);
                double worst = 0.0;
                for (int i = 0; i < suff_trajs; ++i) {
                    const int K = 5, T = 50, n_tasks = 4;
                    std::vector<std::vector<double>> tasks(n_tasks, std::vector<double>(K));
                    for (auto& task : tasks)
                        for (auto& p : task) p = rng.uniform(0.05, 0.95);
                    std::vector<double> log_prior(n_tasks, -std::log(double(n_tasks)));
                    std::vector<int> actions(T);
                    std::vector<double> rewards(T);
                    std::vector<double> q(K, 0.0), n(K, 0.0);
                    for (int t = 0; t < T; ++t) {
                        actions[t] = rng.uniform_index(K);
                        rewards[t] = rng.bernoulli(tasks[0][actions[t]]) ? 1.0 : 0.0;
                        n[actions[t]] += 1.0;
                        q[actions[t]] += (rewards[t] - q[actions[t]]) / n[actions[t]];
                    }
                    const auto from_stats =
                        bernoulli_posterior_from_stats(log_prior, tasks, q, n);
                    const auto from_traj =
                        bernoulli_posterior_from_trajectory(log_prior, tasks, actions, rewards);
                    for (int j = 0; j < n_tasks; ++j)
                        worst = std::max(worst, std::abs(from_stats[j] - from_traj[j]));
                }
                const GaussianWitness witness = gaussian_insufficiency_witness();
                std::ostringstream report;
                report << "Bernoulli sufficiency: " << suff_trajs
                       << " random trajectories, worst log-posterior gap " << format_double(worst)
                       << "\n";
                report << "Gaussian insufficiency witness: rewards {1,1} vs {0,2}, Q=1 N=2, "
                       << "Var 0 vs 1, log-likelihood gap " << format_double(witness.loglik_gap())
                       << "\n";
                std::cout << report.str();
                write_file(fs::path(an_out) / "sufficiency_report.txt", report.str());
            } else if (*an_bamdp) {
                Rng rng(an_seed);
                int violations = 0;
                std::string csv;
                for (int i = 0; i < bam_instances; ++i) {
                    const BamdpProblem problem = random_admissible_instance(rng);
                    const BamdpSolution solution = solve_bamdp(problem);
                    const BoundsReport report = verify_bounds(problem, solution);
                    violations += report.bound_violations + report.collapse_violations;
                    if (i == 0) csv = report.csv();
                }
                std::ostringstream report;
                report << "bamdp verification over " << bam_instances
                       << " random instances: " << violations << " violations\n";
                std::cout << report.str();
                write_file(fs::path(an_out) / "bamdp_report.txt", report.str());
                write_file(fs::path(an_out) / "bamdp_first_instance.csv", csv);
            } else if (*an_plots) {
                if (pl_logs.size() != pl_labels.size()) fail("--logs and --labels sizes differ");
                emit_training_curves(pl_logs, pl_labels, an_out, pl_name);
                if (!pl_baseline.empty())
                    emit_efficiency(pl_logs, pl_labels, pl_baseline, an_out, pl_name);
            }
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
