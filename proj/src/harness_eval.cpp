#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "rl3/checkpoint.hpp"
#include "rl3/harness.hpp"
#include "rl3/svg.hpp"

namespace rl3 {

namespace {

namespace fs = std::filesystem;

constexpr uint64_t kEvalEnvTag = 0x65657631;
constexpr uint64_t kEvalActTag = 0x65616374;

template <class Model>
double run_policy_meta_episode(const Model& actor, RolloutEnv& env, Rng& action_rng, int budget,
                               bool greedy) {
    typename Model::Cache cache;
    actor.cache_reset(cache);
    const int n_actions = env.num_actions();
    std::vector<double> logits(n_actions), probs(n_actions);
    std::vector<double> obs = env.observation();
    double total = 0.0;
    for (int t = 0; t < budget; ++t) {
        actor.forward_incremental(cache, obs.data(), logits.data());
        int a = 0;
        if (greedy) {
            for (int i = 1; i < n_actions; ++i)
                if (logits[i] > logits[a]) a = i;
        } else {
            log_softmax(logits.data(), n_actions, probs.data());
            for (int i = 0; i < n_actions; ++i) probs[i] = std::exp(probs[i]);
            a = action_rng.categorical(probs.data(), n_actions);
        }
        total += env.step(a).reward;
        obs = env.observation();
    }
    return total;
}

template <class Model>
void eval_with_model(const Model& actor, Algorithm algorithm, const TaskDistributionSpec& spec,
                     int budget, const EvalOptions& options, const VamdpOptions& vamdp_options,
                     const std::vector<uint64_t>& seeds, EvalReport& report) {
    const int n = static_cast<int>(seeds.size());
    report.returns.assign(n, 0.0);
    report.oracle_returns.assign(n, 0.0);
    parallel_for(n, options.threads, [&](int i) {
        const GeneratedTask task = generate_task(spec, seeds[i]);
        RolloutEnv env(algorithm, &task.mdp, spec.family, budget,
                       derive_seed(seeds[i], kEvalEnvTag, 0), vamdp_options);
        Rng action_rng(derive_seed(seeds[i], kEvalActTag, 0));
        report.returns[i] = run_policy_meta_episode(actor, env, action_rng, budget, options.greedy);
        report.oracle_returns[i] = oracle_meta_return(task.mdp, budget);
    });
}

void finish_report(EvalReport& report) {
    const int n = static_cast<int>(report.returns.size());
    double sum = 0.0, oracle_sum = 0.0;
    for (int i = 0; i < n; ++i) {
        sum += report.returns[i];
        oracle_sum += report.oracle_returns[i];
    }
    report.mean_return = sum / n;
    double var = 0.0;
    for (double r : report.returns) var += (r - report.mean_return) * (r - report.mean_return);
    var /= std::max(1, n - 1);
    report.std_error = std::sqrt(var / n);
    report.oracle_fraction = oracle_sum != 0.0 ? sum / oracle_sum : 0.0;
    // "beats the oracle" flips meaning with the sign of the normalizer:
    // for negative-return families a fraction below 1 is the impossible side.
    report.oracle_fraction_above_one =
        oracle_sum > 0.0 ? report.oracle_fraction > 1.0 : report.oracle_fraction < 1.0;
}

}  // namespace

EvalReport run_eval(const std::string& checkpoint_path, const EvalSet& eval_set,
                    const EvalOptions& options) {
    const Checkpoint ck = Checkpoint::load(checkpoint_path);
    const ExperimentConfig cfg = ExperimentConfig::parse(ck.header_str("config"));
    if (ck.header_int("obs_layout_version") != kObsLayoutVersion)
        fail("checkpoint uses observation layout version " +
             std::to_string(ck.header_int("obs_layout_version")) + ", this build expects " +
             std::to_string(kObsLayoutVersion));

    TaskDistributionSpec spec = eval_set.spec;
    if (options.ood_variant) {
        spec.variant = *options.ood_variant;
        spec.validate();
    }
    const FamilyShape shape = family_shape(spec);
    const int expected_dim = observation_dim(cfg.algorithm, shape);
    const int ckpt_dim = static_cast<int>(ck.header_int("actor_input_dim"));
    if (expected_dim != ckpt_dim) {
        std::ostringstream msg;
        msg << "observation width mismatch: " << algorithm_name(cfg.algorithm) << " on "
            << family_name(spec.family) << " needs input_dim=" << expected_dim << " (|S|="
            << shape.num_states << ", k=" << shape.num_actions << ") but the checkpoint was "
            << "trained with input_dim=" << ckpt_dim;
        fail(msg.str());
    }
    if (static_cast<int>(ck.header_int("actor_output_dim")) != shape.num_actions)
        fail("action-count mismatch: tasks have " + std::to_string(shape.num_actions) +
             " actions, checkpoint outputs " + std::to_string(ck.header_int("actor_output_dim")));

    VamdpOptions vamdp_options;
    vamdp_options.raw_q = cfg.raw_q_layout;
    if (cfg.algorithm == Algorithm::rl3_coarse) {
        AbstractionConfig abs;
        abs.max_cluster_size = cfg.cluster_size;
        abs.radius = cfg.cluster_radius;
        abs.distance = spec.family == TaskFamily::gridworld
                           ? grid_manhattan(static_cast<int>(std::lround(std::sqrt(shape.num_states))))
                           : identity_metric();
        vamdp_options.abstraction = std::move(abs);
    }

    EvalReport report;
    if (cfg.algorithm == Algorithm::rl3_markov) {
        MarkovNetConfig net;
        net.input_dim = expected_dim;
        net.hidden = cfg.markov_hidden;
        net.output_dim = shape.num_actions;
        MarkovNet actor(net);
        ck.get_params("actor.", actor.params());
        eval_with_model(actor, cfg.algorithm, spec, cfg.interaction_budget, options, vamdp_options,
                        eval_set.seeds, report);
    } else {
        TransformerConfig net;
        net.layers = cfg.decoder_layers;
        net.heads = cfg.attention_heads;
        net.model_width = cfg.decoder_size;
        net.ff_mult = cfg.ff_mult;
        net.max_context = cfg.interaction_budget;
        net.input_dim = expected_dim;
        net.output_dim = shape.num_actions;
        Transformer actor(net);
        ck.get_params("actor.", actor.params());
        eval_with_model(actor, cfg.algorithm, spec, cfg.interaction_budget, options, vamdp_options,
                        eval_set.seeds, report);
    }
    finish_report(report);

    std::ostringstream meta;
    meta << "algorithm=" << algorithm_name(cfg.algorithm) << " family=" << family_name(spec.family)
         << " variant=" << (spec.variant.empty() ? "-" : spec.variant)
         << " H=" << cfg.interaction_budget << " tasks=" << eval_set.size()
         << " greedy=" << (options.greedy ? "1" : "0") << " checkpoint=" << checkpoint_path;
    if (options.ood_variant) meta << " (task hashes not checked under variant override)";
    report.metadata = meta.str();
    return report;
}

EvalReport run_baseline_eval(BaselinePolicy policy, const EvalSet& eval_set, int budget,
                             uint64_t seed, int threads) {
    if (policy == BaselinePolicy::ucb1 && eval_set.spec.family != TaskFamily::bandits)
        fail("the ucb1 baseline is defined for bandits only");

    EvalReport report;
    const int n = eval_set.size();
    report.returns.assign(n, 0.0);
    report.oracle_returns.assign(n, 0.0);
    parallel_for(n, threads, [&](int i) {
        const GeneratedTask task = generate_task(eval_set.spec, eval_set.seeds[i]);
        const TabularMdp& mdp = task.mdp;
        Env env(&mdp, derive_seed(eval_set.seeds[i], kEvalEnvTag, 1));
        Rng rng(derive_seed(seed, kEvalActTag, i));
        report.oracle_returns[i] = oracle_meta_return(mdp, budget);

        std::optional<OracleMetaPolicy> oracle;
        if (policy == BaselinePolicy::oracle) oracle.emplace(mdp, budget);
        std::vector<double> mean(mdp.num_actions, 0.0);
        std::vector<int64_t> count(mdp.num_actions, 0);

        double total = 0.0;
        env.reset();
        for (int t = 0; t < budget; ++t) {
            int a = 0;
            switch (policy) {
                case BaselinePolicy::uniform_random: a = rng.uniform_index(mdp.num_actions); break;
                case BaselinePolicy::oracle:
                    a = oracle->action(env.state(), env.episode_step(), t);
                    break;
                case BaselinePolicy::ucb1: {
                    a = -1;
                    for (int k = 0; k < mdp.num_actions; ++k)
                        if (count[k] == 0) {
                            a = k;
                            break;
                        }
                    if (a < 0) {
                        double best = -1e300;
                        for (int k = 0; k < mdp.num_actions; ++k) {
                            const double bonus = std::sqrt(2.0 * std::log(static_cast<double>(t)) /
                                                           static_cast<double>(count[k]));
                            if (mean[k] + bonus > best) {
                                best = mean[k] + bonus;
                                a = k;
                            }
                        }
                    }
                    break;
                }
            }
            const StepResult r = env.step(a);
            total += r.reward;
            if (policy == BaselinePolicy::ucb1) {
                count[a] += 1;
                mean[a] += (r.reward - mean[a]) / static_cast<double>(count[a]);
            }
            if (r.terminated()) env.reset();
        }
        report.returns[i] = total;
    });
    finish_report(report);

    const char* name = policy == BaselinePolicy::uniform_random ? "uniform_random"
                       : policy == BaselinePolicy::ucb1         ? "ucb1"
                                                                : "oracle";
    std::ostringstream meta;
    meta << "baseline=" << name << " family=" << family_name(eval_set.spec.family)
         << " H=" << budget << " tasks=" << n << " seed=" << seed;
    report.metadata = meta.str();
    return report;
}

std::string EvalReport::text() const {
    std::ostringstream out;
    out << "eval report: " << metadata << "\n";
    out << "  mean return " << format_double_short(mean_return) << " +- "
        << format_double_short(std_error) << " (n=" << returns.size() << ")\n";
    out << "  oracle fraction " << format_double_short(oracle_fraction);
    if (oracle_fraction_above_one) out << " (sampling noise beat the oracle normalizer)";
    out << "\n";
    return out.str();
}

std::string EvalReport::csv() const {
    std::string out = "task_index,return,oracle_return\n";
    for (size_t i = 0; i < returns.size(); ++i)
        out += std::to_string(i) + "," + format_double(returns[i]) + "," +
               format_double(oracle_returns[i]) + "\n";
    return out;
}

std::vector<double> smoothed_returns(const std::vector<double>& returns, int window) {
    std::vector<double> out(returns.size(), 0.0);
    double acc = 0.0;
    for (size_t i = 0; i < returns.size(); ++i) {
        acc += returns[i];
        if (i >= static_cast<size_t>(window)) acc -= returns[i - window];
        out[i] = acc / std::min<double>(window, static_cast<double>(i + 1));
    }
    return out;
}

int convergence_iteration(const std::vector<double>& returns, int window) {
    if (returns.empty()) return -1;
    const auto smooth = smoothed_returns(returns, window);
    double best = smooth[0];
    for (double v : smooth) best = std::max(best, v);
    const double threshold = best - 0.01 * std::abs(best);
    for (size_t i = 0; i < smooth.size(); ++i)
        if (smooth[i] >= threshold) return static_cast<int>(i);
    return static_cast<int>(smooth.size()) - 1;
}

int match_iteration(const std::vector<double>& returns, double target, int window) {
    const auto smooth = smoothed_returns(returns, window);
    for (size_t i = 0; i < smooth.size(); ++i)
        if (smooth[i] >= target) return static_cast<int>(i);
    return -1;
}

double efficiency_fraction(const std::vector<double>& candidate,
                           const std::vector<double>& baseline, int window) {
    const int conv = convergence_iteration(baseline, window);
    if (conv <= 0) return -1.0;
    const double target = smoothed_returns(baseline, window)[conv];
    const int match = match_iteration(candidate, target, window);
    if (match < 0) return -1.0;
    return static_cast<double>(match) / static_cast<double>(conv);
}

std::vector<double> read_training_returns(const std::string& log_path) {
    std::ifstream in(log_path);
    if (!in) fail("cannot open training log: " + log_path);
    std::string line;
    std::getline(in, line);  // header
    std::vector<double> returns;
    while (std::getline(in, line)) {
        const auto c1 = line.find(',');
        if (c1 == std::string::npos) continue;
        const auto c2 = line.find(',', c1 + 1);
        returns.push_back(std::stod(line.substr(c1 + 1, c2 - c1 - 1)));
    }
    return returns;
}

namespace {

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};

}  // namespace

void emit_training_curves(const std::vector<std::string>& log_paths,
                          const std::vector<std::string>& labels, const std::string& out_dir,
                          const std::string& name) {
    fs::create_directories(out_dir);
    std::vector<std::vector<double>> curves;
    for (const auto& path : log_paths) curves.push_back(read_training_returns(path));

    std::ofstream csv(fs::path(out_dir) / (name + "_curves.csv"));
    csv << "iteration";
    for (const auto& label : labels) csv << "," << label;
    csv << "\n";
    size_t rows = 0;
    for (const auto& c : curves) rows = std::max(rows, c.size());
    for (size_t i = 0; i < rows; ++i) {
        csv << i;
        for (const auto& c : curves) {
            csv << ",";
            if (i < c.size()) csv << format_double(c[i]);
        }
        csv << "\n";
    }

    SvgChart chart(640, 400, name + ": mean meta-episode return");
    for (size_t c = 0; c < curves.size(); ++c) {
        std::vector<double> xs(curves[c].size());
        for (size_t i = 0; i < xs.size(); ++i) xs[i] = static_cast<double>(i);
        chart.add_line(xs, curves[c], labels[c], kPalette[c % 6]);
    }
    std::ofstream svg(fs::path(out_dir) / (name + "_curves.svg"));
    svg << chart.render();
}

void emit_score_bars(const std::vector<EvalReport>& reports, const std::vector<std::string>& labels,
                     const std::string& out_dir, const std::string& name) {
    fs::create_directories(out_dir);
    std::ofstream csv(fs::path(out_dir) / (name + "_scores.csv"));
    csv << "label,mean_return,std_error,oracle_fraction\n";
    SvgChart chart(640, 400, name + ": eval scores");
    for (size_t i = 0; i < reports.size(); ++i) {
        csv << labels[i] << "," << format_double(reports[i].mean_return) << ","
            << format_double(reports[i].std_error) << ","
            << format_double(reports[i].oracle_fraction) << "\n";
        chart.add_bar(labels[i], reports[i].mean_return, reports[i].std_error, kPalette[i % 6]);
    }
    std::ofstream svg(fs::path(out_dir) / (name + "_scores.svg"));
    svg << chart.render();
}

void emit_efficiency(const std::vector<std::string>& candidate_logs,
                     const std::vector<std::string>& labels, const std::string& baseline_log,
                     const std::string& out_dir, const std::string& name) {
    fs::create_directories(out_dir);
    const auto baseline = read_training_returns(baseline_log);
    std::ofstream csv(fs::path(out_dir) / (name + "_efficiency.csv"));
    csv << "label,match_fraction,baseline_convergence_iteration\n";
    const int conv = convergence_iteration(baseline);
    for (size_t i = 0; i < candidate_logs.size(); ++i) {
        const double frac = efficiency_fraction(read_training_returns(candidate_logs[i]), baseline);
        csv << labels[i] << "," << format_double(frac) << "," << conv << "\n";
    }
}

}  // namespace rl3
