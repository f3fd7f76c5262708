#include "rl3/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "rl3/envs.hpp"
#include "rl3/seqmodel.hpp"
#include "rl3/tabular_rl.hpp"

namespace rl3 {

namespace {

constexpr double kHalfLog2Pi = 0.9189385332046727;  // log(2*pi)/2

std::vector<double> normalize_log(std::vector<double> logw) {
    double mx = -std::numeric_limits<double>::infinity();
    for (double w : logw) mx = std::max(mx, w);
    if (!std::isfinite(mx)) fail("posterior has no support");
    double sum = 0.0;
    for (double w : logw) sum += std::exp(w - mx);
    const double lse = mx + std::log(sum);
    for (auto& w : logw) w -= lse;
    return logw;
}

}  // namespace

std::vector<double> bernoulli_posterior_from_stats(const std::vector<double>& log_prior,
                                                   const std::vector<std::vector<double>>& tasks,
                                                   const std::vector<double>& q,
                                                   const std::vector<double>& n) {
    const size_t K = q.size();
    std::vector<double> logw = log_prior;
    for (size_t i = 0; i < tasks.size(); ++i) {
        for (size_t k = 0; k < K; ++k) {
            if (n[k] == 0.0) continue;
            const double successes = q[k] * n[k];
            if (std::abs(successes - std::round(successes)) > 1e-9)
                fail("Q*N must be an integral success count");
            const double s = std::round(successes);
            const double f = n[k] - s;
            const double p = tasks[i][k];
            if (s > 0.0) logw[i] += s * std::log(p);
            if (f > 0.0) logw[i] += f * std::log1p(-p);
        }
    }
    return normalize_log(std::move(logw));
}

std::vector<double> bernoulli_posterior_from_trajectory(
    const std::vector<double>& log_prior, const std::vector<std::vector<double>>& tasks,
    const std::vector<int>& actions, const std::vector<double>& rewards) {
    std::vector<double> logw = log_prior;
    for (size_t i = 0; i < tasks.size(); ++i) {
        for (size_t t = 0; t < actions.size(); ++t) {
            const double p = tasks[i][actions[t]];
            logw[i] += rewards[t] == 1.0 ? std::log(p) : std::log1p(-p);
        }
    }
    return normalize_log(std::move(logw));
}

double gaussian_loglik_from_stats(const std::vector<double>& mean, const std::vector<double>& stddev,
                                  const std::vector<double>& q, const std::vector<double>& n,
                                  const std::vector<double>& var) {
    double ll = 0.0;
    for (size_t k = 0; k < mean.size(); ++k) {
        if (n[k] == 0.0) continue;
        const double s2 = stddev[k] * stddev[k];
        const double dev = q[k] - mean[k];
        ll += n[k] * (-(var[k] + dev * dev) / (2.0 * s2) - std::log(stddev[k]) - kHalfLog2Pi);
    }
    return ll;
}

double gaussian_loglik_from_trajectory(const std::vector<double>& mean,
                                       const std::vector<double>& stddev,
                                       const std::vector<int>& actions,
                                       const std::vector<double>& rewards) {
    double ll = 0.0;
    for (size_t t = 0; t < actions.size(); ++t) {
        const int k = actions[t];
        const double s2 = stddev[k] * stddev[k];
        const double dev = rewards[t] - mean[k];
        ll += -(dev * dev) / (2.0 * s2) - std::log(stddev[k]) - kHalfLog2Pi;
    }
    return ll;
}

GaussianWitness gaussian_insufficiency_witness(double mu, double sigma) {
    GaussianWitness w;
    w.rewards_a = {mu, mu};
    w.rewards_b = {mu - 1.0, mu + 1.0};
    w.q = mu;
    w.var_a = 0.0;
    w.var_b = 1.0;
    const std::vector<int> arm = {0, 0};
    w.loglik_a = gaussian_loglik_from_trajectory({mu}, {sigma}, arm, w.rewards_a);
    w.loglik_b = gaussian_loglik_from_trajectory({mu}, {sigma}, arm, w.rewards_b);
    return w;
}

std::vector<double> q_star(const std::vector<double>& transition, int num_states, int num_actions,
                           const std::vector<double>& reward, int horizon) {
    TabularMdp mdp;
    mdp.num_states = num_states;
    mdp.num_actions = num_actions;
    mdp.task_horizon = horizon;
    mdp.allocate();
    mdp.transition = transition;
    mdp.mean_reward = reward;
    mdp.start_dist[0] = 1.0;
    return oracle_solve(mdp, horizon).q.q;
}

bool q_uniqueness_check(const std::vector<double>& transition, int num_states, int num_actions,
                        const std::vector<double>& reward1, const std::vector<double>& reward2,
                        int horizon, double tol) {
    const auto q1 = q_star(transition, num_states, num_actions, reward1, horizon);
    const auto q2 = q_star(transition, num_states, num_actions, reward2, horizon);
    for (size_t i = 0; i < q1.size(); ++i)
        if (std::abs(q1[i] - q2[i]) > tol) return false;
    return true;
}

namespace {

TabularMdp sample_analysis_mdp(const DuplicateExperimentSpec& spec, Rng& rng) {
    TabularMdp mdp;
    mdp.num_states = spec.num_states;
    mdp.num_actions = spec.num_actions;
    mdp.task_horizon = spec.task_horizon;
    mdp.reward_kind = RewardKind::gaussian_unit;
    mdp.allocate();
    mdp.start_dist[0] = 1.0;
    for (int s = 0; s < spec.num_states; ++s)
        for (int a = 0; a < spec.num_actions; ++a)
            mdp.reward_ref(s, a) = rng.normal(1.0, spec.beta);
    std::vector<double> row(spec.num_states);
    for (int s = 0; s < spec.num_states; ++s) {
        for (int a = 0; a < spec.num_actions; ++a) {
            rng.dirichlet(spec.alpha, row);
            for (int s2 = 0; s2 < spec.num_states; ++s2) mdp.trans_ref(s, a, s2) = row[s2];
        }
    }
    return mdp;
}

}  // namespace

std::vector<std::vector<double>> sample_q_tables(const DuplicateExperimentSpec& spec) {
    std::vector<std::vector<double>> tables(spec.num_mdps);
    parallel_for(spec.num_mdps, spec.threads, [&](int i) {
        Rng rng(derive_seed(spec.seed, 0x6475706c, i));
        const TabularMdp mdp = sample_analysis_mdp(spec, rng);
        tables[i] = oracle_solve(mdp, spec.task_horizon).q.q;
    });
    return tables;
}

int64_t count_duplicate_pairs(const std::vector<std::vector<double>>& tables, double delta) {
    const int n = static_cast<int>(tables.size());
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](int a, int b) { return tables[a][0] < tables[b][0]; });

    int64_t duplicates = 0;
    for (int i = 0; i < n; ++i) {
        const auto& qa = tables[order[i]];
        for (int j = i + 1; j < n; ++j) {
            const auto& qb = tables[order[j]];
            if (qb[0] - qa[0] >= delta) break;  // window bound on the sort key
            bool close = true;
            for (size_t d = 1; d < qa.size() && close; ++d)
                close = std::abs(qa[d] - qb[d]) < delta;
            if (close) ++duplicates;
        }
    }
    return duplicates;
}

DuplicateReport duplicate_probability(const DuplicateExperimentSpec& spec) {
    DuplicateReport report;
    report.spec = spec;
    const auto tables = sample_q_tables(spec);
    report.duplicate_pairs = count_duplicate_pairs(tables, spec.delta);
    report.total_pairs =
        static_cast<int64_t>(spec.num_mdps) * (spec.num_mdps - 1) / 2;
    report.fraction = static_cast<double>(report.duplicate_pairs) /
                      static_cast<double>(report.total_pairs);
    return report;
}

std::string DuplicateReport::text() const {
    std::ostringstream out;
    out << "duplicate Q* experiment\n";
    out << "  mdps=" << spec.num_mdps << " states=" << spec.num_states
        << " actions=" << spec.num_actions << " alpha=" << spec.alpha << " beta=" << spec.beta
        << " delta=" << spec.delta << " horizon=" << spec.task_horizon << " seed=" << spec.seed
        << "\n";
    out << "  duplicate pairs: " << duplicate_pairs << " of " << total_pairs
        << " unordered pairs (fraction " << format_double_short(fraction) << ")\n";
    // The (n-1)^2/2 pair count sometimes quoted for this experiment is an
    // approximation of n(n-1)/2; the exact unordered count is used here.
    return out.str();
}

std::vector<double> duplicate_fraction_over_time(const DuplicateExperimentSpec& spec, int steps,
                                                 int stride) {
    const int snapshots = steps / stride + 1;
    std::vector<std::vector<std::vector<double>>> q_at(snapshots);
    for (auto& v : q_at) v.resize(spec.num_mdps);

    parallel_for(spec.num_mdps, spec.threads, [&](int i) {
        Rng task_rng(derive_seed(spec.seed, 0x74696d65, i));
        TabularMdp mdp = sample_analysis_mdp(spec, task_rng);
        // Estimates mirror the noiseless Q* scan: observed rewards are the
        // mean-table entries themselves.
        mdp.reward_kind = RewardKind::deterministic;
        Env env(&mdp, derive_seed(spec.seed, 0x74696d66, i));
        Rng policy_rng(derive_seed(spec.seed, 0x74696d67, i));
        ModelEstimate model(mdp.num_states, mdp.num_actions);
        QTable q;
        q.reset(mdp.num_states, mdp.num_actions);
        env.reset();
        for (int t = 0; t <= steps; ++t) {
            if (t % stride == 0) q_at[t / stride][i] = q.q;
            if (t == steps) break;
            const int s = env.state();
            const int a = policy_rng.uniform_index(mdp.num_actions);
            const StepResult r = env.step(a);
            model.update(s, a, r.reward, r.next_state, r.terminal);
            q = value_iteration(model, spec.task_horizon);
            if (r.terminated()) env.reset();
        }
    });

    std::vector<double> fractions(snapshots, 0.0);
    const double total =
        static_cast<double>(spec.num_mdps) * (spec.num_mdps - 1) / 2.0;
    for (int s = 0; s < snapshots; ++s)
        fractions[s] = static_cast<double>(count_duplicate_pairs(q_at[s], spec.delta)) / total;
    return fractions;
}

namespace {

// One-hidden-layer softmax classifier trained with Adam.
class TaskClassifier {
public:
    TaskClassifier(int input_dim, int hidden, int classes, uint64_t seed)
        : input_dim_(input_dim), hidden_(hidden), classes_(classes) {
        using Init = ParamStore::Init;
        w1_ = store_.add("w1", {hidden, input_dim}, Init::fan_in_uniform, input_dim);
        b1_ = store_.add("b1", {hidden}, Init::zeros);
        w2_ = store_.add("w2", {classes, hidden}, Init::fan_in_uniform, hidden);
        b2_ = store_.add("b2", {classes}, Init::zeros);
        store_.allocate();
        Rng rng(seed);
        store_.initialize(rng);
    }

    void train(const std::vector<double>& x, const std::vector<int>& y, int epochs, double lr,
               uint64_t shuffle_seed) {
        const int n = static_cast<int>(y.size());
        const int minibatch = std::min(32, n);
        AdamOptimizer opt(store_.total(), lr, 0.9, 0.999, 1e-7);
        Rng shuffle(shuffle_seed);
        std::vector<int> order(n);
        std::iota(order.begin(), order.end(), 0);
        std::vector<double> grads(store_.total());
        std::vector<double> h(hidden_), logits(classes_), logp(classes_), dlogits(classes_),
            dh(hidden_);
        for (int epoch = 0; epoch < epochs; ++epoch) {
            for (int i = n - 1; i > 0; --i)
                std::swap(order[i], order[static_cast<int>(shuffle.uniform_int(i + 1))]);
            for (int start = 0; start + minibatch <= n; start += minibatch) {
                std::fill(grads.begin(), grads.end(), 0.0);
                for (int j = start; j < start + minibatch; ++j) {
                    const double* xi = x.data() + static_cast<size_t>(order[j]) * input_dim_;
                    forward(xi, h.data(), logits.data());
                    log_softmax(logits.data(), classes_, logp.data());
                    for (int c = 0; c < classes_; ++c)
                        dlogits[c] = std::exp(logp[c]) - (c == y[order[j]] ? 1.0 : 0.0);
                    backward(xi, h.data(), dlogits.data(), dh.data(), grads.data());
                }
                const double inv = 1.0 / minibatch;
                for (auto& g : grads) g *= inv;
                opt.step(store_.flat(), grads);
            }
        }
    }

    int predict(const double* xi) const {
        std::vector<double> h(hidden_), logits(classes_);
        forward(xi, h.data(), logits.data());
        int best = 0;
        for (int c = 1; c < classes_; ++c)
            if (logits[c] > logits[best]) best = c;
        return best;
    }

private:
    void forward(const double* xi, double* h, double* logits) const {
        const double* w1 = store_.data(w1_);
        const double* b1 = store_.data(b1_);
        for (int j = 0; j < hidden_; ++j) {
            double acc = b1[j];
            const double* row = w1 + static_cast<size_t>(j) * input_dim_;
            for (int i = 0; i < input_dim_; ++i) acc += row[i] * xi[i];
            h[j] = std::max(0.0, acc);
        }
        const double* w2 = store_.data(w2_);
        const double* b2 = store_.data(b2_);
        for (int c = 0; c < classes_; ++c) {
            double acc = b2[c];
            const double* row = w2 + static_cast<size_t>(c) * hidden_;
            for (int j = 0; j < hidden_; ++j) acc += row[j] * h[j];
            logits[c] = acc;
        }
    }

    void backward(const double* xi, const double* h, const double* dlogits, double* dh,
                  double* grads) const {
        const auto& infos = store_.infos();
        double* gw2 = grads + infos[w2_].offset;
        double* gb2 = grads + infos[b2_].offset;
        double* gw1 = grads + infos[w1_].offset;
        double* gb1 = grads + infos[b1_].offset;
        const double* w2 = store_.data(w2_);
        std::fill(dh, dh + hidden_, 0.0);
        for (int c = 0; c < classes_; ++c) {
            const double g = dlogits[c];
            if (g == 0.0) continue;
            double* row = gw2 + static_cast<size_t>(c) * hidden_;
            const double* w2row = w2 + static_cast<size_t>(c) * hidden_;
            for (int j = 0; j < hidden_; ++j) {
                row[j] += g * h[j];
                dh[j] += g * w2row[j];
            }
            gb2[c] += g;
        }
        for (int j = 0; j < hidden_; ++j) {
            if (h[j] == 0.0) continue;  // relu gate
            const double g = dh[j];
            double* row = gw1 + static_cast<size_t>(j) * input_dim_;
            for (int i = 0; i < input_dim_; ++i) row[i] += g * xi[i];
            gb1[j] += g;
        }
    }

    int input_dim_, hidden_, classes_;
    ParamStore store_;
    int w1_, b1_, w2_, b2_;
};

}  // namespace

ClassifierCurve task_classifier_experiment(const ClassifierExperimentSpec& spec) {
    DuplicateExperimentSpec base;
    base.num_states = 3;
    base.num_actions = 2;
    base.alpha = spec.alpha;
    base.beta = spec.reward_std;
    base.task_horizon = 10;

    const int rollouts = spec.train_rollouts + spec.test_rollouts;
    const int snapshots = spec.steps / spec.snapshot_stride + 1;
    const int q_dim = base.num_states * base.num_actions;

    // snapshots x (task, rollout) Q tables
    std::vector<std::vector<double>> features(
        snapshots, std::vector<double>(static_cast<size_t>(spec.num_tasks) * rollouts * q_dim));

    parallel_for(spec.num_tasks, spec.threads, [&](int task_idx) {
        Rng task_rng(derive_seed(spec.seed, 0x636c7331, task_idx));
        TabularMdp mdp = sample_analysis_mdp(base, task_rng);
        mdp.reward_kind = RewardKind::deterministic;
        for (int rollout = 0; rollout < rollouts; ++rollout) {
            const uint64_t rs = derive_seed(spec.seed, 0x636c7332,
                                            static_cast<uint64_t>(task_idx) * 1000 + rollout);
            Env env(&mdp, rs);
            Rng policy_rng(derive_seed(spec.seed, 0x636c7333,
                                       static_cast<uint64_t>(task_idx) * 1000 + rollout));
            ModelEstimate model(mdp.num_states, mdp.num_actions);
            QTable q;
            q.reset(mdp.num_states, mdp.num_actions);
            env.reset();
            for (int t = 0; t <= spec.steps; ++t) {
                if (t % spec.snapshot_stride == 0) {
                    double* dst = features[t / spec.snapshot_stride].data() +
                                  (static_cast<size_t>(task_idx) * rollouts + rollout) * q_dim;
                    std::copy(q.q.begin(), q.q.end(), dst);
                }
                if (t == spec.steps) break;
                const int s = env.state();
                const int a = policy_rng.uniform_index(mdp.num_actions);
                const StepResult r = env.step(a);
                model.update(s, a, r.reward, r.next_state, r.terminal);
                q = value_iteration(model, base.task_horizon);
                if (r.terminated()) env.reset();
            }
        }
    });

    ClassifierCurve curve;
    for (int snap = 0; snap < snapshots; ++snap) {
        const int t = snap * spec.snapshot_stride;
        std::vector<double> train_x;
        std::vector<int> train_y;
        std::vector<double> test_x;
        std::vector<int> test_y;
        for (int task = 0; task < spec.num_tasks; ++task) {
            for (int rollout = 0; rollout < rollouts; ++rollout) {
                const double* src = features[snap].data() +
                                    (static_cast<size_t>(task) * rollouts + rollout) * q_dim;
                auto& x = rollout < spec.train_rollouts ? train_x : test_x;
                auto& y = rollout < spec.train_rollouts ? train_y : test_y;
                x.insert(x.end(), src, src + q_dim);
                y.push_back(task);
            }
        }
        TaskClassifier clf(q_dim, spec.hidden, spec.num_tasks,
                           derive_seed(spec.seed, 0x636c7334, snap));
        clf.train(train_x, train_y, spec.epochs, spec.learning_rate,
                  derive_seed(spec.seed, 0x636c7335, snap));
        int correct = 0;
        for (size_t i = 0; i < test_y.size(); ++i) {
            if (clf.predict(test_x.data() + i * q_dim) == test_y[i]) ++correct;
        }
        curve.timesteps.push_back(t);
        curve.accuracy.push_back(static_cast<double>(correct) / static_cast<double>(test_y.size()));
    }

    std::ostringstream meta;
    meta << "task classifier: tasks=" << spec.num_tasks << " steps=" << spec.steps
         << " train_rollouts=" << spec.train_rollouts << " test_rollouts=" << spec.test_rollouts
         << " hidden=" << spec.hidden << " epochs=" << spec.epochs
         << " adam lr=" << spec.learning_rate << " betas=0.9,0.999 eps=1e-7"
         << " alpha=" << spec.alpha << " reward_std=" << spec.reward_std << " seed=" << spec.seed;
    curve.metadata = meta.str();
    return curve;
}

std::string ClassifierCurve::csv() const {
    std::string out = "timestep,accuracy\n";
    for (size_t i = 0; i < timesteps.size(); ++i)
        out += std::to_string(timesteps[i]) + "," + format_double(accuracy[i]) + "\n";
    return out;
}

}  // namespace rl3
