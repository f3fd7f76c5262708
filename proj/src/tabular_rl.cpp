#include "rl3/tabular_rl.hpp"

#include <algorithm>
#include <cassert>
#include <limits>
#include <sstream>

namespace rl3 {

std::string QTable::dump() const {
    std::ostringstream out;
    out << "qtable states=" << num_states << " actions=" << num_actions << "\n";
    for (int s = 0; s < num_states; ++s) {
        if (!known[s]) continue;
        out << "  s" << s << ":";
        for (int a = 0; a < num_actions; ++a) out << " " << format_double(value(s, a));
        out << "\n";
    }
    return out.str();
}

ModelEstimate::ModelEstimate(int num_states, int num_actions, double laplace_coeff) {
    reset(num_states, num_actions);
    laplace_coeff_ = laplace_coeff;
}

void ModelEstimate::reset(int num_states, int num_actions) {
    num_states_ = num_states;
    num_actions_ = num_actions;
    trans_counts_.assign(static_cast<size_t>(num_states) * num_actions * num_states, 0);
    sa_counts_.assign(static_cast<size_t>(num_states) * num_actions, 0);
    reward_sum_.assign(static_cast<size_t>(num_states) * num_actions, 0.0);
    visited_flag_.assign(num_states, 0);
    terminal_flag_.assign(num_states, 0);
    visited_sorted_.clear();
}

void ModelEstimate::touch(int s) {
    if (visited_flag_[s]) return;
    visited_flag_[s] = 1;
    visited_sorted_.insert(std::lower_bound(visited_sorted_.begin(), visited_sorted_.end(), s), s);
}

void ModelEstimate::update(int s, int a, double r, int s_next, bool terminal_next) {
    assert(s >= 0 && s < num_states_ && a >= 0 && a < num_actions_);
    assert(s_next >= 0 && s_next < num_states_);
    touch(s);
    touch(s_next);
    trans_counts_[(static_cast<size_t>(s) * num_actions_ + a) * num_states_ + s_next] += 1;
    sa_counts_[idx(s, a)] += 1;
    reward_sum_[idx(s, a)] += r;
    if (terminal_next) terminal_flag_[s_next] = 1;
}

std::vector<double> ModelEstimate::transition_row(int s, int a) const {
    const auto& vs = visited_sorted_;
    std::vector<double> row(vs.size(), 0.0);
    const double c = laplace_coeff_;
    const double denom = static_cast<double>(sa_counts_[idx(s, a)]) + c * static_cast<double>(vs.size());
    const size_t base = (static_cast<size_t>(s) * num_actions_ + a) * num_states_;
    for (size_t j = 0; j < vs.size(); ++j) {
        row[j] = (static_cast<double>(trans_counts_[base + vs[j]]) + c) / denom;
    }
    return row;
}

double ModelEstimate::reward_estimate(int s, int a) const {
    const int64_t n = sa_counts_[idx(s, a)];
    if (n == 0) return 0.0;
    return reward_sum_[idx(s, a)] / static_cast<double>(n);
}

std::string ModelEstimate::dump() const {
    std::ostringstream out;
    out << "model states=" << num_states_ << " actions=" << num_actions_
        << " visited=" << visited_sorted_.size() << " laplace=" << laplace_coeff_ << "\n";
    for (int s : visited_sorted_) {
        for (int a = 0; a < num_actions_; ++a) {
            if (sa_count(s, a) == 0) continue;
            out << "  (" << s << "," << a << ") n=" << sa_count(s, a)
                << " r=" << format_double(reward_estimate(s, a)) << " ->";
            for (int s2 : visited_sorted_) {
                const int64_t c = transition_count(s, a, s2);
                if (c > 0) out << " " << s2 << ":" << c;
            }
            out << "\n";
        }
    }
    return out.str();
}

namespace {

// Shared backup loop: `rows` holds one smoothed/renormalized probability row
// per (visited state, action), aligned with `states`. Synchronous sweeps in
// ascending state order; terminal states stay at value 0.
QTable run_backups(int num_states, int num_actions, const std::vector<int>& states,
                   const std::vector<std::vector<double>>& rows,
                   const std::vector<double>& rewards, const std::vector<uint8_t>& terminal,
                   int horizon, double bellman_tol) {
    QTable table;
    table.reset(num_states, num_actions);
    const int n = static_cast<int>(states.size());
    for (int s : states) table.known[s] = 1;
    if (n == 0) return table;

    std::vector<double> v_old(n, 0.0), v_new(n, 0.0);
    for (int sweep = 0; sweep < horizon; ++sweep) {
        double max_err = 0.0;
        for (int i = 0; i < n; ++i) {
            const int s = states[i];
            if (terminal[s]) {
                v_new[i] = 0.0;
                continue;
            }
            double best = -std::numeric_limits<double>::infinity();
            for (int a = 0; a < num_actions; ++a) {
                const auto& row = rows[static_cast<size_t>(i) * num_actions + a];
                double q = rewards[static_cast<size_t>(i) * num_actions + a];
                for (int j = 0; j < n; ++j) q += row[j] * v_old[j];
                table.value_ref(s, a) = q;
                best = std::max(best, q);
            }
            v_new[i] = best;
            max_err = std::max(max_err, std::abs(v_new[i] - v_old[i]));
        }
        std::swap(v_old, v_new);
        if (max_err < bellman_tol) break;
    }
    return table;
}

}  // namespace

QTable value_iteration(const ModelEstimate& model, int horizon, double bellman_tol) {
    const auto& states = model.visited_states();
    const int n = static_cast<int>(states.size());
    const int num_actions = model.num_actions();

    std::vector<std::vector<double>> rows(static_cast<size_t>(n) * num_actions);
    std::vector<double> rewards(static_cast<size_t>(n) * num_actions, 0.0);
    std::vector<uint8_t> terminal(model.num_states(), 0);
    for (int i = 0; i < n; ++i) {
        const int s = states[i];
        terminal[s] = model.is_terminal(s) ? 1 : 0;
        for (int a = 0; a < num_actions; ++a) {
            rows[static_cast<size_t>(i) * num_actions + a] = model.transition_row(s, a);
            rewards[static_cast<size_t>(i) * num_actions + a] = model.reward_estimate(s, a);
        }
    }
    return run_backups(model.num_states(), num_actions, states, rows, rewards, terminal, horizon,
                       bellman_tol);
}

QTable value_iteration_true_restricted(const TabularMdp& mdp, const std::vector<int>& states,
                                       int horizon, double bellman_tol) {
    std::vector<int> sorted = states;
    std::sort(sorted.begin(), sorted.end());
    const int n = static_cast<int>(sorted.size());
    const int num_actions = mdp.num_actions;

    std::vector<std::vector<double>> rows(static_cast<size_t>(n) * num_actions);
    std::vector<double> rewards(static_cast<size_t>(n) * num_actions, 0.0);
    for (int i = 0; i < n; ++i) {
        const int s = sorted[i];
        for (int a = 0; a < num_actions; ++a) {
            std::vector<double> row(n, 0.0);
            double mass = 0.0;
            for (int j = 0; j < n; ++j) {
                row[j] = mdp.trans(s, a, sorted[j]);
                mass += row[j];
            }
            if (mass > 0.0) {
                for (auto& p : row) p /= mass;
            } else {
                for (auto& p : row) p = 1.0 / n;
            }
            rows[static_cast<size_t>(i) * num_actions + a] = std::move(row);
            rewards[static_cast<size_t>(i) * num_actions + a] = mdp.reward(s, a);
        }
    }
    return run_backups(mdp.num_states, num_actions, sorted, rows, rewards, mdp.terminal, horizon,
                       bellman_tol);
}

OracleSolution oracle_solve(const TabularMdp& mdp, int horizon) {
    const int S = mdp.num_states;
    const int A = mdp.num_actions;
    QTable table;
    table.reset(S, A);
    for (int s = 0; s < S; ++s) table.known[s] = 1;

    std::vector<double> v_old(S, 0.0), v_new(S, 0.0);
    for (int sweep = 0; sweep < horizon; ++sweep) {
        for (int s = 0; s < S; ++s) {
            if (mdp.is_terminal(s)) {
                v_new[s] = 0.0;
                continue;
            }
            double best = -std::numeric_limits<double>::infinity();
            for (int a = 0; a < A; ++a) {
                const double* row = mdp.trans_row(s, a);
                double q = mdp.reward(s, a);
                for (int s2 = 0; s2 < S; ++s2) q += row[s2] * v_old[s2];
                table.value_ref(s, a) = q;
                best = std::max(best, q);
            }
            v_new[s] = best;
        }
        std::swap(v_old, v_new);
    }

    OracleSolution sol;
    sol.q = std::move(table);
    for (int s = 0; s < S; ++s) sol.optimal_return += mdp.start_dist[s] * v_old[s];
    return sol;
}

OracleMetaPolicy::OracleMetaPolicy(const TabularMdp& mdp, int budget) : budget_(budget) {
    num_states_ = mdp.num_states;
    num_actions_ = mdp.num_actions;
    // With an unbounded task horizon the episode step never forces a reset,
    // so a single slot suffices.
    horizon_slots_ = mdp.task_horizon > 0 ? mdp.task_horizon : 1;
    const int S = num_states_;
    const size_t layer = static_cast<size_t>(horizon_slots_) * S;

    best_action_.assign(static_cast<size_t>(budget) * layer, 0);
    std::vector<double> w_next(layer, 0.0), w_cur(layer, 0.0);
    double restart_next = 0.0;  // value of a fresh episode at meta step t+1

    for (int t = budget - 1; t >= 0; --t) {
        for (int ep = 0; ep < horizon_slots_; ++ep) {
            const bool truncates = mdp.task_horizon > 0 && ep + 1 == mdp.task_horizon;
            const int next_ep = mdp.task_horizon > 0 ? ep + 1 : 0;
            for (int s = 0; s < S; ++s) {
                if (mdp.is_terminal(s)) {
                    w_cur[static_cast<size_t>(ep) * S + s] = 0.0;
                    continue;
                }
                double best = -std::numeric_limits<double>::infinity();
                int best_a = 0;
                for (int a = 0; a < num_actions_; ++a) {
                    const double* row = mdp.trans_row(s, a);
                    double q = mdp.reward(s, a);
                    for (int s2 = 0; s2 < S; ++s2) {
                        const double p = row[s2];
                        if (p == 0.0) continue;
                        double cont;
                        if (mdp.is_terminal(s2) || truncates)
                            cont = restart_next;
                        else
                            cont = w_next[static_cast<size_t>(next_ep) * S + s2];
                        q += p * cont;
                    }
                    if (q > best) {
                        best = q;
                        best_a = a;
                    }
                }
                w_cur[static_cast<size_t>(ep) * S + s] = best;
                best_action_[static_cast<size_t>(t) * layer + static_cast<size_t>(ep) * S + s] =
                    best_a;
            }
        }
        restart_next = 0.0;
        for (int s = 0; s < S; ++s) restart_next += mdp.start_dist[s] * w_cur[s];
        std::swap(w_cur, w_next);
    }
    value_ = restart_next;
}

int OracleMetaPolicy::action(int state, int episode_step, int meta_step) const {
    const int ep = std::min(episode_step, horizon_slots_ - 1);
    const size_t layer = static_cast<size_t>(horizon_slots_) * num_states_;
    return best_action_[static_cast<size_t>(meta_step) * layer +
                        static_cast<size_t>(ep) * num_states_ + state];
}

double oracle_meta_return(const TabularMdp& mdp, int budget) {
    return OracleMetaPolicy(mdp, budget).value();
}

}  // namespace rl3
