#include "rl3/envs.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <sstream>

#include "rl3/tabular_rl.hpp"

namespace rl3 {

bool TabularMdp::validate(std::string* why) const {
    auto bad = [&](const std::string& msg) {
        if (why) *why = msg;
        return false;
    };
    if (num_states < 1 || num_actions < 1) return bad("empty state or action space");
    if (task_horizon < 0) return bad("negative task horizon");
    for (int s = 0; s < num_states; ++s) {
        for (int a = 0; a < num_actions; ++a) {
            double sum = 0.0;
            for (int s2 = 0; s2 < num_states; ++s2) {
                const double p = trans(s, a, s2);
                if (p < 0.0) return bad("negative transition probability");
                sum += p;
            }
            if (std::abs(sum - 1.0) > 1e-9) {
                std::ostringstream msg;
                msg << "transition row (" << s << "," << a << ") sums to " << sum;
                return bad(msg.str());
            }
        }
    }
    double start_sum = 0.0;
    for (double p : start_dist) {
        if (p < 0.0) return bad("negative start probability");
        start_sum += p;
    }
    if (std::abs(start_sum - 1.0) > 1e-9) return bad("start distribution does not sum to 1");
    if (reward_kind == RewardKind::next_state_table &&
        state_reward.size() != static_cast<size_t>(num_states))
        return bad("state reward table size mismatch");
    return true;
}

std::string family_name(TaskFamily f) {
    switch (f) {
        case TaskFamily::bandits: return "bandits";
        case TaskFamily::random_mdps: return "random_mdps";
        case TaskFamily::gridworld: return "gridworld";
    }
    return "?";
}

TaskFamily family_from_name(const std::string& name) {
    if (name == "bandits") return TaskFamily::bandits;
    if (name == "random_mdps") return TaskFamily::random_mdps;
    if (name == "gridworld") return TaskFamily::gridworld;
    fail("unknown task family: " + name);
}

namespace {

const char* filter_name(GridFilterMode m) {
    switch (m) {
        case GridFilterMode::literal: return "literal";
        case GridFilterMode::flipped: return "flipped";
        case GridFilterMode::solvable: return "solvable";
    }
    return "?";
}

GridFilterMode filter_from_name(const std::string& name) {
    if (name == "literal") return GridFilterMode::literal;
    if (name == "flipped") return GridFilterMode::flipped;
    if (name == "solvable") return GridFilterMode::solvable;
    fail("unknown gridworld filter mode: " + name);
}

}  // namespace

void TaskDistributionSpec::validate() const {
    switch (family) {
        case TaskFamily::bandits:
            if (num_arms < 2) fail("bandits need at least 2 arms");
            if (!variant.empty() && variant != "ood")
                fail("unknown bandits variant: " + variant);
            break;
        case TaskFamily::random_mdps:
            if (dirichlet_alpha <= 0.0) fail("dirichlet alpha must be positive");
            if (!variant.empty() && variant != "ood")
                fail("unknown random_mdps variant: " + variant);
            break;
        case TaskFamily::gridworld: {
            static const char* known[] = {"",        "canonical", "dense",  "deterministic",
                                          "watery",  "dangerous", "corner", "mini"};
            bool ok = false;
            for (const char* v : known) ok = ok || variant == v;
            if (!ok) fail("unknown gridworld variant: " + variant);
            if (grid_size != 7 && grid_size != 11 && grid_size != 13)
                fail("gridworld size must be 7, 11 or 13");
            break;
        }
    }
}

std::string TaskDistributionSpec::emit() const {
    std::ostringstream out;
    out << "family = " << family_name(family) << "\n";
    out << "variant = " << variant << "\n";
    out << "seed = " << seed << "\n";
    switch (family) {
        case TaskFamily::bandits: out << "num_arms = " << num_arms << "\n"; break;
        case TaskFamily::random_mdps:
            out << "dirichlet_alpha = " << format_double(dirichlet_alpha) << "\n";
            break;
        case TaskFamily::gridworld:
            out << "grid_size = " << grid_size << "\n";
            out << "grid_filter = " << filter_name(grid_filter) << "\n";
            break;
    }
    return out.str();
}

TaskDistributionSpec TaskDistributionSpec::parse(const std::string& text) {
    TaskDistributionSpec spec;
    std::istringstream in(text);
    std::string line;
    bool saw_family = false;
    while (std::getline(in, line)) {
        const auto eq = line.find('=');
        if (eq == std::string::npos) continue;
        auto trim = [](std::string s) {
            const auto b = s.find_first_not_of(" \t");
            const auto e = s.find_last_not_of(" \t\r");
            return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
        };
        const std::string key = trim(line.substr(0, eq));
        const std::string val = trim(line.substr(eq + 1));
        if (key == "family") {
            spec.family = family_from_name(val);
            saw_family = true;
        } else if (key == "variant")
            spec.variant = val;
        else if (key == "seed")
            spec.seed = std::stoull(val);
        else if (key == "num_arms")
            spec.num_arms = std::stoi(val);
        else if (key == "dirichlet_alpha")
            spec.dirichlet_alpha = std::stod(val);
        else if (key == "grid_size")
            spec.grid_size = std::stoi(val);
        else if (key == "grid_filter")
            spec.grid_filter = filter_from_name(val);
        else
            fail("unknown task spec key: " + key);
    }
    if (!saw_family) fail("task spec missing 'family'");
    spec.validate();
    return spec;
}

TabularMdp generate_bandit(int num_arms, bool ood, Rng& rng) {
    if (num_arms < 2) fail("bandits need at least 2 arms");
    TabularMdp mdp;
    mdp.num_states = 1;
    mdp.num_actions = num_arms;
    mdp.task_horizon = 1;
    mdp.reward_kind = RewardKind::bernoulli;
    mdp.allocate();
    mdp.start_dist[0] = 1.0;
    for (int a = 0; a < num_arms; ++a) {
        // Success probabilities are uniform in distribution; the OOD variant
        // draws from N(0.5, 0.5) and clamps so they stay valid probabilities.
        double p = ood ? std::clamp(rng.normal(0.5, 0.5), 0.0, 1.0) : rng.uniform01();
        mdp.reward_ref(0, a) = p;
        mdp.trans_ref(0, a, 0) = 1.0;
    }
    return mdp;
}

TabularMdp generate_random_mdp(double dirichlet_alpha, Rng& rng) {
    if (dirichlet_alpha <= 0.0) fail("dirichlet alpha must be positive");
    constexpr int S = 10;
    constexpr int A = 5;
    TabularMdp mdp;
    mdp.num_states = S;
    mdp.num_actions = A;
    mdp.task_horizon = 10;
    mdp.reward_kind = RewardKind::gaussian_unit;
    mdp.allocate();
    mdp.start_dist[0] = 1.0;  // every episode begins at the first state
    for (int s = 0; s < S; ++s)
        for (int a = 0; a < A; ++a) mdp.reward_ref(s, a) = rng.normal(1.0, 1.0);
    std::vector<double> row(S);
    for (int s = 0; s < S; ++s) {
        for (int a = 0; a < A; ++a) {
            rng.dirichlet(dirichlet_alpha, row);
            for (int s2 = 0; s2 < S; ++s2) mdp.trans_ref(s, a, s2) = row[s2];
        }
    }
    return mdp;
}

namespace {

constexpr double kTileReward[] = {
    -1.0,    // normal
    0.0,     // obstacle (unreachable)
    -2.0,    // water
    -10.0,   // warning
    -100.0,  // danger
    0.0,     // goal
};

// up, right, down, left, stay
constexpr int kNumGridActions = 5;
constexpr int kDr[] = {-1, 0, 1, 0, 0};
constexpr int kDc[] = {0, 1, 0, -1, 0};

struct GridBuilder {
    const GridworldParams& p;
    Rng& rng;
    GridWorldLayout layout;

    explicit GridBuilder(const GridworldParams& params, Rng& r) : p(params), rng(r) {}

    int cell(int r, int c) const { return r * p.size + c; }
    bool in_bounds(int r, int c) const { return r >= 0 && r < p.size && c >= 0 && c < p.size; }
    bool free_cell(int idx) const {
        return layout.tiles[idx] == Tile::normal && idx != layout.start && idx != layout.goal;
    }

    bool place_run(int len, Tile tile) {
        for (int attempt = 0; attempt < 100; ++attempt) {
            const bool horizontal = rng.bernoulli(0.5);
            const int r = rng.uniform_index(horizontal ? p.size : p.size - len + 1);
            const int c = rng.uniform_index(horizontal ? p.size - len + 1 : p.size);
            bool ok = true;
            for (int i = 0; i < len && ok; ++i)
                ok = free_cell(cell(r + (horizontal ? 0 : i), c + (horizontal ? i : 0)));
            if (!ok) continue;
            for (int i = 0; i < len; ++i)
                layout.tiles[cell(r + (horizontal ? 0 : i), c + (horizontal ? i : 0))] = tile;
            return true;
        }
        return false;
    }

    bool build_layout() {
        layout.size = p.size;
        layout.tiles.assign(static_cast<size_t>(p.size) * p.size, Tile::normal);
        layout.start = cell(p.size / 2, p.size / 2);

        std::vector<int> goal_candidates;
        for (int idx = 0; idx < p.size * p.size; ++idx) {
            const int manhat = std::abs(idx / p.size - p.size / 2) + std::abs(idx % p.size - p.size / 2);
            if (manhat >= p.min_goal_manhat) goal_candidates.push_back(idx);
        }
        if (goal_candidates.empty())
            fail("no cell satisfies min_goal_manhat on this grid size");
        layout.goal = goal_candidates[rng.uniform_index(static_cast<int>(goal_candidates.size()))];
        layout.tiles[layout.goal] = Tile::goal;

        for (int i = 0; i < p.num_obstacle_sets; ++i)
            if (!place_run(p.obstacle_set_len, Tile::obstacle)) return false;
        for (int i = 0; i < p.num_water_sets; ++i)
            if (!place_run(p.water_set_len, Tile::water)) return false;
        for (int i = 0; i < p.num_dangers; ++i)
            if (!place_run(1, Tile::danger)) return false;

        // Warning rings overwrite normal tiles only; the start tile stays clear.
        for (int idx = 0; idx < p.size * p.size; ++idx) {
            if (layout.tiles[idx] != Tile::danger) continue;
            const int r = idx / p.size, c = idx % p.size;
            for (int d = 0; d < 4; ++d) {
                const int nr = r + kDr[d], nc = c + kDc[d];
                if (!in_bounds(nr, nc)) continue;
                const int n = cell(nr, nc);
                if (layout.tiles[n] == Tile::normal && n != layout.start)
                    layout.tiles[n] = Tile::warning;
            }
        }
        return true;
    }

};

}  // namespace

TabularMdp gridworld_mdp_from_layout(const GridWorldLayout& layout, double slip_prob) {
    TabularMdp mdp;
    const int size = layout.size;
    const int S = size * size;
    mdp.num_states = S;
    mdp.num_actions = kNumGridActions;
    mdp.task_horizon = 0;  // episodes end only at the goal or a danger tile
    mdp.reward_kind = RewardKind::next_state_table;
    mdp.allocate();
    mdp.state_reward.resize(S);
    mdp.start_dist[layout.start] = 1.0;

    for (int idx = 0; idx < S; ++idx) {
        const Tile t = layout.tiles[idx];
        mdp.state_reward[idx] = kTileReward[static_cast<int>(t)];
        if (t == Tile::goal || t == Tile::danger) mdp.terminal[idx] = 1;
    }

    for (int idx = 0; idx < S; ++idx) {
        const Tile t = layout.tiles[idx];
        if (t == Tile::obstacle || mdp.terminal[idx]) {
            for (int a = 0; a < kNumGridActions; ++a) mdp.trans_ref(idx, a, idx) = 1.0;
            continue;
        }
        const double slip = t == Tile::water ? 1.0 : slip_prob;
        const int r = idx / size, c = idx % size;
        auto landing = [&](int dir) {
            const int nr = r + kDr[dir], nc = c + kDc[dir];
            if (nr < 0 || nr >= size || nc < 0 || nc >= size) return idx;
            const int n = nr * size + nc;
            return layout.tiles[n] == Tile::obstacle ? idx : n;
        };
        for (int a = 0; a < kNumGridActions; ++a) {
            if (a == 4) {  // stay
                mdp.trans_ref(idx, a, idx) = 1.0;
                mdp.reward_ref(idx, a) = mdp.state_reward[idx];
                continue;
            }
            // Slipping lands on one of the two directions orthogonal to the
            // intended move, each equally likely.
            mdp.trans_ref(idx, a, landing(a)) += 1.0 - slip;
            mdp.trans_ref(idx, a, landing((a + 1) % 4)) += slip / 2.0;
            mdp.trans_ref(idx, a, landing((a + 3) % 4)) += slip / 2.0;
            double expected = 0.0;
            for (int s2 = 0; s2 < S; ++s2) expected += mdp.trans(idx, a, s2) * mdp.state_reward[s2];
            mdp.reward_ref(idx, a) = expected;
        }
    }
    return mdp;
}

namespace {

bool filter_accepts(GridFilterMode mode, double optimal_return_100) {
    switch (mode) {
        case GridFilterMode::literal: return optimal_return_100 >= 50.0 && optimal_return_100 <= 100.0;
        case GridFilterMode::flipped:
            return optimal_return_100 >= -100.0 && optimal_return_100 <= -50.0;
        case GridFilterMode::solvable:
            // The goal must be reachable at a bounded expected cost; anything
            // worse than -50 over 100 steps means the grid is effectively
            // unsolvable, and 0 is unreachable with all-negative tiles.
            return optimal_return_100 >= -50.0 && optimal_return_100 < 0.0;
    }
    return false;
}

}  // namespace

GridworldParams gridworld_params_for(int size, const std::string& variant, GridFilterMode filter) {
    GridworldParams p;
    p.size = size;
    p.filter = filter;
    if (variant == "mini") {
        // Desk-scale grid, not part of the benchmark family definitions.
        p.size = 7;
        p.num_obstacle_sets = 4;
        p.obstacle_set_len = 2;
        p.num_water_sets = 2;
        p.water_set_len = 2;
        p.num_dangers = 1;
        p.min_goal_manhat = 4;
        return p;
    }
    if (variant == "dense") p.obstacle_set_len = 4;
    if (variant == "deterministic") p.slip_prob = 0.0;
    if (variant == "watery") p.num_water_sets = 8;
    if (variant == "dangerous") p.num_dangers = 4;
    if (variant == "corner") p.min_goal_manhat = 12;
    return p;
}

GeneratedTask generate_gridworld(const GridworldParams& params, Rng& rng) {
    static bool warned_literal = false;
    double last_return = 0.0;
    for (int attempt = 0; attempt < params.max_generation_attempts; ++attempt) {
        GridBuilder builder(params, rng);
        if (!builder.build_layout()) continue;
        GeneratedTask task;
        task.mdp = gridworld_mdp_from_layout(builder.layout, params.slip_prob);
        last_return = oracle_solve(task.mdp, 100).optimal_return;
        if (filter_accepts(params.filter, last_return)) {
            task.layout = std::move(builder.layout);
            return task;
        }
        if (params.filter == GridFilterMode::literal && !warned_literal) {
            warned_literal = true;
            std::cerr << "gridworld filter 'literal' expects an optimal 100-step return in "
                         "[50,100], but step rewards are all non-positive (got "
                      << last_return << "); use filter mode 'solvable' or 'flipped'\n";
        }
    }
    std::ostringstream msg;
    msg << "gridworld generation failed after " << params.max_generation_attempts
        << " attempts (filter=" << filter_name(params.filter)
        << ", last optimal 100-step return=" << last_return << ")";
    fail(msg.str());
}

GeneratedTask generate_task(const TaskDistributionSpec& spec, uint64_t task_seed) {
    spec.validate();
    Rng rng(task_seed);
    GeneratedTask task;
    task.seed = task_seed;
    switch (spec.family) {
        case TaskFamily::bandits:
            task.mdp = generate_bandit(spec.num_arms, spec.variant == "ood", rng);
            break;
        case TaskFamily::random_mdps: {
            const double alpha = spec.variant == "ood" ? 0.25 : spec.dirichlet_alpha;
            task.mdp = generate_random_mdp(alpha, rng);
            break;
        }
        case TaskFamily::gridworld: {
            const auto params = gridworld_params_for(spec.grid_size, spec.variant, spec.grid_filter);
            task = generate_gridworld(params, rng);
            task.seed = task_seed;
            break;
        }
    }
    return task;
}

FamilyTraits family_traits(TaskFamily family, int task_horizon, int interaction_budget) {
    FamilyTraits t;
    switch (family) {
        case TaskFamily::bandits:
            t.reward_lo = 0.0;
            t.reward_hi = 1.0;
            t.value_scale = 1.0;
            t.episode_time_denom = std::max(1, task_horizon);
            break;
        case TaskFamily::random_mdps:
            // Mean rewards are N(1,1) with unit observation noise; [-5,7] is a
            // fixed window wide enough that clamping is negligible.
            t.reward_lo = -5.0;
            t.reward_hi = 7.0;
            t.value_scale = 40.0;
            t.episode_time_denom = std::max(1, task_horizon);
            break;
        case TaskFamily::gridworld:
            t.reward_lo = -100.0;
            t.reward_hi = 0.0;
            // Episodes have no fixed horizon, so the budget caps value
            // magnitudes for the common-case -1 tiles.
            t.value_scale = std::max(1, interaction_budget);
            t.episode_time_denom = std::max(1, interaction_budget);
            break;
    }
    return t;
}

int Env::reset() {
    state_ = rng_.categorical(mdp_->start_dist.data(), mdp_->num_states);
    episode_step_ = 0;
    done_ = false;
    return state_;
}

StepResult Env::step(int action) {
    if (done_) fail("step() on a terminated environment; call reset() first");
    if (action < 0 || action >= mdp_->num_actions) fail("action index out of range");

    const int s = state_;
    const int s2 = rng_.categorical(mdp_->trans_row(s, action), mdp_->num_states);

    StepResult result;
    result.next_state = s2;
    switch (mdp_->reward_kind) {
        case RewardKind::deterministic: result.reward = mdp_->reward(s, action); break;
        case RewardKind::gaussian_unit: result.reward = rng_.normal(mdp_->reward(s, action), 1.0); break;
        case RewardKind::bernoulli:
            result.reward = rng_.bernoulli(mdp_->reward(s, action)) ? 1.0 : 0.0;
            break;
        case RewardKind::next_state_table: result.reward = mdp_->state_reward[s2]; break;
    }

    state_ = s2;
    episode_step_ += 1;
    result.terminal = mdp_->is_terminal(s2);
    result.truncated = mdp_->task_horizon > 0 && episode_step_ >= mdp_->task_horizon;
    done_ = result.terminated();
    return result;
}

}  // namespace rl3
