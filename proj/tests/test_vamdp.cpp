#include <doctest.h>

#include <cmath>

#include "rl3/abstraction.hpp"
#include "rl3/envs.hpp"
#include "rl3/vamdp.hpp"

using namespace rl3;

namespace {

TabularMdp fixed_bandit(std::vector<double> probs) {
    TabularMdp mdp;
    mdp.num_states = 1;
    mdp.num_actions = static_cast<int>(probs.size());
    mdp.task_horizon = 1;
    mdp.reward_kind = RewardKind::bernoulli;
    mdp.allocate();
    mdp.start_dist[0] = 1.0;
    for (int a = 0; a < mdp.num_actions; ++a) {
        mdp.reward_ref(0, a) = probs[a];
        mdp.trans_ref(0, a, 0) = 1.0;
    }
    return mdp;
}

// 3x3, start center, goal directly right of the start, deterministic moves.
GridWorldLayout tiny_grid() {
    GridWorldLayout layout;
    layout.size = 3;
    layout.tiles.assign(9, Tile::normal);
    layout.start = 4;
    layout.goal = 5;
    layout.tiles[5] = Tile::goal;
    return layout;
}

}  // namespace

TEST_CASE("reset observation: zero augmentation, correct dimension") {
    const TabularMdp mdp = fixed_bandit({0.1, 0.2, 0.3, 0.4, 0.5});
    VamdpEnv env(&mdp, TaskFamily::bandits, 20, 3);
    const auto obs = env.aug_observation();
    REQUIRE(static_cast<int>(obs.size()) == 1 + 2 * 5 + 3);  // 14
    const AugLayout lay = env.aug_layout();
    CHECK(obs[lay.one_hot()] == 1.0);
    for (int a = 0; a < 5; ++a) {
        CHECK(obs[lay.advantages() + a] == 0.0);
        CHECK(obs[lay.counts() + a] == 0.0);
    }
    CHECK(obs[lay.state_value()] == 0.0);
    CHECK(obs[lay.episode_time()] == 0.0);
    CHECK(obs[lay.meta_time()] == 0.0);
}

TEST_CASE("single pull: counts and Q reflect one update") {
    const TabularMdp mdp = fixed_bandit({0.0, 0.0, 1.0, 0.0, 0.0});
    VamdpEnv env(&mdp, TaskFamily::bandits, 20, 3);
    const auto r = env.step(2);
    CHECK(r.reward == 1.0);
    CHECK(r.episode_ended);  // task horizon 1 truncates every episode
    CHECK(env.counts().count(0, 2) == 1);
    CHECK(env.q().value(0, 2) == doctest::Approx(1.0));
    for (int a = 0; a < 5; ++a)
        if (a != 2) CHECK(env.q().value(0, a) == 0.0);

    const auto obs = env.aug_observation();
    const AugLayout lay = env.aug_layout();
    CHECK(obs[lay.advantages() + 2] == 0.0);
    CHECK(obs[lay.advantages() + 0] == doctest::Approx(-1.0));
    CHECK(obs[lay.state_value()] == doctest::Approx(1.0));
    CHECK(obs[lay.counts() + 2] == doctest::Approx(0.5));  // n/(1+t) = 1/2
    CHECK(obs[lay.meta_time()] == doctest::Approx(1.0 / 20.0));
}

TEST_CASE("no leakage across meta-episodes") {
    const TabularMdp mdp = fixed_bandit({0.9, 0.9, 0.9, 0.9, 0.9});
    VamdpEnv env(&mdp, TaskFamily::bandits, 8, 3);
    const auto first = env.aug_observation();
    for (int t = 0; t < 8; ++t) env.step(t % 5);
    CHECK(env.meta_terminated());
    env.reset();
    const auto second = env.aug_observation();
    CHECK(first == second);
    CHECK(env.counts().total() == 0);
}

TEST_CASE("goal reach auto-resets the task but keeps Q, N and the model") {
    const GridWorldLayout layout = tiny_grid();
    const TabularMdp mdp = gridworld_mdp_from_layout(layout, 0.0);
    VamdpEnv env(&mdp, TaskFamily::gridworld, 50, 5);
    const auto r = env.step(1);  // move right into the goal
    CHECK(r.reward == 0.0);      // goal tile entry reward
    CHECK(r.episode_ended);
    CHECK(!r.meta_terminated);
    CHECK(env.state() == layout.start);  // auto-reset
    CHECK(env.episode_step() == 0);
    CHECK(env.counts().count(4, 1) == 1);
    CHECK(env.model().sa_count(4, 1) == 1);
    CHECK(env.q().known[4]);
}

TEST_CASE("meta termination at t = H, stepping past is an error") {
    const TabularMdp mdp = fixed_bandit({0.5, 0.5});
    VamdpEnv env(&mdp, TaskFamily::bandits, 3, 1);
    env.step(0);
    env.step(1);
    const auto last = env.step(0);
    CHECK(last.meta_terminated);
    CHECK_THROWS(env.step(0));
}

TEST_CASE("rl2 observation: dimension and first-step fields") {
    Rng rng(12);
    const TabularMdp mdp = generate_random_mdp(1.0, rng);
    Rl2Env env(&mdp, TaskFamily::random_mdps, 30, 4);
    const auto obs = env.observation();
    REQUIRE(static_cast<int>(obs.size()) == 10 + 5 + 1 + 2);  // 18
    for (int a = 0; a < 5; ++a) CHECK(obs[10 + a] == 0.0);  // no previous action
    // previous reward 0 maps to the fixed family affine midpoint
    CHECK(obs[15] == doctest::Approx((0.0 - -5.0) / 12.0));
    CHECK(obs[16] == 0.0);
    CHECK(obs[17] == 0.0);
}

TEST_CASE("gridworld reward -100 normalizes to 0 in rl2 fields") {
    GridWorldLayout layout = tiny_grid();
    layout.tiles[5] = Tile::danger;
    layout.goal = 0;
    layout.tiles[0] = Tile::goal;
    const TabularMdp mdp = gridworld_mdp_from_layout(layout, 0.0);
    Rl2Env env(&mdp, TaskFamily::gridworld, 10, 4);
    env.step(1);  // into the danger tile, reward -100
    const auto obs = env.observation();
    const int S = mdp.num_states, k = mdp.num_actions;
    CHECK(obs[S + k] == 0.0);  // (-100 - -100) / 100
}

TEST_CASE("permutation of the transition multiset leaves (q, n) unchanged") {
    // Deterministic 1-state task with 2 actions and distinct fixed rewards;
    // two interleavings of the same action multiset.
    TabularMdp mdp;
    mdp.num_states = 1;
    mdp.num_actions = 2;
    mdp.task_horizon = 0;
    mdp.reward_kind = RewardKind::deterministic;
    mdp.allocate();
    mdp.start_dist[0] = 1.0;
    mdp.trans_ref(0, 0, 0) = 1.0;
    mdp.trans_ref(0, 1, 0) = 1.0;
    mdp.reward_ref(0, 0) = 1.0;
    mdp.reward_ref(0, 1) = 2.0;

    VamdpEnv env_a(&mdp, TaskFamily::bandits, 8, 9);
    VamdpEnv env_b(&mdp, TaskFamily::bandits, 8, 9);
    for (int a : {0, 1, 0, 1, 1, 0}) env_a.step(a);
    for (int a : {1, 1, 0, 0, 0, 1}) env_b.step(a);
    CHECK(env_a.q().q == env_b.q().q);  // bitwise
    CHECK(env_a.counts().n == env_b.counts().n);
}

TEST_CASE("counts always sum to t") {
    Rng rng(19);
    const TabularMdp mdp = generate_random_mdp(1.0, rng);
    VamdpEnv env(&mdp, TaskFamily::random_mdps, 40, 21);
    Rng policy(22);
    for (int t = 0; t < 40; ++t) {
        env.step(policy.uniform_index(5));
        CHECK(env.counts().total() == env.t());
    }
}

TEST_CASE("true-model substitution converges to the oracle start value") {
    // Fixed deterministic grid, exhaustive exploration.
    GridWorldLayout layout;
    layout.size = 4;
    layout.tiles.assign(16, Tile::normal);
    layout.start = 5;
    layout.goal = 15;
    layout.tiles[15] = Tile::goal;
    const TabularMdp mdp = gridworld_mdp_from_layout(layout, 0.0);

    VamdpOptions options;
    options.use_true_model = true;
    VamdpEnv env(&mdp, TaskFamily::gridworld, 400, 30, options);
    Rng policy(31);
    while (!env.meta_terminated()) env.step(policy.uniform_index(5));
    for (int s = 0; s < 16; ++s) REQUIRE(env.model().visited(s));

    const double oracle = oracle_solve(mdp, 400).q.state_value(layout.start);
    CHECK(std::abs(env.q().state_value(layout.start) - oracle) < 0.05);
}

TEST_CASE("raw-q ablation layout fills the advantage slots with Q") {
    const TabularMdp mdp = fixed_bandit({0.0, 0.0, 1.0});
    VamdpOptions options;
    options.raw_q = true;
    VamdpEnv env(&mdp, TaskFamily::bandits, 10, 3, options);
    env.step(2);
    const auto obs = env.aug_observation();
    const AugLayout lay = env.aug_layout();
    CHECK(obs[lay.advantages() + 2] == doctest::Approx(1.0));  // raw Q, not advantage
    CHECK(obs[lay.state_value()] == doctest::Approx(1.0));
}

TEST_CASE("observation dims per algorithm") {
    CHECK(rl2_obs_dim(10, 5) == 18);
    CHECK(rl3_obs_dim(1, 5) == 20);
    CHECK(markov_obs_dim(5) == 11);
}

// ---- abstraction ----

TEST_CASE("clustering: join, full cluster, radius") {
    StateAbstraction abs(100, 2, 1.0, grid_manhattan(10));
    const int c00 = 0 * 10 + 0, c01 = 0 * 10 + 1, c02 = 0 * 10 + 2, c55 = 5 * 10 + 5;
    CHECK(abs.assign(c00) == c00);
    CHECK(abs.assign(c01) == c00);      // distance 1, cluster open
    CHECK(abs.assign(c02) == c02);      // nearest cluster is full
    CHECK(abs.assign(c55) == c55);      // far away
    CHECK(abs.cluster_count() == 3);
    CHECK(abs.cluster_size(c00) == 2);
}

TEST_CASE("tie-break: earliest visited wins") {
    StateAbstraction abs(100, 2, 1.0, grid_manhattan(10));
    const int left = 3, right = 5, middle = 4;
    abs.assign(right);
    abs.assign(left);
    CHECK(abs.assign(middle) == right);  // both at distance 1; right came first
}

TEST_CASE("radius zero is the identity abstraction") {
    StateAbstraction abs(100, 2, 0.0, grid_manhattan(10));
    for (int s : {17, 18, 28, 3}) CHECK(abs.assign(s) == s);
    CHECK(abs.cluster_count() == 4);
}

TEST_CASE("unassigned lookup is an error") {
    StateAbstraction abs(10, 2, 1.0, grid_manhattan(5));
    abs.assign(0);
    CHECK_THROWS(abs.id_of(7));
}

TEST_CASE("adjacency-ordered visits pair perfectly: count equals ceil(V/2)") {
    // Along a self-avoiding walk every odd arrival founds a cluster and the
    // next arrival joins it, so the pigeonhole bound is met with equality.
    StateAbstraction abs(25, 2, 1.0, grid_manhattan(5));
    const std::vector<int> walk = {12, 7, 2, 1, 0, 5, 10, 15, 20, 21, 22};
    for (int s : walk) abs.assign(s);
    CHECK(abs.cluster_count() == (static_cast<int>(walk.size()) + 1) / 2);
}

TEST_CASE("cluster count bounds after visiting V states") {
    Rng rng(55);
    StateAbstraction abs(169, 2, 1.0, grid_manhattan(13));
    std::vector<int> order(169);
    for (int i = 0; i < 169; ++i) order[i] = i;
    for (int i = 168; i > 0; --i) std::swap(order[i], order[rng.uniform_index(i + 1)]);
    int visited = 0;
    for (int s : order) {
        abs.assign(s);
        ++visited;
        CHECK(abs.cluster_count() >= (visited + 1) / 2);
        CHECK(abs.cluster_count() <= visited);
    }
}

TEST_CASE("clustered cells share a Q row; coarse at radius 0 equals plain rl3 bitwise") {
    TaskDistributionSpec spec;
    spec.family = TaskFamily::gridworld;
    spec.variant = "mini";
    const GeneratedTask task = generate_task(spec, 1);

    AbstractionConfig coarse;
    coarse.max_cluster_size = 2;
    coarse.radius = 1.0;
    coarse.distance = grid_manhattan(7);
    VamdpOptions coarse_opt;
    coarse_opt.abstraction = coarse;
    VamdpEnv env(&task.mdp, TaskFamily::gridworld, 60, 77, coarse_opt);
    Rng policy(78);
    while (!env.meta_terminated()) env.step(policy.uniform_index(5));

    REQUIRE(env.abstraction() != nullptr);
    const auto& abs = *env.abstraction();
    int pairs_checked = 0;
    for (int s : abs.visit_order()) {
        const int id = abs.id_of(s);
        if (id == s) continue;
        for (int a = 0; a < 5; ++a) CHECK(env.q().value(s, a) == env.q().value(id, a));
        ++pairs_checked;
    }
    CHECK(pairs_checked > 0);
    // pigeonhole on cluster size 2: count lies in [ceil(V/2), V]
    CHECK(abs.cluster_count() >= (abs.visited_count() + 1) / 2);
    CHECK(abs.cluster_count() <= abs.visited_count());

    // radius 0: identical trajectories and Q tables, bit for bit
    AbstractionConfig zero = coarse;
    zero.radius = 0.0;
    VamdpOptions zero_opt;
    zero_opt.abstraction = zero;
    VamdpEnv plain(&task.mdp, TaskFamily::gridworld, 60, 99);
    VamdpEnv coarse0(&task.mdp, TaskFamily::gridworld, 60, 99, zero_opt);
    Rng pa(101), pb(101);
    while (!plain.meta_terminated()) {
        const auto oa = plain.rl3_observation();
        const auto ob = coarse0.rl3_observation();
        REQUIRE(oa == ob);
        const int a = pa.uniform_index(5);
        const int b = pb.uniform_index(5);
        REQUIRE(a == b);
        plain.step(a);
        coarse0.step(b);
    }
    CHECK(plain.q().q == coarse0.q().q);
    CHECK(plain.counts().n == coarse0.counts().n);
}
