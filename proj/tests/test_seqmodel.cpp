#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "rl3/checkpoint.hpp"
#include "rl3/seqmodel.hpp"

using namespace rl3;

namespace {

TransformerConfig small_config(int input_dim, int output_dim, int max_context) {
    TransformerConfig cfg;
    cfg.layers = 2;
    cfg.heads = 2;
    cfg.model_width = 16;
    cfg.ff_mult = 2;
    cfg.max_context = max_context;
    cfg.input_dim = input_dim;
    cfg.output_dim = output_dim;
    return cfg;
}

std::vector<double> random_obs(int T, int dim, Rng& rng) {
    std::vector<double> obs(static_cast<size_t>(T) * dim);
    for (auto& x : obs) x = rng.normal(0.0, 1.0);
    return obs;
}

// Loss = sum_t dout[t] . out[t] with fixed dout; used by the finite-difference
// oracle below.
double weighted_output(Transformer& model, const std::vector<double>& obs, int T,
                       const std::vector<double>& dout) {
    TfWorkspace ws;
    model.forward(obs.data(), T, ws);
    double loss = 0.0;
    for (size_t i = 0; i < ws.out.size(); ++i) loss += dout[i] * ws.out[i];
    return loss;
}

}  // namespace

TEST_CASE("causality: later observations cannot touch earlier outputs") {
    TransformerConfig cfg = small_config(6, 4, 10);
    Transformer model(cfg);
    Rng rng(1);
    model.init_params(rng);
    const int T = 8;
    auto obs = random_obs(T, 6, rng);

    TfWorkspace ws;
    model.forward(obs.data(), T, ws);
    const auto base = ws.out;

    for (int j = 3; j < T; ++j) obs[static_cast<size_t>(j) * 6 + 1] += 5.0;
    model.forward(obs.data(), T, ws);
    for (int t = 0; t < 3; ++t)
        for (int o = 0; o < 4; ++o)
            CHECK(ws.out[static_cast<size_t>(t) * 4 + o] ==
                  base[static_cast<size_t>(t) * 4 + o]);  // bit-exact
    bool changed = false;
    for (int t = 3; t < T; ++t)
        for (int o = 0; o < 4; ++o)
            changed = changed || ws.out[static_cast<size_t>(t) * 4 + o] !=
                                     base[static_cast<size_t>(t) * 4 + o];
    CHECK(changed);
}

TEST_CASE("length-1 sequence equals the single-token pass") {
    TransformerConfig cfg = small_config(5, 3, 4);
    Transformer model(cfg);
    Rng rng(2);
    model.init_params(rng);
    const auto obs = random_obs(1, 5, rng);

    TfWorkspace ws;
    model.forward(obs.data(), 1, ws);

    TfCache cache;
    model.cache_reset(cache);
    std::vector<double> out(3);
    model.forward_incremental(cache, obs.data(), out.data());
    for (int o = 0; o < 3; ++o) CHECK(out[o] == doctest::Approx(ws.out[o]).epsilon(1e-12));
}

TEST_CASE("zero parameters give uniform action logits") {
    TransformerConfig cfg = small_config(5, 4, 6);
    Transformer model(cfg);  // params default to zero, layer norm gains zero too
    Rng rng(3);
    const auto obs = random_obs(3, 5, rng);
    model.params().allocate();
    TfWorkspace ws;
    model.forward(obs.data(), 3, ws);
    for (double v : ws.out) CHECK(v == 0.0);
}

TEST_CASE("incremental forward matches the full recompute") {
    TransformerConfig cfg = small_config(7, 5, 24);
    Transformer model(cfg);
    Rng rng(4);
    model.init_params(rng);
    const int T = 20;
    const auto obs = random_obs(T, 7, rng);

    TfWorkspace ws;
    model.forward(obs.data(), T, ws);

    TfCache cache;
    model.cache_reset(cache);
    std::vector<double> out(5);
    double worst = 0.0;
    for (int t = 0; t < T; ++t) {
        model.forward_incremental(cache, obs.data() + static_cast<size_t>(t) * 7, out.data());
        for (int o = 0; o < 5; ++o)
            worst = std::max(worst, std::abs(out[o] - ws.out[static_cast<size_t>(t) * 5 + o]));
    }
    CHECK(worst <= 1e-9);
}

TEST_CASE("incremental step cost grows at most linearly") {
    TransformerConfig cfg = small_config(4, 2, 300);
    Transformer model(cfg);
    Rng rng(5);
    model.init_params(rng);
    const auto obs = random_obs(300, 4, rng);

    TfCache cache;
    model.cache_reset(cache);
    std::vector<double> out(2);
    uint64_t ops_at_64 = 0, ops_at_128 = 0, ops_at_256 = 0;
    for (int t = 0; t < 257; ++t) {
        const uint64_t before = cache.ops;
        model.forward_incremental(cache, obs.data() + static_cast<size_t>(t) * 4, out.data());
        const uint64_t step_ops = cache.ops - before;
        if (t == 63) ops_at_64 = step_ops;
        if (t == 127) ops_at_128 = step_ops;
        if (t == 255) ops_at_256 = step_ops;
    }
    CHECK(static_cast<double>(ops_at_128) / ops_at_64 <= 2.5);
    CHECK(static_cast<double>(ops_at_256) / ops_at_128 <= 2.5);
}

TEST_CASE("context overflow raises") {
    TransformerConfig cfg = small_config(3, 2, 4);
    Transformer model(cfg);
    Rng rng(6);
    model.init_params(rng);
    const auto obs = random_obs(5, 3, rng);
    TfWorkspace ws;
    CHECK_THROWS(model.forward(obs.data(), 5, ws));

    TfCache cache;
    model.cache_reset(cache);
    std::vector<double> out(2);
    for (int t = 0; t < 4; ++t)
        model.forward_incremental(cache, obs.data() + static_cast<size_t>(t) * 3, out.data());
    CHECK_THROWS(model.forward_incremental(cache, obs.data(), out.data()));
}

TEST_CASE("transformer gradients match central finite differences") {
    TransformerConfig cfg = small_config(4, 3, 3);
    Transformer model(cfg);
    Rng rng(7);
    model.init_params(rng);
    const int T = 3;
    const auto obs = random_obs(T, 4, rng);
    std::vector<double> dout(static_cast<size_t>(T) * 3);
    for (auto& d : dout) d = rng.normal(0.0, 1.0);

    TfWorkspace ws;
    model.forward(obs.data(), T, ws);
    std::vector<double> grads(model.params().total(), 0.0);
    model.backward(ws, dout.data(), grads.data());

    const double h = 1e-5;
    auto& flat = model.params().flat();
    double worst_rel = 0.0;
    for (size_t i = 0; i < flat.size(); ++i) {
        const double saved = flat[i];
        flat[i] = saved + h;
        const double up = weighted_output(model, obs, T, dout);
        flat[i] = saved - h;
        const double down = weighted_output(model, obs, T, dout);
        flat[i] = saved;
        const double fd = (up - down) / (2.0 * h);
        const double denom = std::max({1e-6, std::abs(fd), std::abs(grads[i])});
        worst_rel = std::max(worst_rel, std::abs(fd - grads[i]) / denom);
    }
    CHECK(worst_rel <= 1e-4);
}

TEST_CASE("zero output gradient gives zero parameter gradients") {
    TransformerConfig cfg = small_config(4, 3, 4);
    Transformer model(cfg);
    Rng rng(8);
    model.init_params(rng);
    const auto obs = random_obs(4, 4, rng);
    std::vector<double> dout(static_cast<size_t>(4) * 3, 0.0);
    TfWorkspace ws;
    model.forward(obs.data(), 4, ws);
    std::vector<double> grads(model.params().total(), 0.0);
    model.backward(ws, dout.data(), grads.data());
    for (double g : grads) CHECK(g == 0.0);
}

TEST_CASE("duplicating a sequence doubles the summed gradients") {
    TransformerConfig cfg = small_config(4, 3, 4);
    Transformer model(cfg);
    Rng rng(9);
    model.init_params(rng);
    const auto obs = random_obs(4, 4, rng);
    std::vector<double> dout(static_cast<size_t>(4) * 3);
    for (auto& d : dout) d = rng.normal(0.0, 1.0);

    TfWorkspace ws;
    model.forward(obs.data(), 4, ws);
    std::vector<double> once(model.params().total(), 0.0);
    model.backward(ws, dout.data(), once.data());
    std::vector<double> twice(model.params().total(), 0.0);
    model.backward(ws, dout.data(), twice.data());
    model.backward(ws, dout.data(), twice.data());
    for (size_t i = 0; i < once.size(); ++i)
        CHECK(twice[i] == doctest::Approx(2.0 * once[i]).epsilon(1e-12));
}

TEST_CASE("markov net: no history dependence and finite-difference gradients") {
    MarkovNetConfig cfg;
    cfg.input_dim = 11;
    cfg.hidden = 64;
    cfg.output_dim = 5;
    MarkovNet model(cfg);
    Rng rng(10);
    model.init_params(rng);

    const auto obs = random_obs(3, 11, rng);
    MarkovNet::Workspace ws;
    model.forward(obs.data(), 3, ws);

    // feeding the same observation at two positions gives identical outputs
    std::vector<double> repeated(obs.begin(), obs.begin() + 11);
    repeated.insert(repeated.end(), obs.begin(), obs.begin() + 11);
    MarkovNet::Workspace ws2;
    model.forward(repeated.data(), 2, ws2);
    for (int o = 0; o < 5; ++o) CHECK(ws2.out[o] == ws2.out[5 + o]);

    std::vector<double> dout(static_cast<size_t>(3) * 5);
    for (auto& d : dout) d = rng.normal(0.0, 1.0);
    std::vector<double> grads(model.params().total(), 0.0);
    model.backward(ws, dout.data(), grads.data());

    const double h = 1e-5;
    auto& flat = model.params().flat();
    double worst_rel = 0.0;
    for (size_t i = 0; i < flat.size(); ++i) {
        const double saved = flat[i];
        auto eval = [&]() {
            MarkovNet::Workspace w;
            model.forward(obs.data(), 3, w);
            double loss = 0.0;
            for (size_t j = 0; j < w.out.size(); ++j) loss += dout[j] * w.out[j];
            return loss;
        };
        flat[i] = saved + h;
        const double up = eval();
        flat[i] = saved - h;
        const double down = eval();
        flat[i] = saved;
        const double fd = (up - down) / (2.0 * h);
        const double denom = std::max({1e-6, std::abs(fd), std::abs(grads[i])});
        worst_rel = std::max(worst_rel, std::abs(fd - grads[i]) / denom);
    }
    CHECK(worst_rel <= 1e-4);
}

TEST_CASE("parameter counts: frozen per-family numbers") {
    // bandits, rl3 observation (|S|=1, k=5): input 20, output 5, context 20
    TransformerConfig bandit_actor;
    bandit_actor.max_context = 20;
    bandit_actor.input_dim = 20;
    bandit_actor.output_dim = 5;
    CHECK(bandit_actor.param_count() == 103045);
    CHECK(Transformer(bandit_actor).params().total() == 103045);

    // random mdps, rl2 observation (|S|=10, k=5): input 18, output 5, context 128
    TransformerConfig mdp_actor;
    mdp_actor.max_context = 128;
    mdp_actor.input_dim = 18;
    mdp_actor.output_dim = 5;
    CHECK(mdp_actor.param_count() == 109829);

    // markov bandit head: input 11, two hidden 64, output 5
    MarkovNetConfig markov;
    markov.input_dim = 11;
    markov.output_dim = 5;
    CHECK(markov.param_count() == 5253);
}

TEST_CASE("parameter count is a pure function of the config") {
    TransformerConfig a = small_config(6, 4, 12);
    TransformerConfig b = small_config(6, 4, 12);
    CHECK(a.param_count() == b.param_count());
    b.max_context = 13;
    CHECK(a.param_count() != b.param_count());
}

TEST_CASE("checkpoint: bitwise parameter round trip and checksum validation") {
    TransformerConfig cfg = small_config(5, 3, 6);
    Transformer model(cfg);
    Rng rng(11);
    model.init_params(rng);

    Checkpoint ck;
    ck.header["kind"] = "test";
    ck.set_header_int("answer", 42);
    ck.put_params("actor.", model.params());
    const std::string path = "test_checkpoint_roundtrip.bin";
    ck.save(path);

    Transformer restored(cfg);
    const Checkpoint loaded = Checkpoint::load(path);
    CHECK(loaded.header_int("answer") == 42);
    loaded.get_params("actor.", restored.params());
    CHECK(restored.params().flat() == model.params().flat());
    CHECK(restored.params().checksum() == model.params().checksum());

    // flip one byte: the checksum must catch it
    {
        std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
        f.seekp(64);
        char c;
        f.seekg(64);
        f.get(c);
        f.seekp(64);
        f.put(static_cast<char>(c ^ 0x5a));
    }
    CHECK_THROWS(Checkpoint::load(path));
    std::filesystem::remove(path);
}

TEST_CASE("adam applies weight decay only through the gradient path") {
    AdamOptimizer opt(2, 0.1, 0.9, 0.999, 1e-7, 0.0);
    std::vector<double> params = {1.0, -2.0};
    const std::vector<double> zero = {0.0, 0.0};
    opt.step(params, zero);
    CHECK(params[0] == 1.0);  // no decay, no gradient, no movement
    AdamOptimizer decay(2, 0.1, 0.9, 0.999, 1e-7, 0.01);
    decay.step(params, zero);
    CHECK(params[0] < 1.0);  // decay pulls toward zero
    CHECK(params[1] > -2.0);
}
