#include <cstring>
#include <fstream>
#include <sstream>

#include "rl3/harness.hpp"

namespace rl3 {

namespace {

constexpr uint64_t kTaskTag = 0x7461736bULL;
constexpr int64_t kSeedInterval = 1LL << 40;  // train counters below, eval counters above

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t");
    const auto e = s.find_last_not_of(" \t\r");
    return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
}

bool parse_bool(const std::string& v) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    fail("expected a boolean, got: " + v);
}

const char* grid_filter_name(GridFilterMode m) {
    switch (m) {
        case GridFilterMode::literal: return "literal";
        case GridFilterMode::flipped: return "flipped";
        case GridFilterMode::solvable: return "solvable";
    }
    return "?";
}

}  // namespace

uint64_t train_task_seed(uint64_t master_seed, int64_t counter) {
    if (counter < 0 || counter >= kSeedInterval) fail("train task counter out of its interval");
    return derive_seed(master_seed, kTaskTag, static_cast<uint64_t>(counter));
}

uint64_t eval_task_seed(uint64_t master_seed, int64_t counter) {
    if (counter < 0 || counter >= kSeedInterval) fail("eval task counter out of its interval");
    return derive_seed(master_seed, kTaskTag, static_cast<uint64_t>(kSeedInterval + counter));
}

FamilyShape family_shape(const TaskDistributionSpec& spec) {
    switch (spec.family) {
        case TaskFamily::bandits: return {1, spec.num_arms};
        case TaskFamily::random_mdps: return {10, 5};
        case TaskFamily::gridworld: {
            const auto params = gridworld_params_for(spec.grid_size, spec.variant, spec.grid_filter);
            return {params.size * params.size, 5};
        }
    }
    fail("bad family");
}

int observation_dim(Algorithm algorithm, const FamilyShape& shape) {
    switch (algorithm) {
        case Algorithm::rl2: return rl2_obs_dim(shape.num_states, shape.num_actions);
        case Algorithm::rl3:
        case Algorithm::rl3_coarse: return rl3_obs_dim(shape.num_states, shape.num_actions);
        case Algorithm::rl3_markov: return markov_obs_dim(shape.num_actions);
    }
    fail("bad algorithm");
}

void ExperimentConfig::validate() const {
    task.validate();
    ppo.validate();
    if (interaction_budget < 1) fail("interaction_budget must be at least 1");
    if (iterations < 0) fail("iterations must be non-negative");
    if (activation != "gelu") fail("only the gelu activation is supported");
    if (algorithm == Algorithm::rl3_markov && task.family != TaskFamily::bandits)
        fail("rl3_markov is a bandits-only variant");
    if (algorithm == Algorithm::rl3_coarse && task.family != TaskFamily::gridworld)
        fail("rl3_coarse is a gridworld-only variant");
    if (decoder_size % attention_heads != 0)
        fail("decoder_size must be divisible by attention_heads");
}

std::string ExperimentConfig::emit() const {
    std::ostringstream out;
    out << "# task distribution\n";
    out << "family = " << family_name(task.family) << "\n";
    out << "variant = " << task.variant << "\n";
    out << "num_arms = " << task.num_arms << "\n";
    out << "dirichlet_alpha = " << format_double(task.dirichlet_alpha) << "\n";
    out << "grid_size = " << task.grid_size << "\n";
    out << "grid_filter = " << grid_filter_name(task.grid_filter) << "\n";
    out << "# run\n";
    out << "algorithm = " << algorithm_name(algorithm) << "\n";
    out << "interaction_budget = " << interaction_budget << "\n";
    out << "iterations = " << iterations << "\n";
    out << "eval_set_size = " << eval_set_size << "\n";
    out << "checkpoint_every = " << checkpoint_every << "\n";
    out << "master_seed = " << master_seed << "\n";
    out << "output_dir = " << output_dir << "\n";
    out << "# optimization\n";
    out << "learning_rate = " << format_double(ppo.learning_rate) << "\n";
    out << "adam_beta1 = " << format_double(ppo.adam_beta1) << "\n";
    out << "adam_beta2 = " << format_double(ppo.adam_beta2) << "\n";
    out << "adam_epsilon = " << format_double(ppo.adam_eps) << "\n";
    out << "weight_decay_critic = " << format_double(ppo.critic_weight_decay) << "\n";
    out << "batch_size = " << ppo.batch_size << "\n";
    out << "minibatch_size = " << ppo.minibatch_size << "\n";
    out << "epochs_per_iteration = " << ppo.epochs << "\n";
    out << "max_kl_per_iteration = " << format_double(ppo.max_kl) << "\n";
    out << "ppo_clip = " << format_double(ppo.clip) << "\n";
    out << "gae_lambda = " << format_double(ppo.gae_lambda) << "\n";
    out << "discount_factor = " << format_double(ppo.gamma) << "\n";
    out << "entropy_coeff = " << format_double(ppo.entropy_coeff) << "\n";
    out << "entropy_coeff_final = " << format_double(ppo.entropy_coeff_final) << "\n";
    out << "value_loss_coeff = " << format_double(ppo.value_loss_coeff) << "\n";
    out << "normalize_advantages = " << (ppo.normalize_advantages ? "true" : "false") << "\n";
    out << "threads = " << ppo.threads << "\n";
    out << "# model\n";
    out << "decoder_layers = " << decoder_layers << "\n";
    out << "attention_heads = " << attention_heads << "\n";
    out << "decoder_size = " << decoder_size << "\n";
    out << "ff_mult = " << ff_mult << "\n";
    out << "activation = " << activation << "\n";
    out << "markov_hidden = " << markov_hidden << "\n";
    out << "# rl3 options\n";
    out << "raw_q_layout = " << (raw_q_layout ? "true" : "false") << "\n";
    out << "cluster_size = " << cluster_size << "\n";
    out << "cluster_radius = " << format_double(cluster_radius) << "\n";
    return out.str();
}

ExperimentConfig ExperimentConfig::parse(const std::string& text) {
    ExperimentConfig cfg;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        const std::string stripped = trim(line);
        if (stripped.empty() || stripped[0] == '#') continue;
        const auto eq = stripped.find('=');
        if (eq == std::string::npos) fail("config line without '=': " + stripped);
        const std::string key = trim(stripped.substr(0, eq));
        const std::string val = trim(stripped.substr(eq + 1));

        if (key == "family") cfg.task.family = family_from_name(val);
        else if (key == "variant") cfg.task.variant = val;
        else if (key == "num_arms") cfg.task.num_arms = std::stoi(val);
        else if (key == "dirichlet_alpha") cfg.task.dirichlet_alpha = std::stod(val);
        else if (key == "grid_size") cfg.task.grid_size = std::stoi(val);
        else if (key == "grid_filter") {
            if (val == "literal") cfg.task.grid_filter = GridFilterMode::literal;
            else if (val == "flipped") cfg.task.grid_filter = GridFilterMode::flipped;
            else if (val == "solvable") cfg.task.grid_filter = GridFilterMode::solvable;
            else fail("unknown grid_filter: " + val);
        } else if (key == "algorithm") cfg.algorithm = algorithm_from_name(val);
        else if (key == "interaction_budget") cfg.interaction_budget = std::stoi(val);
        else if (key == "iterations") cfg.iterations = std::stoi(val);
        else if (key == "eval_set_size") cfg.eval_set_size = std::stoi(val);
        else if (key == "checkpoint_every") cfg.checkpoint_every = std::stoi(val);
        else if (key == "master_seed") cfg.master_seed = std::stoull(val);
        else if (key == "output_dir") cfg.output_dir = val;
        else if (key == "learning_rate") cfg.ppo.learning_rate = std::stod(val);
        else if (key == "adam_beta1") cfg.ppo.adam_beta1 = std::stod(val);
        else if (key == "adam_beta2") cfg.ppo.adam_beta2 = std::stod(val);
        else if (key == "adam_epsilon") cfg.ppo.adam_eps = std::stod(val);
        else if (key == "weight_decay_critic") cfg.ppo.critic_weight_decay = std::stod(val);
        else if (key == "batch_size") cfg.ppo.batch_size = std::stoi(val);
        else if (key == "minibatch_size") cfg.ppo.minibatch_size = std::stoi(val);
        else if (key == "epochs_per_iteration") cfg.ppo.epochs = std::stoi(val);
        else if (key == "max_kl_per_iteration") cfg.ppo.max_kl = std::stod(val);
        else if (key == "ppo_clip") cfg.ppo.clip = std::stod(val);
        else if (key == "gae_lambda") cfg.ppo.gae_lambda = std::stod(val);
        else if (key == "discount_factor") cfg.ppo.gamma = std::stod(val);
        else if (key == "entropy_coeff") cfg.ppo.entropy_coeff = std::stod(val);
        else if (key == "entropy_coeff_final") cfg.ppo.entropy_coeff_final = std::stod(val);
        else if (key == "value_loss_coeff") cfg.ppo.value_loss_coeff = std::stod(val);
        else if (key == "normalize_advantages") cfg.ppo.normalize_advantages = parse_bool(val);
        else if (key == "threads") cfg.ppo.threads = std::stoi(val);
        else if (key == "decoder_layers") cfg.decoder_layers = std::stoi(val);
        else if (key == "attention_heads") cfg.attention_heads = std::stoi(val);
        else if (key == "decoder_size") cfg.decoder_size = std::stoi(val);
        else if (key == "ff_mult") cfg.ff_mult = std::stoi(val);
        else if (key == "activation") cfg.activation = val;
        else if (key == "markov_hidden") cfg.markov_hidden = std::stoi(val);
        else if (key == "raw_q_layout") cfg.raw_q_layout = parse_bool(val);
        else if (key == "cluster_size") cfg.cluster_size = std::stoi(val);
        else if (key == "cluster_radius") cfg.cluster_radius = std::stod(val);
        else if (key == "seed") cfg.task.seed = std::stoull(val);
        else fail("unknown config key: " + key);
    }
    cfg.validate();
    return cfg;
}

ExperimentConfig ExperimentConfig::parse_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail("cannot open config file: " + path);
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return parse(text);
}

namespace {

constexpr char kEvalSetMagic[8] = {'R', 'L', '3', 'E', 'V', 'S', 'T', '\0'};

}  // namespace

void EvalSet::save(const std::string& path) const {
    std::string buf;
    buf.append(kEvalSetMagic, sizeof(kEvalSetMagic));
    const uint32_t version = 1;
    buf.append(reinterpret_cast<const char*>(&version), 4);
    const std::string spec_text = spec.emit();
    const uint32_t spec_len = static_cast<uint32_t>(spec_text.size());
    buf.append(reinterpret_cast<const char*>(&spec_len), 4);
    buf.append(spec_text);
    const uint32_t n = static_cast<uint32_t>(seeds.size());
    buf.append(reinterpret_cast<const char*>(&n), 4);
    buf.append(reinterpret_cast<const char*>(seeds.data()), seeds.size() * 8);
    buf.append(reinterpret_cast<const char*>(hashes.data()), hashes.size() * 8);
    Fnv1a checksum;
    checksum.add_bytes(buf.data(), buf.size());
    const uint64_t sum = checksum.value();
    buf.append(reinterpret_cast<const char*>(&sum), 8);

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) fail("cannot write eval set: " + path);
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!out) fail("eval set write failed: " + path);
}

EvalSet EvalSet::load(const std::string& path, bool verify_hashes) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail("cannot open eval set: " + path);
    std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (data.size() < 24 || std::memcmp(data.data(), kEvalSetMagic, 8) != 0)
        fail("not an eval set file: " + path);
    uint64_t stored;
    std::memcpy(&stored, data.data() + data.size() - 8, 8);
    Fnv1a checksum;
    checksum.add_bytes(data.data(), data.size() - 8);
    if (checksum.value() != stored) fail("eval set checksum mismatch: " + path);

    size_t pos = 8;
    auto read_u32 = [&]() {
        uint32_t v;
        std::memcpy(&v, data.data() + pos, 4);
        pos += 4;
        return v;
    };
    const uint32_t version = read_u32();
    if (version != 1) fail("unsupported eval set version");
    const uint32_t spec_len = read_u32();
    EvalSet set;
    set.spec = TaskDistributionSpec::parse(data.substr(pos, spec_len));
    pos += spec_len;
    const uint32_t n = read_u32();
    set.seeds.resize(n);
    std::memcpy(set.seeds.data(), data.data() + pos, n * 8ULL);
    pos += n * 8ULL;
    set.hashes.resize(n);
    std::memcpy(set.hashes.data(), data.data() + pos, n * 8ULL);

    if (verify_hashes) {
        for (uint32_t i = 0; i < n; ++i) {
            const GeneratedTask task = generate_task(set.spec, set.seeds[i]);
            if (task.mdp.content_hash() != set.hashes[i])
                fail("eval set task " + std::to_string(i) +
                     " does not regenerate to its stored hash (generator changed?)");
        }
    }
    return set;
}

EvalSet make_eval_set(const TaskDistributionSpec& spec, int n, uint64_t master_seed) {
    spec.validate();
    EvalSet set;
    set.spec = spec;
    set.seeds.resize(n);
    set.hashes.resize(n);
    for (int i = 0; i < n; ++i) {
        set.seeds[i] = eval_task_seed(master_seed, i);
        set.hashes[i] = generate_task(spec, set.seeds[i]).mdp.content_hash();
    }
    return set;
}

}  // namespace rl3
