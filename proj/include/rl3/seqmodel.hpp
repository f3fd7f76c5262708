#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "rl3/rng.hpp"
#include "rl3/util.hpp"

namespace rl3 {

/// Named flat parameter storage shared by every network here. Values, grads
/// and Adam state all live in one contiguous layout so thread-local gradient
/// buffers are plain vectors and checkpoints can stream tensors by name.
class ParamStore {
public:
    enum class Init : uint8_t { zeros, ones, fan_in_uniform, normal_002 };

    struct TensorInfo {
        std::string name;
        std::vector<int> shape;
        size_t offset = 0;
        size_t size = 0;
        Init init = Init::zeros;
        int fan_in = 0;
    };

    int add(std::string name, std::vector<int> shape, Init init, int fan_in = 0) {
        TensorInfo info;
        info.name = std::move(name);
        info.shape = std::move(shape);
        info.size = 1;
        for (int d : info.shape) info.size *= static_cast<size_t>(d);
        info.offset = total_;
        info.init = init;
        info.fan_in = fan_in;
        total_ += info.size;
        infos_.push_back(std::move(info));
        return static_cast<int>(infos_.size()) - 1;
    }

    void allocate() { values_.assign(total_, 0.0); }

    void initialize(Rng& rng) {
        allocate();
        for (const auto& info : infos_) {
            double* p = values_.data() + info.offset;
            switch (info.init) {
                case Init::zeros: break;
                case Init::ones:
                    for (size_t i = 0; i < info.size; ++i) p[i] = 1.0;
                    break;
                case Init::fan_in_uniform: {
                    const double bound = 1.0 / std::sqrt(static_cast<double>(info.fan_in));
                    for (size_t i = 0; i < info.size; ++i) p[i] = rng.uniform(-bound, bound);
                    break;
                }
                case Init::normal_002:
                    for (size_t i = 0; i < info.size; ++i) p[i] = rng.normal(0.0, 0.02);
                    break;
            }
        }
    }

    size_t total() const { return total_; }
    const std::vector<TensorInfo>& infos() const { return infos_; }
    double* data(int id) { return values_.data() + infos_[id].offset; }
    const double* data(int id) const { return values_.data() + infos_[id].offset; }
    std::vector<double>& flat() { return values_; }
    const std::vector<double>& flat() const { return values_; }

    uint64_t checksum() const {
        Fnv1a h;
        h.add_f64s(values_);
        return h.value();
    }

private:
    std::vector<TensorInfo> infos_;
    std::vector<double> values_;
    size_t total_ = 0;
};

struct TransformerConfig {
    int layers = 2;
    int heads = 4;
    int model_width = 64;
    int ff_mult = 4;  // feed-forward expansion inside blocks
    int max_context = 0;
    int input_dim = 0;
    int output_dim = 0;

    int head_dim() const { return model_width / heads; }
    int ff_dim() const { return model_width * ff_mult; }
    size_t param_count() const;
    void validate() const;
};

/// Activations retained by a full-sequence forward pass, consumed by backward.
struct TfWorkspace {
    int T = 0;
    std::vector<double> input;  // [T, I]
    std::vector<double> embed;  // [T, d] token embedding + position, pre-norm
    std::vector<double> ln_in_xhat, ln_in_rstd;
    struct Layer {
        std::vector<double> x_in;  // [T, d] residual stream entering the block
        std::vector<double> ln1_xhat, ln1_rstd;
        std::vector<double> q, k, v;     // [T, d]
        std::vector<double> attn_w;      // [h, T, T] causal softmax weights
        std::vector<double> ctx;         // [T, d]
        std::vector<double> x_mid;       // [T, d] after the attention residual
        std::vector<double> ln2_xhat, ln2_rstd;
        std::vector<double> z1;  // [T, ff] pre-activation
        std::vector<double> g1;  // [T, ff] gelu output
    };
    std::vector<Layer> layers;
    std::vector<double> x_final;  // [T, d]
    std::vector<double> out;      // [T, O]
};

/// Key/value cache for O(t) incremental inference. `ops` counts attention
/// inner-loop multiply-adds actually executed, for the cost-growth check.
struct TfCache {
    int len = 0;
    std::vector<double> k;  // [L, T_max, d]
    std::vector<double> v;
    std::vector<double> x_scratch;
    uint64_t ops = 0;
};

/// Causal transformer decoder with learned position embeddings: input
/// projection plus positions, layer norm, then pre-norm attention/feed-forward
/// blocks with gelu, then a linear head. Forward, incremental forward and
/// exact reverse-mode backward are all hand-rolled in 64-bit arithmetic.
class Transformer {
public:
    explicit Transformer(const TransformerConfig& config);

    void init_params(Rng& rng) { store_.initialize(rng); }

    /// Causally masked full-sequence pass; output at step i only sees
    /// observations 0..i. Throws if T exceeds max_context.
    void forward(const double* obs, int T, TfWorkspace& ws) const;

    /// Exact gradients of sum_t dout[t] . out[t] with respect to every
    /// parameter, accumulated into `grad_flat` (same layout as params().flat()).
    void backward(const TfWorkspace& ws, const double* dout, double* grad_flat) const;

    void cache_reset(TfCache& cache) const;
    /// Appends one step; matches the full recompute to ~1e-9 (same arithmetic
    /// order, so in practice bit-identical).
    void forward_incremental(TfCache& cache, const double* obs_t, double* out_t) const;

    ParamStore& params() { return store_; }
    const ParamStore& params() const { return store_; }
    const TransformerConfig& config() const { return config_; }
    int input_dim() const { return config_.input_dim; }
    int output_dim() const { return config_.output_dim; }
    int max_context() const { return config_.max_context; }

    using Workspace = TfWorkspace;
    using Cache = TfCache;

private:
    struct LayerIds {
        int ln1_g, ln1_b, wq, bq, wk, bk, wv, bv, wo, bo;
        int ln2_g, ln2_b, w1, b1, w2, b2;
    };

    TransformerConfig config_;
    ParamStore store_;
    int embed_w_, embed_b_, pos_, ln_in_g_, ln_in_b_;
    std::vector<LayerIds> layer_ids_;
    int head_w_, head_b_;
};

struct MarkovNetConfig {
    int input_dim = 0;
    int hidden = 64;  // two hidden layers of this width, relu
    int output_dim = 0;
    size_t param_count() const;
};

/// Feed-forward policy head for the Markov bandit variant: no history, the
/// output at each step depends only on that step's augmented fields.
class MarkovNet {
public:
    explicit MarkovNet(const MarkovNetConfig& config);

    void init_params(Rng& rng) { store_.initialize(rng); }

    struct Workspace {
        int T = 0;
        std::vector<double> input;   // [T, I]
        std::vector<double> h1, h2;  // [T, hidden] post-relu
        std::vector<double> out;     // [T, O]
    };
    struct Cache {
        int len = 0;
        uint64_t ops = 0;
    };

    void forward(const double* obs, int T, Workspace& ws) const;
    void backward(const Workspace& ws, const double* dout, double* grad_flat) const;
    void cache_reset(Cache& cache) const { cache.len = 0; }
    void forward_incremental(Cache& cache, const double* obs_t, double* out_t) const;

    ParamStore& params() { return store_; }
    const ParamStore& params() const { return store_; }
    int input_dim() const { return config_.input_dim; }
    int output_dim() const { return config_.output_dim; }
    int max_context() const { return 1 << 30; }

private:
    MarkovNetConfig config_;
    ParamStore store_;
    int w1_, b1_, w2_, b2_, w3_, b3_;
};

/// Adam with optional L2-style weight decay folded into the gradient.
class AdamOptimizer {
public:
    AdamOptimizer(size_t n, double lr, double beta1 = 0.9, double beta2 = 0.999,
                  double eps = 1e-7, double weight_decay = 0.0)
        : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps), weight_decay_(weight_decay),
          m_(n, 0.0), v_(n, 0.0) {}

    void step(std::vector<double>& params, const std::vector<double>& grads);

    int64_t steps_taken() const { return t_; }
    const std::vector<double>& moment1() const { return m_; }
    const std::vector<double>& moment2() const { return v_; }
    void restore(int64_t t, std::vector<double> m, std::vector<double> v) {
        t_ = t;
        m_ = std::move(m);
        v_ = std::move(v);
    }
    double learning_rate() const { return lr_; }

private:
    double lr_, beta1_, beta2_, eps_, weight_decay_;
    std::vector<double> m_, v_;
    int64_t t_ = 0;
};

/// In-place stable softmax over logits[0..n).
void softmax_inplace(double* logits, int n);
/// log softmax of one entry plus full probabilities; used by the PPO path.
void log_softmax(const double* logits, int n, double* log_probs);

}  // namespace rl3
