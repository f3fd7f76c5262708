#include "rl3/seqmodel.hpp"

#include <cmath>
#include <cstring>

namespace rl3 {

namespace {

constexpr double kLnEps = 1e-5;
constexpr double kInvSqrt2Pi = 0.3989422804014327;

double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x * M_SQRT1_2)); }

double gelu_grad(double x) {
    return 0.5 * (1.0 + std::erf(x * M_SQRT1_2)) + x * kInvSqrt2Pi * std::exp(-0.5 * x * x);
}

// y = W x + b, W is [out, in] row-major.
void linear(const double* w, const double* b, const double* x, int in, int out, double* y) {
    for (int o = 0; o < out; ++o) {
        const double* row = w + static_cast<size_t>(o) * in;
        double acc = b[o];
        for (int i = 0; i < in; ++i) acc += row[i] * x[i];
        y[o] = acc;
    }
}

// Gradients for y = W x + b given dy; accumulates dW, db and (optionally) dx.
void linear_backward(const double* w, const double* x, const double* dy, int in, int out,
                     double* dw, double* db, double* dx) {
    for (int o = 0; o < out; ++o) {
        const double g = dy[o];
        if (g == 0.0) continue;
        double* dwrow = dw + static_cast<size_t>(o) * in;
        for (int i = 0; i < in; ++i) dwrow[i] += g * x[i];
        db[o] += g;
    }
    if (dx) {
        for (int i = 0; i < in; ++i) {
            double acc = 0.0;
            for (int o = 0; o < out; ++o) acc += w[static_cast<size_t>(o) * in + i] * dy[o];
            dx[i] += acc;
        }
    }
}

void layer_norm(const double* x, const double* gain, const double* bias, int d, double* y,
                double* xhat, double* rstd_out) {
    double mean = 0.0;
    for (int i = 0; i < d; ++i) mean += x[i];
    mean /= d;
    double var = 0.0;
    for (int i = 0; i < d; ++i) {
        const double c = x[i] - mean;
        var += c * c;
    }
    var /= d;
    const double rstd = 1.0 / std::sqrt(var + kLnEps);
    for (int i = 0; i < d; ++i) {
        xhat[i] = (x[i] - mean) * rstd;
        y[i] = gain[i] * xhat[i] + bias[i];
    }
    *rstd_out = rstd;
}

// dx += LN'(dy); dgain/dbias accumulate.
void layer_norm_backward(const double* dy, const double* xhat, double rstd, const double* gain,
                         int d, double* dgain, double* dbias, double* dx) {
    double sum_dxhat = 0.0, sum_dxhat_xhat = 0.0;
    for (int i = 0; i < d; ++i) {
        const double dxh = dy[i] * gain[i];
        sum_dxhat += dxh;
        sum_dxhat_xhat += dxh * xhat[i];
        dgain[i] += dy[i] * xhat[i];
        dbias[i] += dy[i];
    }
    const double inv_d = 1.0 / d;
    for (int i = 0; i < d; ++i) {
        const double dxh = dy[i] * gain[i];
        dx[i] += rstd * (dxh - inv_d * sum_dxhat - xhat[i] * inv_d * sum_dxhat_xhat);
    }
}

}  // namespace

void softmax_inplace(double* logits, int n) {
    double mx = logits[0];
    for (int i = 1; i < n; ++i) mx = std::max(mx, logits[i]);
    double sum = 0.0;
    for (int i = 0; i < n; ++i) {
        logits[i] = std::exp(logits[i] - mx);
        sum += logits[i];
    }
    for (int i = 0; i < n; ++i) logits[i] /= sum;
}

void log_softmax(const double* logits, int n, double* log_probs) {
    double mx = logits[0];
    for (int i = 1; i < n; ++i) mx = std::max(mx, logits[i]);
    double sum = 0.0;
    for (int i = 0; i < n; ++i) sum += std::exp(logits[i] - mx);
    const double lse = mx + std::log(sum);
    for (int i = 0; i < n; ++i) log_probs[i] = logits[i] - lse;
}

void TransformerConfig::validate() const {
    if (model_width % heads != 0) fail("model width must be divisible by head count");
    if (layers < 1 || heads < 1 || model_width < 1 || ff_mult < 1)
        fail("bad transformer dimensions");
    if (max_context < 1) fail("max_context must be at least 1");
    if (input_dim < 1 || output_dim < 1) fail("transformer input/output dims must be positive");
}

size_t TransformerConfig::param_count() const {
    const size_t d = model_width, I = input_dim, O = output_dim, ff = ff_dim();
    size_t n = d * I + d;               // input projection
    n += static_cast<size_t>(max_context) * d;  // positions
    n += 2 * d;                         // input layer norm
    n += static_cast<size_t>(layers) * (2 * d + 4 * (d * d + d) + 2 * d + ff * d + ff + d * ff + d);
    n += O * d + O;                     // head
    return n;
}

Transformer::Transformer(const TransformerConfig& config) : config_(config) {
    config_.validate();
    const int d = config_.model_width;
    const int ff = config_.ff_dim();
    using Init = ParamStore::Init;

    embed_w_ = store_.add("embed.w", {d, config_.input_dim}, Init::fan_in_uniform, config_.input_dim);
    embed_b_ = store_.add("embed.b", {d}, Init::zeros);
    pos_ = store_.add("pos", {config_.max_context, d}, Init::normal_002);
    ln_in_g_ = store_.add("ln_in.gain", {d}, Init::ones);
    ln_in_b_ = store_.add("ln_in.bias", {d}, Init::zeros);
    for (int l = 0; l < config_.layers; ++l) {
        const std::string prefix = "layer" + std::to_string(l) + ".";
        LayerIds ids;
        ids.ln1_g = store_.add(prefix + "ln1.gain", {d}, Init::ones);
        ids.ln1_b = store_.add(prefix + "ln1.bias", {d}, Init::zeros);
        ids.wq = store_.add(prefix + "attn.wq", {d, d}, Init::fan_in_uniform, d);
        ids.bq = store_.add(prefix + "attn.bq", {d}, Init::zeros);
        ids.wk = store_.add(prefix + "attn.wk", {d, d}, Init::fan_in_uniform, d);
        ids.bk = store_.add(prefix + "attn.bk", {d}, Init::zeros);
        ids.wv = store_.add(prefix + "attn.wv", {d, d}, Init::fan_in_uniform, d);
        ids.bv = store_.add(prefix + "attn.bv", {d}, Init::zeros);
        ids.wo = store_.add(prefix + "attn.wo", {d, d}, Init::fan_in_uniform, d);
        ids.bo = store_.add(prefix + "attn.bo", {d}, Init::zeros);
        ids.ln2_g = store_.add(prefix + "ln2.gain", {d}, Init::ones);
        ids.ln2_b = store_.add(prefix + "ln2.bias", {d}, Init::zeros);
        ids.w1 = store_.add(prefix + "ff.w1", {ff, d}, Init::fan_in_uniform, d);
        ids.b1 = store_.add(prefix + "ff.b1", {ff}, Init::zeros);
        ids.w2 = store_.add(prefix + "ff.w2", {d, ff}, Init::fan_in_uniform, ff);
        ids.b2 = store_.add(prefix + "ff.b2", {d}, Init::zeros);
        layer_ids_.push_back(ids);
    }
    head_w_ = store_.add("head.w", {config_.output_dim, d}, Init::fan_in_uniform, d);
    head_b_ = store_.add("head.b", {config_.output_dim}, Init::zeros);
    store_.allocate();

    if (store_.total() != config_.param_count()) fail("parameter count formula out of sync");
}

void Transformer::forward(const double* obs, int T, TfWorkspace& ws) const {
    if (T < 1) fail("empty sequence");
    if (T > config_.max_context) fail("sequence exceeds max context");
    const int d = config_.model_width;
    const int I = config_.input_dim;
    const int O = config_.output_dim;
    const int h = config_.heads;
    const int hd = config_.head_dim();
    const int ff = config_.ff_dim();
    const double scale = 1.0 / std::sqrt(static_cast<double>(hd));

    ws.T = T;
    ws.input.assign(obs, obs + static_cast<size_t>(T) * I);
    ws.embed.resize(static_cast<size_t>(T) * d);
    ws.ln_in_xhat.resize(static_cast<size_t>(T) * d);
    ws.ln_in_rstd.resize(T);
    ws.layers.resize(config_.layers);
    ws.x_final.resize(static_cast<size_t>(T) * d);
    ws.out.resize(static_cast<size_t>(T) * O);

    std::vector<double> x(static_cast<size_t>(T) * d);
    const double* pos = store_.data(pos_);
    for (int t = 0; t < T; ++t) {
        double* e = ws.embed.data() + static_cast<size_t>(t) * d;
        linear(store_.data(embed_w_), store_.data(embed_b_), obs + static_cast<size_t>(t) * I, I, d, e);
        for (int i = 0; i < d; ++i) e[i] += pos[static_cast<size_t>(t) * d + i];
        double* xt = x.data() + static_cast<size_t>(t) * d;
        layer_norm(e, store_.data(ln_in_g_), store_.data(ln_in_b_), d, xt,
                   ws.ln_in_xhat.data() + static_cast<size_t>(t) * d, &ws.ln_in_rstd[t]);
    }

    std::vector<double> u(d);
    for (int l = 0; l < config_.layers; ++l) {
        const LayerIds& ids = layer_ids_[l];
        auto& act = ws.layers[l];
        act.x_in = x;
        act.ln1_xhat.resize(static_cast<size_t>(T) * d);
        act.ln1_rstd.resize(T);
        act.q.resize(static_cast<size_t>(T) * d);
        act.k.resize(static_cast<size_t>(T) * d);
        act.v.resize(static_cast<size_t>(T) * d);
        act.attn_w.assign(static_cast<size_t>(h) * T * T, 0.0);
        act.ctx.assign(static_cast<size_t>(T) * d, 0.0);
        act.x_mid.resize(static_cast<size_t>(T) * d);
        act.ln2_xhat.resize(static_cast<size_t>(T) * d);
        act.ln2_rstd.resize(T);
        act.z1.resize(static_cast<size_t>(T) * ff);
        act.g1.resize(static_cast<size_t>(T) * ff);

        for (int t = 0; t < T; ++t) {
            layer_norm(act.x_in.data() + static_cast<size_t>(t) * d, store_.data(ids.ln1_g),
                       store_.data(ids.ln1_b), d, u.data(),
                       act.ln1_xhat.data() + static_cast<size_t>(t) * d, &act.ln1_rstd[t]);
            linear(store_.data(ids.wq), store_.data(ids.bq), u.data(), d, d,
                   act.q.data() + static_cast<size_t>(t) * d);
            linear(store_.data(ids.wk), store_.data(ids.bk), u.data(), d, d,
                   act.k.data() + static_cast<size_t>(t) * d);
            linear(store_.data(ids.wv), store_.data(ids.bv), u.data(), d, d,
                   act.v.data() + static_cast<size_t>(t) * d);
        }

        for (int t = 0; t < T; ++t) {
            for (int head = 0; head < h; ++head) {
                const int off = head * hd;
                double* w_row = act.attn_w.data() +
                                (static_cast<size_t>(head) * T + t) * T;
                const double* qt = act.q.data() + static_cast<size_t>(t) * d + off;
                for (int j = 0; j <= t; ++j) {
                    const double* kj = act.k.data() + static_cast<size_t>(j) * d + off;
                    double dot = 0.0;
                    for (int i = 0; i < hd; ++i) dot += qt[i] * kj[i];
                    w_row[j] = dot * scale;
                }
                softmax_inplace(w_row, t + 1);
                double* ctx = act.ctx.data() + static_cast<size_t>(t) * d + off;
                for (int j = 0; j <= t; ++j) {
                    const double wj = w_row[j];
                    const double* vj = act.v.data() + static_cast<size_t>(j) * d + off;
                    for (int i = 0; i < hd; ++i) ctx[i] += wj * vj[i];
                }
            }
        }

        std::vector<double> attn_out(d);
        for (int t = 0; t < T; ++t) {
            linear(store_.data(ids.wo), store_.data(ids.bo),
                   act.ctx.data() + static_cast<size_t>(t) * d, d, d, attn_out.data());
            double* xm = act.x_mid.data() + static_cast<size_t>(t) * d;
            const double* xi = act.x_in.data() + static_cast<size_t>(t) * d;
            for (int i = 0; i < d; ++i) xm[i] = xi[i] + attn_out[i];

            layer_norm(xm, store_.data(ids.ln2_g), store_.data(ids.ln2_b), d, u.data(),
                       act.ln2_xhat.data() + static_cast<size_t>(t) * d, &act.ln2_rstd[t]);
            double* z1 = act.z1.data() + static_cast<size_t>(t) * ff;
            linear(store_.data(ids.w1), store_.data(ids.b1), u.data(), d, ff, z1);
            double* g1 = act.g1.data() + static_cast<size_t>(t) * ff;
            for (int i = 0; i < ff; ++i) g1[i] = gelu(z1[i]);
            double* xt = x.data() + static_cast<size_t>(t) * d;
            linear(store_.data(ids.w2), store_.data(ids.b2), g1, ff, d, xt);
            for (int i = 0; i < d; ++i) xt[i] += xm[i];
        }
    }

    ws.x_final = x;
    for (int t = 0; t < T; ++t)
        linear(store_.data(head_w_), store_.data(head_b_), x.data() + static_cast<size_t>(t) * d, d,
               O, ws.out.data() + static_cast<size_t>(t) * O);
}

void Transformer::backward(const TfWorkspace& ws, const double* dout, double* grad_flat) const {
    const int T = ws.T;
    const int d = config_.model_width;
    const int I = config_.input_dim;
    const int O = config_.output_dim;
    const int h = config_.heads;
    const int hd = config_.head_dim();
    const int ff = config_.ff_dim();
    const double scale = 1.0 / std::sqrt(static_cast<double>(hd));
    auto g = [&](int id) { return grad_flat + store_.infos()[id].offset; };

    // head
    std::vector<double> dx(static_cast<size_t>(T) * d, 0.0);
    for (int t = 0; t < T; ++t)
        linear_backward(store_.data(head_w_), ws.x_final.data() + static_cast<size_t>(t) * d,
                        dout + static_cast<size_t>(t) * O, d, O, g(head_w_), g(head_b_),
                        dx.data() + static_cast<size_t>(t) * d);

    std::vector<double> u(d), du(d), dz(ff), dxm(static_cast<size_t>(T) * d);
    std::vector<double> dq(static_cast<size_t>(T) * d), dk(static_cast<size_t>(T) * d),
        dv(static_cast<size_t>(T) * d), dctx(static_cast<size_t>(T) * d);
    std::vector<double> dw_row;

    for (int l = config_.layers - 1; l >= 0; --l) {
        const LayerIds& ids = layer_ids_[l];
        const auto& act = ws.layers[l];

        // feed-forward block: x_out = x_mid + W2 gelu(W1 LN2(x_mid) + b1) + b2
        std::fill(dxm.begin(), dxm.end(), 0.0);
        for (int t = 0; t < T; ++t) {
            const double* dxt = dx.data() + static_cast<size_t>(t) * d;
            const double* g1 = act.g1.data() + static_cast<size_t>(t) * ff;
            const double* z1 = act.z1.data() + static_cast<size_t>(t) * ff;
            const double* xhat2 = act.ln2_xhat.data() + static_cast<size_t>(t) * d;
            double* dxmt = dxm.data() + static_cast<size_t>(t) * d;

            // residual
            for (int i = 0; i < d; ++i) dxmt[i] += dxt[i];

            std::fill(dz.begin(), dz.end(), 0.0);
            linear_backward(store_.data(ids.w2), g1, dxt, ff, d, g(ids.w2), g(ids.b2), dz.data());
            for (int i = 0; i < ff; ++i) dz[i] *= gelu_grad(z1[i]);

            // reconstruct the LN2 output for the W1 weight gradient
            const double* gain2 = store_.data(ids.ln2_g);
            const double* bias2 = store_.data(ids.ln2_b);
            for (int i = 0; i < d; ++i) u[i] = gain2[i] * xhat2[i] + bias2[i];
            std::fill(du.begin(), du.end(), 0.0);
            linear_backward(store_.data(ids.w1), u.data(), dz.data(), d, ff, g(ids.w1), g(ids.b1),
                            du.data());
            layer_norm_backward(du.data(), xhat2, act.ln2_rstd[t], gain2, d, g(ids.ln2_g),
                                g(ids.ln2_b), dxmt);
        }

        // attention block: x_mid = x_in + Wo ctx + bo
        std::fill(dq.begin(), dq.end(), 0.0);
        std::fill(dk.begin(), dk.end(), 0.0);
        std::fill(dv.begin(), dv.end(), 0.0);
        std::fill(dctx.begin(), dctx.end(), 0.0);
        for (int t = 0; t < T; ++t)
            linear_backward(store_.data(ids.wo), act.ctx.data() + static_cast<size_t>(t) * d,
                            dxm.data() + static_cast<size_t>(t) * d, d, d, g(ids.wo), g(ids.bo),
                            dctx.data() + static_cast<size_t>(t) * d);

        dw_row.resize(T);
        for (int t = 0; t < T; ++t) {
            for (int head = 0; head < h; ++head) {
                const int off = head * hd;
                const double* w_row =
                    act.attn_w.data() + (static_cast<size_t>(head) * T + t) * T;
                const double* dctx_t = dctx.data() + static_cast<size_t>(t) * d + off;
                double wdot = 0.0;
                for (int j = 0; j <= t; ++j) {
                    const double* vj = act.v.data() + static_cast<size_t>(j) * d + off;
                    double dot = 0.0;
                    for (int i = 0; i < hd; ++i) dot += dctx_t[i] * vj[i];
                    dw_row[j] = dot;
                    wdot += w_row[j] * dot;
                    double* dvj = dv.data() + static_cast<size_t>(j) * d + off;
                    const double wj = w_row[j];
                    for (int i = 0; i < hd; ++i) dvj[i] += wj * dctx_t[i];
                }
                const double* qt = act.q.data() + static_cast<size_t>(t) * d + off;
                double* dqt = dq.data() + static_cast<size_t>(t) * d + off;
                for (int j = 0; j <= t; ++j) {
                    const double dscore = w_row[j] * (dw_row[j] - wdot) * scale;
                    if (dscore == 0.0) continue;
                    const double* kj = act.k.data() + static_cast<size_t>(j) * d + off;
                    double* dkj = dk.data() + static_cast<size_t>(j) * d + off;
                    for (int i = 0; i < hd; ++i) {
                        dqt[i] += dscore * kj[i];
                        dkj[i] += dscore * qt[i];
                    }
                }
            }
        }

        // back through q/k/v projections and LN1 into the residual stream
        for (int t = 0; t < T; ++t) {
            const double* xhat1 = act.ln1_xhat.data() + static_cast<size_t>(t) * d;
            const double* gain1 = store_.data(ids.ln1_g);
            const double* bias1 = store_.data(ids.ln1_b);
            for (int i = 0; i < d; ++i) u[i] = gain1[i] * xhat1[i] + bias1[i];
            std::fill(du.begin(), du.end(), 0.0);
            linear_backward(store_.data(ids.wq), u.data(), dq.data() + static_cast<size_t>(t) * d,
                            d, d, g(ids.wq), g(ids.bq), du.data());
            linear_backward(store_.data(ids.wk), u.data(), dk.data() + static_cast<size_t>(t) * d,
                            d, d, g(ids.wk), g(ids.bk), du.data());
            linear_backward(store_.data(ids.wv), u.data(), dv.data() + static_cast<size_t>(t) * d,
                            d, d, g(ids.wv), g(ids.bv), du.data());
            double* dxi = dxm.data() + static_cast<size_t>(t) * d;  // reuse: dx_in = dx_mid + LN1'
            layer_norm_backward(du.data(), xhat1, act.ln1_rstd[t], gain1, d, g(ids.ln1_g),
                                g(ids.ln1_b), dxi);
        }
        dx = dxm;
    }

    // input layer norm, positions, input projection
    std::vector<double> de(d);
    for (int t = 0; t < T; ++t) {
        std::fill(de.begin(), de.end(), 0.0);
        layer_norm_backward(dx.data() + static_cast<size_t>(t) * d,
                            ws.ln_in_xhat.data() + static_cast<size_t>(t) * d, ws.ln_in_rstd[t],
                            store_.data(ln_in_g_), d, g(ln_in_g_), g(ln_in_b_), de.data());
        double* dpos = g(pos_) + static_cast<size_t>(t) * d;
        for (int i = 0; i < d; ++i) dpos[i] += de[i];
        linear_backward(store_.data(embed_w_), ws.input.data() + static_cast<size_t>(t) * I,
                        de.data(), I, d, g(embed_w_), g(embed_b_), nullptr);
    }
}

void Transformer::cache_reset(TfCache& cache) const {
    const size_t per_layer = static_cast<size_t>(config_.max_context) * config_.model_width;
    cache.len = 0;
    cache.k.assign(static_cast<size_t>(config_.layers) * per_layer, 0.0);
    cache.v.assign(static_cast<size_t>(config_.layers) * per_layer, 0.0);
    cache.x_scratch.assign(static_cast<size_t>(config_.model_width) * 5 + config_.ff_dim(), 0.0);
    cache.ops = 0;
}

void Transformer::forward_incremental(TfCache& cache, const double* obs_t, double* out_t) const {
    if (cache.len >= config_.max_context) fail("incremental forward past max context");
    const int d = config_.model_width;
    const int h = config_.heads;
    const int hd = config_.head_dim();
    const int ff = config_.ff_dim();
    const int t = cache.len;
    const double scale = 1.0 / std::sqrt(static_cast<double>(hd));
    const size_t per_layer = static_cast<size_t>(config_.max_context) * d;

    double* x = cache.x_scratch.data();
    double* u = x + d;
    double* q = u + d;
    double* ctx = q + d;
    double* xhat = ctx + d;
    double* z1 = xhat + d;
    double rstd;

    linear(store_.data(embed_w_), store_.data(embed_b_), obs_t, config_.input_dim, d, u);
    const double* pos = store_.data(pos_) + static_cast<size_t>(t) * d;
    for (int i = 0; i < d; ++i) u[i] += pos[i];
    cache.ops += static_cast<uint64_t>(d) * config_.input_dim;

    layer_norm(u, store_.data(ln_in_g_), store_.data(ln_in_b_), d, x, xhat, &rstd);

    std::vector<double> attn_w(t + 1);
    for (int l = 0; l < config_.layers; ++l) {
        const LayerIds& ids = layer_ids_[l];
        double* kcache = cache.k.data() + l * per_layer;
        double* vcache = cache.v.data() + l * per_layer;
        double* kt = kcache + static_cast<size_t>(t) * d;
        double* vt = vcache + static_cast<size_t>(t) * d;

        layer_norm(x, store_.data(ids.ln1_g), store_.data(ids.ln1_b), d, u, xhat, &rstd);
        linear(store_.data(ids.wq), store_.data(ids.bq), u, d, d, q);
        linear(store_.data(ids.wk), store_.data(ids.bk), u, d, d, kt);
        linear(store_.data(ids.wv), store_.data(ids.bv), u, d, d, vt);
        cache.ops += 3ULL * d * d;

        for (int head = 0; head < h; ++head) {
            const int off = head * hd;
            for (int j = 0; j <= t; ++j) {
                const double* kj = kcache + static_cast<size_t>(j) * d + off;
                double dot = 0.0;
                for (int i = 0; i < hd; ++i) dot += q[off + i] * kj[i];
                attn_w[j] = dot * scale;
            }
            softmax_inplace(attn_w.data(), t + 1);
            for (int i = 0; i < hd; ++i) ctx[off + i] = 0.0;
            for (int j = 0; j <= t; ++j) {
                const double wj = attn_w[j];
                const double* vj = vcache + static_cast<size_t>(j) * d + off;
                for (int i = 0; i < hd; ++i) ctx[off + i] += wj * vj[i];
            }
            cache.ops += 2ULL * (t + 1) * hd;
        }

        linear(store_.data(ids.wo), store_.data(ids.bo), ctx, d, d, u);
        for (int i = 0; i < d; ++i) x[i] += u[i];
        layer_norm(x, store_.data(ids.ln2_g), store_.data(ids.ln2_b), d, u, xhat, &rstd);
        linear(store_.data(ids.w1), store_.data(ids.b1), u, d, ff, z1);
        for (int i = 0; i < ff; ++i) z1[i] = gelu(z1[i]);
        linear(store_.data(ids.w2), store_.data(ids.b2), z1, ff, d, u);
        for (int i = 0; i < d; ++i) x[i] += u[i];
        cache.ops += static_cast<uint64_t>(d) * d + 2ULL * d * ff;
    }

    linear(store_.data(head_w_), store_.data(head_b_), x, d, config_.output_dim, out_t);
    cache.ops += static_cast<uint64_t>(config_.output_dim) * d;
    cache.len = t + 1;
}

size_t MarkovNetConfig::param_count() const {
    return static_cast<size_t>(hidden) * input_dim + hidden + static_cast<size_t>(hidden) * hidden +
           hidden + static_cast<size_t>(output_dim) * hidden + output_dim;
}

MarkovNet::MarkovNet(const MarkovNetConfig& config) : config_(config) {
    using Init = ParamStore::Init;
    const int H = config_.hidden;
    w1_ = store_.add("fc1.w", {H, config_.input_dim}, Init::fan_in_uniform, config_.input_dim);
    b1_ = store_.add("fc1.b", {H}, Init::zeros);
    w2_ = store_.add("fc2.w", {H, H}, Init::fan_in_uniform, H);
    b2_ = store_.add("fc2.b", {H}, Init::zeros);
    w3_ = store_.add("fc3.w", {config_.output_dim, H}, Init::fan_in_uniform, H);
    b3_ = store_.add("fc3.b", {config_.output_dim}, Init::zeros);
    store_.allocate();
    if (store_.total() != config_.param_count()) fail("parameter count formula out of sync");
}

void MarkovNet::forward(const double* obs, int T, Workspace& ws) const {
    const int I = config_.input_dim;
    const int H = config_.hidden;
    const int O = config_.output_dim;
    ws.T = T;
    ws.input.assign(obs, obs + static_cast<size_t>(T) * I);
    ws.h1.resize(static_cast<size_t>(T) * H);
    ws.h2.resize(static_cast<size_t>(T) * H);
    ws.out.resize(static_cast<size_t>(T) * O);
    for (int t = 0; t < T; ++t) {
        double* h1 = ws.h1.data() + static_cast<size_t>(t) * H;
        double* h2 = ws.h2.data() + static_cast<size_t>(t) * H;
        linear(store_.data(w1_), store_.data(b1_), obs + static_cast<size_t>(t) * I, I, H, h1);
        for (int i = 0; i < H; ++i) h1[i] = std::max(0.0, h1[i]);
        linear(store_.data(w2_), store_.data(b2_), h1, H, H, h2);
        for (int i = 0; i < H; ++i) h2[i] = std::max(0.0, h2[i]);
        linear(store_.data(w3_), store_.data(b3_), h2, H, O,
               ws.out.data() + static_cast<size_t>(t) * O);
    }
}

void MarkovNet::backward(const Workspace& ws, const double* dout, double* grad_flat) const {
    const int I = config_.input_dim;
    const int H = config_.hidden;
    const int O = config_.output_dim;
    auto g = [&](int id) { return grad_flat + store_.infos()[id].offset; };
    std::vector<double> dh2(H), dh1(H);
    for (int t = 0; t < ws.T; ++t) {
        const double* h1 = ws.h1.data() + static_cast<size_t>(t) * H;
        const double* h2 = ws.h2.data() + static_cast<size_t>(t) * H;
        std::fill(dh2.begin(), dh2.end(), 0.0);
        linear_backward(store_.data(w3_), h2, dout + static_cast<size_t>(t) * O, H, O, g(w3_),
                        g(b3_), dh2.data());
        for (int i = 0; i < H; ++i)
            if (h2[i] == 0.0) dh2[i] = 0.0;
        std::fill(dh1.begin(), dh1.end(), 0.0);
        linear_backward(store_.data(w2_), h1, dh2.data(), H, H, g(w2_), g(b2_), dh1.data());
        for (int i = 0; i < H; ++i)
            if (h1[i] == 0.0) dh1[i] = 0.0;
        linear_backward(store_.data(w1_), ws.input.data() + static_cast<size_t>(t) * I, dh1.data(),
                        I, H, g(w1_), g(b1_), nullptr);
    }
}

void MarkovNet::forward_incremental(Cache& cache, const double* obs_t, double* out_t) const {
    const int H = config_.hidden;
    std::vector<double> h1(H), h2(H);
    linear(store_.data(w1_), store_.data(b1_), obs_t, config_.input_dim, H, h1.data());
    for (int i = 0; i < H; ++i) h1[i] = std::max(0.0, h1[i]);
    linear(store_.data(w2_), store_.data(b2_), h1.data(), H, H, h2.data());
    for (int i = 0; i < H; ++i) h2[i] = std::max(0.0, h2[i]);
    linear(store_.data(w3_), store_.data(b3_), h2.data(), H, config_.output_dim, out_t);
    cache.len += 1;
    cache.ops += config_.param_count();
}

void AdamOptimizer::step(std::vector<double>& params, const std::vector<double>& grads) {
    if (params.size() != m_.size() || grads.size() != m_.size())
        fail("adam buffer size mismatch");
    t_ += 1;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (size_t i = 0; i < params.size(); ++i) {
        const double grad = grads[i] + weight_decay_ * params[i];
        m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * grad;
        v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * grad * grad;
        const double mhat = m_[i] / bc1;
        const double vhat = v_[i] / bc2;
        params[i] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
    }
}

}  // namespace rl3
