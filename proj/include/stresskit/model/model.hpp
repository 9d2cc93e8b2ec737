#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "stresskit/errors.hpp"
#include "stresskit/nd/adam.hpp"
#include "stresskit/nd/tape.hpp"
#include "stresskit/rng.hpp"

namespace stresskit::model {

enum class Fusion { unimodal, early, cross_modal };
const char* to_string(Fusion f);
Fusion parse_fusion(const std::string& s);

struct ModelConfig {
    int embed_dim = 64;
    int n_layers = 2;
    int n_heads = 4;
    int ffn_dim = 0;  // 0 -> 4 * embed_dim
    double dropout = 0.2;
    int max_t = 128;
    std::vector<int> stem_kernels = {3, 5, 7};
    Fusion fusion = Fusion::unimodal;
    int head_hidden = 32;
    int input_dim = 0;    // F of the (primary) stream
    int input_dim_b = 0;  // F of the secondary stream (cross-modal only)

    int ffn() const { return ffn_dim > 0 ? ffn_dim : 4 * embed_dim; }
    void validate() const;
    nlohmann::json to_json() const;
    static ModelConfig from_json(const nlohmann::json& j);
};

namespace detail {

template <typename T>
void init_uniform(nd::Parameter<T>& p, Rng rng, double bound) {
    for (auto& v : p.value.data) v = static_cast<T>(rng.uniform(-bound, bound));
}

template <typename T>
void init_normal(nd::Parameter<T>& p, Rng rng, double sd) {
    for (auto& v : p.value.data) v = static_cast<T>(sd * rng.normal());
}

}  // namespace detail

// Dense layer y = x W + b, fan-in scaled uniform init, zero bias.
template <typename T>
struct Linear {
    nd::Parameter<T> w, b;

    void init(const std::string& name, int in, int out, const Rng& rng) {
        w = nd::Parameter<T>(name + ".w", nd::Tensor<T>({in, out}));
        b = nd::Parameter<T>(name + ".b", nd::Tensor<T>({1, out}));
        detail::init_uniform(w, rng.fork(name + ".w"), std::sqrt(1.0 / in));
    }
    int apply(nd::Tape<T>& tape, int x) {
        return tape.add_row_bias(tape.matmul(x, tape.param(w)), tape.param(b));
    }
    void collect(std::vector<nd::Parameter<T>*>& out) {
        out.push_back(&w);
        out.push_back(&b);
    }
};

template <typename T>
struct LayerNormParams {
    nd::Parameter<T> gain, bias;

    void init(const std::string& name, int n) {
        gain = nd::Parameter<T>(name + ".gain", nd::Tensor<T>::full({1, n}, T(1)));
        bias = nd::Parameter<T>(name + ".bias", nd::Tensor<T>({1, n}));
    }
    int apply(nd::Tape<T>& tape, int x) {
        return tape.layer_norm(x, tape.param(gain), tape.param(bias));
    }
    void collect(std::vector<nd::Parameter<T>*>& out) {
        out.push_back(&gain);
        out.push_back(&bias);
    }
};

// Parallel depthwise convs (one per configured kernel size) concatenated and
// projected pointwise to the embedding width.
template <typename T>
struct Stem {
    std::vector<nd::Parameter<T>> conv_w, conv_b;
    Linear<T> proj;
    std::vector<int> kernels;

    void init(const std::string& name, int f, int e, const std::vector<int>& ks, const Rng& rng) {
        kernels = ks;
        for (int k : ks) {
            if (k % 2 == 0) throw ConfigError("stem kernel sizes must be odd");
            std::string base = name + ".conv" + std::to_string(k);
            conv_w.emplace_back(base + ".w", nd::Tensor<T>({f, k}));
            conv_b.emplace_back(base + ".b", nd::Tensor<T>({1, f}));
            detail::init_uniform(conv_w.back(), rng.fork(base + ".w"), std::sqrt(1.0 / k));
        }
        proj.init(name + ".proj", f * static_cast<int>(ks.size()), e, rng);
    }
    int apply(nd::Tape<T>& tape, int x, int t_len) {
        int cat = -1;
        for (std::size_t i = 0; i < kernels.size(); ++i) {
            int c = tape.depthwise_conv1d(x, tape.param(conv_w[i]), tape.param(conv_b[i]), t_len);
            cat = (cat < 0) ? c : tape.concat_cols(cat, c);
        }
        return proj.apply(tape, cat);
    }
    void collect(std::vector<nd::Parameter<T>*>& out) {
        for (auto& p : conv_w) out.push_back(&p);
        for (auto& p : conv_b) out.push_back(&p);
        proj.collect(out);
    }
};

template <typename T>
struct AttentionBlock {
    Linear<T> wq, wk, wv, wo;

    void init(const std::string& name, int e, const Rng& rng) {
        wq.init(name + ".q", e, e, rng);
        wk.init(name + ".k", e, e, rng);
        wv.init(name + ".v", e, e, rng);
        wo.init(name + ".o", e, e, rng);
    }
    // queries from `xq`, keys/values from `xkv`
    int apply(nd::Tape<T>& tape, int xq, int xkv, int batch, int tq, int tk, int heads, T dropout,
              Rng& drop_rng, bool training) {
        int q = wq.apply(tape, xq);
        int k = wk.apply(tape, xkv);
        int v = wv.apply(tape, xkv);
        int scores = tape.attn_scores(q, k, batch, tq, tk, heads);
        int weights = tape.softmax_rows(scores);
        weights = tape.dropout(weights, dropout, drop_rng, training);
        int ctx = tape.attn_apply(weights, v, batch, tq, tk, heads);
        return wo.apply(tape, ctx);
    }
    void collect(std::vector<nd::Parameter<T>*>& out) {
        wq.collect(out);
        wk.collect(out);
        wv.collect(out);
        wo.collect(out);
    }
};

// Pre-norm encoder layer: x + MHSA(LN(x)); then x + FFN(LN(x)).
template <typename T>
struct EncoderLayer {
    LayerNormParams<T> ln1, ln2;
    AttentionBlock<T> attn;
    Linear<T> ffn1, ffn2;

    void init(const std::string& name, int e, int ffn, const Rng& rng) {
        ln1.init(name + ".ln1", e);
        ln2.init(name + ".ln2", e);
        attn.init(name + ".attn", e, rng);
        ffn1.init(name + ".ffn1", e, ffn, rng);
        ffn2.init(name + ".ffn2", ffn, e, rng);
    }
    int apply(nd::Tape<T>& tape, int x, int batch, int t_len, int heads, T dropout, Rng& drop_rng,
              bool training) {
        int a_in = ln1.apply(tape, x);
        int a = attn.apply(tape, a_in, a_in, batch, t_len, t_len, heads, dropout, drop_rng, training);
        x = tape.add(x, tape.dropout(a, dropout, drop_rng, training));
        int f_in = ln2.apply(tape, x);
        int h = tape.relu(ffn1.apply(tape, f_in));
        h = tape.dropout(h, dropout, drop_rng, training);
        int f = ffn2.apply(tape, h);
        return tape.add(x, tape.dropout(f, dropout, drop_rng, training));
    }
    void collect(std::vector<nd::Parameter<T>*>& out) {
        ln1.collect(out);
        ln2.collect(out);
        attn.collect(out);
        ffn1.collect(out);
        ffn2.collect(out);
    }
};

// Learned positional table + encoder stack.
template <typename T>
struct Encoder {
    nd::Parameter<T> pos;
    std::vector<EncoderLayer<T>> layers;

    void init(const std::string& name, const ModelConfig& cfg, const Rng& rng) {
        pos = nd::Parameter<T>(name + ".pos", nd::Tensor<T>({cfg.max_t, cfg.embed_dim}));
        detail::init_normal(pos, rng.fork(name + ".pos"), 0.02);
        layers.resize(cfg.n_layers);
        for (int i = 0; i < cfg.n_layers; ++i)
            layers[i].init(name + ".layer" + std::to_string(i), cfg.embed_dim, cfg.ffn(), rng);
    }
    int apply(nd::Tape<T>& tape, int z, int batch, int t_len, const ModelConfig& cfg, Rng& drop_rng,
              bool training) {
        if (t_len > cfg.max_t)
            throw ConfigError("sequence length " + std::to_string(t_len) + " exceeds max_t " +
                              std::to_string(cfg.max_t));
        z = tape.add_pos_rows(z, tape.param(pos), t_len);
        for (auto& layer : layers)
            z = layer.apply(tape, z, batch, t_len, cfg.n_heads, static_cast<T>(cfg.dropout),
                            drop_rng, training);
        return z;
    }
    void collect(std::vector<nd::Parameter<T>*>& out) {
        out.push_back(&pos);
        for (auto& l : layers) l.collect(out);
    }
};

// a_t = softmax(v^T tanh(W z_t)); h = sum_t a_t z_t.
template <typename T>
struct AttentionPool {
    nd::Parameter<T> w, v;

    void init(const std::string& name, int e, const Rng& rng) {
        w = nd::Parameter<T>(name + ".w", nd::Tensor<T>({e, e}));
        v = nd::Parameter<T>(name + ".v", nd::Tensor<T>({e, 1}));
        detail::init_uniform(w, rng.fork(name + ".w"), std::sqrt(1.0 / e));
        detail::init_uniform(v, rng.fork(name + ".v"), std::sqrt(1.0 / e));
    }
    struct Result {
        int pooled;
        int weights;  // (B*T) x 1, exported for inspection
    };
    Result apply(nd::Tape<T>& tape, int z, int t_len) {
        int s = tape.matmul(tape.tanh_op(tape.matmul(z, tape.param(w))), tape.param(v));
        int a = tape.block_softmax_col(s, t_len);
        return {tape.block_weighted_sum(a, z, t_len), a};
    }
    void collect(std::vector<nd::Parameter<T>*>& out) {
        out.push_back(&w);
        out.push_back(&v);
    }
};

template <typename T>
struct Head {
    Linear<T> h1, h2;

    void init(const std::string& name, int in, int hidden, const Rng& rng) {
        h1.init(name + ".h1", in, hidden, rng);
        h2.init(name + ".h2", hidden, 1, rng);
    }
    int apply(nd::Tape<T>& tape, int h, T dropout, Rng& drop_rng, bool training) {
        int x = tape.relu(h1.apply(tape, h));
        x = tape.dropout(x, dropout, drop_rng, training);
        return h2.apply(tape, x);
    }
    void collect(std::vector<nd::Parameter<T>*>& out) {
        h1.collect(out);
        h2.collect(out);
    }
};

template <typename T>
struct ForwardResult {
    int logits;                 // B x 1
    int pool_weights = -1;      // primary stream pooling weights
    int pool_weights_b = -1;    // secondary stream (cross-modal)
};

// The full classifier: unimodal and early fusion share one encoder; the
// cross-modal variant runs one encoder per stream, one cross-attention block
// per direction (residual into the target stream), pools each stream and
// classifies the concatenation.
template <typename T>
class StressModel {
public:
    StressModel(ModelConfig cfg, std::uint64_t seed) : cfg_(std::move(cfg)) {
        cfg_.validate();
        Rng rng = Rng(Rng::mix(seed)).fork("init");
        stem_a_.init("stem_a", cfg_.input_dim, cfg_.embed_dim, cfg_.stem_kernels, rng);
        enc_a_.init("enc_a", cfg_, rng);
        pool_a_.init("pool_a", cfg_.embed_dim, rng);
        int head_in = cfg_.embed_dim;
        if (cfg_.fusion == Fusion::cross_modal) {
            stem_b_.init("stem_b", cfg_.input_dim_b, cfg_.embed_dim, cfg_.stem_kernels, rng);
            enc_b_.init("enc_b", cfg_, rng);
            pool_b_.init("pool_b", cfg_.embed_dim, rng);
            cross_ln_a_.init("cross.ln_a", cfg_.embed_dim);
            cross_ln_b_.init("cross.ln_b", cfg_.embed_dim);
            cross_ab_.init("cross.a_from_b", cfg_.embed_dim, rng);
            cross_ba_.init("cross.b_from_a", cfg_.embed_dim, rng);
            head_in = 2 * cfg_.embed_dim;
        }
        head_.init("head", head_in, cfg_.head_hidden, rng);
    }

    // x: (B*T) x F. For cross-modal, xb: (B*T) x F_b.
    ForwardResult<T> forward(nd::Tape<T>& tape, int x, std::optional<int> xb, int batch, int t_len,
                             bool training, Rng& drop_rng) {
        const T p = static_cast<T>(cfg_.dropout);
        int za = stem_a_.apply(tape, x, t_len);
        za = tape.dropout(za, p, drop_rng, training);
        za = enc_a_.apply(tape, za, batch, t_len, cfg_, drop_rng, training);
        ForwardResult<T> res{};
        if (cfg_.fusion != Fusion::cross_modal) {
            auto pooled = pool_a_.apply(tape, za, t_len);
            res.pool_weights = pooled.weights;
            res.logits = head_.apply(tape, pooled.pooled, p, drop_rng, training);
            return res;
        }
        if (!xb) throw ShapeError("cross-modal forward needs a secondary stream");
        int zb = stem_b_.apply(tape, *xb, t_len);
        zb = tape.dropout(zb, p, drop_rng, training);
        zb = enc_b_.apply(tape, zb, batch, t_len, cfg_, drop_rng, training);

        int a_ln = cross_ln_a_.apply(tape, za);
        int b_ln = cross_ln_b_.apply(tape, zb);
        int a2 = tape.add(za, tape.dropout(cross_ab_.apply(tape, a_ln, b_ln, batch, t_len, t_len,
                                                           cfg_.n_heads, p, drop_rng, training),
                                           p, drop_rng, training));
        int b2 = tape.add(zb, tape.dropout(cross_ba_.apply(tape, b_ln, a_ln, batch, t_len, t_len,
                                                           cfg_.n_heads, p, drop_rng, training),
                                           p, drop_rng, training));
        auto pa = pool_a_.apply(tape, a2, t_len);
        auto pb = pool_b_.apply(tape, b2, t_len);
        res.pool_weights = pa.weights;
        res.pool_weights_b = pb.weights;
        int h = tape.concat_cols(pa.pooled, pb.pooled);
        res.logits = head_.apply(tape, h, p, drop_rng, training);
        return res;
    }

    // Deterministic eval-mode logits.
    std::vector<T> predict(const nd::Tensor<T>& x, const nd::Tensor<T>* xb, int batch, int t_len) {
        nd::Tape<T> tape;
        Rng unused(0);
        int xi = tape.constant(x);
        std::optional<int> xbi;
        if (xb) xbi = tape.constant(*xb);
        auto res = forward(tape, xi, xbi, batch, t_len, false, unused);
        const auto& v = tape.value(res.logits);
        return std::vector<T>(v.data.begin(), v.data.end());
    }

    std::vector<nd::Parameter<T>*> parameters() {
        std::vector<nd::Parameter<T>*> out;
        stem_a_.collect(out);
        enc_a_.collect(out);
        pool_a_.collect(out);
        if (cfg_.fusion == Fusion::cross_modal) {
            stem_b_.collect(out);
            enc_b_.collect(out);
            pool_b_.collect(out);
            cross_ln_a_.collect(out);
            cross_ln_b_.collect(out);
            cross_ab_.collect(out);
            cross_ba_.collect(out);
        }
        head_.collect(out);
        return out;
    }

    long parameter_count() {
        long n = 0;
        for (auto* p : parameters()) n += static_cast<long>(p->value.numel());
        return n;
    }

    const ModelConfig& config() const { return cfg_; }

    // test hooks
    AttentionBlock<T>& cross_a_from_b() { return cross_ab_; }
    AttentionBlock<T>& cross_b_from_a() { return cross_ba_; }
    Encoder<T>& encoder_a() { return enc_a_; }

private:
    ModelConfig cfg_;
    Stem<T> stem_a_, stem_b_;
    Encoder<T> enc_a_, enc_b_;
    AttentionPool<T> pool_a_, pool_b_;
    LayerNormParams<T> cross_ln_a_, cross_ln_b_;
    AttentionBlock<T> cross_ab_, cross_ba_;
    Head<T> head_;
};

// Fully-connected baseline on window summary features: 128 -> 64 -> 1 with
// relu and dropout.
template <typename T>
class MlpModel {
public:
    MlpModel(int input_dim, double dropout, std::uint64_t seed) : dropout_(dropout) {
        Rng rng = Rng(Rng::mix(seed)).fork("mlp_init");
        l1_.init("mlp.l1", input_dim, 128, rng);
        l2_.init("mlp.l2", 128, 64, rng);
        l3_.init("mlp.l3", 64, 1, rng);
    }
    int forward(nd::Tape<T>& tape, int x, bool training, Rng& drop_rng) {
        const T p = static_cast<T>(dropout_);
        int h = tape.relu(l1_.apply(tape, x));
        h = tape.dropout(h, p, drop_rng, training);
        h = tape.relu(l2_.apply(tape, h));
        h = tape.dropout(h, p, drop_rng, training);
        return l3_.apply(tape, h);
    }
    std::vector<T> predict(const nd::Tensor<T>& x) {
        nd::Tape<T> tape;
        Rng unused(0);
        int id = forward(tape, tape.constant(x), false, unused);
        const auto& v = tape.value(id);
        return std::vector<T>(v.data.begin(), v.data.end());
    }
    std::vector<nd::Parameter<T>*> parameters() {
        std::vector<nd::Parameter<T>*> out;
        l1_.collect(out);
        l2_.collect(out);
        l3_.collect(out);
        return out;
    }

private:
    Linear<T> l1_, l2_, l3_;
    double dropout_;
};

// kNN score: fraction of stress labels among the k nearest Euclidean
// neighbors; distance ties resolve by train index.
std::vector<double> knn_scores(const Matrix& train_x, const std::vector<int>& train_y,
                               const Matrix& test_x, int k);

}  // namespace stresskit::model
