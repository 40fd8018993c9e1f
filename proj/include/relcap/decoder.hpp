#pragma once

#include "relcap/checkpoint.hpp"
#include "relcap/ops.hpp"

#include <cmath>
#include <string>
#include <vector>

namespace relcap {

/// Single-head scaled dot-product attention on the tape:
/// softmax(Q K^T / sqrt(d) + mask) V. The mask is additive (0 keeps,
/// a large negative value removes) and may be empty.
template <class S>
Tensor<S> scaled_dot_attention(const Tensor<S>& q, const Tensor<S>& k, const Tensor<S>& v,
                               const Matrix<S>& mask = {}) {
    if (q.cols() != k.cols())
        throw ValidationError("attention: query dim " + shape_str(q.rows(), q.cols()) +
                              " vs key dim " + shape_str(k.rows(), k.cols()));
    if (k.rows() != v.rows())
        throw ValidationError("attention: key count " + shape_str(k.rows(), k.cols()) +
                              " vs value count " + shape_str(v.rows(), v.cols()));
    auto scores = ops::scalar_mul(ops::matmul(q, ops::transpose(k)),
                                  S(1) / std::sqrt(S(q.cols())));
    if (mask.size() > 0) {
        if (mask.rows() != q.rows() || mask.cols() != k.rows())
            throw ValidationError("attention: mask shape " + shape_str(mask.rows(), mask.cols()) +
                                  ", expected " + shape_str(q.rows(), k.rows()));
        scores = ops::add(scores, q.tape()->constant(mask));
    }
    return ops::matmul(ops::softmax(scores, ops::Axis::cols), v);
}

/// Raw-matrix twin of scaled_dot_attention for the cached inference path.
template <class S>
Matrix<S> attention_raw(const Matrix<S>& q, const Matrix<S>& k, const Matrix<S>& v,
                        const Matrix<S>& mask = {}) {
    Matrix<S> scores = q * k.transpose() / std::sqrt(S(q.cols()));
    if (mask.size() > 0) scores += mask;
    Matrix<S> out(q.rows(), v.cols());
    for (Eigen::Index r = 0; r < scores.rows(); ++r) {
        auto row = scores.row(r).array();
        Eigen::Array<S, 1, Eigen::Dynamic> e = (row - row.maxCoeff()).exp();
        out.row(r) = (e / e.sum()).matrix() * v;
    }
    return out;
}

struct DecoderConfig {
    int d_model = 128;
    int n_layers = 2;
    int n_heads = 4;
    int d_ff = 0; // 0 -> 4 * d_model
    int max_len = 20;
    int vocab_size = 0;

    int ff_dim() const { return d_ff > 0 ? d_ff : 4 * d_model; }

    void validate() const {
        if (vocab_size < 5) throw ValidationError("decoder: vocab size too small");
        if (d_model <= 0 || n_layers <= 0 || n_heads <= 0 || max_len <= 0)
            throw ValidationError("decoder: sizes must be positive");
        if (d_model % n_heads != 0)
            throw ValidationError("decoder: d_model " + std::to_string(d_model) +
                                  " not divisible by n_heads " + std::to_string(n_heads));
    }
};

/// Cached incremental decoding state: the consumed prefix plus per-layer
/// projected keys/values. Recomputing from scratch must agree with the
/// cache within 1e-6.
template <class S>
struct DecoderState {
    std::vector<int> tokens;
    std::vector<Matrix<S>> self_k, self_v; // per layer, grows one row per step
    std::vector<Matrix<S>> mem_k, mem_v;   // per layer, fixed
};

/// Autoregressive caption decoder: token+position embedding, per layer
/// masked self-attention, cross-attention over the GCN memory, and a
/// feed-forward block, each wrapped in residual + layer norm; a final
/// linear + softmax yields the vocabulary distribution. The output layer
/// starts at zero so an untrained decoder is exactly uniform.
template <class S>
class TransformerDecoder {
  public:
    TransformerDecoder(DecoderConfig cfg, std::uint64_t seed) : cfg_(cfg) {
        cfg_.validate();
        Rng rng(seed);
        const int d = cfg_.d_model;
        const S bound = S(1) / std::sqrt(S(d));
        embedding_ = Parameter<S>("decoder.embedding", Matrix<S>());
        embedding_.init_uniform(cfg_.vocab_size, d, bound, rng);
        for (int l = 0; l < cfg_.n_layers; ++l) {
            Layer layer;
            auto name = [l](const std::string& s) {
                return "decoder.layer" + std::to_string(l) + "." + s;
            };
            init_attn(layer.self_attn, name("self"), rng);
            init_attn(layer.cross_attn, name("cross"), rng);
            layer.ln1 = make_ln(name("ln1"));
            layer.ln2 = make_ln(name("ln2"));
            layer.ln3 = make_ln(name("ln3"));
            layer.ff_w1 = Parameter<S>(name("ff_w1"), Matrix<S>());
            layer.ff_w1.init_uniform(d, cfg_.ff_dim(), bound, rng);
            layer.ff_b1 = Parameter<S>(name("ff_b1"), Matrix<S>::Zero(1, cfg_.ff_dim()));
            layer.ff_w2 = Parameter<S>(name("ff_w2"), Matrix<S>());
            layer.ff_w2.init_uniform(cfg_.ff_dim(), d, S(1) / std::sqrt(S(cfg_.ff_dim())), rng);
            layer.ff_b2 = Parameter<S>(name("ff_b2"), Matrix<S>::Zero(1, d));
            layers_.push_back(std::move(layer));
        }
        w_out_ = Parameter<S>("decoder.w_out", Matrix<S>::Zero(d, cfg_.vocab_size));
        b_out_ = Parameter<S>("decoder.b_out", Matrix<S>::Zero(1, cfg_.vocab_size));
        positional_ = sinusoidal(cfg_.max_len, d);
    }

    const DecoderConfig& config() const { return cfg_; }

    std::vector<Parameter<S>*> parameters() {
        std::vector<Parameter<S>*> out{&embedding_};
        for (auto& l : layers_) {
            for (auto* a : {&l.self_attn, &l.cross_attn})
                for (auto* p : {&a->wq, &a->bq, &a->wk, &a->wv, &a->bv, &a->wo, &a->bo})
                    out.push_back(p);
            for (auto* ln : {&l.ln1, &l.ln2, &l.ln3}) {
                out.push_back(&ln->gain);
                out.push_back(&ln->bias);
            }
            out.push_back(&l.ff_w1);
            out.push_back(&l.ff_b1);
            out.push_back(&l.ff_w2);
            out.push_back(&l.ff_b2);
        }
        out.push_back(&w_out_);
        out.push_back(&b_out_);
        return out;
    }

    /// Teacher-forced distributions for every prefix position: row t is
    /// the distribution over token t+1. `memory` holds the GCN's K rows.
    Tensor<S> forward(Tape<S>& tape, const std::vector<int>& prefix, const Tensor<S>& memory) {
        check_prefix(prefix);
        if (memory.cols() != cfg_.d_model)
            throw ValidationError("decoder: memory width " + std::to_string(memory.cols()) +
                                  ", expected d_model " + std::to_string(cfg_.d_model));
        const int t = int(prefix.size());
        using namespace ops;
        auto x = add(embedding_lookup(tape.param(embedding_), prefix),
                     tape.constant(positional_.topRows(t)));
        const Matrix<S> causal = causal_mask(t);
        for (auto& layer : layers_) {
            auto sa = multi_head(tape, layer.self_attn, x, x, &causal);
            x = apply_ln(tape, layer.ln1, add(x, sa));
            auto ca = multi_head(tape, layer.cross_attn, x, memory, nullptr);
            x = apply_ln(tape, layer.ln2, add(x, ca));
            auto ff = add_rowvec(
                matmul(relu(add_rowvec(matmul(x, tape.param(layer.ff_w1)),
                                       tape.param(layer.ff_b1))),
                       tape.param(layer.ff_w2)),
                tape.param(layer.ff_b2));
            x = apply_ln(tape, layer.ln3, add(x, ff));
        }
        auto logits = add_rowvec(matmul(x, tape.param(w_out_)), tape.param(b_out_));
        return softmax(logits, Axis::cols);
    }

    /// Distribution over the next token after the prefix; fresh tape, no
    /// gradients. This is the from-scratch twin the cache is checked
    /// against.
    Vector<S> decode_step(const std::vector<int>& prefix, const Matrix<S>& memory) {
        Tape<S> tape;
        auto dist = forward(tape, prefix, tape.constant(memory));
        return dist.value().row(dist.rows() - 1).transpose();
    }

    DecoderState<S> init_state(const Matrix<S>& memory) const {
        if (memory.cols() != cfg_.d_model)
            throw ValidationError("decoder: memory width " + std::to_string(memory.cols()) +
                                  ", expected d_model " + std::to_string(cfg_.d_model));
        DecoderState<S> st;
        const int d = cfg_.d_model;
        for (const auto& layer : layers_) {
            st.self_k.emplace_back(0, d);
            st.self_v.emplace_back(0, d);
            st.mem_k.push_back(memory * layer.cross_attn.wk.value);
            st.mem_v.push_back((memory * layer.cross_attn.wv.value).rowwise() +
                               layer.cross_attn.bv.value.row(0));
        }
        return st;
    }

    /// Consumes one token and returns the distribution over the next;
    /// cached keys/values make this O(prefix) instead of O(prefix^2).
    Vector<S> advance(DecoderState<S>& st, int token) const {
        const int pos = int(st.tokens.size());
        if (pos >= cfg_.max_len)
            throw ValidationError("decoder: prefix exceeds max_len " +
                                  std::to_string(cfg_.max_len));
        if (pos == 0 && token != 1)
            throw ValidationError("decoder: prefix must start with <S>");
        if (token < 0 || token >= cfg_.vocab_size)
            throw ValidationError("decoder: token id " + std::to_string(token) +
                                  " outside vocabulary");
        st.tokens.push_back(token);

        const int d = cfg_.d_model;
        const int heads = cfg_.n_heads;
        const int dh = d / heads;
        Matrix<S> x = embedding_.value.row(token) + positional_.row(pos);
        for (std::size_t l = 0; l < layers_.size(); ++l) {
            const Layer& layer = layers_[l];
            // self-attention over the cached prefix plus this position
            Matrix<S> q = x * layer.self_attn.wq.value + layer.self_attn.bq.value;
            Matrix<S> k_new = x * layer.self_attn.wk.value;
            Matrix<S> v_new = x * layer.self_attn.wv.value + layer.self_attn.bv.value;
            append_row(st.self_k[l], k_new);
            append_row(st.self_v[l], v_new);
            Matrix<S> ctx(1, d);
            for (int h = 0; h < heads; ++h)
                ctx.middleCols(h * dh, dh) = attention_raw<S>(
                    q.middleCols(h * dh, dh), st.self_k[l].middleCols(h * dh, dh),
                    st.self_v[l].middleCols(h * dh, dh));
            x = ln_raw(x + ctx * layer.self_attn.wo.value + layer.self_attn.bo.value, layer.ln1);

            Matrix<S> cq = x * layer.cross_attn.wq.value + layer.cross_attn.bq.value;
            Matrix<S> cctx(1, d);
            for (int h = 0; h < heads; ++h)
                cctx.middleCols(h * dh, dh) =
                    attention_raw<S>(cq.middleCols(h * dh, dh), st.mem_k[l].middleCols(h * dh, dh),
                                     st.mem_v[l].middleCols(h * dh, dh));
            x = ln_raw(x + cctx * layer.cross_attn.wo.value + layer.cross_attn.bo.value,
                       layer.ln2);

            Matrix<S> ff = Matrix<S>(((x * layer.ff_w1.value).rowwise() +
                                      layer.ff_b1.value.row(0)))
                               .cwiseMax(S(0));
            Matrix<S> ff_out =
                (ff * layer.ff_w2.value).rowwise() + layer.ff_b2.value.row(0);
            x = ln_raw(x + ff_out, layer.ln3);
        }
        Matrix<S> logits = x * w_out_.value + b_out_.value;
        auto row = logits.row(0).array();
        Eigen::Array<S, 1, Eigen::Dynamic> e = (row - row.maxCoeff()).exp();
        return (e / e.sum()).matrix().transpose();
    }

    void save(Checkpoint& ck, const std::string& tag = "model") {
        ck.put_parameters<S>(tag, parameters());
    }
    void load(const Checkpoint& ck, const std::string& tag = "model") {
        ck.load_parameters<S>(tag, parameters());
    }

    static Matrix<S> sinusoidal(int max_len, int d) {
        Matrix<S> pe(max_len, d);
        for (int p = 0; p < max_len; ++p) {
            for (int i = 0; i < d; i += 2) {
                const S angle = S(p) / std::pow(S(10000), S(i) / S(d));
                pe(p, i) = std::sin(angle);
                if (i + 1 < d) pe(p, i + 1) = std::cos(angle);
            }
        }
        return pe;
    }

    static Matrix<S> causal_mask(int t) {
        Matrix<S> m = Matrix<S>::Zero(t, t);
        for (int r = 0; r < t; ++r)
            for (int c = r + 1; c < t; ++c) m(r, c) = S(-1e30);
        return m;
    }

  private:
    struct AttnParams {
        // no key bias: softmax scores are invariant to a constant shift
        Parameter<S> wq, bq, wk, wv, bv, wo, bo;
    };
    struct LnParams {
        Parameter<S> gain, bias;
    };
    struct Layer {
        AttnParams self_attn, cross_attn;
        LnParams ln1, ln2, ln3;
        Parameter<S> ff_w1, ff_b1, ff_w2, ff_b2;
    };

    void init_attn(AttnParams& a, const std::string& prefix, Rng& rng) {
        const int d = cfg_.d_model;
        const S bound = S(1) / std::sqrt(S(d));
        for (auto [p, n] : {std::pair{&a.wq, "wq"}, {&a.wk, "wk"}, {&a.wv, "wv"}, {&a.wo, "wo"}}) {
            *p = Parameter<S>(prefix + "." + n, Matrix<S>());
            p->init_uniform(d, d, bound, rng);
        }
        for (auto [p, n] : {std::pair{&a.bq, "bq"}, {&a.bv, "bv"}, {&a.bo, "bo"}})
            *p = Parameter<S>(prefix + "." + n, Matrix<S>::Zero(1, d));
    }

    LnParams make_ln(const std::string& prefix) {
        LnParams ln;
        ln.gain = Parameter<S>(prefix + ".gain", Matrix<S>::Ones(1, cfg_.d_model));
        ln.bias = Parameter<S>(prefix + ".bias", Matrix<S>::Zero(1, cfg_.d_model));
        return ln;
    }

    Tensor<S> apply_ln(Tape<S>& tape, LnParams& ln, const Tensor<S>& x) {
        using namespace ops;
        return add_rowvec(mul_rowvec(layer_norm(x), tape.param(ln.gain)), tape.param(ln.bias));
    }

    Matrix<S> ln_raw(const Matrix<S>& x, const LnParams& ln) const {
        Matrix<S> out(x.rows(), x.cols());
        for (Eigen::Index r = 0; r < x.rows(); ++r) {
            const S mu = x.row(r).mean();
            const S var = (x.row(r).array() - mu).square().sum() / S(x.cols());
            out.row(r) = ((x.row(r).array() - mu) / std::sqrt(var + S(1e-5))) *
                             ln.gain.value.row(0).array() +
                         ln.bias.value.row(0).array();
        }
        return out;
    }

    /// Multi-head attention: per-head scaled dot product over column
    /// slices, heads concatenated and projected.
    Tensor<S> multi_head(Tape<S>& tape, AttnParams& a, const Tensor<S>& queries,
                         const Tensor<S>& keys_values, const Matrix<S>* mask) {
        using namespace ops;
        const int d = cfg_.d_model;
        const int heads = cfg_.n_heads;
        const int dh = d / heads;
        auto q = add_rowvec(matmul(queries, tape.param(a.wq)), tape.param(a.bq));
        auto k = matmul(keys_values, tape.param(a.wk));
        auto v = add_rowvec(matmul(keys_values, tape.param(a.wv)), tape.param(a.bv));
        std::vector<Tensor<S>> ctx;
        ctx.reserve(std::size_t(heads));
        for (int h = 0; h < heads; ++h) {
            auto qh = slice(q, 0, h * dh, q.rows(), dh);
            auto kh = slice(k, 0, h * dh, k.rows(), dh);
            auto vh = slice(v, 0, h * dh, v.rows(), dh);
            ctx.push_back(mask ? scaled_dot_attention(qh, kh, vh, *mask)
                               : scaled_dot_attention(qh, kh, vh));
        }
        return add_rowvec(matmul(concat(ctx, Axis::cols), tape.param(a.wo)), tape.param(a.bo));
    }

    void check_prefix(const std::vector<int>& prefix) const {
        if (prefix.empty()) throw ValidationError("decoder: empty prefix");
        if (int(prefix.size()) > cfg_.max_len)
            throw ValidationError("decoder: prefix length " + std::to_string(prefix.size()) +
                                  " exceeds max_len " + std::to_string(cfg_.max_len));
        if (prefix.front() != 1) throw ValidationError("decoder: prefix must start with <S>");
        for (int id : prefix)
            if (id < 0 || id >= cfg_.vocab_size)
                throw ValidationError("decoder: token id " + std::to_string(id) +
                                      " outside vocabulary");
    }

    static void append_row(Matrix<S>& m, const Matrix<S>& row) {
        m.conservativeResize(m.rows() + 1, Eigen::NoChange);
        m.row(m.rows() - 1) = row.row(0);
    }

    DecoderConfig cfg_;
    Parameter<S> embedding_, w_out_, b_out_;
    std::vector<Layer> layers_;
    Matrix<S> positional_;
};

} // namespace relcap
