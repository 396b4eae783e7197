#ifndef RLSTM_LAYERS_HPP
#define RLSTM_LAYERS_HPP

// Neural building blocks over the autodiff tape. A batch of B token sequences
// of length S is stored as a (B·S) x d_model matrix, sequence-major: row
// b·S + t holds token t of sample b. Linear maps act per row (per token).

#include "rlstm/errors.hpp"
#include "rlstm/rng.hpp"
#include "rlstm/tensor.hpp"

#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace rlstm {

/// One token per geometric input (H, r, T).
inline constexpr Index kSeqLen = 3;

/// Named parameter storage. Paths may alias one another (shared weights);
/// aliases resolve to the same Parameter and are counted once.
template <typename Scalar>
class ParamStore {
public:
    Parameter<Scalar>& add(const std::string& path, Matrix<Scalar> init)
    {
        if (contains(path))
            throw ContractError("ParamStore: duplicate parameter path '" + path + "'");
        return owned_.emplace(path, Parameter<Scalar>(std::move(init))).first->second;
    }

    void alias(const std::string& path, const std::string& target)
    {
        if (contains(path))
            throw ContractError("ParamStore: duplicate parameter path '" + path + "'");
        if (owned_.find(target) == owned_.end())
            throw ContractError("ParamStore: alias target '" + target + "' is not an owned parameter");
        aliases_.emplace(path, target);
    }

    bool contains(const std::string& path) const { return owned_.count(path) != 0 || aliases_.count(path) != 0; }
    bool is_alias(const std::string& path) const { return aliases_.count(path) != 0; }

    std::string resolve(const std::string& path) const
    {
        auto it = aliases_.find(path);
        return it == aliases_.end() ? path : it->second;
    }

    Parameter<Scalar>& at(const std::string& path)
    {
        auto it = owned_.find(resolve(path));
        if (it == owned_.end())
            throw ContractError("ParamStore: unknown parameter path '" + path + "'");
        return it->second;
    }
    const Parameter<Scalar>& at(const std::string& path) const { return const_cast<ParamStore*>(this)->at(path); }

    /// Owned paths in lexicographic order.
    std::vector<std::string> paths() const
    {
        std::vector<std::string> out;
        out.reserve(owned_.size());
        for (const auto& [k, v] : owned_)
            out.push_back(k);
        return out;
    }

    const std::map<std::string, std::string>& aliases() const { return aliases_; }

    /// Number of scalars actually allocated (aliases excluded).
    std::size_t scalar_count() const
    {
        std::size_t n = 0;
        for (const auto& [k, p] : owned_)
            n += static_cast<std::size_t>(p.size());
        return n;
    }

    void zero_grad()
    {
        for (auto& [k, p] : owned_)
            p.zero_grad();
    }

    std::map<std::string, Parameter<Scalar>>& owned() { return owned_; }
    const std::map<std::string, Parameter<Scalar>>& owned() const { return owned_; }

private:
    std::map<std::string, Parameter<Scalar>> owned_;
    std::map<std::string, std::string> aliases_;
};

/// Binds store parameters into one graph. Each storage is bound once, so
/// aliased paths share a single leaf. With `frozen` set the parameters enter
/// as read-only views and no gradient is recorded.
template <typename Scalar>
class ParamBinder {
public:
    ParamBinder(Graph<Scalar>& g, ParamStore<Scalar>& store, bool frozen = false)
        : graph_(g), store_(store), frozen_(frozen)
    {
    }

    Tensor<Scalar> operator()(const std::string& path)
    {
        Parameter<Scalar>& p = store_.at(path);
        auto it = bound_.find(&p);
        if (it != bound_.end())
            return it->second;
        Tensor<Scalar> t = frozen_ ? graph_.view(p.value) : graph_.parameter(p);
        bound_.emplace(&p, t);
        return t;
    }

    Graph<Scalar>& graph() { return graph_; }

private:
    Graph<Scalar>& graph_;
    ParamStore<Scalar>& store_;
    bool frozen_;
    std::map<const Parameter<Scalar>*, Tensor<Scalar>> bound_;
};

// ---------------------------------------------------------------------------
// Initialization

/// uniform(-sqrt(1/fan_in), +sqrt(1/fan_in)).
template <typename Scalar>
Matrix<Scalar> init_uniform(Index rows, Index cols, Index fan_in, Rng& rng)
{
    const double bound = std::sqrt(1.0 / static_cast<double>(fan_in));
    Matrix<Scalar> m(rows, cols);
    for (Index i = 0; i < m.size(); ++i)
        m.data()[i] = static_cast<Scalar>(rng.uniform(-bound, bound));
    return m;
}

template <typename Scalar>
void init_linear(ParamStore<Scalar>& store, const std::string& prefix, Index in, Index out, Rng& rng)
{
    store.add(prefix + ".w", init_uniform<Scalar>(in, out, in, rng));
    store.add(prefix + ".b", Matrix<Scalar>::Zero(1, out));
}

template <typename Scalar>
void init_embedding(ParamStore<Scalar>& store, const std::string& prefix, Index d_model, Rng& rng)
{
    // Each position embeds one scalar, so fan_in is 1.
    store.add(prefix + ".w", init_uniform<Scalar>(kSeqLen, d_model, 1, rng));
    store.add(prefix + ".b", Matrix<Scalar>::Zero(kSeqLen, d_model));
}

template <typename Scalar>
void init_mhsa(ParamStore<Scalar>& store, const std::string& prefix, Index d_model, Rng& rng)
{
    for (const char* name : {"q", "k", "v", "o"}) {
        store.add(prefix + ".w_" + name, init_uniform<Scalar>(d_model, d_model, d_model, rng));
        store.add(prefix + ".b_" + name, Matrix<Scalar>::Zero(1, d_model));
    }
}

/// Makes every projection of `prefix` an alias of the same projection of `target`.
template <typename Scalar>
void alias_mhsa(ParamStore<Scalar>& store, const std::string& prefix, const std::string& target)
{
    for (const char* name : {"q", "k", "v", "o"}) {
        store.alias(prefix + ".w_" + name, target + ".w_" + name);
        store.alias(prefix + ".b_" + name, target + ".b_" + name);
    }
}

template <typename Scalar>
void init_ffn(ParamStore<Scalar>& store, const std::string& prefix, Index d_model, Index d_ff, Rng& rng)
{
    init_linear(store, prefix + ".fc1", d_model, d_ff, rng);
    init_linear(store, prefix + ".fc2", d_ff, d_model, rng);
}

template <typename Scalar>
void init_layer_norm(ParamStore<Scalar>& store, const std::string& prefix, Index d_model)
{
    store.add(prefix + ".gain", Matrix<Scalar>::Ones(1, d_model));
    store.add(prefix + ".bias", Matrix<Scalar>::Zero(1, d_model));
}

/// Gate blocks are laid out [input | forget | candidate | output]; the forget
/// bias starts at +1.
template <typename Scalar>
void init_lstm(ParamStore<Scalar>& store, const std::string& prefix, Index input, Index hidden, Rng& rng)
{
    store.add(prefix + ".w_ih", init_uniform<Scalar>(input, 4 * hidden, input, rng));
    store.add(prefix + ".w_hh", init_uniform<Scalar>(hidden, 4 * hidden, hidden, rng));
    Matrix<Scalar> b = Matrix<Scalar>::Zero(1, 4 * hidden);
    b.middleCols(hidden, hidden).setOnes();
    store.add(prefix + ".b", std::move(b));
}

// ---------------------------------------------------------------------------
// Layers

/// Maps a Bx3 matrix of normalized scalars to (B·3) x d_model tokens:
/// token t of sample b is x(b,t)·w_t + b_t.
template <typename Scalar>
Tensor<Scalar> embed(const Tensor<Scalar>& x, ParamBinder<Scalar>& p, const std::string& prefix)
{
    if (x.cols() != kSeqLen)
        throw ContractError("embed: expected " + std::to_string(kSeqLen) + " inputs per sample, got " +
                            std::to_string(x.cols()));
    Tensor<Scalar> w = p(prefix + ".w");
    Tensor<Scalar> bias = p(prefix + ".b");
    const Index batch = x.rows();
    const Index d = w.cols();
    Matrix<Scalar> out(batch * kSeqLen, d);
    for (Index b = 0; b < batch; ++b)
        for (Index t = 0; t < kSeqLen; ++t)
            out.row(b * kSeqLen + t) = x.value()(b, t) * w.value().row(t) + bias.value().row(t);
    const auto ix = x.id(), iw = w.id(), ib = bias.id();
    return x.graph().record(std::move(out), {x, w, bias}, [=](const Graph<Scalar>& g, auto& adj, const auto& go) {
        const auto& xv = g.value(ix);
        const auto& wv = g.value(iw);
        if (g.requires_grad(ix)) {
            Matrix<Scalar> gx(batch, kSeqLen);
            for (Index b = 0; b < batch; ++b)
                for (Index t = 0; t < kSeqLen; ++t)
                    gx(b, t) = go.row(b * kSeqLen + t).dot(wv.row(t));
            g.accumulate(adj, ix, gx);
        }
        if (g.requires_grad(iw) || g.requires_grad(ib)) {
            Matrix<Scalar> gw = Matrix<Scalar>::Zero(kSeqLen, d);
            Matrix<Scalar> gb = Matrix<Scalar>::Zero(kSeqLen, d);
            for (Index b = 0; b < batch; ++b)
                for (Index t = 0; t < kSeqLen; ++t) {
                    gw.row(t) += xv(b, t) * go.row(b * kSeqLen + t);
                    gb.row(t) += go.row(b * kSeqLen + t);
                }
            g.accumulate(adj, iw, gw);
            g.accumulate(adj, ib, gb);
        }
    });
}

/// Sinusoidal table: PE(pos, 2i) = sin(pos / 10000^(2i/d)), PE(pos, 2i+1) = cos(same).
template <typename Scalar = double>
Matrix<Scalar> positional_encoding(Index seq_len, Index d_model)
{
    if (d_model <= 0 || d_model % 2 != 0)
        throw ContractError("positional_encoding: d_model must be positive and even, got " + std::to_string(d_model));
    Matrix<Scalar> pe(seq_len, d_model);
    for (Index pos = 0; pos < seq_len; ++pos)
        for (Index i = 0; 2 * i < d_model; ++i) {
            const double angle = static_cast<double>(pos) /
                                 std::pow(10000.0, static_cast<double>(2 * i) / static_cast<double>(d_model));
            pe(pos, 2 * i) = static_cast<Scalar>(std::sin(angle));
            pe(pos, 2 * i + 1) = static_cast<Scalar>(std::cos(angle));
        }
    return pe;
}

/// Adds the positional table to every sequence of a token batch.
template <typename Scalar>
Tensor<Scalar> add_positional_encoding(const Tensor<Scalar>& tokens, Index seq_len)
{
    const Index batch = tokens.rows() / seq_len;
    const Matrix<Scalar> pe = positional_encoding<Scalar>(seq_len, tokens.cols());
    return add(tokens, tokens.graph().constant(pe.replicate(batch, 1)));
}

/// Scaled dot-product attention for every (sample, head) block.
/// q, k, v are (B·S) x d; head h owns columns [h·d_h, (h+1)·d_h).
/// If `weights_out` is given it receives the (B·heads·S) x S attention matrix,
/// ordered sample-major then head.
template <typename Scalar>
Tensor<Scalar> attention(const Tensor<Scalar>& q, const Tensor<Scalar>& k, const Tensor<Scalar>& v, Index seq_len,
                         Index heads, Matrix<Scalar>* weights_out = nullptr)
{
    if (q.shape() != k.shape() || q.shape() != v.shape())
        throw DimensionError("attention: q " + shape_str(q) + ", k " + shape_str(k) + ", v " + shape_str(v));
    if (heads <= 0 || q.cols() % heads != 0)
        throw ContractError("attention: d_model " + std::to_string(q.cols()) + " not divisible by " +
                            std::to_string(heads) + " heads");
    if (seq_len <= 0 || q.rows() % seq_len != 0)
        throw DimensionError("attention: " + std::to_string(q.rows()) + " rows is not a whole number of sequences");
    const Index batch = q.rows() / seq_len;
    const Index dh = q.cols() / heads;
    const Scalar scl = Scalar(1) / std::sqrt(static_cast<Scalar>(dh));

    Matrix<Scalar> probs(batch * heads * seq_len, seq_len);
    Matrix<Scalar> out(q.rows(), q.cols());
    const auto& qv = q.value();
    const auto& kv = k.value();
    const auto& vv = v.value();
    for (Index b = 0; b < batch; ++b)
        for (Index h = 0; h < heads; ++h) {
            const auto qb = qv.block(b * seq_len, h * dh, seq_len, dh);
            const auto kb = kv.block(b * seq_len, h * dh, seq_len, dh);
            const auto vb = vv.block(b * seq_len, h * dh, seq_len, dh);
            Matrix<Scalar> scores = (qb * kb.transpose()) * scl;
            auto p = probs.block((b * heads + h) * seq_len, 0, seq_len, seq_len);
            p = softmax_rows_value<Scalar>(scores);
            out.block(b * seq_len, h * dh, seq_len, dh) = p * vb;
        }
    if (weights_out != nullptr)
        *weights_out = probs;

    const auto iq = q.id(), ik = k.id(), iv = v.id();
    return q.graph().record(
        std::move(out), {q, k, v},
        [=, probs = std::move(probs)](const Graph<Scalar>& g, auto& adj, const auto& go) {
            const auto& qv = g.value(iq);
            const auto& kv = g.value(ik);
            const auto& vv = g.value(iv);
            Matrix<Scalar> gq = Matrix<Scalar>::Zero(qv.rows(), qv.cols());
            Matrix<Scalar> gk = Matrix<Scalar>::Zero(qv.rows(), qv.cols());
            Matrix<Scalar> gv = Matrix<Scalar>::Zero(qv.rows(), qv.cols());
            for (Index b = 0; b < batch; ++b)
                for (Index h = 0; h < heads; ++h) {
                    const Index r0 = b * seq_len, c0 = h * dh;
                    const auto p = probs.block((b * heads + h) * seq_len, 0, seq_len, seq_len);
                    const auto gob = go.block(r0, c0, seq_len, dh);
                    gv.block(r0, c0, seq_len, dh) = p.transpose() * gob;
                    const Matrix<Scalar> gp = gob * vv.block(r0, c0, seq_len, dh).transpose();
                    const Matrix<Scalar> gs = softmax_rows_adjoint<Scalar>(p, gp) * scl;
                    gq.block(r0, c0, seq_len, dh) = gs * kv.block(r0, c0, seq_len, dh);
                    gk.block(r0, c0, seq_len, dh) = gs.transpose() * qv.block(r0, c0, seq_len, dh);
                }
            g.accumulate(adj, iq, gq);
            g.accumulate(adj, ik, gk);
            g.accumulate(adj, iv, gv);
        });
}

/// Multi-head self-attention with full-width projections split by head.
template <typename Scalar>
Tensor<Scalar> mhsa(const Tensor<Scalar>& x, ParamBinder<Scalar>& p, const std::string& prefix, Index heads,
                    Index seq_len = kSeqLen, Matrix<Scalar>* weights_out = nullptr)
{
    Tensor<Scalar> q = linear(x, p(prefix + ".w_q"), p(prefix + ".b_q"));
    Tensor<Scalar> k = linear(x, p(prefix + ".w_k"), p(prefix + ".b_k"));
    Tensor<Scalar> v = linear(x, p(prefix + ".w_v"), p(prefix + ".b_v"));
    Tensor<Scalar> a = attention(q, k, v, seq_len, heads, weights_out);
    return linear(a, p(prefix + ".w_o"), p(prefix + ".b_o"));
}

/// Position-wise dense -> ReLU -> dense.
template <typename Scalar>
Tensor<Scalar> ffn(const Tensor<Scalar>& x, ParamBinder<Scalar>& p, const std::string& prefix)
{
    Tensor<Scalar> hidden = relu(linear(x, p(prefix + ".fc1.w"), p(prefix + ".fc1.b")));
    return linear(hidden, p(prefix + ".fc2.w"), p(prefix + ".fc2.b"));
}

/// Per-row standardization (biased variance, epsilon inside the root) with
/// learned gain and bias.
template <typename Scalar>
Tensor<Scalar> layer_norm(const Tensor<Scalar>& x, const Tensor<Scalar>& gain, const Tensor<Scalar>& bias,
                          Scalar eps = Scalar(1e-5))
{
    if (gain.rows() != 1 || gain.cols() != x.cols() || bias.shape() != gain.shape())
        throw DimensionError("layer_norm: gain " + shape_str(gain) + " / bias " + shape_str(bias) +
                             " do not fit input " + shape_str(x));
    const Index n = x.rows(), d = x.cols();
    const auto& xv = x.value();
    Matrix<Scalar> xhat(n, d);
    Matrix<Scalar> inv_std(n, 1);
    for (Index i = 0; i < n; ++i) {
        const Scalar mu = xv.row(i).mean();
        const Scalar var = (xv.row(i).array() - mu).square().mean();
        inv_std(i, 0) = Scalar(1) / std::sqrt(var + eps);
        xhat.row(i) = (xv.row(i).array() - mu) * inv_std(i, 0);
    }
    Matrix<Scalar> out = xhat.array().rowwise() * gain.value().row(0).array();
    out.rowwise() += bias.value().row(0);
    const auto ix = x.id(), ig = gain.id(), ib = bias.id();
    return x.graph().record(
        std::move(out), {x, gain, bias},
        [=, xhat = std::move(xhat), inv_std = std::move(inv_std)](const Graph<Scalar>& g, auto& adj, const auto& go) {
            if (g.requires_grad(ig))
                g.accumulate(adj, ig, go.cwiseProduct(xhat).colwise().sum());
            if (g.requires_grad(ib))
                g.accumulate(adj, ib, go.colwise().sum());
            if (g.requires_grad(ix)) {
                const auto& gv = g.value(ig);
                Matrix<Scalar> gx(n, d);
                for (Index i = 0; i < n; ++i) {
                    const auto dxhat = (go.row(i).array() * gv.row(0).array()).eval();
                    const Scalar m1 = dxhat.mean();
                    const Scalar m2 = (dxhat * xhat.row(i).array()).mean();
                    gx.row(i) = inv_std(i, 0) * (dxhat - m1 - xhat.row(i).array() * m2);
                }
                g.accumulate(adj, ix, gx);
            }
        });
}

template <typename Scalar>
Tensor<Scalar> layer_norm(const Tensor<Scalar>& x, ParamBinder<Scalar>& p, const std::string& prefix)
{
    return layer_norm(x, p(prefix + ".gain"), p(prefix + ".bias"));
}

enum class Mode { Train, Eval };

/// Inverted dropout. Eval mode and rate 0 return the input tensor itself.
template <typename Scalar>
Tensor<Scalar> dropout(const Tensor<Scalar>& x, double rate, Mode mode, Rng* rng)
{
    if (!(rate >= 0.0 && rate < 1.0))
        throw ContractError("dropout: rate must lie in [0, 1), got " + std::to_string(rate));
    if (mode == Mode::Eval || rate == 0.0)
        return x;
    if (rng == nullptr)
        throw ContractError("dropout: train mode needs a random stream");
    const Scalar keep_scale = static_cast<Scalar>(1.0 / (1.0 - rate));
    Matrix<Scalar> mask(x.rows(), x.cols());
    for (Index i = 0; i < mask.size(); ++i)
        mask.data()[i] = rng->uniform() < rate ? Scalar(0) : keep_scale;
    return mul(x, x.graph().constant(std::move(mask)));
}

template <typename Scalar>
struct LstmOutput {
    Tensor<Scalar> hidden;              ///< final hidden state, B x H
    std::vector<Tensor<Scalar>> states; ///< hidden state after every step, each B x H
};

/// Single-layer LSTM over the token axis with h0 = c0 = 0.
template <typename Scalar>
LstmOutput<Scalar> lstm_forward(const Tensor<Scalar>& x, ParamBinder<Scalar>& p, const std::string& prefix,
                                Index hidden, Index seq_len = kSeqLen)
{
    Tensor<Scalar> w_ih = p(prefix + ".w_ih");
    Tensor<Scalar> w_hh = p(prefix + ".w_hh");
    Tensor<Scalar> b = p(prefix + ".b");
    if (w_hh.rows() != hidden || w_hh.cols() != 4 * hidden)
        throw DimensionError("lstm_forward: recurrent weight " + shape_str(w_hh) + " does not match hidden size " +
                             std::to_string(hidden));
    LstmOutput<Scalar> out;
    Tensor<Scalar> h, c;
    for (Index t = 0; t < seq_len; ++t) {
        Tensor<Scalar> z = linear(rows_strided(x, t, seq_len), w_ih, b);
        if (t > 0)
            z = add(z, matmul(h, w_hh));
        Tensor<Scalar> in_gate = sigmoid(slice_cols(z, 0, hidden));
        Tensor<Scalar> candidate = tanh(slice_cols(z, 2 * hidden, hidden));
        Tensor<Scalar> out_gate = sigmoid(slice_cols(z, 3 * hidden, hidden));
        if (t == 0) {
            c = mul(in_gate, candidate);
        } else {
            Tensor<Scalar> forget = sigmoid(slice_cols(z, hidden, hidden));
            c = add(mul(forget, c), mul(in_gate, candidate));
        }
        h = mul(out_gate, tanh(c));
        out.states.push_back(h);
    }
    out.hidden = h;
    return out;
}

/// Affine regression head, no activation.
template <typename Scalar>
Tensor<Scalar> dense_head(const Tensor<Scalar>& h, ParamBinder<Scalar>& p, const std::string& prefix)
{
    return linear(h, p(prefix + ".w"), p(prefix + ".b"));
}

} // namespace rlstm

#endif // RLSTM_LAYERS_HPP
