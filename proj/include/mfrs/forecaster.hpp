#pragma once

// Inverted encoder-only forecaster: whole series become tokens, variate
// tokens attend to reference-series tokens (never to each other), and a
// linear head projects each variate token onto the horizon. Ships with a
// hand-built reverse-mode gradient engine and a deterministic training loop.

#include "mfrs/refseries.hpp"
#include "mfrs/rng.hpp"
#include "mfrs/series.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>
#include <thread>
#include <utility>
#include <vector>

namespace mfrs {

// ---------------------------------------------------------------------------
// Configuration

struct ModelConfig {
    Index lookback{96};        // S
    Index horizon{96};         // T
    Index hidden{64};          // D
    Index rs_lookback{-1};     // P; -1 means "same as lookback"
    Index blocks{2};           // B
    Index heads{1};            // H
    Index ffn_mult{4};
    bool shared_embedding{true};
    double epsilon_norm{1e-5};

    Index S() const { return lookback; }
    Index T() const { return horizon; }
    Index D() const { return hidden; }
    Index P() const { return rs_lookback < 0 ? lookback : rs_lookback; }
};

inline void validate_config(const ModelConfig& c) {
    if (c.lookback < 2) throw std::invalid_argument("model config: lookback must be >= 2");
    if (c.horizon < 1) throw std::invalid_argument("model config: horizon must be >= 1");
    if (c.hidden < 1) throw std::invalid_argument("model config: hidden size must be >= 1");
    if (c.blocks < 1) throw std::invalid_argument("model config: need at least 1 block");
    if (c.heads < 1) throw std::invalid_argument("model config: need at least 1 head");
    if (c.hidden % c.heads != 0) throw std::invalid_argument("model config: heads must divide hidden size");
    if (c.P() < 1) throw std::invalid_argument("model config: rs lookback must be >= 1");
    if (c.ffn_mult < 1) throw std::invalid_argument("model config: ffn_mult must be >= 1");
    if (!(c.epsilon_norm > 0.0)) throw std::invalid_argument("model config: epsilon_norm must be positive");
}

enum class OptimizerKind { sgd, adam };

struct TrainConfig {
    Index epochs{30};
    Index batch{32};
    double lr{1e-3};
    double lr_decay{0.98};  // per-epoch multiplicative decay
    std::uint64_t seed{0};
    OptimizerKind optimizer{OptimizerKind::adam};
    Index patience{5};  // early-stop patience on validation loss
};

// ---------------------------------------------------------------------------
// Parameters

template <class Scalar>
struct AffineT {
    Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> W;  // in x out
    Eigen::Vector<Scalar, Eigen::Dynamic> b;                  // out
};

template <class Scalar>
struct LayerNormT {
    Eigen::Vector<Scalar, Eigen::Dynamic> gamma, beta;
};

template <class Scalar>
struct BlockParamsT {
    AffineT<Scalar> q, k, v, o;      // D x D each
    AffineT<Scalar> ffn1, ffn2;      // D x (ffn_mult*D), (ffn_mult*D) x D
    LayerNormT<Scalar> ln1, ln2;     // D
};

template <class Scalar>
struct ForecastModelT {
    ModelConfig config;
    AffineT<Scalar> variate_embed;           // S x D
    AffineT<Scalar> rs_embed;                // P x D; empty when shared with variate_embed
    std::vector<BlockParamsT<Scalar>> blocks;
    AffineT<Scalar> projection;              // D x T

    bool shares_embedding() const { return config.shared_embedding && config.P() == config.lookback; }
};

using ForecastModel = ForecastModelT<double>;

// Uniform flat view over every parameter tensor, in a fixed visitation
// order. The same order on two structurally equal models yields aligned
// tensors, which the optimizers rely on.
template <class Scalar>
struct TensorRef {
    std::string name;
    Scalar* data;
    Index size;
};

template <class Scalar>
std::vector<TensorRef<Scalar>> tensor_refs(ForecastModelT<Scalar>& m) {
    std::vector<TensorRef<Scalar>> out;
    auto add_affine = [&out](const std::string& name, AffineT<Scalar>& a) {
        out.push_back({name + ".W", a.W.data(), a.W.size()});
        out.push_back({name + ".b", a.b.data(), a.b.size()});
    };
    auto add_ln = [&out](const std::string& name, LayerNormT<Scalar>& ln) {
        out.push_back({name + ".gamma", ln.gamma.data(), ln.gamma.size()});
        out.push_back({name + ".beta", ln.beta.data(), ln.beta.size()});
    };
    add_affine("variate_embed", m.variate_embed);
    if (!m.shares_embedding()) add_affine("rs_embed", m.rs_embed);
    for (size_t i = 0; i < m.blocks.size(); ++i) {
        const std::string p = "block" + std::to_string(i);
        add_affine(p + ".q", m.blocks[i].q);
        add_affine(p + ".k", m.blocks[i].k);
        add_affine(p + ".v", m.blocks[i].v);
        add_affine(p + ".o", m.blocks[i].o);
        add_ln(p + ".ln1", m.blocks[i].ln1);
        add_affine(p + ".ffn1", m.blocks[i].ffn1);
        add_affine(p + ".ffn2", m.blocks[i].ffn2);
        add_ln(p + ".ln2", m.blocks[i].ln2);
    }
    add_affine("projection", m.projection);
    return out;
}

template <class Scalar>
const Scalar* first_nonfinite(const ForecastModelT<Scalar>& m, std::string* which = nullptr) {
    auto& mm = const_cast<ForecastModelT<Scalar>&>(m);
    for (const auto& ref : tensor_refs(mm)) {
        for (Index i = 0; i < ref.size; ++i) {
            if (!std::isfinite(ref.data[i])) {
                if (which) *which = ref.name;
                return ref.data + i;
            }
        }
    }
    return nullptr;
}

namespace detail {

template <class Scalar>
void init_affine(AffineT<Scalar>& a, Index in, Index out, RandomStream& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    a.W.resize(in, out);
    for (Index j = 0; j < out; ++j)
        for (Index i = 0; i < in; ++i) a.W(i, j) = static_cast<Scalar>(rng.uniform(-bound, bound));
    a.b = Eigen::Vector<Scalar, Eigen::Dynamic>::Zero(out);
}

template <class Scalar>
void zero_affine(AffineT<Scalar>& a, Index in, Index out) {
    a.W = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>::Zero(in, out);
    a.b = Eigen::Vector<Scalar, Eigen::Dynamic>::Zero(out);
}

}  // namespace detail

template <class Scalar = double>
ForecastModelT<Scalar> init_model(const ModelConfig& cfg, std::uint64_t seed) {
    validate_config(cfg);
    ForecastModelT<Scalar> m;
    m.config = cfg;
    RandomStream rng = RandomStream::substream(seed, 0x6d6f64);  // model-init stream
    const Index D = cfg.D(), F = cfg.ffn_mult * cfg.D();
    detail::init_affine(m.variate_embed, cfg.S(), D, rng);
    if (!m.shares_embedding()) detail::init_affine(m.rs_embed, cfg.P(), D, rng);
    m.blocks.resize(static_cast<size_t>(cfg.blocks));
    for (auto& blk : m.blocks) {
        detail::init_affine(blk.q, D, D, rng);
        detail::init_affine(blk.k, D, D, rng);
        detail::init_affine(blk.v, D, D, rng);
        detail::init_affine(blk.o, D, D, rng);
        blk.ln1.gamma = Eigen::Vector<Scalar, Eigen::Dynamic>::Ones(D);
        blk.ln1.beta = Eigen::Vector<Scalar, Eigen::Dynamic>::Zero(D);
        detail::init_affine(blk.ffn1, D, F, rng);
        detail::init_affine(blk.ffn2, F, D, rng);
        blk.ln2.gamma = Eigen::Vector<Scalar, Eigen::Dynamic>::Ones(D);
        blk.ln2.beta = Eigen::Vector<Scalar, Eigen::Dynamic>::Zero(D);
    }
    detail::init_affine(m.projection, D, cfg.T(), rng);
    return m;
}

template <class Scalar>
ForecastModelT<Scalar> zero_like(const ForecastModelT<Scalar>& model) {
    const ModelConfig& cfg = model.config;
    ForecastModelT<Scalar> g;
    g.config = cfg;
    const Index D = cfg.D(), F = cfg.ffn_mult * cfg.D();
    detail::zero_affine(g.variate_embed, cfg.S(), D);
    if (!g.shares_embedding()) detail::zero_affine(g.rs_embed, cfg.P(), D);
    g.blocks.resize(model.blocks.size());
    for (auto& blk : g.blocks) {
        detail::zero_affine(blk.q, D, D);
        detail::zero_affine(blk.k, D, D);
        detail::zero_affine(blk.v, D, D);
        detail::zero_affine(blk.o, D, D);
        blk.ln1.gamma = Eigen::Vector<Scalar, Eigen::Dynamic>::Zero(D);
        blk.ln1.beta = Eigen::Vector<Scalar, Eigen::Dynamic>::Zero(D);
        detail::zero_affine(blk.ffn1, D, F);
        detail::zero_affine(blk.ffn2, F, D);
        blk.ln2.gamma = Eigen::Vector<Scalar, Eigen::Dynamic>::Zero(D);
        blk.ln2.beta = Eigen::Vector<Scalar, Eigen::Dynamic>::Zero(D);
    }
    detail::zero_affine(g.projection, D, cfg.T());
    return g;
}

// ---------------------------------------------------------------------------
// Elementary pieces

template <class Scalar>
struct InstanceNorm {
    Eigen::Vector<Scalar, Eigen::Dynamic> values;
    Scalar mean{0};
    Scalar var{0};
};

// (x - mean)/sqrt(var + eps) with population variance; mean and var are
// retained so the prediction can be mapped back to the input scale.
template <class Scalar>
InstanceNorm<Scalar> normalize_instance(const Eigen::Vector<Scalar, Eigen::Dynamic>& x, double eps) {
    const Index S = x.size();
    if (S < 2) throw std::invalid_argument("normalize_instance: need at least 2 samples");
    InstanceNorm<Scalar> out;
    out.mean = x.mean();
    out.var = (x.array() - out.mean).square().sum() / static_cast<Scalar>(S);
    const Scalar denom = std::sqrt(out.var + static_cast<Scalar>(eps));
    out.values = (x.array() - out.mean) / denom;
    return out;
}

template <class Scalar>
Scalar gelu(Scalar x) {
    return Scalar(0.5) * x * (Scalar(1) + std::erf(x / std::sqrt(Scalar(2))));
}

template <class Scalar>
Scalar gelu_grad(Scalar x) {
    const Scalar cdf = Scalar(0.5) * (Scalar(1) + std::erf(x / std::sqrt(Scalar(2))));
    const Scalar pdf = std::exp(Scalar(-0.5) * x * x) / std::sqrt(Scalar(2) * std::numbers::pi_v<Scalar>);
    return cdf + x * pdf;
}

template <class Scalar>
double loss_mse(const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& prediction,
                const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& target) {
    if (prediction.rows() != target.rows() || prediction.cols() != target.cols())
        throw std::invalid_argument("loss_mse: shape mismatch (" + std::to_string(prediction.rows()) + "x" +
                                    std::to_string(prediction.cols()) + " vs " + std::to_string(target.rows()) + "x" +
                                    std::to_string(target.cols()) + ")");
    return (prediction - target).array().square().sum() / static_cast<double>(prediction.size());
}

template <class Scalar>
double loss_mae(const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& prediction,
                const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& target) {
    if (prediction.rows() != target.rows() || prediction.cols() != target.cols())
        throw std::invalid_argument("loss_mae: shape mismatch");
    return (prediction - target).array().abs().sum() / static_cast<double>(prediction.size());
}

// ---------------------------------------------------------------------------
// Forward pass with cache

template <class Scalar>
struct BlockCacheT {
    using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
    using Vec = Eigen::Vector<Scalar, Eigen::Dynamic>;
    Mat tok_in;           // C x D
    Mat Q, K, V;          // C x D, N x D, N x D
    std::vector<Mat> attn;  // per head: C x N row-stochastic
    Mat O, O2;            // C x D
    Mat R1, xhat1, L1;    // C x D
    Vec inv_std1;         // C
    Mat Z1, A1;           // C x F
    Mat Fout, R2, xhat2;  // C x D
    Vec inv_std2;         // C
};

template <class Scalar>
struct ForwardCacheT {
    using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
    using Vec = Eigen::Vector<Scalar, Eigen::Dynamic>;
    Mat Xn;            // S x C normalized lookback
    Vec mean, scale;   // per channel; scale = sqrt(var + eps)
    Mat Rn;            // P x N normalized reference block
    Mat rs_tokens;     // N x D
    Mat tokens0;       // C x D
    std::vector<BlockCacheT<Scalar>> blocks;
    Mat tokens_out;    // C x D after the last block
    Mat Ybar;          // C x T normalized prediction
    Mat prediction;    // T x C
};

using ForwardCache = ForwardCacheT<double>;

namespace detail {

// Row-wise layer norm; returns the output and fills xhat/inv_std caches.
template <class Scalar>
Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> layer_norm_rows(
    const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& x, const LayerNormT<Scalar>& ln, double eps,
    Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& xhat, Eigen::Vector<Scalar, Eigen::Dynamic>& inv_std) {
    const Index R = x.rows(), D = x.cols();
    Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> out(R, D);
    xhat.resize(R, D);
    inv_std.resize(R);
    for (Index r = 0; r < R; ++r) {
        const Scalar mu = x.row(r).mean();
        const Scalar var = (x.row(r).array() - mu).square().sum() / static_cast<Scalar>(D);
        const Scalar is = Scalar(1) / std::sqrt(var + static_cast<Scalar>(eps));
        inv_std(r) = is;
        xhat.row(r) = (x.row(r).array() - mu) * is;
        out.row(r) = xhat.row(r).array() * ln.gamma.transpose().array() + ln.beta.transpose().array();
    }
    return out;
}

// Reverse of layer_norm_rows. Accumulates parameter gradients and returns
// the gradient w.r.t. the pre-norm input.
template <class Scalar>
Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> layer_norm_rows_backward(
    const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& dout,
    const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& xhat,
    const Eigen::Vector<Scalar, Eigen::Dynamic>& inv_std, const LayerNormT<Scalar>& ln, LayerNormT<Scalar>& dln) {
    const Index R = dout.rows(), D = dout.cols();
    Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> dx(R, D);
    for (Index r = 0; r < R; ++r) {
        dln.gamma.array() += dout.row(r).transpose().array() * xhat.row(r).transpose().array();
        dln.beta += dout.row(r).transpose();
        const Eigen::Array<Scalar, Eigen::Dynamic, 1> dxhat =
            dout.row(r).transpose().array() * ln.gamma.array();
        const Scalar m1 = dxhat.mean();
        const Scalar m2 = (dxhat * xhat.row(r).transpose().array()).mean();
        dx.row(r) = (inv_std(r) * (dxhat - m1 - xhat.row(r).transpose().array() * m2)).transpose();
    }
    return dx;
}

}  // namespace detail

// Forward pass for one window. lookback is S x C, rs_block is P x N; the
// prediction comes back as T x C on the input scale.
template <class Scalar>
Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> forward(
    const ForecastModelT<Scalar>& model, const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& lookback,
    const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& rs_block, ForwardCacheT<Scalar>& cache) {
    using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
    const ModelConfig& cfg = model.config;
    if (lookback.rows() != cfg.S())
        throw std::invalid_argument("forward: lookback has " + std::to_string(lookback.rows()) + " rows, expected " +
                                    std::to_string(cfg.S()));
    if (rs_block.rows() != cfg.P())
        throw std::invalid_argument("forward: rs block has " + std::to_string(rs_block.rows()) + " rows, expected " +
                                    std::to_string(cfg.P()));
    if (lookback.cols() < 1) throw std::invalid_argument("forward: lookback needs at least one channel");
    if (rs_block.cols() < 1) throw std::invalid_argument("forward: rs block needs at least one column");

    const Index C = lookback.cols(), N = rs_block.cols();
    const Index D = cfg.D(), H = cfg.heads, Dh = D / H;
    const double eps = cfg.epsilon_norm;

    // (1) instance normalization per column; variate stats are retained.
    cache.Xn.resize(cfg.S(), C);
    cache.mean.resize(C);
    cache.scale.resize(C);
    for (Index c = 0; c < C; ++c) {
        auto n = normalize_instance<Scalar>(lookback.col(c), eps);
        cache.Xn.col(c) = n.values;
        cache.mean(c) = n.mean;
        cache.scale(c) = std::sqrt(n.var + static_cast<Scalar>(eps));
    }
    cache.Rn.resize(cfg.P(), N);
    for (Index j = 0; j < N; ++j) cache.Rn.col(j) = normalize_instance<Scalar>(rs_block.col(j), eps).values;

    // (2) whole-series embedding: one token per column.
    const AffineT<Scalar>& emb_rs = model.shares_embedding() ? model.variate_embed : model.rs_embed;
    cache.tokens0 = (cache.Xn.transpose() * model.variate_embed.W).rowwise() + model.variate_embed.b.transpose();
    cache.rs_tokens = (cache.Rn.transpose() * emb_rs.W).rowwise() + emb_rs.b.transpose();

    // (3) cross-attention blocks; keys/values are re-projected from the
    // original reference tokens in every block.
    cache.blocks.assign(static_cast<size_t>(cfg.blocks), BlockCacheT<Scalar>{});
    Mat tokens = cache.tokens0;
    const Scalar inv_sqrt_dh = Scalar(1) / std::sqrt(static_cast<Scalar>(Dh));
    for (Index b = 0; b < cfg.blocks; ++b) {
        const BlockParamsT<Scalar>& blk = model.blocks[static_cast<size_t>(b)];
        BlockCacheT<Scalar>& bc = cache.blocks[static_cast<size_t>(b)];
        bc.tok_in = tokens;
        bc.Q = (tokens * blk.q.W).rowwise() + blk.q.b.transpose();
        bc.K = (cache.rs_tokens * blk.k.W).rowwise() + blk.k.b.transpose();
        bc.V = (cache.rs_tokens * blk.v.W).rowwise() + blk.v.b.transpose();

        bc.attn.assign(static_cast<size_t>(H), Mat{});
        bc.O.resize(C, D);
        for (Index h = 0; h < H; ++h) {
            Mat scores = bc.Q.middleCols(h * Dh, Dh) * bc.K.middleCols(h * Dh, Dh).transpose() * inv_sqrt_dh;
            Mat& P = bc.attn[static_cast<size_t>(h)];
            P.resize(C, N);
            for (Index r = 0; r < C; ++r) {
                const Scalar mx = scores.row(r).maxCoeff();
                Eigen::Array<Scalar, 1, Eigen::Dynamic> e = (scores.row(r).array() - mx).exp();
                P.row(r) = e / e.sum();
            }
            bc.O.middleCols(h * Dh, Dh) = P * bc.V.middleCols(h * Dh, Dh);
        }
        bc.O2 = (bc.O * blk.o.W).rowwise() + blk.o.b.transpose();
        bc.R1 = bc.tok_in + bc.O2;
        bc.L1 = detail::layer_norm_rows(bc.R1, blk.ln1, eps, bc.xhat1, bc.inv_std1);

        bc.Z1 = (bc.L1 * blk.ffn1.W).rowwise() + blk.ffn1.b.transpose();
        bc.A1 = bc.Z1.unaryExpr([](Scalar v) { return gelu(v); });
        bc.Fout = (bc.A1 * blk.ffn2.W).rowwise() + blk.ffn2.b.transpose();
        bc.R2 = bc.L1 + bc.Fout;
        tokens = detail::layer_norm_rows(bc.R2, blk.ln2, eps, bc.xhat2, bc.inv_std2);
    }

    // (4) horizon projection and (5) per-channel statistics re-injection.
    cache.tokens_out = tokens;
    cache.Ybar = (tokens * model.projection.W).rowwise() + model.projection.b.transpose();
    cache.prediction.resize(cfg.T(), C);
    for (Index c = 0; c < C; ++c)
        cache.prediction.col(c) = cache.Ybar.row(c).transpose().array() * cache.scale(c) + cache.mean(c);
    return cache.prediction;
}

template <class Scalar>
Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> forward(
    const ForecastModelT<Scalar>& model, const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& lookback,
    const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& rs_block) {
    ForwardCacheT<Scalar> cache;
    return forward(model, lookback, rs_block, cache);
}

// ---------------------------------------------------------------------------
// Backward pass

// Accumulates into `grads` the gradient of `loss_scale * loss_mse(pred, target)`
// w.r.t. every parameter, where pred was produced by forward() filling `cache`.
// Returns the unscaled item loss.
template <class Scalar>
double backward_into(const ForecastModelT<Scalar>& model, const ForwardCacheT<Scalar>& cache,
                     const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& target, double loss_scale,
                     ForecastModelT<Scalar>& grads) {
    using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
    const ModelConfig& cfg = model.config;
    if (target.rows() != cfg.T() || target.cols() != cache.prediction.cols())
        throw std::invalid_argument("backward: target shape mismatch");

    const Index C = cache.prediction.cols();
    const Index D = cfg.D(), H = cfg.heads, Dh = D / H;
    const double item_loss = loss_mse<Scalar>(cache.prediction, target);

    // d loss / d prediction, then through the invert-norm to the normalized head.
    Mat dpred = (cache.prediction - target) *
                static_cast<Scalar>(2.0 * loss_scale / static_cast<double>(cache.prediction.size()));
    Mat dYbar(C, cfg.T());
    for (Index c = 0; c < C; ++c) dYbar.row(c) = dpred.col(c).transpose() * cache.scale(c);

    // Projection.
    grads.projection.W += cache.tokens_out.transpose() * dYbar;
    grads.projection.b += dYbar.colwise().sum().transpose();
    Mat dtokens = dYbar * model.projection.W.transpose();

    Mat dRsTok = Mat::Zero(cache.rs_tokens.rows(), D);
    const Scalar inv_sqrt_dh = Scalar(1) / std::sqrt(static_cast<Scalar>(Dh));

    for (Index b = cfg.blocks - 1; b >= 0; --b) {
        const BlockParamsT<Scalar>& blk = model.blocks[static_cast<size_t>(b)];
        BlockParamsT<Scalar>& gblk = grads.blocks[static_cast<size_t>(b)];
        const BlockCacheT<Scalar>& bc = cache.blocks[static_cast<size_t>(b)];

        // LN2 then the FFN residual pair.
        Mat dR2 = detail::layer_norm_rows_backward(dtokens, bc.xhat2, bc.inv_std2, blk.ln2, gblk.ln2);
        Mat dL1 = dR2;
        const Mat& dF = dR2;
        gblk.ffn2.W += bc.A1.transpose() * dF;
        gblk.ffn2.b += dF.colwise().sum().transpose();
        Mat dA1 = dF * blk.ffn2.W.transpose();
        Mat dZ1 = dA1.array() * bc.Z1.unaryExpr([](Scalar v) { return gelu_grad(v); }).array();
        gblk.ffn1.W += bc.L1.transpose() * dZ1;
        gblk.ffn1.b += dZ1.colwise().sum().transpose();
        dL1 += dZ1 * blk.ffn1.W.transpose();

        // LN1 then the attention residual pair.
        Mat dR1 = detail::layer_norm_rows_backward(dL1, bc.xhat1, bc.inv_std1, blk.ln1, gblk.ln1);
        Mat dtok_in = dR1;
        const Mat& dO2 = dR1;
        gblk.o.W += bc.O.transpose() * dO2;
        gblk.o.b += dO2.colwise().sum().transpose();
        Mat dO = dO2 * blk.o.W.transpose();

        Mat dQ = Mat::Zero(C, D);
        Mat dK = Mat::Zero(bc.K.rows(), D);
        Mat dV = Mat::Zero(bc.V.rows(), D);
        for (Index h = 0; h < H; ++h) {
            const Mat& P = bc.attn[static_cast<size_t>(h)];
            Mat dOh = dO.middleCols(h * Dh, Dh);
            Mat dP = dOh * bc.V.middleCols(h * Dh, Dh).transpose();
            dV.middleCols(h * Dh, Dh) += P.transpose() * dOh;
            // Softmax backward per row.
            Mat dA(P.rows(), P.cols());
            for (Index r = 0; r < P.rows(); ++r) {
                const Scalar dot = (dP.row(r).array() * P.row(r).array()).sum();
                dA.row(r) = P.row(r).array() * (dP.row(r).array() - dot);
            }
            dA *= inv_sqrt_dh;
            dQ.middleCols(h * Dh, Dh) += dA * bc.K.middleCols(h * Dh, Dh);
            dK.middleCols(h * Dh, Dh) += dA.transpose() * bc.Q.middleCols(h * Dh, Dh);
        }

        gblk.q.W += bc.tok_in.transpose() * dQ;
        gblk.q.b += dQ.colwise().sum().transpose();
        dtok_in += dQ * blk.q.W.transpose();

        gblk.k.W += cache.rs_tokens.transpose() * dK;
        gblk.k.b += dK.colwise().sum().transpose();
        dRsTok += dK * blk.k.W.transpose();

        gblk.v.W += cache.rs_tokens.transpose() * dV;
        gblk.v.b += dV.colwise().sum().transpose();
        dRsTok += dV * blk.v.W.transpose();

        dtokens = std::move(dtok_in);
    }

    // Embeddings.
    grads.variate_embed.W += cache.Xn * dtokens;
    grads.variate_embed.b += dtokens.colwise().sum().transpose();
    if (model.shares_embedding()) {
        grads.variate_embed.W += cache.Rn * dRsTok;
        grads.variate_embed.b += dRsTok.colwise().sum().transpose();
    } else {
        grads.rs_embed.W += cache.Rn * dRsTok;
        grads.rs_embed.b += dRsTok.colwise().sum().transpose();
    }
    return item_loss;
}

// ---------------------------------------------------------------------------
// Batches: deterministic sharded accumulation

template <class Scalar>
struct BatchT {
    using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
    std::vector<Mat> lookbacks;  // each S x C
    std::vector<Mat> rs_blocks;  // each P x N
    std::vector<Mat> targets;    // each T x C
    size_t size() const { return lookbacks.size(); }
};

using Batch = BatchT<double>;

inline Index thread_budget() {
    if (const char* env = std::getenv("MFRS_THREADS")) {
        char* end = nullptr;
        const long v = std::strtol(env, &end, 10);
        if (end != env && v >= 1) return std::min<Index>(static_cast<Index>(v), 8);
    }
    const unsigned hw = std::thread::hardware_concurrency();
    return std::min<Index>(hw == 0 ? 1 : static_cast<Index>(hw), 8);
}

// Mean batch loss; gradients of that mean accumulate into `grads`. Items are
// sharded over 8 fixed slots by index and the slots are reduced in a fixed
// order, so results are bitwise identical for any thread count.
template <class Scalar>
double batch_loss_and_grads(const ForecastModelT<Scalar>& model, const BatchT<Scalar>& batch,
                            ForecastModelT<Scalar>& grads, Index threads = -1) {
    if (batch.size() == 0) throw std::invalid_argument("batch is empty");
    if (threads < 1) threads = thread_budget();
    constexpr Index kSlots = 8;
    const Index workers = std::min<Index>(threads, kSlots);
    const double loss_scale = 1.0 / static_cast<double>(batch.size());

    std::vector<ForecastModelT<Scalar>> slot_grads;
    slot_grads.reserve(kSlots);
    for (Index s = 0; s < kSlots; ++s) slot_grads.push_back(zero_like(model));
    std::vector<double> slot_loss(static_cast<size_t>(kSlots), 0.0);

    auto run_slot = [&](Index slot) {
        ForwardCacheT<Scalar> cache;
        for (size_t i = static_cast<size_t>(slot); i < batch.size(); i += kSlots) {
            forward(model, batch.lookbacks[i], batch.rs_blocks[i], cache);
            slot_loss[static_cast<size_t>(slot)] +=
                backward_into(model, cache, batch.targets[i], loss_scale, slot_grads[static_cast<size_t>(slot)]);
        }
    };

    if (workers <= 1) {
        for (Index s = 0; s < kSlots; ++s) run_slot(s);
    } else {
        std::vector<std::thread> pool;
        for (Index w = 0; w < workers; ++w)
            pool.emplace_back([&, w] {
                for (Index s = w; s < kSlots; s += workers) run_slot(s);
            });
        for (auto& t : pool) t.join();
    }

    auto grefs = tensor_refs(grads);
    for (Index s = 0; s < kSlots; ++s) {
        auto srefs = tensor_refs(slot_grads[static_cast<size_t>(s)]);
        for (size_t i = 0; i < grefs.size(); ++i)
            for (Index j = 0; j < grefs[i].size; ++j) grefs[i].data[j] += srefs[i].data[j];
    }
    double total = 0.0;
    for (Index s = 0; s < kSlots; ++s) total += slot_loss[static_cast<size_t>(s)];
    return total / static_cast<double>(batch.size());
}

// ---------------------------------------------------------------------------
// Optimizers

template <class Scalar>
struct OptimizerState {
    OptimizerKind kind{OptimizerKind::adam};
    ForecastModelT<Scalar> m, v;  // first/second moment estimates (adam only)
    long long step{0};

    static OptimizerState make(const ForecastModelT<Scalar>& model, OptimizerKind kind) {
        OptimizerState s;
        s.kind = kind;
        if (kind == OptimizerKind::adam) {
            s.m = zero_like(model);
            s.v = zero_like(model);
        }
        return s;
    }
};

template <class Scalar>
void apply_update(ForecastModelT<Scalar>& model, ForecastModelT<Scalar>& grads, OptimizerState<Scalar>& opt,
                  double lr) {
    auto prefs = tensor_refs(model);
    auto grefs = tensor_refs(grads);
    if (opt.kind == OptimizerKind::sgd) {
        for (size_t i = 0; i < prefs.size(); ++i)
            for (Index j = 0; j < prefs[i].size; ++j) prefs[i].data[j] -= static_cast<Scalar>(lr) * grefs[i].data[j];
        return;
    }
    constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    opt.step += 1;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(opt.step));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(opt.step));
    auto mrefs = tensor_refs(opt.m);
    auto vrefs = tensor_refs(opt.v);
    for (size_t i = 0; i < prefs.size(); ++i) {
        for (Index j = 0; j < prefs[i].size; ++j) {
            const double g = grefs[i].data[j];
            double& m = mrefs[i].data[j];
            double& v = vrefs[i].data[j];
            m = beta1 * m + (1.0 - beta1) * g;
            v = beta2 * v + (1.0 - beta2) * g * g;
            const double mhat = m / bc1, vhat = v / bc2;
            prefs[i].data[j] -= static_cast<Scalar>(lr * mhat / (std::sqrt(vhat) + eps));
        }
    }
}

// ---------------------------------------------------------------------------
// Training

// Train/validation rows glued back together so validation lookbacks may
// reach into the training stretch (targets stay inside validation).
struct TrainingData {
    Eigen::MatrixXd values;   // train rows then val rows, contiguous
    Index absolute_start{0};  // timeline step of row 0 (for reference slicing)
    Index train_rows{0};
    Index val_rows{0};
};

inline TrainingData make_training_data(const SplitResult& split) {
    TrainingData d;
    d.train_rows = split.train.length();
    d.val_rows = split.val.length();
    d.absolute_start = split.train_start;
    d.values.resize(d.train_rows + d.val_rows, split.train.channels());
    d.values.topRows(d.train_rows) = split.train.values;
    d.values.bottomRows(d.val_rows) = split.val.values;
    return d;
}

struct EpochStats {
    double train_loss{0.0};
    double val_loss{0.0};
    double lr{0.0};
};

struct TrainResult {
    std::vector<EpochStats> history;
    double best_val_loss{0.0};
    Index best_epoch{-1};
    bool early_stopped{false};
};

template <class Scalar>
TrainResult train(ForecastModelT<Scalar>& model, const TrainingData& data, const ReferenceSeriesT<Scalar>& rs,
                  const TrainConfig& tc) {
    using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
    const ModelConfig& cfg = model.config;
    validate_config(cfg);
    if (tc.epochs < 1 || tc.batch < 1 || tc.patience < 1)
        throw std::invalid_argument("train config: epochs, batch, and patience must be positive");
    if (!(tc.lr >= 0.0)) throw std::invalid_argument("train config: learning rate must be >= 0");

    const Index S = cfg.S(), T = cfg.T(), P = cfg.P();
    const Index rows = data.values.rows();
    if (data.train_rows + data.val_rows != rows) throw std::invalid_argument("training data rows inconsistent");

    // Training windows live fully inside the train stretch; validation
    // windows only need their targets inside the validation stretch.
    std::vector<Index> train_starts;
    for (Index s = 0; s + S + T <= data.train_rows; ++s) train_starts.push_back(s);
    std::vector<Index> val_starts;
    for (Index a = data.train_rows; a + T <= rows; ++a)
        if (a - S >= 0) val_starts.push_back(a - S);
    if (train_starts.empty())
        throw std::invalid_argument("train: no training window fits (need " + std::to_string(S + T) +
                                    " rows, have " + std::to_string(data.train_rows) + ")");
    if (val_starts.empty())
        throw std::invalid_argument("train: no validation window fits (need targets of " + std::to_string(T) +
                                    " rows inside " + std::to_string(data.val_rows) + ")");
    for (Index s : {train_starts.back(), val_starts.back()})
        if (data.absolute_start + s + P > rs.length())
            throw std::invalid_argument("train: reference bank too short for window at absolute step " +
                                        std::to_string(data.absolute_start + s));

    auto window_batch = [&](const std::vector<Index>& starts, size_t lo, size_t hi) {
        BatchT<Scalar> b;
        b.lookbacks.reserve(hi - lo);
        b.rs_blocks.reserve(hi - lo);
        b.targets.reserve(hi - lo);
        for (size_t i = lo; i < hi; ++i) {
            const Index s = starts[i];
            b.lookbacks.push_back(data.values.middleRows(s, S).template cast<Scalar>());
            b.rs_blocks.push_back(slice_rs(rs, data.absolute_start + s, P));
            b.targets.push_back(data.values.middleRows(s + S, T).template cast<Scalar>());
        }
        return b;
    };

    auto validation_loss = [&]() {
        ForwardCacheT<Scalar> cache;
        double total = 0.0;
        for (Index s : val_starts) {
            Mat lb = data.values.middleRows(s, S).template cast<Scalar>();
            Mat tgt = data.values.middleRows(s + S, T).template cast<Scalar>();
            forward(model, lb, slice_rs(rs, data.absolute_start + s, P), cache);
            total += loss_mse<Scalar>(cache.prediction, tgt);
        }
        return total / static_cast<double>(val_starts.size());
    };

    OptimizerState<Scalar> opt = OptimizerState<Scalar>::make(model, tc.optimizer);
    TrainResult result;
    ForecastModelT<Scalar> best_model = model;
    double best_val = std::numeric_limits<double>::infinity();
    Index since_best = 0;

    std::vector<Index> order = train_starts;
    for (Index epoch = 0; epoch < tc.epochs; ++epoch) {
        // Deterministic per-epoch shuffle.
        RandomStream shuffle_rng = RandomStream::substream(tc.seed, 0x73687566 + static_cast<std::uint64_t>(epoch));
        for (size_t i = order.size(); i > 1; --i) {
            const size_t j = static_cast<size_t>(shuffle_rng.bits() % i);
            std::swap(order[i - 1], order[j]);
        }

        const double lr = tc.lr * std::pow(tc.lr_decay, static_cast<double>(epoch));
        double epoch_loss = 0.0;
        size_t batches = 0;
        ForecastModelT<Scalar> grads = zero_like(model);
        for (size_t lo = 0; lo < order.size(); lo += static_cast<size_t>(tc.batch)) {
            const size_t hi = std::min(order.size(), lo + static_cast<size_t>(tc.batch));
            BatchT<Scalar> batch = window_batch(order, lo, hi);
            auto zrefs = tensor_refs(grads);
            for (auto& r : zrefs) std::fill(r.data, r.data + r.size, Scalar(0));
            epoch_loss += batch_loss_and_grads(model, batch, grads);
            apply_update(model, grads, opt, lr);
            ++batches;
        }
        epoch_loss /= static_cast<double>(batches);

        std::string bad;
        if (first_nonfinite(model, &bad))
            throw std::runtime_error("train: parameter '" + bad + "' became non-finite at epoch " +
                                     std::to_string(epoch) + " (diverged; lower the learning rate)");

        const double val = validation_loss();
        result.history.push_back(EpochStats{epoch_loss, val, lr});
        if (val < best_val) {
            best_val = val;
            best_model = model;
            result.best_epoch = epoch;
            since_best = 0;
        } else if (++since_best >= tc.patience) {
            result.early_stopped = true;
            break;
        }
    }

    model = best_model;
    result.best_val_loss = best_val;
    return result;
}

// Forward on an aligned observation: the reference block starts at xi.
template <class Scalar>
Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> predict(
    const ForecastModelT<Scalar>& model, const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& observation,
    const ReferenceSeriesT<Scalar>& rs, Index xi) {
    return forward(model, observation, slice_rs(rs, xi, model.config.P()));
}

}  // namespace mfrs
