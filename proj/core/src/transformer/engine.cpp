#include "engine.hpp"

#include <cmath>
#include <limits>
#include <numbers>

namespace gatescope::transformer::detail {

namespace {

template <typename T>
using CMap = Eigen::Map<const Mat<T>>;
template <typename T>
using CRow = Eigen::Map<const RowVec<T>>;
template <typename T>
using GMap = Eigen::Map<Mat<T>>;
template <typename T>
using GRow = Eigen::Map<RowVec<T>>;

template <typename T>
void layer_norm(const Mat<T>& x, const T* gain, const T* bias, Mat<T>& xhat, ColVec<T>& rstd, Mat<T>& out) {
    const auto d = x.cols();
    const ColVec<T> mean = x.rowwise().mean();
    xhat = x.colwise() - mean;
    rstd = ((xhat.array().square().rowwise().sum() / static_cast<T>(d)) + static_cast<T>(kLayerNormEps)).rsqrt();
    xhat = xhat.array().colwise() * rstd.array();
    const CRow<T> g(gain, d);
    const CRow<T> b(bias, d);
    out = (xhat.array().rowwise() * g.array()).rowwise() + b.array();
}

/// dst += value, with value first evaluated into owned (aligned) storage.
/// Reductions written straight into an external buffer pick their
/// vectorization from the buffer's address, which would make gradients
/// depend on heap alignment.
template <typename T, typename Expr>
void add_to(T* dst, const Eigen::MatrixBase<Expr>& value) {
    const Mat<T> owned = value;
    const T* src = owned.data();
    for (Eigen::Index i = 0; i < owned.size(); ++i) dst[i] += src[i];
}

/// dx for y = LN(x) * g + b, accumulating dg, db.
template <typename T>
Mat<T> layer_norm_backward(const Mat<T>& dy, const Mat<T>& xhat, const ColVec<T>& rstd, const T* gain, T* dgain,
                           T* dbias) {
    const auto d = dy.cols();
    const CRow<T> g(gain, d);
    add_to(dgain, (dy.array() * xhat.array()).colwise().sum().matrix());
    add_to(dbias, dy.colwise().sum());
    const Mat<T> dxhat = dy.array().rowwise() * g.array();
    const ColVec<T> m1 = dxhat.rowwise().mean();
    const ColVec<T> m2 = (dxhat.array() * xhat.array()).rowwise().mean();
    Mat<T> dx = dxhat;
    dx.colwise() -= m1;
    dx.array() -= xhat.array().colwise() * m2.array();
    dx.array().colwise() *= rstd.array();
    return dx;
}

template <typename T>
T gelu(T x) {
    return static_cast<T>(0.5) * x * (static_cast<T>(1) + std::erf(x * static_cast<T>(std::numbers::sqrt2 / 2)));
}

template <typename T>
T gelu_grad(T x) {
    const T cdf = static_cast<T>(0.5) * (static_cast<T>(1) + std::erf(x * static_cast<T>(std::numbers::sqrt2 / 2)));
    const T pdf = std::exp(static_cast<T>(-0.5) * x * x) * static_cast<T>(0.5 * std::numbers::inv_sqrtpi * std::numbers::sqrt2);
    return cdf + x * pdf;
}

template <typename T>
void apply_patches(const PatchSpec& patch, std::size_t layer, Mat<T>& x, std::vector<bool>& patched) {
    patched.assign(static_cast<std::size_t>(x.rows()), false);
    for (const auto& e : patch.entries) {
        if (e.layer != layer) continue;
        for (std::size_t c = 0; c < e.vector.size(); ++c) {
            x(static_cast<Eigen::Index>(e.position), static_cast<Eigen::Index>(c)) = static_cast<T>(e.vector[c]);
        }
        patched[e.position] = true;
    }
}

template <typename T>
void zero_patched_rows(Mat<T>& dx, const std::vector<bool>& patched) {
    for (std::size_t i = 0; i < patched.size(); ++i) {
        if (patched[i]) dx.row(static_cast<Eigen::Index>(i)).setZero();
    }
}

}  // namespace

template <typename T>
Engine<T>::Engine(const ModelConfig& config, const T* params) : config_(config), params_(params) {
    const ParameterLayout layout(config);
    tok_emb_ = layout.find("tok_emb").offset;
    pos_emb_ = layout.find("pos_emb").offset;
    for (std::size_t l = 0; l < config.n_layers; ++l) {
        const std::string p = "blocks." + std::to_string(l) + ".";
        const auto at = [&](const char* name) { return layout.find(p + name).offset; };
        layers_.push_back(LayerOffsets{at("ln1.gain"), at("ln1.bias"), at("attn.w_q"), at("attn.b_q"),
                                       at("attn.w_k"), at("attn.b_k"), at("attn.w_v"), at("attn.b_v"),
                                       at("attn.w_o"), at("attn.b_o"), at("ln2.gain"), at("ln2.bias"),
                                       at("mlp.w_fc"), at("mlp.b_fc"), at("mlp.w_proj"), at("mlp.b_proj")});
    }
    lnf_g_ = layout.find("ln_f.gain").offset;
    lnf_b_ = layout.find("ln_f.bias").offset;
    unembed_ = layout.find("unembed").offset;
}

template <typename T>
void Engine<T>::forward(std::span<const TokenId> ids, const LayerMasks& masks, const PatchSpec& patch,
                        Workspace<T>& ws) const {
    const auto S = static_cast<Eigen::Index>(ids.size());
    const auto D = static_cast<Eigen::Index>(config_.d_model);
    const auto M = static_cast<Eigen::Index>(config_.d_mlp);
    const auto V = static_cast<Eigen::Index>(config_.vocab_size);
    const auto H = config_.n_heads;
    const auto dh = static_cast<Eigen::Index>(config_.head_dim());
    const T scale = static_cast<T>(1.0 / std::sqrt(static_cast<double>(dh)));
    const T neg_inf = -std::numeric_limits<T>::infinity();

    ws.ids.assign(ids.begin(), ids.end());
    ws.layers.resize(config_.n_layers);
    ws.patched.resize(config_.n_layers + 1);

    Mat<T> x(S, D);
    const CMap<T> tok(params_ + tok_emb_, static_cast<Eigen::Index>(config_.vocab_size), D);
    const CMap<T> pos(params_ + pos_emb_, static_cast<Eigen::Index>(config_.max_seq_len), D);
    for (Eigen::Index i = 0; i < S; ++i) x.row(i) = tok.row(ids[static_cast<std::size_t>(i)]) + pos.row(i);

    for (std::size_t l = 0; l < config_.n_layers; ++l) {
        const auto& o = layers_[l];
        auto& c = ws.layers[l];
        apply_patches(patch, l, x, ws.patched[l]);
        c.x_in = x;

        layer_norm<T>(x, params_ + o.ln1_g, params_ + o.ln1_b, c.xhat1, c.rstd1, c.h1);
        c.q.noalias() = c.h1 * CMap<T>(params_ + o.w_q, D, D);
        c.q.rowwise() += CRow<T>(params_ + o.b_q, D);
        c.k.noalias() = c.h1 * CMap<T>(params_ + o.w_k, D, D);
        c.k.rowwise() += CRow<T>(params_ + o.b_k, D);
        c.v.noalias() = c.h1 * CMap<T>(params_ + o.w_v, D, D);
        c.v.rowwise() += CRow<T>(params_ + o.b_v, D);

        const unsigned char* mask = masks.size() > l && !masks[l].empty() ? masks[l].data() : nullptr;
        c.probs.resize(H);
        c.ctx.resize(S, D);
        for (std::size_t h = 0; h < H; ++h) {
            const auto col = static_cast<Eigen::Index>(h) * dh;
            Mat<T>& p = c.probs[h];
            p.noalias() = c.q.middleCols(col, dh) * c.k.middleCols(col, dh).transpose();
            for (Eigen::Index i = 0; i < S; ++i) {
                T row_max = neg_inf;
                for (Eigen::Index j = 0; j <= i; ++j) {
                    const bool blocked = mask && mask[static_cast<std::size_t>(i * S + j)];
                    const T s = blocked ? neg_inf : p(i, j) * scale;
                    p(i, j) = s;
                    if (s > row_max) row_max = s;
                }
                T sum = 0;
                for (Eigen::Index j = 0; j <= i; ++j) {
                    const T e = p(i, j) == neg_inf ? T(0) : std::exp(p(i, j) - row_max);
                    p(i, j) = e;
                    sum += e;
                }
                for (Eigen::Index j = 0; j <= i; ++j) p(i, j) /= sum;
                for (Eigen::Index j = i + 1; j < S; ++j) p(i, j) = 0;
            }
            c.ctx.middleCols(col, dh).noalias() = p * c.v.middleCols(col, dh);
        }
        x.noalias() += c.ctx * CMap<T>(params_ + o.w_o, D, D);
        x.rowwise() += CRow<T>(params_ + o.b_o, D);
        c.x_mid = x;

        layer_norm<T>(x, params_ + o.ln2_g, params_ + o.ln2_b, c.xhat2, c.rstd2, c.h2);
        c.pre.noalias() = c.h2 * CMap<T>(params_ + o.w_fc, D, M);
        c.pre.rowwise() += CRow<T>(params_ + o.b_fc, M);
        c.act = c.pre.unaryExpr([](T v) { return gelu(v); });
        x.noalias() += c.act * CMap<T>(params_ + o.w_proj, M, D);
        x.rowwise() += CRow<T>(params_ + o.b_proj, D);
    }
    apply_patches(patch, config_.n_layers, x, ws.patched[config_.n_layers]);
    ws.x_final = x;
    layer_norm<T>(x, params_ + lnf_g_, params_ + lnf_b_, ws.xhat_f, ws.rstd_f, ws.h_f);
    ws.logits.noalias() = ws.h_f * CMap<T>(params_ + unembed_, D, V);
}

template <typename T>
void Engine<T>::backward(const Workspace<T>& ws, const Mat<T>& dlogits, T* grad) const {
    const auto S = static_cast<Eigen::Index>(ws.ids.size());
    const auto D = static_cast<Eigen::Index>(config_.d_model);
    const auto M = static_cast<Eigen::Index>(config_.d_mlp);
    const auto V = static_cast<Eigen::Index>(config_.vocab_size);
    const auto H = config_.n_heads;
    const auto dh = static_cast<Eigen::Index>(config_.head_dim());
    const T scale = static_cast<T>(1.0 / std::sqrt(static_cast<double>(dh)));

    add_to(grad + unembed_, ws.h_f.transpose() * dlogits);
    const Mat<T> dh_f = dlogits * CMap<T>(params_ + unembed_, D, V).transpose();
    Mat<T> dx = layer_norm_backward<T>(dh_f, ws.xhat_f, ws.rstd_f, params_ + lnf_g_, grad + lnf_g_, grad + lnf_b_);
    zero_patched_rows(dx, ws.patched[config_.n_layers]);

    Mat<T> dq(S, D);
    Mat<T> dk(S, D);
    Mat<T> dv(S, D);
    for (std::size_t li = config_.n_layers; li-- > 0;) {
        const auto& o = layers_[li];
        const auto& c = ws.layers[li];

        // MLP branch.
        add_to(grad + o.w_proj, c.act.transpose() * dx);
        add_to(grad + o.b_proj, dx.colwise().sum());
        Mat<T> dpre = dx * CMap<T>(params_ + o.w_proj, M, D).transpose();
        dpre.array() *= c.pre.unaryExpr([](T v) { return gelu_grad(v); }).array();
        add_to(grad + o.w_fc, c.h2.transpose() * dpre);
        add_to(grad + o.b_fc, dpre.colwise().sum());
        const Mat<T> dh2 = dpre * CMap<T>(params_ + o.w_fc, D, M).transpose();
        dx += layer_norm_backward<T>(dh2, c.xhat2, c.rstd2, params_ + o.ln2_g, grad + o.ln2_g, grad + o.ln2_b);

        // Attention branch.
        add_to(grad + o.w_o, c.ctx.transpose() * dx);
        add_to(grad + o.b_o, dx.colwise().sum());
        const Mat<T> dctx = dx * CMap<T>(params_ + o.w_o, D, D).transpose();
        for (std::size_t h = 0; h < H; ++h) {
            const auto col = static_cast<Eigen::Index>(h) * dh;
            const Mat<T>& p = c.probs[h];
            const auto dctx_h = dctx.middleCols(col, dh);
            Mat<T> dp = dctx_h * c.v.middleCols(col, dh).transpose();
            dv.middleCols(col, dh).noalias() = p.transpose() * dctx_h;
            const ColVec<T> row_dot = (dp.array() * p.array()).rowwise().sum();
            Mat<T> ds = p.array() * (dp.colwise() - row_dot).array();
            ds *= scale;
            dq.middleCols(col, dh).noalias() = ds * c.k.middleCols(col, dh);
            dk.middleCols(col, dh).noalias() = ds.transpose() * c.q.middleCols(col, dh);
        }
        add_to(grad + o.w_q, c.h1.transpose() * dq);
        add_to(grad + o.b_q, dq.colwise().sum());
        add_to(grad + o.w_k, c.h1.transpose() * dk);
        add_to(grad + o.b_k, dk.colwise().sum());
        add_to(grad + o.w_v, c.h1.transpose() * dv);
        add_to(grad + o.b_v, dv.colwise().sum());
        Mat<T> dh1 = dq * CMap<T>(params_ + o.w_q, D, D).transpose();
        dh1.noalias() += dk * CMap<T>(params_ + o.w_k, D, D).transpose();
        dh1.noalias() += dv * CMap<T>(params_ + o.w_v, D, D).transpose();
        dx += layer_norm_backward<T>(dh1, c.xhat1, c.rstd1, params_ + o.ln1_g, grad + o.ln1_g, grad + o.ln1_b);
        zero_patched_rows(dx, ws.patched[li]);
    }

    GMap<T> dtok(grad + tok_emb_, V, D);
    GMap<T> dpos(grad + pos_emb_, static_cast<Eigen::Index>(config_.max_seq_len), D);
    for (Eigen::Index i = 0; i < S; ++i) {
        dtok.row(ws.ids[static_cast<std::size_t>(i)]) += dx.row(i);
        dpos.row(i) += dx.row(i);
    }
}

template class Engine<float>;
template class Engine<double>;

}  // namespace gatescope::transformer::detail
