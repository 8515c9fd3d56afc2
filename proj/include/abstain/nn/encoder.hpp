#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "abstain/nn/loss.hpp"
#include "abstain/nn/params.hpp"

namespace abstain::nn {

struct EncoderDims {
    int token_dim = 1;     // F_token
    int d_model = 256;
    int heads = 4;
    int d_ff = 512;
    int max_tokens = 512;
    bool positional = true;
};

/// Input projection + learned positions, four post-norm transformer encoder
/// blocks (multi-head self-attention, position-wise rectifier feed-forward),
/// mean pooling over tokens, then affine -> logistic.
///
/// Token matrices are n_tok x F_token with one token per row.
template <typename Scalar>
class EncoderProbe {
public:
    static constexpr int kBlocks = 4;
    static constexpr double kLayerNormEps = 1e-5;
    using Vector = Vec<Scalar>;
    using Matrix = Mat<Scalar>;

    EncoderProbe() = default;

    EncoderProbe(EncoderDims dims, std::uint64_t seed) : dims_(dims), seed_(seed) {
        if (dims_.token_dim < 1 || dims_.d_model < 1 || dims_.heads < 1 || dims_.d_ff < 1 || dims_.max_tokens < 1)
            throw std::invalid_argument("encoder dimensions must be positive");
        if (dims_.d_model % dims_.heads != 0) throw std::invalid_argument("d_model must be divisible by heads");
        const Eigen::Index F = dims_.token_dim, d = dims_.d_model, ff = dims_.d_ff;
        in_w_ = layout_.add("in.W", d, F);
        in_b_ = layout_.add("in.b", d, 1);
        pos_ = layout_.add("pos", dims_.max_tokens, d);
        for (int b = 0; b < kBlocks; ++b) {
            const std::string p = "block" + std::to_string(b) + ".";
            auto& ix = blocks_[b];
            ix.wq = layout_.add(p + "Wq", d, d);
            ix.bq = layout_.add(p + "bq", d, 1);
            ix.wk = layout_.add(p + "Wk", d, d);
            ix.bk = layout_.add(p + "bk", d, 1);
            ix.wv = layout_.add(p + "Wv", d, d);
            ix.bv = layout_.add(p + "bv", d, 1);
            ix.wo = layout_.add(p + "Wo", d, d);
            ix.bo = layout_.add(p + "bo", d, 1);
            ix.ln1_g = layout_.add(p + "ln1.gamma", d, 1);
            ix.ln1_b = layout_.add(p + "ln1.beta", d, 1);
            ix.w1 = layout_.add(p + "W1", ff, d);
            ix.b1 = layout_.add(p + "b1", ff, 1);
            ix.w2 = layout_.add(p + "W2", d, ff);
            ix.b2 = layout_.add(p + "b2", d, 1);
            ix.ln2_g = layout_.add(p + "ln2.gamma", d, 1);
            ix.ln2_b = layout_.add(p + "ln2.beta", d, 1);
        }
        head_w_ = layout_.add("head.W", 1, d);
        head_b_ = layout_.add("head.b", 1, 1);

        params_ = Vector::Zero(layout_.size());
        Rng rng(seed);
        init_fan_in(params_, layout_[in_w_], F, rng);
        init_uniform(params_, layout_[pos_], 0.02, rng);
        for (const auto& ix : blocks_) {
            for (auto w : {ix.wq, ix.wk, ix.wv, ix.wo, ix.w1}) init_fan_in(params_, layout_[w], d, rng);
            init_fan_in(params_, layout_[ix.w2], ff, rng);
            init_constant(params_, layout_[ix.ln1_g], Scalar(1));
            init_constant(params_, layout_[ix.ln2_g], Scalar(1));
        }
        init_fan_in(params_, layout_[head_w_], d, rng);
    }

    const EncoderDims& dims() const { return dims_; }
    std::uint64_t seed() const { return seed_; }
    const ParamLayout& layout() const { return layout_; }
    Vector& parameters() { return params_; }
    const Vector& parameters() const { return params_; }

    /// Positional embeddings can be switched off (permutation-invariance checks).
    void set_positional(bool on) { dims_.positional = on; }

    Scalar forward(const Eigen::Ref<const Matrix>& tokens) const {
        Cache c;
        return clamp_score(sigmoid(run(tokens, c)));
    }

    /// Mean soft-label BCE over a batch of token matrices, with gradient.
    double loss_and_gradient(std::span<const Matrix> batch, const Eigen::Ref<const Vector>& y, Vector& grad) const {
        if (static_cast<Eigen::Index>(batch.size()) != y.size())
            throw std::invalid_argument("label count does not match batch size");
        grad.setZero(layout_.size());
        double loss = 0.0;
        const auto scale = Scalar(1) / static_cast<Scalar>(batch.size());
        for (std::size_t i = 0; i < batch.size(); ++i) {
            Cache c;
            const Scalar z = run(batch[i], c);
            const Scalar s = sigmoid(z);
            loss += bce_soft(static_cast<double>(s), static_cast<double>(y(static_cast<Eigen::Index>(i))));
            accumulate_gradient(c, (s - y(static_cast<Eigen::Index>(i))) * scale, grad);
        }
        return loss / static_cast<double>(batch.size());
    }

    Vector backward(const Eigen::Ref<const Matrix>& tokens, Scalar y) const {
        Vector grad;
        std::array<Matrix, 1> one{Matrix(tokens)};
        loss_and_gradient(std::span<const Matrix>(one), Vector::Constant(1, y), grad);
        return grad;
    }

    template <typename Other>
    EncoderProbe<Other> cast() const {
        EncoderProbe<Other> out(dims_, seed_);
        out.parameters() = params_.template cast<Other>();
        return out;
    }

private:
    struct BlockIndex {
        std::size_t wq, bq, wk, bk, wv, bv, wo, bo, ln1_g, ln1_b, w1, b1, w2, b2, ln2_g, ln2_b;
    };

    struct NormCache {
        Matrix xhat;
        Vector rstd;
    };

    struct BlockCache {
        Matrix x_in, q, k, v, concat;
        std::vector<Matrix> attn;  // per head, n x n row-stochastic
        NormCache ln1;
        Matrix x_mid;              // output of the first residual + norm
        Matrix ff_pre;             // n x d_ff, before the rectifier
        NormCache ln2;
    };

    struct Cache {
        Matrix tokens;
        std::vector<BlockCache> blocks;
        Matrix x_out;
        Vector pooled;
    };

    auto P(std::size_t i) const { return view(params_, layout_[i]); }
    auto G(Vector& g, std::size_t i) const { return view(g, layout_[i]); }

    /// Y = X W^T + 1 b^T
    Matrix affine(const Matrix& x, std::size_t w, std::size_t b) const {
        Matrix y = x * P(w).transpose();
        y.rowwise() += P(b).col(0).transpose();
        return y;
    }

    Matrix layer_norm(const Matrix& x, std::size_t gamma, std::size_t beta, NormCache& nc) const {
        const auto d = static_cast<Scalar>(x.cols());
        Vector mean = x.rowwise().sum() / d;
        Matrix centered = x.colwise() - mean;
        Vector var = centered.array().square().rowwise().sum() / d;
        nc.rstd = (var.array() + Scalar(kLayerNormEps)).rsqrt();
        nc.xhat = centered.array().colwise() * nc.rstd.array();
        Matrix y = nc.xhat.array().rowwise() * P(gamma).col(0).transpose().array();
        y.rowwise() += P(beta).col(0).transpose();
        return y;
    }

    Matrix layer_norm_backward(const Matrix& dy, const NormCache& nc, std::size_t gamma, std::size_t beta,
                               Vector& grad) const {
        G(grad, gamma).col(0) += (dy.array() * nc.xhat.array()).colwise().sum().matrix().transpose();
        G(grad, beta).col(0) += dy.colwise().sum().transpose();
        Matrix dxhat = dy.array().rowwise() * P(gamma).col(0).transpose().array();
        const auto d = static_cast<Scalar>(dy.cols());
        Vector mean_dxhat = dxhat.rowwise().sum() / d;
        Vector mean_dxhat_xhat = (dxhat.array() * nc.xhat.array()).rowwise().sum() / d;
        Matrix dx = dxhat.colwise() - mean_dxhat;
        dx -= (nc.xhat.array().colwise() * mean_dxhat_xhat.array()).matrix();
        return dx.array().colwise() * nc.rstd.array();
    }

    /// Returns the output logit and fills the cache for backprop.
    Scalar run(const Eigen::Ref<const Matrix>& tokens, Cache& c) const {
        const Eigen::Index n = tokens.rows();
        if (n < 1) throw std::invalid_argument("encoder probe needs at least one token");
        if (n > dims_.max_tokens)
            throw std::invalid_argument("token count " + std::to_string(n) + " exceeds positional table (" +
                                        std::to_string(dims_.max_tokens) + ")");
        if (tokens.cols() != dims_.token_dim)
            throw std::invalid_argument("encoder probe expects " + std::to_string(dims_.token_dim) +
                                        " features per token, got " + std::to_string(tokens.cols()));
        c.tokens = tokens;
        Matrix x = affine(c.tokens, in_w_, in_b_);
        if (dims_.positional) x += P(pos_).topRows(n);

        const int hd = dims_.d_model / dims_.heads;
        const Scalar scale = Scalar(1) / std::sqrt(static_cast<Scalar>(hd));
        c.blocks.resize(kBlocks);
        for (int b = 0; b < kBlocks; ++b) {
            const auto& ix = blocks_[b];
            auto& bc = c.blocks[b];
            bc.x_in = x;
            bc.q = affine(x, ix.wq, ix.bq);
            bc.k = affine(x, ix.wk, ix.bk);
            bc.v = affine(x, ix.wv, ix.bv);
            bc.concat.resize(n, dims_.d_model);
            bc.attn.resize(dims_.heads);
            for (int h = 0; h < dims_.heads; ++h) {
                Matrix s = bc.q.middleCols(h * hd, hd) * bc.k.middleCols(h * hd, hd).transpose() * scale;
                Vector row_max = s.rowwise().maxCoeff();
                Matrix e = (s.colwise() - row_max).array().exp();
                Vector row_sum = e.rowwise().sum();
                bc.attn[h] = e.array().colwise() / row_sum.array();
                bc.concat.middleCols(h * hd, hd) = bc.attn[h] * bc.v.middleCols(h * hd, hd);
            }
            Matrix r1 = x + affine(bc.concat, ix.wo, ix.bo);
            bc.x_mid = layer_norm(r1, ix.ln1_g, ix.ln1_b, bc.ln1);
            bc.ff_pre = affine(bc.x_mid, ix.w1, ix.b1);
            Matrix ff_act = bc.ff_pre.cwiseMax(Scalar(0));
            Matrix r2 = bc.x_mid + affine(ff_act, ix.w2, ix.b2);
            x = layer_norm(r2, ix.ln2_g, ix.ln2_b, bc.ln2);
        }
        c.x_out = x;
        c.pooled = x.colwise().mean().transpose();
        return P(head_w_).row(0).dot(c.pooled) + P(head_b_)(0, 0);
    }

    void accumulate_gradient(const Cache& c, Scalar dlogit, Vector& grad) const {
        const Eigen::Index n = c.x_out.rows();
        const int hd = dims_.d_model / dims_.heads;
        const Scalar scale = Scalar(1) / std::sqrt(static_cast<Scalar>(hd));

        G(grad, head_w_).row(0) += dlogit * c.pooled.transpose();
        G(grad, head_b_)(0, 0) += dlogit;
        Vector dpooled = dlogit * P(head_w_).row(0).transpose();
        Matrix dx = (dpooled / static_cast<Scalar>(n)).transpose().replicate(n, 1);

        for (int b = kBlocks - 1; b >= 0; --b) {
            const auto& ix = blocks_[b];
            const auto& bc = c.blocks[b];

            // second residual + norm
            Matrix dr2 = layer_norm_backward(dx, bc.ln2, ix.ln2_g, ix.ln2_b, grad);
            Matrix ff_act = bc.ff_pre.cwiseMax(Scalar(0));
            G(grad, ix.w2) += dr2.transpose() * ff_act;
            G(grad, ix.b2).col(0) += dr2.colwise().sum().transpose();
            Matrix dff = (dr2 * P(ix.w2)).cwiseProduct((bc.ff_pre.array() > Scalar(0)).matrix().template cast<Scalar>());
            G(grad, ix.w1) += dff.transpose() * bc.x_mid;
            G(grad, ix.b1).col(0) += dff.colwise().sum().transpose();
            Matrix dmid = dr2 + dff * P(ix.w1);

            // first residual + norm
            Matrix dr1 = layer_norm_backward(dmid, bc.ln1, ix.ln1_g, ix.ln1_b, grad);
            G(grad, ix.wo) += dr1.transpose() * bc.concat;
            G(grad, ix.bo).col(0) += dr1.colwise().sum().transpose();
            Matrix dconcat = dr1 * P(ix.wo);

            Matrix dq(n, dims_.d_model), dk(n, dims_.d_model), dv(n, dims_.d_model);
            for (int h = 0; h < dims_.heads; ++h) {
                const auto& a = bc.attn[h];
                auto dout = dconcat.middleCols(h * hd, hd);
                Matrix da = dout * bc.v.middleCols(h * hd, hd).transpose();
                dv.middleCols(h * hd, hd) = a.transpose() * dout;
                Vector row_dot = (da.array() * a.array()).rowwise().sum();
                Matrix ds = a.array() * (da.colwise() - row_dot).array();
                ds *= scale;
                dq.middleCols(h * hd, hd) = ds * bc.k.middleCols(h * hd, hd);
                dk.middleCols(h * hd, hd) = ds.transpose() * bc.q.middleCols(h * hd, hd);
            }
            G(grad, ix.wq) += dq.transpose() * bc.x_in;
            G(grad, ix.bq).col(0) += dq.colwise().sum().transpose();
            G(grad, ix.wk) += dk.transpose() * bc.x_in;
            G(grad, ix.bk).col(0) += dk.colwise().sum().transpose();
            G(grad, ix.wv) += dv.transpose() * bc.x_in;
            G(grad, ix.bv).col(0) += dv.colwise().sum().transpose();
            dx = dr1 + dq * P(ix.wq) + dk * P(ix.wk) + dv * P(ix.wv);
        }

        G(grad, in_w_) += dx.transpose() * c.tokens;
        G(grad, in_b_).col(0) += dx.colwise().sum().transpose();
        if (dims_.positional) G(grad, pos_).topRows(n) += dx;
    }

    EncoderDims dims_{};
    std::uint64_t seed_ = 0;
    ParamLayout layout_;
    std::size_t in_w_ = 0, in_b_ = 0, pos_ = 0, head_w_ = 0, head_b_ = 0;
    std::array<BlockIndex, kBlocks> blocks_{};
    Vector params_;
};

}  // namespace abstain::nn
