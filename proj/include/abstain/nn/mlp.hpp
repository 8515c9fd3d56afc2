#pragma once

#include <array>
#include <cstdint>
#include <stdexcept>
#include <string>

#include "abstain/nn/loss.hpp"
#include "abstain/nn/params.hpp"

namespace abstain::nn {

/// Four affine layers F_in -> w1 -> w2 -> w3 -> 1, rectifier activations
/// between them and a logistic output.
template <typename Scalar>
class MlpProbe {
public:
    static constexpr int kAffineLayers = 4;
    using Vector = Vec<Scalar>;
    using Matrix = Mat<Scalar>;
    using Widths = std::array<int, kAffineLayers + 1>;

    static constexpr std::array<int, 3> kDefaultHidden = {1024, 256, 64};

    MlpProbe() = default;

    MlpProbe(int input_dim, std::uint64_t seed)
        : MlpProbe(Widths{input_dim, kDefaultHidden[0], kDefaultHidden[1], kDefaultHidden[2], 1}, seed) {}

    MlpProbe(Widths widths, std::uint64_t seed) : widths_(widths), seed_(seed) {
        if (widths_[kAffineLayers] != 1) throw std::invalid_argument("MLP probe must end in a single output");
        for (int w : widths_)
            if (w < 1) throw std::invalid_argument("MLP widths must be positive");
        for (int k = 0; k < kAffineLayers; ++k) {
            weight_[k] = layout_.add("W" + std::to_string(k + 1), widths_[k + 1], widths_[k]);
            bias_[k] = layout_.add("b" + std::to_string(k + 1), widths_[k + 1], 1);
        }
        params_ = Vector::Zero(layout_.size());
        Rng rng(seed);
        for (int k = 0; k < kAffineLayers; ++k) init_fan_in(params_, layout_[weight_[k]], widths_[k], rng);
    }

    int input_dim() const { return widths_[0]; }
    const Widths& widths() const { return widths_; }
    std::uint64_t seed() const { return seed_; }
    const ParamLayout& layout() const { return layout_; }
    Vector& parameters() { return params_; }
    const Vector& parameters() const { return params_; }

    auto weight(int k) { return view(params_, layout_[weight_[k]]); }
    auto weight(int k) const { return view(params_, layout_[weight_[k]]); }
    auto bias(int k) { return view(params_, layout_[bias_[k]]).col(0); }
    auto bias(int k) const { return view(params_, layout_[bias_[k]]).col(0); }

    /// Pre-activation of the output unit for each column of `x`.
    Vector logits(const Eigen::Ref<const Matrix>& x) const {
        check_input(x.rows());
        Matrix a = x;
        for (int k = 0; k < kAffineLayers; ++k) {
            Matrix z = weight(k) * a;
            z.colwise() += bias(k);
            if (k + 1 < kAffineLayers) z = z.cwiseMax(Scalar(0));
            a = std::move(z);
        }
        return a.row(0).transpose();
    }

    /// Scores in (0, 1), one per column of `x`.
    Vector forward_batch(const Eigen::Ref<const Matrix>& x) const {
        Vector z = logits(x);
        return z.unaryExpr([](Scalar v) { return clamp_score(sigmoid(v)); });
    }

    Scalar forward(const Eigen::Ref<const Vector>& x) const { return forward_batch(x)(0); }

    /// Mean soft-label BCE over the columns of `x`; writes d(loss)/d(params) into `grad`.
    double loss_and_gradient(const Eigen::Ref<const Matrix>& x, const Eigen::Ref<const Vector>& y,
                             Vector& grad) const {
        check_input(x.rows());
        if (y.size() != x.cols()) throw std::invalid_argument("label count does not match batch size");
        const Eigen::Index batch = x.cols();
        std::array<Matrix, kAffineLayers + 1> act;  // act[0] = input, act[k] = post-activation of layer k
        std::array<Matrix, kAffineLayers> pre;
        act[0] = x;
        for (int k = 0; k < kAffineLayers; ++k) {
            pre[k] = weight(k) * act[k];
            pre[k].colwise() += bias(k);
            act[k + 1] = (k + 1 < kAffineLayers) ? Matrix(pre[k].cwiseMax(Scalar(0))) : pre[k];
        }

        grad.setZero(layout_.size());
        Matrix delta(1, batch);
        double loss = 0.0;
        for (Eigen::Index i = 0; i < batch; ++i) {
            const Scalar s = sigmoid(pre[kAffineLayers - 1](0, i));
            loss += bce_soft(static_cast<double>(s), static_cast<double>(y(i)));
            delta(0, i) = (s - y(i)) / static_cast<Scalar>(batch);
        }
        for (int k = kAffineLayers - 1; k >= 0; --k) {
            view(grad, layout_[weight_[k]]).noalias() = delta * act[k].transpose();
            view(grad, layout_[bias_[k]]).col(0) = delta.rowwise().sum();
            if (k == 0) break;
            Matrix back = weight(k).transpose() * delta;
            delta = back.cwiseProduct((pre[k - 1].array() > Scalar(0)).matrix().template cast<Scalar>());
        }
        return loss / static_cast<double>(batch);
    }

    /// Gradient of BCE(score(x), y) for a single sample.
    Vector backward(const Eigen::Ref<const Vector>& x, Scalar y) const {
        Vector grad;
        Vector label = Vector::Constant(1, y);
        loss_and_gradient(x, label, grad);
        return grad;
    }

    template <typename Other>
    MlpProbe<Other> cast() const {
        MlpProbe<Other> out(widths_, seed_);
        out.parameters() = params_.template cast<Other>();
        return out;
    }

private:
    void check_input(Eigen::Index rows) const {
        if (rows != widths_[0])
            throw std::invalid_argument("MLP probe expects " + std::to_string(widths_[0]) + " features, got " +
                                        std::to_string(rows));
    }

    Widths widths_{};
    std::uint64_t seed_ = 0;
    ParamLayout layout_;
    std::array<std::size_t, kAffineLayers> weight_{};
    std::array<std::size_t, kAffineLayers> bias_{};
    Vector params_;
};

}  // namespace abstain::nn
