#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <stdexcept>
#include <string>

#include "abstain/nn/params.hpp"

namespace abstain::nn {

enum class Scheduler { Constant, Cosine };

inline const char* to_string(Scheduler s) { return s == Scheduler::Cosine ? "cosine" : "constant"; }

inline Scheduler scheduler_from_string(const std::string& s) {
    if (s == "constant") return Scheduler::Constant;
    if (s == "cosine") return Scheduler::Cosine;
    throw std::invalid_argument("unknown scheduler '" + s + "'");
}

struct TrainConfig {
    double learning_rate = 1e-3;
    double weight_decay = 0.0;
    Scheduler scheduler = Scheduler::Constant;
    int batch_size = 64;
    int max_epochs = 100;
    int patience = 5;
    std::uint64_t seed = 0;

    void check() const {
        if (!(learning_rate > 0)) throw std::invalid_argument("learning rate must be > 0");
        if (weight_decay < 0) throw std::invalid_argument("weight decay must be >= 0");
        if (patience < 1) throw std::invalid_argument("patience must be >= 1");
        if (batch_size < 1 || max_epochs < 1) throw std::invalid_argument("batch size and epochs must be >= 1");
    }
};

/// Learning rate for a 0-based epoch under the configured schedule.
inline double scheduled_lr(const TrainConfig& cfg, int epoch) {
    if (cfg.scheduler == Scheduler::Constant || cfg.max_epochs <= 1) return cfg.learning_rate;
    const double t = static_cast<double>(epoch) / static_cast<double>(cfg.max_epochs);
    return 0.5 * cfg.learning_rate * (1.0 + std::cos(std::numbers::pi * t));
}

struct AdamHyper {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

template <typename Scalar>
struct OptimizerState {
    Vec<Scalar> m;
    Vec<Scalar> v;
    std::int64_t step = 0;
    AdamHyper hyper;

    OptimizerState() = default;
    explicit OptimizerState(Eigen::Index size, AdamHyper h = {})
        : m(Vec<Scalar>::Zero(size)), v(Vec<Scalar>::Zero(size)), hyper(h) {}
};

/// Adaptive-moment update with decoupled weight decay:
///   θ ← θ·(1 − lr·wd) − lr · m̂ / (√v̂ + ε)
template <typename Scalar>
void optimizer_step(OptimizerState<Scalar>& st, Vec<Scalar>& params, const Vec<Scalar>& grads, double lr,
                    double weight_decay) {
    if (params.size() != grads.size() || st.m.size() != params.size())
        throw std::invalid_argument("optimizer shapes disagree");
    ++st.step;
    const auto& h = st.hyper;
    const auto b1 = static_cast<Scalar>(h.beta1), b2 = static_cast<Scalar>(h.beta2);
    st.m = b1 * st.m + (Scalar(1) - b1) * grads;
    st.v = b2 * st.v + (Scalar(1) - b2) * grads.cwiseAbs2();
    const double c1 = 1.0 - std::pow(h.beta1, static_cast<double>(st.step));
    const double c2 = 1.0 - std::pow(h.beta2, static_cast<double>(st.step));
    const auto step_size = static_cast<Scalar>(lr / c1);
    const auto inv_c2 = static_cast<Scalar>(1.0 / std::sqrt(c2));
    const auto eps = static_cast<Scalar>(h.eps);
    if (weight_decay != 0.0) params *= static_cast<Scalar>(1.0 - lr * weight_decay);
    params.array() -= step_size * st.m.array() / (st.v.array().sqrt() * inv_c2 + eps);
}

template <typename Scalar>
void optimizer_step(OptimizerState<Scalar>& st, Vec<Scalar>& params, const Vec<Scalar>& grads,
                    const TrainConfig& cfg) {
    optimizer_step(st, params, grads, cfg.learning_rate, cfg.weight_decay);
}

}  // namespace abstain::nn
