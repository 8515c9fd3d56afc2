#pragma once

#include <algorithm>
#include <cmath>

namespace abstain::nn {

inline constexpr double kScoreEpsilon = 1e-7;

template <typename Scalar>
Scalar sigmoid(Scalar z) {
    if (z >= Scalar(0)) return Scalar(1) / (Scalar(1) + std::exp(-z));
    const Scalar e = std::exp(z);
    return e / (Scalar(1) + e);
}

/// Keeps a probe score strictly inside (0, 1) even where the logistic
/// saturates in the working precision.
template <typename Scalar>
Scalar clamp_score(Scalar s) {
    return std::clamp(s, Scalar(kScoreEpsilon), Scalar(1.0 - kScoreEpsilon));
}

/// Binary cross-entropy against a soft label y in [0, 1].
inline double bce_soft(double score, double y) {
    const double s = std::clamp(score, kScoreEpsilon, 1.0 - kScoreEpsilon);
    return -(y * std::log(s) + (1.0 - y) * std::log(1.0 - s));
}

}  // namespace abstain::nn
