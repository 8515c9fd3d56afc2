#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "abstain/rng.hpp"

namespace abstain::nn {

template <typename Scalar>
using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

/// Names and places each tensor of a probe inside one flat parameter vector.
/// Blocks are column-major (rows x cols) and laid out in declaration order,
/// which is also the checkpoint blob order.
class ParamLayout {
public:
    struct Block {
        std::string name;
        Eigen::Index offset = 0;
        Eigen::Index rows = 0;
        Eigen::Index cols = 0;
        Eigen::Index size() const { return rows * cols; }
    };

    std::size_t add(std::string name, Eigen::Index rows, Eigen::Index cols) {
        blocks_.push_back({std::move(name), size_, rows, cols});
        size_ += rows * cols;
        return blocks_.size() - 1;
    }

    const Block& operator[](std::size_t i) const { return blocks_[i]; }
    const std::vector<Block>& blocks() const { return blocks_; }
    Eigen::Index size() const { return size_; }

private:
    std::vector<Block> blocks_;
    Eigen::Index size_ = 0;
};

template <typename Scalar>
Eigen::Map<Mat<Scalar>> view(Vec<Scalar>& flat, const ParamLayout::Block& b) {
    return {flat.data() + b.offset, b.rows, b.cols};
}

template <typename Scalar>
Eigen::Map<const Mat<Scalar>> view(const Vec<Scalar>& flat, const ParamLayout::Block& b) {
    return {flat.data() + b.offset, b.rows, b.cols};
}

/// Fills a weight block with U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
template <typename Scalar>
void init_fan_in(Vec<Scalar>& flat, const ParamLayout::Block& b, Eigen::Index fan_in, Rng& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (Eigen::Index i = 0; i < b.size(); ++i) flat[b.offset + i] = static_cast<Scalar>(dist(rng));
}

template <typename Scalar>
void init_uniform(Vec<Scalar>& flat, const ParamLayout::Block& b, double bound, Rng& rng) {
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (Eigen::Index i = 0; i < b.size(); ++i) flat[b.offset + i] = static_cast<Scalar>(dist(rng));
}

template <typename Scalar>
void init_constant(Vec<Scalar>& flat, const ParamLayout::Block& b, Scalar value) {
    flat.segment(b.offset, b.size()).setConstant(value);
}

}  // namespace abstain::nn
