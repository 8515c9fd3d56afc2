#pragma once

#include <string>

#include <Eigen/Dense>

#include "abstain/repr_store.hpp"

namespace abstain {

enum class FeatureKind { ConcatHidden, ConcatAttention, VisualAttention, SingleLayerHidden, SingleLayerAttention };

enum class Channel { Hidden, Attention };

/// Which probe input to build from a record. `layer` is 1-based and only
/// meaningful for the single-layer kinds.
struct FeatureSpec {
    FeatureKind kind = FeatureKind::ConcatHidden;
    int layer = 0;

    static FeatureSpec concat_hidden() { return {FeatureKind::ConcatHidden, 0}; }
    static FeatureSpec concat_attention() { return {FeatureKind::ConcatAttention, 0}; }
    static FeatureSpec visual_attention() { return {FeatureKind::VisualAttention, 0}; }
    static FeatureSpec single_layer(int layer, Channel c) {
        return {c == Channel::Hidden ? FeatureKind::SingleLayerHidden : FeatureKind::SingleLayerAttention, layer};
    }

    /// Token-sequence input (encoder probe) rather than a flat vector (MLP probe).
    bool is_sequence() const { return kind == FeatureKind::ConcatAttention; }
    SectionMask sections() const;

    /// Throws MissingSectionError / std::out_of_range when the dump cannot supply it.
    void check(const DumpManifest& m) const;

    /// Length of the flat vector, or per-token width for sequence features.
    Eigen::Index dim(const DumpManifest& m) const;

    std::string to_string() const;
    static FeatureSpec parse(const std::string& s);

    friend bool operator==(const FeatureSpec&, const FeatureSpec&) = default;
};

/// [h^(1), ..., h^(L)] flattened, length L·D.
Eigen::VectorXf concat_hidden(const SampleRecord& r);

/// [a_vis^(1), ..., a_vis^(L)] flattened layer-major then head, length L·H.
Eigen::VectorXf visual_attention_features(const SampleRecord& r);

/// n x (L·H): row i is the attention token i receives, layers-major then heads.
RowMatrixXf concat_attention_tokens(const SampleRecord& r);

/// h^(ℓ) (length D) or a_vis^(ℓ) (length H) for 1-based ℓ.
Eigen::VectorXf single_layer_features(const SampleRecord& r, int layer, Channel channel);

/// Dispatches a flat-vector FeatureSpec.
Eigen::VectorXf vector_features(const SampleRecord& r, const FeatureSpec& spec);

}  // namespace abstain
