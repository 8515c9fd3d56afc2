#include "abstain/features.hpp"

#include <stdexcept>

#include "abstain/error.hpp"

namespace abstain {

namespace {

const RowMatrixXf& need(const std::optional<RowMatrixXf>& section, const char* name) {
    if (!section) throw MissingSectionError(std::string("record has no ") + name + " section");
    return *section;
}

Eigen::VectorXf flatten(const RowMatrixXf& m) {
    return Eigen::Map<const Eigen::VectorXf>(m.data(), m.size());
}

}  // namespace

SectionMask FeatureSpec::sections() const {
    switch (kind) {
        case FeatureKind::ConcatHidden:
        case FeatureKind::SingleLayerHidden:
            return static_cast<SectionMask>(Section::Hidden);
        case FeatureKind::ConcatAttention:
            return static_cast<SectionMask>(Section::FullAttention);
        case FeatureKind::VisualAttention:
        case FeatureKind::SingleLayerAttention:
            return static_cast<SectionMask>(Section::VisualAttention);
    }
    return 0;
}

void FeatureSpec::check(const DumpManifest& m) const {
    const bool present = [&] {
        switch (kind) {
            case FeatureKind::ConcatHidden:
            case FeatureKind::SingleLayerHidden:
                return m.has_hidden;
            case FeatureKind::ConcatAttention:
                return m.has_full_attention;
            default:
                return m.has_visual_attention;
        }
    }();
    if (!present) throw MissingSectionError("dump lacks the section required by feature '" + to_string() + "'");
    if ((kind == FeatureKind::SingleLayerHidden || kind == FeatureKind::SingleLayerAttention) &&
        (layer < 1 || layer > m.num_layers))
        throw std::out_of_range("layer " + std::to_string(layer) + " outside [1, " + std::to_string(m.num_layers) +
                                "]");
}

Eigen::Index FeatureSpec::dim(const DumpManifest& m) const {
    const Eigen::Index L = m.num_layers, D = m.hidden_dim, H = m.num_heads;
    switch (kind) {
        case FeatureKind::ConcatHidden: return L * D;
        case FeatureKind::ConcatAttention: return L * H;
        case FeatureKind::VisualAttention: return L * H;
        case FeatureKind::SingleLayerHidden: return D;
        case FeatureKind::SingleLayerAttention: return H;
    }
    return 0;
}

std::string FeatureSpec::to_string() const {
    switch (kind) {
        case FeatureKind::ConcatHidden: return "concat_hidden";
        case FeatureKind::ConcatAttention: return "concat_attention";
        case FeatureKind::VisualAttention: return "visual_attention";
        case FeatureKind::SingleLayerHidden: return "single_layer_hidden:" + std::to_string(layer);
        case FeatureKind::SingleLayerAttention: return "single_layer_attention:" + std::to_string(layer);
    }
    return "?";
}

FeatureSpec FeatureSpec::parse(const std::string& s) {
    if (s == "concat_hidden") return concat_hidden();
    if (s == "concat_attention") return concat_attention();
    if (s == "visual_attention") return visual_attention();
    auto layer_of = [&](std::size_t prefix) { return std::stoi(s.substr(prefix)); };
    if (s.rfind("single_layer_hidden:", 0) == 0) return single_layer(layer_of(20), Channel::Hidden);
    if (s.rfind("single_layer_attention:", 0) == 0) return single_layer(layer_of(23), Channel::Attention);
    throw std::invalid_argument("unknown feature spec '" + s + "'");
}

Eigen::VectorXf concat_hidden(const SampleRecord& r) { return flatten(need(r.hidden, "hidden")); }

Eigen::VectorXf visual_attention_features(const SampleRecord& r) {
    return flatten(need(r.visual_attention, "visual_attention"));
}

RowMatrixXf concat_attention_tokens(const SampleRecord& r) { return need(r.full_attention, "full_attention"); }

Eigen::VectorXf single_layer_features(const SampleRecord& r, int layer, Channel channel) {
    const auto& m = channel == Channel::Hidden ? need(r.hidden, "hidden") : need(r.visual_attention, "visual_attention");
    if (layer < 1 || layer > m.rows())
        throw std::out_of_range("layer " + std::to_string(layer) + " outside [1, " + std::to_string(m.rows()) + "]");
    return m.row(layer - 1).transpose();
}

Eigen::VectorXf vector_features(const SampleRecord& r, const FeatureSpec& spec) {
    switch (spec.kind) {
        case FeatureKind::ConcatHidden: return concat_hidden(r);
        case FeatureKind::VisualAttention: return visual_attention_features(r);
        case FeatureKind::SingleLayerHidden: return single_layer_features(r, spec.layer, Channel::Hidden);
        case FeatureKind::SingleLayerAttention: return single_layer_features(r, spec.layer, Channel::Attention);
        case FeatureKind::ConcatAttention: break;
    }
    throw std::invalid_argument("concat_attention is a token-sequence feature");
}

}  // namespace abstain
