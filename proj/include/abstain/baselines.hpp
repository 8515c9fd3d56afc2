#pragma once

#include <array>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "abstain/metrics.hpp"
#include "abstain/repr_store.hpp"

namespace abstain {

enum class Method {
    TokenProbability,
    VerbalizedConfidence,
    SelfConsistency,
    PromptToAbstain,
    VlmJudge,
    RTuning,
    Svar,
    ContextualLens,
};

inline constexpr std::array<Method, 8> kAllMethods = {
    Method::TokenProbability, Method::VerbalizedConfidence, Method::SelfConsistency, Method::PromptToAbstain,
    Method::VlmJudge,         Method::RTuning,              Method::Svar,            Method::ContextualLens};

/// Command-line identifier, e.g. "token_prob".
std::string method_id(Method m);
/// Table row label, e.g. "Token Prob.".
std::string method_label(Method m);
Method method_from_id(const std::string& id);

struct ConfidenceScore {
    double value = 0.0;
    Method method = Method::TokenProbability;
    bool degenerate = false;
};

/// Geometric mean of the answer's token probabilities.
double token_probability(std::span<const double> probs);

/// Maps a 1–5 self-rating linearly onto [0, 1]; other ratings score 0, flagged.
ConfidenceScore verbalized_confidence(int rating);

/// Edit distance over Unicode code points (UTF-8 input).
std::size_t levenshtein(std::string_view a, std::string_view b);

/// 1 − Levenshtein(a, b) / max(|a|, |b|), with CA("", "") = 1.
double character_accuracy(std::string_view a, std::string_view b);

/// Mean character accuracy between the answer and each sampled answer.
double self_consistency(std::string_view answer, std::span<const std::string> samples);

/// Lower-cases ASCII and folds typographic apostrophes to '\''.
std::u32string normalize_phrase_text(std::string_view utf8);

/// 0 when the answer says "I don't know", else 1.
double prompt_to_abstain(std::string_view answer_text);

/// 1 iff p(True) > p(False); missing evidence scores 0, flagged.
ConfidenceScore vlm_judge(std::optional<double> p_true, std::optional<double> p_false);

/// 1 iff "I am sure" appears as a whole phrase; text with neither the sure
/// nor the unsure suffix scores 0, flagged.
ConfidenceScore rtuning_indicator(std::string_view answer_text);

/// Inclusive 1-based layer range.
struct LayerRange {
    int start = 1;
    int end = 1;

    /// ⌈L/4⌉ .. ⌊3L/4⌋, widened to at least one layer.
    static LayerRange middle_half(int num_layers);
    static LayerRange all(int num_layers) { return {1, num_layers}; }
};

/// Σ_{ℓ∈range} mean_h evidence(ℓ, h) for an L x H matrix of first-output-token
/// attention mass on visual tokens. Unnormalized.
double svar_raw(const RowMatrixXf& evidence, LayerRange range);

/// Max over layers and image tokens of cos(h_i^(ℓ), answer^(ℓ)), before the
/// (c+1)/2 mapping. `image_hidden` is |V| x (L·D), `answer_hidden` is L x D.
/// Zero-norm vectors are skipped; nullopt when every candidate was skipped.
std::optional<double> contextual_lens_cosine(const RowMatrixXf& image_hidden, const RowMatrixXf& answer_hidden);

/// contextual_lens_cosine mapped to [0, 1]; degenerate (0) if nothing was comparable.
ConfidenceScore contextual_lens(const RowMatrixXf& image_hidden, const RowMatrixXf& answer_hidden);

struct BaselineOptions {
    std::optional<LayerRange> svar_layers;  // default: middle half
};

/// Per-sample scores of one method over a subset of a dump.
struct MethodScores {
    Method method = Method::TokenProbability;
    bool available = false;          // false when no sample carries the evidence
    std::vector<double> scores;      // parallel to the requested indices
    std::vector<bool> degenerate;
    std::size_t degenerate_count = 0;
};

MethodScores score_method(const DumpReader& dump, Method method, std::span<const std::size_t> indices,
                          const BaselineOptions& options = {});

/// Min-max scales both score lists by the reference (validation) list's range,
/// clamping to [0, 1]. With a constant reference, values equal to it map to
/// 0.5 and the rest to 0 or 1.
void minmax_scale(std::vector<double>& reference, std::vector<double>& other);

struct BaselineResult {
    Method method = Method::TokenProbability;
    std::optional<MetricReport> report;  // empty when the dump lacks the evidence
    std::size_t degenerate_count = 0;    // over validation and test
};

/// Scores the validation and test splits, min-max scales SVAR by the
/// validation range, picks τ on validation and reports on test.
BaselineResult evaluate_baseline(const DumpReader& dump, Method method, const SplitAssignment& split,
                                 const BaselineOptions& options = {});

}  // namespace abstain
