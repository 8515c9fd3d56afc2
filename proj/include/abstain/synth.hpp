#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include <json.hpp>

#include "abstain/repr_store.hpp"

namespace abstain {

/// Which evidence fields the generator fills in.
struct EvidenceKinds {
    bool token_probs = true;
    bool sampled_answers = true;
    bool verbalized = true;
    bool judge = true;
    bool rtuning = true;
    bool answer_text = true;

    static EvidenceKinds none() { return {false, false, false, false, false, false}; }
    static EvidenceKinds token_probs_only() { return {true, false, false, false, false, false}; }
};

/// Two-class Gaussian construction. Sample i draws c_i ~ Bernoulli(base_rate);
/// at layer ℓ its hidden state is ρ(ℓ)·δ·c_i·u_ℓ + N(0, I) with a fixed random
/// unit direction u_ℓ per layer. Attention mass onto visual tokens is
/// clamp(ρ(ℓ)·μ_c + σ·z, 0, 1) with μ_c = mu_hi for correct answers and mu_lo
/// otherwise. The stored label is c_i flipped with probability label_noise.
struct SyntheticConfig {
    int num_samples = 1000;
    int num_layers = 12;
    int hidden_dim = 64;
    int num_heads = 4;
    std::vector<double> rho;  // length num_layers, each in [0, 1]
    double delta = 0.0;
    double label_noise = 0.0;  // [0, 0.5)
    double base_rate = 0.5;    // (0, 1)
    std::uint64_t seed = 0;
    /// Seed for the per-layer directions u_ℓ when they should be shared with
    /// another dump; defaults to `seed`.
    std::optional<std::uint64_t> direction_seed;

    double mu_hi = 0.6;
    double mu_lo = 0.3;
    double attention_noise = 0.05;

    int input_tokens = 16;   // n per sample
    int visual_tokens = 4;   // |V| per sample, < input_tokens

    bool hidden = true;
    bool attention = false;       // visual_attention + svar_evidence
    bool full_attention = false;
    bool image_hidden = false;
    EvidenceKinds evidence;

    /// Throws std::invalid_argument when a field is out of range.
    void check() const;

    static std::vector<double> one_hot(int num_layers, int layer);  // 1-based layer
    /// Triangular profile 1 − |ℓ − peak| / width, floored at 0.
    static std::vector<double> triangle(int num_layers, int peak, double width);
};

nlohmann::json to_json(const SyntheticConfig& c);
SyntheticConfig synthetic_config_from_json(const nlohmann::json& j);

/// Dump contents before they hit disk.
struct SyntheticData {
    DumpManifest manifest;
    TensorSections sections;
    std::vector<int> correct;  // c_i before label noise
};

SyntheticData generate(const SyntheticConfig& config);

/// Writes a dump with at least the hidden section.
DumpManifest generate_hidden_dump(SyntheticConfig config, const std::filesystem::path& destination);
/// Writes a dump with at least the visual_attention and svar_evidence sections.
DumpManifest generate_attention_dump(SyntheticConfig config, const std::filesystem::path& destination);

/// Standard normal CDF.
double normal_cdf(double x);

/// Bayes-optimal accuracy of the hidden-state construction using every layer:
/// Φ(‖ρ‖·δ/2) at base rate 1/2, with the prior-adjusted threshold otherwise.
/// Throws std::invalid_argument when label_noise > 0.
double bayes_accuracy(const SyntheticConfig& config);

/// Same bound for a single 1-based layer.
double bayes_accuracy_layer(const SyntheticConfig& config, int layer);

/// Bayes accuracy of two unit-variance Gaussians whose means are `separation`
/// apart, with prior `base_rate` on the shifted class.
double gaussian_bayes_accuracy(double separation, double base_rate = 0.5);

}  // namespace abstain
