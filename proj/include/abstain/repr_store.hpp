#pragma once

// Representation dumps: a directory holding `manifest.json` plus one binary
// file per captured tensor section.
//
//   hidden.bin                 N x L x D
//   visattn.bin                N x L x H
//   svar.bin                   N x L x H
//   attn_full.bin/.idx         per sample n x L x H
//   imghid.bin/.idx            per sample |V| x L x D
//
// Every .bin and .idx file starts with the 4-byte magic "LRPD" and a u32
// little-endian format version. Tensor files then hold little-endian float32
// values in row-major order (sample, layer, head/dim). Index files hold N u64
// offsets (counted in scalars from the start of the payload) followed by N u64
// lengths.

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

namespace abstain {

using RowMatrixXf = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline constexpr std::uint32_t kFormatVersion = 1;
inline constexpr std::array<char, 4> kMagic = {'L', 'R', 'P', 'D'};
inline constexpr std::size_t kHeaderBytes = 8;

struct EvidenceBundle {
    std::vector<double> token_probs;
    std::vector<std::string> sampled_answers;
    std::optional<int> verbalized_rating;
    std::optional<double> judge_p_true;
    std::optional<double> judge_p_false;
    std::optional<bool> rtuning_suffix_present;
};

struct SampleMeta {
    std::string sample_id;
    std::string answer_text;
    double label = 0.0;           // soft correctness in [0, 1]
    int num_input_tokens = 0;     // n
    int visual_token_count = 0;   // |V| <= n
    EvidenceBundle evidence;
};

struct DumpManifest {
    std::uint32_t format_version = kFormatVersion;
    std::string model_id;
    std::string dataset_id;
    int num_samples = 0;
    int num_layers = 0;
    int hidden_dim = 0;
    int num_heads = 0;
    bool has_hidden = false;
    bool has_visual_attention = false;
    bool has_svar_evidence = false;
    bool has_full_attention = false;
    bool has_image_hidden = false;
    nlohmann::json producer = nlohmann::json::object();
    std::vector<SampleMeta> samples;
};

/// In-memory tensors handed to write_dump. Fixed-shape sections are flat
/// row-major buffers; variable-shape sections hold one matrix per sample.
struct TensorSections {
    std::vector<float> hidden;                 // N*L*D
    std::vector<float> visual_attention;       // N*L*H
    std::vector<float> svar_evidence;          // N*L*H
    std::vector<RowMatrixXf> full_attention;   // n_i x (L*H)
    std::vector<RowMatrixXf> image_hidden;     // |V_i| x (L*D)
};

enum class Section : unsigned {
    Hidden = 1u << 0,
    VisualAttention = 1u << 1,
    SvarEvidence = 1u << 2,
    FullAttention = 1u << 3,
    ImageHidden = 1u << 4,
};

using SectionMask = unsigned;
inline constexpr SectionMask kAllSections = 0x1f;

constexpr SectionMask operator|(Section a, Section b) {
    return static_cast<SectionMask>(a) | static_cast<SectionMask>(b);
}
constexpr bool has_section(SectionMask mask, Section s) { return (mask & static_cast<SectionMask>(s)) != 0; }

/// One QA instance with whichever sections were requested from the reader.
/// Layer rows are 0-based here; public APIs that take a layer use 1-based ℓ.
struct SampleRecord {
    std::size_t index = 0;
    const SampleMeta* meta = nullptr;
    std::optional<RowMatrixXf> hidden;            // L x D
    std::optional<RowMatrixXf> visual_attention;  // L x H
    std::optional<RowMatrixXf> svar_evidence;     // L x H
    std::optional<RowMatrixXf> full_attention;    // n x (L*H)
    std::optional<RowMatrixXf> image_hidden;      // |V| x (L*D)
};

/// Read-only handle on a dump. Copies share the underlying files; sample
/// reads are positional and safe to issue from several threads.
class DumpReader {
public:
    const DumpManifest& manifest() const;
    const std::filesystem::path& path() const;
    std::size_t size() const;

    /// Loads sample `i`, touching only the sections in `mask` that the
    /// manifest flags as present.
    SampleRecord record(std::size_t i, SectionMask mask = kAllSections) const;

    struct Impl;

private:
    friend DumpReader read_dump(const std::filesystem::path& source);
    std::shared_ptr<const Impl> impl_;
};

void write_dump(const DumpManifest& manifest, const TensorSections& sections,
                const std::filesystem::path& destination);

DumpReader read_dump(const std::filesystem::path& source);

DumpManifest manifest_from_json(const nlohmann::json& j);
nlohmann::json manifest_to_json(const DumpManifest& m);

struct ValidationIssue {
    std::string kind;      // "format", "non_finite", "label_range", "attention_range", ...
    std::string section;   // file or field the issue refers to
    std::optional<std::size_t> sample;  // 0-based storage coordinates
    std::optional<std::size_t> layer;
    std::string message;
};

struct ValidationReport {
    std::vector<ValidationIssue> issues;
    std::size_t nan_count = 0;
    std::size_t inf_count = 0;
    std::size_t label_out_of_range = 0;
    std::size_t attention_out_of_range = 0;
    /// Samples lacking the evidence each baseline needs, keyed by method name.
    std::map<std::string, std::size_t> missing_evidence;

    bool ok() const { return issues.empty(); }
    nlohmann::json to_json() const;
};

inline constexpr double kAttentionSlack = 1e-4;

/// Never throws: unreadable or malformed dumps surface as "format"/"shape" issues.
ValidationReport validate_dump(const std::filesystem::path& source);

struct SplitRatios {
    double train = 0.6;
    double val = 0.2;
    double test = 0.2;
};

struct SplitAssignment {
    std::vector<std::size_t> train;
    std::vector<std::size_t> val;
    std::vector<std::size_t> test;
};

/// Seeded permutation cut into ⌊rN⌋-sized parts; leftover samples go to train.
/// Each part is returned in ascending index order. Throws std::invalid_argument
/// when a split with a positive ratio would be empty.
SplitAssignment split_dataset(std::size_t num_samples, SplitRatios ratios, std::uint64_t seed);

inline SplitAssignment split_dataset(const DumpManifest& manifest, SplitRatios ratios, std::uint64_t seed) {
    return split_dataset(static_cast<std::size_t>(manifest.num_samples), ratios, seed);
}

}  // namespace abstain
