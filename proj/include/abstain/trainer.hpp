#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "abstain/features.hpp"
#include "abstain/metrics.hpp"
#include "abstain/nn.hpp"
#include "abstain/repr_store.hpp"

namespace abstain {

/// A dump held in memory for training: every record loaded once with the
/// requested sections. Keeps the reader alive so record metadata stays valid.
struct Corpus {
    DumpReader reader;
    std::vector<SampleRecord> records;

    const DumpManifest& manifest() const { return reader.manifest(); }
    std::size_t size() const { return records.size(); }
};

Corpus load_corpus(const DumpReader& reader, SectionMask mask = kAllSections);

/// Probe inputs for every sample of a corpus under one FeatureSpec.
struct FeatureTable {
    FeatureSpec spec;
    Eigen::MatrixXf vectors;                 // F x N, flat features (MLP probes)
    std::vector<Eigen::MatrixXf> sequences;  // n_i x F_token (encoder probe)
    Eigen::VectorXf labels;                  // N

    std::size_t size() const { return static_cast<std::size_t>(labels.size()); }
};

FeatureTable build_features(const Corpus& corpus, const FeatureSpec& spec);

/// Architecture knobs that are not hyperparameters of the search.
struct ProbeOptions {
    std::array<int, 3> mlp_hidden = nn::MlpProbe<float>::kDefaultHidden;
    nn::EncoderDims encoder;  // token_dim and max_tokens are filled from the dump
};

struct EpochStats {
    int epoch = 0;  // 1-based
    double train_loss = 0.0;
    double val_loss = 0.0;
    double val_a_acc = 0.0;
};

struct Provenance {
    std::string dump_id;
    std::string dump_path;
    std::uint64_t split_seed = 0;
};

/// Source dimensions a probe was trained on, used for compatibility checks.
struct DumpDims {
    int num_layers = 0;
    int hidden_dim = 0;
    int num_heads = 0;
};

struct TrainedProbe {
    nn::AnyProbe probe;
    FeatureSpec spec;
    nn::TrainConfig config;
    std::vector<EpochStats> history;
    int best_epoch = 0;
    double best_val_loss = std::numeric_limits<double>::infinity();
    double best_val_a_acc = 0.0;
    bool diverged = false;
    Provenance provenance;
    DumpDims dims;
};

/// Mini-batch training on the train split with early stopping on validation
/// BCE; returns the parameters of the best validation epoch.
TrainedProbe train_probe(const Corpus& corpus, const SplitAssignment& split, const FeatureSpec& spec,
                         const nn::TrainConfig& config, const ProbeOptions& options = {});

/// Same, reusing features already built for `spec`.
TrainedProbe train_probe(const Corpus& corpus, const FeatureTable& table, const SplitAssignment& split,
                         const nn::TrainConfig& config, const ProbeOptions& options = {});

/// Probe scores (in (0,1)) for the given sample indices.
std::vector<double> score_samples(const TrainedProbe& probe, const FeatureTable& table,
                                  std::span<const std::size_t> indices);
double score_record(const TrainedProbe& probe, const SampleRecord& record);

ScoredSet scored_set(const TrainedProbe& probe, const FeatureTable& table, std::span<const std::size_t> indices);

/// Test-split report at the fixed 0.5 threshold.
MetricReport evaluate_probe(const TrainedProbe& probe, const FeatureTable& table, const SplitAssignment& split);

struct GridRun {
    nn::TrainConfig config;
    double val_a_acc = 0.0;
    double best_val_loss = 0.0;
    bool diverged = false;
};

struct GridResult {
    TrainedProbe best;
    std::vector<GridRun> runs;  // one per grid cell, in grid order
};

/// learning rate {1e-4, 3e-4, 1e-3} x weight decay {0, 1e-4, 1e-2} x {constant, cosine}.
std::vector<nn::TrainConfig> default_grid(const nn::TrainConfig& base = {});

/// Reads {"learning_rate": [...], "weight_decay": [...], "scheduler": [...],
/// "batch_size", "max_epochs", "patience"}; missing axes fall back to `base`.
std::vector<nn::TrainConfig> grid_from_json(const nlohmann::json& j, const nn::TrainConfig& base = {});

/// Trains every cell and keeps the highest validation A-Acc; ties go to the
/// lower learning rate, then the lower weight decay. Diverged cells are only
/// eligible when every cell diverged.
GridResult grid_search(const Corpus& corpus, const SplitAssignment& split, const FeatureSpec& spec,
                       std::span<const nn::TrainConfig> grid, const ProbeOptions& options = {});

struct LayerResult {
    int layer = 0;  // 1-based
    double val_a_acc = 0.0;
    double test_a_acc = 0.0;
    TrainedProbe probe;
};

/// One single-layer probe per layer, all sharing `config` (with a per-layer
/// derived seed). Results are ordered by layer.
std::vector<LayerResult> layer_sweep(const Corpus& corpus, const SplitAssignment& split, Channel channel,
                                     const nn::TrainConfig& config, const ProbeOptions& options = {});

struct EnsembleProbe {
    Channel channel = Channel::Hidden;
    std::vector<int> layers;  // selection order: best validation A-Acc first
    std::vector<TrainedProbe> members;

    int k() const { return static_cast<int>(members.size()); }
};

/// Top-K layers by validation A-Acc (ties to the lower layer). K must be odd and <= L.
EnsembleProbe build_ensemble(const std::vector<LayerResult>& sweep, int k = 5);

/// Majority vote: [(1/K) Σ [score_ℓ >= 0.5] >= 0.5].
int majority_vote(std::span<const double> member_scores);

int ensemble_predict(const EnsembleProbe& ensemble, const SampleRecord& record);

/// Test-split report of the 0/1 ensemble decisions at threshold 0.5.
MetricReport evaluate_ensemble(const EnsembleProbe& ensemble, const Corpus& corpus, const SplitAssignment& split);

/// Throws IncompatibleError unless `foreign` can supply the probe's features.
void check_compatible(const TrainedProbe& probe, const DumpManifest& foreign);

/// Zero-shot evaluation on a foreign dump's test split at threshold 0.5.
MetricReport cross_dataset_eval(const TrainedProbe& probe, const Corpus& foreign, const SplitAssignment& split);
MetricReport cross_dataset_eval(const EnsembleProbe& ensemble, const Corpus& foreign, const SplitAssignment& split);

// persistence: nn checkpoint (probe.json + probe.bin) plus a sidecar.json
void save_trained_probe(const TrainedProbe& probe, const std::filesystem::path& dir);
TrainedProbe load_trained_probe(const std::filesystem::path& dir);
void save_ensemble(const EnsembleProbe& ensemble, const std::filesystem::path& dir);
EnsembleProbe load_ensemble(const std::filesystem::path& dir);

nlohmann::json to_json(const nn::TrainConfig& c);
nn::TrainConfig train_config_from_json(const nlohmann::json& j);

}  // namespace abstain
