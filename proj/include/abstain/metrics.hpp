#pragma once

#include <span>
#include <string>
#include <vector>

namespace abstain {

/// Parallel confidence scores and soft correctness labels, all in [0, 1].
struct ScoredSet {
    std::vector<double> scores;
    std::vector<double> labels;

    std::size_t size() const { return scores.size(); }
    /// Throws std::invalid_argument on length mismatch, emptiness or out-of-range values.
    void check() const;
};

struct MetricReport {
    double er = 0.0;
    double a_acc = 0.0;
    double r_acc = 1.0;
    double a_pre = 1.0;
    double tau = 0.5;
    std::size_t answered = 0;
    std::size_t abstained = 0;
    bool r_acc_degenerate = false;  // nothing answered
    bool a_pre_degenerate = false;  // nothing abstained
};

/// (1/N) Σ (2y − 1)·[s ≥ τ]
double effective_reliability(const ScoredSet& set, double tau);

/// (1/N) Σ [s < τ](1 − y) + [s ≥ τ]·y
double abstention_accuracy(const ScoredSet& set, double tau);

struct RatioMetric {
    double value = 1.0;
    bool degenerate = false;
};

/// Mean label among answered samples; 1.0 flagged when nothing is answered.
RatioMetric reliable_accuracy(const ScoredSet& set, double tau);

/// Mean (1 − label) among abstained samples; 1.0 flagged when nothing is abstained.
RatioMetric abstention_precision(const ScoredSet& set, double tau);

MetricReport compute_metrics(const ScoredSet& set, double tau);

/// τ maximizing A-Acc over {0, 1} ∪ {midpoints of adjacent distinct scores};
/// ties go to the smaller τ.
double select_threshold(const ScoredSet& validation);

enum class ThresholdPolicy { ValidationSelected, Fixed };

/// Test-split report. Probes use the fixed 0.5 threshold; baselines pick τ on validation.
MetricReport evaluate_method(const ScoredSet& validation, const ScoredSet& test, ThresholdPolicy policy,
                             double fixed_tau = 0.5);

}  // namespace abstain
