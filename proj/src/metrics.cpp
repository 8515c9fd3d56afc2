#include "abstain/metrics.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

namespace abstain {

void ScoredSet::check() const {
    if (scores.size() != labels.size()) throw std::invalid_argument("scores and labels differ in length");
    if (scores.empty()) throw std::invalid_argument("empty scored set");
    for (std::size_t i = 0; i < scores.size(); ++i) {
        if (!(scores[i] >= 0.0 && scores[i] <= 1.0)) throw std::invalid_argument("score outside [0, 1]");
        if (!(labels[i] >= 0.0 && labels[i] <= 1.0)) throw std::invalid_argument("label outside [0, 1]");
    }
}

double effective_reliability(const ScoredSet& set, double tau) {
    set.check();
    double sum = 0.0;
    for (std::size_t i = 0; i < set.size(); ++i)
        if (set.scores[i] >= tau) sum += 2.0 * set.labels[i] - 1.0;
    return sum / static_cast<double>(set.size());
}

double abstention_accuracy(const ScoredSet& set, double tau) {
    set.check();
    double sum = 0.0;
    for (std::size_t i = 0; i < set.size(); ++i)
        sum += set.scores[i] >= tau ? set.labels[i] : 1.0 - set.labels[i];
    return sum / static_cast<double>(set.size());
}

RatioMetric reliable_accuracy(const ScoredSet& set, double tau) {
    set.check();
    double num = 0.0;
    std::size_t den = 0;
    for (std::size_t i = 0; i < set.size(); ++i) {
        if (set.scores[i] >= tau) {
            num += set.labels[i];
            ++den;
        }
    }
    if (den == 0) return {1.0, true};
    return {num / static_cast<double>(den), false};
}

RatioMetric abstention_precision(const ScoredSet& set, double tau) {
    set.check();
    double num = 0.0;
    std::size_t den = 0;
    for (std::size_t i = 0; i < set.size(); ++i) {
        if (set.scores[i] < tau) {
            num += 1.0 - set.labels[i];
            ++den;
        }
    }
    if (den == 0) return {1.0, true};
    return {num / static_cast<double>(den), false};
}

MetricReport compute_metrics(const ScoredSet& set, double tau) {
    MetricReport r;
    r.tau = tau;
    r.er = effective_reliability(set, tau);
    r.a_acc = abstention_accuracy(set, tau);
    const auto ra = reliable_accuracy(set, tau);
    const auto ap = abstention_precision(set, tau);
    r.r_acc = ra.value;
    r.r_acc_degenerate = ra.degenerate;
    r.a_pre = ap.value;
    r.a_pre_degenerate = ap.degenerate;
    r.answered = static_cast<std::size_t>(
        std::count_if(set.scores.begin(), set.scores.end(), [tau](double s) { return s >= tau; }));
    r.abstained = set.size() - r.answered;
    return r;
}

double select_threshold(const ScoredSet& validation) {
    validation.check();
    const std::size_t n = validation.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return validation.scores[a] < validation.scores[b]; });

    // Sweeping τ upward moves whole groups of tied scores from "answered" to
    // "abstained"; each move changes the A-Acc numerator by Σ(1 − 2y).
    double correct = std::accumulate(validation.labels.begin(), validation.labels.end(), 0.0);  // τ = 0
    double best_tau = 0.0;
    double best = correct;
    std::size_t i = 0;
    while (i < n) {
        const double s = validation.scores[order[i]];
        std::size_t j = i;
        while (j < n && validation.scores[order[j]] == s) {
            correct += 1.0 - 2.0 * validation.labels[order[j]];
            ++j;
        }
        double tau;
        if (j < n) {
            tau = 0.5 * (s + validation.scores[order[j]]);
        } else {
            if (s >= 1.0) break;  // cannot abstain on a score of 1 with τ <= 1
            tau = 1.0;
        }
        if (correct > best + 1e-12) {
            best = correct;
            best_tau = tau;
        }
        i = j;
    }
    return best_tau;
}

MetricReport evaluate_method(const ScoredSet& validation, const ScoredSet& test, ThresholdPolicy policy,
                             double fixed_tau) {
    const double tau = policy == ThresholdPolicy::Fixed ? fixed_tau : select_threshold(validation);
    return compute_metrics(test, tau);
}

}  // namespace abstain
