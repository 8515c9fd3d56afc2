#pragma once

// Deliberately naive reference implementations used to cross-check the
// library. Nothing here calls into abstain_lab.

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <numeric>
#include <string>
#include <vector>

namespace oracle {

inline double er(const std::vector<double>& s, const std::vector<double>& y, double tau) {
    double sum = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i)
        if (s[i] >= tau) sum += 2.0 * y[i] - 1.0;
    return sum / static_cast<double>(s.size());
}

inline double a_acc(const std::vector<double>& s, const std::vector<double>& y, double tau) {
    double sum = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i) sum += s[i] < tau ? 1.0 - y[i] : y[i];
    return sum / static_cast<double>(s.size());
}

inline double r_acc(const std::vector<double>& s, const std::vector<double>& y, double tau) {
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i)
        if (s[i] >= tau) {
            num += y[i];
            den += 1.0;
        }
    return den == 0.0 ? 1.0 : num / den;
}

inline double a_pre(const std::vector<double>& s, const std::vector<double>& y, double tau) {
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i)
        if (s[i] < tau) {
            num += 1.0 - y[i];
            den += 1.0;
        }
    return den == 0.0 ? 1.0 : num / den;
}

/// Best A-Acc over τ ∈ {0, 0.001, ..., 1}.
inline double grid_best_a_acc(const std::vector<double>& s, const std::vector<double>& y) {
    double best = -1.0;
    for (int k = 0; k <= 1000; ++k) best = std::max(best, a_acc(s, y, k / 1000.0));
    return best;
}

/// Textbook O(|a||b|) edit distance on bytes (callers pass ASCII).
inline std::size_t levenshtein(const std::string& a, const std::string& b) {
    std::vector<std::vector<std::size_t>> d(a.size() + 1, std::vector<std::size_t>(b.size() + 1));
    for (std::size_t i = 0; i <= a.size(); ++i) d[i][0] = i;
    for (std::size_t j = 0; j <= b.size(); ++j) d[0][j] = j;
    for (std::size_t i = 1; i <= a.size(); ++i)
        for (std::size_t j = 1; j <= b.size(); ++j)
            d[i][j] = std::min({d[i - 1][j] + 1, d[i][j - 1] + 1, d[i - 1][j - 1] + (a[i - 1] == b[j - 1] ? 0u : 1u)});
    return d[a.size()][b.size()];
}

inline double character_accuracy(const std::string& a, const std::string& b) {
    const auto m = std::max(a.size(), b.size());
    return m == 0 ? 1.0 : 1.0 - static_cast<double>(levenshtein(a, b)) / static_cast<double>(m);
}

inline double normal_cdf(double x) { return 0.5 * (1.0 + std::erf(x / std::sqrt(2.0))); }

/// Row-major weights W (out x in), plain loops.
inline std::vector<double> affine(const std::vector<std::vector<double>>& W, const std::vector<double>& b,
                                  const std::vector<double>& x) {
    std::vector<double> out(b);
    for (std::size_t r = 0; r < W.size(); ++r)
        for (std::size_t c = 0; c < x.size(); ++c) out[r] += W[r][c] * x[c];
    return out;
}

inline double bce(double s, double y) { return -(y * std::log(s) + (1.0 - y) * std::log(1.0 - s)); }

}  // namespace oracle

namespace testutil {

/// Fresh scratch directory under the build tree (or /tmp).
inline std::filesystem::path scratch(const std::string& name) {
    const char* root = std::getenv("ABSTAIN_TEST_TMP");
    std::filesystem::path p = std::filesystem::path(root ? root : "/tmp/abstain_lab_tests") / name;
    std::filesystem::remove_all(p);
    std::filesystem::create_directories(p);
    return p;
}

}  // namespace testutil
