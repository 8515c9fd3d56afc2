#include "abstain/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "abstain/error.hpp"

namespace abstain {

std::string method_id(Method m) {
    switch (m) {
        case Method::TokenProbability: return "token_prob";
        case Method::VerbalizedConfidence: return "verbalized";
        case Method::SelfConsistency: return "self_consistency";
        case Method::PromptToAbstain: return "prompt_abstain";
        case Method::VlmJudge: return "vlm_judge";
        case Method::RTuning: return "rtuning";
        case Method::Svar: return "svar";
        case Method::ContextualLens: return "context_lens";
    }
    return "?";
}

std::string method_label(Method m) {
    switch (m) {
        case Method::TokenProbability: return "Token Prob.";
        case Method::VerbalizedConfidence: return "Ask for Calib.";
        case Method::SelfConsistency: return "Self Consist.";
        case Method::PromptToAbstain: return "Prompt to Abs.";
        case Method::VlmJudge: return "VLM Judge";
        case Method::RTuning: return "R-Tuning";
        case Method::Svar: return "SVAR";
        case Method::ContextualLens: return "Context Lens";
    }
    return "?";
}

Method method_from_id(const std::string& id) {
    for (Method m : kAllMethods)
        if (method_id(m) == id) return m;
    throw std::invalid_argument("unknown baseline method '" + id + "'");
}

double token_probability(std::span<const double> probs) {
    if (probs.empty()) throw std::invalid_argument("token_probability: empty probability list");
    double sum_log = 0.0;
    for (double p : probs) {
        if (!(p > 0.0 && p <= 1.0)) throw std::invalid_argument("token_probability: probability outside (0, 1]");
        sum_log += std::log(p);
    }
    return std::exp(sum_log / static_cast<double>(probs.size()));
}

ConfidenceScore verbalized_confidence(int rating) {
    if (rating < 1 || rating > 5) return {0.0, Method::VerbalizedConfidence, true};
    return {(rating - 1) / 4.0, Method::VerbalizedConfidence, false};
}

namespace {

std::u32string decode_utf8(std::string_view s) {
    std::u32string out;
    out.reserve(s.size());
    std::size_t i = 0;
    while (i < s.size()) {
        const auto c = static_cast<unsigned char>(s[i]);
        int len = c < 0x80 ? 1 : (c >> 5) == 0x6 ? 2 : (c >> 4) == 0xe ? 3 : (c >> 3) == 0x1e ? 4 : 0;
        if (len == 0 || i + static_cast<std::size_t>(len) > s.size()) {
            out.push_back(0xfffd);
            ++i;
            continue;
        }
        char32_t cp = len == 1 ? c : len == 2 ? (c & 0x1f) : len == 3 ? (c & 0x0f) : (c & 0x07);
        bool ok = true;
        for (int k = 1; k < len; ++k) {
            const auto cc = static_cast<unsigned char>(s[i + static_cast<std::size_t>(k)]);
            if ((cc >> 6) != 0x2) {
                ok = false;
                break;
            }
            cp = (cp << 6) | (cc & 0x3f);
        }
        if (!ok) {
            out.push_back(0xfffd);
            ++i;
            continue;
        }
        out.push_back(cp);
        i += static_cast<std::size_t>(len);
    }
    return out;
}

std::size_t levenshtein_cp(const std::u32string& a, const std::u32string& b) {
    if (a.size() < b.size()) return levenshtein_cp(b, a);
    std::vector<std::size_t> row(b.size() + 1);
    for (std::size_t j = 0; j <= b.size(); ++j) row[j] = j;
    for (std::size_t i = 1; i <= a.size(); ++i) {
        std::size_t diag = row[0];
        row[0] = i;
        for (std::size_t j = 1; j <= b.size(); ++j) {
            const std::size_t up = row[j];
            row[j] = std::min({row[j] + 1, row[j - 1] + 1, diag + (a[i - 1] == b[j - 1] ? 0 : 1)});
            diag = up;
        }
    }
    return row[b.size()];
}

bool is_word_char(char32_t c) {
    return (c >= U'a' && c <= U'z') || (c >= U'A' && c <= U'Z') || (c >= U'0' && c <= U'9') || c == U'_' ||
           c >= 0x80;
}

/// Whole-phrase search: the match may not be glued to a word character on either side.
bool contains_phrase(const std::u32string& text, const std::u32string& phrase) {
    for (auto pos = text.find(phrase); pos != std::u32string::npos; pos = text.find(phrase, pos + 1)) {
        const bool left_ok = pos == 0 || !is_word_char(text[pos - 1]);
        const auto end = pos + phrase.size();
        const bool right_ok = end == text.size() || !is_word_char(text[end]);
        if (left_ok && right_ok) return true;
    }
    return false;
}

}  // namespace

std::size_t levenshtein(std::string_view a, std::string_view b) { return levenshtein_cp(decode_utf8(a), decode_utf8(b)); }

double character_accuracy(std::string_view a, std::string_view b) {
    const auto ua = decode_utf8(a), ub = decode_utf8(b);
    const std::size_t longest = std::max(ua.size(), ub.size());
    if (longest == 0) return 1.0;
    return 1.0 - static_cast<double>(levenshtein_cp(ua, ub)) / static_cast<double>(longest);
}

double self_consistency(std::string_view answer, std::span<const std::string> samples) {
    if (samples.empty()) throw std::invalid_argument("self_consistency: no sampled answers");
    double sum = 0.0;
    for (const auto& s : samples) sum += character_accuracy(answer, s);
    return sum / static_cast<double>(samples.size());
}

std::u32string normalize_phrase_text(std::string_view utf8) {
    std::u32string t = decode_utf8(utf8);
    for (auto& c : t) {
        switch (c) {
            case 0x2018: case 0x2019: case 0x201b: case 0x02bc: case 0x2032: case 0xff07: case 0x0060: case 0x00b4:
                c = U'\'';
                break;
            default:
                if (c >= U'A' && c <= U'Z') c = c - U'A' + U'a';
        }
    }
    return t;
}

double prompt_to_abstain(std::string_view answer_text) {
    return contains_phrase(normalize_phrase_text(answer_text), U"i don't know") ? 0.0 : 1.0;
}

ConfidenceScore vlm_judge(std::optional<double> p_true, std::optional<double> p_false) {
    if (!p_true || !p_false) return {0.0, Method::VlmJudge, true};
    return {*p_true > *p_false ? 1.0 : 0.0, Method::VlmJudge, false};
}

ConfidenceScore rtuning_indicator(std::string_view answer_text) {
    const auto t = normalize_phrase_text(answer_text);
    if (contains_phrase(t, U"i am sure")) return {1.0, Method::RTuning, false};
    return {0.0, Method::RTuning, !contains_phrase(t, U"i am unsure")};
}

LayerRange LayerRange::middle_half(int num_layers) {
    if (num_layers < 1) throw std::invalid_argument("need at least one layer");
    int start = std::max(1, (num_layers + 3) / 4);
    int end = (3 * num_layers) / 4;
    if (end < start) end = start;
    return {start, end};
}

double svar_raw(const RowMatrixXf& evidence, LayerRange range) {
    if (range.start < 1 || range.start > range.end || range.end > evidence.rows())
        throw std::invalid_argument("svar: invalid layer range [" + std::to_string(range.start) + ", " +
                                    std::to_string(range.end) + "] for " + std::to_string(evidence.rows()) +
                                    " layers");
    double s = 0.0;
    for (int l = range.start; l <= range.end; ++l) s += evidence.row(l - 1).cast<double>().mean();
    return s;
}

std::optional<double> contextual_lens_cosine(const RowMatrixXf& image_hidden, const RowMatrixXf& answer_hidden) {
    const Eigen::Index L = answer_hidden.rows(), D = answer_hidden.cols();
    if (image_hidden.cols() != L * D)
        throw std::invalid_argument("contextual_lens: image hidden width must be L*D");
    std::optional<double> best;
    for (Eigen::Index l = 0; l < L; ++l) {
        const Eigen::VectorXd a = answer_hidden.row(l).cast<double>().transpose();
        const double an = a.norm();
        if (an == 0.0) continue;
        for (Eigen::Index i = 0; i < image_hidden.rows(); ++i) {
            const Eigen::VectorXd h = image_hidden.row(i).segment(l * D, D).cast<double>().transpose();
            const double hn = h.norm();
            if (hn == 0.0) continue;
            const double c = std::clamp(h.dot(a) / (hn * an), -1.0, 1.0);
            if (!best || c > *best) best = c;
        }
    }
    return best;
}

ConfidenceScore contextual_lens(const RowMatrixXf& image_hidden, const RowMatrixXf& answer_hidden) {
    auto c = contextual_lens_cosine(image_hidden, answer_hidden);
    if (!c) return {0.0, Method::ContextualLens, true};
    return {(*c + 1.0) / 2.0, Method::ContextualLens, false};
}

// ---------------------------------------------------------------------------

MethodScores score_method(const DumpReader& dump, Method method, std::span<const std::size_t> indices,
                          const BaselineOptions& options) {
    const auto& m = dump.manifest();
    MethodScores out;
    out.method = method;
    out.scores.assign(indices.size(), 0.0);
    out.degenerate.assign(indices.size(), false);

    if (method == Method::Svar && !m.has_svar_evidence) return out;
    if (method == Method::ContextualLens && !(m.has_image_hidden && m.has_hidden)) return out;
    const LayerRange svar_range = options.svar_layers.value_or(LayerRange::middle_half(m.num_layers));

    std::size_t with_evidence = 0;
    for (std::size_t k = 0; k < indices.size(); ++k) {
        const auto& s = m.samples.at(indices[k]);
        const auto& e = s.evidence;
        std::optional<ConfidenceScore> cs;
        switch (method) {
            case Method::TokenProbability:
                if (!e.token_probs.empty()) {
                    bool valid = std::all_of(e.token_probs.begin(), e.token_probs.end(),
                                             [](double p) { return p > 0.0 && p <= 1.0; });
                    cs = valid ? ConfidenceScore{token_probability(e.token_probs), method, false}
                               : ConfidenceScore{0.0, method, true};
                }
                break;
            case Method::VerbalizedConfidence:
                if (e.verbalized_rating) cs = verbalized_confidence(*e.verbalized_rating);
                break;
            case Method::SelfConsistency:
                if (!e.sampled_answers.empty())
                    cs = ConfidenceScore{self_consistency(s.answer_text, e.sampled_answers), method, false};
                break;
            case Method::PromptToAbstain:
                if (!s.answer_text.empty()) cs = ConfidenceScore{prompt_to_abstain(s.answer_text), method, false};
                break;
            case Method::VlmJudge:
                if (e.judge_p_true && e.judge_p_false) cs = vlm_judge(e.judge_p_true, e.judge_p_false);
                break;
            case Method::RTuning:
                if (e.rtuning_suffix_present) cs = ConfidenceScore{*e.rtuning_suffix_present ? 1.0 : 0.0, method, false};
                break;
            case Method::Svar: {
                auto r = dump.record(indices[k], static_cast<SectionMask>(Section::SvarEvidence));
                cs = ConfidenceScore{svar_raw(*r.svar_evidence, svar_range), method, false};
                break;
            }
            case Method::ContextualLens: {
                auto r = dump.record(indices[k], Section::Hidden | Section::ImageHidden);
                cs = contextual_lens(*r.image_hidden, *r.hidden);
                break;
            }
        }
        if (cs) {
            ++with_evidence;
            out.scores[k] = cs->value;
            out.degenerate[k] = cs->degenerate;
        } else {
            out.degenerate[k] = true;
        }
        if (out.degenerate[k]) ++out.degenerate_count;
    }
    out.available = with_evidence > 0;
    return out;
}

void minmax_scale(std::vector<double>& reference, std::vector<double>& other) {
    if (reference.empty()) return;
    const auto [lo_it, hi_it] = std::minmax_element(reference.begin(), reference.end());
    const double lo = *lo_it, hi = *hi_it;
    auto scale = [&](double x) {
        if (hi == lo) return x == lo ? 0.5 : (x < lo ? 0.0 : 1.0);
        return std::clamp((x - lo) / (hi - lo), 0.0, 1.0);
    };
    for (auto& x : reference) x = scale(x);
    for (auto& x : other) x = scale(x);
}

BaselineResult evaluate_baseline(const DumpReader& dump, Method method, const SplitAssignment& split,
                                 const BaselineOptions& options) {
    BaselineResult out;
    out.method = method;
    auto val = score_method(dump, method, split.val, options);
    auto test = score_method(dump, method, split.test, options);
    out.degenerate_count = val.degenerate_count + test.degenerate_count;
    if (!val.available && !test.available) return out;
    if (method == Method::Svar) minmax_scale(val.scores, test.scores);
    auto labels = [&](std::span<const std::size_t> idx) {
        std::vector<double> y;
        y.reserve(idx.size());
        for (auto i : idx) y.push_back(dump.manifest().samples[i].label);
        return y;
    };
    const ScoredSet v{std::move(val.scores), labels(split.val)};
    const ScoredSet t{std::move(test.scores), labels(split.test)};
    out.report = evaluate_method(v, t, ThresholdPolicy::ValidationSelected);
    return out;
}

}  // namespace abstain
