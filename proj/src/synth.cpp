#include "abstain/synth.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>
#include <string>

#include "abstain/rng.hpp"

namespace abstain {

using json = nlohmann::json;

void SyntheticConfig::check() const {
    auto fail = [](const std::string& m) { throw std::invalid_argument("synthetic config: " + m); };
    if (num_samples < 1 || num_layers < 1 || hidden_dim < 1 || num_heads < 1) fail("dimensions must be positive");
    if (static_cast<int>(rho.size()) != num_layers)
        fail("rho has " + std::to_string(rho.size()) + " entries for " + std::to_string(num_layers) + " layers");
    for (double r : rho)
        if (!(r >= 0.0 && r <= 1.0)) fail("rho values must lie in [0, 1]");
    if (!(delta >= 0.0) || !std::isfinite(delta)) fail("delta must be finite and >= 0");
    if (!(label_noise >= 0.0 && label_noise < 0.5)) fail("label_noise must lie in [0, 0.5)");
    if (!(base_rate > 0.0 && base_rate < 1.0)) fail("base_rate must lie in (0, 1)");
    if (!(mu_hi >= 0.0 && mu_hi <= 1.0 && mu_lo >= 0.0 && mu_lo <= 1.0)) fail("attention means must lie in [0, 1]");
    if (!(attention_noise >= 0.0)) fail("attention_noise must be >= 0");
    if (visual_tokens < 1 || visual_tokens >= input_tokens) fail("need 1 <= visual_tokens < input_tokens");
    if (!hidden && !attention && !full_attention) fail("no tensor section requested");
    if (image_hidden && !hidden) fail("image_hidden requires hidden");
}

std::vector<double> SyntheticConfig::one_hot(int num_layers, int layer) {
    if (layer < 1 || layer > num_layers) throw std::out_of_range("one_hot layer out of range");
    std::vector<double> r(static_cast<std::size_t>(num_layers), 0.0);
    r[static_cast<std::size_t>(layer - 1)] = 1.0;
    return r;
}

std::vector<double> SyntheticConfig::triangle(int num_layers, int peak, double width) {
    if (width <= 0.0) throw std::invalid_argument("triangle width must be positive");
    std::vector<double> r(static_cast<std::size_t>(num_layers));
    for (int l = 1; l <= num_layers; ++l) r[static_cast<std::size_t>(l - 1)] = std::max(0.0, 1.0 - std::abs(l - peak) / width);
    return r;
}

json to_json(const SyntheticConfig& c) {
    const auto& e = c.evidence;
    return {{"generator", "abstain-lab synth"},
            {"num_samples", c.num_samples},
            {"num_layers", c.num_layers},
            {"hidden_dim", c.hidden_dim},
            {"num_heads", c.num_heads},
            {"rho", c.rho},
            {"delta", c.delta},
            {"label_noise", c.label_noise},
            {"base_rate", c.base_rate},
            {"seed", c.seed},
            {"direction_seed", c.direction_seed ? json(*c.direction_seed) : json(nullptr)},
            {"mu_hi", c.mu_hi},
            {"mu_lo", c.mu_lo},
            {"attention_noise", c.attention_noise},
            {"input_tokens", c.input_tokens},
            {"visual_tokens", c.visual_tokens},
            {"sections",
             {{"hidden", c.hidden},
              {"attention", c.attention},
              {"full_attention", c.full_attention},
              {"image_hidden", c.image_hidden}}},
            {"evidence",
             {{"token_probs", e.token_probs},
              {"sampled_answers", e.sampled_answers},
              {"verbalized", e.verbalized},
              {"judge", e.judge},
              {"rtuning", e.rtuning},
              {"answer_text", e.answer_text}}}};
}

SyntheticConfig synthetic_config_from_json(const json& j) {
    SyntheticConfig c;
    c.num_samples = j.value("num_samples", c.num_samples);
    c.num_layers = j.value("num_layers", c.num_layers);
    c.hidden_dim = j.value("hidden_dim", c.hidden_dim);
    c.num_heads = j.value("num_heads", c.num_heads);
    c.rho = j.value("rho", std::vector<double>{});
    c.delta = j.value("delta", c.delta);
    c.label_noise = j.value("label_noise", c.label_noise);
    c.base_rate = j.value("base_rate", c.base_rate);
    c.seed = j.value("seed", c.seed);
    if (j.contains("direction_seed") && !j.at("direction_seed").is_null())
        c.direction_seed = j.at("direction_seed").get<std::uint64_t>();
    c.mu_hi = j.value("mu_hi", c.mu_hi);
    c.mu_lo = j.value("mu_lo", c.mu_lo);
    c.attention_noise = j.value("attention_noise", c.attention_noise);
    c.input_tokens = j.value("input_tokens", c.input_tokens);
    c.visual_tokens = j.value("visual_tokens", c.visual_tokens);
    if (j.contains("sections")) {
        const auto& s = j.at("sections");
        c.hidden = s.value("hidden", c.hidden);
        c.attention = s.value("attention", c.attention);
        c.full_attention = s.value("full_attention", c.full_attention);
        c.image_hidden = s.value("image_hidden", c.image_hidden);
    }
    if (j.contains("evidence")) {
        const auto& e = j.at("evidence");
        auto& k = c.evidence;
        k.token_probs = e.value("token_probs", k.token_probs);
        k.sampled_answers = e.value("sampled_answers", k.sampled_answers);
        k.verbalized = e.value("verbalized", k.verbalized);
        k.judge = e.value("judge", k.judge);
        k.rtuning = e.value("rtuning", k.rtuning);
        k.answer_text = e.value("answer_text", k.answer_text);
    }
    return c;
}

namespace {

double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

EvidenceBundle make_evidence(const EvidenceKinds& kinds, int c, const std::string& answer, Rng& rng) {
    std::normal_distribution<double> z;
    std::uniform_real_distribution<double> u;
    const double sign = c ? 1.0 : -1.0;
    EvidenceBundle e;
    if (kinds.token_probs)
        for (int t = 0; t < 3; ++t) e.token_probs.push_back(logistic(1.0 + sign + z(rng)));
    if (kinds.sampled_answers)
        for (int k = 0; k < 5; ++k) {
            const bool agree = u(rng) < (c ? 0.8 : 0.35);
            e.sampled_answers.push_back(agree ? answer : "guess " + std::to_string(std::uniform_int_distribution<int>(0, 99)(rng)));
        }
    if (kinds.verbalized) e.verbalized_rating = c ? std::uniform_int_distribution<int>(3, 5)(rng) : std::uniform_int_distribution<int>(1, 4)(rng);
    if (kinds.judge) {
        const double p = logistic(sign + z(rng));
        e.judge_p_true = p;
        e.judge_p_false = 1.0 - p;
    }
    if (kinds.rtuning) e.rtuning_suffix_present = u(rng) < (c ? 0.8 : 0.3);
    return e;
}

}  // namespace

SyntheticData generate(const SyntheticConfig& config) {
    config.check();
    const int N = config.num_samples, L = config.num_layers, D = config.hidden_dim, H = config.num_heads;
    const int n = config.input_tokens, V = config.visual_tokens;
    const auto idx = [](auto v) { return static_cast<std::size_t>(v); };

    SyntheticData out;
    auto& m = out.manifest;
    m.model_id = "synthetic";
    m.dataset_id = "synth-" + std::to_string(config.seed);
    m.num_samples = N;
    m.num_layers = L;
    m.hidden_dim = D;
    m.num_heads = H;
    m.has_hidden = config.hidden;
    m.has_visual_attention = config.attention;
    m.has_svar_evidence = config.attention;
    m.has_full_attention = config.full_attention;
    m.has_image_hidden = config.image_hidden;
    m.producer = to_json(config);

    std::normal_distribution<double> z;
    std::uniform_real_distribution<double> u;

    // One fixed unit direction per layer.
    Rng dir_rng(derive_seed(config.direction_seed.value_or(config.seed), "direction"));
    std::vector<Eigen::VectorXd> dirs;
    for (int l = 0; l < L; ++l) {
        Eigen::VectorXd d(D);
        do {
            for (int k = 0; k < D; ++k) d(k) = z(dir_rng);
        } while (d.norm() < 1e-12);
        dirs.push_back(d.normalized());
    }

    Rng label_rng(derive_seed(config.seed, "labels"));
    out.correct.resize(idx(N));
    for (int i = 0; i < N; ++i) {
        const int c = u(label_rng) < config.base_rate ? 1 : 0;
        out.correct[idx(i)] = c;
        SampleMeta s;
        s.sample_id = "s" + std::to_string(i);
        s.label = (u(label_rng) < config.label_noise) ? 1.0 - c : static_cast<double>(c);
        s.num_input_tokens = n;
        s.visual_token_count = V;
        m.samples.push_back(std::move(s));
    }

    Rng ev_rng(derive_seed(config.seed, "evidence"));
    for (int i = 0; i < N; ++i) {
        auto& s = m.samples[idx(i)];
        const int c = out.correct[idx(i)];
        std::string answer = "answer " + std::to_string(i);
        if (config.evidence.answer_text) {
            // Some wrong answers come back as an explicit refusal.
            s.answer_text = (!c && u(ev_rng) < 0.4) ? "I don't know" : answer;
        }
        s.evidence = make_evidence(config.evidence, c, answer, ev_rng);
    }

    auto& t = out.sections;
    if (config.hidden) {
        Rng rng(derive_seed(config.seed, "hidden"));
        t.hidden.resize(idx(N) * idx(L) * idx(D));
        for (int i = 0; i < N; ++i)
            for (int l = 0; l < L; ++l) {
                const double shift = config.rho[idx(l)] * config.delta * out.correct[idx(i)];
                float* row = t.hidden.data() + (idx(i) * idx(L) + idx(l)) * idx(D);
                for (int k = 0; k < D; ++k) row[k] = static_cast<float>(shift * dirs[idx(l)](k) + z(rng));
            }
    }
    if (config.image_hidden) {
        // Image tokens of correct answers lean toward the answer's own state.
        Rng rng(derive_seed(config.seed, "image"));
        for (int i = 0; i < N; ++i) {
            RowMatrixXf img(V, L * D);
            const double lean = out.correct[idx(i)] ? 1.0 : 0.0;
            for (int v = 0; v < V; ++v)
                for (int l = 0; l < L; ++l)
                    for (int k = 0; k < D; ++k) {
                        const float h = t.hidden[(idx(i) * idx(L) + idx(l)) * idx(D) + idx(k)];
                        img(v, l * D + k) = static_cast<float>(lean * h + z(rng));
                    }
            t.image_hidden.push_back(std::move(img));
        }
    }
    if (config.attention || config.full_attention) {
        Rng rng(derive_seed(config.seed, "attention"));
        std::vector<float> mass(idx(N) * idx(L) * idx(H));
        for (int i = 0; i < N; ++i) {
            const double mu = out.correct[idx(i)] ? config.mu_hi : config.mu_lo;
            for (int l = 0; l < L; ++l)
                for (int h = 0; h < H; ++h) {
                    const double v = config.rho[idx(l)] * mu + config.attention_noise * z(rng);
                    mass[(idx(i) * idx(L) + idx(l)) * idx(H) + idx(h)] = static_cast<float>(std::clamp(v, 0.0, 1.0));
                }
        }
        if (config.attention) {
            t.visual_attention = mass;
            t.svar_evidence = mass;
        }
        if (config.full_attention) {
            for (int i = 0; i < N; ++i) {
                RowMatrixXf a(n, L * H);
                for (int col = 0; col < L * H; ++col) {
                    const double mv = mass[idx(i) * idx(L) * idx(H) + idx(col)];
                    for (int tok = 0; tok < n; ++tok)
                        a(tok, col) = static_cast<float>(tok < V ? mv / V : (1.0 - mv) / (n - V));
                }
                t.full_attention.push_back(std::move(a));
            }
        }
    }
    return out;
}

DumpManifest generate_hidden_dump(SyntheticConfig config, const std::filesystem::path& destination) {
    config.hidden = true;
    auto data = generate(config);
    write_dump(data.manifest, data.sections, destination);
    return data.manifest;
}

DumpManifest generate_attention_dump(SyntheticConfig config, const std::filesystem::path& destination) {
    config.attention = true;
    auto data = generate(config);
    write_dump(data.manifest, data.sections, destination);
    return data.manifest;
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

double gaussian_bayes_accuracy(double separation, double base_rate) {
    if (!(base_rate > 0.0 && base_rate < 1.0)) throw std::invalid_argument("base_rate must lie in (0, 1)");
    const double prior_best = std::max(base_rate, 1.0 - base_rate);
    if (separation <= 0.0) return prior_best;
    const double t = separation / 2.0 + std::log((1.0 - base_rate) / base_rate) / separation;
    return base_rate * normal_cdf(separation - t) + (1.0 - base_rate) * normal_cdf(t);
}

double bayes_accuracy(const SyntheticConfig& config) {
    config.check();
    if (config.label_noise > 0.0) throw std::invalid_argument("bayes_accuracy: label noise must be zero");
    double sq = 0.0;
    for (double r : config.rho) sq += r * r;
    return gaussian_bayes_accuracy(std::sqrt(sq) * config.delta, config.base_rate);
}

double bayes_accuracy_layer(const SyntheticConfig& config, int layer) {
    config.check();
    if (config.label_noise > 0.0) throw std::invalid_argument("bayes_accuracy: label noise must be zero");
    if (layer < 1 || layer > config.num_layers) throw std::out_of_range("layer out of range");
    return gaussian_bayes_accuracy(config.rho[static_cast<std::size_t>(layer - 1)] * config.delta, config.base_rate);
}

}  // namespace abstain
