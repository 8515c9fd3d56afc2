#pragma once

#include <random>
#include <string>

#include "abstain/repr_store.hpp"

namespace testutil {

struct RandomDump {
    abstain::DumpManifest manifest;
    abstain::TensorSections sections;
};

/// Every section populated with seeded values; attention entries lie in [0, 1].
inline RandomDump random_dump(int n, int L, int D, int H, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<float> z;
    std::uniform_real_distribution<float> u01(0.0f, 1.0f);
    std::uniform_int_distribution<int> tokens(3, 9);
    RandomDump d;
    auto& m = d.manifest;
    m.model_id = "test-model";
    m.dataset_id = "random-" + std::to_string(seed);
    m.num_samples = n;
    m.num_layers = L;
    m.hidden_dim = D;
    m.num_heads = H;
    m.has_hidden = m.has_visual_attention = m.has_svar_evidence = m.has_full_attention = m.has_image_hidden = true;
    for (int i = 0; i < n; ++i) {
        abstain::SampleMeta s;
        s.sample_id = "q" + std::to_string(i);
        s.answer_text = "answer " + std::to_string(i % 7);
        s.label = u01(rng);
        s.num_input_tokens = tokens(rng);
        s.visual_token_count = 2;
        s.evidence.token_probs = {0.5 + 0.4 * u01(rng), 0.9};
        m.samples.push_back(s);
    }
    auto& t = d.sections;
    t.hidden.resize(static_cast<std::size_t>(n * L * D));
    for (auto& v : t.hidden) v = z(rng);
    t.visual_attention.resize(static_cast<std::size_t>(n * L * H));
    for (auto& v : t.visual_attention) v = u01(rng);
    t.svar_evidence.resize(static_cast<std::size_t>(n * L * H));
    for (auto& v : t.svar_evidence) v = u01(rng);
    for (const auto& s : m.samples) {
        abstain::RowMatrixXf a(s.num_input_tokens, L * H);
        for (Eigen::Index k = 0; k < a.size(); ++k) a.data()[k] = u01(rng);
        t.full_attention.push_back(a);
        abstain::RowMatrixXf img(s.visual_token_count, L * D);
        for (Eigen::Index k = 0; k < img.size(); ++k) img.data()[k] = z(rng);
        t.image_hidden.push_back(img);
    }
    return d;
}

}  // namespace testutil
