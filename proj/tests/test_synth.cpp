#include <doctest.h>

#include <fstream>

#include "abstain/baselines.hpp"
#include "abstain/synth.hpp"
#include "oracles.hpp"

using namespace abstain;
namespace fs = std::filesystem;

namespace {

SyntheticConfig hidden_config(int n, int L, int D, std::vector<double> rho, double delta, std::uint64_t seed) {
    SyntheticConfig c;
    c.num_samples = n;
    c.num_layers = L;
    c.hidden_dim = D;
    c.rho = std::move(rho);
    c.delta = delta;
    c.seed = seed;
    return c;
}

std::string bytes_of(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST_CASE("closed-form Bayes accuracy") {
    CHECK(bayes_accuracy(hidden_config(10, 3, 4, {1, 1, 1}, 0.0, 0)) == 0.5);
    const auto one_hot = hidden_config(10, 12, 4, SyntheticConfig::one_hot(12, 5), 2.563, 0);
    CHECK(bayes_accuracy(one_hot) == doctest::Approx(0.8999909500339163).epsilon(1e-12));
    CHECK(bayes_accuracy(hidden_config(10, 12, 4, SyntheticConfig::one_hot(12, 5), 2.5631031310892007, 0)) ==
          doctest::Approx(0.9).epsilon(1e-12));
    CHECK(bayes_accuracy_layer(one_hot, 5) == doctest::Approx(0.8999909500339163).epsilon(1e-12));
    CHECK(bayes_accuracy_layer(one_hot, 4) == 0.5);
    // two independent signal layers, each with effective separation 1
    CHECK(bayes_accuracy(hidden_config(10, 2, 4, {1, 1}, 1.0, 0)) ==
          doctest::Approx(0.7602499389065234).epsilon(1e-12));
    CHECK(normal_cdf(0.0) == 0.5);
    CHECK(normal_cdf(1.3) == doctest::Approx(oracle::normal_cdf(1.3)).epsilon(1e-14));

    auto noisy = one_hot;
    noisy.label_noise = 0.1;
    CHECK_THROWS_AS(bayes_accuracy(noisy), std::invalid_argument);

    auto skewed = hidden_config(10, 1, 4, {1}, 0.0, 0);
    skewed.base_rate = 0.8;
    CHECK(bayes_accuracy(skewed) == doctest::Approx(0.8));
    skewed.delta = 2.0;
    CHECK(bayes_accuracy(skewed) > 0.8);
    CHECK(bayes_accuracy(skewed) < normal_cdf(1.0) + 0.1);
}

TEST_CASE("brute-force likelihood classifier reaches the Bayes rate") {
    auto c = hidden_config(6000, 3, 16, {0.0, 1.0, 0.5}, 2.0, 31);
    c.evidence = EvidenceKinds::none();
    const auto data = generate(c);
    // recover u_ℓ as the normalized class-mean difference, then apply the
    // two-Gaussian likelihood rule on the known separation
    const std::size_t D = 16, L = 3;
    double correct = 0.0;
    std::vector<Eigen::VectorXd> mu1(L, Eigen::VectorXd::Zero(D)), mu0(L, Eigen::VectorXd::Zero(D));
    double n1 = 0, n0 = 0;
    for (std::size_t i = 0; i < 6000; ++i) {
        (data.correct[i] ? n1 : n0) += 1;
        for (std::size_t l = 0; l < L; ++l)
            for (std::size_t k = 0; k < D; ++k)
                (data.correct[i] ? mu1 : mu0)[l](static_cast<Eigen::Index>(k)) += data.sections.hidden[(i * L + l) * D + k];
    }
    std::vector<Eigen::VectorXd> dir(L);
    for (std::size_t l = 0; l < L; ++l) {
        const Eigen::VectorXd diff = mu1[l] / n1 - mu0[l] / n0;
        dir[l] = diff.normalized();
    }
    for (std::size_t i = 0; i < 6000; ++i) {
        double llr = 0.0;
        for (std::size_t l = 0; l < L; ++l) {
            const double s = c.rho[l] * c.delta;
            if (s == 0.0) continue;
            double proj = 0.0;
            for (std::size_t k = 0; k < D; ++k) proj += dir[l](static_cast<Eigen::Index>(k)) * data.sections.hidden[(i * L + l) * D + k];
            llr += s * proj - s * s / 2.0;
        }
        correct += (llr > 0.0) == (data.correct[i] == 1);
    }
    CHECK(std::abs(correct / 6000.0 - bayes_accuracy(c)) < 0.03);
}

TEST_CASE("generated dumps are valid and reproducible") {
    auto c = hidden_config(80, 4, 6, SyntheticConfig::triangle(4, 2, 2.0), 1.5, 3);
    c.attention = c.full_attention = c.image_hidden = true;
    const auto a = testutil::scratch("syn_a");
    const auto b = testutil::scratch("syn_b");
    write_dump(generate(c).manifest, generate(c).sections, a);
    const auto data = generate(c);
    write_dump(data.manifest, data.sections, b);
    const auto rep = validate_dump(a);
    CHECK(rep.ok());
    for (const auto& [method, missing] : rep.missing_evidence) CHECK_MESSAGE(missing == 0, method);
    for (const auto* f : {"manifest.json", "hidden.bin", "visattn.bin", "svar.bin", "attn_full.bin", "attn_full.idx",
                          "imghid.bin", "imghid.idx"})
        CHECK_MESSAGE(bytes_of(a / f) == bytes_of(b / f), f);

    const auto reader = read_dump(a);
    const auto back = synthetic_config_from_json(reader.manifest().producer);
    CHECK(to_json(back) == to_json(c));
    // per-token attention sums to one over tokens for every (layer, head)
    const auto r = reader.record(0);
    CHECK((r.full_attention->colwise().sum().array() - 1.0f).abs().maxCoeff() < 1e-5f);

    auto d = c;
    d.seed = 4;
    CHECK(generate(d).sections.hidden != data.sections.hidden);
}

TEST_CASE("evidence selection") {
    auto c = hidden_config(30, 2, 3, {1, 1}, 1.0, 5);
    c.evidence = EvidenceKinds::token_probs_only();
    const auto data = generate(c);
    for (const auto& s : data.manifest.samples) {
        CHECK(s.evidence.token_probs.size() == 3);
        CHECK(s.evidence.sampled_answers.empty());
        CHECK_FALSE(s.evidence.judge_p_true);
        CHECK(s.answer_text.empty());
    }
}

TEST_CASE("label noise flips about the requested fraction") {
    auto c = hidden_config(5000, 1, 2, {1}, 1.0, 6);
    c.label_noise = 0.2;
    c.evidence = EvidenceKinds::none();
    const auto data = generate(c);
    double flipped = 0;
    for (std::size_t i = 0; i < 5000; ++i) flipped += data.manifest.samples[i].label != data.correct[i];
    CHECK(std::abs(flipped / 5000.0 - 0.2) < 0.02);
}

TEST_CASE("config validation") {
    auto c = hidden_config(10, 3, 4, {1, 1}, 1.0, 0);
    CHECK_THROWS_AS(c.check(), std::invalid_argument);
    c.rho = {1, 1, 1.5};
    CHECK_THROWS_AS(c.check(), std::invalid_argument);
    c.rho = {1, 1, 1};
    c.delta = -1.0;
    CHECK_THROWS_AS(c.check(), std::invalid_argument);
    c.delta = 1.0;
    c.label_noise = 0.5;
    CHECK_THROWS_AS(c.check(), std::invalid_argument);
    c.label_noise = 0.0;
    c.base_rate = 1.0;
    CHECK_THROWS_AS(c.check(), std::invalid_argument);
    c.base_rate = 0.5;
    CHECK_NOTHROW(c.check());
    CHECK(SyntheticConfig::triangle(5, 3, 2.0) == std::vector<double>{0.0, 0.5, 1.0, 0.5, 0.0});
}

TEST_CASE("attention dumps drive SVAR") {
    const auto split_of = [](const DumpReader& r) { return split_dataset(r.manifest(), {}, 1); };
    BaselineOptions full;
    full.svar_layers = LayerRange::all(6);

    SyntheticConfig c = hidden_config(1500, 6, 4, std::vector<double>(6, 1.0), 0.0, 7);
    c.hidden = false;
    c.evidence = EvidenceKinds::none();
    c.attention_noise = 0.05;

    SUBCASE("separated means") {
        const auto dir = testutil::scratch("syn_svar_sep");
        generate_attention_dump(c, dir);
        const auto r = read_dump(dir);
        const auto res = evaluate_baseline(r, Method::Svar, split_of(r), full);
        REQUIRE(res.report);
        CHECK(res.report->a_acc >= 0.85);
    }
    SUBCASE("equal means carry no signal") {
        c.mu_hi = c.mu_lo = 0.45;
        const auto dir = testutil::scratch("syn_svar_null");
        generate_attention_dump(c, dir);
        const auto r = read_dump(dir);
        const auto res = evaluate_baseline(r, Method::Svar, split_of(r), full);
        REQUIRE(res.report);
        CHECK(std::abs(res.report->a_acc - 0.5) < 0.06);
    }
}
