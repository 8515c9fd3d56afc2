#include <doctest.h>

#include "abstain/error.hpp"
#include "abstain/features.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"

using namespace abstain;

namespace {

SampleRecord hidden_record() {
    SampleRecord r;
    RowMatrixXf h(2, 3);
    h << 1, 2, 3, 4, 5, 6;
    r.hidden = h;
    return r;
}

}  // namespace

TEST_CASE("concat_hidden orders layers ascending") {
    const auto r = hidden_record();
    const Eigen::VectorXf v = concat_hidden(r);
    CHECK(v.size() == 6);
    for (int k = 0; k < 6; ++k) CHECK(v(k) == static_cast<float>(k + 1));
    SampleRecord z;
    z.hidden = RowMatrixXf::Zero(4, 5);
    CHECK(concat_hidden(z) == Eigen::VectorXf::Zero(20));
}

TEST_CASE("single-layer features") {
    const auto r = hidden_record();
    CHECK(single_layer_features(r, 1, Channel::Hidden) == Eigen::Vector3f(1, 2, 3));
    CHECK(single_layer_features(r, 2, Channel::Hidden) == Eigen::Vector3f(4, 5, 6));
    CHECK_THROWS_AS(single_layer_features(r, 0, Channel::Hidden), std::out_of_range);
    CHECK_THROWS_AS(single_layer_features(r, 3, Channel::Hidden), std::out_of_range);
    CHECK_THROWS_AS(single_layer_features(r, 1, Channel::Attention), MissingSectionError);

    SampleRecord a;
    RowMatrixXf att(3, 2);
    att << 0.1f, 0.2f, 0.3f, 0.4f, 0.5f, 0.6f;
    a.visual_attention = att;
    CHECK(single_layer_features(a, 3, Channel::Attention) == Eigen::Vector2f(0.5f, 0.6f));
}

TEST_CASE("visual attention features") {
    SampleRecord r;
    r.visual_attention = RowMatrixXf(1, 2);
    *r.visual_attention << 0.3f, 0.5f;
    CHECK(visual_attention_features(r) == Eigen::Vector2f(0.3f, 0.5f));

    const int n = 8;
    r.visual_attention = RowMatrixXf::Constant(3, 4, 1.0f / n);
    CHECK(visual_attention_features(r) == Eigen::VectorXf::Constant(12, 1.0f / n));

    // producer-side averaging over the visual positions {1, 2} of four tokens
    const std::vector<double> per_token = {0.1, 0.2, 0.3, 0.4};
    CHECK((per_token[0] + per_token[1]) / 2.0 == doctest::Approx(0.15));
    CHECK_THROWS_AS(visual_attention_features(hidden_record()), MissingSectionError);
}

TEST_CASE("concat attention tokens") {
    SampleRecord r;
    RowMatrixXf a(2, 2);
    a << 0.6f, 0.2f, 0.4f, 0.8f;  // (token, layer) with H = 1
    r.full_attention = a;
    const auto t = concat_attention_tokens(r);
    CHECK(t.row(0) == Eigen::RowVector2f(0.6f, 0.2f));
    CHECK(t.row(1) == Eigen::RowVector2f(0.4f, 0.8f));

    r.full_attention = RowMatrixXf(1, 6);
    *r.full_attention << 1, 2, 3, 4, 5, 6;
    CHECK(concat_attention_tokens(r).rows() == 1);
    CHECK(concat_attention_tokens(r) == *r.full_attention);
    CHECK_THROWS_AS(concat_attention_tokens(hidden_record()), MissingSectionError);
}

TEST_CASE("concat features are the ordered concatenation of layer slices") {
    const auto d = testutil::random_dump(6, 4, 5, 3, 77);
    const auto dir = testutil::scratch("feat_compose");
    write_dump(d.manifest, d.sections, dir);
    const auto reader = read_dump(dir);
    for (std::size_t i = 0; i < reader.size(); ++i) {
        const auto r = reader.record(i);
        const RowMatrixXf before = *r.hidden;
        const auto h = concat_hidden(r);
        const auto a = visual_attention_features(r);
        REQUIRE(h.size() == 20);
        REQUIRE(a.size() == 12);
        for (int l = 1; l <= 4; ++l) {
            CHECK(h.segment((l - 1) * 5, 5) == single_layer_features(r, l, Channel::Hidden));
            CHECK(a.segment((l - 1) * 3, 3) == single_layer_features(r, l, Channel::Attention));
            for (int k = 0; k < 5; ++k) CHECK(h((l - 1) * 5 + k) == d.sections.hidden[(i * 4 + (l - 1)) * 5 + k]);
        }
        CHECK(*r.hidden == before);
        CHECK(concat_attention_tokens(r).cols() == 12);
    }
}

TEST_CASE("FeatureSpec parsing, checks and dims") {
    for (const auto& s : {FeatureSpec::concat_hidden(), FeatureSpec::concat_attention(), FeatureSpec::visual_attention(),
                          FeatureSpec::single_layer(5, Channel::Hidden), FeatureSpec::single_layer(2, Channel::Attention)})
        CHECK(FeatureSpec::parse(s.to_string()) == s);
    CHECK(FeatureSpec::parse("single_layer_hidden:5") == FeatureSpec::single_layer(5, Channel::Hidden));
    CHECK_THROWS_AS(FeatureSpec::parse("bogus"), std::invalid_argument);

    DumpManifest m;
    m.num_layers = 4;
    m.hidden_dim = 5;
    m.num_heads = 3;
    m.has_hidden = true;
    CHECK(FeatureSpec::concat_hidden().dim(m) == 20);
    CHECK(FeatureSpec::visual_attention().dim(m) == 12);
    CHECK(FeatureSpec::concat_attention().dim(m) == 12);
    CHECK(FeatureSpec::single_layer(2, Channel::Hidden).dim(m) == 5);
    CHECK(FeatureSpec::single_layer(2, Channel::Attention).dim(m) == 3);
    CHECK_NOTHROW(FeatureSpec::concat_hidden().check(m));
    CHECK_THROWS_AS(FeatureSpec::visual_attention().check(m), MissingSectionError);
    CHECK_THROWS_AS(FeatureSpec::single_layer(5, Channel::Hidden).check(m), std::out_of_range);
    CHECK(FeatureSpec::concat_attention().is_sequence());
    CHECK_FALSE(FeatureSpec::visual_attention().is_sequence());
}
