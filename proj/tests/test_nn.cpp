#include <doctest.h>

#include <random>

#include "abstain/nn.hpp"
#include "oracles.hpp"

using namespace abstain;
using namespace abstain::nn;

namespace {

const ParamLayout::Block& block(const ParamLayout& layout, const std::string& name) {
    for (const auto& b : layout.blocks())
        if (b.name == name) return b;
    throw std::out_of_range(name);
}

std::vector<std::vector<double>> rows_of(const Eigen::Ref<const Eigen::MatrixXd>& m) {
    std::vector<std::vector<double>> out(static_cast<std::size_t>(m.rows()));
    for (Eigen::Index r = 0; r < m.rows(); ++r)
        for (Eigen::Index c = 0; c < m.cols(); ++c) out[static_cast<std::size_t>(r)].push_back(m(r, c));
    return out;
}

std::vector<double> vec_of(const Eigen::Ref<const Eigen::MatrixXd>& m) { return {m.data(), m.data() + m.size()}; }

/// max |a - n| / max(|a|, |n|, floor) over every parameter.
template <typename LossFn>
double max_rel_error(Eigen::VectorXd& params, const Eigen::VectorXd& analytic, LossFn loss, double h, double floor) {
    double worst = 0.0;
    for (Eigen::Index i = 0; i < params.size(); ++i) {
        const double keep = params(i);
        params(i) = keep + h;
        const double up = loss();
        params(i) = keep - h;
        const double down = loss();
        params(i) = keep;
        const double numeric = (up - down) / (2.0 * h);
        const double denom = std::max({std::abs(analytic(i)), std::abs(numeric), floor});
        worst = std::max(worst, std::abs(analytic(i) - numeric) / denom);
    }
    return worst;
}

}  // namespace

TEST_CASE("bce_soft reference values") {
    CHECK(bce_soft(0.5, 0.0) == doctest::Approx(0.6931471805599453).epsilon(1e-12));
    CHECK(bce_soft(0.5, 0.37) == doctest::Approx(0.6931471805599453).epsilon(1e-12));
    CHECK(bce_soft(1.0 - kScoreEpsilon, 1.0) < 1e-6);
    CHECK(bce_soft(0.7, 0.7) == doctest::Approx(0.6108643020548935).epsilon(1e-12));
    CHECK(std::isfinite(bce_soft(0.0, 1.0)));
    CHECK(std::isfinite(bce_soft(1.0, 0.0)));
}

TEST_CASE("MLP output extremes") {
    MlpProbe<double> p({3, 4, 4, 4, 1}, 1);
    p.parameters().setZero();
    const Eigen::VectorXd x = Eigen::VectorXd::Constant(3, 2.0);
    CHECK(p.forward(x) == doctest::Approx(0.5));
    p.bias(3)(0) = 20.0;
    CHECK(p.forward(x) > 0.999);
    CHECK(p.forward(x) < 1.0);
    CHECK_THROWS_AS(p.forward(Eigen::VectorXd::Zero(2)), std::invalid_argument);
}

TEST_CASE("MLP forward agrees with a hand-rolled oracle") {
    const MlpProbe<double> p({2, 4, 4, 4, 1}, 12345);
    const std::vector<double> x = {0.3, -1.7};
    std::vector<double> a = x;
    for (int k = 0; k < 4; ++k) {
        a = oracle::affine(rows_of(p.weight(k)), vec_of(p.bias(k)), a);
        if (k < 3)
            for (auto& v : a) v = std::max(v, 0.0);
    }
    const double expected = 1.0 / (1.0 + std::exp(-a[0]));
    CHECK(p.forward(Eigen::Map<const Eigen::VectorXd>(x.data(), 2)) == doctest::Approx(expected).epsilon(1e-12));
    // float probe with the same seed
    const auto pf = p.cast<float>();
    CHECK(pf.forward(Eigen::Vector2f(0.3f, -1.7f)) == doctest::Approx(expected).epsilon(1e-6));
}

TEST_CASE("MLP default widths") {
    const MlpProbe<float> p(10, 0);
    CHECK(p.widths() == MlpProbe<float>::Widths{10, 1024, 256, 64, 1});
    CHECK(p.layout().blocks().size() == 8);
    CHECK(p.layout().blocks()[0].name == "W1");
    CHECK(p.layout().size() == 10 * 1024 + 1024 + 1024 * 256 + 256 + 256 * 64 + 64 + 64 + 1);
    CHECK(p.bias(0).isZero());
}

TEST_CASE("MLP output bias gradient vanishes when y equals the score") {
    const MlpProbe<double> p({3, 5, 4, 3, 1}, 7);
    const Eigen::Vector3d x(0.2, -0.4, 1.1);
    const double s = p.forward(x);
    const auto g = p.backward(x, s);
    CHECK(std::abs(g(block(p.layout(), "b4").offset)) < 1e-15);
    const auto g1 = p.backward(x, 1.0);
    CHECK(g1(block(p.layout(), "b4").offset) == doctest::Approx(s - 1.0));
}

TEST_CASE("MLP duplicated batch keeps the mean gradient") {
    const MlpProbe<double> p({3, 5, 4, 3, 1}, 3);
    Eigen::MatrixXd one(3, 1), two(3, 2);
    one << 0.5, -0.2, 0.9;
    two << one, one;
    Eigen::VectorXd g1, g2;
    p.loss_and_gradient(one, Eigen::VectorXd::Constant(1, 0.3), g1);
    p.loss_and_gradient(two, Eigen::VectorXd::Constant(2, 0.3), g2);
    CHECK((g1 - g2).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("MLP gradient matches finite differences") {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        MlpProbe<double> p({6, 8, 6, 4, 1}, seed);
        std::mt19937_64 rng(seed + 100);
        std::normal_distribution<double> z;
        std::uniform_real_distribution<double> u;
        Eigen::MatrixXd x(6, 5);
        Eigen::VectorXd y(5);
        for (Eigen::Index k = 0; k < x.size(); ++k) x.data()[k] = z(rng);
        for (Eigen::Index k = 0; k < y.size(); ++k) y(k) = u(rng);
        // zero biases put whole-layer dead units exactly on a rectifier kink
        for (int k = 0; k < MlpProbe<double>::kAffineLayers; ++k)
            for (Eigen::Index j = 0; j < p.bias(k).size(); ++j) p.bias(k)(j) = 0.2 * u(rng) - 0.1;
        Eigen::VectorXd grad, scratch;
        p.loss_and_gradient(x, y, grad);
        auto loss = [&] { return p.loss_and_gradient(x, y, scratch); };
        CHECK(max_rel_error(p.parameters(), grad, loss, 1e-5, 1e-6) < 1e-4);
    }
}

TEST_CASE("encoder with one token reduces to the value path") {
    EncoderDims dims{3, 8, 2, 6, 4, true};
    const EncoderProbe<double> p(dims, 21);
    const auto& L = p.layout();
    const auto& w = p.parameters();
    auto M = [&](const std::string& n) { return Eigen::MatrixXd(view(w, block(L, n))); };

    Eigen::RowVector3d tok(0.4, -1.0, 0.25);
    Eigen::VectorXd h = M("in.W") * tok.transpose() + M("in.b") + M("pos").row(0).transpose();
    auto layer_norm = [](const Eigen::VectorXd& v, const Eigen::MatrixXd& g, const Eigen::MatrixXd& b) {
        const double mean = v.mean();
        const double var = (v.array() - mean).square().mean();
        return Eigen::VectorXd(((v.array() - mean) / std::sqrt(var + 1e-5)) * g.array() + b.array());
    };
    for (int b = 0; b < 4; ++b) {
        const std::string pre = "block" + std::to_string(b) + ".";
        const Eigen::VectorXd attn = M(pre + "Wo") * (M(pre + "Wv") * h + M(pre + "bv")) + M(pre + "bo");
        h = layer_norm(h + attn, M(pre + "ln1.gamma"), M(pre + "ln1.beta"));
        const Eigen::VectorXd hidden = (M(pre + "W1") * h + M(pre + "b1")).cwiseMax(0.0);
        h = layer_norm(h + M(pre + "W2") * hidden + M(pre + "b2"), M(pre + "ln2.gamma"), M(pre + "ln2.beta"));
    }
    const double logit = (M("head.W") * h)(0) + M("head.b")(0);
    CHECK(p.forward(tok) == doctest::Approx(1.0 / (1.0 + std::exp(-logit))).epsilon(1e-12));
}

TEST_CASE("encoder mean-pool symmetry without positions") {
    EncoderProbe<double> p({2, 8, 2, 8, 8, true}, 5);
    p.set_positional(false);
    Eigen::MatrixXd one(1, 2), two(2, 2);
    one << 0.7, -0.3;
    two << one, one;
    CHECK(p.forward(one) == doctest::Approx(p.forward(two)).epsilon(1e-12));

    Eigen::MatrixXd seq(3, 2), perm(3, 2);
    seq << 0.1, 0.2, -0.5, 0.9, 1.3, -0.4;
    perm << seq.row(2), seq.row(0), seq.row(1);
    CHECK(p.forward(seq) == doctest::Approx(p.forward(perm)).epsilon(1e-12));
    p.set_positional(true);
    CHECK(p.forward(seq) != doctest::Approx(p.forward(perm)).epsilon(1e-12));
}

TEST_CASE("encoder input checks") {
    const EncoderProbe<float> p({2, 8, 2, 8, 4, true}, 0);
    CHECK_THROWS_AS(p.forward(Eigen::MatrixXf::Zero(5, 2)), std::invalid_argument);
    CHECK_THROWS_AS(p.forward(Eigen::MatrixXf::Zero(0, 2)), std::invalid_argument);
    CHECK_THROWS_AS(p.forward(Eigen::MatrixXf::Zero(2, 3)), std::invalid_argument);
    CHECK_THROWS_AS(EncoderProbe<float>({2, 9, 2, 8, 4, true}, 0), std::invalid_argument);
    const float s = p.forward(Eigen::MatrixXf::Ones(4, 2));
    CHECK(s > 0.0f);
    CHECK(s < 1.0f);
}

TEST_CASE("encoder gradient matches finite differences") {
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
        EncoderProbe<double> p({3, 8, 2, 8, 6, true}, seed);
        std::mt19937_64 rng(seed + 7);
        std::normal_distribution<double> z;
        std::vector<Eigen::MatrixXd> batch;
        for (int n : {1, 3, 5}) {
            Eigen::MatrixXd t(n, 3);
            for (Eigen::Index k = 0; k < t.size(); ++k) t.data()[k] = z(rng);
            batch.push_back(t);
        }
        const Eigen::Vector3d y(0.9, 0.2, 0.55);
        Eigen::VectorXd grad, scratch;
        p.loss_and_gradient(batch, y, grad);
        auto loss = [&] { return p.loss_and_gradient(batch, y, scratch); };
        CHECK(max_rel_error(p.parameters(), grad, loss, 1e-5, 1e-6) < 1e-3);
    }
}

TEST_CASE("optimizer basics") {
    TrainConfig cfg;
    cfg.learning_rate = 0.1;
    SUBCASE("zero gradient and decay leave parameters alone") {
        Eigen::VectorXf p = Eigen::VectorXf::LinSpaced(4, -1.0f, 1.0f);
        const Eigen::VectorXf keep = p;
        OptimizerState<float> st(4);
        optimizer_step(st, p, Eigen::VectorXf(Eigen::VectorXf::Zero(4)), 0.1, 0.0);
        CHECK(p == keep);
        CHECK(st.step == 1);
    }
    SUBCASE("one step on x^2 from 1 moves toward 0") {
        Eigen::VectorXd x = Eigen::VectorXd::Ones(1);
        OptimizerState<double> st(1);
        optimizer_step(st, x, Eigen::VectorXd(2.0 * x), 0.1, 0.0);
        CHECK(std::abs(x(0)) < 1.0);
    }
    SUBCASE("least squares y = 2x") {
        Eigen::VectorXd w = Eigen::VectorXd::Zero(1);
        OptimizerState<double> st(1);
        const Eigen::VectorXd xs = Eigen::VectorXd::LinSpaced(20, -1.0, 1.0);
        double loss = 0.0;
        for (int it = 0; it < 200; ++it) {
            const Eigen::VectorXd r = w(0) * xs - 2.0 * xs;
            loss = r.squaredNorm() / 20.0;
            Eigen::VectorXd g(1);
            g(0) = 2.0 * r.dot(xs) / 20.0;
            optimizer_step(st, w, g, 0.1, 0.0);
        }
        CHECK(loss < 1e-3);
    }
    SUBCASE("decoupled weight decay shrinks before the moment update") {
        Eigen::VectorXd w = Eigen::VectorXd::Constant(1, 2.0);
        OptimizerState<double> st(1);
        optimizer_step(st, w, Eigen::VectorXd(Eigen::VectorXd::Zero(1)), 0.1, 0.5);
        CHECK(w(0) == doctest::Approx(2.0 * (1.0 - 0.05)));
    }
}

TEST_CASE("cosine schedule") {
    TrainConfig c;
    c.learning_rate = 1e-3;
    c.max_epochs = 10;
    CHECK(scheduled_lr(c, 0) == doctest::Approx(1e-3));
    CHECK(scheduled_lr(c, 7) == doctest::Approx(1e-3));
    c.scheduler = Scheduler::Cosine;
    CHECK(scheduled_lr(c, 0) == doctest::Approx(1e-3));
    CHECK(scheduled_lr(c, 5) == doctest::Approx(5e-4));
    CHECK(scheduled_lr(c, 9) < scheduled_lr(c, 8));
    CHECK(scheduler_from_string("cosine") == Scheduler::Cosine);
    CHECK_THROWS(scheduler_from_string("linear"));
    c.learning_rate = 0.0;
    CHECK_THROWS_AS(c.check(), std::invalid_argument);
}

TEST_CASE("identical seeds give identical parameters and trajectories") {
    MlpProbe<float> a({4, 8, 8, 4, 1}, 99), b({4, 8, 8, 4, 1}, 99), c({4, 8, 8, 4, 1}, 100);
    CHECK(a.parameters() == b.parameters());
    CHECK(a.parameters() != c.parameters());
    OptimizerState<float> sa(a.parameters().size()), sb(b.parameters().size());
    Eigen::MatrixXf x = Eigen::MatrixXf::Random(4, 6);
    Eigen::VectorXf y = Eigen::VectorXf::LinSpaced(6, 0.0f, 1.0f);
    Eigen::VectorXf ga, gb;
    for (int it = 0; it < 10; ++it) {
        a.loss_and_gradient(x, y, ga);
        b.loss_and_gradient(x, y, gb);
        optimizer_step(sa, a.parameters(), ga, 1e-2, 1e-3);
        optimizer_step(sb, b.parameters(), gb, 1e-2, 1e-3);
    }
    CHECK(a.parameters() == b.parameters());
}

TEST_CASE("checkpoint round-trip") {
    const auto dir = testutil::scratch("nn_ckpt");
    SUBCASE("mlp") {
        const AnyProbe p = MlpProbe<float>({5, 7, 6, 3, 1}, 8);
        save_probe(p, dir / "m");
        const auto q = load_probe(dir / "m");
        REQUIRE(std::holds_alternative<MlpProbe<float>>(q));
        CHECK(std::get<MlpProbe<float>>(q).parameters() == std::get<MlpProbe<float>>(p).parameters());
        CHECK(std::get<MlpProbe<float>>(q).widths() == std::get<MlpProbe<float>>(p).widths());
        CHECK(std::filesystem::file_size(dir / "m.bin") ==
              static_cast<std::uintmax_t>(std::get<MlpProbe<float>>(p).layout().size()) * 4);
    }
    SUBCASE("encoder") {
        const AnyProbe p = EncoderProbe<float>({2, 8, 2, 8, 5, false}, 8);
        save_probe(p, dir / "e");
        const auto q = load_probe(dir / "e");
        REQUIRE(std::holds_alternative<EncoderProbe<float>>(q));
        const auto& e = std::get<EncoderProbe<float>>(q);
        CHECK(e.parameters() == std::get<EncoderProbe<float>>(p).parameters());
        CHECK_FALSE(e.dims().positional);
        CHECK(e.dims().max_tokens == 5);
    }
    SUBCASE("truncated blob") {
        save_probe(MlpProbe<float>({5, 7, 6, 3, 1}, 8), dir / "t");
        std::filesystem::resize_file(dir / "t.bin", 12);
        CHECK_THROWS(load_probe(dir / "t"));
    }
}
