#include <doctest.h>

#include <fstream>

#include <json.hpp>

#include "abstain/cli.hpp"
#include "abstain/metrics.hpp"
#include "abstain/repr_store.hpp"
#include "abstain/synth.hpp"
#include "abstain/trainer.hpp"
#include "oracles.hpp"

using namespace abstain;
namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

int run(std::vector<std::string> args) {
    args.insert(args.begin(), "abstain-lab");
    return run_cli(args);
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

json read_json(const fs::path& p) { return json::parse(slurp(p)); }

const std::vector<std::string> kSmallProbe = {"--mlp-hidden", "32", "16", "8", "--epochs", "30"};

std::vector<std::string> with(std::vector<std::string> a, const std::vector<std::string>& b) {
    a.insert(a.end(), b.begin(), b.end());
    return a;
}

struct Dumps {
    fs::path root = testutil::scratch("cli");
    fs::path planted = root / "planted";
    fs::path tp_only = root / "tp_only";
    fs::path attn = root / "attn";
    fs::path attn2 = root / "attn2";

    Dumps() {
        REQUIRE(run({"synth", "--out", planted.string(), "--n", "600", "--layers", "6", "--dim", "8", "--signal-layer",
                     "4", "--delta", "3.5", "--seed", "1", "--attention", "--image-hidden"}) == 0);
        REQUIRE(run({"synth", "--out", tp_only.string(), "--n", "100", "--layers", "2", "--dim", "4", "--evidence",
                     "token_probs", "--seed", "2"}) == 0);
        for (const auto& [p, seed] : {std::pair{attn, "3"}, std::pair{attn2, "4"}})
            REQUIRE(run({"synth", "--out", p.string(), "--n", "300", "--layers", "4", "--dim", "8", "--heads", "2",
                         "--delta", "2", "--attention", "--full-attention", "--seed", seed}) == 0);
    }
};

const Dumps& dumps() {
    static const Dumps d;
    return d;
}

}  // namespace

TEST_CASE("usage errors exit 2") {
    CHECK(run({}) == kExitUsage);
    CHECK(run({"frobnicate"}) == kExitUsage);
    CHECK(run({"train", "--dump", "x"}) == kExitUsage);
    CHECK(run({"--version"}) == kExitOk);
}

TEST_CASE("validate exit codes") {
    const auto& d = dumps();
    CHECK(run({"validate", "--dump", d.planted.string()}) == kExitOk);
    CHECK(run({"validate", "--dump", (d.root / "missing").string()}) == kExitUsage);

    const auto bad = testutil::scratch("cli_nan");
    fs::copy(d.tp_only, bad, fs::copy_options::recursive | fs::copy_options::overwrite_existing);
    {
        std::fstream f(bad / "hidden.bin", std::ios::in | std::ios::out | std::ios::binary);
        const float nan = std::numeric_limits<float>::quiet_NaN();
        f.seekp(8 + 4 * (3 * 2 * 4 + 1 * 4));  // sample 3, layer 1, dim 0
        f.write(reinterpret_cast<const char*>(&nan), 4);
    }
    const auto out = bad.parent_path() / "cli_nan_report.json";
    CHECK(run({"validate", "--dump", bad.string(), "--out", out.string()}) == kExitFailure);
    const auto rep = read_json(out);
    REQUIRE(rep.at("issues").size() == 1);
    CHECK(rep.at("issues")[0].at("sample") == 3);
    CHECK(rep.at("issues")[0].at("layer") == 1);
    CHECK(fs::exists(out.string() + ".run.json"));
}

TEST_CASE("baselines report") {
    const auto& d = dumps();
    SUBCASE("only token probabilities") {
        const auto out = d.root / "tp.md";
        REQUIRE(run({"baselines", "--dump", d.tp_only.string(), "--format", "md", "--out", out.string()}) == 0);
        const auto md = slurp(out);
        CHECK(md.find("| Method | ER | A-Acc | R-Acc | A-Pre |") != std::string::npos);
        CHECK(md.find("| Token Prob. | -") == std::string::npos);
        for (const char* label : {"Ask for Calib.", "Self Consist.", "Prompt to Abs.", "VLM Judge", "R-Tuning", "SVAR",
                                  "Context Lens"})
            CHECK_MESSAGE(md.find(std::string("| ") + label + " | - | - | - | - |") != std::string::npos, label);
    }
    SUBCASE("all evidence gives eight populated rows matching an oracle") {
        const auto out = d.root / "all.json";
        REQUIRE(run({"baselines", "--dump", d.planted.string(), "--seed", "5", "--out", out.string()}) == 0);
        const auto j = read_json(out);
        REQUIRE(j.at("rows").size() == 8);
        for (const auto& r : j.at("rows")) CHECK_FALSE(r.at("metrics").is_null());

        // token probability row recomputed independently
        const auto reader = read_dump(d.planted);
        const auto split = split_dataset(reader.manifest(), {}, derive_seed(5, "split"));
        auto scores = [&](const std::vector<std::size_t>& idx) {
            std::vector<double> s, y;
            for (auto i : idx) {
                const auto& p = reader.manifest().samples[i].evidence.token_probs;
                double lg = 0.0;
                for (double v : p) lg += std::log(v);
                s.push_back(std::exp(lg / static_cast<double>(p.size())));
                y.push_back(reader.manifest().samples[i].label);
            }
            return std::pair{s, y};
        };
        const auto [vs, vy] = scores(split.val);
        const auto [ts, ty] = scores(split.test);
        // oracle τ: best grid-free candidate by exhaustive search over midpoints
        std::vector<double> cands = {0.0, 1.0};
        std::vector<double> sorted = vs;
        std::sort(sorted.begin(), sorted.end());
        sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
        for (std::size_t k = 1; k < sorted.size(); ++k) cands.push_back((sorted[k - 1] + sorted[k]) / 2.0);
        double best_tau = 2.0, best = -1.0;
        for (double t : cands) {
            const double a = oracle::a_acc(vs, vy, t);
            if (a > best + 1e-12 || (std::abs(a - best) <= 1e-12 && t < best_tau)) {
                best = a;
                best_tau = t;
            }
        }
        const auto& m = j.at("rows")[0].at("metrics");
        CHECK(m.at("a_acc").get<double>() == doctest::Approx(oracle::a_acc(ts, ty, best_tau)).epsilon(1e-9));
        CHECK(m.at("er").get<double>() == doctest::Approx(oracle::er(ts, ty, best_tau)).epsilon(1e-9));
    }
}

TEST_CASE("sweep emits L rows with the planted argmax") {
    const auto& d = dumps();
    const auto out = d.root / "sweep.json";
    REQUIRE(run(with({"sweep", "--dump", d.planted.string(), "--out", out.string()}, kSmallProbe)) == 0);
    const auto j = read_json(out);
    REQUIRE(j.at("points").size() == 6);
    int best_layer = 0;
    double best = -1.0;
    for (const auto& p : j.at("points"))
        if (p.at("test_a_acc").get<double>() > best) {
            best = p.at("test_a_acc").get<double>();
            best_layer = p.at("layer").get<int>();
        }
    CHECK(best_layer == 4);
    CHECK(read_json(out.string() + ".run.json").at("result").at("argmax_test_layer") == 4);
}

TEST_CASE("ensemble then eval reproduces ensemble decisions") {
    const auto& d = dumps();
    const auto model = d.root / "ens";
    REQUIRE(run(with({"ensemble", "--dump", d.planted.string(), "--k", "5", "--out", model.string()}, kSmallProbe)) == 0);
    CHECK(fs::exists(model / "ensemble.json"));
    const auto preds = d.root / "ens_preds.json";
    REQUIRE(run({"eval", "--dump", d.planted.string(), "--model", model.string(), "--predictions", preds.string(),
                 "--out", (d.root / "ens_eval.json").string()}) == 0);
    const auto p = read_json(preds);
    const auto ens = load_ensemble(model);
    const auto corpus = load_corpus(read_dump(d.planted));
    const auto idx = p.at("indices").get<std::vector<std::size_t>>();
    const auto scores = p.at("scores").get<std::vector<double>>();
    REQUIRE(idx.size() == scores.size());
    for (std::size_t k = 0; k < idx.size(); ++k) CHECK(scores[k] == ensemble_predict(ens, corpus.records[idx[k]]));
}

TEST_CASE("train and eval a single probe") {
    const auto& d = dumps();
    const auto model = d.root / "probe";
    REQUIRE(run(with({"train", "--dump", d.planted.string(), "--probe", "layer:4", "--out", model.string(), "--seed",
                      "3"},
                     kSmallProbe)) == 0);
    const auto report = read_json(model / "report.json");
    const auto eval_out = d.root / "probe_eval.json";
    REQUIRE(run({"eval", "--dump", d.planted.string(), "--model", model.string(), "--seed", "3", "--out",
                 eval_out.string()}) == 0);
    CHECK(read_json(eval_out).at("rows")[0].at("metrics") == report.at("rows")[0].at("metrics"));
    CHECK(report.at("rows")[0].at("metrics").at("a_acc").get<double>() > 0.85);
    const auto rec = read_json(model.string() + ".run.json");
    CHECK(rec.at("seeds").at("root") == 3);
    CHECK(rec.contains("versions"));

    // rerunning produces the same report
    REQUIRE(run(with({"train", "--dump", d.planted.string(), "--probe", "layer:4", "--out", model.string(), "--seed",
                      "3"},
                     kSmallProbe)) == 0);
    CHECK(read_json(model / "report.json") == report);

    CHECK(run(with({"train", "--dump", d.tp_only.string(), "--probe", "visual-attn"}, kSmallProbe)) == kExitFailure);
    CHECK(run(with({"train", "--dump", d.planted.string(), "--probe", "wat"}, kSmallProbe)) == kExitUsage);
}

TEST_CASE("cross-dataset grid has the probes x datasets shape") {
    const auto& d = dumps();
    const auto out = d.root / "cross.md";
    REQUIRE(run(with({"cross", "--dump", d.attn.string(), "--dump2", d.attn2.string(), "--probe", "visual-attn",
                      "--probe", "concat-hidden", "--format", "md", "--out", out.string()},
                     kSmallProbe)) == 0);
    const auto md = slurp(out);
    CHECK(md.find("| Visual (Attn.) | ") != std::string::npos);
    CHECK(md.find("| Concat (Hid.) | ") != std::string::npos);
    const auto j = read_json(out.string() + ".run.json");
    CHECK(j.at("command") == "cross");

    const auto jout = d.root / "cross.json";
    REQUIRE(run(with({"cross", "--dump", d.attn.string(), "--dump2", d.planted.string(), "--probe", "concat-hidden",
                      "--probe", "visual-attn", "--out", jout.string()},
                     kSmallProbe)) == 0);
    const auto g = read_json(jout);
    REQUIRE(g.at("cells").size() == 2);
    CHECK(g.at("cells")[0].size() == 2);
    CHECK(g.at("cells")[0][1].is_null());  // hidden width 8 vs 8 but 4 vs 6 layers
}

TEST_CASE("report re-renders JSON") {
    const auto& d = dumps();
    const auto in = d.root / "tp.json";
    REQUIRE(run({"baselines", "--dump", d.tp_only.string(), "--out", in.string()}) == 0);
    const auto md = d.root / "tp_rerender.md";
    REQUIRE(run({"report", "--in", in.string(), "--format", "md", "--out", md.string()}) == 0);
    CHECK(slurp(md).find("| Token Prob. |") != std::string::npos);
    CHECK(run({"report", "--in", (d.root / "nope.json").string()}) == kExitUsage);
}

TEST_CASE("thread cap environment variable is honoured") {
    setenv("ABSTAIN_LAB_THREADS", "1", 1);
    const auto& d = dumps();
    const auto out = d.root / "sweep1.json";
    REQUIRE(run(with({"sweep", "--dump", d.planted.string(), "--out", out.string()}, kSmallProbe)) == 0);
    unsetenv("ABSTAIN_LAB_THREADS");
    CHECK(read_json(out) == read_json(d.root / "sweep.json"));
}
