#include "abstain/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "abstain/error.hpp"
#include "abstain/parallel.hpp"
#include "abstain/rng.hpp"

namespace abstain {

namespace fs = std::filesystem;
using json = nlohmann::json;
using nn::EncoderProbe;
using nn::MlpProbe;

Corpus load_corpus(const DumpReader& reader, SectionMask mask) {
    Corpus c{reader, {}};
    c.records.reserve(reader.size());
    for (std::size_t i = 0; i < reader.size(); ++i) c.records.push_back(reader.record(i, mask));
    return c;
}

FeatureTable build_features(const Corpus& corpus, const FeatureSpec& spec) {
    spec.check(corpus.manifest());
    FeatureTable t;
    t.spec = spec;
    const auto n = static_cast<Eigen::Index>(corpus.size());
    t.labels.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) t.labels(i) = static_cast<float>(corpus.records[static_cast<std::size_t>(i)].meta->label);
    if (spec.is_sequence()) {
        t.sequences.reserve(corpus.size());
        for (const auto& r : corpus.records) t.sequences.emplace_back(concat_attention_tokens(r));
    } else {
        t.vectors.resize(spec.dim(corpus.manifest()), n);
        for (Eigen::Index i = 0; i < n; ++i)
            t.vectors.col(i) = vector_features(corpus.records[static_cast<std::size_t>(i)], spec);
    }
    return t;
}

namespace {

using VecF = Eigen::VectorXf;
using MatF = Eigen::MatrixXf;

nn::AnyProbe make_probe(const FeatureSpec& spec, const Corpus& corpus, const FeatureTable& table,
                        const ProbeOptions& options, std::uint64_t seed) {
    const auto& m = corpus.manifest();
    if (spec.is_sequence()) {
        nn::EncoderDims d = options.encoder;
        d.token_dim = static_cast<int>(spec.dim(m));
        int longest = 1;
        for (const auto& s : table.sequences) longest = std::max(longest, static_cast<int>(s.rows()));
        d.max_tokens = std::max(d.max_tokens, longest);
        return EncoderProbe<float>(d, seed);
    }
    const auto& h = options.mlp_hidden;
    return MlpProbe<float>(MlpProbe<float>::Widths{static_cast<int>(spec.dim(m)), h[0], h[1], h[2], 1}, seed);
}

MatF gather_columns(const MatF& x, std::span<const std::size_t> idx) {
    MatF out(x.rows(), static_cast<Eigen::Index>(idx.size()));
    for (std::size_t k = 0; k < idx.size(); ++k) out.col(static_cast<Eigen::Index>(k)) = x.col(static_cast<Eigen::Index>(idx[k]));
    return out;
}

VecF gather_labels(const VecF& y, std::span<const std::size_t> idx) {
    VecF out(static_cast<Eigen::Index>(idx.size()));
    for (std::size_t k = 0; k < idx.size(); ++k) out(static_cast<Eigen::Index>(k)) = y(static_cast<Eigen::Index>(idx[k]));
    return out;
}

/// Loss + gradient on a batch for either architecture.
double batch_gradient(const nn::AnyProbe& probe, const FeatureTable& t, std::span<const std::size_t> idx, VecF& grad) {
    const VecF y = gather_labels(t.labels, idx);
    if (const auto* mlp = std::get_if<MlpProbe<float>>(&probe)) return mlp->loss_and_gradient(gather_columns(t.vectors, idx), y, grad);
    std::vector<MatF> seqs;
    seqs.reserve(idx.size());
    for (auto i : idx) seqs.push_back(t.sequences[i]);
    return std::get<EncoderProbe<float>>(probe).loss_and_gradient(std::span<const MatF>(seqs), y, grad);
}

std::vector<double> scores_of(const nn::AnyProbe& probe, const FeatureTable& t, std::span<const std::size_t> idx) {
    std::vector<double> out(idx.size());
    if (const auto* mlp = std::get_if<MlpProbe<float>>(&probe)) {
        if (idx.empty()) return out;
        const VecF s = mlp->forward_batch(gather_columns(t.vectors, idx));
        for (std::size_t k = 0; k < idx.size(); ++k) out[k] = static_cast<double>(s(static_cast<Eigen::Index>(k)));
        return out;
    }
    const auto& enc = std::get<EncoderProbe<float>>(probe);
    for (std::size_t k = 0; k < idx.size(); ++k) out[k] = static_cast<double>(enc.forward(t.sequences[idx[k]]));
    return out;
}

VecF& params_of(nn::AnyProbe& p) {
    return std::visit([](auto& probe) -> VecF& { return probe.parameters(); }, p);
}

double mean_bce(const std::vector<double>& scores, const VecF& labels, std::span<const std::size_t> idx) {
    double sum = 0.0;
    for (std::size_t k = 0; k < idx.size(); ++k) sum += nn::bce_soft(scores[k], labels(static_cast<Eigen::Index>(idx[k])));
    return sum / static_cast<double>(idx.size());
}

double a_acc_at_half(const std::vector<double>& scores, const VecF& labels, std::span<const std::size_t> idx) {
    double sum = 0.0;
    for (std::size_t k = 0; k < idx.size(); ++k) {
        const double y = labels(static_cast<Eigen::Index>(idx[k]));
        sum += scores[k] >= 0.5 ? y : 1.0 - y;
    }
    return sum / static_cast<double>(idx.size());
}

DumpDims dims_of(const DumpManifest& m) { return {m.num_layers, m.hidden_dim, m.num_heads}; }

}  // namespace

TrainedProbe train_probe(const Corpus& corpus, const SplitAssignment& split, const FeatureSpec& spec,
                         const nn::TrainConfig& config, const ProbeOptions& options) {
    return train_probe(corpus, build_features(corpus, spec), split, config, options);
}

TrainedProbe train_probe(const Corpus& corpus, const FeatureTable& table, const SplitAssignment& split,
                         const nn::TrainConfig& config, const ProbeOptions& options) {
    config.check();
    if (split.train.empty()) throw std::invalid_argument("train split is empty");
    if (split.val.empty()) throw std::invalid_argument("validation split is empty (needed for early stopping)");

    TrainedProbe out;
    out.spec = table.spec;
    out.config = config;
    out.dims = dims_of(corpus.manifest());
    out.provenance = {corpus.manifest().dataset_id, corpus.reader.path().string(), 0};
    out.probe = make_probe(table.spec, corpus, table, options, derive_seed(config.seed, "init"));

    VecF& params = params_of(out.probe);
    VecF best_params = params;
    nn::OptimizerState<float> opt(params.size());
    Rng batch_rng(derive_seed(config.seed, "batch"));
    std::vector<std::size_t> order = split.train;
    VecF grad;
    int bad_epochs = 0;

    for (int epoch = 0; epoch < config.max_epochs; ++epoch) {
        const double lr = nn::scheduled_lr(config, epoch);
        std::shuffle(order.begin(), order.end(), batch_rng);
        double loss_sum = 0.0;
        for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(config.batch_size)) {
            const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
            std::span<const std::size_t> batch(order.data() + start, end - start);
            const double loss = batch_gradient(out.probe, table, batch, grad);
            loss_sum += loss * static_cast<double>(batch.size());
            nn::optimizer_step(opt, params, grad, lr, config.weight_decay);
        }
        EpochStats st;
        st.epoch = epoch + 1;
        st.train_loss = loss_sum / static_cast<double>(order.size());
        const auto val_scores = scores_of(out.probe, table, split.val);
        st.val_loss = mean_bce(val_scores, table.labels, split.val);
        st.val_a_acc = a_acc_at_half(val_scores, table.labels, split.val);
        out.history.push_back(st);

        if (!std::isfinite(st.train_loss) || !std::isfinite(st.val_loss) || !params.allFinite()) {
            out.diverged = true;
            break;
        }
        if (st.val_loss < out.best_val_loss) {
            out.best_val_loss = st.val_loss;
            out.best_val_a_acc = st.val_a_acc;
            out.best_epoch = st.epoch;
            best_params = params;
            bad_epochs = 0;
        } else if (++bad_epochs >= config.patience) {
            break;
        }
    }
    params = best_params;
    if (out.best_epoch == 0) {
        // Never produced a finite validation loss: keep the initialization.
        out.diverged = true;
        const auto init_scores = scores_of(out.probe, table, split.val);
        out.best_val_a_acc = a_acc_at_half(init_scores, table.labels, split.val);
    }
    return out;
}

std::vector<double> score_samples(const TrainedProbe& probe, const FeatureTable& table,
                                  std::span<const std::size_t> indices) {
    return scores_of(probe.probe, table, indices);
}

double score_record(const TrainedProbe& probe, const SampleRecord& record) {
    if (const auto* mlp = std::get_if<MlpProbe<float>>(&probe.probe))
        return static_cast<double>(mlp->forward(vector_features(record, probe.spec)));
    const Eigen::MatrixXf tokens = concat_attention_tokens(record);
    return static_cast<double>(std::get<EncoderProbe<float>>(probe.probe).forward(tokens));
}

ScoredSet scored_set(const TrainedProbe& probe, const FeatureTable& table, std::span<const std::size_t> indices) {
    ScoredSet s;
    s.scores = score_samples(probe, table, indices);
    s.labels.reserve(indices.size());
    for (auto i : indices) s.labels.push_back(table.labels(static_cast<Eigen::Index>(i)));
    return s;
}

MetricReport evaluate_probe(const TrainedProbe& probe, const FeatureTable& table, const SplitAssignment& split) {
    if (split.test.empty()) throw std::invalid_argument("test split is empty");
    return compute_metrics(scored_set(probe, table, split.test), 0.5);
}

// ---------------------------------------------------------------------------

std::vector<nn::TrainConfig> default_grid(const nn::TrainConfig& base) {
    std::vector<nn::TrainConfig> grid;
    for (double lr : {1e-4, 3e-4, 1e-3})
        for (double wd : {0.0, 1e-4, 1e-2})
            for (auto sched : {nn::Scheduler::Constant, nn::Scheduler::Cosine}) {
                auto c = base;
                c.learning_rate = lr;
                c.weight_decay = wd;
                c.scheduler = sched;
                grid.push_back(c);
            }
    return grid;
}

std::vector<nn::TrainConfig> grid_from_json(const json& j, const nn::TrainConfig& base) {
    try {
        auto axis = [&](const char* key, double fallback) {
            if (!j.contains(key)) return std::vector<double>{fallback};
            return j.at(key).is_array() ? j.at(key).get<std::vector<double>>() : std::vector<double>{j.at(key).get<double>()};
        };
        const auto lrs = axis("learning_rate", base.learning_rate);
        const auto wds = axis("weight_decay", base.weight_decay);
        std::vector<nn::Scheduler> scheds{base.scheduler};
        if (j.contains("scheduler")) {
            scheds.clear();
            const auto& s = j.at("scheduler");
            if (s.is_array())
                for (const auto& v : s) scheds.push_back(nn::scheduler_from_string(v.get<std::string>()));
            else
                scheds.push_back(nn::scheduler_from_string(s.get<std::string>()));
        }
        nn::TrainConfig proto = base;
        proto.batch_size = j.value("batch_size", base.batch_size);
        proto.max_epochs = j.value("max_epochs", base.max_epochs);
        proto.patience = j.value("patience", base.patience);
        std::vector<nn::TrainConfig> grid;
        for (double lr : lrs)
            for (double wd : wds)
                for (auto s : scheds) {
                    auto c = proto;
                    c.learning_rate = lr;
                    c.weight_decay = wd;
                    c.scheduler = s;
                    c.check();
                    grid.push_back(c);
                }
        return grid;
    } catch (const json::exception& e) {
        throw FormatError(std::string("grid file: ") + e.what());
    }
}

GridResult grid_search(const Corpus& corpus, const SplitAssignment& split, const FeatureSpec& spec,
                       std::span<const nn::TrainConfig> grid, const ProbeOptions& options) {
    if (grid.empty()) throw std::invalid_argument("grid_search: empty grid");
    const FeatureTable table = build_features(corpus, spec);
    std::vector<TrainedProbe> trained(grid.size());
    parallel_for(grid.size(), [&](std::size_t i) { trained[i] = train_probe(corpus, table, split, grid[i], options); });

    const bool any_converged = std::any_of(trained.begin(), trained.end(), [](const auto& t) { return !t.diverged; });
    std::size_t best = grid.size();
    for (std::size_t i = 0; i < grid.size(); ++i) {
        if (any_converged && trained[i].diverged) continue;
        if (best == grid.size()) {
            best = i;
            continue;
        }
        const auto& a = trained[i];
        const auto& b = trained[best];
        const bool better = a.best_val_a_acc > b.best_val_a_acc ||
                            (a.best_val_a_acc == b.best_val_a_acc &&
                             (a.config.learning_rate < b.config.learning_rate ||
                              (a.config.learning_rate == b.config.learning_rate &&
                               a.config.weight_decay < b.config.weight_decay)));
        if (better) best = i;
    }

    GridResult r;
    for (std::size_t i = 0; i < grid.size(); ++i)
        r.runs.push_back({grid[i], trained[i].best_val_a_acc, trained[i].best_val_loss, trained[i].diverged});
    r.best = std::move(trained[best]);
    return r;
}

std::vector<LayerResult> layer_sweep(const Corpus& corpus, const SplitAssignment& split, Channel channel,
                                     const nn::TrainConfig& config, const ProbeOptions& options) {
    const int L = corpus.manifest().num_layers;
    if (L < 2) throw std::invalid_argument("layer_sweep needs at least two layers");
    std::vector<LayerResult> out(static_cast<std::size_t>(L));
    parallel_for(out.size(), [&](std::size_t k) {
        const int layer = static_cast<int>(k) + 1;
        auto cfg = config;
        cfg.seed = derive_seed(config.seed, "layer", static_cast<std::uint64_t>(layer));
        const auto table = build_features(corpus, FeatureSpec::single_layer(layer, channel));
        auto probe = train_probe(corpus, table, split, cfg, options);
        const double test_acc = split.test.empty() ? 0.0 : evaluate_probe(probe, table, split).a_acc;
        out[k] = LayerResult{layer, probe.best_val_a_acc, test_acc, std::move(probe)};
    });
    return out;
}

EnsembleProbe build_ensemble(const std::vector<LayerResult>& sweep, int k) {
    if (k < 1 || k % 2 == 0) throw std::invalid_argument("ensemble size K must be odd and positive");
    if (static_cast<std::size_t>(k) > sweep.size())
        throw std::invalid_argument("ensemble size K=" + std::to_string(k) + " exceeds the number of layers (" +
                                    std::to_string(sweep.size()) + ")");
    std::vector<std::size_t> order(sweep.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (sweep[a].val_a_acc != sweep[b].val_a_acc) return sweep[a].val_a_acc > sweep[b].val_a_acc;
        return sweep[a].layer < sweep[b].layer;
    });
    EnsembleProbe e;
    e.channel = sweep.front().probe.spec.kind == FeatureKind::SingleLayerAttention ? Channel::Attention : Channel::Hidden;
    for (int i = 0; i < k; ++i) {
        const auto& r = sweep[order[static_cast<std::size_t>(i)]];
        e.layers.push_back(r.layer);
        e.members.push_back(r.probe);
    }
    return e;
}

int majority_vote(std::span<const double> member_scores) {
    if (member_scores.empty()) throw std::invalid_argument("majority_vote: no members");
    std::size_t votes = 0;
    for (double s : member_scores)
        if (s >= 0.5) ++votes;
    return 2 * votes >= member_scores.size() ? 1 : 0;
}

int ensemble_predict(const EnsembleProbe& ensemble, const SampleRecord& record) {
    std::vector<double> scores;
    scores.reserve(ensemble.members.size());
    for (const auto& m : ensemble.members) scores.push_back(score_record(m, record));
    return majority_vote(scores);
}

namespace {

MetricReport ensemble_report(const EnsembleProbe& ensemble, const Corpus& corpus, std::span<const std::size_t> idx) {
    if (idx.empty()) throw std::invalid_argument("test split is empty");
    // Score each member in one batch over the split, then vote per sample.
    std::vector<std::vector<double>> member_scores;
    for (const auto& m : ensemble.members) {
        const auto table = build_features(corpus, m.spec);
        member_scores.push_back(score_samples(m, table, idx));
    }
    ScoredSet s;
    std::vector<double> votes(ensemble.members.size());
    for (std::size_t k = 0; k < idx.size(); ++k) {
        for (std::size_t m = 0; m < member_scores.size(); ++m) votes[m] = member_scores[m][k];
        s.scores.push_back(majority_vote(votes));
        s.labels.push_back(corpus.records[idx[k]].meta->label);
    }
    return compute_metrics(s, 0.5);
}

}  // namespace

MetricReport evaluate_ensemble(const EnsembleProbe& ensemble, const Corpus& corpus, const SplitAssignment& split) {
    return ensemble_report(ensemble, corpus, split.test);
}

void check_compatible(const TrainedProbe& probe, const DumpManifest& foreign) {
    const auto& src = probe.dims;
    auto fail = [&](const std::string& why) {
        throw IncompatibleError("probe '" + probe.spec.to_string() + "' cannot score dump '" + foreign.dataset_id +
                                "': " + why);
    };
    try {
        probe.spec.check(foreign);
    } catch (const std::exception& e) {
        fail(e.what());
    }
    switch (probe.spec.kind) {
        case FeatureKind::ConcatHidden:
            if (foreign.num_layers != src.num_layers) fail("layer count differs");
            [[fallthrough]];
        case FeatureKind::SingleLayerHidden:
            if (foreign.hidden_dim != src.hidden_dim)
                fail("hidden dim " + std::to_string(foreign.hidden_dim) + " vs " + std::to_string(src.hidden_dim));
            break;
        case FeatureKind::ConcatAttention:
        case FeatureKind::VisualAttention:
            if (foreign.num_layers != src.num_layers) fail("layer count differs");
            [[fallthrough]];
        case FeatureKind::SingleLayerAttention:
            if (foreign.num_heads != src.num_heads)
                fail("head count " + std::to_string(foreign.num_heads) + " vs " + std::to_string(src.num_heads));
            break;
    }
    if (const auto* enc = std::get_if<EncoderProbe<float>>(&probe.probe)) {
        for (const auto& s : foreign.samples)
            if (s.num_input_tokens > enc->dims().max_tokens) fail("sequence longer than the positional table");
    }
}

MetricReport cross_dataset_eval(const TrainedProbe& probe, const Corpus& foreign, const SplitAssignment& split) {
    check_compatible(probe, foreign.manifest());
    const auto table = build_features(foreign, probe.spec);
    return evaluate_probe(probe, table, split);
}

MetricReport cross_dataset_eval(const EnsembleProbe& ensemble, const Corpus& foreign, const SplitAssignment& split) {
    for (const auto& m : ensemble.members) check_compatible(m, foreign.manifest());
    return ensemble_report(ensemble, foreign, split.test);
}

// ---------------------------------------------------------------------------
// persistence

json to_json(const nn::TrainConfig& c) {
    return {{"learning_rate", c.learning_rate}, {"weight_decay", c.weight_decay},
            {"scheduler", nn::to_string(c.scheduler)}, {"batch_size", c.batch_size},
            {"max_epochs", c.max_epochs},       {"patience", c.patience},
            {"seed", c.seed}};
}

nn::TrainConfig train_config_from_json(const json& j) {
    nn::TrainConfig c;
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.weight_decay = j.value("weight_decay", c.weight_decay);
    c.scheduler = nn::scheduler_from_string(j.value("scheduler", std::string("constant")));
    c.batch_size = j.value("batch_size", c.batch_size);
    c.max_epochs = j.value("max_epochs", c.max_epochs);
    c.patience = j.value("patience", c.patience);
    c.seed = j.value("seed", c.seed);
    return c;
}

namespace {

void write_json(const fs::path& p, const json& j) {
    std::ofstream out(p, std::ios::trunc);
    if (!out) throw IoError("cannot write " + p.string());
    out << j.dump(2) << '\n';
}

json read_json(const fs::path& p) {
    std::ifstream in(p);
    if (!in) throw IoError("cannot open " + p.string());
    try {
        json j;
        in >> j;
        return j;
    } catch (const json::exception& e) {
        throw FormatError(p.string() + ": " + e.what());
    }
}

}  // namespace

void save_trained_probe(const TrainedProbe& probe, const fs::path& dir) {
    fs::create_directories(dir);
    nn::save_probe(probe.probe, dir / "probe");
    json hist = json::array();
    for (const auto& h : probe.history)
        hist.push_back({{"epoch", h.epoch}, {"train_loss", h.train_loss}, {"val_loss", h.val_loss}, {"val_a_acc", h.val_a_acc}});
    json side = {{"feature", probe.spec.to_string()},
                 {"config", to_json(probe.config)},
                 {"history", hist},
                 {"best_epoch", probe.best_epoch},
                 {"best_val_loss", probe.best_val_loss},
                 {"best_val_a_acc", probe.best_val_a_acc},
                 {"diverged", probe.diverged},
                 {"provenance",
                  {{"dump_id", probe.provenance.dump_id},
                   {"dump_path", probe.provenance.dump_path},
                   {"split_seed", probe.provenance.split_seed}}},
                 {"dims",
                  {{"num_layers", probe.dims.num_layers},
                   {"hidden_dim", probe.dims.hidden_dim},
                   {"num_heads", probe.dims.num_heads}}}};
    write_json(dir / "sidecar.json", side);
}

TrainedProbe load_trained_probe(const fs::path& dir) {
    TrainedProbe t;
    t.probe = nn::load_probe(dir / "probe");
    const json side = read_json(dir / "sidecar.json");
    try {
        t.spec = FeatureSpec::parse(side.at("feature").get<std::string>());
        t.config = train_config_from_json(side.at("config"));
        for (const auto& h : side.at("history"))
            t.history.push_back({h.at("epoch").get<int>(), h.at("train_loss").get<double>(),
                                 h.at("val_loss").get<double>(), h.at("val_a_acc").get<double>()});
        t.best_epoch = side.at("best_epoch").get<int>();
        t.best_val_loss = side.at("best_val_loss").is_null() ? std::numeric_limits<double>::infinity()
                                                             : side.at("best_val_loss").get<double>();
        t.best_val_a_acc = side.at("best_val_a_acc").get<double>();
        t.diverged = side.at("diverged").get<bool>();
        const auto& p = side.at("provenance");
        t.provenance = {p.at("dump_id").get<std::string>(), p.at("dump_path").get<std::string>(),
                        p.at("split_seed").get<std::uint64_t>()};
        const auto& d = side.at("dims");
        t.dims = {d.at("num_layers").get<int>(), d.at("hidden_dim").get<int>(), d.at("num_heads").get<int>()};
    } catch (const json::exception& e) {
        throw FormatError(std::string("sidecar.json: ") + e.what());
    }
    return t;
}

void save_ensemble(const EnsembleProbe& ensemble, const fs::path& dir) {
    fs::create_directories(dir);
    json j = {{"channel", ensemble.channel == Channel::Hidden ? "hidden" : "attention"},
              {"k", ensemble.k()},
              {"layers", ensemble.layers}};
    write_json(dir / "ensemble.json", j);
    for (std::size_t i = 0; i < ensemble.members.size(); ++i)
        save_trained_probe(ensemble.members[i], dir / ("member_" + std::to_string(ensemble.layers[i])));
}

EnsembleProbe load_ensemble(const fs::path& dir) {
    const json j = read_json(dir / "ensemble.json");
    EnsembleProbe e;
    try {
        e.channel = j.at("channel").get<std::string>() == "attention" ? Channel::Attention : Channel::Hidden;
        e.layers = j.at("layers").get<std::vector<int>>();
    } catch (const json::exception& ex) {
        throw FormatError(std::string("ensemble.json: ") + ex.what());
    }
    for (int layer : e.layers) e.members.push_back(load_trained_probe(dir / ("member_" + std::to_string(layer))));
    return e;
}

}  // namespace abstain
