#include "abstain/cli.hpp"

#include <chrono>
#include <ctime>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "abstain/baselines.hpp"
#include "abstain/error.hpp"
#include "abstain/report.hpp"
#include "abstain/rng.hpp"
#include "abstain/synth.hpp"
#include "abstain/trainer.hpp"

#ifndef ABSTAIN_LAB_VERSION
#define ABSTAIN_LAB_VERSION "0.0.0"
#endif

namespace abstain {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

struct RunSpec {
    std::string command;
    std::string dump;
    std::string dump2;
    std::uint64_t seed = 0;
    std::string ratios = "0.6,0.2,0.2";
    std::vector<std::string> methods;
    std::vector<std::string> probes;
    int k = 5;
    std::string grid;
    std::string out;
    std::string format = "json";
    std::string model;
    std::string channel = "hidden";
    std::string input;
    std::string predictions;
    nn::TrainConfig train;
    std::string scheduler = "constant";
    std::vector<int> mlp_hidden{1024, 256, 64};
    nn::EncoderDims encoder;
    bool no_positional = false;
    SyntheticConfig synth;
    std::string rho;
    int signal_layer = 0;
    int peak_layer = 0;
    double peak_width = 0.0;
    std::string evidence = "all";
    std::string synth_config;
};

struct Outcome {
    int code = kExitOk;
    json summary = json::object();  // folded into the run record
};

SplitRatios parse_ratios(const std::string& s) {
    std::vector<double> v;
    std::stringstream ss(s);
    std::string tok;
    while (std::getline(ss, tok, ',')) v.push_back(std::stod(tok));
    if (v.size() != 3) throw std::invalid_argument("--ratios expects three comma-separated values");
    return {v[0], v[1], v[2]};
}

std::vector<double> parse_doubles(const std::string& s) {
    std::vector<double> v;
    std::stringstream ss(s);
    std::string tok;
    while (std::getline(ss, tok, ',')) v.push_back(std::stod(tok));
    return v;
}

Channel parse_channel(const std::string& s) {
    if (s == "hidden" || s == "hid") return Channel::Hidden;
    if (s == "attention" || s == "attn") return Channel::Attention;
    throw std::invalid_argument("unknown channel '" + s + "' (hidden|attention)");
}

std::string channel_name(Channel c) { return c == Channel::Hidden ? "hidden" : "attention"; }

struct ProbeKind {
    bool ensemble = false;
    Channel channel = Channel::Hidden;
    FeatureSpec spec;
};

ProbeKind parse_probe(const std::string& s) {
    ProbeKind p;
    if (s == "concat-hidden") p.spec = FeatureSpec::concat_hidden();
    else if (s == "concat-attn") p.spec = FeatureSpec::concat_attention();
    else if (s == "visual-attn") p.spec = FeatureSpec::visual_attention();
    else if (s == "ensemble-hidden") p = {true, Channel::Hidden, {}};
    else if (s == "ensemble-attn") p = {true, Channel::Attention, {}};
    else if (s.rfind("layer:", 0) == 0) {
        // layer:<ℓ> probes the hidden state; layer:<ℓ>:attn the visual attention.
        const auto rest = s.substr(6);
        const auto colon = rest.find(':');
        const int layer = std::stoi(rest.substr(0, colon));
        const Channel ch = colon == std::string::npos ? Channel::Hidden : parse_channel(rest.substr(colon + 1));
        p.spec = FeatureSpec::single_layer(layer, ch);
        p.channel = ch;
    } else {
        throw std::invalid_argument("unknown probe kind '" + s + "'");
    }
    return p;
}

DumpReader open_dump(const std::string& path) {
    if (path.empty()) throw std::invalid_argument("--dump is required");
    return read_dump(path);
}

SplitAssignment make_split(const RunSpec& spec, const DumpManifest& m) {
    return split_dataset(m, parse_ratios(spec.ratios), derive_seed(spec.seed, "split"));
}

nn::TrainConfig train_config(const RunSpec& spec) {
    auto c = spec.train;
    c.scheduler = nn::scheduler_from_string(spec.scheduler);
    c.seed = spec.seed;
    c.check();
    return c;
}

ProbeOptions probe_options(const RunSpec& spec) {
    ProbeOptions o;
    if (spec.mlp_hidden.size() != 3) throw std::invalid_argument("--mlp-hidden expects three widths");
    o.mlp_hidden = {spec.mlp_hidden[0], spec.mlp_hidden[1], spec.mlp_hidden[2]};
    o.encoder = spec.encoder;
    o.encoder.positional = !spec.no_positional;
    return o;
}

ReportFormat format_of(const RunSpec& spec) { return report_format_from_string(spec.format); }

std::string extension(ReportFormat f) {
    switch (f) {
        case ReportFormat::Json: return ".json";
        case ReportFormat::Csv: return ".csv";
        case ReportFormat::Markdown: return ".md";
    }
    return ".json";
}

void write_text(const fs::path& p, const std::string& text) {
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    std::ofstream out(p, std::ios::trunc);
    if (!out) throw IoError("cannot write " + p.string());
    out << text;
    if (!text.empty() && text.back() != '\n') out << '\n';
}

/// Writes a rendered report to --out, or stdout when no path was given.
void emit(const RunSpec& spec, const json& doc) {
    const auto text = render_json_report(doc, format_of(spec));
    if (spec.out.empty())
        std::cout << text << (text.empty() || text.back() == '\n' ? "" : "\n");
    else
        write_text(spec.out, text);
}

/// Commands whose --out is an artifact directory put the report inside it.
void emit_into(const RunSpec& spec, const json& doc) {
    const auto f = format_of(spec);
    const auto text = render_json_report(doc, f);
    if (spec.out.empty()) {
        std::cout << text << (text.empty() || text.back() == '\n' ? "" : "\n");
        return;
    }
    write_text(fs::path(spec.out) / ("report" + extension(f)), text);
    if (f != ReportFormat::Json) write_text(fs::path(spec.out) / "report.json", doc.dump(2));
}

std::vector<nn::TrainConfig> grid_configs(const RunSpec& spec) {
    const auto base = train_config(spec);
    if (spec.grid.empty()) return {base};
    if (spec.grid == "default") return default_grid(base);
    std::ifstream in(spec.grid);
    if (!in) throw IoError("cannot open grid file " + spec.grid);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw FormatError("grid file " + spec.grid + ": " + e.what());
    }
    auto grid = grid_from_json(j, base);
    for (auto& c : grid) c.seed = base.seed;
    return grid;
}

json grid_runs_json(const GridResult& g) {
    json runs = json::array();
    for (const auto& r : g.runs)
        runs.push_back({{"config", to_json(r.config)},
                        {"val_a_acc", r.val_a_acc},
                        {"best_val_loss", std::isfinite(r.best_val_loss) ? json(r.best_val_loss) : json(nullptr)},
                        {"diverged", r.diverged}});
    return runs;
}

std::string probe_label(const FeatureSpec& s) {
    switch (s.kind) {
        case FeatureKind::ConcatHidden: return "Concat (Hid.)";
        case FeatureKind::ConcatAttention: return "Concat (Attn.)";
        case FeatureKind::VisualAttention: return "Visual (Attn.)";
        case FeatureKind::SingleLayerHidden: return "Layer " + std::to_string(s.layer) + " (Hid.)";
        case FeatureKind::SingleLayerAttention: return "Layer " + std::to_string(s.layer) + " (Attn.)";
    }
    return s.to_string();
}

std::string ensemble_label(Channel c) { return c == Channel::Hidden ? "Ensemble (Hid.)" : "Ensemble (Attn.)"; }

SectionMask sections_for_channel(Channel c) {
    return c == Channel::Hidden ? static_cast<SectionMask>(Section::Hidden)
                                : static_cast<SectionMask>(Section::VisualAttention);
}

// ---------------------------------------------------------------------------

Outcome cmd_validate(const RunSpec& spec) {
    if (spec.dump.empty()) throw std::invalid_argument("--dump is required");
    const auto report = validate_dump(spec.dump);
    json doc = report.to_json();
    doc["dump"] = spec.dump;
    const auto text = doc.dump(2);
    if (spec.out.empty())
        std::cout << text << '\n';
    else
        write_text(spec.out, text);
    Outcome o;
    o.summary = {{"issues", report.issues.size()}};
    const bool io = std::any_of(report.issues.begin(), report.issues.end(), [](const auto& i) { return i.kind == "io"; });
    o.code = io ? kExitUsage : (report.ok() ? kExitOk : kExitFailure);
    if (!report.ok())
        for (const auto& i : report.issues) std::cerr << "issue [" << i.kind << "] " << i.section << ": " << i.message << '\n';
    return o;
}

Outcome cmd_baselines(const RunSpec& spec) {
    const auto dump = open_dump(spec.dump);
    const auto split = make_split(spec, dump.manifest());
    std::vector<Method> methods;
    if (spec.methods.empty())
        methods.assign(kAllMethods.begin(), kAllMethods.end());
    else
        for (const auto& id : spec.methods) methods.push_back(method_from_id(id));

    MethodTable t;
    t.title = "Baselines on " + dump.manifest().dataset_id;
    for (auto m : methods) {
        const auto r = evaluate_baseline(dump, m, split);
        t.rows.push_back({method_label(m), r.report, r.degenerate_count});
    }
    emit(spec, to_json(t));
    return {};
}

json metrics_doc(const std::string& title, const std::string& label, const MetricReport& r) {
    MethodTable t;
    t.title = title;
    t.rows.push_back({label, r, 0});
    return to_json(t);
}

Outcome cmd_ensemble(const RunSpec& spec, Channel channel);

Outcome cmd_train(const RunSpec& spec) {
    if (spec.probes.size() != 1) throw std::invalid_argument("train takes exactly one --probe");
    const auto kind = parse_probe(spec.probes.front());
    if (kind.ensemble) return cmd_ensemble(spec, kind.channel);
    const auto dump = open_dump(spec.dump);
    const auto corpus = load_corpus(dump, kind.spec.sections());
    const auto split = make_split(spec, dump.manifest());
    const auto grid = grid_configs(spec);
    auto result = grid_search(corpus, split, kind.spec, grid, probe_options(spec));
    result.best.provenance.split_seed = derive_seed(spec.seed, "split");
    const auto table = build_features(corpus, kind.spec);
    const auto report = evaluate_probe(result.best, table, split);
    if (!spec.out.empty()) save_trained_probe(result.best, spec.out);
    json doc = metrics_doc("Probe on " + dump.manifest().dataset_id, probe_label(kind.spec), report);
    doc["grid"] = grid_runs_json(result);
    emit_into(spec, doc);
    Outcome o;
    o.summary = {{"best_config", to_json(result.best.config)},
                 {"best_epoch", result.best.best_epoch},
                 {"diverged", result.best.diverged},
                 {"test", to_json(report)}};
    return o;
}

Outcome cmd_ensemble(const RunSpec& spec, Channel channel) {
    const auto dump = open_dump(spec.dump);
    const auto corpus = load_corpus(dump, sections_for_channel(channel));
    const auto split = make_split(spec, dump.manifest());
    const auto sweep = layer_sweep(corpus, split, channel, train_config(spec), probe_options(spec));
    const auto ens = build_ensemble(sweep, spec.k);
    const auto report = evaluate_ensemble(ens, corpus, split);
    if (!spec.out.empty()) save_ensemble(ens, spec.out);
    json doc = metrics_doc("Ensemble on " + dump.manifest().dataset_id, ensemble_label(channel), report);
    doc["layers"] = ens.layers;
    emit_into(spec, doc);
    Outcome o;
    o.summary = {{"layers", ens.layers}, {"test", to_json(report)}};
    return o;
}

Outcome cmd_eval(const RunSpec& spec) {
    if (spec.model.empty()) throw std::invalid_argument("--model is required");
    const auto dump = open_dump(spec.dump);
    const auto split = make_split(spec, dump.manifest());
    const fs::path model(spec.model);
    std::vector<double> scores;
    MetricReport report;
    std::string label;
    if (fs::exists(model / "ensemble.json")) {
        const auto ens = load_ensemble(model);
        const auto corpus = load_corpus(dump, sections_for_channel(ens.channel));
        report = cross_dataset_eval(ens, corpus, split);
        for (auto i : split.test) scores.push_back(ensemble_predict(ens, corpus.records[i]));
        label = ensemble_label(ens.channel);
    } else {
        const auto probe = load_trained_probe(model);
        const auto corpus = load_corpus(dump, probe.spec.sections());
        check_compatible(probe, dump.manifest());
        const auto table = build_features(corpus, probe.spec);
        report = evaluate_probe(probe, table, split);
        scores = score_samples(probe, table, split.test);
        label = probe_label(probe.spec);
    }
    if (!spec.predictions.empty())
        write_text(spec.predictions, json{{"indices", split.test}, {"scores", scores}}.dump(2));
    emit(spec, metrics_doc("Evaluation on " + dump.manifest().dataset_id, label, report));
    Outcome o;
    o.summary = {{"test", to_json(report)}};
    return o;
}

Outcome cmd_sweep(const RunSpec& spec) {
    const Channel channel = parse_channel(spec.channel);
    const auto dump = open_dump(spec.dump);
    const auto corpus = load_corpus(dump, sections_for_channel(channel));
    const auto split = make_split(spec, dump.manifest());
    const auto sweep = layer_sweep(corpus, split, channel, train_config(spec), probe_options(spec));
    CurveTable t;
    t.title = "Layer sweep on " + dump.manifest().dataset_id;
    t.channel = channel_name(channel);
    for (const auto& r : sweep) t.points.push_back({r.layer, r.val_a_acc, r.test_a_acc});
    emit(spec, to_json(t));
    const auto best = std::max_element(sweep.begin(), sweep.end(),
                                       [](const auto& a, const auto& b) { return a.test_a_acc < b.test_a_acc; });
    Outcome o;
    o.summary = {{"argmax_test_layer", best->layer}};
    return o;
}

Outcome cmd_cross(const RunSpec& spec) {
    if (spec.dump2.empty()) throw std::invalid_argument("--dump2 is required");
    if (spec.probes.empty()) throw std::invalid_argument("cross needs at least one --probe");
    const auto src = open_dump(spec.dump);
    const auto dst = open_dump(spec.dump2);
    const auto src_split = make_split(spec, src.manifest());
    const auto dst_split = make_split(spec, dst.manifest());
    const auto src_corpus = load_corpus(src);
    const auto dst_corpus = load_corpus(dst);

    GridTable g;
    g.title = "Cross-dataset A-Acc (trained on " + src.manifest().dataset_id + ")";
    g.col_labels = {src.manifest().dataset_id, dst.manifest().dataset_id};
    const auto cfg = train_config(spec);
    const auto opts = probe_options(spec);
    for (const auto& p : spec.probes) {
        const auto kind = parse_probe(p);
        std::vector<std::optional<double>> row;
        if (kind.ensemble) {
            const auto sweep = layer_sweep(src_corpus, src_split, kind.channel, cfg, opts);
            const auto ens = build_ensemble(sweep, spec.k);
            g.row_labels.push_back(ensemble_label(kind.channel));
            row.push_back(evaluate_ensemble(ens, src_corpus, src_split).a_acc);
            try {
                row.push_back(cross_dataset_eval(ens, dst_corpus, dst_split).a_acc);
            } catch (const IncompatibleError& e) {
                std::cerr << e.what() << '\n';
                row.push_back(std::nullopt);
            }
        } else {
            const auto grid = grid_configs(spec);
            const auto trained = grid_search(src_corpus, src_split, kind.spec, grid, opts).best;
            g.row_labels.push_back(probe_label(kind.spec));
            row.push_back(evaluate_probe(trained, build_features(src_corpus, kind.spec), src_split).a_acc);
            try {
                row.push_back(cross_dataset_eval(trained, dst_corpus, dst_split).a_acc);
            } catch (const IncompatibleError& e) {
                std::cerr << e.what() << '\n';
                row.push_back(std::nullopt);
            }
        }
        g.cells.push_back(std::move(row));
    }
    emit(spec, to_json(g));
    return {};
}

Outcome cmd_synth(RunSpec spec) {
    if (spec.out.empty()) throw std::invalid_argument("--out is required");
    SyntheticConfig c = spec.synth;
    if (!spec.synth_config.empty()) {
        std::ifstream in(spec.synth_config);
        if (!in) throw IoError("cannot open " + spec.synth_config);
        json j;
        try {
            in >> j;
        } catch (const json::exception& e) {
            throw FormatError(spec.synth_config + ": " + e.what());
        }
        c = synthetic_config_from_json(j);
    } else {
        c.seed = spec.seed;
        if (!spec.rho.empty())
            c.rho = parse_doubles(spec.rho);
        else if (spec.signal_layer > 0)
            c.rho = SyntheticConfig::one_hot(c.num_layers, spec.signal_layer);
        else if (spec.peak_layer > 0)
            c.rho = SyntheticConfig::triangle(c.num_layers, spec.peak_layer,
                                              spec.peak_width > 0 ? spec.peak_width : c.num_layers / 2.0);
        else
            c.rho.assign(static_cast<std::size_t>(c.num_layers), 1.0);
        if (spec.evidence == "all") c.evidence = {};
        else if (spec.evidence == "token_probs") c.evidence = EvidenceKinds::token_probs_only();
        else if (spec.evidence == "none") c.evidence = EvidenceKinds::none();
        else throw std::invalid_argument("--evidence expects all|token_probs|none");
    }
    const auto data = generate(c);
    write_dump(data.manifest, data.sections, spec.out);
    Outcome o;
    o.summary = {{"config", to_json(c)}};
    if (c.label_noise == 0.0 && c.hidden) o.summary["bayes_accuracy"] = bayes_accuracy(c);
    return o;
}

Outcome cmd_report(const RunSpec& spec) {
    if (spec.input.empty()) throw std::invalid_argument("--in is required");
    std::ifstream in(spec.input);
    if (!in) throw IoError("cannot open " + spec.input);
    json doc;
    try {
        in >> doc;
    } catch (const json::exception& e) {
        throw FormatError(spec.input + ": " + e.what());
    }
    emit(spec, doc);
    return {};
}

std::string utc_now() {
    const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

void write_run_record(const RunSpec& spec, const std::vector<std::string>& args, const Outcome& outcome) {
    if (spec.out.empty() || spec.command == "report") return;
    json record = {
        {"command", spec.command},
        {"argv", args},
        {"run_spec",
         {{"dump", spec.dump},
          {"dump2", spec.dump2},
          {"ratios", spec.ratios},
          {"methods", spec.methods},
          {"probes", spec.probes},
          {"k", spec.k},
          {"grid", spec.grid},
          {"train", to_json(spec.train)},
          {"scheduler", spec.scheduler},
          {"out", spec.out},
          {"format", spec.format}}},
        {"seeds",
         {{"root", spec.seed},
          {"split", derive_seed(spec.seed, "split")},
          {"init", derive_seed(spec.seed, "init")},
          {"batch", derive_seed(spec.seed, "batch")}}},
        {"versions",
         {{"abstain_lab", ABSTAIN_LAB_VERSION},
          {"dump_format", kFormatVersion},
          {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                        std::to_string(EIGEN_MINOR_VERSION)},
          {"compiler", __VERSION__}}},
        {"exit_code", outcome.code},
        {"result", outcome.summary},
        {"timestamp", utc_now()}};
    write_text(spec.out + ".run.json", record.dump(2));
}

void add_common(CLI::App* sub, RunSpec& s, bool needs_dump = true) {
    auto* d = sub->add_option("--dump", s.dump, "Representation dump directory");
    if (needs_dump) d->required();
    sub->add_option("--seed", s.seed, "Root seed");
    sub->add_option("--ratios", s.ratios, "Train,val,test split ratios");
    sub->add_option("--out", s.out, "Output path");
    sub->add_option("--format", s.format, "Report format")->check(CLI::IsMember({"json", "csv", "md"}));
}

void add_training(CLI::App* sub, RunSpec& s) {
    sub->add_option("--lr", s.train.learning_rate, "Learning rate");
    sub->add_option("--wd", s.train.weight_decay, "Weight decay");
    sub->add_option("--scheduler", s.scheduler, "constant|cosine");
    sub->add_option("--batch", s.train.batch_size, "Mini-batch size");
    sub->add_option("--epochs", s.train.max_epochs, "Maximum epochs");
    sub->add_option("--patience", s.train.patience, "Early-stopping patience");
    sub->add_option("--grid", s.grid, "Grid file (JSON) or 'default'");
    sub->add_option("--mlp-hidden", s.mlp_hidden, "Three MLP hidden widths")->expected(3);
    sub->add_option("--d-model", s.encoder.d_model, "Encoder width");
    sub->add_option("--enc-heads", s.encoder.heads, "Encoder attention heads");
    sub->add_option("--d-ff", s.encoder.d_ff, "Encoder feed-forward width");
    sub->add_flag("--no-positional", s.no_positional, "Disable learned positional embeddings");
}

}  // namespace

int run_cli(const std::vector<std::string>& args) {
    RunSpec s;
    CLI::App app{"Abstention probes and baselines over VLM representation dumps", "abstain-lab"};
    app.set_version_flag("--version", ABSTAIN_LAB_VERSION);
    app.require_subcommand(1);

    auto* validate = app.add_subcommand("validate", "Check a dump for format, shape and range problems");
    add_common(validate, s);

    auto* baselines = app.add_subcommand("baselines", "Score the evidence-level baselines");
    add_common(baselines, s);
    baselines->add_option("--methods", s.methods, "Method ids (default: all)")->delimiter(',');

    auto* train = app.add_subcommand("train", "Train a probe (grid search when --grid is given)");
    add_common(train, s);
    add_training(train, s);
    train->add_option("--probe", s.probes, "Probe kind")->required();
    train->add_option("--k", s.k, "Ensemble size");

    auto* eval = app.add_subcommand("eval", "Evaluate a saved probe or ensemble on a dump's test split");
    add_common(eval, s);
    eval->add_option("--model", s.model, "Saved probe or ensemble directory")->required();
    eval->add_option("--predictions", s.predictions, "Write per-sample test scores here");

    auto* sweep = app.add_subcommand("sweep", "Train one probe per layer");
    add_common(sweep, s);
    add_training(sweep, s);
    sweep->add_option("--channel", s.channel, "hidden|attention");

    auto* ensemble = app.add_subcommand("ensemble", "Top-K layer ensemble with majority vote");
    add_common(ensemble, s);
    add_training(ensemble, s);
    ensemble->add_option("--channel", s.channel, "hidden|attention");
    ensemble->add_option("--probe", s.probes, "ensemble-hidden|ensemble-attn");
    ensemble->add_option("--k", s.k, "Ensemble size");

    auto* cross = app.add_subcommand("cross", "Train on --dump, test on --dump and --dump2");
    add_common(cross, s);
    add_training(cross, s);
    cross->add_option("--dump2", s.dump2, "Second dump")->required();
    cross->add_option("--probe", s.probes, "Probe kinds")->required();
    cross->add_option("--k", s.k, "Ensemble size");

    auto* synth = app.add_subcommand("synth", "Generate a synthetic dump with planted signal");
    add_common(synth, s, false);
    synth->add_option("--config", s.synth_config, "SyntheticConfig JSON (overrides other flags)");
    synth->add_option("--n", s.synth.num_samples, "Samples");
    synth->add_option("--layers", s.synth.num_layers, "Layers");
    synth->add_option("--dim", s.synth.hidden_dim, "Hidden width");
    synth->add_option("--heads", s.synth.num_heads, "Attention heads");
    synth->add_option("--rho", s.rho, "Comma-separated signal profile");
    synth->add_option("--signal-layer", s.signal_layer, "One-hot profile at this layer");
    synth->add_option("--peak", s.peak_layer, "Triangular profile peaking at this layer");
    synth->add_option("--peak-width", s.peak_width, "Half-width of the triangular profile");
    synth->add_option("--delta", s.synth.delta, "Class-mean separation");
    synth->add_option("--label-noise", s.synth.label_noise, "Label flip probability");
    synth->add_option("--base-rate", s.synth.base_rate, "Fraction of correct answers");
    synth->add_option("--mu-hi", s.synth.mu_hi, "Visual attention mass, correct answers");
    synth->add_option("--mu-lo", s.synth.mu_lo, "Visual attention mass, wrong answers");
    synth->add_option("--attn-noise", s.synth.attention_noise, "Attention noise scale");
    synth->add_flag("--attention", s.synth.attention, "Write visual attention and SVAR evidence");
    synth->add_flag("--full-attention", s.synth.full_attention, "Write per-token attention");
    synth->add_flag("--image-hidden", s.synth.image_hidden, "Write image-token hidden states");
    synth->add_flag("!--no-hidden", s.synth.hidden, "Skip the hidden section");
    synth->add_option("--evidence", s.evidence, "all|token_probs|none");

    auto* report = app.add_subcommand("report", "Re-render a JSON report");
    report->add_option("--in", s.input, "JSON report")->required();
    report->add_option("--out", s.out, "Output path");
    report->add_option("--format", s.format, "Report format")->check(CLI::IsMember({"json", "csv", "md"}));

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    if (!reversed.empty()) reversed.pop_back();  // program name
    try {
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kExitOk : kExitUsage;
    }
    s.command = app.get_subcommands().front()->get_name();

    try {
        Outcome o;
        if (s.command == "validate") o = cmd_validate(s);
        else if (s.command == "baselines") o = cmd_baselines(s);
        else if (s.command == "train") o = cmd_train(s);
        else if (s.command == "eval") o = cmd_eval(s);
        else if (s.command == "sweep") o = cmd_sweep(s);
        else if (s.command == "ensemble") {
            Channel ch = parse_channel(s.channel);
            if (!s.probes.empty()) {
                const auto kind = parse_probe(s.probes.front());
                if (!kind.ensemble) throw std::invalid_argument("ensemble --probe must be ensemble-hidden or ensemble-attn");
                ch = kind.channel;
            }
            o = cmd_ensemble(s, ch);
        } else if (s.command == "cross") o = cmd_cross(s);
        else if (s.command == "synth") o = cmd_synth(s);
        else o = cmd_report(s);
        write_run_record(s, args, o);
        return o.code;
    } catch (const IoError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitFailure;
    } catch (const std::invalid_argument& e) {
        std::cerr << "usage error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const std::out_of_range& e) {
        std::cerr << "usage error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitFailure;
    }
}

int run_cli(int argc, const char* const* argv) {
    return run_cli(std::vector<std::string>(argv, argv + argc));
}

}  // namespace abstain
