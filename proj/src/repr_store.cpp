#include "abstain/repr_store.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include <fcntl.h>
#include <sys/stat.h>
#include <unistd.h>

#include "abstain/error.hpp"
#include "abstain/rng.hpp"

static_assert(std::endian::native == std::endian::little, "dump I/O assumes a little-endian host");

namespace abstain {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

constexpr const char* kManifestFile = "manifest.json";
constexpr const char* kHiddenFile = "hidden.bin";
constexpr const char* kVisAttnFile = "visattn.bin";
constexpr const char* kSvarFile = "svar.bin";
constexpr const char* kAttnFullFile = "attn_full.bin";
constexpr const char* kAttnFullIndex = "attn_full.idx";
constexpr const char* kImgHidFile = "imghid.bin";
constexpr const char* kImgHidIndex = "imghid.idx";

std::size_t sz(int v) { return static_cast<std::size_t>(v); }

// ---------------------------------------------------------------------------
// manifest JSON

json evidence_to_json(const EvidenceBundle& e) {
    json j = json::object();
    j["token_probs"] = e.token_probs;
    j["sampled_answers"] = e.sampled_answers;
    if (e.verbalized_rating) j["verbalized_rating"] = *e.verbalized_rating;
    if (e.judge_p_true) j["judge_p_true"] = *e.judge_p_true;
    if (e.judge_p_false) j["judge_p_false"] = *e.judge_p_false;
    if (e.rtuning_suffix_present) j["rtuning_suffix_present"] = *e.rtuning_suffix_present;
    return j;
}

template <typename T>
std::optional<T> opt_field(const json& j, const char* key) {
    auto it = j.find(key);
    if (it == j.end() || it->is_null()) return std::nullopt;
    return it->get<T>();
}

EvidenceBundle evidence_from_json(const json& j) {
    EvidenceBundle e;
    if (auto it = j.find("token_probs"); it != j.end()) e.token_probs = it->get<std::vector<double>>();
    if (auto it = j.find("sampled_answers"); it != j.end()) e.sampled_answers = it->get<std::vector<std::string>>();
    e.verbalized_rating = opt_field<int>(j, "verbalized_rating");
    e.judge_p_true = opt_field<double>(j, "judge_p_true");
    e.judge_p_false = opt_field<double>(j, "judge_p_false");
    e.rtuning_suffix_present = opt_field<bool>(j, "rtuning_suffix_present");
    return e;
}

// ---------------------------------------------------------------------------
// raw file helpers

class Fd {
public:
    explicit Fd(const fs::path& p) : fd_(::open(p.c_str(), O_RDONLY | O_CLOEXEC)) {
        if (fd_ < 0) throw IoError("cannot open " + p.string());
    }
    Fd(const Fd&) = delete;
    Fd& operator=(const Fd&) = delete;
    ~Fd() {
        if (fd_ >= 0) ::close(fd_);
    }
    int get() const { return fd_; }

private:
    int fd_;
};

void pread_exact(int fd, void* dst, std::size_t bytes, std::size_t offset, const std::string& what) {
    auto* out = static_cast<char*>(dst);
    while (bytes > 0) {
        ssize_t got = ::pread(fd, out, bytes, static_cast<off_t>(offset));
        if (got <= 0) throw ShapeError(what + ": truncated read");
        out += got;
        bytes -= static_cast<std::size_t>(got);
        offset += static_cast<std::size_t>(got);
    }
}

/// A section file opened for positional reads: header checked, payload
/// length known in scalars of `elem_bytes` each.
class SectionFile {
public:
    SectionFile(const fs::path& p, std::size_t elem_bytes) : name_(p.filename().string()), fd_(p) {
        struct stat st {};
        if (::fstat(fd_.get(), &st) != 0) throw IoError("cannot stat " + p.string());
        auto bytes = static_cast<std::size_t>(st.st_size);
        if (bytes < kHeaderBytes) throw FormatError(name_ + ": file shorter than header");
        std::array<char, kHeaderBytes> header{};
        pread_exact(fd_.get(), header.data(), kHeaderBytes, 0, name_);
        if (!std::equal(kMagic.begin(), kMagic.end(), header.begin())) throw FormatError(name_ + ": bad magic");
        std::uint32_t version = 0;
        std::memcpy(&version, header.data() + 4, sizeof version);
        if (version != kFormatVersion)
            throw FormatError(name_ + ": unsupported version " + std::to_string(version));
        auto payload = bytes - kHeaderBytes;
        if (payload % elem_bytes != 0) throw ShapeError(name_ + ": payload not a whole number of scalars");
        count_ = payload / elem_bytes;
    }

    std::size_t count() const { return count_; }
    const std::string& name() const { return name_; }

    template <typename T>
    void read(std::size_t first, std::size_t n, T* out) const {
        if (first + n > count_) throw ShapeError(name_ + ": read past end of section");
        pread_exact(fd_.get(), out, n * sizeof(T), kHeaderBytes + first * sizeof(T), name_);
    }

private:
    std::string name_;
    Fd fd_;
    std::size_t count_ = 0;
};

void write_header(std::ofstream& out) {
    out.write(kMagic.data(), kMagic.size());
    std::uint32_t v = kFormatVersion;
    out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

std::ofstream open_out(const fs::path& p) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + p.string());
    return out;
}

void write_floats(const fs::path& p, const float* data, std::size_t n) {
    auto out = open_out(p);
    write_header(out);
    out.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(n * sizeof(float)));
    if (!out) throw IoError("short write to " + p.string());
}

void write_variable(const fs::path& bin, const fs::path& idx, const std::vector<RowMatrixXf>& mats) {
    std::vector<std::uint64_t> offsets, lengths;
    offsets.reserve(mats.size());
    lengths.reserve(mats.size());
    auto out = open_out(bin);
    write_header(out);
    std::uint64_t pos = 0;
    for (const auto& m : mats) {
        auto n = static_cast<std::uint64_t>(m.size());
        offsets.push_back(pos);
        lengths.push_back(n);
        out.write(reinterpret_cast<const char*>(m.data()), static_cast<std::streamsize>(n * sizeof(float)));
        pos += n;
    }
    if (!out) throw IoError("short write to " + bin.string());
    auto ix = open_out(idx);
    write_header(ix);
    ix.write(reinterpret_cast<const char*>(offsets.data()), static_cast<std::streamsize>(offsets.size() * 8));
    ix.write(reinterpret_cast<const char*>(lengths.data()), static_cast<std::streamsize>(lengths.size() * 8));
    if (!ix) throw IoError("short write to " + idx.string());
}

void check_dims(const DumpManifest& m) {
    if (m.num_samples < 1 || m.num_layers < 1 || m.hidden_dim < 1 || m.num_heads < 1)
        throw ShapeError("manifest dimensions must all be >= 1");
    if (sz(m.num_samples) != m.samples.size())
        throw ShapeError("manifest lists " + std::to_string(m.samples.size()) + " samples but num_samples = " +
                         std::to_string(m.num_samples));
}

void expect_size(const char* what, std::size_t got, std::size_t want) {
    if (got != want)
        throw ShapeError(std::string(what) + ": expected " + std::to_string(want) + " values, got " +
                         std::to_string(got));
}

struct VariableIndex {
    std::vector<std::uint64_t> offsets;
    std::vector<std::uint64_t> lengths;
};

VariableIndex read_index(const fs::path& p, std::size_t n) {
    SectionFile f(p, sizeof(std::uint64_t));
    if (f.count() != 2 * n)
        throw ShapeError(f.name() + ": expected " + std::to_string(2 * n) + " entries, got " +
                         std::to_string(f.count()));
    VariableIndex ix;
    ix.offsets.resize(n);
    ix.lengths.resize(n);
    f.read(0, n, ix.offsets.data());
    f.read(n, n, ix.lengths.data());
    return ix;
}

}  // namespace

// ---------------------------------------------------------------------------

json manifest_to_json(const DumpManifest& m) {
    json j;
    j["format_version"] = m.format_version;
    j["model_id"] = m.model_id;
    j["dataset_id"] = m.dataset_id;
    j["num_samples"] = m.num_samples;
    j["num_layers"] = m.num_layers;
    j["hidden_dim"] = m.hidden_dim;
    j["num_heads"] = m.num_heads;
    j["has_hidden"] = m.has_hidden;
    j["has_visual_attention"] = m.has_visual_attention;
    j["has_svar_evidence"] = m.has_svar_evidence;
    j["has_full_attention"] = m.has_full_attention;
    j["has_image_hidden"] = m.has_image_hidden;
    j["producer"] = m.producer;
    json samples = json::array();
    for (const auto& s : m.samples) {
        samples.push_back({{"sample_id", s.sample_id},
                           {"answer_text", s.answer_text},
                           {"label", s.label},
                           {"num_input_tokens", s.num_input_tokens},
                           {"visual_token_count", s.visual_token_count},
                           {"evidence", evidence_to_json(s.evidence)}});
    }
    j["samples"] = std::move(samples);
    return j;
}

DumpManifest manifest_from_json(const json& j) {
    try {
        DumpManifest m;
        m.format_version = j.at("format_version").get<std::uint32_t>();
        if (m.format_version != kFormatVersion)
            throw FormatError("manifest: unsupported format_version " + std::to_string(m.format_version));
        m.model_id = j.value("model_id", "");
        m.dataset_id = j.value("dataset_id", "");
        m.num_samples = j.at("num_samples").get<int>();
        m.num_layers = j.at("num_layers").get<int>();
        m.hidden_dim = j.at("hidden_dim").get<int>();
        m.num_heads = j.at("num_heads").get<int>();
        m.has_hidden = j.value("has_hidden", false);
        m.has_visual_attention = j.value("has_visual_attention", false);
        m.has_svar_evidence = j.value("has_svar_evidence", false);
        m.has_full_attention = j.value("has_full_attention", false);
        m.has_image_hidden = j.value("has_image_hidden", false);
        m.producer = j.value("producer", json::object());
        for (const auto& s : j.at("samples")) {
            SampleMeta meta;
            meta.sample_id = s.value("sample_id", "");
            meta.answer_text = s.value("answer_text", "");
            meta.label = s.at("label").get<double>();
            meta.num_input_tokens = s.value("num_input_tokens", 0);
            meta.visual_token_count = s.value("visual_token_count", 0);
            if (auto it = s.find("evidence"); it != s.end()) meta.evidence = evidence_from_json(*it);
            m.samples.push_back(std::move(meta));
        }
        return m;
    } catch (const json::exception& e) {
        throw FormatError(std::string("manifest: ") + e.what());
    }
}

void write_dump(const DumpManifest& manifest, const TensorSections& sections, const fs::path& destination) {
    check_dims(manifest);
    const std::size_t n = sz(manifest.num_samples), L = sz(manifest.num_layers), D = sz(manifest.hidden_dim),
                      H = sz(manifest.num_heads);

    if (manifest.has_hidden) expect_size("hidden", sections.hidden.size(), n * L * D);
    if (manifest.has_visual_attention) expect_size("visual_attention", sections.visual_attention.size(), n * L * H);
    if (manifest.has_svar_evidence) expect_size("svar_evidence", sections.svar_evidence.size(), n * L * H);
    if (manifest.has_full_attention) {
        expect_size("full_attention samples", sections.full_attention.size(), n);
        for (std::size_t i = 0; i < n; ++i) {
            const auto& m = sections.full_attention[i];
            if (m.rows() != manifest.samples[i].num_input_tokens || sz(static_cast<int>(m.cols())) != L * H)
                throw ShapeError("full_attention[" + std::to_string(i) + "] must be n x (L*H)");
        }
    }
    if (manifest.has_image_hidden) {
        expect_size("image_hidden samples", sections.image_hidden.size(), n);
        for (std::size_t i = 0; i < n; ++i) {
            const auto& m = sections.image_hidden[i];
            if (m.rows() != manifest.samples[i].visual_token_count || sz(static_cast<int>(m.cols())) != L * D)
                throw ShapeError("image_hidden[" + std::to_string(i) + "] must be |V| x (L*D)");
        }
    }

    std::error_code ec;
    fs::create_directories(destination, ec);
    if (ec) throw IoError("cannot create " + destination.string() + ": " + ec.message());

    // Stale sections from an earlier write would contradict the new flags.
    for (const char* f : {kHiddenFile, kVisAttnFile, kSvarFile, kAttnFullFile, kAttnFullIndex, kImgHidFile, kImgHidIndex})
        fs::remove(destination / f, ec);

    {
        std::ofstream out(destination / kManifestFile, std::ios::trunc);
        if (!out) throw IoError("cannot write " + (destination / kManifestFile).string());
        out << manifest_to_json(manifest).dump(1) << '\n';
        if (!out) throw IoError("short write to manifest");
    }
    if (manifest.has_hidden) write_floats(destination / kHiddenFile, sections.hidden.data(), sections.hidden.size());
    if (manifest.has_visual_attention)
        write_floats(destination / kVisAttnFile, sections.visual_attention.data(), sections.visual_attention.size());
    if (manifest.has_svar_evidence)
        write_floats(destination / kSvarFile, sections.svar_evidence.data(), sections.svar_evidence.size());
    if (manifest.has_full_attention)
        write_variable(destination / kAttnFullFile, destination / kAttnFullIndex, sections.full_attention);
    if (manifest.has_image_hidden)
        write_variable(destination / kImgHidFile, destination / kImgHidIndex, sections.image_hidden);
}

// ---------------------------------------------------------------------------

struct DumpReader::Impl {
    fs::path root;
    DumpManifest manifest;
    std::optional<SectionFile> hidden, visattn, svar, attn_full, imghid;
    VariableIndex attn_index, img_index;
};

DumpReader read_dump(const fs::path& source) {
    auto impl = std::make_shared<DumpReader::Impl>();
    impl->root = source;
    const auto manifest_path = source / kManifestFile;
    if (!fs::exists(manifest_path)) throw IoError("missing " + manifest_path.string());
    {
        std::ifstream in(manifest_path);
        if (!in) throw IoError("cannot open " + manifest_path.string());
        json j;
        try {
            in >> j;
        } catch (const json::exception& e) {
            throw FormatError(std::string("manifest.json: ") + e.what());
        }
        impl->manifest = manifest_from_json(j);
    }
    auto& m = impl->manifest;
    check_dims(m);
    const std::size_t n = sz(m.num_samples), L = sz(m.num_layers), D = sz(m.hidden_dim), H = sz(m.num_heads);

    auto open_fixed = [&](bool flag, const char* file, std::size_t per_sample, std::optional<SectionFile>& slot) {
        const auto p = source / file;
        if (!flag) {
            if (fs::exists(p)) throw ShapeError(std::string(file) + " present but its manifest flag is false");
            return;
        }
        if (!fs::exists(p)) throw ShapeError(std::string(file) + " missing but flagged in manifest");
        slot.emplace(p, sizeof(float));
        if (slot->count() != n * per_sample)
            throw ShapeError(std::string(file) + ": manifest implies " + std::to_string(n * per_sample) +
                             " scalars, file holds " + std::to_string(slot->count()));
    };
    open_fixed(m.has_hidden, kHiddenFile, L * D, impl->hidden);
    open_fixed(m.has_visual_attention, kVisAttnFile, L * H, impl->visattn);
    open_fixed(m.has_svar_evidence, kSvarFile, L * H, impl->svar);

    auto open_variable = [&](bool flag, const char* file, const char* index, std::optional<SectionFile>& slot,
                             VariableIndex& ix, auto rows_of, std::size_t cols) {
        const auto p = source / file;
        const auto q = source / index;
        if (!flag) {
            if (fs::exists(p) || fs::exists(q))
                throw ShapeError(std::string(file) + " present but its manifest flag is false");
            return;
        }
        if (!fs::exists(p) || !fs::exists(q)) throw ShapeError(std::string(file) + " missing but flagged in manifest");
        slot.emplace(p, sizeof(float));
        ix = read_index(q, n);
        for (std::size_t i = 0; i < n; ++i) {
            const std::size_t want = rows_of(m.samples[i]) * cols;
            if (ix.lengths[i] != want)
                throw ShapeError(std::string(index) + ": sample " + std::to_string(i) + " length " +
                                 std::to_string(ix.lengths[i]) + " != " + std::to_string(want));
            if (ix.offsets[i] + ix.lengths[i] > slot->count())
                throw ShapeError(std::string(index) + ": sample " + std::to_string(i) + " runs past end of data");
        }
    };
    open_variable(m.has_full_attention, kAttnFullFile, kAttnFullIndex, impl->attn_full, impl->attn_index,
                  [](const SampleMeta& s) { return sz(std::max(s.num_input_tokens, 0)); }, L * H);
    open_variable(m.has_image_hidden, kImgHidFile, kImgHidIndex, impl->imghid, impl->img_index,
                  [](const SampleMeta& s) { return sz(std::max(s.visual_token_count, 0)); }, L * D);

    DumpReader r;
    r.impl_ = std::move(impl);
    return r;
}

const DumpManifest& DumpReader::manifest() const { return impl_->manifest; }
const fs::path& DumpReader::path() const { return impl_->root; }
std::size_t DumpReader::size() const { return impl_->manifest.samples.size(); }

SampleRecord DumpReader::record(std::size_t i, SectionMask mask) const {
    const auto& m = impl_->manifest;
    if (i >= size()) throw std::out_of_range("sample index " + std::to_string(i) + " out of range");
    const Eigen::Index L = m.num_layers, D = m.hidden_dim, H = m.num_heads;
    SampleRecord r;
    r.index = i;
    r.meta = &m.samples[i];
    auto fixed = [&](const std::optional<SectionFile>& f, Eigen::Index cols, std::optional<RowMatrixXf>& dst) {
        RowMatrixXf out(L, cols);
        f->read(i * static_cast<std::size_t>(L * cols), static_cast<std::size_t>(out.size()), out.data());
        dst = std::move(out);
    };
    if (impl_->hidden && has_section(mask, Section::Hidden)) fixed(impl_->hidden, D, r.hidden);
    if (impl_->visattn && has_section(mask, Section::VisualAttention)) fixed(impl_->visattn, H, r.visual_attention);
    if (impl_->svar && has_section(mask, Section::SvarEvidence)) fixed(impl_->svar, H, r.svar_evidence);
    if (impl_->attn_full && has_section(mask, Section::FullAttention)) {
        RowMatrixXf out(r.meta->num_input_tokens, L * H);
        impl_->attn_full->read(impl_->attn_index.offsets[i], impl_->attn_index.lengths[i], out.data());
        r.full_attention = std::move(out);
    }
    if (impl_->imghid && has_section(mask, Section::ImageHidden)) {
        RowMatrixXf out(r.meta->visual_token_count, L * D);
        impl_->imghid->read(impl_->img_index.offsets[i], impl_->img_index.lengths[i], out.data());
        r.image_hidden = std::move(out);
    }
    return r;
}

// ---------------------------------------------------------------------------
// validation

json ValidationReport::to_json() const {
    json issues_json = json::array();
    for (const auto& is : issues) {
        json e = {{"kind", is.kind}, {"section", is.section}, {"message", is.message}};
        if (is.sample) e["sample"] = *is.sample;
        if (is.layer) e["layer"] = *is.layer;
        issues_json.push_back(std::move(e));
    }
    return {{"ok", ok()},
            {"issues", std::move(issues_json)},
            {"nan_count", nan_count},
            {"inf_count", inf_count},
            {"label_out_of_range", label_out_of_range},
            {"attention_out_of_range", attention_out_of_range},
            {"missing_evidence", missing_evidence}};
}

namespace {

/// Scans an L-row tensor slice (row = layer) for non-finite values and, for
/// attention sections, values outside [0, 1 + slack]. Reports the first
/// offending element per (sample, layer).
void scan_rows(const RowMatrixXf& t, bool attention, const char* section, std::size_t sample,
               ValidationReport& rep, Eigen::Index layer_cols) {
    for (Eigen::Index r = 0; r < t.rows(); ++r) {
        for (Eigen::Index c = 0; c < t.cols(); ++c) {
            const float v = t(r, c);
            // Layer is the row for fixed sections and the column block for per-token ones.
            const std::size_t layer =
                layer_cols > 0 ? static_cast<std::size_t>(c / layer_cols) : static_cast<std::size_t>(r);
            if (std::isnan(v) || std::isinf(v)) {
                (std::isnan(v) ? rep.nan_count : rep.inf_count)++;
                std::ostringstream msg;
                msg << (std::isnan(v) ? "NaN" : "Inf") << " in " << section << " at sample " << sample << ", layer "
                    << layer;
                rep.issues.push_back({"non_finite", section, sample, layer, msg.str()});
            } else if (attention && (v < 0.0f || v > 1.0 + kAttentionSlack)) {
                rep.attention_out_of_range++;
                std::ostringstream msg;
                msg << "attention value " << v << " outside [0, 1] in " << section << " at sample " << sample
                    << ", layer " << layer;
                rep.issues.push_back({"attention_range", section, sample, layer, msg.str()});
            }
        }
    }
}

}  // namespace

ValidationReport validate_dump(const fs::path& source) {
    ValidationReport rep;
    std::optional<DumpReader> reader;
    try {
        reader = read_dump(source);
    } catch (const IoError& e) {
        rep.issues.push_back({"io", "manifest.json", std::nullopt, std::nullopt, e.what()});
        return rep;
    } catch (const ShapeError& e) {
        rep.issues.push_back({"shape", "", std::nullopt, std::nullopt, e.what()});
        return rep;
    } catch (const FormatError& e) {
        rep.issues.push_back({"format", "", std::nullopt, std::nullopt, e.what()});
        return rep;
    } catch (const std::exception& e) {
        rep.issues.push_back({"format", "", std::nullopt, std::nullopt, e.what()});
        return rep;
    }

    const auto& m = reader->manifest();
    const Eigen::Index D = m.hidden_dim, H = m.num_heads;
    std::map<std::string, std::size_t> missing = {
        {"token_probability", 0}, {"verbalized_confidence", 0}, {"self_consistency", 0}, {"prompt_to_abstain", 0},
        {"vlm_judge", 0},         {"rtuning", 0},               {"svar", 0},             {"contextual_lens", 0}};

    for (std::size_t i = 0; i < reader->size(); ++i) {
        const auto& s = m.samples[i];
        if (!(s.label >= 0.0 && s.label <= 1.0)) {
            rep.label_out_of_range++;
            rep.issues.push_back({"label_range", "label", i, std::nullopt,
                                  "label " + std::to_string(s.label) + " out of range at sample " + std::to_string(i)});
        }
        if (s.num_input_tokens < 0 || s.visual_token_count < 0 || s.visual_token_count > s.num_input_tokens) {
            rep.issues.push_back({"token_counts", "samples", i, std::nullopt,
                                  "visual_token_count exceeds num_input_tokens at sample " + std::to_string(i)});
        }
        const auto& e = s.evidence;
        for (double p : e.token_probs) {
            if (!(p > 0.0 && p <= 1.0)) {
                rep.issues.push_back({"evidence_range", "token_probs", i, std::nullopt,
                                      "token probability outside (0, 1] at sample " + std::to_string(i)});
                break;
            }
        }
        if (e.judge_p_true.has_value() != e.judge_p_false.has_value()) {
            rep.issues.push_back({"evidence_pairing", "judge", i, std::nullopt,
                                  "judge_p_true/judge_p_false must be present together (sample " +
                                      std::to_string(i) + ")"});
        }
        for (auto p : {e.judge_p_true, e.judge_p_false}) {
            if (p && !(*p >= 0.0 && *p <= 1.0)) {
                rep.issues.push_back({"evidence_range", "judge", i, std::nullopt,
                                      "judge probability outside [0, 1] at sample " + std::to_string(i)});
            }
        }

        if (e.token_probs.empty()) missing["token_probability"]++;
        if (!e.verbalized_rating) missing["verbalized_confidence"]++;
        if (e.sampled_answers.empty()) missing["self_consistency"]++;
        if (s.answer_text.empty()) missing["prompt_to_abstain"]++;
        if (!e.judge_p_true || !e.judge_p_false) missing["vlm_judge"]++;
        if (!e.rtuning_suffix_present) missing["rtuning"]++;
        if (!m.has_svar_evidence) missing["svar"]++;
        if (!m.has_image_hidden || !m.has_hidden) missing["contextual_lens"]++;

        SampleRecord r;
        try {
            r = reader->record(i);
        } catch (const std::exception& ex) {
            rep.issues.push_back({"shape", "", i, std::nullopt, ex.what()});
            continue;
        }
        if (r.hidden) scan_rows(*r.hidden, false, "hidden", i, rep, 0);
        if (r.visual_attention) scan_rows(*r.visual_attention, true, "visual_attention", i, rep, 0);
        if (r.svar_evidence) scan_rows(*r.svar_evidence, true, "svar_evidence", i, rep, 0);
        if (r.full_attention) scan_rows(*r.full_attention, true, "full_attention", i, rep, H);
        if (r.image_hidden) scan_rows(*r.image_hidden, false, "image_hidden", i, rep, D);
    }
    rep.missing_evidence = std::move(missing);
    return rep;
}

// ---------------------------------------------------------------------------

SplitAssignment split_dataset(std::size_t num_samples, SplitRatios ratios, std::uint64_t seed) {
    if (ratios.train < 0 || ratios.val < 0 || ratios.test < 0 || ratios.train <= 0)
        throw std::invalid_argument("split ratios must be nonnegative with a positive train share");
    if (std::abs(ratios.train + ratios.val + ratios.test - 1.0) > 1e-9)
        throw std::invalid_argument("split ratios must sum to 1");
    std::vector<std::size_t> perm(num_samples);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    Rng rng(seed);
    std::shuffle(perm.begin(), perm.end(), rng);

    const auto n = static_cast<double>(num_samples);
    const auto n_val = static_cast<std::size_t>(std::floor(ratios.val * n + 1e-9));
    const auto n_test = static_cast<std::size_t>(std::floor(ratios.test * n + 1e-9));
    const std::size_t n_train = num_samples - n_val - n_test;
    if ((ratios.val > 0 && n_val == 0) || (ratios.test > 0 && n_test == 0) || n_train == 0)
        throw std::invalid_argument("too few samples (" + std::to_string(num_samples) +
                                    ") to give every split with a positive ratio at least one sample");

    SplitAssignment s;
    s.train.assign(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n_train));
    s.val.assign(perm.begin() + static_cast<std::ptrdiff_t>(n_train),
                 perm.begin() + static_cast<std::ptrdiff_t>(n_train + n_val));
    s.test.assign(perm.begin() + static_cast<std::ptrdiff_t>(n_train + n_val), perm.end());
    std::sort(s.train.begin(), s.train.end());
    std::sort(s.val.begin(), s.val.end());
    std::sort(s.test.begin(), s.test.end());
    return s;
}

}  // namespace abstain
