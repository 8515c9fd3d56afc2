#include "abstain/nn/checkpoint.hpp"

#include <fstream>

#include "abstain/error.hpp"

namespace abstain::nn {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

fs::path with_ext(const fs::path& stem, const char* ext) {
    fs::path p = stem;
    p += ext;
    return p;
}

const Vec<float>& params_of(const AnyProbe& p) {
    return std::visit([](const auto& probe) -> const Vec<float>& { return probe.parameters(); }, p);
}

}  // namespace

json probe_manifest(const AnyProbe& probe) {
    json j;
    if (const auto* mlp = std::get_if<MlpProbe<float>>(&probe)) {
        j["architecture"] = "mlp";
        j["widths"] = mlp->widths();
        j["seed"] = mlp->seed();
    } else {
        const auto& enc = std::get<EncoderProbe<float>>(probe);
        const auto& d = enc.dims();
        j["architecture"] = "encoder";
        j["token_dim"] = d.token_dim;
        j["d_model"] = d.d_model;
        j["heads"] = d.heads;
        j["d_ff"] = d.d_ff;
        j["max_tokens"] = d.max_tokens;
        j["positional"] = d.positional;
        j["blocks"] = EncoderProbe<float>::kBlocks;
        j["seed"] = enc.seed();
    }
    j["num_parameters"] = params_of(probe).size();
    j["dtype"] = "float32-le";
    return j;
}

AnyProbe probe_from_manifest(const json& j) {
    try {
        const auto arch = j.at("architecture").get<std::string>();
        const auto seed = j.at("seed").get<std::uint64_t>();
        if (arch == "mlp") return MlpProbe<float>(j.at("widths").get<MlpProbe<float>::Widths>(), seed);
        if (arch == "encoder") {
            EncoderDims d;
            d.token_dim = j.at("token_dim").get<int>();
            d.d_model = j.at("d_model").get<int>();
            d.heads = j.at("heads").get<int>();
            d.d_ff = j.at("d_ff").get<int>();
            d.max_tokens = j.at("max_tokens").get<int>();
            d.positional = j.value("positional", true);
            return EncoderProbe<float>(d, seed);
        }
        throw FormatError("unknown probe architecture '" + arch + "'");
    } catch (const json::exception& e) {
        throw FormatError(std::string("probe manifest: ") + e.what());
    }
}

void save_probe(const AnyProbe& probe, const fs::path& stem) {
    if (stem.has_parent_path()) fs::create_directories(stem.parent_path());
    {
        std::ofstream out(with_ext(stem, ".json"), std::ios::trunc);
        if (!out) throw IoError("cannot write " + with_ext(stem, ".json").string());
        out << probe_manifest(probe).dump(2) << '\n';
    }
    const auto& params = params_of(probe);
    std::ofstream out(with_ext(stem, ".bin"), std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + with_ext(stem, ".bin").string());
    out.write(reinterpret_cast<const char*>(params.data()), static_cast<std::streamsize>(params.size() * sizeof(float)));
    if (!out) throw IoError("short write to " + with_ext(stem, ".bin").string());
}

AnyProbe load_probe(const fs::path& stem) {
    std::ifstream in(with_ext(stem, ".json"));
    if (!in) throw IoError("cannot open " + with_ext(stem, ".json").string());
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw FormatError(std::string("probe manifest: ") + e.what());
    }
    AnyProbe probe = probe_from_manifest(j);
    const auto blob = with_ext(stem, ".bin");
    std::error_code ec;
    const auto bytes = fs::file_size(blob, ec);
    if (ec) throw IoError("cannot open " + blob.string());
    std::visit(
        [&](auto& p) {
            auto& params = p.parameters();
            if (bytes != static_cast<std::uintmax_t>(params.size()) * sizeof(float))
                throw ShapeError(blob.string() + ": parameter count does not match architecture");
            std::ifstream b(blob, std::ios::binary);
            b.read(reinterpret_cast<char*>(params.data()), static_cast<std::streamsize>(bytes));
            if (!b) throw IoError("short read from " + blob.string());
        },
        probe);
    return probe;
}

}  // namespace abstain::nn
