#pragma once

#include <filesystem>
#include <variant>

#include <json.hpp>

#include "abstain/nn/encoder.hpp"
#include "abstain/nn/mlp.hpp"

namespace abstain::nn {

using AnyProbe = std::variant<MlpProbe<float>, EncoderProbe<float>>;

/// Architecture, dimensions, seed and parameter count of a probe.
nlohmann::json probe_manifest(const AnyProbe& probe);

/// Writes `<stem>.json` (manifest) and `<stem>.bin` (flat little-endian
/// float32 parameters in layout order) next to each other.
void save_probe(const AnyProbe& probe, const std::filesystem::path& stem);
AnyProbe load_probe(const std::filesystem::path& stem);

/// Rebuilds a probe of the described architecture; parameters are left at
/// their seeded initialization.
AnyProbe probe_from_manifest(const nlohmann::json& manifest);

}  // namespace abstain::nn
