#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"

#include "emorank/codebook.h"
#include "emorank/extractor.h"
#include "emorank/features.h"
#include "emorank/synthcorpus.h"
#include "emorank/training.h"

namespace emorank {

nlohmann::json feature_config_to_json(const FeatureConfig& c);
FeatureConfig feature_config_from_json(const nlohmann::json& j);

struct CodebookConfig {
    std::size_t n_bins = 3;
    BinPolicy bin_policy = BinPolicy::kQuantile;
    LevelAveraging level_averaging = LevelAveraging::kPooled;

    nlohmann::json to_json() const;
    static CodebookConfig from_json(const nlohmann::json& j);
};

/// One document for every stage. Sections: features, extractor, train,
/// codebook, synth. Unknown keys anywhere are rejected.
struct RunConfig {
    FeatureConfig features;
    ExtractorConfig extractor;
    TrainConfig train;
    CodebookConfig codebook;
    SynthSpec synth;
    /// Set when the extractor section names its classes explicitly.
    bool explicit_classes = false;

    nlohmann::json to_json() const;
    /// Missing keys keep the values already in `base`.
    static RunConfig from_json(const nlohmann::json& j, const RunConfig& base);
    static RunConfig from_json(const nlohmann::json& j);
    /// SHA-256 of the canonical (sorted-key, compact) JSON dump.
    std::string hash() const;
};

/// Named starting points: "paper" (the documented defaults) and "desk"
/// (small extractor, 2000 iterations, lr 1e-3).
RunConfig preset(const std::string& name);

RunConfig load_run_config(const std::filesystem::path& path, const RunConfig& base);

/// Every key with its value in `c`, one per line, for --help; keys whose
/// value differs in `alt` also show that value under `alt_name`.
std::string describe_config(const RunConfig& c, const RunConfig& alt, const std::string& alt_name);

/// Applies "section.key=value" overrides; the value is parsed as JSON and
/// falls back to a plain string.
nlohmann::json parse_overrides(const std::vector<std::string>& assignments);

}  // namespace emorank
