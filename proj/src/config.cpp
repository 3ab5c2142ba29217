#include "emorank/config.h"

#include <sstream>

#include "emorank/binary_io.h"
#include "emorank/error.h"

namespace emorank {

using nlohmann::json;

json feature_config_to_json(const FeatureConfig& c) {
    return json{{"sample_rate_hz", c.sample_rate_hz}, {"window_ms", c.window_ms}, {"overlap_ratio", c.overlap_ratio},
                {"n_mels", c.n_mels},                 {"fmin_hz", c.fmin_hz},     {"fmax_hz", c.fmax_hz}};
}

FeatureConfig feature_config_from_json(const json& j) {
    require(j.is_object(), ErrorKind::kInvalidArgument, "features config must be a JSON object");
    FeatureConfig c;
    for (auto it = j.begin(); it != j.end(); ++it) {
        const std::string& k = it.key();
        try {
            if (k == "sample_rate_hz") c.sample_rate_hz = it->get<double>();
            else if (k == "window_ms") c.window_ms = it->get<double>();
            else if (k == "overlap_ratio") c.overlap_ratio = it->get<double>();
            else if (k == "n_mels") c.n_mels = it->get<std::size_t>();
            else if (k == "fmin_hz") c.fmin_hz = it->get<double>();
            else if (k == "fmax_hz") c.fmax_hz = it->get<double>();
            else fail(ErrorKind::kInvalidArgument, "unknown features config key '" + k + "'");
        } catch (const json::exception& e) {
            fail(ErrorKind::kInvalidArgument, "features config key '" + k + "': " + e.what());
        }
    }
    c.validate();
    return c;
}

json CodebookConfig::to_json() const {
    return json{{"n_bins", n_bins}, {"bin_policy", to_string(bin_policy)}, {"level_averaging", to_string(level_averaging)}};
}

CodebookConfig CodebookConfig::from_json(const json& j) {
    require(j.is_object(), ErrorKind::kInvalidArgument, "codebook config must be a JSON object");
    CodebookConfig c;
    for (auto it = j.begin(); it != j.end(); ++it) {
        const std::string& k = it.key();
        try {
            if (k == "n_bins") c.n_bins = it->get<std::size_t>();
            else if (k == "bin_policy") c.bin_policy = parse_bin_policy(it->get<std::string>());
            else if (k == "level_averaging") c.level_averaging = parse_level_averaging(it->get<std::string>());
            else fail(ErrorKind::kInvalidArgument, "unknown codebook config key '" + k + "'");
        } catch (const json::exception& e) {
            fail(ErrorKind::kInvalidArgument, "codebook config key '" + k + "': " + e.what());
        }
    }
    require(c.n_bins >= 1, ErrorKind::kInvalidArgument, "codebook.n_bins must be >= 1");
    return c;
}

json RunConfig::to_json() const {
    return json{{"features", feature_config_to_json(features)},
                {"extractor", extractor.to_json()},
                {"train", train.to_json()},
                {"codebook", codebook.to_json()},
                {"synth", synth.to_json()}};
}

RunConfig RunConfig::from_json(const json& j, const RunConfig& base) {
    require(j.is_object(), ErrorKind::kInvalidArgument, "config must be a JSON object");
    RunConfig c = base;
    json merged = base.to_json();
    for (auto it = j.begin(); it != j.end(); ++it) {
        require(merged.contains(it.key()), ErrorKind::kInvalidArgument, "unknown config section '" + it.key() + "'");
        require(it->is_object(), ErrorKind::kInvalidArgument, "config section '" + it.key() + "' must be an object");
        for (auto kv = it->begin(); kv != it->end(); ++kv) {
            merged[it.key()][kv.key()] = *kv;
        }
    }
    c.features = feature_config_from_json(merged["features"]);
    c.extractor = ExtractorConfig::from_json(merged["extractor"]);
    c.train = TrainConfig::from_json(merged["train"]);
    c.codebook = CodebookConfig::from_json(merged["codebook"]);
    c.synth = SynthSpec::from_json(merged["synth"]);
    if (j.contains("extractor") && j["extractor"].contains("classes")) {
        c.explicit_classes = true;
    }
    return c;
}

RunConfig RunConfig::from_json(const json& j) { return from_json(j, RunConfig{}); }

std::string RunConfig::hash() const { return sha256_hex(to_json().dump()); }

RunConfig preset(const std::string& name) {
    RunConfig c;
    if (name == "paper") {
        return c;
    }
    require(name == "desk", ErrorKind::kInvalidArgument, "unknown preset '" + name + "' (paper | desk)");
    c.extractor.hidden_dim = 32;
    c.extractor.n_fft_blocks = 2;
    c.extractor.n_heads = 2;
    c.extractor.conv_kernel = 3;
    c.extractor.conv_filter_dim = 64;
    c.extractor.projector_hidden = 16;
    c.extractor.input_dim = c.synth.channels;
    c.extractor.classes = {"Neutral"};
    for (const auto& e : synth_emotion_names(c.synth.n_emotions)) {
        c.extractor.classes.push_back(e);
    }
    c.train.iterations = 2000;
    c.train.learning_rate = 1e-3;
    return c;
}

RunConfig load_run_config(const std::filesystem::path& path, const RunConfig& base) {
    const auto bytes = read_file_bytes(path);
    json j;
    try {
        j = json::parse(bytes.begin(), bytes.end());
    } catch (const json::exception& e) {
        fail(ErrorKind::kFormat, path.string() + ": " + e.what());
    }
    return RunConfig::from_json(j, base);
}

std::string describe_config(const RunConfig& c, const RunConfig& alt, const std::string& alt_name) {
    std::ostringstream os;
    const json j = c.to_json();
    const json a = alt.to_json();
    for (auto sec = j.begin(); sec != j.end(); ++sec) {
        for (auto kv = sec->begin(); kv != sec->end(); ++kv) {
            os << "  " << sec.key() << '.' << kv.key() << " = " << kv->dump();
            const json& other = a[sec.key()][kv.key()];
            if (other != *kv) {
                os << "   (" << alt_name << ": " << other.dump() << ')';
            }
            os << '\n';
        }
    }
    return os.str();
}

json parse_overrides(const std::vector<std::string>& assignments) {
    json out = json::object();
    for (const auto& a : assignments) {
        const auto eq = a.find('=');
        const auto dot = a.find('.');
        require(eq != std::string::npos && dot != std::string::npos && dot < eq, ErrorKind::kInvalidArgument,
                "override '" + a + "' must look like section.key=value");
        const std::string section = a.substr(0, dot), key = a.substr(dot + 1, eq - dot - 1), value = a.substr(eq + 1);
        json v = json::parse(value, nullptr, false);
        if (v.is_discarded()) {
            v = value;
        }
        out[section][key] = v;
    }
    return out;
}

}  // namespace emorank
