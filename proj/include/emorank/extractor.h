#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "emorank/graph.h"
#include "emorank/tensor.h"

namespace emorank {

struct ExtractorConfig {
    std::size_t input_dim = 82;
    std::size_t hidden_dim = 256;
    std::size_t n_fft_blocks = 2;
    std::size_t n_heads = 2;
    std::size_t conv_kernel = 9;
    std::size_t conv_filter_dim = 1024;
    double dropout = 0.1;
    std::size_t projector_hidden = 128;
    /// Class names by index; includes the neutral class.
    std::vector<std::string> classes = {"Neutral", "Amused", "Angry", "Disgusted", "Sleepy"};
    std::size_t neutral_class = 0;

    std::size_t n_emotion_classes() const { return classes.size(); }
    std::size_t class_index(const std::string& name) const;
    void validate() const;

    nlohmann::json to_json() const;
    /// Unknown keys are rejected.
    static ExtractorConfig from_json(const nlohmann::json& j);
};

/// Trainable tensors in a fixed order, plus the per-channel z-score
/// statistics applied to raw features before the first layer.
struct ModelParams {
    std::vector<std::string> names;
    std::vector<Tensor> tensors;
    Tensor norm_mean;
    Tensor norm_std;

    Tensor& get(const std::string& name);
    const Tensor& get(const std::string& name) const;
    std::vector<Tensor*> trainable();
    std::size_t parameter_count() const;
};

/// Names and shapes every ModelParams for `cfg` must carry.
std::vector<std::pair<std::string, std::vector<std::size_t>>> parameter_layout(const ExtractorConfig& cfg);

/// Uniform(+-1/sqrt(fan_in)) weights and biases, unit layer-norm gains,
/// N(0, 0.01) embeddings, identity normalization.
ModelParams init_params(const ExtractorConfig& cfg, std::mt19937_64& rng);

Tensor positional_encoding(std::size_t steps, std::size_t dim);
/// (x - mean) / std per channel.
Tensor normalize_features(const ModelParams& params, const Tensor& x);

/// Differentiable view of the extractor inside one Graph. Parameters are
/// registered on construction; `rng` drives dropout and is only used in
/// training mode.
class Extractor {
public:
    Extractor(Graph& graph, const ModelParams& params, const ExtractorConfig& cfg);

    /// I = FFT(project(x)) + embed(emotion_class); x already normalized.
    Var forward_intensity(Var x, std::size_t emotion_class, bool training = false, std::mt19937_64* rng = nullptr);
    Var pool(Var intensity);
    Var classify(Var pooled);
    Var project_score(Var pooled);

    Var param(const std::string& name) const;
    const std::vector<Var>& param_vars() const { return vars_; }
    Graph& graph() { return g_; }

private:
    Var attention(std::size_t block, Var x);
    Var maybe_dropout(Var x, bool training, std::mt19937_64* rng);

    Graph& g_;
    const ModelParams& params_;
    const ExtractorConfig& cfg_;
    std::vector<Var> vars_;
    std::map<std::string, std::size_t> index_;
};

/// Eval-mode conveniences on raw (unnormalized) frames.
struct ScoredUtterance {
    Tensor intensity;  // [T, hidden]
    Tensor pooled;     // [hidden]
    Tensor logits;     // [classes]
    double score = 0.0;
};
ScoredUtterance run_extractor(const ModelParams& params, const ExtractorConfig& cfg, const Tensor& raw_frames,
                              std::size_t emotion_class);

Tensor forward_intensity(const ModelParams& params, const ExtractorConfig& cfg, const Tensor& raw_frames,
                         std::size_t emotion_class);
Tensor pool(const Tensor& intensity);
Tensor classify(const ModelParams& params, const ExtractorConfig& cfg, const Tensor& pooled);
double project_score(const ModelParams& params, const ExtractorConfig& cfg, const Tensor& pooled);

inline constexpr std::uint32_t kModelFormatVersion = 1;

/// Serialized model: the EMOM container plus free-form provenance JSON.
struct ModelFile {
    ExtractorConfig config;
    ModelParams params;
    nlohmann::json provenance = nlohmann::json::object();
};

std::vector<std::uint8_t> encode_model(const ModelFile& model);
/// Decodes the model section; returns the offset just past its CRC so
/// callers can read an appended section.
ModelFile decode_model(std::span<const std::uint8_t> bytes, const std::string& what, std::size_t* end_offset = nullptr);
void save_model(const ModelFile& model, const std::filesystem::path& path);
ModelFile load_model(const std::filesystem::path& path);

}  // namespace emorank
