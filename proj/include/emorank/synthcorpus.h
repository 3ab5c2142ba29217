#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "json.hpp"

#include "emorank/corpus.h"
#include "emorank/tensor.h"

namespace emorank {

/// Synthetic corpus with a known intensity per utterance.
struct SynthSpec {
    std::size_t n_speakers = 1;
    std::size_t n_emotions = 3;  // non-neutral
    std::size_t utterances_per_cell = 60;
    std::array<std::size_t, 2> frame_length_range = {20, 40};
    std::size_t channels = 24;
    /// Non-zero channels per class signature.
    std::size_t signature_channels = 4;
    std::uint64_t base_pattern_seed = 1;
    std::array<double, 2> intensity_range = {0.0, 1.0};
    double noise_sigma = 0.05;
    /// Amplitude of the per-speaker sinusoidal drift on every channel.
    double modulation = 0.3;
    double frame_rate_hz = 40.0;
    std::string id_prefix;

    void validate() const;
    nlohmann::json to_json() const;
    static SynthSpec from_json(const nlohmann::json& j);
};

/// Names of the non-neutral classes, in generation order.
std::vector<std::string> synth_emotion_names(std::size_t n_emotions);

struct SynthMeta {
    std::string utterance_id;
    std::string speaker;
    std::string emotion;
    double true_intensity = 0.0;
};

/// Fixed patterns derived from base_pattern_seed alone, so corpora generated
/// with different runtime seeds share speakers and signatures.
struct SynthPatterns {
    std::vector<Tensor> speaker_mean;   // [channels] per speaker
    std::vector<Tensor> speaker_phase;  // [channels] per speaker
    Tensor channel_period;              // [channels], in frames
    std::vector<Tensor> signature;      // [channels] per non-neutral class
};

SynthPatterns synth_patterns(const SynthSpec& spec);

struct SynthCorpus {
    Corpus corpus;
    std::vector<SynthMeta> meta;  // parallel to corpus.utterances()
    SynthPatterns patterns;
};

/// Neutral utterance: speaker base pattern + noise. Emotional utterance of
/// class c with intensity t ~ U(intensity_range): base + t * signature(c) + noise.
SynthCorpus generate(const SynthSpec& spec, std::mt19937_64& rng);

/// One EMOF file per utterance plus metadata.csv.
void write_synth_corpus(const SynthCorpus& sc, const std::filesystem::path& dir);
void write_synth_metadata(const std::vector<SynthMeta>& meta, const std::filesystem::path& path);

}  // namespace emorank
