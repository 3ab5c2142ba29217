#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "emorank/tensor.h"

namespace emorank {

struct FeatureConfig {
    double sample_rate_hz = 16000.0;
    double window_ms = 50.0;
    double overlap_ratio = 0.5;
    std::size_t n_mels = 80;
    double fmin_hz = 0.0;
    /// 0 means Nyquist.
    double fmax_hz = 0.0;

    void validate() const;
    std::size_t window_samples() const;
    std::size_t hop_samples() const;
    std::size_t fft_size() const;
    double frame_rate_hz() const;
    double upper_hz() const { return fmax_hz > 0.0 ? fmax_hz : sample_rate_hz / 2.0; }
    /// log-mel columns + pitch + energy
    std::size_t channels() const { return n_mels + 2; }
};

inline constexpr double kLogFloor = 1e-10;
inline constexpr double kPitchMinHz = 60.0;
inline constexpr double kPitchMaxHz = 400.0;
inline constexpr double kVoicingThreshold = 0.3;

/// Per-utterance frame matrix: columns [0, n_mels) log-mel, then log-F0
/// (0 when unvoiced), then log-energy. Stored as f32, the on-disk precision.
struct FeatureMatrix {
    std::size_t frames = 0;
    std::size_t channels = 0;
    std::vector<float> data;
    double frame_rate_hz = 0.0;
    std::string source_id;
    std::string emotion_label;
    std::string speaker_id;

    float at(std::size_t t, std::size_t c) const { return data[t * channels + c]; }
    float& at(std::size_t t, std::size_t c) { return data[t * channels + c]; }
    std::size_t pitch_channel() const { return channels - 2; }
    std::size_t energy_channel() const { return channels - 1; }

    /// Structural checks plus finiteness; `acoustic` adds the pitch >= 0 rule,
    /// which does not apply when the container holds conditioning vectors.
    void validate(bool acoustic = true) const;
    Tensor to_tensor() const;
};

/// floor((N - win) / hop) + 1
std::size_t frame_count(std::size_t n_samples, const FeatureConfig& cfg);

double hz_to_mel(double hz);
double mel_to_hz(double mel);
/// HTK-scale triangular filters, [n_mels, fft_size/2 + 1].
Tensor mel_filterbank(const FeatureConfig& cfg);
std::vector<double> hann_window(std::size_t n);

/// Magnitude STFT, [T, fft_size/2 + 1]. FFTW per frame, OpenMP over frames.
Tensor stft_magnitude(std::span<const double> audio, const FeatureConfig& cfg);

Tensor extract_mel(std::span<const double> audio, const FeatureConfig& cfg);
Tensor extract_pitch(std::span<const double> audio, const FeatureConfig& cfg);
Tensor extract_energy(std::span<const double> audio, const FeatureConfig& cfg);

FeatureMatrix extract_features(std::span<const double> audio, const FeatureConfig& cfg, std::string source_id,
                               std::string emotion_label, std::string speaker_id);

/// Replaces the pitch column with values from a CSV (header `f0_hz`, one row
/// per frame, Hz, 0 = unvoiced).
void import_pitch_csv(FeatureMatrix& fm, const std::filesystem::path& csv);

void write_features(const FeatureMatrix& fm, const std::filesystem::path& path);
FeatureMatrix read_features(const std::filesystem::path& path);
std::vector<std::uint8_t> encode_features(const FeatureMatrix& fm);
FeatureMatrix decode_features(std::span<const std::uint8_t> bytes, const std::string& what = "EMOF");

inline constexpr std::uint32_t kFeatureFormatVersion = 1;

namespace serial {
/// Direct-DFT reference for stft_magnitude.
Tensor stft_magnitude(std::span<const double> audio, const FeatureConfig& cfg);
}  // namespace serial

}  // namespace emorank
