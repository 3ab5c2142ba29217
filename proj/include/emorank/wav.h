#pragma once

#include <filesystem>
#include <span>
#include <vector>

namespace emorank {

struct Audio {
    double sample_rate_hz = 0.0;
    std::vector<double> samples;  // mono, nominal range [-1, 1]
};

/// Mono PCM WAV, 16-bit integer or 32-bit float.
Audio read_wav(const std::filesystem::path& path);
void write_wav_pcm16(const std::filesystem::path& path, const Audio& audio);
void write_wav_float32(const std::filesystem::path& path, const Audio& audio);

}  // namespace emorank
