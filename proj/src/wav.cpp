#include "emorank/wav.h"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <string>

#include "emorank/binary_io.h"
#include "emorank/error.h"

namespace emorank {
namespace {

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatFloat = 3;
constexpr std::uint16_t kFormatExtensible = 0xFFFE;

std::uint16_t u16_at(std::span<const std::uint8_t> b, std::size_t off) {
    return static_cast<std::uint16_t>(b[off] | (b[off + 1] << 8));
}

}  // namespace

Audio read_wav(const std::filesystem::path& path) {
    const auto bytes = read_file_bytes(path);
    const std::string what = path.string();
    ByteReader r(bytes, what);
    r.expect_magic("RIFF");
    (void)r.u32();
    r.expect_magic("WAVE");

    std::uint16_t format = 0, channels = 0, bits = 0;
    std::uint32_t rate = 0;
    bool have_fmt = false;
    std::span<const std::uint8_t> payload;
    bool have_data = false;
    while (r.remaining() >= 8 && !have_data) {
        auto id = r.take(4);
        const std::string chunk(id.begin(), id.end());
        const std::uint32_t size = r.u32();
        auto body = r.take(std::min<std::size_t>(size, r.remaining()));
        if (chunk == "fmt ") {
            require(body.size() >= 16, ErrorKind::kFormat, what + ": short fmt chunk");
            format = u16_at(body, 0);
            channels = u16_at(body, 2);
            rate = static_cast<std::uint32_t>(u16_at(body, 4) | (u16_at(body, 6) << 16));
            bits = u16_at(body, 14);
            if (format == kFormatExtensible && body.size() >= 26) {
                format = u16_at(body, 24);
            }
            have_fmt = true;
        } else if (chunk == "data") {
            payload = body;
            have_data = true;
        }
        if (size % 2 == 1 && r.remaining() > 0) {
            (void)r.take(1);
        }
    }
    require(have_fmt && have_data, ErrorKind::kFormat, what + ": missing fmt or data chunk");
    require(channels == 1, ErrorKind::kFormat, what + ": only mono audio is supported");
    require((format == kFormatPcm && bits == 16) || (format == kFormatFloat && bits == 32), ErrorKind::kFormat,
            what + ": only 16-bit PCM or 32-bit float WAV is supported");

    Audio audio;
    audio.sample_rate_hz = rate;
    const std::size_t width = bits / 8;
    const std::size_t n = payload.size() / width;
    audio.samples.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        if (format == kFormatPcm) {
            const auto v = static_cast<std::int16_t>(u16_at(payload, i * 2));
            audio.samples[i] = static_cast<double>(v) / 32768.0;
        } else {
            std::uint32_t u = 0;
            for (int k = 3; k >= 0; --k) {
                u = (u << 8) | payload[i * 4 + static_cast<std::size_t>(k)];
            }
            audio.samples[i] = std::bit_cast<float>(u);
        }
    }
    return audio;
}

namespace {

void write_wav(const std::filesystem::path& path, const Audio& audio, std::uint16_t format, std::uint16_t bits) {
    const std::uint32_t rate = static_cast<std::uint32_t>(std::lround(audio.sample_rate_hz));
    const std::uint32_t width = bits / 8u;
    const std::uint32_t data_size = static_cast<std::uint32_t>(audio.samples.size()) * width;
    ByteWriter w;
    w.magic("RIFF");
    w.u32(36 + data_size);
    w.magic("WAVE");
    w.magic("fmt ");
    w.u32(16);
    const std::uint8_t fmt_head[4] = {static_cast<std::uint8_t>(format), static_cast<std::uint8_t>(format >> 8), 1, 0};
    w.raw(fmt_head);
    w.u32(rate);
    w.u32(rate * width);
    const std::uint8_t align_bits[4] = {static_cast<std::uint8_t>(width), 0, static_cast<std::uint8_t>(bits),
                                        static_cast<std::uint8_t>(bits >> 8)};
    w.raw(align_bits);
    w.magic("data");
    w.u32(data_size);
    for (double s : audio.samples) {
        if (format == kFormatPcm) {
            const long q = std::lround(std::clamp(s, -1.0, 32767.0 / 32768.0) * 32768.0);
            const auto v = static_cast<std::uint16_t>(static_cast<std::int16_t>(q));
            const std::uint8_t b[2] = {static_cast<std::uint8_t>(v), static_cast<std::uint8_t>(v >> 8)};
            w.raw(b);
        } else {
            w.f32(static_cast<float>(s));
        }
    }
    write_file_bytes(path, w.bytes());
}

}  // namespace

void write_wav_pcm16(const std::filesystem::path& path, const Audio& audio) { write_wav(path, audio, kFormatPcm, 16); }

void write_wav_float32(const std::filesystem::path& path, const Audio& audio) {
    write_wav(path, audio, kFormatFloat, 32);
}

}  // namespace emorank
