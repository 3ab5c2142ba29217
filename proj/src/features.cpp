#include "emorank/features.h"

#include <fftw3.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <mutex>
#include <numbers>
#include <sstream>

#include "emorank/binary_io.h"
#include "emorank/error.h"

namespace emorank {

void FeatureConfig::validate() const {
    require(sample_rate_hz > 0.0, ErrorKind::kInvalidArgument, "sample_rate_hz must be > 0");
    require(window_ms > 0.0, ErrorKind::kInvalidArgument, "window_ms must be > 0");
    require(overlap_ratio >= 0.0 && overlap_ratio < 1.0, ErrorKind::kInvalidArgument,
            "overlap_ratio must be in [0, 1)");
    require(n_mels >= 1, ErrorKind::kInvalidArgument, "n_mels must be >= 1");
    require(fmin_hz >= 0.0 && fmin_hz < upper_hz() && upper_hz() <= sample_rate_hz / 2.0,
            ErrorKind::kInvalidArgument, "need 0 <= fmin_hz < fmax_hz <= sample_rate/2");
    require(window_samples() >= 2 && hop_samples() >= 1, ErrorKind::kInvalidArgument, "window too short");
}

std::size_t FeatureConfig::window_samples() const {
    return static_cast<std::size_t>(std::llround(sample_rate_hz * window_ms / 1000.0));
}

std::size_t FeatureConfig::hop_samples() const {
    return static_cast<std::size_t>(std::llround(static_cast<double>(window_samples()) * (1.0 - overlap_ratio)));
}

std::size_t FeatureConfig::fft_size() const { return std::bit_ceil(window_samples()); }

double FeatureConfig::frame_rate_hz() const { return sample_rate_hz / static_cast<double>(hop_samples()); }

std::size_t frame_count(std::size_t n_samples, const FeatureConfig& cfg) {
    const std::size_t win = cfg.window_samples();
    require(n_samples >= win, ErrorKind::kInvalidArgument,
            "audio has " + std::to_string(n_samples) + " samples, shorter than one window (" + std::to_string(win) +
                ")");
    return (n_samples - win) / cfg.hop_samples() + 1;
}

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

std::vector<double> hann_window(std::size_t n) {
    std::vector<double> w(n);
    for (std::size_t i = 0; i < n; ++i) {
        w[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(n));
    }
    return w;
}

Tensor mel_filterbank(const FeatureConfig& cfg) {
    cfg.validate();
    const std::size_t nfft = cfg.fft_size();
    const std::size_t nbins = nfft / 2 + 1;
    const double lo = hz_to_mel(cfg.fmin_hz);
    const double hi = hz_to_mel(cfg.upper_hz());
    std::vector<double> edges(cfg.n_mels + 2);
    for (std::size_t i = 0; i < edges.size(); ++i) {
        edges[i] = mel_to_hz(lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(cfg.n_mels + 1));
    }
    Tensor fb = Tensor::matrix(cfg.n_mels, nbins);
    for (std::size_t m = 0; m < cfg.n_mels; ++m) {
        const double left = edges[m], center = edges[m + 1], right = edges[m + 2];
        for (std::size_t k = 0; k < nbins; ++k) {
            const double f = static_cast<double>(k) * cfg.sample_rate_hz / static_cast<double>(nfft);
            const double up = (f - left) / (center - left);
            const double down = (right - f) / (right - center);
            fb.at(m, k) = std::max(0.0, std::min(up, down));
        }
    }
    return fb;
}

namespace {

void check_audio(std::span<const double> audio, const FeatureConfig& cfg) {
    cfg.validate();
    for (double s : audio) {
        require(std::isfinite(s), ErrorKind::kNonFinite, "audio contains non-finite samples");
    }
    (void)frame_count(audio.size(), cfg);
}

// FFTW plans are not thread-safe to create; execution with new arrays is.
struct R2CPlan {
    fftw_plan plan = nullptr;
    std::size_t n = 0;
};

const R2CPlan& plan_for(std::size_t n) {
    static std::mutex mu;
    static std::vector<R2CPlan> plans;
    std::lock_guard lock(mu);
    for (const auto& p : plans) {
        if (p.n == n) {
            return p;
        }
    }
    double* in = fftw_alloc_real(n);
    fftw_complex* out = fftw_alloc_complex(n / 2 + 1);
    R2CPlan p;
    p.n = n;
    p.plan = fftw_plan_dft_r2c_1d(static_cast<int>(n), in, out, FFTW_ESTIMATE);
    fftw_free(in);
    fftw_free(out);
    plans.reserve(16);
    plans.push_back(p);
    return plans.back();
}

}  // namespace

Tensor stft_magnitude(std::span<const double> audio, const FeatureConfig& cfg) {
    check_audio(audio, cfg);
    const std::size_t win = cfg.window_samples();
    const std::size_t hop = cfg.hop_samples();
    const std::size_t nfft = cfg.fft_size();
    const std::size_t nbins = nfft / 2 + 1;
    const std::size_t t = frame_count(audio.size(), cfg);
    const auto window = hann_window(win);
    const R2CPlan& plan = plan_for(nfft);
    Tensor mag = Tensor::matrix(t, nbins);

#pragma omp parallel
    {
        double* in = fftw_alloc_real(nfft);
        fftw_complex* out = fftw_alloc_complex(nbins);
#pragma omp for schedule(static)
        for (std::ptrdiff_t f = 0; f < static_cast<std::ptrdiff_t>(t); ++f) {
            const std::size_t start = static_cast<std::size_t>(f) * hop;
            for (std::size_t i = 0; i < nfft; ++i) {
                in[i] = i < win ? audio[start + i] * window[i] : 0.0;
            }
            fftw_execute_dft_r2c(plan.plan, in, out);
            for (std::size_t k = 0; k < nbins; ++k) {
                mag.at(static_cast<std::size_t>(f), k) = std::hypot(out[k][0], out[k][1]);
            }
        }
        fftw_free(in);
        fftw_free(out);
    }
    return mag;
}

namespace serial {

Tensor stft_magnitude(std::span<const double> audio, const FeatureConfig& cfg) {
    check_audio(audio, cfg);
    const std::size_t win = cfg.window_samples();
    const std::size_t hop = cfg.hop_samples();
    const std::size_t nfft = cfg.fft_size();
    const std::size_t nbins = nfft / 2 + 1;
    const std::size_t t = frame_count(audio.size(), cfg);
    const auto window = hann_window(win);
    Tensor mag = Tensor::matrix(t, nbins);
    for (std::size_t f = 0; f < t; ++f) {
        const std::size_t start = f * hop;
        for (std::size_t k = 0; k < nbins; ++k) {
            double re = 0.0, im = 0.0;
            for (std::size_t i = 0; i < win; ++i) {
                const double x = audio[start + i] * window[i];
                const double ang = -2.0 * std::numbers::pi * static_cast<double>((k * i) % nfft) /
                                   static_cast<double>(nfft);
                re += x * std::cos(ang);
                im += x * std::sin(ang);
            }
            mag.at(f, k) = std::hypot(re, im);
        }
    }
    return mag;
}

}  // namespace serial

Tensor extract_mel(std::span<const double> audio, const FeatureConfig& cfg) {
    const Tensor mag = stft_magnitude(audio, cfg);
    const Tensor fb = mel_filterbank(cfg);
    const std::size_t t = mag.rows(), nbins = mag.cols();
    Tensor mel = Tensor::matrix(t, cfg.n_mels);
    for (std::size_t f = 0; f < t; ++f) {
        for (std::size_t m = 0; m < cfg.n_mels; ++m) {
            double s = 0.0;
            for (std::size_t k = 0; k < nbins; ++k) {
                s += fb.at(m, k) * mag.at(f, k);
            }
            mel.at(f, m) = std::log(std::max(s, kLogFloor));
        }
    }
    return mel;
}

namespace {

// Normalized cross-correlation pitch for one frame; 0 when unvoiced.
double frame_log_f0(std::span<const double> frame, double sample_rate) {
    const std::size_t n = frame.size();
    const auto lag_min = static_cast<std::size_t>(std::floor(sample_rate / kPitchMaxHz));
    const auto lag_max = std::min(static_cast<std::size_t>(std::ceil(sample_rate / kPitchMinHz)), n / 2);
    if (lag_min < 1 || lag_max <= lag_min + 1) {
        return 0.0;
    }
    double total = 0.0;
    for (double v : frame) {
        total += v * v;
    }
    if (total < kLogFloor) {
        return 0.0;
    }
    std::vector<double> nccf(lag_max + 2, 0.0);
    double best = 0.0;
    for (std::size_t lag = lag_min - 1; lag <= lag_max + 1 && lag < n; ++lag) {
        double xy = 0.0, xx = 0.0, yy = 0.0;
        for (std::size_t i = 0; i + lag < n; ++i) {
            xy += frame[i] * frame[i + lag];
            xx += frame[i] * frame[i];
            yy += frame[i + lag] * frame[i + lag];
        }
        nccf[lag] = (xx > 0.0 && yy > 0.0) ? xy / std::sqrt(xx * yy) : 0.0;
        if (lag >= lag_min && lag <= lag_max) {
            best = std::max(best, nccf[lag]);
        }
    }
    if (best < kVoicingThreshold) {
        return 0.0;
    }
    // Shortest-lag local peak close to the global maximum avoids octave drops.
    std::size_t pick = 0;
    for (std::size_t lag = lag_min; lag <= lag_max; ++lag) {
        if (nccf[lag] >= 0.9 * best && nccf[lag] >= nccf[lag - 1] && nccf[lag] >= nccf[lag + 1]) {
            pick = lag;
            break;
        }
    }
    if (pick == 0) {
        return 0.0;
    }
    double lag = static_cast<double>(pick);
    const double a = nccf[pick - 1], b = nccf[pick], c = nccf[pick + 1];
    const double denom = a - 2.0 * b + c;
    if (denom < 0.0) {
        lag += 0.5 * (a - c) / denom;
    }
    return std::log(sample_rate / lag);
}

}  // namespace

Tensor extract_pitch(std::span<const double> audio, const FeatureConfig& cfg) {
    check_audio(audio, cfg);
    const std::size_t win = cfg.window_samples();
    const std::size_t hop = cfg.hop_samples();
    const std::size_t t = frame_count(audio.size(), cfg);
    Tensor out = Tensor::matrix(t, 1);
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t f = 0; f < static_cast<std::ptrdiff_t>(t); ++f) {
        out.data[static_cast<std::size_t>(f)] =
            frame_log_f0(audio.subspan(static_cast<std::size_t>(f) * hop, win), cfg.sample_rate_hz);
    }
    return out;
}

Tensor extract_energy(std::span<const double> audio, const FeatureConfig& cfg) {
    check_audio(audio, cfg);
    const std::size_t win = cfg.window_samples();
    const std::size_t hop = cfg.hop_samples();
    const std::size_t t = frame_count(audio.size(), cfg);
    const auto window = hann_window(win);
    Tensor out = Tensor::matrix(t, 1);
    for (std::size_t f = 0; f < t; ++f) {
        double s = 0.0;
        for (std::size_t i = 0; i < win; ++i) {
            const double x = audio[f * hop + i] * window[i];
            s += x * x;
        }
        out.data[f] = std::log(std::max(std::sqrt(s), kLogFloor));
    }
    return out;
}

FeatureMatrix extract_features(std::span<const double> audio, const FeatureConfig& cfg, std::string source_id,
                               std::string emotion_label, std::string speaker_id) {
    const Tensor mel = extract_mel(audio, cfg);
    const Tensor pitch = extract_pitch(audio, cfg);
    const Tensor energy = extract_energy(audio, cfg);
    FeatureMatrix fm;
    fm.frames = mel.rows();
    fm.channels = cfg.channels();
    fm.frame_rate_hz = cfg.frame_rate_hz();
    fm.source_id = std::move(source_id);
    fm.emotion_label = std::move(emotion_label);
    fm.speaker_id = std::move(speaker_id);
    fm.data.resize(fm.frames * fm.channels);
    for (std::size_t t = 0; t < fm.frames; ++t) {
        for (std::size_t m = 0; m < cfg.n_mels; ++m) {
            fm.at(t, m) = static_cast<float>(mel.at(t, m));
        }
        fm.at(t, fm.pitch_channel()) = static_cast<float>(pitch.data[t]);
        fm.at(t, fm.energy_channel()) = static_cast<float>(energy.data[t]);
    }
    fm.validate();
    return fm;
}

void FeatureMatrix::validate(bool acoustic) const {
    require(frames >= 1, ErrorKind::kShape, source_id + ": feature matrix has no frames");
    require(channels >= 3, ErrorKind::kShape, source_id + ": feature matrix needs >= 3 channels");
    require(data.size() == frames * channels, ErrorKind::kShape, source_id + ": data size != frames * channels");
    for (std::size_t i = 0; i < data.size(); ++i) {
        require(std::isfinite(data[i]), ErrorKind::kNonFinite, source_id + ": non-finite feature value");
    }
    for (std::size_t t = 0; acoustic && t < frames; ++t) {
        require(at(t, pitch_channel()) >= 0.0f, ErrorKind::kFormat, source_id + ": negative pitch value");
    }
}

Tensor FeatureMatrix::to_tensor() const {
    Tensor out = Tensor::matrix(frames, channels);
    std::copy(data.begin(), data.end(), out.data.begin());
    return out;
}

void import_pitch_csv(FeatureMatrix& fm, const std::filesystem::path& csv) {
    std::ifstream in(csv);
    if (!in) {
        fail(ErrorKind::kIo, "cannot open pitch CSV " + csv.string());
    }
    std::string line;
    std::getline(in, line);
    if (!line.empty() && line.back() == '\r') {
        line.pop_back();
    }
    require(line == "f0_hz", ErrorKind::kFormat, csv.string() + ": expected header 'f0_hz'");
    std::vector<double> f0;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        if (line.empty()) {
            continue;
        }
        std::size_t used = 0;
        double v = 0.0;
        try {
            v = std::stod(line, &used);
        } catch (const std::exception&) {
            fail(ErrorKind::kFormat, csv.string() + ": bad value '" + line + "'");
        }
        require(used == line.size() && std::isfinite(v) && v >= 0.0, ErrorKind::kFormat,
                csv.string() + ": bad value '" + line + "'");
        f0.push_back(v);
    }
    require(f0.size() == fm.frames, ErrorKind::kShape,
            csv.string() + ": " + std::to_string(f0.size()) + " pitch rows for " + std::to_string(fm.frames) +
                " frames");
    for (std::size_t t = 0; t < fm.frames; ++t) {
        fm.at(t, fm.pitch_channel()) = f0[t] > 0.0 ? static_cast<float>(std::log(f0[t])) : 0.0f;
    }
}

std::vector<std::uint8_t> encode_features(const FeatureMatrix& fm) {
    fm.validate(false);
    ByteWriter w;
    w.magic("EMOF");
    w.u32(kFeatureFormatVersion);
    w.u32(static_cast<std::uint32_t>(fm.frames));
    w.u32(static_cast<std::uint32_t>(fm.channels));
    w.f64(fm.frame_rate_hz);
    w.str(fm.emotion_label);
    w.str(fm.speaker_id);
    w.str(fm.source_id);
    for (float v : fm.data) {
        w.f32(v);
    }
    w.crc();
    return w.bytes();
}

FeatureMatrix decode_features(std::span<const std::uint8_t> bytes, const std::string& what) {
    ByteReader r(bytes, what);
    r.expect_magic("EMOF");
    const std::uint32_t version = r.u32();
    require(version == kFeatureFormatVersion, ErrorKind::kVersion,
            what + ": unsupported feature format version " + std::to_string(version));
    FeatureMatrix fm;
    fm.frames = r.u32();
    fm.channels = r.u32();
    fm.frame_rate_hz = r.f64();
    fm.emotion_label = r.str();
    fm.speaker_id = r.str();
    fm.source_id = r.str();
    const std::size_t n = fm.frames * fm.channels;
    require(r.remaining() >= n * 4 + 4, ErrorKind::kFormat, what + ": truncated payload");
    fm.data.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        fm.data[i] = r.f32();
    }
    r.verify_crc();
    require(r.remaining() == 0, ErrorKind::kFormat, what + ": trailing bytes after CRC");
    fm.validate(false);
    return fm;
}

void write_features(const FeatureMatrix& fm, const std::filesystem::path& path) {
    write_file_bytes(path, encode_features(fm));
}

FeatureMatrix read_features(const std::filesystem::path& path) {
    return decode_features(read_file_bytes(path), path.string());
}

}  // namespace emorank
