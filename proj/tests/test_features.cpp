#include <cmath>
#include <complex>
#include <fstream>
#include <numbers>
#include <random>

#include "doctest.h"

#include "emorank/binary_io.h"
#include "emorank/error.h"
#include "emorank/features.h"
#include "emorank/wav.h"
#include "support.h"

using namespace emorank;

namespace {

std::vector<double> sine(double hz, double amp, double seconds, double sr = 16000.0) {
    std::vector<double> x(static_cast<std::size_t>(seconds * sr));
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = amp * std::sin(2.0 * std::numbers::pi * hz * i / sr);
    return x;
}

std::vector<double> noise(std::size_t n, std::uint64_t seed, double sigma = 0.3) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> d(0.0, sigma);
    std::vector<double> x(n);
    for (auto& v : x) v = d(rng);
    return x;
}

ErrorKind kind_of(const std::function<void()>& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.kind();
    }
    FAIL("expected an error");
    return ErrorKind::kInvalidArgument;
}

}  // namespace

TEST_CASE("frame geometry at defaults") {
    FeatureConfig cfg;
    CHECK(cfg.window_samples() == 800);
    CHECK(cfg.hop_samples() == 400);
    CHECK(frame_count(16000, cfg) == 39);
    CHECK_THROWS_AS(extract_mel(std::vector<double>(799, 0.0), cfg), Error);
    FeatureConfig bad;
    bad.overlap_ratio = 1.0;
    CHECK_THROWS_AS(bad.validate(), Error);
}

TEST_CASE("silence") {
    FeatureConfig cfg;
    const std::vector<double> x(16000, 0.0);
    const Tensor mel = extract_mel(x, cfg);
    CHECK(mel.shape == std::vector<std::size_t>{39, 80});
    for (double v : mel.data) CHECK(v == std::log(1e-10));
    for (double v : extract_pitch(x, cfg).data) CHECK(v == 0.0);
    for (double v : extract_energy(x, cfg).data) CHECK(v == std::log(1e-10));
}

TEST_CASE("stft matches a direct DFT") {
    FeatureConfig cfg;
    const auto x = noise(4000, 3);
    const Tensor fast = stft_magnitude(x, cfg);
    const Tensor ref = serial::stft_magnitude(x, cfg);
    const std::size_t win = 800, hop = 400, nfft = 1024;
    REQUIRE(fast.shape == ref.shape);
    for (std::size_t f = 0; f < fast.rows(); f += 3) {
        for (std::size_t k = 0; k < fast.cols(); k += 37) {
            std::complex<double> s = 0.0;
            for (std::size_t n = 0; n < win; ++n) {
                const double w = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * n / win);
                s += w * x[f * hop + n] * std::polar(1.0, -2.0 * std::numbers::pi * double(k) * double(n) / nfft);
            }
            CHECK(fast.at(f, k) == doctest::Approx(std::abs(s)).epsilon(1e-9));
        }
    }
    for (std::size_t i = 0; i < fast.data.size(); ++i) {
        CHECK(std::abs(fast.data[i] - ref.data[i]) < 1e-9 * (1.0 + ref.data[i]));
    }
}

TEST_CASE("440 Hz sine peaks in a fixed mel bin near 440 Hz") {
    FeatureConfig cfg;
    const Tensor mel = extract_mel(sine(440.0, 0.5, 1.0), cfg);
    std::size_t first = 0;
    for (std::size_t t = 0; t < mel.rows(); ++t) {
        std::size_t best = 0;
        for (std::size_t m = 1; m < mel.cols(); ++m)
            if (mel.at(t, m) > mel.at(t, best)) best = m;
        if (t == 0) first = best;
        CHECK(best == first);
    }
    // HTK centers: 700 (10^(m/2595) - 1) at evenly spaced mel points
    const double top = 2595.0 * std::log10(1.0 + 8000.0 / 700.0);
    std::size_t nearest = 0;
    double gap = 1e9;
    for (std::size_t m = 0; m < 80; ++m) {
        const double c = 700.0 * (std::pow(10.0, top * (m + 1) / 81.0 / 2595.0) - 1.0);
        if (std::abs(c - 440.0) < gap) gap = std::abs(c - 440.0), nearest = m;
    }
    CHECK(first + 1 >= nearest);
    CHECK(first <= nearest + 1);
}

TEST_CASE("amplitude doubling shifts log-mel and log-energy by log 2") {
    FeatureConfig cfg;
    const auto a = noise(8000, 5, 0.1);
    std::vector<double> b(a);
    for (auto& v : b) v *= 2.0;
    const Tensor ma = extract_mel(a, cfg), mb = extract_mel(b, cfg);
    for (std::size_t i = 0; i < ma.data.size(); ++i) {
        if (ma.data[i] > -15.0) CHECK(mb.data[i] - ma.data[i] == doctest::Approx(std::log(2.0)).epsilon(1e-9));
    }
    const Tensor ea = extract_energy(a, cfg), eb = extract_energy(b, cfg);
    for (std::size_t i = 0; i < ea.data.size(); ++i)
        CHECK(eb.data[i] - ea.data[i] == doctest::Approx(std::log(2.0)).epsilon(1e-9));
}

TEST_CASE("energy equals the brute-force windowed norm") {
    FeatureConfig cfg;
    const auto x = noise(6000, 8);
    const Tensor e = extract_energy(x, cfg);
    for (std::size_t f = 0; f < e.rows(); ++f) {
        double s = 0.0;
        for (std::size_t n = 0; n < 800; ++n) {
            const double w = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * n / 800.0);
            s += (w * x[f * 400 + n]) * (w * x[f * 400 + n]);
        }
        CHECK(std::abs(e.data[f] - std::log(std::sqrt(s))) < 1e-6);
    }
}

TEST_CASE("pitch oracles") {
    FeatureConfig cfg;
    const Tensor p = extract_pitch(sine(200.0, 0.5, 1.0), cfg);
    std::size_t voiced = 0;
    for (double v : p.data) {
        if (v == 0.0) continue;
        ++voiced;
        CHECK(std::abs(std::exp(v) - 200.0) < 5.0);
    }
    CHECK(voiced == p.data.size());
    const Tensor pn = extract_pitch(noise(32000, 13), cfg);
    std::size_t unvoiced = 0;
    for (double v : pn.data) unvoiced += v == 0.0;
    CHECK(double(unvoiced) >= 0.9 * double(pn.data.size()));
}

TEST_CASE("extract_features is frame aligned and deterministic") {
    FeatureConfig cfg;
    auto x = sine(150.0, 0.3, 0.7);
    const auto n = noise(x.size(), 2, 0.01);
    for (std::size_t i = 0; i < x.size(); ++i) x[i] += n[i];
    const FeatureMatrix a = extract_features(x, cfg, "u1", "Angry", "s1");
    const FeatureMatrix b = extract_features(x, cfg, "u1", "Angry", "s1");
    CHECK(a.frames == extract_mel(x, cfg).rows());
    CHECK(a.frames == extract_pitch(x, cfg).rows());
    CHECK(a.frames == extract_energy(x, cfg).rows());
    CHECK(a.channels == 82);
    CHECK(a.data == b.data);
    a.validate();
}

TEST_CASE("EMOF round trip and corruption") {
    std::mt19937_64 rng(4);
    std::normal_distribution<float> d(0.0f, 1.0f);
    FeatureMatrix fm;
    fm.frames = 17;
    fm.channels = 82;
    fm.frame_rate_hz = 40.0;
    fm.source_id = "utt_\xc3\xa9";
    fm.emotion_label = "Sleepy";
    fm.speaker_id = "bea";
    for (std::size_t i = 0; i < 17 * 82; ++i) fm.data.push_back(d(rng));
    const auto bytes = encode_features(fm);
    const FeatureMatrix back = decode_features(bytes);
    CHECK(back.data == fm.data);
    CHECK(back.frame_rate_hz == fm.frame_rate_hz);
    CHECK(back.source_id == fm.source_id);
    CHECK(back.emotion_label == fm.emotion_label);
    CHECK(back.speaker_id == fm.speaker_id);
    CHECK(encode_features(back) == bytes);

    auto dir = testing::temp_dir("emof");
    write_features(fm, dir / "a.emof");
    CHECK(read_file_bytes(dir / "a.emof") == bytes);

    auto bad = bytes;
    bad[40] ^= 0x01;
    CHECK(kind_of([&] { decode_features(bad); }) == ErrorKind::kChecksum);
    bad = bytes;
    bad[bad.size() - 1] ^= 0xff;
    CHECK(kind_of([&] { decode_features(bad); }) == ErrorKind::kChecksum);
    bad = bytes;
    bad[0] = 'X';
    CHECK(kind_of([&] { decode_features(bad); }) == ErrorKind::kFormat);
    bad = bytes;
    bad[4] = 2;
    CHECK(kind_of([&] { decode_features(bad); }) == ErrorKind::kVersion);
    const std::vector<std::uint8_t> cut(bytes.begin(), bytes.begin() + 100);
    CHECK(kind_of([&] { decode_features(cut); }) == ErrorKind::kFormat);
}

TEST_CASE("pitch CSV import replaces the pitch column with log F0") {
    FeatureConfig cfg;
    FeatureMatrix fm = extract_features(sine(200.0, 0.5, 0.2), cfg, "u", "Neutral", "s");
    auto dir = testing::temp_dir("pitchcsv");
    {
        std::ofstream out(dir / "f0.csv");
        out << "f0_hz\n";
        for (std::size_t t = 0; t < fm.frames; ++t) out << (t % 2 ? 0.0 : 123.0) << "\n";
    }
    import_pitch_csv(fm, dir / "f0.csv");
    for (std::size_t t = 0; t < fm.frames; ++t)
        CHECK(fm.at(t, fm.pitch_channel()) == static_cast<float>(t % 2 ? 0.0 : std::log(123.0)));
    {
        std::ofstream out(dir / "short.csv");
        out << "f0_hz\n100\n";
    }
    CHECK_THROWS_AS(import_pitch_csv(fm, dir / "short.csv"), Error);
}

TEST_CASE("WAV round trips") {
    auto dir = testing::temp_dir("wav");
    Audio a{16000.0, sine(300.0, 0.5, 0.1)};
    write_wav_float32(dir / "f.wav", a);
    const Audio f = read_wav(dir / "f.wav");
    CHECK(f.sample_rate_hz == 16000.0);
    REQUIRE(f.samples.size() == a.samples.size());
    for (std::size_t i = 0; i < a.samples.size(); ++i) CHECK(f.samples[i] == static_cast<float>(a.samples[i]));
    write_wav_pcm16(dir / "p.wav", a);
    const Audio p = read_wav(dir / "p.wav");
    for (std::size_t i = 0; i < a.samples.size(); ++i) CHECK(std::abs(p.samples[i] - a.samples[i]) <= 1.0 / 32767.0);
    std::ofstream(dir / "junk.wav") << "not a wav";
    CHECK_THROWS_AS(read_wav(dir / "junk.wav"), Error);
}

TEST_CASE("crc32 and sha256 known values") {
    const std::string s = "123456789";
    CHECK(crc32_of(std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(s.data()), s.size())) ==
          0xCBF43926u);
    CHECK(sha256_hex(std::string_view("abc")) ==
          "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}
