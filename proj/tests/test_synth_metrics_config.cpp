#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <random>
#include <sstream>

#include "doctest.h"

#include "emorank/binary_io.h"
#include "emorank/config.h"
#include "emorank/error.h"
#include "emorank/evalmetrics.h"
#include "emorank/synthcorpus.h"
#include "support.h"

using namespace emorank;
using testing::random_tensor;

TEST_CASE("synthetic corpus structure and determinism") {
    SynthSpec spec;
    spec.n_speakers = 2;
    spec.utterances_per_cell = 4;
    std::mt19937_64 r1(5), r2(5);
    const SynthCorpus a = generate(spec, r1);
    const SynthCorpus b = generate(spec, r2);
    CHECK(a.corpus.size() == 2 * 4 * 4);
    CHECK(a.corpus.classes() == std::vector<std::string>{"Neutral", "Amused", "Angry", "Disgusted"});
    CHECK(a.corpus.content_hash() == b.corpus.content_hash());
    for (std::size_t i = 0; i < a.meta.size(); ++i) {
        const auto& m = a.meta[i];
        CHECK(m.utterance_id == a.corpus.utterances()[i].source_id);
        const auto& u = a.corpus.utterances()[i];
        CHECK(u.frames >= 20);
        CHECK(u.frames <= 40);
        u.validate();
        if (m.emotion == "Neutral") CHECK(m.true_intensity == 0.0);
        else {
            CHECK(m.true_intensity >= 0.0);
            CHECK(m.true_intensity <= 1.0);
        }
    }
    const auto& sig = a.patterns.signature;
    for (std::size_t x = 0; x < sig.size(); ++x)
        for (std::size_t y = x + 1; y < sig.size(); ++y) {
            double dot = 0.0;
            for (std::size_t c = 0; c < spec.channels; ++c) dot += sig[x].data[c] * sig[y].data[c];
            CHECK(dot == 0.0);
        }
}

TEST_CASE("synthetic emotion adds t times the class signature") {
    SynthSpec spec;
    spec.utterances_per_cell = 400;
    spec.intensity_range = {1.0, 1.0};
    spec.frame_length_range = {24, 24};
    std::mt19937_64 rng(9);
    const SynthCorpus sc = generate(spec, rng);
    const auto& U = sc.corpus.utterances();
    std::vector<double> neu(spec.channels, 0.0), ang(spec.channels, 0.0);
    std::size_t nn = 0, na = 0;
    for (std::size_t i = 0; i < U.size(); ++i) {
        auto& acc = sc.meta[i].emotion == "Neutral" ? neu : ang;
        if (sc.meta[i].emotion != "Neutral" && sc.meta[i].emotion != "Angry") continue;
        (sc.meta[i].emotion == "Neutral" ? nn : na) += U[i].frames;
        for (std::size_t t = 0; t < U[i].frames; ++t)
            for (std::size_t c = 0; c < spec.channels; ++c) acc[c] += U[i].at(t, c);
    }
    // noise averages over 400 * 24 samples: sigma 0.05 / sqrt(9600) ~ 5e-4
    for (std::size_t c = 0; c < spec.channels; ++c)
        CHECK(std::abs(ang[c] / na - neu[c] / nn - sc.patterns.signature[1].data[c]) < 3e-3);

    SynthSpec zero = spec;
    zero.intensity_range = {0.0, 0.0};
    zero.noise_sigma = 0.0;
    zero.utterances_per_cell = 2;
    std::mt19937_64 r2(1);
    const SynthCorpus z = generate(zero, r2);
    for (std::size_t i = 0; i < z.corpus.size(); ++i) CHECK(z.corpus.utterances()[i].data == z.corpus.utterances()[0].data);
}

TEST_CASE("synthetic corpus files round trip") {
    SynthSpec spec;
    spec.utterances_per_cell = 3;
    std::mt19937_64 rng(2);
    const SynthCorpus sc = generate(spec, rng);
    auto dir = testing::temp_dir("synth");
    write_synth_corpus(sc, dir);
    const Corpus back = Corpus::load_dir(dir);
    REQUIRE(back.size() == sc.corpus.size());
    std::map<std::string, std::vector<float>> by_id;
    for (const auto& u : sc.corpus.utterances()) by_id[u.source_id] = u.data;
    for (const auto& u : back.utterances()) CHECK(by_id.at(u.source_id) == u.data);
    CHECK(back.classes() == sc.corpus.classes());
    std::ifstream in(dir / "metadata.csv");
    std::string header;
    std::getline(in, header);
    CHECK(header == "utterance_id,speaker,emotion,true_intensity");
    CHECK_THROWS_AS(SynthSpec::from_json({{"noise", 0.1}}), Error);
    CHECK(SynthSpec::from_json(spec.to_json()).to_json() == spec.to_json());
}

TEST_CASE("mcd") {
    std::mt19937_64 rng(3);
    const Tensor a = random_tensor({5, 14}, rng), b = random_tensor({5, 14}, rng);
    CHECK(mcd(a, a) == 0.0);
    CHECK(mcd(a, b) == mcd(b, a));
    CHECK(mcd(a, b) > 0.0);
    const Tensor x = Tensor::from_rows({{7.0, 0.0}}), y = Tensor::from_rows({{-3.0, 1.0}});
    CHECK(std::abs(mcd(x, y) - 10.0 / std::log(10.0) * std::sqrt(2.0)) < 1e-9);
    CHECK(mcd(x, y) == doctest::Approx(6.1421).epsilon(1e-4));
    CHECK_THROWS_AS(mcd(a, random_tensor({4, 14}, rng)), Error);
}

TEST_CASE("mel cepstrum is an orthonormal DCT-II") {
    std::mt19937_64 rng(4);
    const Tensor lm = random_tensor({3, 20}, rng);
    const Tensor c = mel_cepstrum(lm, 19);
    for (std::size_t t = 0; t < 3; ++t) {
        double e1 = 0, e2 = 0;
        for (std::size_t k = 0; k < 20; ++k) e1 += lm.at(t, k) * lm.at(t, k), e2 += c.at(t, k) * c.at(t, k);
        CHECK(e1 == doctest::Approx(e2).epsilon(1e-12));
        double s = 0;
        for (std::size_t n = 0; n < 20; ++n) s += lm.at(t, n);
        CHECK(c.at(t, 0) == doctest::Approx(s / std::sqrt(20.0)).epsilon(1e-12));
        double c3 = 0;
        for (std::size_t n = 0; n < 20; ++n) c3 += lm.at(t, n) * std::cos(std::numbers::pi * 3 * (n + 0.5) / 20);
        CHECK(c.at(t, 3) == doctest::Approx(c3 * std::sqrt(2.0 / 20)).epsilon(1e-12));
    }
    CHECK(mel_cepstrum(random_tensor({2, 80}, rng)).cols() == 14);
}

TEST_CASE("spearman") {
    const std::vector<double> x{1, 2, 3, 4}, y{1, 3, 2, 4}, r{4, 3, 2, 1};
    CHECK(spearman(x, x) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(spearman(x, r) == doctest::Approx(-1.0).epsilon(1e-15));
    CHECK(spearman(x, y) == doctest::Approx(0.8).epsilon(1e-12));
    CHECK(fractional_ranks(std::vector<double>{5, 1, 5, 3}) == std::vector<double>{3.5, 1, 3.5, 2});
    std::mt19937_64 rng(5);
    std::normal_distribution<double> n(0.0, 1.0);
    std::vector<double> a(50), b(50), ea(50), cb(50);
    for (std::size_t i = 0; i < 50; ++i) a[i] = n(rng), b[i] = a[i] + n(rng);
    for (std::size_t i = 0; i < 50; ++i) ea[i] = std::exp(a[i]), cb[i] = b[i] * b[i] * b[i];
    CHECK(spearman(ea, cb) == doctest::Approx(spearman(a, b)).epsilon(1e-12));
    CHECK_THROWS_AS(spearman(std::vector<double>{1, 1, 1}, std::vector<double>{1, 2, 3}), Error);
    CHECK_THROWS_AS(spearman(std::vector<double>{1}, std::vector<double>{1}), Error);
}

TEST_CASE("metric report") {
    MetricReport r{"MCD", 1.5, "dB", 2, {1.0, 2.0}};
    r.validate();
    CHECK(r.to_json()["n_items"] == 2);
    CHECK(r.to_table().find("1.500000 dB") != std::string::npos);
    MetricReport empty{"MCD", 0.0, "dB", 0, {}};
    CHECK_THROWS_AS(empty.validate(), Error);
}

TEST_CASE("run config") {
    const RunConfig d = preset("desk");
    CHECK(RunConfig::from_json(d.to_json(), RunConfig{}).hash() == d.hash());
    CHECK(d.hash() != preset("paper").hash());
    CHECK(d.hash().size() == 64);
    const RunConfig o = RunConfig::from_json(parse_overrides({"train.iterations=7", "codebook.bin_policy=fixed_width"}), d);
    CHECK(o.train.iterations == 7);
    CHECK(o.codebook.bin_policy == BinPolicy::kFixedWidth);
    CHECK(o.extractor.hidden_dim == d.extractor.hidden_dim);
    CHECK_THROWS_AS(RunConfig::from_json({{"trian", {{"iterations", 1}}}}, d), Error);
    CHECK_THROWS_AS(RunConfig::from_json({{"train", {{"iteration", 1}}}}, d), Error);
    CHECK_THROWS_AS(RunConfig::from_json({{"features", {{"overlap_ratio", 1.0}}}}, d), Error);
    CHECK_THROWS_AS(parse_overrides({"iterations=3"}), Error);
    CHECK_THROWS_AS(preset("huge"), Error);
    const std::string help = describe_config(d, preset("paper"), "paper");
    CHECK(help.find("train.iterations = 2000   (paper: 20000)") != std::string::npos);
    CHECK(help.find("features.window_ms = 50.0") != std::string::npos);
}
