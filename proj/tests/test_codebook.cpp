#include <cmath>
#include <random>

#include "doctest.h"

#include "emorank/codebook.h"
#include "emorank/error.h"
#include "emorank/extractor.h"
#include "support.h"

using namespace emorank;
using testing::random_tensor;

namespace {

std::vector<ScoreRecord> records_with_scores(const std::string& emotion, const std::vector<double>& scores,
                                             std::size_t dim, std::mt19937_64& rng) {
    std::vector<ScoreRecord> out;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        ScoreRecord r;
        r.utterance_id = emotion + std::to_string(i);
        r.emotion = emotion;
        r.score = scores[i];
        r.intensity = random_tensor({3 + i % 4, dim}, rng);
        r.pooled = pool(r.intensity);
        out.push_back(std::move(r));
    }
    return out;
}

// Frames whose centers (t + 0.5) / rate fall in [start, end), nearest frame otherwise.
Tensor brute_force_average(const Tensor& i, const PhonemeAlignment& a, double rate) {
    Tensor out = Tensor::matrix(a.phonemes.size(), i.cols());
    for (std::size_t p = 0; p < a.phonemes.size(); ++p) {
        std::vector<std::size_t> frames;
        for (std::size_t t = 0; t < i.rows(); ++t) {
            const double c = (t + 0.5) / rate;
            if (c >= a.phonemes[p].start_s && c < a.phonemes[p].end_s) frames.push_back(t);
        }
        if (frames.empty()) {
            const double mid = 0.5 * (a.phonemes[p].start_s + a.phonemes[p].end_s);
            std::size_t best = 0;
            for (std::size_t t = 1; t < i.rows(); ++t)
                if (std::abs((t + 0.5) / rate - mid) < std::abs((best + 0.5) / rate - mid)) best = t;
            frames.push_back(best);
        }
        for (std::size_t c = 0; c < i.cols(); ++c) {
            double s = 0.0;
            for (std::size_t t : frames) s += i.at(t, c);
            out.at(p, c) = s / frames.size();
        }
    }
    return out;
}

}  // namespace

TEST_CASE("quantile bins split scores into tertiles") {
    std::mt19937_64 rng(1);
    const auto recs = records_with_scores("Angry", {4, 1, 6, 3, 2, 5}, 3, rng);
    const IntensityCodebook cb = build_codebook(recs);
    const EmotionLevels& el = cb.emotions.at("Angry");
    REQUIRE(el.members.size() == 3);
    auto scores = [&](std::size_t b) {
        std::vector<double> s;
        for (std::size_t i : el.members[b]) s.push_back(recs[i].score);
        std::sort(s.begin(), s.end());
        return s;
    };
    CHECK(scores(0) == std::vector<double>{1, 2});
    CHECK(scores(1) == std::vector<double>{3, 4});
    CHECK(scores(2) == std::vector<double>{5, 6});
    CHECK(el.boundaries == std::vector<double>{2.5, 4.5});
    CHECK(el.mean_scores == std::vector<double>{1.5, 3.5, 5.5});
    CHECK(cb.levels == std::vector<std::string>{"Min", "Median", "Max"});
    for (std::size_t b = 0; b < 3; ++b)
        for (std::size_t d = 0; d < 3; ++d) {
            double s = 0.0;
            for (std::size_t i : el.members[b]) s += recs[i].pooled.data[d];
            CHECK(el.vectors[b].data[d] == doctest::Approx(s / 2.0).epsilon(1e-12));
        }
}

TEST_CASE("codebook ordering holds for random distinct scores and bins partition records") {
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> u(-5.0, 5.0);
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t n = 3 + trial % 20;
        std::vector<double> s(n);
        for (auto& v : s) v = u(rng);
        const auto recs = records_with_scores("Amused", s, 2, rng);
        const auto cb = build_codebook(recs);
        const auto& el = cb.emotions.at("Amused");
        CHECK(el.mean_scores[2] > el.mean_scores[1]);
        CHECK(el.mean_scores[1] > el.mean_scores[0]);
        std::vector<int> seen(n, 0);
        for (const auto& bin : el.members)
            for (std::size_t i : bin) seen[i] += 1;
        for (int c : seen) CHECK(c == 1);
    }
}

TEST_CASE("degenerate and invalid codebook inputs") {
    std::mt19937_64 rng(3);
    auto recs = records_with_scores("Sleepy", {1, 1, 1}, 2, rng);
    for (auto& r : recs) r.pooled = Tensor::vector({0.5, 0.5});
    const auto cb = build_codebook(recs);
    CHECK(cb.emotions.at("Sleepy").vectors[0].data == cb.emotions.at("Sleepy").vectors[2].data);
    CHECK(cb.warnings.size() == 1);
    try {
        build_codebook(records_with_scores("Angry", {1, 2}, 2, rng));
        FAIL("expected an error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::kEmptyClass);
    }
}

TEST_CASE("fixed-width bins and frame averaging") {
    std::mt19937_64 rng(4);
    const auto recs = records_with_scores("Angry", {0.0, 0.1, 0.5, 0.6, 0.9, 1.0}, 2, rng);
    const auto cb = build_codebook(recs, 3, BinPolicy::kFixedWidth, LevelAveraging::kFrames);
    const auto& el = cb.emotions.at("Angry");
    CHECK(el.members[0] == std::vector<std::size_t>{0, 1});
    CHECK(el.members[1] == std::vector<std::size_t>{2, 3});
    CHECK(el.members[2] == std::vector<std::size_t>{4, 5});
    for (std::size_t d = 0; d < 2; ++d) {
        double s = 0.0;
        std::size_t n = 0;
        for (std::size_t i : el.members[1])
            for (std::size_t t = 0; t < recs[i].intensity.rows(); ++t) s += recs[i].intensity.at(t, d), ++n;
        CHECK(el.vectors[1].data[d] == doctest::Approx(s / n).epsilon(1e-12));
    }
    const auto gap = records_with_scores("Angry", {0.0, 0.05, 0.1, 1.0}, 2, rng);
    CHECK_THROWS_AS(build_codebook(gap, 3, BinPolicy::kFixedWidth), Error);
}

TEST_CASE("codebook JSON round trip and conditioning") {
    std::mt19937_64 rng(5);
    auto recs = records_with_scores("Amused", {1, 2, 3, 4, 5, 6}, 4, rng);
    auto more = records_with_scores("Angry", {3, 1, 2}, 4, rng);
    recs.insert(recs.end(), more.begin(), more.end());
    const auto cb = build_codebook(recs);
    auto dir = testing::temp_dir("codebook");
    save_codebook(cb, dir / "cb.json");
    const auto back = load_codebook(dir / "cb.json");
    CHECK(back.dim == 4);
    for (const auto& [e, el] : cb.emotions)
        for (std::size_t l = 0; l < 3; ++l) CHECK(back.emotions.at(e).vectors[l].data == el.vectors[l].data);
    const auto j = codebook_to_json(cb);
    CHECK(j["neutral"] == std::vector<double>(4, 0.0));
    CHECK(j["Amused"]["boundaries"].size() == 2);
    CHECK(j["provenance"]["bin_policy"] == "quantile");

    const Tensor m = condition(back, {{"Amused", "Max"}, {"Neutral", "-"}, {"Amused", "Min"}});
    for (std::size_t d = 0; d < 4; ++d) {
        CHECK(m.at(0, d) == cb.emotions.at("Amused").vectors[2].data[d]);
        CHECK(m.at(1, d) == 0.0);
        CHECK(m.at(2, d) == cb.emotions.at("Amused").vectors[0].data[d]);
    }
    const Tensor z = condition(back, {{"neutral", "-"}, {"Neutral", "Max"}});
    for (double v : z.data) CHECK(v == 0.0);
    CHECK_THROWS_AS(condition(back, {{"Sleepy", "Max"}}), Error);
    CHECK_THROWS_AS(condition(back, {{"Amused", "Loud"}}), Error);
    // an utterance's own bin maps back to that bin's average
    const auto& el = cb.emotions.at("Angry");
    for (std::size_t l = 0; l < 3; ++l)
        for (std::size_t i : el.members[l]) {
            const Tensor row = condition(back, {{recs[i].emotion, cb.levels[l]}});
            CHECK(row.data == el.vectors[l].data);
        }
}

TEST_CASE("phoneme averaging") {
    std::mt19937_64 rng(6);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t t = 1 + trial % 30;
        const double rate = 40.0;
        const Tensor i = random_tensor({t, 3}, rng);
        const double dur = t / rate;
        PhonemeAlignment a;
        double pos = 0.0;
        while (true) {
            const double len = u(rng) * 0.06;
            if (pos + len > dur) break;
            a.phonemes.push_back({"p", pos, pos + len});
            pos += len + (u(rng) < 0.3 ? 0.01 : 0.0);
        }
        if (a.phonemes.empty()) a.phonemes.push_back({"p", 0.0, dur});
        const Tensor got = phoneme_average(i, a, rate);
        const Tensor want = brute_force_average(i, a, rate);
        for (std::size_t k = 0; k < got.data.size(); ++k) CHECK(std::abs(got.data[k] - want.data[k]) < 1e-6);
    }
    const Tensor i = random_tensor({9, 2}, rng);
    const Tensor whole = phoneme_average(i, PhonemeAlignment{{{"a", 0.0, 9 / 40.0}}}, 40.0);
    CHECK(whole.data == pool(i).data);
    const Tensor c({4, 2}, 0.75);
    for (double v : phoneme_average(c, PhonemeAlignment{{{"a", 0.0, 0.03}, {"b", 0.03, 0.1}}}, 40.0).data)
        CHECK(v == 0.75);
    CHECK_THROWS_AS(phoneme_average(c, PhonemeAlignment{{{"a", 0.0, 0.05}, {"b", 0.04, 0.08}}}, 40.0), Error);
    CHECK_THROWS_AS(phoneme_average(c, PhonemeAlignment{{{"a", -0.01, 0.05}}}, 40.0), Error);
    CHECK_THROWS_AS(phoneme_average(c, PhonemeAlignment{{{"a", 0.0, 0.5}}}, 40.0), Error);
}

TEST_CASE("alignment and label files") {
    const auto a = parse_alignment("#phonemes v1\nHH\t0\t0.05\nAY\t0.05\t0.125\n", "t");
    REQUIRE(a.phonemes.size() == 2);
    CHECK(a.phonemes[1].symbol == "AY");
    CHECK(a.phonemes[1].end_s == 0.125);
    CHECK(parse_alignment(format_alignment(a), "t").phonemes[1].start_s == 0.05);
    CHECK_THROWS_AS(parse_alignment("HH\t0\t1\n", "t"), Error);
    CHECK_THROWS_AS(parse_alignment("#phonemes v1\nHH\t0\n", "t"), Error);
    CHECK_THROWS_AS(parse_alignment("#phonemes v1\nHH\tx\t1\n", "t"), Error);
    const auto l = parse_phoneme_labels("#labels v1\nAmused\tMax\nNeutral\n", "t");
    REQUIRE(l.size() == 2);
    CHECK(l[0].level == "Max");
    CHECK(l[1].emotion == "Neutral");
    CHECK_THROWS_AS(parse_phoneme_labels("#labels v1\nAmused\n", "t"), Error);
}
