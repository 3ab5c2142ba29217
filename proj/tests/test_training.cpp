#include <cmath>
#include <fstream>
#include <map>
#include <random>
#include <sstream>

#include <omp.h>

#include "doctest.h"

#include "emorank/config.h"
#include "emorank/corpus.h"
#include "emorank/error.h"
#include "emorank/synthcorpus.h"
#include "emorank/training.h"
#include "support.h"

using namespace emorank;

namespace {

FeatureMatrix utt(const std::string& id, const std::string& emo, const std::string& spk, std::size_t frames = 5,
                  float fill = 1.0f) {
    FeatureMatrix fm;
    fm.frames = frames;
    fm.channels = 4;
    fm.data.assign(frames * 4, fill);
    fm.frame_rate_hz = 40.0;
    fm.source_id = id;
    fm.emotion_label = emo;
    fm.speaker_id = spk;
    return fm;
}

struct Small {
    RunConfig rc;
    SynthCorpus sc;
};

Small small_setup(std::uint64_t iterations) {
    Small s;
    s.rc = preset("desk");
    s.rc.synth.utterances_per_cell = 8;
    s.rc.synth.frame_length_range = {6, 10};
    s.rc.extractor.hidden_dim = 8;
    s.rc.extractor.conv_filter_dim = 8;
    s.rc.extractor.projector_hidden = 4;
    s.rc.train.iterations = iterations;
    s.rc.train.batch_pairs = 3;
    s.rc.train.seed = 17;
    std::mt19937_64 rng(1);
    s.sc = generate(s.rc.synth, rng);
    return s;
}

}  // namespace

TEST_CASE("corpus class order and validation") {
    const Corpus c = Corpus::from_utterances({utt("a", "Sleepy", "s"), utt("b", "neutral", "s"), utt("c", "Angry", "s")});
    CHECK(c.classes() == std::vector<std::string>{"neutral", "Angry", "Sleepy"});
    CHECK(c.neutral_class() == 0);
    CHECK(c.non_neutral() == std::vector<std::size_t>{0, 2});
    try {
        Corpus::from_utterances({utt("a", "Angry", "s")}).validate();
        FAIL("expected an error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::kEmptyClass);
    }
}

TEST_CASE("pair sampling") {
    std::mt19937_64 rng(3);
    SUBCASE("single pair") {
        const Corpus c = Corpus::from_utterances({utt("n", "Neutral", "s"), utt("a", "Angry", "s")});
        for (int i = 0; i < 100; ++i) CHECK(sample_pair(c, PairPolicy::kSameSpeaker, rng) == std::make_pair<std::size_t, std::size_t>(1, 0));
    }
    SUBCASE("same speaker policy") {
        const Corpus c = Corpus::from_utterances({utt("n1", "Neutral", "s1"), utt("n2", "Neutral", "s2"),
                                                  utt("a1", "Angry", "s1"), utt("a2", "Angry", "s2"),
                                                  utt("a3", "Angry", "s3")});
        for (int i = 0; i < 500; ++i) {
            const auto [e, n] = sample_pair(c, PairPolicy::kSameSpeaker, rng);
            const auto& es = c.utterances()[e].speaker_id;
            if (es != "s3") CHECK(c.utterances()[n].speaker_id == es);
        }
    }
    SUBCASE("emotional utterances are drawn uniformly") {
        std::vector<FeatureMatrix> us{utt("n", "Neutral", "s")};
        for (int i = 0; i < 7; ++i) us.push_back(utt("a" + std::to_string(i), i % 2 ? "Angry" : "Amused", "s"));
        const Corpus c = Corpus::from_utterances(us);
        std::map<std::size_t, int> counts;
        const int n = 10000;
        for (int i = 0; i < n; ++i) counts[sample_pair(c, PairPolicy::kAny, rng).first] += 1;
        const double p = 1.0 / 7.0, sigma = std::sqrt(n * p * (1 - p));
        CHECK(counts.size() == 7);
        for (const auto& [k, v] : counts) CHECK(std::abs(v - n * p) < 3.0 * sigma);
    }
}

TEST_CASE("loss decreases over 200 iterations on the synthetic corpus") {
    RunConfig rc = preset("desk");
    rc.train.iterations = 200;
    std::mt19937_64 rng(7);
    const SynthCorpus sc = generate(rc.synth, rng);
    const TrainResult r = train_rank_model(sc.corpus, rc.extractor, rc.train);
    REQUIRE(r.trace.size() == 200);
    double first = 0.0, last = 0.0;
    for (std::size_t i = 0; i < 50; ++i) {
        first += r.trace[i].l_total / 50.0;
        last += r.trace[150 + i].l_total / 50.0;
    }
    CHECK(last < first);
    for (const auto& rec : r.trace) CHECK(std::isfinite(rec.l_total));
}

TEST_CASE("determinism, thread independence and zero learning rate") {
    const Small s = small_setup(15);
    const TrainResult a = train_rank_model(s.sc.corpus, s.rc.extractor, s.rc.train);
    omp_set_num_threads(3);
    const TrainResult b = train_rank_model(s.sc.corpus, s.rc.extractor, s.rc.train);
    omp_set_num_threads(1);
    REQUIRE(a.trace.size() == 15);
    for (std::size_t i = 0; i < a.trace.size(); ++i) CHECK(a.trace[i].l_total == b.trace[i].l_total);
    for (std::size_t i = 0; i < a.params.tensors.size(); ++i) CHECK(a.params.tensors[i].data == b.params.tensors[i].data);

    TrainConfig frozen = s.rc.train;
    frozen.learning_rate = 0.0;
    TrainState st = init_training(s.sc.corpus, s.rc.extractor, frozen);
    const ModelParams before = st.params;
    run_training(st, s.sc.corpus, s.rc.extractor, frozen, 10);
    for (std::size_t i = 0; i < before.tensors.size(); ++i) CHECK(st.params.tensors[i].data == before.tensors[i].data);
}

TEST_CASE("checkpoint resume equals an uninterrupted run") {
    const Small s = small_setup(20);
    const TrainResult full = train_rank_model(s.sc.corpus, s.rc.extractor, s.rc.train);
    auto dir = testing::temp_dir("ckpt");
    TrainState st = init_training(s.sc.corpus, s.rc.extractor, s.rc.train);
    run_training(st, s.sc.corpus, s.rc.extractor, s.rc.train, 8);
    save_checkpoint(st, s.rc.extractor, s.rc.train, nlohmann::json::object(), dir / "c.emom");
    Checkpoint ck = load_checkpoint(dir / "c.emom");
    CHECK(ck.state.iteration == 8);
    CHECK(ck.train_config.to_json() == s.rc.train.to_json());
    run_training(ck.state, s.sc.corpus, ck.model.config, ck.train_config, 20);
    REQUIRE(ck.state.trace.size() == 20);
    for (std::size_t i = 0; i < 20; ++i) CHECK(std::abs(ck.state.trace[i].l_total - full.trace[i].l_total) <= 1e-12);
    for (std::size_t i = 0; i < full.params.tensors.size(); ++i)
        for (std::size_t k = 0; k < full.params.tensors[i].data.size(); ++k)
            CHECK(std::abs(ck.state.params.tensors[i].data[k] - full.params.tensors[i].data[k]) <= 1e-12);
    // the model section alone loads as a regular model
    CHECK(load_model(dir / "c.emom").params.names == full.params.names);
}

TEST_CASE("non-finite loss aborts with a diagnostic") {
    const Small s = small_setup(5);
    TrainState st = init_training(s.sc.corpus, s.rc.extractor, s.rc.train);
    st.params.get("projector.fc2.weight").data[0] = std::numeric_limits<double>::infinity();
    try {
        run_training(st, s.sc.corpus, s.rc.extractor, s.rc.train, 5);
        FAIL("expected an error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::kNonFinite);
        const std::string msg = e.what();
        CHECK(msg.find("iteration 0") != std::string::npos);
        CHECK(msg.find("lambda_i=") != std::string::npos);
    }
}

TEST_CASE("train config and loss CSV") {
    TrainConfig t;
    CHECK(t.iterations == 20000);
    CHECK(t.learning_rate == 1e-6);
    CHECK(TrainConfig::from_json(t.to_json()).to_json() == t.to_json());
    CHECK_THROWS_AS(TrainConfig::from_json({{"iters", 3}}), Error);
    CHECK_THROWS_AS(TrainConfig::from_json({{"batch_pairs", 0}}), Error);
    auto dir = testing::temp_dir("losscsv");
    write_loss_csv({{0, 1.5, 0.25, 0.4}, {1, 1.0, 0.5, 0.6}}, dir / "l.csv");
    std::ifstream in(dir / "l.csv", std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    CHECK(ss.str() == "iteration,l_mixup,l_rank,l_total\n0,1.5,0.25,0.40000000000000002\n1,1,0.5,0.59999999999999998\n");
}
