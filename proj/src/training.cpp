#include "emorank/training.h"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <optional>
#include <sstream>

#include "emorank/binary_io.h"
#include "emorank/error.h"
#include "emorank/mixup.h"

namespace emorank {

using nlohmann::json;

void TrainConfig::validate() const {
    require(iterations >= 1, ErrorKind::kInvalidArgument, "train.iterations must be >= 1");
    require(learning_rate >= 0.0 && std::isfinite(learning_rate), ErrorKind::kInvalidArgument,
            "train.learning_rate must be finite and >= 0");
    require(batch_pairs >= 1, ErrorKind::kInvalidArgument, "train.batch_pairs must be >= 1");
    loss_weights.validate();
}

json TrainConfig::to_json() const {
    return json{{"iterations", iterations},       {"learning_rate", learning_rate},
                {"batch_pairs", batch_pairs},     {"seed", seed},
                {"checkpoint_every", checkpoint_every}, {"alpha", loss_weights.alpha},
                {"beta", loss_weights.beta},      {"pair_policy", to_string(pair_policy)}};
}

TrainConfig TrainConfig::from_json(const json& j) {
    require(j.is_object(), ErrorKind::kInvalidArgument, "train config must be a JSON object");
    TrainConfig c;
    for (auto it = j.begin(); it != j.end(); ++it) {
        const std::string& k = it.key();
        try {
            if (k == "iterations") c.iterations = it->get<std::uint64_t>();
            else if (k == "learning_rate") c.learning_rate = it->get<double>();
            else if (k == "batch_pairs") c.batch_pairs = it->get<std::size_t>();
            else if (k == "seed") c.seed = it->get<std::uint64_t>();
            else if (k == "checkpoint_every") c.checkpoint_every = it->get<std::uint64_t>();
            else if (k == "alpha") c.loss_weights.alpha = it->get<double>();
            else if (k == "beta") c.loss_weights.beta = it->get<double>();
            else if (k == "pair_policy") c.pair_policy = parse_pair_policy(it->get<std::string>());
            else fail(ErrorKind::kInvalidArgument, "unknown train config key '" + k + "'");
        } catch (const json::exception& e) {
            fail(ErrorKind::kInvalidArgument, "train config key '" + k + "': " + e.what());
        }
    }
    c.validate();
    return c;
}

void compute_normalization(const Corpus& corpus, Tensor& mean, Tensor& stddev) {
    corpus.validate();
    const std::size_t c = corpus.channels();
    std::vector<double> sum(c, 0.0), sq(c, 0.0);
    std::size_t n = 0;
    for (const auto& u : corpus.utterances()) {
        for (std::size_t t = 0; t < u.frames; ++t) {
            for (std::size_t k = 0; k < c; ++k) {
                const double v = u.at(t, k);
                sum[k] += v;
                sq[k] += v * v;
            }
        }
        n += u.frames;
    }
    mean = Tensor({c}, 0.0);
    stddev = Tensor({c}, 1.0);
    for (std::size_t k = 0; k < c; ++k) {
        const double m = sum[k] / static_cast<double>(n);
        const double var = std::max(0.0, sq[k] / static_cast<double>(n) - m * m);
        mean.data[k] = m;
        const double sd = std::sqrt(var);
        stddev.data[k] = sd > 1e-8 ? sd : 1.0;
    }
}

TrainState init_training(const Corpus& corpus, const ExtractorConfig& ecfg, const TrainConfig& tcfg) {
    ecfg.validate();
    tcfg.validate();
    corpus.validate();
    require(corpus.channels() == ecfg.input_dim, ErrorKind::kShape,
            "corpus has " + std::to_string(corpus.channels()) + " channels, extractor expects " +
                std::to_string(ecfg.input_dim));
    require(corpus.classes() == ecfg.classes && corpus.neutral_class() == ecfg.neutral_class,
            ErrorKind::kInvalidArgument, "corpus class list does not match extractor config");
    TrainState s;
    s.rng.seed(tcfg.seed);
    s.params = init_params(ecfg, s.rng);
    compute_normalization(corpus, s.params.norm_mean, s.params.norm_std);
    s.adam = AdamState::zeros_like(s.params.trainable());
    return s;
}

PairLoss pair_loss_and_grad(const ModelParams& params, const ExtractorConfig& ecfg, const MixPair& pair,
                            const LossWeights& weights, bool training, std::mt19937_64* dropout_rng) {
    Graph g;
    Extractor ex(g, params, ecfg);
    const Var hi = ex.pool(ex.forward_intensity(g.constant(pair.x_mix_i), pair.y_emo, training, dropout_rng));
    const Var hj = ex.pool(ex.forward_intensity(g.constant(pair.x_mix_j), pair.y_emo, training, dropout_rng));
    const Var l_mix =
        graph_loss::mixup_ce(g, ex.classify(hi), ex.classify(hj), pair.lambda_i, pair.lambda_j, pair.y_emo, pair.y_neu);
    const Var p = graph_loss::pair_probability(g, ex.project_score(hi), ex.project_score(hj));
    const Var l_rank = graph_loss::rank_loss(g, p, pair.lambda_diff);
    const Var total = graph_loss::total_loss(g, l_mix, l_rank, weights);
    g.backward(total);
    PairLoss out;
    out.l_mixup = g.value(l_mix).data[0];
    out.l_rank = g.value(l_rank).data[0];
    out.l_total = g.value(total).data[0];
    for (const Var v : ex.param_vars()) {
        out.grads.push_back(g.grad(v));
    }
    return out;
}

double pair_total_loss(const ModelParams& params, const ExtractorConfig& ecfg, const MixPair& pair,
                       const LossWeights& weights) {
    Graph g;
    Extractor ex(g, params, ecfg);
    const Var hi = ex.pool(ex.forward_intensity(g.constant(pair.x_mix_i), pair.y_emo));
    const Var hj = ex.pool(ex.forward_intensity(g.constant(pair.x_mix_j), pair.y_emo));
    const Var l_mix =
        graph_loss::mixup_ce(g, ex.classify(hi), ex.classify(hj), pair.lambda_i, pair.lambda_j, pair.y_emo, pair.y_neu);
    const Var p = graph_loss::pair_probability(g, ex.project_score(hi), ex.project_score(hj));
    return g.value(graph_loss::total_loss(g, l_mix, graph_loss::rank_loss(g, p, pair.lambda_diff), weights)).data[0];
}

void run_training(TrainState& state, const Corpus& corpus, const ExtractorConfig& ecfg, const TrainConfig& tcfg,
                  std::uint64_t until, const CheckpointFn& on_checkpoint) {
    tcfg.validate();
    require(until >= state.iteration, ErrorKind::kInvalidArgument, "cannot train backwards");
    std::vector<Tensor> normalized;
    normalized.reserve(corpus.size());
    for (const auto& u : corpus.utterances()) {
        normalized.push_back(normalize_features(state.params, u.to_tensor()));
    }
    const AdamConfig adam_cfg{tcfg.learning_rate};
    const std::size_t batch = tcfg.batch_pairs;
    auto trainable = state.params.trainable();

    while (state.iteration < until) {
        std::vector<MixPair> pairs;
        std::vector<std::pair<std::size_t, std::size_t>> ids;
        std::vector<std::uint64_t> dropout_seeds;
        for (std::size_t b = 0; b < batch; ++b) {
            const auto [e, n] = sample_pair(corpus, tcfg.pair_policy, state.rng);
            ids.emplace_back(e, n);
            pairs.push_back(make_mix_pair(normalized[e], corpus.class_of(e), normalized[n], corpus.class_of(n),
                                          corpus.neutral_class(), state.rng));
            dropout_seeds.push_back(state.rng());
        }

        std::vector<std::optional<PairLoss>> results(batch);
        std::vector<std::string> errors(batch);
#pragma omp parallel for schedule(dynamic, 1)
        for (std::ptrdiff_t b = 0; b < static_cast<std::ptrdiff_t>(batch); ++b) {
            const auto k = static_cast<std::size_t>(b);
            try {
                std::mt19937_64 drng(dropout_seeds[k]);
                results[k] = pair_loss_and_grad(state.params, ecfg, pairs[k], tcfg.loss_weights, true, &drng);
            } catch (const std::exception& ex) {
                errors[k] = ex.what();
            }
        }

        LossRecord rec;
        rec.iteration = state.iteration;
        std::vector<Tensor> grads;
        for (std::size_t k = 0; k < batch; ++k) {
            const bool finite = errors[k].empty() && std::isfinite(results[k]->l_total);
            if (!finite) {
                std::ostringstream os;
                os << std::setprecision(17) << "non-finite loss at iteration " << state.iteration << ", pair " << k
                   << " (emotional '" << corpus.utterances()[ids[k].first].source_id << "', neutral '"
                   << corpus.utterances()[ids[k].second].source_id << "', lambda_i=" << pairs[k].lambda_i
                   << ", lambda_j=" << pairs[k].lambda_j << ")";
                if (!errors[k].empty()) {
                    os << ": " << errors[k];
                }
                fail(ErrorKind::kNonFinite, os.str());
            }
            const PairLoss& pl = *results[k];
            rec.l_mixup += pl.l_mixup;
            rec.l_rank += pl.l_rank;
            rec.l_total += pl.l_total;
            if (grads.empty()) {
                grads = pl.grads;
            } else {
                for (std::size_t t = 0; t < grads.size(); ++t) {
                    for (std::size_t i = 0; i < grads[t].data.size(); ++i) {
                        grads[t].data[i] += pl.grads[t].data[i];
                    }
                }
            }
        }
        const double inv = 1.0 / static_cast<double>(batch);
        rec.l_mixup *= inv;
        rec.l_rank *= inv;
        rec.l_total *= inv;
        std::vector<const Tensor*> gptr;
        for (auto& g : grads) {
            for (auto& v : g.data) {
                v *= inv;
            }
            gptr.push_back(&g);
        }
        adam_step(trainable, gptr, state.adam, adam_cfg);
        state.trace.push_back(rec);
        state.iteration += 1;
        if (on_checkpoint && tcfg.checkpoint_every > 0 && state.iteration % tcfg.checkpoint_every == 0) {
            on_checkpoint(state);
        }
    }
}

TrainResult train_rank_model(const Corpus& corpus, const ExtractorConfig& ecfg, const TrainConfig& tcfg,
                             const CheckpointFn& on_checkpoint) {
    TrainState s = init_training(corpus, ecfg, tcfg);
    run_training(s, corpus, ecfg, tcfg, tcfg.iterations, on_checkpoint);
    return TrainResult{std::move(s.params), std::move(s.trace)};
}

namespace {

constexpr std::uint32_t kAppendixVersion = 1;

void write_f64_tensor(ByteWriter& w, const Tensor& t) {
    w.u64(t.data.size());
    for (double v : t.data) {
        w.f64(v);
    }
}

void read_f64_tensor(ByteReader& r, Tensor& t, const std::string& what) {
    const std::uint64_t n = r.u64();
    require(n == t.data.size(), ErrorKind::kShape, what + ": optimizer appendix tensor size mismatch");
    for (auto& v : t.data) {
        v = r.f64();
    }
}

}  // namespace

void save_checkpoint(const TrainState& state, const ExtractorConfig& ecfg, const TrainConfig& tcfg,
                     const json& provenance, const std::filesystem::path& path) {
    ModelFile mf{ecfg, state.params, provenance};
    auto bytes = encode_model(mf);
    ByteWriter w;
    w.magic("EMOA");
    w.u32(kAppendixVersion);
    w.str(tcfg.to_json().dump());
    w.u64(state.iteration);
    w.u64(state.adam.step);
    std::ostringstream rng_state;
    rng_state << state.rng;
    w.str(rng_state.str());
    w.u32(static_cast<std::uint32_t>(state.params.tensors.size()));
    for (std::size_t k = 0; k < state.params.tensors.size(); ++k) {
        write_f64_tensor(w, state.params.tensors[k]);
        write_f64_tensor(w, state.adam.m[k]);
        write_f64_tensor(w, state.adam.v[k]);
    }
    write_f64_tensor(w, state.params.norm_mean);
    write_f64_tensor(w, state.params.norm_std);
    w.u64(state.trace.size());
    for (const auto& rec : state.trace) {
        w.u64(rec.iteration);
        w.f64(rec.l_mixup);
        w.f64(rec.l_rank);
        w.f64(rec.l_total);
    }
    w.crc();
    bytes.insert(bytes.end(), w.bytes().begin(), w.bytes().end());
    write_file_bytes(path, bytes);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    const auto bytes = read_file_bytes(path);
    const std::string what = path.string();
    std::size_t end = 0;
    Checkpoint cp;
    cp.model = decode_model(bytes, what, &end);
    ByteReader r(std::span<const std::uint8_t>(bytes).subspan(end), what + " (optimizer appendix)");
    r.expect_magic("EMOA");
    const std::uint32_t version = r.u32();
    require(version == kAppendixVersion, ErrorKind::kVersion,
            what + ": unsupported checkpoint appendix version " + std::to_string(version));
    try {
        cp.train_config = TrainConfig::from_json(json::parse(r.str()));
    } catch (const json::exception& e) {
        fail(ErrorKind::kFormat, what + ": bad train config JSON: " + e.what());
    }
    TrainState& s = cp.state;
    s.iteration = r.u64();
    s.params = cp.model.params;
    s.adam = AdamState::zeros_like(s.params.trainable());
    s.adam.step = r.u64();
    std::istringstream rng_state(r.str());
    rng_state >> s.rng;
    require(!rng_state.fail(), ErrorKind::kFormat, what + ": bad generator state");
    const std::uint32_t count = r.u32();
    require(count == s.params.tensors.size(), ErrorKind::kShape, what + ": optimizer appendix tensor count mismatch");
    for (std::size_t k = 0; k < count; ++k) {
        read_f64_tensor(r, s.params.tensors[k], what);
        read_f64_tensor(r, s.adam.m[k], what);
        read_f64_tensor(r, s.adam.v[k], what);
    }
    read_f64_tensor(r, s.params.norm_mean, what);
    read_f64_tensor(r, s.params.norm_std, what);
    const std::uint64_t n = r.u64();
    require(n <= r.remaining() / 32, ErrorKind::kFormat, what + ": truncated loss trace");
    s.trace.resize(n);
    for (auto& rec : s.trace) {
        rec.iteration = r.u64();
        rec.l_mixup = r.f64();
        rec.l_rank = r.f64();
        rec.l_total = r.f64();
    }
    r.verify_crc();
    require(r.remaining() == 0, ErrorKind::kFormat, what + ": trailing bytes after checkpoint");
    return cp;
}

void write_loss_csv(const std::vector<LossRecord>& trace, const std::filesystem::path& path) {
    std::ostringstream os;
    os << "iteration,l_mixup,l_rank,l_total\n" << std::setprecision(17);
    for (const auto& rec : trace) {
        os << rec.iteration << ',' << rec.l_mixup << ',' << rec.l_rank << ',' << rec.l_total << '\n';
    }
    const std::string s = os.str();
    write_file_bytes(path, std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(s.data()), s.size()));
}

}  // namespace emorank
