#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "emorank/binary_io.h"
#include "emorank/codebook.h"
#include "emorank/config.h"
#include "emorank/corpus.h"
#include "emorank/error.h"
#include "emorank/evalmetrics.h"
#include "emorank/features.h"
#include "emorank/gradcheck.h"
#include "emorank/synthcorpus.h"
#include "emorank/training.h"
#include "emorank/wav.h"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace emorank;

namespace {

constexpr const char* kVersion = "1.0.0";
constexpr int kCheckFailed = 1;

struct CommonOptions {
    std::string config_path;
    std::string preset_name = "desk";
    std::vector<std::string> sets;
    std::optional<std::uint64_t> seed;
};

struct Resolved {
    RunConfig config;
    json user = json::object();  // keys set by file or flags
};

void merge_into(json& dst, const json& src) {
    for (auto sec = src.begin(); sec != src.end(); ++sec) {
        require(sec->is_object(), ErrorKind::kInvalidArgument, "config section '" + sec.key() + "' must be an object");
        for (auto kv = sec->begin(); kv != sec->end(); ++kv) {
            dst[sec.key()][kv.key()] = *kv;
        }
    }
}

bool user_set(const Resolved& r, const std::string& section, const std::string& key) {
    return r.user.contains(section) && r.user[section].contains(key);
}

// Seed precedence: --seed, then train.seed from file or --set, then
// EMORANK_SEED, then the preset default.
Resolved resolve(const CommonOptions& o) {
    Resolved r;
    if (!o.config_path.empty()) {
        const auto bytes = read_file_bytes(o.config_path);
        json file;
        try {
            file = json::parse(bytes.begin(), bytes.end());
        } catch (const json::exception& e) {
            fail(ErrorKind::kFormat, o.config_path + ": " + e.what());
        }
        require(file.is_object(), ErrorKind::kInvalidArgument, o.config_path + ": config must be a JSON object");
        merge_into(r.user, file);
    }
    merge_into(r.user, parse_overrides(o.sets));
    if (o.seed) {
        r.user["train"]["seed"] = *o.seed;
    } else if (!user_set(r, "train", "seed")) {
        if (const char* env = std::getenv("EMORANK_SEED")) {
            try {
                std::size_t used = 0;
                const unsigned long long v = std::stoull(env, &used);
                require(used == std::string(env).size(), ErrorKind::kInvalidArgument, "");
                r.user["train"]["seed"] = static_cast<std::uint64_t>(v);
            } catch (const std::exception&) {
                fail(ErrorKind::kInvalidArgument, std::string("EMORANK_SEED is not an unsigned integer: '") + env + "'");
            }
        }
    }
    r.config = RunConfig::from_json(r.user, preset(o.preset_name));
    return r;
}

json provenance(const std::string& command, const RunConfig& rc, const json& inputs) {
    return json{{"tool", "emorank"},
                {"version", kVersion},
                {"command", command},
                {"config_hash", rc.hash()},
                {"seed", rc.train.seed},
                {"inputs", inputs},
                {"config", rc.to_json()}};
}

void write_text(const fs::path& path, const std::string& text) {
    write_file_bytes(path, std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

void write_provenance(const fs::path& path, const json& prov) { write_text(path, prov.dump(2) + "\n"); }

fs::path sidecar(const fs::path& artifact) { return fs::path(artifact.string() + ".provenance.json"); }

std::string config_help() {
    return "Config keys (desk preset defaults; --preset paper uses the values in parentheses):\n" +
           describe_config(preset("desk"), preset("paper"), "paper") +
           "\nPrecedence: --set/--seed flags > --config file > preset. EMORANK_SEED supplies train.seed when\n"
           "neither a flag nor the file sets it.\n"
           "Exit codes: 0 ok, 1 check failed, 2 invalid argument, 3 I/O, 4 format, 5 checksum, 6 version,\n"
           "7 shape, 8 non-finite, 9 empty class.\n";
}

void add_common(CLI::App* app, CommonOptions& o) {
    app->add_option("--config", o.config_path, "JSON run configuration file")->check(CLI::ExistingFile);
    app->add_option("--preset", o.preset_name, "Starting configuration: desk | paper")->capture_default_str();
    app->add_option("--set", o.sets, "Override one key, e.g. --set train.iterations=500 (repeatable)");
    app->add_option("--seed", o.seed, "Random seed (overrides train.seed)");
    app->footer(config_help());
}

// Label CSV: header filename,speaker,emotion.
std::map<std::string, std::pair<std::string, std::string>> read_label_csv(const fs::path& path) {
    std::ifstream in(path);
    require(static_cast<bool>(in), ErrorKind::kIo, "cannot open labels CSV " + path.string());
    std::string line;
    require(static_cast<bool>(std::getline(in, line)), ErrorKind::kFormat, path.string() + ": empty file");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    require(line == "filename,speaker,emotion", ErrorKind::kFormat,
            path.string() + ": header must be 'filename,speaker,emotion'");
    std::map<std::string, std::pair<std::string, std::string>> out;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::vector<std::string> f;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) f.push_back(cell);
        require(f.size() == 3 && !f[0].empty() && !f[2].empty(), ErrorKind::kFormat,
                path.string() + ":" + std::to_string(lineno) + ": expected filename,speaker,emotion");
        require(out.emplace(f[0], std::make_pair(f[1], f[2])).second, ErrorKind::kFormat,
                path.string() + ": duplicate row for " + f[0]);
    }
    return out;
}

int cmd_featurize(const CommonOptions& o, const std::string& wav_dir, const std::string& labels,
                  const std::string& out_dir, const std::string& pitch_dir) {
    const Resolved r = resolve(o);
    const FeatureConfig& fc = r.config.features;
    fc.validate();
    const auto label_rows = read_label_csv(labels);
    std::vector<fs::path> wavs;
    for (const auto& e : fs::directory_iterator(wav_dir)) {
        if (e.is_regular_file() && e.path().extension() == ".wav") wavs.push_back(e.path());
    }
    std::sort(wavs.begin(), wavs.end());
    fs::create_directories(out_dir);

    std::size_t ok = 0;
    std::vector<std::pair<std::string, Error>> failures;
    std::map<std::pair<std::string, std::string>, std::size_t> counts;
    json inputs = json::object();
    for (const auto& w : wavs) {
        const std::string name = w.filename().string();
        try {
            auto it = label_rows.find(name);
            require(it != label_rows.end(), ErrorKind::kInvalidArgument, name + ": no row in labels CSV");
            const Audio audio = read_wav(w);
            require(audio.sample_rate_hz == fc.sample_rate_hz, ErrorKind::kFormat,
                    name + ": sample rate " + std::to_string(audio.sample_rate_hz) + " Hz, config expects " +
                        std::to_string(fc.sample_rate_hz));
            FeatureMatrix fm = extract_features(audio.samples, fc, w.stem().string(), it->second.second,
                                                it->second.first);
            if (!pitch_dir.empty()) {
                const fs::path f0 = fs::path(pitch_dir) / (w.stem().string() + ".f0.csv");
                if (fs::exists(f0)) import_pitch_csv(fm, f0);
            }
            write_features(fm, fs::path(out_dir) / (w.stem().string() + ".emof"));
            inputs[name] = sha256_file(w);
            counts[{it->second.first, it->second.second}] += 1;
            ++ok;
        } catch (const Error& e) {
            failures.emplace_back(name, e);
        }
    }
    json prov = provenance("featurize", r.config, inputs);
    prov["labels_hash"] = sha256_file(labels);
    write_provenance(fs::path(out_dir) / "provenance.json", prov);

    for (const auto& [key, n] : counts) {
        std::cout << "  speaker=" << key.first << " emotion=" << key.second << " : " << n << "\n";
    }
    for (const auto& [name, e] : failures) {
        std::cerr << "failed: " << e.what() << "\n";
    }
    std::cout << ok << " ok, " << failures.size() << " failed\n";
    return failures.empty() ? 0 : failures.front().second.exit_code();
}

int cmd_synthdata(const CommonOptions& o, const std::string& out_dir) {
    const Resolved r = resolve(o);
    std::mt19937_64 rng(r.config.train.seed);
    const SynthCorpus sc = generate(r.config.synth, rng);
    write_synth_corpus(sc, out_dir);
    write_provenance(fs::path(out_dir) / "provenance.json",
                     provenance("synthdata", r.config, json{{"corpus_hash", sc.corpus.content_hash()}}));
    std::cout << sc.corpus.size() << " utterances written to " << out_dir << "\n";
    return 0;
}

int cmd_train(const CommonOptions& o, const std::string& features, const std::string& out_model,
              std::string loss_csv, const std::string& checkpoint_path, const std::string& resume) {
    Resolved r = resolve(o);
    RunConfig& rc = r.config;
    const Corpus corpus = Corpus::load_dir(features);
    corpus.validate();
    if (!r.config.explicit_classes) {
        rc.extractor.classes = corpus.classes();
        rc.extractor.neutral_class = corpus.neutral_class();
    }
    if (!user_set(r, "extractor", "input_dim")) {
        rc.extractor.input_dim = corpus.channels();
    }
    if (loss_csv.empty()) loss_csv = out_model + ".loss.csv";

    TrainState state;
    ExtractorConfig ecfg = rc.extractor;
    TrainConfig tcfg = rc.train;
    json inputs{{"corpus_hash", corpus.content_hash()}};
    if (!resume.empty()) {
        Checkpoint ck = load_checkpoint(resume);
        ecfg = ck.model.config;
        const std::uint64_t iterations = tcfg.iterations;
        tcfg = ck.train_config;
        tcfg.iterations = iterations;
        state = std::move(ck.state);
        inputs["resume_hash"] = sha256_file(resume);
        require(corpus.classes() == ecfg.classes && corpus.channels() == ecfg.input_dim, ErrorKind::kShape,
                "corpus does not match the checkpoint's extractor config");
        rc.extractor = ecfg;
        rc.train = tcfg;
    } else {
        state = init_training(corpus, ecfg, tcfg);
    }
    const json prov = provenance("train", rc, inputs);
    CheckpointFn on_ck;
    if (!checkpoint_path.empty()) {
        on_ck = [&](const TrainState& s) { save_checkpoint(s, ecfg, tcfg, prov, checkpoint_path); };
    }
    run_training(state, corpus, ecfg, tcfg, tcfg.iterations, on_ck);
    if (!checkpoint_path.empty()) {
        save_checkpoint(state, ecfg, tcfg, prov, checkpoint_path);
    }

    json model_prov = prov;
    if (!state.trace.empty()) model_prov["final_l_total"] = state.trace.back().l_total;
    save_model(ModelFile{ecfg, state.params, model_prov}, out_model);
    write_provenance(sidecar(out_model), model_prov);
    write_loss_csv(state.trace, loss_csv);
    json loss_prov = prov;
    loss_prov["model_hash"] = sha256_file(out_model);
    write_provenance(sidecar(loss_csv), loss_prov);
    std::cout << "trained " << state.iteration << " iterations";
    if (!state.trace.empty()) {
        std::cout << std::setprecision(6) << ", final L_total " << state.trace.back().l_total;
    }
    std::cout << "\nmodel: " << out_model << "\nloss: " << loss_csv << "\n";
    return 0;
}

std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string q = "\"";
    for (char c : s) {
        if (c == '"') q += '"';
        q += c;
    }
    return q + "\"";
}

int cmd_score(const CommonOptions& o, const std::string& model_path, const std::string& features,
              const std::string& out_csv) {
    const Resolved r = resolve(o);
    const ModelFile mf = load_model(model_path);
    const Corpus corpus = Corpus::load_dir(features);
    const auto records = score_corpus(mf.params, mf.config, corpus, false);
    std::ostringstream os;
    os << "utterance_id,speaker,emotion,score\n" << std::setprecision(17);
    for (const auto& rec : records) {
        os << csv_field(rec.utterance_id) << ',' << csv_field(rec.speaker) << ',' << csv_field(rec.emotion) << ','
           << rec.score << '\n';
    }
    write_text(out_csv, os.str());
    json prov = provenance("score", r.config, json{{"corpus_hash", corpus.content_hash()}});
    prov["model_hash"] = sha256_file(model_path);
    write_provenance(sidecar(out_csv), prov);
    std::cout << records.size() << " utterances scored -> " << out_csv << "\n";
    return 0;
}

int cmd_codebook(const CommonOptions& o, const std::string& model_path, const std::string& features,
                 const std::string& out_json) {
    const Resolved r = resolve(o);
    const CodebookConfig& cc = r.config.codebook;
    const ModelFile mf = load_model(model_path);
    const Corpus corpus = Corpus::load_dir(features);
    const auto records =
        score_corpus(mf.params, mf.config, corpus, cc.level_averaging == LevelAveraging::kFrames);
    IntensityCodebook cb = build_codebook(records, cc.n_bins, cc.bin_policy, cc.level_averaging);
    json prov = provenance("codebook", r.config, json{{"corpus_hash", corpus.content_hash()}});
    prov["model_hash"] = sha256_file(model_path);
    for (auto it = cb.provenance.begin(); it != cb.provenance.end(); ++it) prov[it.key()] = *it;
    cb.provenance = prov;
    save_codebook(cb, out_json);
    for (const auto& w : cb.warnings) std::cerr << "warning: " << w << "\n";
    for (const auto& [emotion, el] : cb.emotions) {
        std::cout << emotion << ":";
        for (std::size_t l = 0; l < cb.levels.size(); ++l) {
            std::cout << ' ' << cb.levels[l] << '=' << std::setprecision(6) << el.mean_scores[l] << " (n="
                      << el.members[l].size() << ')';
        }
        std::cout << "\n";
    }
    return 0;
}

int cmd_condition(const CommonOptions& o, const std::string& codebook_path, const std::string& labels_path,
                  const std::string& alignment_path, const std::string& out) {
    const Resolved r = resolve(o);
    const IntensityCodebook cb = load_codebook(codebook_path);
    const auto labels = read_phoneme_labels(labels_path);
    require(!labels.empty(), ErrorKind::kInvalidArgument, labels_path + ": no phoneme labels");
    json inputs{{"codebook_hash", sha256_file(codebook_path)}, {"labels_hash", sha256_file(labels_path)}};
    if (!alignment_path.empty()) {
        const PhonemeAlignment align = read_alignment(alignment_path);
        require(align.phonemes.size() == labels.size(), ErrorKind::kShape,
                "alignment has " + std::to_string(align.phonemes.size()) + " phonemes, labels file has " +
                    std::to_string(labels.size()));
        inputs["alignment_hash"] = sha256_file(alignment_path);
    }
    const Tensor m = condition(cb, labels);
    FeatureMatrix fm;
    fm.frames = m.rows();
    fm.channels = m.cols();
    fm.data.assign(m.data.begin(), m.data.end());
    fm.frame_rate_hz = 1.0;
    fm.source_id = fs::path(labels_path).stem().string();
    fm.emotion_label = "conditioning";
    write_features(fm, out);
    write_provenance(sidecar(out), provenance("condition", r.config, inputs));
    std::cout << fm.frames << " phonemes x " << fm.channels << " dims -> " << out << "\n";
    return 0;
}

Tensor cepstra_of(const std::string& path, bool already_cepstral) {
    const FeatureMatrix fm = read_features(path);
    Tensor t = fm.to_tensor();
    if (already_cepstral) return t;
    Tensor log_mel = Tensor::matrix(fm.frames, fm.channels - 2);
    for (std::size_t i = 0; i < fm.frames; ++i) {
        for (std::size_t c = 0; c + 2 < fm.channels; ++c) log_mel.at(i, c) = t.at(i, c);
    }
    return mel_cepstrum(log_mel);
}

int cmd_mcd(const std::string& a, const std::string& b, bool cepstral, const std::string& out_json) {
    MetricReport rep;
    rep.metric = "MCD";
    rep.units = "dB";
    rep.per_item = mcd_per_frame(cepstra_of(a, cepstral), cepstra_of(b, cepstral));
    rep.n_items = rep.per_item.size();
    rep.value = mcd(cepstra_of(a, cepstral), cepstra_of(b, cepstral));
    rep.validate();
    std::cout << rep.to_table();
    json j = rep.to_json();
    j["provenance"] = json{{"tool", "emorank"},
                           {"version", kVersion},
                           {"command", "mcd"},
                           {"inputs", {{"a", sha256_file(a)}, {"b", sha256_file(b)}}},
                           {"cepstral_input", cepstral},
                           {"cepstral_order", cepstral ? 0 : kCepstralOrder}};
    if (!out_json.empty()) {
        write_text(out_json, j.dump(2) + "\n");
    } else {
        std::cout << j.dump() << "\n";
    }
    return 0;
}

int cmd_gradcheck(const CommonOptions& o, std::size_t frames, double tolerance, const std::string& out_json) {
    const Resolved r = resolve(o);
    GradcheckOptions opt;
    opt.frames = frames;
    opt.seed = r.config.train.seed;
    opt.tolerance = tolerance;
    opt.weights = r.config.train.loss_weights;
    const GradcheckReport rep = gradcheck_total_loss(tiny_extractor_config(), opt);
    for (const auto& t : rep.tensors) {
        std::cout << std::left << std::setw(28) << t.name << std::right << std::setw(7) << t.size << "  "
                  << std::scientific << std::setprecision(3) << t.rel_error << std::defaultfloat << "\n";
    }
    std::cout << (rep.passed() ? "PASS" : "FAIL") << " max relative error " << std::scientific << rep.max_rel_error
              << " (tolerance " << tolerance << ")\n";
    if (!out_json.empty()) {
        json j = rep.to_json();
        j["provenance"] = provenance("gradcheck", r.config, json::object());
        write_text(out_json, j.dump(2) + "\n");
    }
    return rep.passed() ? 0 : kCheckFailed;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"emorank: emotion intensity ranking, codebooks and conditioning"};
    app.set_version_flag("--version", kVersion);
    app.require_subcommand(1);
    app.footer(config_help());

    CommonOptions common;
    std::string wav_dir, labels, out_dir, pitch_dir, features, out, model, loss_csv, checkpoint, resume, codebook,
        alignment, a, b;
    bool cepstral = false;
    std::size_t frames = 6;
    double tolerance = 1e-3;

    auto* featurize = app.add_subcommand("featurize", "WAV files + labels CSV -> one EMOF feature file per WAV");
    add_common(featurize, common);
    featurize->add_option("--wav-dir", wav_dir, "Directory of mono PCM16/float32 WAV files")->required();
    featurize->add_option("--labels", labels, "CSV with header filename,speaker,emotion")->required();
    featurize->add_option("--out-dir", out_dir, "Output directory")->required();
    featurize->add_option("--pitch-dir", pitch_dir, "Optional <stem>.f0.csv files (header f0_hz) replacing pitch");

    auto* synth = app.add_subcommand("synthdata", "Generate the synthetic corpus (EMOF + metadata.csv)");
    add_common(synth, common);
    synth->add_option("--out-dir", out_dir, "Output directory")->required();

    auto* train = app.add_subcommand("train", "Train the rank model on a directory of EMOF files");
    add_common(train, common);
    train->add_option("--features", features, "Directory of EMOF files")->required();
    train->add_option("--out", model, "Output model (EMOM)")->required();
    train->add_option("--loss-csv", loss_csv, "Loss trace CSV (default <out>.loss.csv)");
    train->add_option("--checkpoint", checkpoint, "Checkpoint path, written every train.checkpoint_every and at the end");
    train->add_option("--resume", resume, "Continue from a checkpoint up to train.iterations")->check(CLI::ExistingFile);

    auto* score = app.add_subcommand("score", "Rank score per non-neutral utterance -> CSV");
    add_common(score, common);
    score->add_option("--model", model, "Model file")->required()->check(CLI::ExistingFile);
    score->add_option("--features", features, "Directory of EMOF files")->required();
    score->add_option("--out", out, "Output CSV")->required();

    auto* cbk = app.add_subcommand("codebook", "Bucket scores per emotion and export level vectors as JSON");
    add_common(cbk, common);
    cbk->add_option("--model", model, "Model file")->required()->check(CLI::ExistingFile);
    cbk->add_option("--features", features, "Directory of EMOF files")->required();
    cbk->add_option("--out", out, "Output codebook JSON")->required();

    auto* cond = app.add_subcommand("condition", "Phoneme emotion/level labels -> conditioning matrix (EMOF)");
    add_common(cond, common);
    cond->add_option("--codebook", codebook, "Codebook JSON")->required()->check(CLI::ExistingFile);
    cond->add_option("--labels", labels, "Labels file: '#labels v1' then emotion<TAB>level per phoneme")
        ->required()
        ->check(CLI::ExistingFile);
    cond->add_option("--alignment", alignment, "Optional '#phonemes v1' alignment; must match the label count")
        ->check(CLI::ExistingFile);
    cond->add_option("--out", out, "Output EMOF (one row per phoneme)")->required();

    auto* mcd_cmd = app.add_subcommand("mcd", "Mel-cepstral distortion between two equal-length EMOF files");
    mcd_cmd->add_option("a", a, "First EMOF file")->required()->check(CLI::ExistingFile);
    mcd_cmd->add_option("b", b, "Second EMOF file")->required()->check(CLI::ExistingFile);
    mcd_cmd->add_flag("--cepstral", cepstral, "Inputs already hold cepstra (c0 first); skip the DCT");
    mcd_cmd->add_option("--out", out, "Write the JSON report here instead of stdout");

    auto* gc = app.add_subcommand("gradcheck", "Finite-difference check of every parameter gradient of L_total");
    add_common(gc, common);
    gc->add_option("--frames", frames, "Frames in the random pair")->capture_default_str();
    gc->add_option("--tolerance", tolerance, "Maximum relative error")->capture_default_str();
    gc->add_option("--out", out, "Write the JSON report here");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : static_cast<int>(ErrorKind::kInvalidArgument);
    }

    try {
        if (*featurize) return cmd_featurize(common, wav_dir, labels, out_dir, pitch_dir);
        if (*synth) return cmd_synthdata(common, out_dir);
        if (*train) return cmd_train(common, features, model, loss_csv, checkpoint, resume);
        if (*score) return cmd_score(common, model, features, out);
        if (*cbk) return cmd_codebook(common, model, features, out);
        if (*cond) return cmd_condition(common, codebook, labels, alignment, out);
        if (*mcd_cmd) return cmd_mcd(a, b, cepstral, out);
        if (*gc) return cmd_gradcheck(common, frames, tolerance, out);
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return e.exit_code();
    } catch (const fs::filesystem_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return static_cast<int>(ErrorKind::kIo);
    }
    return 0;
}
