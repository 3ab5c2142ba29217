#include "emorank/synthcorpus.h"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <numeric>
#include <sstream>

#include "emorank/binary_io.h"
#include "emorank/error.h"

namespace emorank {

using nlohmann::json;

namespace {

// Keeps the pitch slot positive so files pass acoustic validation.
constexpr double kPitchBase = 5.0;

}  // namespace

void SynthSpec::validate() const {
    require(n_speakers >= 1, ErrorKind::kInvalidArgument, "synth.n_speakers must be >= 1");
    require(n_emotions >= 1, ErrorKind::kInvalidArgument, "synth.n_emotions must be >= 1");
    require(utterances_per_cell >= 1, ErrorKind::kInvalidArgument, "synth.utterances_per_cell must be >= 1");
    require(frame_length_range[0] >= 1 && frame_length_range[0] <= frame_length_range[1], ErrorKind::kInvalidArgument,
            "synth.frame_length_range must be [lo, hi] with 1 <= lo <= hi");
    require(channels >= 3, ErrorKind::kInvalidArgument, "synth.channels must be >= 3");
    require(signature_channels >= 1 && signature_channels * n_emotions <= channels, ErrorKind::kInvalidArgument,
            "synth.signature_channels * n_emotions must fit in channels");
    require(intensity_range[0] >= 0.0 && intensity_range[0] <= intensity_range[1] && intensity_range[1] <= 1.0,
            ErrorKind::kInvalidArgument, "synth.intensity_range must satisfy 0 <= lo <= hi <= 1");
    require(noise_sigma >= 0.0 && std::isfinite(noise_sigma), ErrorKind::kInvalidArgument,
            "synth.noise_sigma must be finite and >= 0");
    require(modulation >= 0.0 && std::isfinite(modulation), ErrorKind::kInvalidArgument,
            "synth.modulation must be finite and >= 0");
    require(frame_rate_hz > 0.0, ErrorKind::kInvalidArgument, "synth.frame_rate_hz must be > 0");
}

json SynthSpec::to_json() const {
    return json{{"n_speakers", n_speakers},
                {"n_emotions", n_emotions},
                {"utterances_per_cell", utterances_per_cell},
                {"frame_length_range", frame_length_range},
                {"channels", channels},
                {"signature_channels", signature_channels},
                {"base_pattern_seed", base_pattern_seed},
                {"intensity_range", intensity_range},
                {"noise_sigma", noise_sigma},
                {"modulation", modulation},
                {"frame_rate_hz", frame_rate_hz},
                {"id_prefix", id_prefix}};
}

SynthSpec SynthSpec::from_json(const json& j) {
    require(j.is_object(), ErrorKind::kInvalidArgument, "synth config must be a JSON object");
    SynthSpec s;
    for (auto it = j.begin(); it != j.end(); ++it) {
        const std::string& k = it.key();
        try {
            if (k == "n_speakers") s.n_speakers = it->get<std::size_t>();
            else if (k == "n_emotions") s.n_emotions = it->get<std::size_t>();
            else if (k == "utterances_per_cell") s.utterances_per_cell = it->get<std::size_t>();
            else if (k == "frame_length_range") s.frame_length_range = it->get<std::array<std::size_t, 2>>();
            else if (k == "channels") s.channels = it->get<std::size_t>();
            else if (k == "signature_channels") s.signature_channels = it->get<std::size_t>();
            else if (k == "base_pattern_seed") s.base_pattern_seed = it->get<std::uint64_t>();
            else if (k == "intensity_range") s.intensity_range = it->get<std::array<double, 2>>();
            else if (k == "noise_sigma") s.noise_sigma = it->get<double>();
            else if (k == "modulation") s.modulation = it->get<double>();
            else if (k == "frame_rate_hz") s.frame_rate_hz = it->get<double>();
            else if (k == "id_prefix") s.id_prefix = it->get<std::string>();
            else fail(ErrorKind::kInvalidArgument, "unknown synth config key '" + k + "'");
        } catch (const json::exception& e) {
            fail(ErrorKind::kInvalidArgument, "synth config key '" + k + "': " + e.what());
        }
    }
    s.validate();
    return s;
}

std::vector<std::string> synth_emotion_names(std::size_t n_emotions) {
    static const std::vector<std::string> known = {"Amused", "Angry", "Disgusted", "Sleepy"};
    std::vector<std::string> out;
    for (std::size_t i = 0; i < n_emotions; ++i) {
        out.push_back(i < known.size() ? known[i] : "Emotion" + std::to_string(i));
    }
    return out;
}

SynthPatterns synth_patterns(const SynthSpec& spec) {
    spec.validate();
    std::mt19937_64 rng(spec.base_pattern_seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const std::size_t c = spec.channels;
    const std::size_t pitch = c - 2;

    SynthPatterns p;
    for (std::size_t s = 0; s < spec.n_speakers; ++s) {
        Tensor mean({c}, 0.0), phase({c}, 0.0);
        for (std::size_t k = 0; k < c; ++k) {
            mean.data[k] = normal(rng);
            phase.data[k] = 2.0 * std::numbers::pi * unit(rng);
        }
        mean.data[pitch] = kPitchBase + 0.2 * normal(rng);
        p.speaker_mean.push_back(std::move(mean));
        p.speaker_phase.push_back(std::move(phase));
    }
    p.channel_period = Tensor({c}, 0.0);
    for (auto& v : p.channel_period.data) {
        v = 8.0 + 24.0 * unit(rng);
    }

    // Disjoint supports make the signatures mutually orthogonal.
    std::vector<std::size_t> perm(c);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    for (std::size_t e = 0; e < spec.n_emotions; ++e) {
        Tensor sig({c}, 0.0);
        for (std::size_t k = 0; k < spec.signature_channels; ++k) {
            const double mag = 0.5 + 0.5 * unit(rng);
            sig.data[perm[e * spec.signature_channels + k]] = unit(rng) < 0.5 ? -mag : mag;
        }
        p.signature.push_back(std::move(sig));
    }
    return p;
}

SynthCorpus generate(const SynthSpec& spec, std::mt19937_64& rng) {
    SynthCorpus sc;
    sc.patterns = synth_patterns(spec);
    const auto emotions = synth_emotion_names(spec.n_emotions);

    struct Job {
        std::size_t speaker;
        std::ptrdiff_t emotion;  // -1 for neutral
        std::size_t index;
        std::size_t frames;
        double t;
        std::uint64_t seed;
    };
    std::vector<Job> jobs;
    std::uniform_int_distribution<std::size_t> len(spec.frame_length_range[0], spec.frame_length_range[1]);
    std::uniform_real_distribution<double> inten(spec.intensity_range[0], spec.intensity_range[1]);
    for (std::size_t s = 0; s < spec.n_speakers; ++s) {
        for (std::ptrdiff_t e = -1; e < static_cast<std::ptrdiff_t>(spec.n_emotions); ++e) {
            for (std::size_t i = 0; i < spec.utterances_per_cell; ++i) {
                Job j{s, e, i, len(rng), 0.0, 0};
                if (e >= 0) {
                    j.t = inten(rng);
                }
                j.seed = rng();
                jobs.push_back(j);
            }
        }
    }

    std::vector<FeatureMatrix> utts(jobs.size());
    sc.meta.resize(jobs.size());
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t k = 0; k < static_cast<std::ptrdiff_t>(jobs.size()); ++k) {
        const Job& j = jobs[static_cast<std::size_t>(k)];
        std::mt19937_64 local(j.seed);
        std::normal_distribution<double> noise(0.0, 1.0);
        const std::string speaker = "spk" + std::to_string(j.speaker);
        const std::string emotion = j.emotion < 0 ? "Neutral" : emotions[static_cast<std::size_t>(j.emotion)];
        std::ostringstream id;
        id << spec.id_prefix << speaker << '_' << emotion << '_' << std::setw(3) << std::setfill('0') << j.index;

        FeatureMatrix fm;
        fm.frames = j.frames;
        fm.channels = spec.channels;
        fm.data.resize(j.frames * spec.channels);
        fm.frame_rate_hz = spec.frame_rate_hz;
        fm.source_id = id.str();
        fm.emotion_label = emotion;
        fm.speaker_id = speaker;
        const Tensor& mean = sc.patterns.speaker_mean[j.speaker];
        const Tensor& phase = sc.patterns.speaker_phase[j.speaker];
        for (std::size_t t = 0; t < j.frames; ++t) {
            for (std::size_t c = 0; c < spec.channels; ++c) {
                double v = mean.data[c] +
                           spec.modulation * std::sin(2.0 * std::numbers::pi * static_cast<double>(t) /
                                                      sc.patterns.channel_period.data[c] +
                                                  phase.data[c]);
                if (j.emotion >= 0) {
                    v += j.t * sc.patterns.signature[static_cast<std::size_t>(j.emotion)].data[c];
                }
                v += spec.noise_sigma * noise(local);
                fm.at(t, c) = static_cast<float>(v);
            }
        }
        utts[static_cast<std::size_t>(k)] = std::move(fm);
        sc.meta[static_cast<std::size_t>(k)] = SynthMeta{id.str(), speaker, emotion, j.t};
    }

    std::vector<std::string> classes = {"Neutral"};
    classes.insert(classes.end(), emotions.begin(), emotions.end());
    sc.corpus = Corpus(std::move(utts), std::move(classes), 0);
    return sc;
}

void write_synth_metadata(const std::vector<SynthMeta>& meta, const std::filesystem::path& path) {
    std::ostringstream os;
    os << "utterance_id,speaker,emotion,true_intensity\n" << std::setprecision(17);
    for (const auto& m : meta) {
        os << m.utterance_id << ',' << m.speaker << ',' << m.emotion << ',' << m.true_intensity << '\n';
    }
    const std::string s = os.str();
    write_file_bytes(path, std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(s.data()), s.size()));
}

void write_synth_corpus(const SynthCorpus& sc, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    for (const auto& u : sc.corpus.utterances()) {
        write_features(u, dir / (u.source_id + ".emof"));
    }
    write_synth_metadata(sc.meta, dir / "metadata.csv");
}

}  // namespace emorank
