#include "emorank/codebook.h"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <optional>
#include <sstream>

#include "emorank/binary_io.h"
#include "emorank/error.h"

namespace emorank {

using nlohmann::json;

bool is_neutral_name(const std::string& emotion) {
    std::string l = emotion;
    std::transform(l.begin(), l.end(), l.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return l == "neutral";
}

std::vector<ScoreRecord> score_corpus(const ModelParams& params, const ExtractorConfig& cfg, const Corpus& corpus,
                                      bool keep_intensity) {
    require(corpus.channels() == cfg.input_dim, ErrorKind::kShape,
            "corpus has " + std::to_string(corpus.channels()) + " channels, model expects " +
                std::to_string(cfg.input_dim));
    const auto& ids = corpus.non_neutral();
    std::vector<std::optional<ScoreRecord>> out(ids.size());
    std::vector<std::string> errors(ids.size());
#pragma omp parallel for schedule(dynamic, 1)
    for (std::ptrdiff_t k = 0; k < static_cast<std::ptrdiff_t>(ids.size()); ++k) {
        const auto i = static_cast<std::size_t>(k);
        try {
            const auto& u = corpus.utterances()[ids[i]];
            const std::size_t cls = cfg.class_index(u.emotion_label);
            ScoredUtterance s = run_extractor(params, cfg, u.to_tensor(), cls);
            ScoreRecord r;
            r.utterance_id = u.source_id;
            r.speaker = u.speaker_id;
            r.emotion = u.emotion_label;
            r.emotion_class = cls;
            r.score = s.score;
            r.pooled = std::move(s.pooled);
            r.logits = std::move(s.logits);
            if (keep_intensity) {
                r.intensity = std::move(s.intensity);
            }
            out[i] = std::move(r);
        } catch (const std::exception& e) {
            errors[i] = e.what();
        }
    }
    std::vector<ScoreRecord> records;
    records.reserve(ids.size());
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (!errors[i].empty()) {
            fail(ErrorKind::kShape, corpus.utterances()[ids[i]].source_id + ": " + errors[i]);
        }
        records.push_back(std::move(*out[i]));
    }
    return records;
}

BinPolicy parse_bin_policy(const std::string& s) {
    if (s == "quantile") return BinPolicy::kQuantile;
    if (s == "fixed_width") return BinPolicy::kFixedWidth;
    fail(ErrorKind::kInvalidArgument, "bin_policy must be 'quantile' or 'fixed_width', got '" + s + "'");
}

std::string to_string(BinPolicy p) { return p == BinPolicy::kQuantile ? "quantile" : "fixed_width"; }

LevelAveraging parse_level_averaging(const std::string& s) {
    if (s == "pooled") return LevelAveraging::kPooled;
    if (s == "frames") return LevelAveraging::kFrames;
    fail(ErrorKind::kInvalidArgument, "level_averaging must be 'pooled' or 'frames', got '" + s + "'");
}

std::string to_string(LevelAveraging a) { return a == LevelAveraging::kPooled ? "pooled" : "frames"; }

std::vector<std::string> level_names(std::size_t n_bins) {
    if (n_bins == 3) {
        return {"Min", "Median", "Max"};
    }
    std::vector<std::string> out;
    for (std::size_t i = 0; i < n_bins; ++i) {
        out.push_back("Level" + std::to_string(i));
    }
    return out;
}

const Tensor& IntensityCodebook::lookup(const std::string& emotion, const std::string& level) const {
    auto it = emotions.find(emotion);
    require(it != emotions.end(), ErrorKind::kInvalidArgument, "codebook has no emotion '" + emotion + "'");
    for (std::size_t l = 0; l < levels.size(); ++l) {
        if (levels[l] == level) {
            return it->second.vectors[l];
        }
    }
    fail(ErrorKind::kInvalidArgument, "codebook has no level '" + level + "'");
}

namespace {

// Bin index per member, given member indices sorted by (score, record order).
std::vector<std::vector<std::size_t>> quantile_bins(const std::vector<std::size_t>& sorted, std::size_t n_bins) {
    std::vector<std::vector<std::size_t>> bins(n_bins);
    const std::size_t n = sorted.size();
    for (std::size_t r = 0; r < n; ++r) {
        bins[r * n_bins / n].push_back(sorted[r]);
    }
    return bins;
}

}  // namespace

IntensityCodebook build_codebook(const std::vector<ScoreRecord>& records, std::size_t n_bins, BinPolicy policy,
                                 LevelAveraging averaging) {
    require(n_bins >= 1, ErrorKind::kInvalidArgument, "n_bins must be >= 1");
    require(!records.empty(), ErrorKind::kEmptyClass, "build_codebook: no score records");
    IntensityCodebook cb;
    cb.dim = records.front().pooled.size();
    cb.levels = level_names(n_bins);
    cb.policy = policy;
    cb.averaging = averaging;

    std::map<std::string, std::vector<std::size_t>> by_emotion;
    for (std::size_t i = 0; i < records.size(); ++i) {
        require(!is_neutral_name(records[i].emotion), ErrorKind::kInvalidArgument,
                "build_codebook: neutral record '" + records[i].utterance_id + "'");
        require(records[i].pooled.size() == cb.dim, ErrorKind::kShape, "build_codebook: pooled dimension mismatch");
        if (averaging == LevelAveraging::kFrames) {
            require(records[i].intensity.rank() == 2 && records[i].intensity.cols() == cb.dim, ErrorKind::kShape,
                    "build_codebook: frame averaging needs intensity sequences");
        }
        by_emotion[records[i].emotion].push_back(i);
    }

    for (auto& [emotion, members] : by_emotion) {
        require(members.size() >= n_bins, ErrorKind::kEmptyClass,
                "emotion '" + emotion + "' has " + std::to_string(members.size()) + " records, need >= " +
                    std::to_string(n_bins));
        std::vector<std::size_t> sorted = members;
        std::stable_sort(sorted.begin(), sorted.end(),
                         [&](std::size_t a, std::size_t b) { return records[a].score < records[b].score; });
        const double lo = records[sorted.front()].score;
        const double hi = records[sorted.back()].score;

        EmotionLevels el;
        if (policy == BinPolicy::kQuantile) {
            el.members = quantile_bins(sorted, n_bins);
            for (std::size_t b = 0; b + 1 < n_bins; ++b) {
                el.boundaries.push_back(0.5 * (records[el.members[b].back()].score +
                                               records[el.members[b + 1].front()].score));
            }
        } else {
            el.members.assign(n_bins, {});
            const double span = hi - lo;
            for (std::size_t idx : sorted) {
                const double s = span > 0.0 ? (records[idx].score - lo) / span : 0.0;
                // (0, 1/n] -> bin 0, ..., with the minimum itself in bin 0
                auto b = static_cast<std::ptrdiff_t>(std::ceil(s * static_cast<double>(n_bins))) - 1;
                b = std::clamp<std::ptrdiff_t>(b, 0, static_cast<std::ptrdiff_t>(n_bins) - 1);
                el.members[static_cast<std::size_t>(b)].push_back(idx);
            }
            for (std::size_t b = 1; b < n_bins; ++b) {
                el.boundaries.push_back(lo + span * static_cast<double>(b) / static_cast<double>(n_bins));
            }
            for (std::size_t b = 0; b < n_bins; ++b) {
                require(!el.members[b].empty(), ErrorKind::kEmptyClass,
                        "emotion '" + emotion + "': fixed-width bin " + cb.levels[b] + " is empty");
            }
        }

        for (const auto& bin : el.members) {
            Tensor v({cb.dim}, 0.0);
            double score_sum = 0.0;
            std::size_t count = 0;
            for (std::size_t idx : bin) {
                score_sum += records[idx].score;
                if (averaging == LevelAveraging::kPooled) {
                    for (std::size_t d = 0; d < cb.dim; ++d) {
                        v.data[d] += records[idx].pooled.data[d];
                    }
                    count += 1;
                } else {
                    const Tensor& seq = records[idx].intensity;
                    for (std::size_t t = 0; t < seq.rows(); ++t) {
                        for (std::size_t d = 0; d < cb.dim; ++d) {
                            v.data[d] += seq.at(t, d);
                        }
                    }
                    count += seq.rows();
                }
            }
            for (auto& x : v.data) {
                x /= static_cast<double>(count);
            }
            el.vectors.push_back(std::move(v));
            el.mean_scores.push_back(score_sum / static_cast<double>(bin.size()));
        }
        if (lo == hi) {
            cb.warnings.push_back("emotion '" + emotion + "': all scores identical; levels are not ordered");
        }
        cb.emotions.emplace(emotion, std::move(el));
    }
    cb.provenance = json{{"bin_policy", to_string(policy)}, {"level_averaging", to_string(averaging)}};
    return cb;
}

json codebook_to_json(const IntensityCodebook& cb) {
    json j = json::object();
    for (const auto& [emotion, el] : cb.emotions) {
        json levels = json::object();
        json counts = json::object();
        json means = json::object();
        for (std::size_t l = 0; l < cb.levels.size(); ++l) {
            levels[cb.levels[l]] = el.vectors[l].data;
            counts[cb.levels[l]] = el.members[l].size();
            means[cb.levels[l]] = el.mean_scores[l];
        }
        j[emotion] = json{{"boundaries", el.boundaries}, {"levels", levels}, {"counts", counts}, {"mean_scores", means}};
    }
    j["neutral"] = std::vector<double>(cb.dim, 0.0);
    json prov = cb.provenance;
    prov["bin_policy"] = to_string(cb.policy);
    prov["level_averaging"] = to_string(cb.averaging);
    prov["levels"] = cb.levels;
    j["provenance"] = prov;
    return j;
}

IntensityCodebook codebook_from_json(const json& j) {
    try {
        require(j.is_object() && j.contains("neutral") && j.contains("provenance"), ErrorKind::kFormat,
                "codebook JSON needs 'neutral' and 'provenance'");
        IntensityCodebook cb;
        const auto neutral = j.at("neutral").get<std::vector<double>>();
        cb.dim = neutral.size();
        require(std::all_of(neutral.begin(), neutral.end(), [](double v) { return v == 0.0; }), ErrorKind::kFormat,
                "codebook neutral vector must be zero");
        cb.provenance = j.at("provenance");
        cb.levels = cb.provenance.at("levels").get<std::vector<std::string>>();
        cb.policy = parse_bin_policy(cb.provenance.at("bin_policy").get<std::string>());
        cb.averaging = parse_level_averaging(cb.provenance.at("level_averaging").get<std::string>());
        for (auto it = j.begin(); it != j.end(); ++it) {
            if (it.key() == "neutral" || it.key() == "provenance") {
                continue;
            }
            EmotionLevels el;
            el.boundaries = it->at("boundaries").get<std::vector<double>>();
            for (const auto& level : cb.levels) {
                auto v = it->at("levels").at(level).get<std::vector<double>>();
                require(v.size() == cb.dim, ErrorKind::kShape, "codebook vector '" + it.key() + "/" + level +
                                                                   "' has wrong dimension");
                el.vectors.push_back(Tensor::vector(std::move(v)));
                if (it->contains("mean_scores")) {
                    el.mean_scores.push_back(it->at("mean_scores").at(level).get<double>());
                }
                el.members.emplace_back();
            }
            cb.emotions.emplace(it.key(), std::move(el));
        }
        return cb;
    } catch (const json::exception& e) {
        fail(ErrorKind::kFormat, std::string("malformed codebook JSON: ") + e.what());
    }
}

void save_codebook(const IntensityCodebook& cb, const std::filesystem::path& path) {
    const std::string s = codebook_to_json(cb).dump(2) + "\n";
    write_file_bytes(path, std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(s.data()), s.size()));
}

IntensityCodebook load_codebook(const std::filesystem::path& path) {
    const auto bytes = read_file_bytes(path);
    json j;
    try {
        j = json::parse(bytes.begin(), bytes.end());
    } catch (const json::exception& e) {
        fail(ErrorKind::kFormat, path.string() + ": " + e.what());
    }
    return codebook_from_json(j);
}

void PhonemeAlignment::validate(double duration_s) const {
    constexpr double kTol = 1e-9;
    double prev_end = 0.0;
    for (std::size_t i = 0; i < phonemes.size(); ++i) {
        const auto& p = phonemes[i];
        const std::string where = "phoneme " + std::to_string(i) + " ('" + p.symbol + "')";
        require(std::isfinite(p.start_s) && std::isfinite(p.end_s), ErrorKind::kFormat, where + ": non-finite time");
        require(p.start_s >= 0.0, ErrorKind::kFormat, where + ": negative start time");
        require(p.end_s >= p.start_s, ErrorKind::kFormat, where + ": end before start");
        require(p.start_s + kTol >= prev_end, ErrorKind::kFormat, where + ": overlaps the previous phoneme");
        prev_end = p.end_s;
    }
    if (duration_s >= 0.0 && !phonemes.empty()) {
        require(phonemes.back().end_s <= duration_s + kTol, ErrorKind::kFormat,
                "alignment ends after the utterance (" + std::to_string(phonemes.back().end_s) + " s > " +
                    std::to_string(duration_s) + " s)");
    }
}

namespace {

std::vector<std::string> split_tabs(const std::string& line) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const auto pos = line.find('\t', start);
        out.push_back(line.substr(start, pos == std::string::npos ? std::string::npos : pos - start));
        if (pos == std::string::npos) break;
        start = pos + 1;
    }
    return out;
}

std::vector<std::string> body_lines(const std::string& text, const std::string& header, const std::string& what) {
    std::istringstream in(text);
    std::string line;
    std::vector<std::string> out;
    bool first = true;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (first) {
            require(line == header, ErrorKind::kFormat, what + ": expected header '" + header + "'");
            first = false;
            continue;
        }
        if (!line.empty()) out.push_back(line);
    }
    require(!first, ErrorKind::kFormat, what + ": empty file");
    return out;
}

double parse_time(const std::string& s, const std::string& what) {
    std::size_t used = 0;
    double v = 0.0;
    try {
        v = std::stod(s, &used);
    } catch (const std::exception&) {
        fail(ErrorKind::kFormat, what + ": bad time '" + s + "'");
    }
    require(used == s.size(), ErrorKind::kFormat, what + ": bad time '" + s + "'");
    return v;
}

std::string slurp(const std::filesystem::path& path) {
    const auto b = read_file_bytes(path);
    return std::string(b.begin(), b.end());
}

}  // namespace

PhonemeAlignment parse_alignment(const std::string& text, const std::string& what) {
    PhonemeAlignment a;
    for (const auto& line : body_lines(text, "#phonemes v1", what)) {
        const auto f = split_tabs(line);
        require(f.size() == 3, ErrorKind::kFormat, what + ": expected 3 tab-separated fields in '" + line + "'");
        a.phonemes.push_back({f[0], parse_time(f[1], what), parse_time(f[2], what)});
    }
    a.validate();
    return a;
}

PhonemeAlignment read_alignment(const std::filesystem::path& path) { return parse_alignment(slurp(path), path.string()); }

std::string format_alignment(const PhonemeAlignment& a) {
    std::ostringstream os;
    os << "#phonemes v1\n" << std::setprecision(17);
    for (const auto& p : a.phonemes) {
        os << p.symbol << '\t' << p.start_s << '\t' << p.end_s << '\n';
    }
    return os.str();
}

Tensor phoneme_average(const Tensor& intensity, const PhonemeAlignment& align, double frame_rate_hz) {
    require(intensity.rank() == 2 && intensity.rows() >= 1, ErrorKind::kShape, "phoneme_average: need [T>=1, D]");
    require(frame_rate_hz > 0.0, ErrorKind::kInvalidArgument, "phoneme_average: frame rate must be > 0");
    const std::size_t t_len = intensity.rows(), d = intensity.cols();
    align.validate(static_cast<double>(t_len) / frame_rate_hz);
    Tensor out = Tensor::matrix(align.phonemes.size(), d);
    for (std::size_t p = 0; p < align.phonemes.size(); ++p) {
        const auto& ph = align.phonemes[p];
        std::size_t count = 0;
        for (std::size_t t = 0; t < t_len; ++t) {
            const double center = (static_cast<double>(t) + 0.5) / frame_rate_hz;
            if (center >= ph.start_s && center < ph.end_s) {
                for (std::size_t c = 0; c < d; ++c) {
                    out.at(p, c) += intensity.at(t, c);
                }
                count += 1;
            }
        }
        if (count == 0) {
            const double mid = 0.5 * (ph.start_s + ph.end_s) * frame_rate_hz - 0.5;
            const auto nearest = static_cast<std::size_t>(
                std::clamp<double>(std::floor(mid + 0.5), 0.0, static_cast<double>(t_len - 1)));
            for (std::size_t c = 0; c < d; ++c) {
                out.at(p, c) = intensity.at(nearest, c);
            }
            continue;
        }
        for (std::size_t c = 0; c < d; ++c) {
            out.at(p, c) /= static_cast<double>(count);
        }
    }
    return out;
}

Tensor condition(const IntensityCodebook& cb, const std::vector<PhonemeLabel>& labels) {
    Tensor out = Tensor::matrix(labels.size(), cb.dim);
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (is_neutral_name(labels[i].emotion)) {
            continue;
        }
        const Tensor& v = cb.lookup(labels[i].emotion, labels[i].level);
        std::copy(v.data.begin(), v.data.end(), out.data.begin() + static_cast<std::ptrdiff_t>(i * cb.dim));
    }
    return out;
}

std::vector<PhonemeLabel> parse_phoneme_labels(const std::string& text, const std::string& what) {
    std::vector<PhonemeLabel> out;
    for (const auto& line : body_lines(text, "#labels v1", what)) {
        const auto f = split_tabs(line);
        require(f.size() == 2 || (f.size() == 1 && is_neutral_name(f[0])), ErrorKind::kFormat,
                what + ": expected 'emotion<TAB>level' in '" + line + "'");
        out.push_back({f[0], f.size() == 2 ? f[1] : "-"});
    }
    return out;
}

std::vector<PhonemeLabel> read_phoneme_labels(const std::filesystem::path& path) {
    return parse_phoneme_labels(slurp(path), path.string());
}

}  // namespace emorank
