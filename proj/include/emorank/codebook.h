#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"

#include "emorank/corpus.h"
#include "emorank/extractor.h"
#include "emorank/tensor.h"

namespace emorank {

struct ScoreRecord {
    std::string utterance_id;
    std::string speaker;
    std::string emotion;
    std::size_t emotion_class = 0;
    double score = 0.0;
    Tensor pooled;     // [hidden]
    Tensor intensity;  // [T, hidden]; empty unless requested
    Tensor logits;     // [classes]
};

/// Scores every non-neutral utterance unmixed, in eval mode, in corpus order.
/// Utterances are processed in parallel; output order does not depend on it.
std::vector<ScoreRecord> score_corpus(const ModelParams& params, const ExtractorConfig& cfg, const Corpus& corpus,
                                      bool keep_intensity = false);

enum class BinPolicy { kQuantile, kFixedWidth };
enum class LevelAveraging { kPooled, kFrames };

BinPolicy parse_bin_policy(const std::string& s);
std::string to_string(BinPolicy p);
LevelAveraging parse_level_averaging(const std::string& s);
std::string to_string(LevelAveraging a);

/// Level names for an n-bin codebook: Min/Median/Max when n == 3.
std::vector<std::string> level_names(std::size_t n_bins);

struct EmotionLevels {
    std::vector<double> boundaries;           // n_bins - 1 cut points in score space
    std::vector<Tensor> vectors;              // per level, [dim]
    std::vector<double> mean_scores;          // per level
    std::vector<std::vector<std::size_t>> members;  // record indices per level
};

struct IntensityCodebook {
    std::size_t dim = 0;
    std::vector<std::string> levels;
    std::map<std::string, EmotionLevels> emotions;
    BinPolicy policy = BinPolicy::kQuantile;
    LevelAveraging averaging = LevelAveraging::kPooled;
    nlohmann::json provenance = nlohmann::json::object();
    std::vector<std::string> warnings;

    /// Zero vector for neutral (any case spelling), otherwise the stored one.
    const Tensor& lookup(const std::string& emotion, const std::string& level) const;
    Tensor neutral_vector() const { return Tensor({dim}, 0.0); }
};

/// Per emotion: split scores into n_bins levels and average each level's
/// representations. Quantile bins are equal-frequency by score rank (ties
/// broken by record order); fixed-width bins cut the min-max normalized
/// score range into equal intervals.
IntensityCodebook build_codebook(const std::vector<ScoreRecord>& records, std::size_t n_bins = 3,
                                 BinPolicy policy = BinPolicy::kQuantile,
                                 LevelAveraging averaging = LevelAveraging::kPooled);

nlohmann::json codebook_to_json(const IntensityCodebook& cb);
IntensityCodebook codebook_from_json(const nlohmann::json& j);
void save_codebook(const IntensityCodebook& cb, const std::filesystem::path& path);
IntensityCodebook load_codebook(const std::filesystem::path& path);

struct PhonemeInterval {
    std::string symbol;
    double start_s = 0.0;
    double end_s = 0.0;
};

struct PhonemeAlignment {
    std::vector<PhonemeInterval> phonemes;

    /// Non-negative, ordered, non-overlapping; optionally bounded by duration.
    void validate(double duration_s = -1.0) const;
};

/// "#phonemes v1" header, then `symbol<TAB>start_s<TAB>end_s` per line.
PhonemeAlignment read_alignment(const std::filesystem::path& path);
PhonemeAlignment parse_alignment(const std::string& text, const std::string& what = "alignment");
std::string format_alignment(const PhonemeAlignment& a);

/// Mean of the frames whose centers (t + 0.5) / frame_rate fall in
/// [start, end); a phoneme with no such frame takes the frame nearest to its
/// midpoint. Output [phonemes, hidden].
Tensor phoneme_average(const Tensor& intensity, const PhonemeAlignment& align, double frame_rate_hz);

struct PhonemeLabel {
    std::string emotion;
    std::string level;  // ignored for neutral
};

/// One conditioning row per label: zeros for neutral, else the codebook vector.
Tensor condition(const IntensityCodebook& cb, const std::vector<PhonemeLabel>& labels);

/// "#labels v1" header, then `emotion<TAB>level` per phoneme (level "-" for neutral).
std::vector<PhonemeLabel> read_phoneme_labels(const std::filesystem::path& path);
std::vector<PhonemeLabel> parse_phoneme_labels(const std::string& text, const std::string& what = "labels");

bool is_neutral_name(const std::string& emotion);

}  // namespace emorank
