#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "emorank/features.h"

namespace emorank {

enum class PairPolicy { kSameSpeaker, kAny };

PairPolicy parse_pair_policy(const std::string& s);
std::string to_string(PairPolicy p);

/// Labeled utterances indexed by class and speaker. Class 0..N-1 follow the
/// order of `classes`; `neutral_class` names the neutral one.
class Corpus {
public:
    Corpus() = default;
    /// Class list is taken as given; every utterance label must be in it.
    Corpus(std::vector<FeatureMatrix> utterances, std::vector<std::string> classes, std::size_t neutral_class);

    /// Derives the class list from the labels: the label spelled "neutral"
    /// (any case) first, then the rest sorted.
    static Corpus from_utterances(std::vector<FeatureMatrix> utterances);
    /// Reads every *.emof file under `dir`, sorted by file name.
    static Corpus load_dir(const std::filesystem::path& dir);

    const std::vector<FeatureMatrix>& utterances() const noexcept { return utterances_; }
    const std::vector<std::string>& classes() const noexcept { return classes_; }
    std::size_t neutral_class() const noexcept { return neutral_class_; }
    std::size_t class_of(std::size_t utt) const { return labels_[utt]; }
    std::size_t size() const noexcept { return utterances_.size(); }
    std::size_t channels() const;

    const std::vector<std::size_t>& non_neutral() const noexcept { return non_neutral_; }
    const std::vector<std::size_t>& neutral() const noexcept { return neutral_; }
    /// Neutral utterance indices for a speaker (empty if none).
    const std::vector<std::size_t>& neutral_of(const std::string& speaker) const;

    /// >= 1 neutral and >= 1 non-neutral utterance, uniform channel count.
    void validate() const;

    /// SHA-256 over the encoded feature files in corpus order.
    std::string content_hash() const;

private:
    void index();

    std::vector<FeatureMatrix> utterances_;
    std::vector<std::string> classes_;
    std::size_t neutral_class_ = 0;
    std::vector<std::size_t> labels_;
    std::vector<std::size_t> non_neutral_;
    std::vector<std::size_t> neutral_;
    std::map<std::string, std::vector<std::size_t>> neutral_by_speaker_;
};

/// Uniform non-neutral utterance, then a neutral partner: same speaker when
/// the policy asks for it and that speaker has neutral data, otherwise any.
/// Returns utterance indices (emotional, neutral).
std::pair<std::size_t, std::size_t> sample_pair(const Corpus& corpus, PairPolicy policy, std::mt19937_64& rng);

}  // namespace emorank
