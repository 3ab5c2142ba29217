#include "emorank/corpus.h"

#include <algorithm>
#include <cctype>

#include "emorank/binary_io.h"
#include "emorank/error.h"

namespace emorank {

PairPolicy parse_pair_policy(const std::string& s) {
    if (s == "same_speaker") return PairPolicy::kSameSpeaker;
    if (s == "any") return PairPolicy::kAny;
    fail(ErrorKind::kInvalidArgument, "pair_policy must be 'same_speaker' or 'any', got '" + s + "'");
}

std::string to_string(PairPolicy p) { return p == PairPolicy::kSameSpeaker ? "same_speaker" : "any"; }

namespace {

std::string lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return s;
}

}  // namespace

Corpus::Corpus(std::vector<FeatureMatrix> utterances, std::vector<std::string> classes, std::size_t neutral_class)
    : utterances_(std::move(utterances)), classes_(std::move(classes)), neutral_class_(neutral_class) {
    require(neutral_class_ < classes_.size(), ErrorKind::kInvalidArgument, "neutral class out of range");
    index();
}

Corpus Corpus::from_utterances(std::vector<FeatureMatrix> utterances) {
    std::vector<std::string> others;
    std::string neutral;
    for (const auto& u : utterances) {
        if (lower(u.emotion_label) == "neutral") {
            require(neutral.empty() || neutral == u.emotion_label, ErrorKind::kInvalidArgument,
                    "inconsistent spelling of the neutral label");
            neutral = u.emotion_label;
        } else if (std::find(others.begin(), others.end(), u.emotion_label) == others.end()) {
            others.push_back(u.emotion_label);
        }
    }
    require(!neutral.empty(), ErrorKind::kEmptyClass, "corpus has no neutral utterances");
    std::sort(others.begin(), others.end());
    std::vector<std::string> classes{neutral};
    classes.insert(classes.end(), others.begin(), others.end());
    return Corpus(std::move(utterances), std::move(classes), 0);
}

Corpus Corpus::load_dir(const std::filesystem::path& dir) {
    require(std::filesystem::is_directory(dir), ErrorKind::kIo, dir.string() + " is not a directory");
    std::vector<std::filesystem::path> files;
    for (const auto& e : std::filesystem::directory_iterator(dir)) {
        if (e.is_regular_file() && e.path().extension() == ".emof") {
            files.push_back(e.path());
        }
    }
    std::sort(files.begin(), files.end());
    std::vector<FeatureMatrix> utts;
    for (const auto& f : files) {
        utts.push_back(read_features(f));
        utts.back().validate();
    }
    return from_utterances(std::move(utts));
}

void Corpus::index() {
    labels_.clear();
    non_neutral_.clear();
    neutral_.clear();
    neutral_by_speaker_.clear();
    for (std::size_t i = 0; i < utterances_.size(); ++i) {
        const auto& label = utterances_[i].emotion_label;
        auto it = std::find(classes_.begin(), classes_.end(), label);
        require(it != classes_.end(), ErrorKind::kInvalidArgument,
                utterances_[i].source_id + ": emotion '" + label + "' not in class list");
        const auto cls = static_cast<std::size_t>(it - classes_.begin());
        labels_.push_back(cls);
        if (cls == neutral_class_) {
            neutral_.push_back(i);
            neutral_by_speaker_[utterances_[i].speaker_id].push_back(i);
        } else {
            non_neutral_.push_back(i);
        }
    }
}

std::size_t Corpus::channels() const {
    require(!utterances_.empty(), ErrorKind::kEmptyClass, "empty corpus");
    return utterances_.front().channels;
}

const std::vector<std::size_t>& Corpus::neutral_of(const std::string& speaker) const {
    static const std::vector<std::size_t> kNone;
    auto it = neutral_by_speaker_.find(speaker);
    return it == neutral_by_speaker_.end() ? kNone : it->second;
}

void Corpus::validate() const {
    require(!neutral_.empty(), ErrorKind::kEmptyClass, "corpus has no neutral utterances");
    require(!non_neutral_.empty(), ErrorKind::kEmptyClass, "corpus has no non-neutral utterances");
    const std::size_t c = channels();
    for (const auto& u : utterances_) {
        require(u.channels == c, ErrorKind::kShape, u.source_id + ": channel count differs from the corpus");
    }
}

std::string Corpus::content_hash() const {
    std::vector<std::uint8_t> all;
    for (const auto& u : utterances_) {
        const auto b = encode_features(u);
        all.insert(all.end(), b.begin(), b.end());
    }
    return sha256_hex(all);
}

std::pair<std::size_t, std::size_t> sample_pair(const Corpus& corpus, PairPolicy policy, std::mt19937_64& rng) {
    const auto& emo = corpus.non_neutral();
    const auto& neu = corpus.neutral();
    require(!emo.empty(), ErrorKind::kEmptyClass, "sample_pair: no non-neutral utterances");
    require(!neu.empty(), ErrorKind::kEmptyClass, "sample_pair: no neutral utterances");
    const std::size_t e = emo[std::uniform_int_distribution<std::size_t>(0, emo.size() - 1)(rng)];
    const std::vector<std::size_t>* pool = &neu;
    if (policy == PairPolicy::kSameSpeaker) {
        const auto& same = corpus.neutral_of(corpus.utterances()[e].speaker_id);
        if (!same.empty()) {
            pool = &same;
        }
    }
    const std::size_t n = (*pool)[std::uniform_int_distribution<std::size_t>(0, pool->size() - 1)(rng)];
    return {e, n};
}

}  // namespace emorank
