#pragma once
// Passages, word-aligned signal recordings, split plans and their on-disk
// formats.
//
//   corpus.jsonl    one {"passage_id","text","tokens"} object per line
//   recordings.bprs "BPRS" | u32 version=1 | u64 count | entries...
//                   entry: u16+pid, u16+sid, u32 n_tokens, u32 dim,
//                          n_tokens*dim float32, row-major
//   splits.json     {"fold_<i>": {"train":[...],"dev":[...],"test":[...]}}

#include "bpr/common.hpp"

#include "json.hpp"

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace bpr::corpus {

struct Passage {
    std::string passage_id;
    std::vector<std::string> tokens;
    std::string text;

    std::size_t length() const { return tokens.size(); }
};

// Ordered collection of passages with unique ids; order is manifest order.
class Corpus {
public:
    Corpus() = default;
    explicit Corpus(std::vector<Passage> passages);

    std::size_t size() const { return passages_.size(); }
    bool empty() const { return passages_.empty(); }
    const std::vector<Passage>& passages() const { return passages_; }

    const Passage* find(std::string_view passage_id) const;
    const Passage& at(std::string_view passage_id) const;

private:
    std::vector<Passage> passages_;
    std::unordered_map<std::string, std::size_t> by_id_;
};

struct SignalRecording {
    std::string passage_id;
    std::string subject_id;
    FloatMatrix features;  // one row per token, F columns

    RecordKey key() const { return {passage_id, subject_id}; }
};

// Collapses whitespace runs to one space and trims both ends.
std::string normalize_whitespace(std::string_view text);

// Throws ValidationError if the passage violates its invariants.
void check_passage(const Passage& passage);

Corpus parse_corpus_manifest(std::istream& in);
Corpus read_corpus_manifest(const std::string& path);
void write_corpus_manifest(const std::string& path, const Corpus& corpus);

// With a corpus, every entry must reference a known passage and carry one row
// per token.
std::vector<char> encode_recordings(std::span<const SignalRecording> recordings,
                                    const Corpus* corpus = nullptr);
std::vector<SignalRecording> decode_recordings(std::vector<char> bytes, const Corpus* corpus = nullptr);
void write_recordings(const std::string& path, std::span<const SignalRecording> recordings,
                      const Corpus* corpus = nullptr);
std::vector<SignalRecording> read_recordings(const std::string& path, const Corpus* corpus = nullptr);

// A corpus together with its aligned recordings.
class Dataset {
public:
    Dataset() = default;
    Dataset(Corpus corpus, std::vector<SignalRecording> recordings);

    const Corpus& corpus() const { return corpus_; }
    const std::vector<SignalRecording>& recordings() const { return recordings_; }
    const SignalRecording& recording(const RecordKey& key) const;
    std::vector<RecordKey> keys() const;
    std::vector<std::string> subjects() const;  // sorted, unique
    Index feature_dim() const { return feature_dim_; }

private:
    Corpus corpus_;
    std::vector<SignalRecording> recordings_;
    std::unordered_map<std::string, std::size_t> by_key_;
    Index feature_dim_ = 0;
};

inline constexpr const char* kManifestFile = "corpus.jsonl";
inline constexpr const char* kRecordingsFile = "recordings.bprs";

Dataset load_dataset(const std::string& dir);
void save_dataset(const std::string& dir, const Dataset& dataset);

// Checks a data directory and lists every problem found instead of stopping
// at the first one. Empty result means the directory is valid.
std::vector<std::string> validate_data_dir(const std::string& dir);

// Lowercase and strip surrounding punctuation. May return an empty string.
std::string normalize_token(std::string_view token);
std::vector<std::string> normalized_vocabulary(std::span<const std::string> tokens);  // sorted, unique

// Jaccard similarity of the normalized unique token sets.
double lexical_overlap(std::span<const std::string> a, std::span<const std::string> b);

enum class Protocol { KFold, LeaveOneSubjectOut };
std::string to_string(Protocol p);
Protocol parse_protocol(std::string_view s);

struct SplitPlan {
    int fold_id = 0;
    Protocol protocol = Protocol::KFold;
    std::string held_out_subject;  // leave-one-subject-out only
    std::vector<RecordKey> train;
    std::vector<RecordKey> dev;
    std::vector<RecordKey> test;
};

struct SplitRatios {
    double train = 0.8;
    double dev = 0.1;
    double test = 0.1;
};

// Passage-keyed k-fold plans: passages are shuffled once and each fold takes a
// rotated window as test then dev, so all readings of a passage land in the
// same partition.
std::vector<SplitPlan> make_splits(std::span<const RecordKey> keys, int folds, SplitRatios ratios,
                                   std::uint64_t seed);

// One plan per subject. Test holds every reading by that subject; the other
// subjects' readings are divided into train/dev by passage.
std::vector<SplitPlan> make_loso_splits(std::span<const RecordKey> keys, double dev_ratio,
                                        std::uint64_t seed);

nlohmann::json splits_to_json(std::span<const SplitPlan> plans);
std::vector<SplitPlan> splits_from_json(const nlohmann::json& j, std::span<const RecordKey> keys);

struct LengthSummary {
    double mean = 0.0;
    double sd = 0.0;  // population
};

struct SplitStatistics {
    std::string name;
    std::size_t queries = 0;
    std::size_t passages = 0;
    std::size_t words = 0;
    std::size_t unique_words = 0;
    LengthSummary passage_length;
    LengthSummary query_length;
};

struct OverlapEntry {
    std::string first;
    std::string second;
    double overlap = 0.0;
};

struct CorpusStatistics {
    std::vector<SplitStatistics> splits;
    std::vector<OverlapEntry> overlaps;
};

struct NamedSplit {
    std::string name;
    std::vector<RecordKey> keys;
};

std::vector<NamedSplit> named_partitions(const SplitPlan& plan);

CorpusStatistics corpus_stats(const Corpus& corpus, std::span<const NamedSplit> splits, double query_ratio);
std::string format_stats_table(const CorpusStatistics& stats);
nlohmann::json stats_to_json(const CorpusStatistics& stats);

LengthSummary summarize(std::span<const double> values);

}  // namespace bpr::corpus
