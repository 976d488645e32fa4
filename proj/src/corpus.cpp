#include "bpr/corpus.hpp"

#include "bpr/binary_io.hpp"
#include "bpr/ict.hpp"
#include "bpr/rng.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <set>
#include <sstream>

namespace bpr::corpus {

namespace {

constexpr char kRecordingsMagic[] = {'B', 'P', 'R', 'S'};
constexpr std::uint32_t kRecordingsVersion = 1;

std::string key_string(const RecordKey& k) { return k.passage_id + '\x1f' + k.subject_id; }

std::string describe(const RecordKey& k) { return "(" + k.passage_id + ", " + k.subject_id + ")"; }

}  // namespace

Corpus::Corpus(std::vector<Passage> passages) : passages_(std::move(passages)) {
    by_id_.reserve(passages_.size());
    for (std::size_t i = 0; i < passages_.size(); ++i) {
        check_passage(passages_[i]);
        auto [it, inserted] = by_id_.emplace(passages_[i].passage_id, i);
        if (!inserted) throw ValidationError("duplicate passage_id: " + passages_[i].passage_id);
    }
}

const Passage* Corpus::find(std::string_view passage_id) const {
    auto it = by_id_.find(std::string(passage_id));
    return it == by_id_.end() ? nullptr : &passages_[it->second];
}

const Passage& Corpus::at(std::string_view passage_id) const {
    const Passage* p = find(passage_id);
    if (!p) throw ValidationError("unknown passage_id: " + std::string(passage_id));
    return *p;
}

std::string normalize_whitespace(std::string_view text) {
    std::string out;
    bool pending_space = false;
    for (char c : text) {
        if (std::isspace(static_cast<unsigned char>(c))) {
            pending_space = !out.empty();
            continue;
        }
        if (pending_space) out.push_back(' ');
        pending_space = false;
        out.push_back(c);
    }
    return out;
}

void check_passage(const Passage& passage) {
    if (passage.passage_id.empty()) throw ValidationError("empty passage_id");
    if (passage.tokens.empty()) throw ValidationError("passage " + passage.passage_id + " has no tokens");
    std::string joined;
    for (const auto& t : passage.tokens) {
        if (t.empty() || std::any_of(t.begin(), t.end(), [](char c) { return std::isspace(static_cast<unsigned char>(c)); })) {
            throw ValidationError("passage " + passage.passage_id + " has an empty or whitespace-bearing token");
        }
        if (!joined.empty()) joined.push_back(' ');
        joined += t;
    }
    if (normalize_whitespace(passage.text) != joined) {
        throw ValidationError("passage " + passage.passage_id + ": tokens do not reproduce text");
    }
}

Corpus parse_corpus_manifest(std::istream& in) {
    std::vector<Passage> passages;
    std::set<std::string> seen;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (normalize_whitespace(line).empty()) continue;
        auto fail = [&](const std::string& why) {
            return ValidationError("manifest line " + std::to_string(line_no) + ": " + why);
        };
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::parse_error& e) {
            throw fail(std::string("malformed JSON: ") + e.what());
        }
        if (!j.is_object()) throw fail("record is not an object");
        if (!j.contains("passage_id") || !j["passage_id"].is_string()) throw fail("missing string passage_id");
        if (!j.contains("text") || !j["text"].is_string()) throw fail("missing string text");
        if (!j.contains("tokens") || !j["tokens"].is_array()) throw fail("missing tokens array");
        Passage p;
        p.passage_id = j["passage_id"].get<std::string>();
        p.text = j["text"].get<std::string>();
        for (const auto& t : j["tokens"]) {
            if (!t.is_string()) throw fail("non-string token");
            p.tokens.push_back(t.get<std::string>());
        }
        try {
            check_passage(p);
        } catch (const ValidationError& e) {
            throw fail(e.what());
        }
        if (!seen.insert(p.passage_id).second) throw fail("duplicate passage_id " + p.passage_id);
        passages.push_back(std::move(p));
    }
    if (passages.empty()) throw ValidationError("manifest is empty");
    return Corpus(std::move(passages));
}

Corpus read_corpus_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open manifest: " + path);
    return parse_corpus_manifest(in);
}

void write_corpus_manifest(const std::string& path, const Corpus& corpus) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write manifest: " + path);
    for (const auto& p : corpus.passages()) {
        nlohmann::json j = {{"passage_id", p.passage_id}, {"text", p.text}, {"tokens", p.tokens}};
        out << j.dump() << '\n';
    }
}

std::vector<char> encode_recordings(std::span<const SignalRecording> recordings, const Corpus* corpus) {
    io::ByteWriter w;
    w.raw(std::string_view(kRecordingsMagic, 4));
    w.u32(kRecordingsVersion);
    w.u64(recordings.size());
    for (const auto& r : recordings) {
        if (corpus) {
            const Passage& p = corpus->at(r.passage_id);
            if (static_cast<std::size_t>(r.features.rows()) != p.length()) {
                throw ValidationError("recording " + describe(r.key()) + " has " + std::to_string(r.features.rows()) +
                                      " rows but passage has " + std::to_string(p.length()) + " tokens");
            }
        }
        w.short_string(r.passage_id);
        w.short_string(r.subject_id);
        w.u32(static_cast<std::uint32_t>(r.features.rows()));
        w.u32(static_cast<std::uint32_t>(r.features.cols()));
        const float* data = r.features.data();
        for (Index i = 0; i < r.features.size(); ++i) w.f32(data[i]);
    }
    return w.bytes();
}

std::vector<SignalRecording> decode_recordings(std::vector<char> bytes, const Corpus* corpus) {
    io::ByteReader r(std::move(bytes));
    if (r.remaining() < 4 || r.raw(4, "magic") != std::string_view(kRecordingsMagic, 4)) {
        throw FormatError("recordings container: bad magic (expected BPRS)");
    }
    const std::uint32_t version = r.u32();
    if (version != kRecordingsVersion) {
        throw FormatError("recordings container: unsupported version " + std::to_string(version));
    }
    const std::uint64_t count = r.u64();
    std::vector<SignalRecording> out;
    for (std::uint64_t e = 0; e < count; ++e) {
        const std::size_t entry_offset = r.offset();
        SignalRecording rec;
        rec.passage_id = r.short_string("passage_id");
        rec.subject_id = r.short_string("subject_id");
        const std::uint32_t rows = r.u32();
        const std::uint32_t cols = r.u32();
        const std::size_t n = static_cast<std::size_t>(rows) * cols;
        r.require(n * 4, "feature values of entry " + std::to_string(e));
        rec.features.resize(rows, cols);
        float* data = rec.features.data();
        for (std::size_t i = 0; i < n; ++i) data[i] = r.f32();
        if (corpus) {
            const Passage* p = corpus->find(rec.passage_id);
            if (!p) {
                throw FormatError("entry " + std::to_string(e) + " at offset " + std::to_string(entry_offset) +
                                  " references unknown passage " + rec.passage_id);
            }
            if (p->length() != rows) {
                throw FormatError("entry " + std::to_string(e) + " " + describe(rec.key()) + ": " +
                                  std::to_string(rows) + " rows but passage has " + std::to_string(p->length()) +
                                  " tokens");
            }
        }
        out.push_back(std::move(rec));
    }
    if (!r.at_end()) {
        throw FormatError("recordings container: " + std::to_string(r.remaining()) +
                          " trailing bytes at offset " + std::to_string(r.offset()) + " (entry count mismatch?)");
    }
    return out;
}

void write_recordings(const std::string& path, std::span<const SignalRecording> recordings, const Corpus* corpus) {
    io::write_file(path, encode_recordings(recordings, corpus));
}

std::vector<SignalRecording> read_recordings(const std::string& path, const Corpus* corpus) {
    return decode_recordings(io::read_file(path), corpus);
}

Dataset::Dataset(Corpus corpus, std::vector<SignalRecording> recordings)
    : corpus_(std::move(corpus)), recordings_(std::move(recordings)) {
    if (recordings_.empty()) throw ValidationError("dataset has no recordings");
    feature_dim_ = recordings_.front().features.cols();
    if (feature_dim_ <= 0) throw ValidationError("recordings have zero feature width");
    for (std::size_t i = 0; i < recordings_.size(); ++i) {
        const auto& rec = recordings_[i];
        const Passage& p = corpus_.at(rec.passage_id);
        if (static_cast<std::size_t>(rec.features.rows()) != p.length()) {
            throw ValidationError("recording " + describe(rec.key()) + " is not aligned to its passage");
        }
        if (rec.features.cols() != feature_dim_) {
            throw ValidationError("recording " + describe(rec.key()) + " has feature width " +
                                  std::to_string(rec.features.cols()) + ", expected " + std::to_string(feature_dim_));
        }
        if (!rec.features.allFinite()) throw ValidationError("recording " + describe(rec.key()) + " has non-finite values");
        if (!by_key_.emplace(key_string(rec.key()), i).second) {
            throw ValidationError("duplicate recording " + describe(rec.key()));
        }
    }
}

const SignalRecording& Dataset::recording(const RecordKey& key) const {
    auto it = by_key_.find(key_string(key));
    if (it == by_key_.end()) throw ValidationError("no recording for " + describe(key));
    return recordings_[it->second];
}

std::vector<RecordKey> Dataset::keys() const {
    std::vector<RecordKey> keys;
    keys.reserve(recordings_.size());
    for (const auto& r : recordings_) keys.push_back(r.key());
    return keys;
}

std::vector<std::string> Dataset::subjects() const {
    std::set<std::string> s;
    for (const auto& r : recordings_) s.insert(r.subject_id);
    return {s.begin(), s.end()};
}

Dataset load_dataset(const std::string& dir) {
    namespace fs = std::filesystem;
    Corpus corpus = read_corpus_manifest((fs::path(dir) / kManifestFile).string());
    auto recordings = read_recordings((fs::path(dir) / kRecordingsFile).string(), &corpus);
    return Dataset(std::move(corpus), std::move(recordings));
}

void save_dataset(const std::string& dir, const Dataset& dataset) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    write_corpus_manifest((fs::path(dir) / kManifestFile).string(), dataset.corpus());
    write_recordings((fs::path(dir) / kRecordingsFile).string(), dataset.recordings(), &dataset.corpus());
}

std::vector<std::string> validate_data_dir(const std::string& dir) {
    namespace fs = std::filesystem;
    std::vector<std::string> errors;
    std::optional<Corpus> corpus;
    try {
        corpus = read_corpus_manifest((fs::path(dir) / kManifestFile).string());
    } catch (const std::exception& e) {
        errors.emplace_back(std::string(kManifestFile) + ": " + e.what());
    }
    std::vector<SignalRecording> recordings;
    try {
        recordings = read_recordings((fs::path(dir) / kRecordingsFile).string());
    } catch (const std::exception& e) {
        errors.emplace_back(std::string(kRecordingsFile) + ": " + e.what());
        return errors;
    }
    if (recordings.empty()) errors.emplace_back(std::string(kRecordingsFile) + ": no entries");
    std::set<std::string> seen;
    const Index width = recordings.empty() ? 0 : recordings.front().features.cols();
    for (std::size_t i = 0; i < recordings.size(); ++i) {
        const auto& rec = recordings[i];
        const std::string where = "entry " + std::to_string(i) + " " + describe(rec.key()) + ": ";
        if (!seen.insert(key_string(rec.key())).second) errors.push_back(where + "duplicate recording");
        if (rec.features.cols() != width) errors.push_back(where + "feature width differs from first entry");
        if (!rec.features.allFinite()) errors.push_back(where + "non-finite feature values");
        if (corpus) {
            const Passage* p = corpus->find(rec.passage_id);
            if (!p) {
                errors.push_back(where + "unknown passage");
            } else if (p->length() != static_cast<std::size_t>(rec.features.rows())) {
                errors.push_back(where + std::to_string(rec.features.rows()) + " rows vs " +
                                 std::to_string(p->length()) + " tokens");
            }
        }
    }
    return errors;
}

std::string normalize_token(std::string_view token) {
    std::size_t begin = 0;
    std::size_t end = token.size();
    auto punct = [](char c) { return std::ispunct(static_cast<unsigned char>(c)) != 0; };
    while (begin < end && punct(token[begin])) ++begin;
    while (end > begin && punct(token[end - 1])) --end;
    std::string out(token.substr(begin, end - begin));
    for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return out;
}

std::vector<std::string> normalized_vocabulary(std::span<const std::string> tokens) {
    std::set<std::string> s;
    for (const auto& t : tokens) {
        auto n = normalize_token(t);
        if (!n.empty()) s.insert(std::move(n));
    }
    return {s.begin(), s.end()};
}

double lexical_overlap(std::span<const std::string> a, std::span<const std::string> b) {
    const auto va = normalized_vocabulary(a);
    const auto vb = normalized_vocabulary(b);
    if (va.empty() || vb.empty()) throw ValidationError("lexical_overlap: empty token set after normalization");
    std::vector<std::string> inter;
    std::set_intersection(va.begin(), va.end(), vb.begin(), vb.end(), std::back_inserter(inter));
    const std::size_t uni = va.size() + vb.size() - inter.size();
    return static_cast<double>(inter.size()) / static_cast<double>(uni);
}

std::string to_string(Protocol p) { return p == Protocol::KFold ? "kfold" : "loso"; }

Protocol parse_protocol(std::string_view s) {
    if (s == "kfold") return Protocol::KFold;
    if (s == "loso" || s == "leave-one-subject-out") return Protocol::LeaveOneSubjectOut;
    throw ValidationError("unknown protocol: " + std::string(s));
}

namespace {

std::vector<std::string> unique_passages(std::span<const RecordKey> keys) {
    std::set<std::string> s;
    for (const auto& k : keys) s.insert(k.passage_id);
    return {s.begin(), s.end()};
}

std::size_t partition_size(double ratio, std::size_t n) {
    if (ratio <= 0.0) return 0;
    return std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(ratio * static_cast<double>(n))));
}

void shuffle_in_place(std::vector<std::string>& v, Rng& rng) {
    for (std::size_t i = v.size(); i > 1; --i) {
        std::uniform_int_distribution<std::size_t> pick(0, i - 1);
        std::swap(v[i - 1], v[pick(rng)]);
    }
}

}  // namespace

std::vector<SplitPlan> make_splits(std::span<const RecordKey> keys, int folds, SplitRatios ratios, std::uint64_t seed) {
    if (keys.empty()) throw ValidationError("make_splits: empty dataset");
    if (folds < 2) throw ValidationError("make_splits: need at least 2 folds");
    if (ratios.train < 0 || ratios.dev < 0 || ratios.test < 0 ||
        std::abs(ratios.train + ratios.dev + ratios.test - 1.0) > 1e-9) {
        throw ValidationError("make_splits: ratios must be non-negative and sum to 1");
    }
    auto passages = unique_passages(keys);
    const std::size_t n = passages.size();
    if (n < static_cast<std::size_t>(folds)) {
        throw ValidationError("make_splits: " + std::to_string(n) + " passages is fewer than " +
                              std::to_string(folds) + " folds");
    }
    const std::size_t n_test = partition_size(ratios.test, n);
    const std::size_t n_dev = partition_size(ratios.dev, n);
    if (n_test + n_dev >= n) throw ValidationError("make_splits: too few passages for a non-empty train partition");

    Rng rng = SeedBuilder(seed).mix(stream::kSplits).rng();
    shuffle_in_place(passages, rng);

    std::vector<SplitPlan> plans;
    for (int f = 0; f < folds; ++f) {
        const std::size_t offset = static_cast<std::size_t>(f) * n / static_cast<std::size_t>(folds);
        std::unordered_map<std::string, int> where;  // 0 train, 1 dev, 2 test
        for (std::size_t j = 0; j < n; ++j) {
            const auto& pid = passages[(offset + j) % n];
            where[pid] = j < n_test ? 2 : (j < n_test + n_dev ? 1 : 0);
        }
        SplitPlan plan;
        plan.fold_id = f;
        plan.protocol = Protocol::KFold;
        for (const auto& k : keys) {
            switch (where.at(k.passage_id)) {
                case 0: plan.train.push_back(k); break;
                case 1: plan.dev.push_back(k); break;
                default: plan.test.push_back(k); break;
            }
        }
        std::sort(plan.train.begin(), plan.train.end());
        std::sort(plan.dev.begin(), plan.dev.end());
        std::sort(plan.test.begin(), plan.test.end());
        plans.push_back(std::move(plan));
    }
    return plans;
}

std::vector<SplitPlan> make_loso_splits(std::span<const RecordKey> keys, double dev_ratio, std::uint64_t seed) {
    if (keys.empty()) throw ValidationError("make_loso_splits: empty dataset");
    if (dev_ratio <= 0.0 || dev_ratio >= 1.0) throw ValidationError("make_loso_splits: dev ratio must be in (0,1)");
    std::set<std::string> subject_set;
    for (const auto& k : keys) subject_set.insert(k.subject_id);
    if (subject_set.size() < 2) throw ValidationError("make_loso_splits: need at least 2 subjects");

    std::vector<SplitPlan> plans;
    int fold = 0;
    for (const auto& subject : subject_set) {
        std::vector<RecordKey> others;
        for (const auto& k : keys)
            if (k.subject_id != subject) others.push_back(k);
        auto passages = unique_passages(others);
        Rng rng = SeedBuilder(seed).mix(stream::kSplits).mix(subject).rng();
        shuffle_in_place(passages, rng);
        const std::size_t n_dev = partition_size(dev_ratio, passages.size());
        if (n_dev >= passages.size()) throw ValidationError("make_loso_splits: too few passages");
        std::set<std::string> dev_passages(passages.begin(), passages.begin() + static_cast<std::ptrdiff_t>(n_dev));

        SplitPlan plan;
        plan.fold_id = fold++;
        plan.protocol = Protocol::LeaveOneSubjectOut;
        plan.held_out_subject = subject;
        for (const auto& k : keys) {
            if (k.subject_id == subject) {
                plan.test.push_back(k);
            } else if (dev_passages.count(k.passage_id)) {
                plan.dev.push_back(k);
            } else {
                plan.train.push_back(k);
            }
        }
        std::sort(plan.train.begin(), plan.train.end());
        std::sort(plan.dev.begin(), plan.dev.end());
        std::sort(plan.test.begin(), plan.test.end());
        plans.push_back(std::move(plan));
    }
    return plans;
}

nlohmann::json splits_to_json(std::span<const SplitPlan> plans) {
    nlohmann::json j = nlohmann::json::object();
    for (const auto& plan : plans) {
        nlohmann::json fold;
        for (auto [name, part] : {std::pair{"train", &plan.train}, {"dev", &plan.dev}, {"test", &plan.test}}) {
            fold[name] = unique_passages(*part);
        }
        if (plan.protocol == Protocol::LeaveOneSubjectOut) {
            fold["protocol"] = "loso";
            fold["test_subject"] = plan.held_out_subject;
        }
        j["fold_" + std::to_string(plan.fold_id)] = std::move(fold);
    }
    return j;
}

std::vector<SplitPlan> splits_from_json(const nlohmann::json& j, std::span<const RecordKey> keys) {
    if (!j.is_object() || j.empty()) throw ValidationError("splits file: expected a non-empty object");
    std::vector<SplitPlan> plans;
    for (int f = 0; j.contains("fold_" + std::to_string(f)); ++f) {
        const auto& fold = j.at("fold_" + std::to_string(f));
        SplitPlan plan;
        plan.fold_id = f;
        if (fold.value("protocol", std::string("kfold")) == "loso") {
            plan.protocol = Protocol::LeaveOneSubjectOut;
            plan.held_out_subject = fold.at("test_subject").get<std::string>();
        }
        std::unordered_map<std::string, int> where;
        int slot = 0;
        for (const char* name : {"train", "dev", "test"}) {
            if (!fold.contains(name) || !fold[name].is_array()) {
                throw ValidationError("splits file: fold_" + std::to_string(f) + " lacks " + name);
            }
            for (const auto& id : fold[name]) {
                // a passage may sit in train/dev for other subjects and in test for the held-out one
                if (plan.protocol == Protocol::KFold || slot < 2) where[id.get<std::string>()] = slot;
            }
            ++slot;
        }
        std::set<std::string> test_ids;
        for (const auto& id : fold["test"]) test_ids.insert(id.get<std::string>());
        for (const auto& k : keys) {
            if (plan.protocol == Protocol::LeaveOneSubjectOut && k.subject_id == plan.held_out_subject) {
                if (!test_ids.count(k.passage_id)) throw ValidationError("splits file: uncovered key " + describe(k));
                plan.test.push_back(k);
                continue;
            }
            auto it = where.find(k.passage_id);
            if (it == where.end()) throw ValidationError("splits file: uncovered key " + describe(k));
            (it->second == 0 ? plan.train : it->second == 1 ? plan.dev : plan.test).push_back(k);
        }
        std::sort(plan.train.begin(), plan.train.end());
        std::sort(plan.dev.begin(), plan.dev.end());
        std::sort(plan.test.begin(), plan.test.end());
        plans.push_back(std::move(plan));
    }
    if (plans.empty()) throw ValidationError("splits file: no fold_0 entry");
    return plans;
}

std::vector<NamedSplit> named_partitions(const SplitPlan& plan) {
    return {{"train", plan.train}, {"dev", plan.dev}, {"test", plan.test}};
}

LengthSummary summarize(std::span<const double> values) {
    if (values.empty()) return {};
    const double n = static_cast<double>(values.size());
    const double mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
    double ss = 0.0;
    for (double v : values) ss += (v - mean) * (v - mean);
    return {mean, std::sqrt(ss / n)};
}

CorpusStatistics corpus_stats(const Corpus& corpus, std::span<const NamedSplit> splits, double query_ratio) {
    CorpusStatistics stats;
    std::vector<std::vector<std::string>> split_tokens;
    for (const auto& split : splits) {
        SplitStatistics s;
        s.name = split.name;
        s.queries = split.keys.size();
        std::vector<std::string> tokens;
        std::vector<double> passage_lengths;
        std::vector<double> query_lengths;
        std::set<std::string> seen;
        for (const auto& k : split.keys) {
            const Passage& p = corpus.at(k.passage_id);
            query_lengths.push_back(static_cast<double>(ict::query_length(p.length(), query_ratio)));
            if (!seen.insert(p.passage_id).second) continue;
            passage_lengths.push_back(static_cast<double>(p.length()));
            s.words += p.length();
            tokens.insert(tokens.end(), p.tokens.begin(), p.tokens.end());
        }
        s.passages = seen.size();
        s.unique_words = normalized_vocabulary(tokens).size();
        s.passage_length = summarize(passage_lengths);
        s.query_length = summarize(query_lengths);
        stats.splits.push_back(std::move(s));
        split_tokens.push_back(std::move(tokens));
    }
    for (std::size_t a = 0; a < splits.size(); ++a) {
        for (std::size_t b = a + 1; b < splits.size(); ++b) {
            double overlap = 0.0;
            if (!split_tokens[a].empty() && !split_tokens[b].empty()) {
                overlap = lexical_overlap(split_tokens[a], split_tokens[b]);
            }
            stats.overlaps.push_back({splits[a].name, splits[b].name, overlap});
        }
    }
    return stats;
}

std::string format_stats_table(const CorpusStatistics& stats) {
    std::ostringstream os;
    os << std::fixed;
    auto row = [&](const std::string& label, auto&& cell) {
        os << std::left << std::setw(22) << label;
        for (const auto& s : stats.splits) os << std::right << std::setw(16) << cell(s);
        os << '\n';
    };
    row("Metric", [](const SplitStatistics& s) { return s.name; });
    row("Total queries", [](const SplitStatistics& s) { return std::to_string(s.queries); });
    row("Total passages", [](const SplitStatistics& s) { return std::to_string(s.passages); });
    row("Total words", [](const SplitStatistics& s) { return std::to_string(s.words); });
    row("Unique words", [](const SplitStatistics& s) { return std::to_string(s.unique_words); });
    auto pm = [](const LengthSummary& l) {
        std::ostringstream c;
        c << std::fixed << std::setprecision(1) << l.mean << " +- " << l.sd;
        return c.str();
    };
    row("Avg. passage length", [&](const SplitStatistics& s) { return pm(s.passage_length); });
    row("Avg. query length", [&](const SplitStatistics& s) { return pm(s.query_length); });
    if (!stats.overlaps.empty()) {
        os << "Lexical overlap\n";
        for (const auto& o : stats.overlaps) {
            os << "  " << std::left << std::setw(8) << o.first << std::setw(8) << o.second << std::setprecision(3)
               << o.overlap << '\n';
        }
    }
    return os.str();
}

nlohmann::json stats_to_json(const CorpusStatistics& stats) {
    nlohmann::json j;
    j["splits"] = nlohmann::json::array();
    for (const auto& s : stats.splits) {
        j["splits"].push_back({{"name", s.name},
                               {"queries", s.queries},
                               {"passages", s.passages},
                               {"words", s.words},
                               {"unique_words", s.unique_words},
                               {"passage_length_mean", s.passage_length.mean},
                               {"passage_length_sd", s.passage_length.sd},
                               {"query_length_mean", s.query_length.mean},
                               {"query_length_sd", s.query_length.sd}});
    }
    j["overlap"] = nlohmann::json::array();
    for (const auto& o : stats.overlaps) j["overlap"].push_back({{"a", o.first}, {"b", o.second}, {"jaccard", o.overlap}});
    return j;
}

}  // namespace bpr::corpus
