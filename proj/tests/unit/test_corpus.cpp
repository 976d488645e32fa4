#include "doctest.h"
#include "support.hpp"

#include "bpr/binary_io.hpp"
#include "bpr/corpus.hpp"
#include "bpr/synth.hpp"

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

using namespace bpr;
using namespace bpr::corpus;

namespace {

Corpus parse(const std::string& text) {
    std::istringstream in(text);
    return parse_corpus_manifest(in);
}

std::string line(const std::string& id, const std::string& text) {
    nlohmann::json j;
    j["passage_id"] = id;
    j["text"] = text;
    std::vector<std::string> tokens;
    std::istringstream ss(text);
    for (std::string t; ss >> t;) tokens.push_back(t);
    j["tokens"] = tokens;
    return j.dump() + "\n";
}

std::string error_of(auto&& f) {
    try {
        f();
    } catch (const std::exception& e) {
        return e.what();
    }
    return {};
}

SignalRecording recording(const std::string& pid, const std::string& sid, Index rows, Index cols, float base) {
    SignalRecording r{pid, sid, FloatMatrix(rows, cols)};
    for (Index i = 0; i < rows; ++i)
        for (Index j = 0; j < cols; ++j) r.features(i, j) = base + static_cast<float>(i * cols + j) * 0.37f;
    return r;
}

}  // namespace

TEST_SUITE("corpus") {

TEST_CASE("manifest with three lines") {
    auto c = parse(line("a", "one two") + line("b", "three") + line("c", "four five six"));
    CHECK(c.size() == 3);
    CHECK(c.at("c").length() == 3);
    CHECK(c.passages()[1].passage_id == "b");
}

TEST_CASE("manifest errors") {
    CHECK_THROWS_AS(parse(line("p1", "x y") + line("p1", "z")), ValidationError);
    CHECK(error_of([] { parse(line("p1", "x y") + line("p1", "z")); }).find("duplicate") != std::string::npos);
    CHECK(error_of([] { parse(line("p1", "x y") + "{not json\n"); }).find("line 2") != std::string::npos);
    CHECK(error_of([] { parse(""); }).find("empty") != std::string::npos);
    CHECK_THROWS_AS(parse(R"({"passage_id":"p","text":"a b","tokens":["a","c"]})" "\n"), ValidationError);
    CHECK_THROWS_AS(parse(R"({"passage_id":"p","text":"","tokens":[]})" "\n"), ValidationError);
    CHECK_THROWS_AS(parse(R"({"passage_id":"p","tokens":["a"]})" "\n"), ValidationError);
}

TEST_CASE("text is compared after whitespace normalization") {
    auto c = parse(R"({"passage_id":"p","text":"  a \t b\n","tokens":["a","b"]})" "\n");
    CHECK(c.size() == 1);
    CHECK(normalize_whitespace("  a \t b\n") == "a b");
}

TEST_CASE("synthetic manifest has every passage") {
    synth::SynthConfig cfg;
    auto data = synth::generate_synthetic_dataset(cfg);
    test::TempDir dir;
    write_corpus_manifest(dir / "corpus.jsonl", data.corpus());
    auto back = read_corpus_manifest(dir / "corpus.jsonl");
    CHECK(back.size() == 200);
    for (const auto& p : back.passages()) CHECK(!p.tokens.empty());
}

TEST_CASE("recordings round trip bit-exactly") {
    auto r = recording("p", "s", 5, 840, -3.25f);
    std::vector<SignalRecording> in{r};
    auto out = decode_recordings(encode_recordings(in));
    REQUIRE(out.size() == 1);
    CHECK(out[0].passage_id == "p");
    CHECK(out[0].subject_id == "s");
    REQUIRE(out[0].features.size() == 4200);
    CHECK(std::memcmp(out[0].features.data(), r.features.data(), 4200 * sizeof(float)) == 0);
}

TEST_CASE("recordings header layout") {
    std::vector<SignalRecording> in{recording("p1", "s1", 2, 3, 0.f)};
    auto bytes = encode_recordings(in);
    io::ByteReader r(bytes);
    CHECK(r.raw(4, "magic") == "BPRS");
    CHECK(r.u32() == 1);
    CHECK(r.u64() == 1);
    CHECK(r.short_string("pid") == "p1");
    CHECK(r.short_string("sid") == "s1");
    CHECK(r.u32() == 2);
    CHECK(r.u32() == 3);
    CHECK(r.remaining() == 6 * 4);
}

TEST_CASE("recordings format errors") {
    std::vector<SignalRecording> in{recording("p1", "s1", 2, 3, 0.f)};
    auto bytes = encode_recordings(in);

    auto bad_magic = bytes;
    std::memcpy(bad_magic.data(), "XXXX", 4);
    CHECK_THROWS_AS(decode_recordings(bad_magic), FormatError);

    auto truncated = bytes;
    truncated.resize(truncated.size() - 3);
    CHECK_THROWS_AS(decode_recordings(truncated), FormatError);

    auto trailing = bytes;
    trailing.push_back(0);
    CHECK_THROWS_AS(decode_recordings(trailing), FormatError);

    Corpus c({test::make_passage("p1", {"a", "b", "c"})});
    CHECK_THROWS_AS(decode_recordings(bytes, &c), ValidationError);
    CHECK_THROWS_AS(encode_recordings(in, &c), ValidationError);
}

TEST_CASE("300 recordings keep count and order") {
    std::vector<SignalRecording> in;
    std::vector<Passage> passages;
    for (int p = 0; p < 100; ++p) {
        passages.push_back(test::make_passage("p" + std::to_string(p), {"x", "y"}));
        for (int s = 0; s < 3; ++s) in.push_back(recording("p" + std::to_string(p), "s" + std::to_string(s), 2, 4, p + s));
    }
    Corpus c(passages);
    auto bytes = encode_recordings(in, &c);
    io::ByteReader r(bytes);
    r.raw(4, "magic");
    r.u32();
    CHECK(r.u64() == 300);
    auto out = decode_recordings(bytes, &c);
    REQUIRE(out.size() == 300);
    for (std::size_t i = 0; i < out.size(); ++i) {
        CHECK(out[i].key() == in[i].key());
        CHECK(out[i].features == in[i].features);
    }
}

TEST_CASE("dataset directory round trip and validation") {
    auto data = synth::generate_synthetic_dataset(test::small_synth());
    test::TempDir dir;
    save_dataset(dir.str(), data);
    CHECK(validate_data_dir(dir.str()).empty());
    auto back = load_dataset(dir.str());
    REQUIRE(back.recordings().size() == data.recordings().size());
    for (std::size_t i = 0; i < back.recordings().size(); ++i) {
        CHECK(back.recordings()[i].features == data.recordings()[i].features);
    }

    std::ofstream(dir / kManifestFile, std::ios::app) << "garbage\n";
    auto errors = validate_data_dir(dir.str());
    CHECK(!errors.empty());
    test::TempDir empty;
    CHECK(!validate_data_dir(empty.str()).empty());
}

TEST_CASE("lexical overlap") {
    std::vector<std::string> abc{"a", "b", "c"}, ab{"a", "b"}, cd{"c", "d"}, bcd{"b", "c", "d"};
    CHECK(lexical_overlap(abc, abc) == 1.0);
    CHECK(lexical_overlap(ab, cd) == 0.0);
    CHECK(lexical_overlap(abc, bcd) == 0.5);
    CHECK(lexical_overlap(bcd, abc) == lexical_overlap(abc, bcd));
    std::vector<std::string> mixed{"A,", "b.", "\"C\""};
    CHECK(lexical_overlap(abc, mixed) == 1.0);
    std::vector<std::string> punct{"...", "!"};
    CHECK_THROWS_AS(lexical_overlap(abc, punct), ValidationError);
}

TEST_CASE("lexical overlap is 1 exactly when the normalized sets match") {
    Rng rng(3);
    std::uniform_int_distribution<int> len(1, 6), word(0, 5);
    for (int trial = 0; trial < 500; ++trial) {
        std::vector<std::string> a, b;
        for (int i = len(rng); i > 0; --i) a.push_back("w" + std::to_string(word(rng)));
        for (int i = len(rng); i > 0; --i) b.push_back("w" + std::to_string(word(rng)));
        const bool same = normalized_vocabulary(a) == normalized_vocabulary(b);
        CHECK((lexical_overlap(a, b) == 1.0) == same);
        CHECK(lexical_overlap(a, b) == lexical_overlap(b, a));
    }
}

TEST_CASE("ten passages, five folds give 8/1/1") {
    std::vector<RecordKey> keys;
    for (int p = 0; p < 10; ++p) keys.push_back({"p" + std::to_string(p), "s"});
    auto plans = make_splits(keys, 5, {}, 3);
    REQUIRE(plans.size() == 5);
    for (const auto& plan : plans) {
        CHECK(plan.train.size() == 8);
        CHECK(plan.dev.size() == 1);
        CHECK(plan.test.size() == 1);
    }
    auto again = make_splits(keys, 5, {}, 3);
    for (std::size_t f = 0; f < plans.size(); ++f) {
        CHECK(plans[f].train == again[f].train);
        CHECK(plans[f].test == again[f].test);
    }
}

TEST_CASE("split soundness over many sizes") {
    for (int n : {10, 13, 37, 100, 201}) {
        std::vector<RecordKey> keys;
        for (int p = 0; p < n; ++p)
            for (int s = 0; s < 3; ++s) keys.push_back({"p" + std::to_string(p), "s" + std::to_string(s)});
        for (const auto& plan : make_splits(keys, 5, {}, static_cast<std::uint64_t>(n))) {
            std::set<std::string> tr, dv, te;
            for (const auto& k : plan.train) tr.insert(k.passage_id);
            for (const auto& k : plan.dev) dv.insert(k.passage_id);
            for (const auto& k : plan.test) te.insert(k.passage_id);
            for (const auto& p : tr) CHECK((!dv.count(p) && !te.count(p)));
            for (const auto& p : dv) CHECK(!te.count(p));
            CHECK(tr.size() + dv.size() + te.size() == static_cast<std::size_t>(n));
            CHECK(std::abs(static_cast<double>(dv.size()) - 0.1 * n) <= 1.0);
            CHECK(std::abs(static_cast<double>(te.size()) - 0.1 * n) <= 1.0);
            CHECK(std::abs(static_cast<double>(tr.size()) - 0.8 * n) <= 1.0);
        }
    }
}

TEST_CASE("split errors") {
    std::vector<RecordKey> keys{{"a", "s"}, {"b", "s"}, {"c", "s"}};
    CHECK_THROWS_AS(make_splits(keys, 5, {}, 0), ValidationError);
    CHECK_THROWS_AS(make_splits(keys, 2, {0.5, 0.1, 0.1}, 0), ValidationError);
    CHECK_THROWS_AS(make_splits({}, 2, {}, 0), ValidationError);
}

TEST_CASE("leave-one-subject-out plans") {
    std::vector<RecordKey> keys;
    for (int p = 0; p < 30; ++p)
        for (int s = 0; s < 3; ++s) keys.push_back({"p" + std::to_string(p), "s" + std::to_string(s)});
    auto plans = make_loso_splits(keys, 0.1, 0);
    REQUIRE(plans.size() == 3);
    for (const auto& plan : plans) {
        CHECK(plan.test.size() == 30);
        for (const auto& k : plan.test) CHECK(k.subject_id == plan.held_out_subject);
        for (const auto& k : plan.train) CHECK(k.subject_id != plan.held_out_subject);
        for (const auto& k : plan.dev) CHECK(k.subject_id != plan.held_out_subject);
        CHECK(plan.train.size() + plan.dev.size() + plan.test.size() == keys.size());
    }
    std::vector<RecordKey> one{{"a", "s"}, {"b", "s"}};
    CHECK_THROWS_AS(make_loso_splits(one, 0.1, 0), ValidationError);
}

TEST_CASE("splits file round trip") {
    std::vector<RecordKey> keys;
    for (int p = 0; p < 20; ++p)
        for (int s = 0; s < 2; ++s) keys.push_back({"p" + std::to_string(p), "s" + std::to_string(s)});
    for (auto plans : {make_splits(keys, 5, {}, 1), make_loso_splits(keys, 0.1, 1)}) {
        auto j = splits_to_json(plans);
        CHECK(j.contains("fold_0"));
        auto back = splits_from_json(j, keys);
        REQUIRE(back.size() == plans.size());
        for (std::size_t f = 0; f < plans.size(); ++f) {
            CHECK(back[f].train == plans[f].train);
            CHECK(back[f].dev == plans[f].dev);
            CHECK(back[f].test == plans[f].test);
            CHECK(back[f].protocol == plans[f].protocol);
        }
    }
}

TEST_CASE("corpus statistics") {
    std::vector<Passage> ps;
    std::vector<RecordKey> keys;
    for (int i = 0; i < 3; ++i) {
        std::vector<std::string> tokens;
        for (int t = 0; t < 10 + 2 * i; ++t) tokens.push_back("w" + std::to_string(t));
        ps.push_back(test::make_passage("p" + std::to_string(i), tokens));
        keys.push_back({"p" + std::to_string(i), "s1"});
        keys.push_back({"p" + std::to_string(i), "s2"});
    }
    Corpus c(ps);
    std::vector<NamedSplit> one{{"all", keys}};
    auto stats = corpus_stats(c, one, 0.3);
    REQUIRE(stats.splits.size() == 1);
    const auto& s = stats.splits[0];
    CHECK(s.passage_length.mean == doctest::Approx(12.0).epsilon(1e-15));
    // population sd of {10, 12, 14}
    CHECK(s.passage_length.sd == doctest::Approx(std::sqrt(8.0 / 3.0)).epsilon(1e-12));
    CHECK(s.words == 36);
    CHECK(s.queries == 6);
    CHECK(s.passages == 3);
    CHECK(s.unique_words == 14);
    CHECK(stats.overlaps.empty());
}

TEST_CASE("word totals equal token counts across splits") {
    auto data = synth::generate_synthetic_dataset(test::small_synth(40, 3, 5));
    auto keys = data.keys();
    auto plan = make_splits(keys, 5, {}, 0)[0];
    auto parts = named_partitions(plan);
    auto stats = corpus_stats(data.corpus(), parts, 0.3);
    REQUIRE(stats.splits.size() == 3);
    CHECK(stats.overlaps.size() == 3);
    for (std::size_t i = 0; i < parts.size(); ++i) {
        std::set<std::string> seen;
        std::size_t words = 0;
        for (const auto& k : parts[i].keys)
            if (seen.insert(k.passage_id).second) words += data.corpus().at(k.passage_id).length();
        CHECK(stats.splits[i].words == words);
    }
    for (const auto& o : stats.overlaps) CHECK((o.overlap >= 0.0 && o.overlap <= 1.0));
}

}  // TEST_SUITE
