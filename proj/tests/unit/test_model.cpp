#include "doctest.h"
#include "support.hpp"

#include "bpr/binary_io.hpp"
#include "bpr/config.hpp"
#include "bpr/model.hpp"
#include "bpr/synth.hpp"

#include <cstring>
#include <sstream>

using namespace bpr;
using namespace bpr::model;

namespace {

TrainConfig toy() {
    TrainConfig c;
    c.dims = {12, 16, 16, 1, 2, 0.1};
    return c;
}

// Tensor section of an encoded checkpoint.
std::vector<char> tensor_bytes(const std::vector<char>& checkpoint) {
    io::ByteReader r(checkpoint);
    r.raw(4, "magic");
    r.u32();
    r.raw(r.u32(), "config");
    return {checkpoint.begin() + static_cast<std::ptrdiff_t>(r.offset()), checkpoint.end()};
}

std::vector<char> with_config(const TrainConfig& config, const std::vector<char>& tensors) {
    io::ByteWriter w;
    w.raw("BPRC");
    w.u32(1);
    const auto json = config.to_json().dump();
    w.u32(static_cast<std::uint32_t>(json.size()));
    w.raw(json);
    auto out = w.bytes();
    out.insert(out.end(), tensors.begin(), tensors.end());
    return out;
}

}  // namespace

TEST_SUITE("model") {

TEST_CASE("config file") {
    std::istringstream in(
        "# comment\n"
        "preset = desk\n"
        "batch_size = 8\n"
        "temperature = 0.1   # inline\n"
        "pooling = mean\n"
        "negatives = in-batch\n"
        "model_dim = 16\n");
    auto c = training::parse_config(in);
    CHECK(c.batch_size == 8);
    CHECK(c.temperature == 0.1);
    CHECK(c.pooling == nn::Pooling::Mean);
    CHECK(c.negatives == training::NegativeSampling::InBatch);
    CHECK(c.dims.model_dim == 16);
    auto back = TrainConfig::from_json(c.to_json());
    CHECK(back.to_json() == c.to_json());

    std::istringstream unknown("bogus = 1\n");
    CHECK_THROWS_AS(training::parse_config(unknown), ValidationError);
    std::istringstream late("batch_size = 4\npreset = desk\n");
    CHECK_THROWS_AS(training::parse_config(late), ValidationError);
    std::istringstream bad("temperature = 0\n");
    CHECK_THROWS_AS(training::parse_config(bad), ValidationError);

    CHECK(TrainConfig::desk().dims.feature_dim == 64);
    CHECK(TrainConfig::zuco().dims.feature_dim == 840);
    CHECK(TrainConfig::zuco().dims.model_dim == 512);
    CHECK(TrainConfig::zuco().dims.out_dim == 768);
    CHECK(TrainConfig::desk().uniformity_weight == 0.1);
    CHECK(TrainConfig::desk().p_mask == 0.9);
}

TEST_CASE("checkpoint round trip") {
    auto config = toy();
    DualEncoder m(config);
    m.init(3);
    test::TempDir dir;
    save_checkpoint(dir / "m.bprc", config, m);
    auto bytes = io::read_file(dir / "m.bprc");
    CHECK(std::string(bytes.data(), 4) == "BPRC");
    auto ck = load_checkpoint(dir / "m.bprc");
    CHECK(ck.config.to_json() == config.to_json());
    auto original = m.tensors();
    auto loaded = ck.model.tensors();
    REQUIRE(original.size() == loaded.size());
    for (std::size_t i = 0; i < original.size(); ++i) {
        CHECK(original[i].name == loaded[i].name);
        CHECK(*loaded[i].tensor == original[i].tensor->cast<float>().cast<double>());
    }
    // float values survive a second trip exactly
    CHECK(encode_checkpoint(ck.config, ck.model) == bytes);
}

TEST_CASE("checkpoint errors") {
    auto config = toy();
    DualEncoder m(config);
    m.init(1);
    auto bytes = encode_checkpoint(config, m);

    auto wider = config;
    wider.dims.model_dim = 32;
    std::string message;
    try {
        decode_checkpoint(with_config(wider, tensor_bytes(bytes)));
    } catch (const ValidationError& e) {
        message = e.what();
    }
    CHECK(message.find("config expects") != std::string::npos);

    auto bad = bytes;
    bad[1] = 'X';
    CHECK_THROWS_AS(decode_checkpoint(bad), FormatError);
    auto cut = bytes;
    cut.resize(cut.size() - 5);
    CHECK_THROWS_AS(decode_checkpoint(cut), FormatError);
    auto header_only = with_config(config, {});
    CHECK_THROWS_AS(decode_checkpoint(header_only), FormatError);
}

TEST_CASE("provider width must match out_dim") {
    auto config = toy();
    CHECK(make_provider(config)->width() == 16);
    std::map<std::string, FloatMatrix> entries{{"p", FloatMatrix::Zero(3, 8)}};
    test::TempDir dir;
    io::write_file(dir / "e.bpre", encoder::encode_embedding_file(entries));
    config.provider_file = dir / "e.bpre";
    CHECK_THROWS_AS(make_provider(config), ValidationError);
}

TEST_CASE("query inputs") {
    auto data = synth::generate_synthetic_dataset(test::small_synth(10, 2, 1));
    auto config = toy();
    auto provider = make_provider(config);
    ict::IctConfig ic;
    auto pairs = ict::build_ict_dataset(data, data.keys(), ic);
    auto x = query_input(pairs[0], config, *provider);
    CHECK(x.cols() == 12);
    CHECK(x == pairs[0].query_signal.cast<double>());

    config.query_encoder = training::QueryEncoderType::Text;
    CHECK(query_width(config) == 16);
    auto t = query_input(pairs[0], config, *provider);
    CHECK(t.rows() == static_cast<Index>(pairs[0].span_len));
    CHECK(t.cols() == 16);
    CHECK(query_key(pairs[0]) == pairs[0].positive_passage_id + "/" + pairs[0].subject_id);
}

TEST_CASE("passages retrieve themselves through the shared text encoder") {
    auto data = synth::generate_synthetic_dataset(test::small_synth(30, 1, 2));
    auto config = toy();
    DualEncoder m(config);
    m.init(0);
    auto provider = make_provider(config);
    std::vector<std::string> ids;
    for (const auto& p : data.corpus().passages()) ids.push_back(p.passage_id);
    auto index = build_index(m, config, *provider, data.corpus(), ids);
    index.validate();
    std::vector<retrieval::RankedResult> results;
    for (const auto& p : data.corpus().passages()) {
        auto q = encoder::encode_text_passage({p.passage_id, p.tokens, {}}, *provider, m.passage).values;
        results.push_back(retrieval::rank_with_positive(q, index, 20, p.passage_id));
    }
    CHECK(retrieval::compute_metrics(results).mrr == 1.0);
}

}  // TEST_SUITE
