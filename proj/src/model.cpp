#include "bpr/model.hpp"

#include "bpr/binary_io.hpp"

#include <algorithm>
#include <set>

namespace bpr::model {

Index query_width(const TrainConfig& config) {
    return config.query_encoder == training::QueryEncoderType::Signal ? config.dims.feature_dim : config.dims.out_dim;
}

DualEncoder::DualEncoder(const TrainConfig& config)
    : query([&] {
          encoder::EncoderDims d = config.dims;
          d.feature_dim = query_width(config);
          return encoder::SignalEncoder(d);
      }()),
      passage(config.dims.out_dim, config.dims.heads) {
    // dropout rate lives in the config; encoders take it through nn::Mode
}

void DualEncoder::init(std::uint64_t seed) {
    Rng q = SeedBuilder(seed).mix(stream::kInit).mix("query").rng();
    query.init(q);
    Rng p = SeedBuilder(seed).mix(stream::kInit).mix("passage").rng();
    passage.init(p);
}

void DualEncoder::collect(const std::string& prefix, nn::TensorList& out) {
    query.collect(prefix + "query.", out);
    passage.collect(prefix + "passage.", out);
}

std::unique_ptr<encoder::TextProvider> make_provider(const TrainConfig& config) {
    std::unique_ptr<encoder::TextProvider> provider;
    if (config.provider_file.empty()) {
        provider = std::make_unique<encoder::HashedTextProvider>(config.dims.out_dim, config.dims.heads,
                                                                 config.provider_seed, config.provider_hash_bits);
    } else {
        provider = std::make_unique<encoder::FileTextProvider>(encoder::FileTextProvider::load(config.provider_file));
    }
    if (provider->width() != config.dims.out_dim) {
        throw ValidationError("text provider width " + std::to_string(provider->width()) + " does not match out_dim " +
                              std::to_string(config.dims.out_dim));
    }
    return provider;
}

Matrix query_input(const ict::IctPair& pair, const TrainConfig& config, const encoder::TextProvider& provider) {
    if (config.query_encoder == training::QueryEncoderType::Signal) return pair.query_signal.cast<double>();
    const auto positions = pair.query_positions();
    return provider.token_vectors({pair.positive_passage_id, pair.query_tokens, positions});
}

Matrix document_input(const ict::IctPair& pair, const encoder::TextProvider& provider) {
    return provider.embed({pair.positive_passage_id, pair.document_tokens, pair.document_positions});
}

RowVector encode_query(const DualEncoder& model, const TrainConfig& config, const encoder::TextProvider& provider,
                       const ict::IctPair& pair) {
    return model.query.encode(query_input(pair, config, provider), config.pooling).values;
}

RowVector encode_passage(const DualEncoder& model, const TrainConfig& config, const encoder::TextProvider& provider,
                         const corpus::Passage& passage) {
    return encoder::encode_text_passage({passage.passage_id, passage.tokens, {}}, provider, model.passage,
                                        config.pooling)
        .values;
}

RowVector encode_document(const DualEncoder& model, const TrainConfig& config, const encoder::TextProvider& provider,
                          const ict::IctPair& pair) {
    encoder::PassageAdapter::Cache cache;
    return model.passage.forward(document_input(pair, provider), config.pooling, nn::eval_mode(), cache);
}

retrieval::PassageIndex build_index(const DualEncoder& model, const TrainConfig& config,
                                    const encoder::TextProvider& provider, const corpus::Corpus& corpus,
                                    std::span<const std::string> passage_ids) {
    retrieval::PassageIndex index;
    index.ids.assign(passage_ids.begin(), passage_ids.end());
    index.embeddings.resize(static_cast<Index>(passage_ids.size()), config.dims.out_dim);
    for (std::size_t i = 0; i < passage_ids.size(); ++i) {
        index.embeddings.row(static_cast<Index>(i)) = encode_passage(model, config, provider, corpus.at(passage_ids[i]));
    }
    return index;
}

std::string query_key(const ict::IctPair& pair) { return pair.positive_passage_id + "/" + pair.subject_id; }

std::vector<retrieval::RankedResult> rank_queries(std::span<const RowVector> queries,
                                                  std::span<const ict::IctPair> pairs,
                                                  const retrieval::PassageIndex& index, std::size_t k) {
    if (queries.size() != pairs.size()) throw ValidationError("rank_queries: query and pair counts differ");
    std::vector<retrieval::RankedResult> out;
    out.reserve(queries.size());
    for (std::size_t i = 0; i < queries.size(); ++i) {
        auto r = retrieval::rank_with_positive(queries[i], index, k, pairs[i].positive_passage_id);
        r.query_key = query_key(pairs[i]);
        out.push_back(std::move(r));
    }
    return out;
}

// ---------------------------------------------------------------- checkpoints

namespace {
constexpr char kCheckpointMagic[] = {'B', 'P', 'R', 'C'};
}

std::vector<char> encode_checkpoint(const TrainConfig& config, DualEncoder& model) {
    io::ByteWriter w;
    w.raw(std::string_view(kCheckpointMagic, 4));
    w.u32(1);
    const std::string echo = config.to_json().dump();
    w.u32(static_cast<std::uint32_t>(echo.size()));
    w.raw(echo);
    for (const auto& t : model.tensors()) {
        w.short_string(t.name);
        w.u8(2);
        w.u32(static_cast<std::uint32_t>(t.tensor->rows()));
        w.u32(static_cast<std::uint32_t>(t.tensor->cols()));
        for (Index r = 0; r < t.tensor->rows(); ++r)
            for (Index c = 0; c < t.tensor->cols(); ++c) w.f32(static_cast<float>((*t.tensor)(r, c)));
    }
    return w.bytes();
}

Checkpoint decode_checkpoint(std::vector<char> bytes) {
    io::ByteReader r(std::move(bytes));
    if (r.remaining() < 4 || r.raw(4, "magic") != std::string_view(kCheckpointMagic, 4)) {
        throw FormatError("checkpoint: bad magic (expected BPRC)");
    }
    if (const auto v = r.u32(); v != 1) throw FormatError("checkpoint: unsupported version " + std::to_string(v));
    const std::uint32_t echo_len = r.u32();
    const std::string echo = r.raw(echo_len, "config echo");
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(echo);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("checkpoint: config echo is not valid JSON: ") + e.what());
    }
    Checkpoint ck{TrainConfig::from_json(j), {}};
    ck.model = DualEncoder(ck.config);

    auto tensors = ck.model.tensors();
    std::set<std::string> seen;
    while (!r.at_end()) {
        const std::string name = r.short_string("tensor name");
        const auto rank = r.u8();
        std::vector<std::uint32_t> dims(rank);
        for (auto& d : dims) d = r.u32();
        auto it = std::find_if(tensors.begin(), tensors.end(), [&](const nn::NamedTensor& t) { return t.name == name; });
        if (it == tensors.end()) throw ValidationError("checkpoint: unexpected tensor " + name);
        if (!seen.insert(name).second) throw FormatError("checkpoint: duplicate tensor " + name);
        Matrix& m = *it->tensor;
        const bool shape_ok = (rank == 2 && dims[0] == m.rows() && dims[1] == m.cols()) ||
                              (rank == 1 && m.rows() == 1 && dims[0] == m.cols());
        if (!shape_ok) {
            std::string got;
            for (auto d : dims) got += (got.empty() ? "" : "x") + std::to_string(d);
            throw ValidationError("checkpoint: tensor " + name + " has shape " + got + ", config expects " +
                                  std::to_string(m.rows()) + "x" + std::to_string(m.cols()));
        }
        r.require(static_cast<std::size_t>(m.size()) * 4, "tensor data");
        for (Index row = 0; row < m.rows(); ++row)
            for (Index c = 0; c < m.cols(); ++c) m(row, c) = r.f32();
    }
    if (seen.size() != tensors.size()) {
        for (const auto& t : tensors)
            if (!seen.count(t.name)) throw FormatError("checkpoint: missing tensor " + t.name);
    }
    return ck;
}

void save_checkpoint(const std::string& path, const TrainConfig& config, DualEncoder& model) {
    io::write_file(path, encode_checkpoint(config, model));
}

Checkpoint load_checkpoint(const std::string& path) { return decode_checkpoint(io::read_file(path)); }

}  // namespace bpr::model
