#pragma once
// The trainable dual encoder, its frozen text provider, checkpoint files and
// the encode/rank helpers shared by training and evaluation.

#include "bpr/config.hpp"
#include "bpr/corpus.hpp"
#include "bpr/encoder.hpp"
#include "bpr/ict.hpp"
#include "bpr/retrieval.hpp"

#include <memory>
#include <span>
#include <string>
#include <vector>

namespace bpr::model {

using training::TrainConfig;

// Query encoder plus passage adapter. The provider width must equal out_dim.
// For text queries the query encoder reads provider token vectors instead of
// signal rows.
struct DualEncoder {
    encoder::SignalEncoder query;
    encoder::PassageAdapter passage;

    DualEncoder() = default;
    explicit DualEncoder(const TrainConfig& config);

    void init(std::uint64_t seed);
    // Tensor names are prefixed "query." and "passage.".
    void collect(const std::string& prefix, nn::TensorList& out);
    nn::TensorList tensors() {
        nn::TensorList out;
        collect("", out);
        return out;
    }
};

// Throws ValidationError when the provider width differs from out_dim.
std::unique_ptr<encoder::TextProvider> make_provider(const TrainConfig& config);

Index query_width(const TrainConfig& config);

// Query encoder input for one pair: signal rows, or provider token vectors of
// the span for text queries.
Matrix query_input(const ict::IctPair& pair, const TrainConfig& config, const encoder::TextProvider& provider);
// Frozen provider output for the pair's document tokens.
Matrix document_input(const ict::IctPair& pair, const encoder::TextProvider& provider);

RowVector encode_query(const DualEncoder& model, const TrainConfig& config, const encoder::TextProvider& provider,
                       const ict::IctPair& pair);
RowVector encode_passage(const DualEncoder& model, const TrainConfig& config, const encoder::TextProvider& provider,
                         const corpus::Passage& passage);
RowVector encode_document(const DualEncoder& model, const TrainConfig& config, const encoder::TextProvider& provider,
                          const ict::IctPair& pair);

// Full passages, in the order given.
retrieval::PassageIndex build_index(const DualEncoder& model, const TrainConfig& config,
                                    const encoder::TextProvider& provider, const corpus::Corpus& corpus,
                                    std::span<const std::string> passage_ids);

std::vector<retrieval::RankedResult> rank_queries(std::span<const RowVector> queries,
                                                  std::span<const ict::IctPair> pairs,
                                                  const retrieval::PassageIndex& index, std::size_t k);

std::string query_key(const ict::IctPair& pair);

// Checkpoint: "BPRC", u32 version 1, u32 length + config JSON, then tensors
// until end of file: u16 + name, u8 rank, u32 per dim, float32 row-major.
struct Checkpoint {
    TrainConfig config;
    DualEncoder model;
};

std::vector<char> encode_checkpoint(const TrainConfig& config, DualEncoder& model);
Checkpoint decode_checkpoint(std::vector<char> bytes);
void save_checkpoint(const std::string& path, const TrainConfig& config, DualEncoder& model);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace bpr::model
