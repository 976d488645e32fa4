#pragma once
// Inverse Cloze Task pairs built from word-aligned recordings, plus the
// overlap-controlled evaluation documents.

#include "bpr/common.hpp"
#include "bpr/corpus.hpp"
#include "bpr/rng.hpp"

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace bpr::ict {

struct IctConfig {
    double query_ratio = 0.3;
    double p_mask = 0.9;
    std::uint64_t seed = 0;

    void validate() const;
};

struct IctPair {
    std::string positive_passage_id;
    std::string subject_id;
    std::size_t span_start = 0;
    std::size_t span_len = 0;
    bool masked = false;
    FloatMatrix query_signal;  // recording rows span_start .. span_start+span_len-1
    std::vector<std::string> query_tokens;
    std::vector<std::string> document_tokens;
    std::vector<std::size_t> document_positions;  // source index of each document token

    RecordKey key() const { return {positive_passage_id, subject_id}; }
    std::vector<std::size_t> query_positions() const;
};

// max(1, floor(length * ratio)).
std::size_t query_length(std::size_t passage_length, double ratio);

IctPair generate_ict_pair(const corpus::Passage& passage, const corpus::SignalRecording& recording,
                          const IctConfig& config, Rng& rng);

// Seed of the stream used for one recording in one epoch.
std::uint64_t pair_seed(std::uint64_t seed, const RecordKey& key, std::uint64_t epoch);

// One pair per key, in key order. Each pair draws from its own stream so the
// result does not depend on iteration order.
std::vector<IctPair> build_ict_dataset(const corpus::Dataset& dataset, std::span<const RecordKey> keys,
                                       const IctConfig& config, std::uint64_t epoch = 0);

inline constexpr double kOverlapLevels[] = {0.0, 0.25, 0.5, 0.75, 1.0};

// Level v re-inserts round(v * span_len) query tokens at their original
// positions. Which tokens come back is a prefix of a per-pair permutation, so
// documents are nested across levels. Source pairs must be masked.
std::map<double, std::vector<IctPair>> build_overlap_testsets(std::span<const IctPair> pairs,
                                                              std::span<const double> levels,
                                                              std::uint64_t seed);

nlohmann::json pair_to_json(const IctPair& pair);

}  // namespace bpr::ict
