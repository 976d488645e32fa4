#include "bpr/ict.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

namespace bpr::ict {

void IctConfig::validate() const {
    if (!(query_ratio > 0.0 && query_ratio < 1.0)) throw ValidationError("query_ratio must lie in (0, 1)");
    if (!(p_mask >= 0.0 && p_mask <= 1.0)) throw ValidationError("p_mask must lie in [0, 1]");
}

std::vector<std::size_t> IctPair::query_positions() const {
    std::vector<std::size_t> pos(span_len);
    std::iota(pos.begin(), pos.end(), span_start);
    return pos;
}

std::size_t query_length(std::size_t passage_length, double ratio) {
    // the epsilon absorbs representation error in products like 10 * 0.3
    const auto raw = static_cast<std::size_t>(std::floor(static_cast<double>(passage_length) * ratio + 1e-9));
    return std::max<std::size_t>(1, raw);
}

IctPair generate_ict_pair(const corpus::Passage& passage, const corpus::SignalRecording& recording,
                          const IctConfig& config, Rng& rng) {
    config.validate();
    const std::size_t l = passage.length();
    if (static_cast<std::size_t>(recording.features.rows()) != l || recording.passage_id != passage.passage_id) {
        throw ValidationError("ICT: recording (" + recording.passage_id + ", " + recording.subject_id +
                              ") is not aligned to passage " + passage.passage_id);
    }
    if (l < 2) throw ValidationError("ICT: passage " + passage.passage_id + " has fewer than 2 tokens");

    const std::size_t span = query_length(l, config.query_ratio);
    std::uniform_int_distribution<std::size_t> start_dist(0, l - span);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const std::size_t start = start_dist(rng);
    const double u = unit(rng);

    IctPair pair;
    pair.positive_passage_id = passage.passage_id;
    pair.subject_id = recording.subject_id;
    pair.span_start = start;
    pair.span_len = span;
    pair.masked = u < config.p_mask;
    pair.query_signal = recording.features.middleRows(static_cast<Index>(start), static_cast<Index>(span));
    pair.query_tokens.assign(passage.tokens.begin() + static_cast<std::ptrdiff_t>(start),
                             passage.tokens.begin() + static_cast<std::ptrdiff_t>(start + span));
    for (std::size_t i = 0; i < l; ++i) {
        if (pair.masked && i >= start && i < start + span) continue;
        pair.document_positions.push_back(i);
        pair.document_tokens.push_back(passage.tokens[i]);
    }
    if (pair.document_tokens.empty()) {
        pair.document_positions.push_back(0);
        pair.document_tokens.push_back(passage.tokens[0]);
    }
    return pair;
}

std::uint64_t pair_seed(std::uint64_t seed, const RecordKey& key, std::uint64_t epoch) {
    return SeedBuilder(seed).mix(stream::kIct).mix(key.passage_id).mix(key.subject_id).mix(epoch).value();
}

std::vector<IctPair> build_ict_dataset(const corpus::Dataset& dataset, std::span<const RecordKey> keys,
                                       const IctConfig& config, std::uint64_t epoch) {
    config.validate();
    std::vector<IctPair> pairs;
    pairs.reserve(keys.size());
    for (const auto& key : keys) {
        Rng rng(pair_seed(config.seed, key, epoch));
        pairs.push_back(generate_ict_pair(dataset.corpus().at(key.passage_id), dataset.recording(key), config, rng));
    }
    return pairs;
}

std::map<double, std::vector<IctPair>> build_overlap_testsets(std::span<const IctPair> pairs,
                                                              std::span<const double> levels, std::uint64_t seed) {
    for (double v : levels) {
        const bool allowed = std::any_of(std::begin(kOverlapLevels), std::end(kOverlapLevels),
                                         [v](double a) { return std::abs(a - v) < 1e-12; });
        if (!allowed) throw ValidationError("overlap level " + std::to_string(v) + " is not one of 0/0.25/0.5/0.75/1");
    }
    std::map<double, std::vector<IctPair>> out;
    for (double v : levels) out[v].reserve(pairs.size());

    for (const auto& pair : pairs) {
        if (!pair.masked) throw ValidationError("overlap test sets need masked source pairs");
        std::map<std::size_t, std::string> original;
        for (std::size_t i = 0; i < pair.document_positions.size(); ++i) {
            original[pair.document_positions[i]] = pair.document_tokens[i];
        }
        for (std::size_t j = 0; j < pair.span_len; ++j) original[pair.span_start + j] = pair.query_tokens[j];

        std::vector<std::size_t> order = pair.query_positions();
        Rng rng = SeedBuilder(seed).mix(stream::kOverlap).mix(pair.positive_passage_id).mix(pair.subject_id).rng();
        for (std::size_t i = order.size(); i > 1; --i) {
            std::uniform_int_distribution<std::size_t> pick(0, i - 1);
            std::swap(order[i - 1], order[pick(rng)]);
        }

        for (double v : levels) {
            const auto restore = static_cast<std::size_t>(std::llround(v * static_cast<double>(pair.span_len)));
            std::set<std::size_t> keep(pair.document_positions.begin(), pair.document_positions.end());
            keep.insert(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(restore));
            IctPair modified = pair;
            modified.document_positions.assign(keep.begin(), keep.end());
            modified.document_tokens.clear();
            for (std::size_t pos : modified.document_positions) modified.document_tokens.push_back(original.at(pos));
            out[v].push_back(std::move(modified));
        }
    }
    return out;
}

nlohmann::json pair_to_json(const IctPair& pair) {
    return {{"passage_id", pair.positive_passage_id},
            {"subject_id", pair.subject_id},
            {"query_tokens", pair.query_tokens},
            {"document_tokens", pair.document_tokens},
            {"span_start", pair.span_start},
            {"span_len", pair.span_len},
            {"masked", pair.masked}};
}

}  // namespace bpr::ict
