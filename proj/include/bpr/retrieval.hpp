#pragma once
// Exact dense retrieval, BM25, ranking metrics, matched-noise queries and
// paired bootstrap comparison.

#include "bpr/common.hpp"
#include "bpr/corpus.hpp"
#include "bpr/rng.hpp"

#include "json.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace bpr::retrieval {

// Unit-norm passage embeddings, one row per id.
struct PassageIndex {
    Matrix embeddings;
    std::vector<std::string> ids;

    Index size() const { return static_cast<Index>(ids.size()); }
    Index position(const std::string& id) const;  // throws on unknown id
    void validate(double tolerance = 1e-6) const;
};

// Dot product of two unit vectors.
double score_pair(const RowVector& a, const RowVector& b);

struct ScoredPassage {
    std::string passage_id;
    double score = 0.0;
};

struct RankedResult {
    std::string query_key;
    std::string positive_id;
    std::vector<ScoredPassage> ranking;       // top min(k, N), descending score, ties by id
    std::optional<std::size_t> positive_rank;  // 1-based; absent when not ranked
};

// Order used everywhere: higher score first, then lexicographically smaller id.
bool ranks_before(double score_a, const std::string& id_a, double score_b, const std::string& id_b);

RankedResult rank_scores(const Eigen::VectorXd& scores, const std::vector<std::string>& ids, std::size_t k);
RankedResult rank_top_k(const RowVector& query, const PassageIndex& index, std::size_t k);

// Full-corpus rank of positive_id. If positive_override is given it replaces
// the positive's own row for this query only.
RankedResult rank_with_positive(const RowVector& query, const PassageIndex& index, std::size_t k,
                                const std::string& positive_id,
                                const std::optional<RowVector>& positive_override = std::nullopt);

inline constexpr int kDefaultCutoffs[] = {5, 10, 20};

struct RunMetrics {
    std::map<int, double> precision;  // hit rate at k
    double mrr = 0.0;
    std::size_t queries = 0;

    double at(int k) const { return precision.at(k); }
};

RunMetrics compute_metrics(std::span<const RankedResult> results, std::span<const int> cutoffs = kDefaultCutoffs);
std::vector<double> reciprocal_ranks(std::span<const RankedResult> results);

struct MetricsRow {
    std::string label;  // fold or subject
    RunMetrics metrics;
};

struct ConditionReport {
    std::string condition;
    std::vector<MetricsRow> rows;
    RunMetrics mean;
    RunMetrics sd;  // population sd across rows
};

ConditionReport aggregate(std::string condition, std::vector<MetricsRow> rows);

struct MetricsReport {
    std::string protocol;
    std::vector<ConditionReport> conditions;

    const ConditionReport* find(const std::string& condition) const;
};

nlohmann::json to_json(const RunMetrics& m);
nlohmann::json to_json(const MetricsReport& r);
// Plain-text table: one line per condition, mean +- sd per metric, percent.
std::string format_table(const MetricsReport& r);

// Independent Gaussian draws per feature column, with mean and sd matched to
// the pooled rows of all input queries. Output shapes equal input shapes.
std::vector<Matrix> make_noise_queries(std::span<const Matrix> queries, Rng& rng);

class Bm25Index {
public:
    static constexpr double kK1 = 1.2;
    static constexpr double kB = 0.75;

    Bm25Index(const corpus::Corpus& corpus, std::span<const std::string> passage_ids);

    // ln(1 + (N - df + 0.5) / (df + 0.5)); 0 for terms outside the corpus.
    double idf(const std::string& normalized_term) const;
    Eigen::VectorXd scores(std::span<const std::string> query_tokens) const;
    RankedResult rank(std::span<const std::string> query_tokens, std::size_t k,
                      const std::string& positive_id = {}) const;
    const std::vector<std::string>& ids() const { return ids_; }

private:
    struct Posting {
        std::size_t doc;
        double tf;
    };
    std::vector<std::string> ids_;
    std::vector<double> lengths_;
    double avg_length_ = 0.0;
    std::unordered_map<std::string, std::vector<Posting>> postings_;
};

struct BootstrapResult {
    double mean_difference = 0.0;  // mean(a - b)
    double lower = 0.0;
    double upper = 0.0;
};

// Percentile interval of mean(a_i - b_i) under resampling of paired items.
BootstrapResult paired_bootstrap(std::span<const double> a, std::span<const double> b, int resamples,
                                 std::uint64_t seed, double confidence = 0.95);

}  // namespace bpr::retrieval
