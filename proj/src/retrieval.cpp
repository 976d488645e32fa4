#include "bpr/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <sstream>

namespace bpr::retrieval {

Index PassageIndex::position(const std::string& id) const {
    auto it = std::find(ids.begin(), ids.end(), id);
    if (it == ids.end()) throw ValidationError("passage " + id + " is not in the index");
    return static_cast<Index>(it - ids.begin());
}

void PassageIndex::validate(double tolerance) const {
    if (embeddings.rows() != size()) throw ValidationError("passage index: row count does not match id count");
    std::vector<std::string> sorted = ids;
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
        throw ValidationError("passage index: duplicate ids");
    }
    for (Index r = 0; r < embeddings.rows(); ++r) {
        if (std::abs(embeddings.row(r).norm() - 1.0) > tolerance) {
            throw ValidationError("passage index: row " + std::to_string(r) + " is not unit norm");
        }
    }
}

double score_pair(const RowVector& a, const RowVector& b) {
    if (a.size() != b.size()) throw ValidationError("score_pair: embedding widths differ");
    return a.dot(b);
}

bool ranks_before(double score_a, const std::string& id_a, double score_b, const std::string& id_b) {
    if (score_a != score_b) return score_a > score_b;
    return id_a < id_b;
}

RankedResult rank_scores(const Eigen::VectorXd& scores, const std::vector<std::string>& ids, std::size_t k) {
    if (k < 1) throw ValidationError("rank: k must be at least 1");
    if (ids.empty()) throw ValidationError("rank: empty index");
    std::vector<std::size_t> order(ids.size());
    std::iota(order.begin(), order.end(), 0);
    const std::size_t depth = std::min(k, ids.size());
    auto before = [&](std::size_t a, std::size_t b) {
        return ranks_before(scores(static_cast<Index>(a)), ids[a], scores(static_cast<Index>(b)), ids[b]);
    };
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(depth), order.end(), before);
    RankedResult result;
    result.ranking.reserve(depth);
    for (std::size_t i = 0; i < depth; ++i) result.ranking.push_back({ids[order[i]], scores(static_cast<Index>(order[i]))});
    return result;
}

RankedResult rank_top_k(const RowVector& query, const PassageIndex& index, std::size_t k) {
    if (query.size() != index.embeddings.cols()) throw ValidationError("rank: query width does not match index");
    return rank_scores(index.embeddings * query.transpose(), index.ids, k);
}

RankedResult rank_with_positive(const RowVector& query, const PassageIndex& index, std::size_t k,
                                const std::string& positive_id, const std::optional<RowVector>& positive_override) {
    if (query.size() != index.embeddings.cols()) throw ValidationError("rank: query width does not match index");
    const Index pos = index.position(positive_id);
    Eigen::VectorXd scores = index.embeddings * query.transpose();
    if (positive_override) scores(pos) = score_pair(query, *positive_override);
    RankedResult result = rank_scores(scores, index.ids, k);
    std::size_t rank = 1;
    for (Index j = 0; j < scores.size(); ++j) {
        if (j != pos && ranks_before(scores(j), index.ids[static_cast<std::size_t>(j)], scores(pos), positive_id)) ++rank;
    }
    result.positive_id = positive_id;
    result.positive_rank = rank;
    return result;
}

RunMetrics compute_metrics(std::span<const RankedResult> results, std::span<const int> cutoffs) {
    RunMetrics m;
    m.queries = results.size();
    for (int k : cutoffs) m.precision[k] = 0.0;
    if (results.empty()) return m;
    for (const auto& r : results) {
        if (r.positive_id.empty()) throw ValidationError("compute_metrics: query " + r.query_key + " has no positive id");
        if (!r.positive_rank) continue;
        const std::size_t rank = *r.positive_rank;
        m.mrr += 1.0 / static_cast<double>(rank);
        for (int k : cutoffs)
            if (rank <= static_cast<std::size_t>(k)) m.precision[k] += 1.0;
    }
    const double n = static_cast<double>(results.size());
    m.mrr /= n;
    for (auto& [k, v] : m.precision) v /= n;
    return m;
}

std::vector<double> reciprocal_ranks(std::span<const RankedResult> results) {
    std::vector<double> rr;
    rr.reserve(results.size());
    for (const auto& r : results) rr.push_back(r.positive_rank ? 1.0 / static_cast<double>(*r.positive_rank) : 0.0);
    return rr;
}

ConditionReport aggregate(std::string condition, std::vector<MetricsRow> rows) {
    ConditionReport report;
    report.condition = std::move(condition);
    report.rows = std::move(rows);
    if (report.rows.empty()) return report;
    auto summarize = [&](auto&& get) {
        std::vector<double> v;
        for (const auto& row : report.rows) v.push_back(get(row.metrics));
        return corpus::summarize(v);
    };
    const auto mrr = summarize([](const RunMetrics& m) { return m.mrr; });
    report.mean.mrr = mrr.mean;
    report.sd.mrr = mrr.sd;
    for (const auto& [k, unused] : report.rows.front().metrics.precision) {
        const auto p = summarize([k = k](const RunMetrics& m) { return m.at(k); });
        report.mean.precision[k] = p.mean;
        report.sd.precision[k] = p.sd;
    }
    for (const auto& row : report.rows) report.mean.queries += row.metrics.queries;
    return report;
}

const ConditionReport* MetricsReport::find(const std::string& condition) const {
    for (const auto& c : conditions)
        if (c.condition == condition) return &c;
    return nullptr;
}

nlohmann::json to_json(const RunMetrics& m) {
    nlohmann::json j;
    for (const auto& [k, v] : m.precision) j["p@" + std::to_string(k)] = v;
    j["mrr"] = m.mrr;
    j["queries"] = m.queries;
    return j;
}

nlohmann::json to_json(const MetricsReport& r) {
    nlohmann::json j;
    j["protocol"] = r.protocol;
    j["conditions"] = nlohmann::json::object();
    for (const auto& c : r.conditions) {
        nlohmann::json cj;
        cj["rows"] = nlohmann::json::array();
        for (const auto& row : c.rows) {
            auto rj = to_json(row.metrics);
            rj["label"] = row.label;
            cj["rows"].push_back(std::move(rj));
        }
        cj["mean"] = to_json(c.mean);
        cj["sd"] = to_json(c.sd);
        cj["sd"].erase("queries");
        j["conditions"][c.condition] = std::move(cj);
    }
    return j;
}

std::string format_table(const MetricsReport& r) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(2);
    os << std::left << std::setw(22) << "Condition";
    for (int k : kDefaultCutoffs) os << std::right << std::setw(18) << ("P@" + std::to_string(k));
    os << std::right << std::setw(18) << "MRR" << '\n';
    auto cell = [&](double mean, double sd) {
        std::ostringstream c;
        c << std::fixed << std::setprecision(2) << 100.0 * mean << "% +-" << 100.0 * sd;
        return c.str();
    };
    for (const auto& c : r.conditions) {
        os << std::left << std::setw(22) << c.condition;
        for (int k : kDefaultCutoffs) {
            const bool has = c.mean.precision.count(k) > 0;
            os << std::right << std::setw(18) << (has ? cell(c.mean.at(k), c.sd.at(k)) : "-");
        }
        os << std::right << std::setw(18) << cell(c.mean.mrr, c.sd.mrr) << '\n';
    }
    return os.str();
}

std::vector<Matrix> make_noise_queries(std::span<const Matrix> queries, Rng& rng) {
    if (queries.empty()) throw ValidationError("make_noise_queries: no queries");
    const Index width = queries.front().cols();
    Eigen::VectorXd sum = Eigen::VectorXd::Zero(width);
    Eigen::VectorXd sq = Eigen::VectorXd::Zero(width);
    double rows = 0.0;
    for (const auto& q : queries) {
        if (q.cols() != width) throw ValidationError("make_noise_queries: inconsistent widths");
        sum += q.colwise().sum().transpose();
        rows += static_cast<double>(q.rows());
    }
    const Eigen::VectorXd mean = sum / rows;
    for (const auto& q : queries) sq += (q.rowwise() - mean.transpose()).array().square().matrix().colwise().sum().transpose();
    const Eigen::VectorXd sd = (sq / rows).cwiseSqrt();

    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<Matrix> out;
    out.reserve(queries.size());
    for (const auto& q : queries) {
        Matrix n(q.rows(), q.cols());
        for (Index r = 0; r < n.rows(); ++r)
            for (Index c = 0; c < n.cols(); ++c) n(r, c) = mean(c) + sd(c) * normal(rng);
        out.push_back(std::move(n));
    }
    return out;
}

Bm25Index::Bm25Index(const corpus::Corpus& corpus, std::span<const std::string> passage_ids)
    : ids_(passage_ids.begin(), passage_ids.end()) {
    if (ids_.empty()) throw ValidationError("BM25: empty passage set");
    for (std::size_t d = 0; d < ids_.size(); ++d) {
        std::map<std::string, double> tf;
        double len = 0.0;
        for (const auto& t : corpus.at(ids_[d]).tokens) {
            auto n = corpus::normalize_token(t);
            if (n.empty()) continue;
            tf[n] += 1.0;
            len += 1.0;
        }
        lengths_.push_back(len);
        for (auto& [term, count] : tf) postings_[term].push_back({d, count});
    }
    avg_length_ = std::accumulate(lengths_.begin(), lengths_.end(), 0.0) / static_cast<double>(ids_.size());
}

double Bm25Index::idf(const std::string& term) const {
    auto it = postings_.find(term);
    if (it == postings_.end()) return 0.0;
    const double n = static_cast<double>(ids_.size());
    const double df = static_cast<double>(it->second.size());
    return std::log(1.0 + (n - df + 0.5) / (df + 0.5));
}

Eigen::VectorXd Bm25Index::scores(std::span<const std::string> query_tokens) const {
    Eigen::VectorXd s = Eigen::VectorXd::Zero(static_cast<Index>(ids_.size()));
    for (const auto& raw : query_tokens) {
        const auto term = corpus::normalize_token(raw);
        auto it = postings_.find(term);
        if (term.empty() || it == postings_.end()) continue;
        const double w = idf(term);
        for (const auto& p : it->second) {
            const double norm = kK1 * (1.0 - kB + kB * lengths_[p.doc] / avg_length_);
            s(static_cast<Index>(p.doc)) += w * p.tf * (kK1 + 1.0) / (p.tf + norm);
        }
    }
    return s;
}

RankedResult Bm25Index::rank(std::span<const std::string> query_tokens, std::size_t k,
                             const std::string& positive_id) const {
    const Eigen::VectorXd s = scores(query_tokens);
    RankedResult result = rank_scores(s, ids_, k);
    if (!positive_id.empty()) {
        auto it = std::find(ids_.begin(), ids_.end(), positive_id);
        if (it == ids_.end()) throw ValidationError("BM25: positive " + positive_id + " not indexed");
        const auto pos = static_cast<Index>(it - ids_.begin());
        std::size_t rank = 1;
        for (Index j = 0; j < s.size(); ++j)
            if (j != pos && ranks_before(s(j), ids_[static_cast<std::size_t>(j)], s(pos), positive_id)) ++rank;
        result.positive_id = positive_id;
        result.positive_rank = rank;
    }
    return result;
}

BootstrapResult paired_bootstrap(std::span<const double> a, std::span<const double> b, int resamples,
                                 std::uint64_t seed, double confidence) {
    if (a.size() != b.size() || a.empty()) throw ValidationError("paired_bootstrap: need equal, non-empty samples");
    if (resamples < 1) throw ValidationError("paired_bootstrap: need at least one resample");
    const std::size_t n = a.size();
    std::vector<double> diff(n);
    for (std::size_t i = 0; i < n; ++i) diff[i] = a[i] - b[i];
    BootstrapResult result;
    result.mean_difference = std::accumulate(diff.begin(), diff.end(), 0.0) / static_cast<double>(n);

    Rng rng = SeedBuilder(seed).mix(stream::kBootstrap).rng();
    std::uniform_int_distribution<std::size_t> pick(0, n - 1);
    std::vector<double> means(static_cast<std::size_t>(resamples));
    for (auto& m : means) {
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) s += diff[pick(rng)];
        m = s / static_cast<double>(n);
    }
    std::sort(means.begin(), means.end());
    const double alpha = (1.0 - confidence) / 2.0;
    auto quantile = [&](double q) {
        const auto idx = static_cast<std::size_t>(std::floor(q * static_cast<double>(means.size() - 1)));
        return means[std::min(idx, means.size() - 1)];
    };
    result.lower = quantile(alpha);
    result.upper = quantile(1.0 - alpha);
    return result;
}

}  // namespace bpr::retrieval
