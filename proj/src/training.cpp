#include "bpr/training.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

namespace bpr::training {

// ---------------------------------------------------------------- batching

ExclusionIndex::ExclusionIndex(std::span<const RecordKey> keys) {
    for (const auto& k : keys) {
        if (!readers_[k.passage_id].insert(k.subject_id).second) {
            throw ValidationError("exclusion index: duplicate key " + k.passage_id + "/" + k.subject_id);
        }
    }
}

const std::set<std::string>& ExclusionIndex::subjects(const std::string& passage_id) const {
    static const std::set<std::string> kNone;
    auto it = readers_.find(passage_id);
    return it == readers_.end() ? kNone : it->second;
}

std::vector<RecordKey> ExclusionIndex::excluded(const std::string& passage_id, const std::string& subject_id) const {
    std::vector<RecordKey> out;
    for (const auto& s : subjects(passage_id))
        if (s != subject_id) out.push_back({passage_id, s});
    return out;
}

bool ExclusionIndex::is_excluded(const RecordKey& query, const RecordKey& item) const {
    return query.passage_id == item.passage_id && query.subject_id != item.subject_id &&
           subjects(item.passage_id).count(item.subject_id) > 0;
}

int Batch::unmasked_cross_subject_pairs() const {
    int n = 0;
    for (std::size_t i = 0; i < keys.size(); ++i)
        for (std::size_t j = 0; j < keys.size(); ++j)
            if (i != j && keys[i].passage_id == keys[j].passage_id && keys[i].subject_id != keys[j].subject_id &&
                mask(static_cast<Index>(i), static_cast<Index>(j)))
                ++n;
    return n;
}

losses::Mask build_mask(std::span<const RecordKey> keys, NegativeSampling negatives, const ExclusionIndex& index) {
    const auto b = static_cast<Index>(keys.size());
    losses::Mask mask = losses::Mask::Constant(b, b, true);
    if (negatives == NegativeSampling::InBatch) return mask;
    for (Index i = 0; i < b; ++i)
        for (Index j = 0; j < b; ++j)
            if (i != j && index.is_excluded(keys[static_cast<std::size_t>(i)], keys[static_cast<std::size_t>(j)]))
                mask(i, j) = false;
    return mask;
}

namespace {

Batch make_batch(std::span<const RecordKey> keys, std::vector<std::size_t> items, NegativeSampling negatives,
                 const ExclusionIndex& index) {
    Batch b;
    b.items = std::move(items);
    for (auto i : b.items) b.keys.push_back(keys[i]);
    b.mask = build_mask(b.keys, negatives, index);
    return b;
}

}  // namespace

Batch sample_batch(std::span<const RecordKey> keys, int batch_size, NegativeSampling negatives,
                   const ExclusionIndex& index, Rng& rng) {
    if (batch_size < 2) throw ValidationError("batch size must be at least 2");
    if (keys.size() < static_cast<std::size_t>(batch_size)) {
        throw ValidationError("cannot sample a batch of " + std::to_string(batch_size) + " from " +
                              std::to_string(keys.size()) + " items");
    }
    std::vector<std::size_t> pool(keys.size());
    std::iota(pool.begin(), pool.end(), 0);
    std::vector<std::size_t> items;
    for (int i = 0; i < batch_size; ++i) {
        std::uniform_int_distribution<std::size_t> pick(static_cast<std::size_t>(i), pool.size() - 1);
        std::swap(pool[static_cast<std::size_t>(i)], pool[pick(rng)]);
        items.push_back(pool[static_cast<std::size_t>(i)]);
    }
    return make_batch(keys, std::move(items), negatives, index);
}

std::vector<Batch> epoch_batches(std::span<const RecordKey> keys, int batch_size, NegativeSampling negatives,
                                 const ExclusionIndex& index, std::uint64_t seed, std::uint64_t epoch) {
    if (batch_size < 2) throw ValidationError("batch size must be at least 2");
    std::vector<std::size_t> order(keys.size());
    std::iota(order.begin(), order.end(), 0);
    Rng rng = SeedBuilder(seed).mix(stream::kShuffle).mix(epoch).rng();
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<Batch> batches;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(batch_size)) {
        const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(batch_size));
        if (end - start < 2) break;
        batches.push_back(make_batch(keys, {order.begin() + static_cast<std::ptrdiff_t>(start),
                                            order.begin() + static_cast<std::ptrdiff_t>(end)},
                                     negatives, index));
    }
    return batches;
}

// ---------------------------------------------------------------- optimizer

double clip_grad_norm(const nn::TensorList& grads, double max_norm) {
    double sq = 0.0;
    for (const auto& g : grads) sq += g.tensor->squaredNorm();
    const double norm = std::sqrt(sq);
    if (!std::isfinite(norm)) throw NumericError("non-finite gradient norm");
    if (norm > max_norm) {
        const double scale = max_norm / (norm + 1e-6);
        for (const auto& g : grads) *g.tensor *= scale;
    }
    return norm;
}

AdamW::AdamW(const nn::TensorList& params, double weight_decay) : weight_decay_(weight_decay) {
    for (const auto& p : params) {
        m_.push_back(Matrix::Zero(p.tensor->rows(), p.tensor->cols()));
        v_.push_back(Matrix::Zero(p.tensor->rows(), p.tensor->cols()));
    }
}

void AdamW::step(const nn::TensorList& params, const nn::TensorList& grads, double lr) {
    if (params.size() != grads.size() || params.size() != m_.size()) {
        throw ValidationError("optimizer: parameter list does not match its state");
    }
    ++t_;
    const double c1 = 1.0 - std::pow(kBeta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(kBeta2, static_cast<double>(t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
        Matrix& p = *params[i].tensor;
        const Matrix& g = *grads[i].tensor;
        if (params[i].decay && weight_decay_ != 0.0) p *= 1.0 - lr * weight_decay_;
        m_[i] = kBeta1 * m_[i] + (1.0 - kBeta1) * g;
        v_[i] = kBeta2 * v_[i] + (1.0 - kBeta2) * g.cwiseProduct(g);
        p.array() -= lr * (m_[i].array() / c1) / ((v_[i].array() / c2).sqrt() + kEps);
    }
}

double scheduled_lr(double base, double progress, int warmup, int total) {
    if (warmup > 0 && progress < warmup) return base * progress / warmup;
    if (total <= warmup) return progress <= warmup ? base : 0.0;
    return base * std::max(0.0, static_cast<double>(total) - progress) / static_cast<double>(total - warmup);
}

bool EarlyStopping::update(int epoch, double metric) {
    if (best_epoch_ < 0 || metric > best_) {
        best_ = metric;
        best_epoch_ = epoch;
        since_best_ = 0;
        return true;
    }
    ++since_best_;
    return false;
}

// ---------------------------------------------------------------- objective

StepResult batch_objective(const model::DualEncoder& model, const TrainConfig& config,
                           std::span<const Matrix> queries, std::span<const Matrix> documents,
                           const losses::Mask& mask, const nn::Mode& mode, model::DualEncoder* grad) {
    const auto b = static_cast<Index>(queries.size());
    if (documents.size() != queries.size()) throw ValidationError("batch: query and document counts differ");
    const Index width = config.dims.out_dim;
    Matrix q(b, width), p(b, width);
    std::vector<encoder::SignalEncoder::Cache> qc(queries.size());
    std::vector<encoder::PassageAdapter::Cache> pc(documents.size());
    for (Index i = 0; i < b; ++i) q.row(i) = model.query.forward(queries[i], config.pooling, mode, qc[i]);
    for (Index i = 0; i < b; ++i) p.row(i) = model.passage.forward(documents[i], config.pooling, mode, pc[i]);

    const Matrix scores = q * p.transpose();
    const auto c = losses::contrastive_loss(scores, mask, config.temperature);
    Matrix dq = c.dscores * p;
    Matrix dp = c.dscores.transpose() * q;

    const double lambda = config.uniformity_weight;
    const auto u = losses::uniformity_loss(q);
    double uniformity = u.loss;
    if (lambda > 0.0) dq += lambda * u.dembeddings;
    if (config.uniformity_both) {
        const auto up = losses::uniformity_loss(p);
        uniformity += up.loss;
        if (lambda > 0.0) dp += lambda * up.dembeddings;
    }

    StepResult r;
    r.contrastive = c.loss;
    r.uniformity = uniformity;
    r.loss = losses::total_loss(c.loss, uniformity, lambda);
    r.degenerate_rows = c.degenerate_rows;
    if (grad) {
        for (Index i = 0; i < b; ++i) model.query.backward(qc[i], dq.row(i), grad->query);
        for (Index i = 0; i < b; ++i) model.passage.backward(pc[i], dp.row(i), grad->passage);
    }
    return r;
}

// ---------------------------------------------------------------- training loop

retrieval::RunMetrics dev_metrics(const model::DualEncoder& model, const TrainConfig& config,
                                  const encoder::TextProvider& provider, const corpus::Dataset& dataset,
                                  std::span<const RecordKey> dev_keys) {
    const ict::IctConfig ict_config{config.query_ratio, 1.0, SeedBuilder(config.seed).mix(stream::kEvalIct).value()};
    const auto pairs = ict::build_ict_dataset(dataset, dev_keys, ict_config, 0);
    std::set<std::string> ids;
    for (const auto& k : dev_keys) ids.insert(k.passage_id);
    const std::vector<std::string> id_list(ids.begin(), ids.end());
    const auto index = model::build_index(model, config, provider, dataset.corpus(), id_list);
    std::vector<RowVector> queries;
    queries.reserve(pairs.size());
    for (const auto& pair : pairs) queries.push_back(model::encode_query(model, config, provider, pair));
    const auto ranked = model::rank_queries(queries, pairs, index, 20);
    return retrieval::compute_metrics(ranked);
}

namespace {

nlohmann::json metrics_fields(const retrieval::RunMetrics& m) {
    nlohmann::json j;
    j["dev_mrr"] = m.mrr;
    for (const auto& [k, v] : m.precision) j["dev_p@" + std::to_string(k)] = v;
    return j;
}

}  // namespace

TrainResult train(const corpus::Dataset& dataset, std::span<const RecordKey> train_keys,
                  std::span<const RecordKey> dev_keys, const TrainConfig& config,
                  const encoder::TextProvider& provider, const EpochCallback& on_epoch) {
    config.validate();
    if (train_keys.size() < 2) throw ValidationError("training split needs at least two recordings");
    if (dev_keys.empty()) throw ValidationError("dev split is empty");
    if (provider.width() != config.dims.out_dim) throw ValidationError("text provider width does not match out_dim");
    if (config.query_encoder == QueryEncoderType::Signal && dataset.feature_dim() != config.dims.feature_dim) {
        throw ValidationError("config feature_dim " + std::to_string(config.dims.feature_dim) +
                              " does not match recordings width " + std::to_string(dataset.feature_dim()));
    }

    model::DualEncoder model(config);
    model.init(config.seed);
    model::DualEncoder grad = nn::zeros_like(model);
    const nn::TensorList params = model.tensors();
    const nn::TensorList grads = grad.tensors();
    AdamW optimizer(params, config.weight_decay);
    const ExclusionIndex exclusion(train_keys);
    EarlyStopping stopping(config.patience);

    TrainResult result;
    using clock = std::chrono::steady_clock;
    const auto started = clock::now();
    auto elapsed = [&] { return std::chrono::duration<double>(clock::now() - started).count(); };

    auto finish_epoch = [&](nlohmann::json record, int epoch, const retrieval::RunMetrics& dev) {
        const bool improved = stopping.update(epoch, dev.mrr);
        if (improved) result.best = model;
        record.update(metrics_fields(dev));
        record["improved"] = improved;
        record["wall_time_s"] = elapsed();
        spdlog::info("epoch {} loss {:.4f} dev_mrr {:.4f}{}", epoch, record.value("loss", 0.0), dev.mrr,
                     improved ? " *" : "");
        if (on_epoch) on_epoch(record);
        result.log.push_back(std::move(record));
        result.epochs_run = epoch;
    };

    finish_epoch({{"epoch", 0}, {"lr", 0.0}}, 0, dev_metrics(model, config, provider, dataset, dev_keys));

    const ict::IctConfig ict_config{config.query_ratio, config.p_mask, config.seed};
    double lr = 0.0;
    for (int epoch = 1; epoch <= config.epochs && !stopping.should_stop(); ++epoch) {
        const auto pairs = ict::build_ict_dataset(dataset, train_keys, ict_config, static_cast<std::uint64_t>(epoch));
        const auto batches = epoch_batches(train_keys, config.batch_size, config.negatives, exclusion, config.seed,
                                           static_cast<std::uint64_t>(epoch));
        double loss_sum = 0.0, contrastive_sum = 0.0, uniformity_sum = 0.0, grad_norm_sum = 0.0;
        int degenerate = 0, cross_subject = 0, masked = 0;
        std::size_t step = 0;
        try {
            for (; step < batches.size(); ++step) {
                const Batch& batch = batches[step];
                std::vector<Matrix> queries, documents;
                for (auto i : batch.items) {
                    queries.push_back(model::query_input(pairs[i], config, provider));
                    documents.push_back(model::document_input(pairs[i], provider));
                }
                Rng dropout_rng = SeedBuilder(config.seed).mix(stream::kDropout).mix(epoch).mix(step).rng();
                const nn::Mode mode{true, config.dims.dropout, &dropout_rng};
                for (const auto& g : grads) g.tensor->setZero();
                const auto r = batch_objective(model, config, queries, documents, batch.mask, mode, &grad);
                if (!std::isfinite(r.loss)) throw NumericError("non-finite loss at epoch " + std::to_string(epoch));
                grad_norm_sum += clip_grad_norm(grads, config.clip_norm);
                const double progress = (epoch - 1) + static_cast<double>(step + 1) / static_cast<double>(batches.size());
                lr = scheduled_lr(config.learning_rate, progress, config.warmup_epochs, config.epochs);
                optimizer.step(params, grads, lr);

                loss_sum += r.loss;
                contrastive_sum += r.contrastive;
                uniformity_sum += r.uniformity;
                degenerate += r.degenerate_rows;
                cross_subject += batch.unmasked_cross_subject_pairs();
                masked += static_cast<int>((!batch.mask).count());
            }
        } catch (const NumericError& e) {
            result.diverged = true;
            result.divergence = e.what();
            spdlog::error("training diverged: {}", e.what());
            break;
        }
        const double n = static_cast<double>(std::max<std::size_t>(1, batches.size()));
        nlohmann::json record = {{"epoch", epoch},
                                 {"loss", loss_sum / n},
                                 {"contrastive", contrastive_sum / n},
                                 {"uniformity", uniformity_sum / n},
                                 {"grad_norm", grad_norm_sum / n},
                                 {"lr", lr},
                                 {"steps", batches.size()},
                                 {"degenerate_rows", degenerate},
                                 {"masked_pairs", masked},
                                 {"unmasked_cross_subject_pairs", cross_subject}};
        finish_epoch(std::move(record), epoch, dev_metrics(model, config, provider, dataset, dev_keys));
    }
    result.best_epoch = stopping.best_epoch();
    result.best_dev_mrr = stopping.best_metric();
    return result;
}

// ---------------------------------------------------------------- gradient check

GradComponent parse_grad_component(std::string_view s) {
    if (s == "signal" || s == "signal-encoder") return GradComponent::SignalEncoder;
    if (s == "adapter") return GradComponent::Adapter;
    if (s == "all") return GradComponent::All;
    throw ValidationError("unknown gradient-check component: " + std::string(s));
}

GradCheckReport grad_check(GradComponent component, std::uint64_t seed, nn::Pooling pooling, double floor) {
    TrainConfig config = TrainConfig::desk();
    config.dims = {12, 16, 16, 2, 2, 0.1};
    config.batch_size = 4;
    config.pooling = pooling;
    config.seed = seed;

    model::DualEncoder model(config);
    model.init(seed);
    const encoder::HashedTextProvider provider(16, 2, config.provider_seed);

    // two readings of one passage so the exclusion mask is exercised
    const std::vector<RecordKey> keys = {{"p0", "s0"}, {"p0", "s1"}, {"p1", "s0"}, {"p2", "s1"}};
    const losses::Mask mask = build_mask(keys, NegativeSampling::SubjectAware, ExclusionIndex(keys));
    Rng data = SeedBuilder(seed).mix("grad-check").rng();
    std::normal_distribution<double> normal(0.0, 1.0);
    const Index query_rows[] = {3, 4, 2, 5};
    const std::size_t doc_lengths[] = {6, 5, 7, 4};
    std::vector<Matrix> queries, documents;
    for (std::size_t i = 0; i < keys.size(); ++i) {
        Matrix q(query_rows[i], 12);
        for (Index k = 0; k < q.size(); ++k) q.data()[k] = normal(data);
        queries.push_back(std::move(q));
        std::vector<std::string> tokens;
        for (std::size_t t = 0; t < doc_lengths[i]; ++t) tokens.push_back("w" + std::to_string(data() % 20));
        documents.push_back(provider.embed({keys[i].passage_id, tokens, {}}));
    }

    auto objective = [&](model::DualEncoder* grad) {
        Rng dropout_rng = SeedBuilder(seed).mix(stream::kDropout).rng();
        const nn::Mode mode{true, config.dims.dropout, &dropout_rng};
        return batch_objective(model, config, queries, documents, mask, mode, grad).loss;
    };

    model::DualEncoder grad = nn::zeros_like(model);
    GradCheckReport report;
    report.loss = objective(&grad);

    const auto params = model.tensors();
    const auto grads = grad.tensors();
    constexpr double kEps = 1e-4;
    for (std::size_t t = 0; t < params.size(); ++t) {
        const std::string& name = params[t].name;
        const bool is_query = name.rfind("query.", 0) == 0;
        if ((component == GradComponent::SignalEncoder && !is_query) ||
            (component == GradComponent::Adapter && is_query))
            continue;
        TensorGradError err{name, 0.0, 0.0, params[t].tensor->size()};
        Matrix& p = *params[t].tensor;
        for (Index k = 0; k < p.size(); ++k) {
            const double saved = p.data()[k];
            p.data()[k] = saved + kEps;
            const double up = objective(nullptr);
            p.data()[k] = saved - kEps;
            const double down = objective(nullptr);
            p.data()[k] = saved;
            const double numeric = (up - down) / (2.0 * kEps);
            const double analytic = grads[t].tensor->data()[k];
            const double abs_err = std::abs(analytic - numeric);
            const double rel = abs_err / std::max({std::abs(analytic), std::abs(numeric), floor});
            err.max_absolute = std::max(err.max_absolute, abs_err);
            err.max_relative = std::max(err.max_relative, rel);
        }
        report.max_relative = std::max(report.max_relative, err.max_relative);
        report.tensors.push_back(std::move(err));
    }
    return report;
}

}  // namespace bpr::training
