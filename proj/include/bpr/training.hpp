#pragma once
// Subject-aware batching, optimizer, learning-rate schedule, the training loop
// and the finite-difference gradient check.

#include "bpr/config.hpp"
#include "bpr/corpus.hpp"
#include "bpr/ict.hpp"
#include "bpr/losses.hpp"
#include "bpr/model.hpp"

#include "json.hpp"

#include <functional>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

namespace bpr::training {

// passage_id -> subjects that read it.
class ExclusionIndex {
public:
    ExclusionIndex() = default;
    explicit ExclusionIndex(std::span<const RecordKey> keys);

    // Other-subject readings of the same passage: {(p, s_j) : s_j != s}.
    std::vector<RecordKey> excluded(const std::string& passage_id, const std::string& subject_id) const;
    bool is_excluded(const RecordKey& query, const RecordKey& item) const;
    const std::set<std::string>& subjects(const std::string& passage_id) const;

private:
    std::map<std::string, std::set<std::string>> readers_;
};

struct Batch {
    std::vector<std::size_t> items;  // indices into the pair list
    std::vector<RecordKey> keys;
    losses::Mask mask;               // false: excluded as a negative

    std::size_t size() const { return items.size(); }
    // Off-diagonal pairs sharing a passage with different subjects that the
    // mask leaves in as negatives.
    int unmasked_cross_subject_pairs() const;
};

losses::Mask build_mask(std::span<const RecordKey> keys, NegativeSampling negatives, const ExclusionIndex& index);

// B items without replacement.
Batch sample_batch(std::span<const RecordKey> keys, int batch_size, NegativeSampling negatives,
                   const ExclusionIndex& index, Rng& rng);

// One pass over all items, shuffled by (seed, epoch). The final partial batch
// is kept if it holds at least two items.
std::vector<Batch> epoch_batches(std::span<const RecordKey> keys, int batch_size, NegativeSampling negatives,
                                 const ExclusionIndex& index, std::uint64_t seed, std::uint64_t epoch);

// Scales grads so their global L2 norm is at most max_norm; returns the norm
// before clipping.
double clip_grad_norm(const nn::TensorList& grads, double max_norm);

class AdamW {
public:
    static constexpr double kBeta1 = 0.9;
    static constexpr double kBeta2 = 0.999;
    static constexpr double kEps = 1e-8;

    AdamW(const nn::TensorList& params, double weight_decay);
    // Decay first (p *= 1 - lr*wd for decayed tensors), then the Adam update.
    void step(const nn::TensorList& params, const nn::TensorList& grads, double lr);
    long steps() const { return t_; }

private:
    double weight_decay_;
    long t_ = 0;
    std::vector<Matrix> m_, v_;
};

// Linear warmup to base over warmup epochs, then linear decay to 0 at total.
double scheduled_lr(double base, double progress_epochs, int warmup_epochs, int total_epochs);

class EarlyStopping {
public:
    explicit EarlyStopping(int patience) : patience_(patience) {}
    // Returns true when metric strictly improves on the best so far.
    bool update(int epoch, double metric);
    bool should_stop() const { return since_best_ >= patience_; }
    int best_epoch() const { return best_epoch_; }
    double best_metric() const { return best_; }

private:
    int patience_;
    int best_epoch_ = -1;
    double best_ = 0.0;
    int since_best_ = 0;
};

struct StepResult {
    double loss = 0.0;
    double contrastive = 0.0;
    double uniformity = 0.0;
    int degenerate_rows = 0;
};

// Forward, loss and backward for one batch. Gradients are accumulated into
// grad (same layout as model). Dropout draws come from mode.rng.
StepResult batch_objective(const model::DualEncoder& model, const TrainConfig& config,
                           std::span<const Matrix> queries, std::span<const Matrix> documents,
                           const losses::Mask& mask, const nn::Mode& mode, model::DualEncoder* grad);

struct TrainResult {
    model::DualEncoder best;
    int best_epoch = 0;
    double best_dev_mrr = 0.0;
    int epochs_run = 0;
    std::vector<nlohmann::json> log;  // one record per epoch, epoch 0 untrained
    bool diverged = false;
    std::string divergence;
};

using EpochCallback = std::function<void(const nlohmann::json&)>;

// Dev MRR with queries from held-out ICT spans (p_mask 1) against full dev
// passages.
retrieval::RunMetrics dev_metrics(const model::DualEncoder& model, const TrainConfig& config,
                                  const encoder::TextProvider& provider, const corpus::Dataset& dataset,
                                  std::span<const RecordKey> dev_keys);

TrainResult train(const corpus::Dataset& dataset, std::span<const RecordKey> train_keys,
                  std::span<const RecordKey> dev_keys, const TrainConfig& config,
                  const encoder::TextProvider& provider, const EpochCallback& on_epoch = {});

enum class GradComponent { SignalEncoder, Adapter, All };
GradComponent parse_grad_component(std::string_view s);

struct TensorGradError {
    std::string name;
    double max_relative = 0.0;
    double max_absolute = 0.0;
    Index elements = 0;
};

struct GradCheckReport {
    std::vector<TensorGradError> tensors;
    double max_relative = 0.0;
    double loss = 0.0;
};

// Toy-dimension check of analytic gradients against central differences
// (eps 1e-4) through the full training objective on one fixed batch.
// Relative error per element is |a - n| / max(|a|, |n|, floor).
GradCheckReport grad_check(GradComponent component, std::uint64_t seed, nn::Pooling pooling = nn::Pooling::Cls,
                           double floor = 1e-6);

}  // namespace bpr::training
