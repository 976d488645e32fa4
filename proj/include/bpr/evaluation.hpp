#pragma once
// Protocol runs: train one model per fold (or held-out subject), evaluate the
// retrieval conditions on each test split and aggregate across folds. Also the
// ablation and p_mask sweep drivers and their report formats.

#include "bpr/config.hpp"
#include "bpr/corpus.hpp"
#include "bpr/model.hpp"
#include "bpr/retrieval.hpp"
#include "bpr/training.hpp"

#include "json.hpp"

#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace bpr::evaluation {

// Condition names. Overlap conditions are named "overlap-<level>", e.g.
// "overlap-0.25". "signal" is the trained query encoder on its own inputs
// (signal rows, or span token vectors for a text query encoder).
inline constexpr const char* kSignal = "signal";
inline constexpr const char* kNoise = "noise";
inline constexpr const char* kTextQuery = "text-query";
inline constexpr const char* kBm25 = "bm25-text";

std::string overlap_condition(double level);
std::vector<std::string> default_conditions();
void validate_conditions(const std::vector<std::string>& conditions);

struct FoldModel {
    std::string label;  // "fold_0" ... or the held-out subject id
    corpus::SplitPlan plan;
    training::TrainConfig config;
    model::DualEncoder model;
};

struct EvalOptions {
    std::vector<std::string> conditions = default_conditions();
    std::size_t k = 20;  // ranking depth kept in the rankings output
    int bootstrap_resamples = 1000;
    bool keep_rankings = true;
};

struct EvalOutput {
    retrieval::MetricsReport report;
    std::optional<retrieval::BootstrapResult> signal_vs_noise;  // paired, per-query reciprocal ranks
    std::vector<nlohmann::json> rankings;
    nlohmann::json results;  // machine-readable results file
};

// Test-split ICT queries of one plan: p_mask 1, spans drawn from the
// evaluation stream of the config seed.
std::vector<ict::IctPair> test_queries(const corpus::Dataset& dataset, const corpus::SplitPlan& plan,
                                       const training::TrainConfig& config);
std::vector<std::string> test_passages(const corpus::SplitPlan& plan);

EvalOutput evaluate_models(const corpus::Dataset& dataset, std::span<const FoldModel> folds,
                           corpus::Protocol protocol, const EvalOptions& options);

std::vector<corpus::SplitPlan> make_plans(std::span<const RecordKey> keys, const training::TrainConfig& config,
                                          corpus::Protocol protocol);
std::string plan_label(const corpus::SplitPlan& plan);

struct TrainedRun {
    std::vector<FoldModel> folds;
    std::vector<training::TrainResult> results;
};

using LogSink = std::function<void(const nlohmann::json&)>;

// Trains one model per plan. Best models are rounded to float32 so that
// in-memory models equal their checkpoints.
TrainedRun train_plans(const corpus::Dataset& dataset, const training::TrainConfig& config,
                       std::span<const corpus::SplitPlan> plans, const LogSink& log = {});

// ---------------------------------------------------------------- checkpoint directories

inline constexpr const char* kRunManifest = "manifest.json";
inline constexpr const char* kSplitsFile = "splits.json";
inline constexpr const char* kTrainLog = "train_log.jsonl";

void save_run(const std::string& dir, const std::string& data_dir, corpus::Protocol protocol,
              const training::TrainConfig& config, TrainedRun& run);

struct LoadedRun {
    std::string data_dir;
    corpus::Protocol protocol = corpus::Protocol::KFold;
    corpus::Dataset dataset;
    std::vector<FoldModel> folds;
};
LoadedRun load_run(const std::string& dir, const std::string& data_override = {});

void write_eval_output(const std::string& out_dir, const EvalOutput& output);

// ---------------------------------------------------------------- ablation and sweep

enum class AblationAxis { Encoder, Negatives, Loss, Pooling };
AblationAxis parse_axis(std::string_view s);
std::string to_string(AblationAxis a);

struct Variant {
    std::string label;
    training::TrainConfig config;
};
std::vector<Variant> ablation_variants(const training::TrainConfig& base, AblationAxis axis);

struct VariantResult {
    std::string label;
    retrieval::ConditionReport test;  // main condition across folds
    double dev_mrr = 0.0;             // mean best dev MRR across folds
    int unmasked_cross_subject_pairs = 0;
    nlohmann::json config;
};

struct AblationReport {
    std::string axis;
    std::vector<VariantResult> variants;
};

AblationReport ablate(const corpus::Dataset& dataset, const training::TrainConfig& base, AblationAxis axis,
                      corpus::Protocol protocol = corpus::Protocol::KFold, const LogSink& log = {});
nlohmann::json to_json(const AblationReport& r);
std::string format_table(const AblationReport& r);

inline constexpr double kSweepLevels[] = {0.5, 0.7, 0.9, 1.0};

struct SweepReport {
    std::vector<double> levels;
    std::vector<retrieval::ConditionReport> results;  // overlap-0 condition per level
};

SweepReport sweep_pmask(const corpus::Dataset& dataset, const training::TrainConfig& base,
                        std::span<const double> levels = kSweepLevels,
                        corpus::Protocol protocol = corpus::Protocol::KFold, const LogSink& log = {});
nlohmann::json to_json(const SweepReport& r);
std::string format_table(const SweepReport& r);
// Grouped bar chart: one group per p_mask level, one bar per metric.
std::string sweep_svg(const SweepReport& r);

}  // namespace bpr::evaluation
