#include "bpr/evaluation.hpp"

#include <spdlog/spdlog.h>
#include <fmt/format.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>

namespace bpr::evaluation {

namespace fs = std::filesystem;
using training::TrainConfig;

std::string overlap_condition(double level) { return fmt::format("overlap-{}", level); }

std::vector<std::string> default_conditions() {
    std::vector<std::string> out = {kSignal, kNoise, kTextQuery, kBm25};
    for (double v : ict::kOverlapLevels) out.push_back(overlap_condition(v));
    return out;
}

void validate_conditions(const std::vector<std::string>& conditions) {
    const auto known = default_conditions();
    if (conditions.empty()) throw ValidationError("no evaluation conditions requested");
    for (const auto& c : conditions) {
        if (std::find(known.begin(), known.end(), c) == known.end()) {
            throw ValidationError("unknown evaluation condition: " + c);
        }
    }
}

std::vector<ict::IctPair> test_queries(const corpus::Dataset& dataset, const corpus::SplitPlan& plan,
                                       const TrainConfig& config) {
    const ict::IctConfig ict_config{config.query_ratio, 1.0, SeedBuilder(config.seed).mix(stream::kEvalIct).value()};
    return ict::build_ict_dataset(dataset, plan.test, ict_config, 0);
}

std::vector<std::string> test_passages(const corpus::SplitPlan& plan) {
    std::set<std::string> ids;
    for (const auto& k : plan.test) ids.insert(k.passage_id);
    return {ids.begin(), ids.end()};
}

namespace {

bool wants(const std::vector<std::string>& conditions, const std::string& name) {
    return std::find(conditions.begin(), conditions.end(), name) != conditions.end();
}

nlohmann::json ranking_record(const std::string& condition, const std::string& label,
                              const retrieval::RankedResult& r) {
    nlohmann::json top = nlohmann::json::array();
    for (const auto& s : r.ranking) top.push_back({{"passage_id", s.passage_id}, {"score", s.score}});
    return {{"condition", condition},
            {"fold", label},
            {"query", r.query_key},
            {"positive", r.positive_id},
            {"rank", r.positive_rank ? nlohmann::json(*r.positive_rank) : nlohmann::json()},
            {"top", std::move(top)}};
}

}  // namespace

EvalOutput evaluate_models(const corpus::Dataset& dataset, std::span<const FoldModel> folds,
                           corpus::Protocol protocol, const EvalOptions& options) {
    validate_conditions(options.conditions);
    if (folds.empty()) throw ValidationError("no fold models to evaluate");
    const auto& conditions = options.conditions;

    std::map<std::string, std::vector<retrieval::MetricsRow>> rows;
    std::vector<double> signal_rr, noise_rr;
    EvalOutput out;

    for (const auto& fold : folds) {
        const TrainConfig& config = fold.config;
        if (config.query_encoder == training::QueryEncoderType::Signal &&
            config.dims.feature_dim != dataset.feature_dim()) {
            throw ValidationError("checkpoint " + fold.label + " expects feature width " +
                                  std::to_string(config.dims.feature_dim) + ", data has " +
                                  std::to_string(dataset.feature_dim()));
        }
        const auto provider = model::make_provider(config);
        const auto ids = test_passages(fold.plan);
        const auto index = model::build_index(fold.model, config, *provider, dataset.corpus(), ids);
        const auto pairs = test_queries(dataset, fold.plan, config);
        if (pairs.empty()) throw ValidationError("fold " + fold.label + " has no test queries");

        std::vector<Matrix> inputs;
        std::vector<RowVector> queries;
        for (const auto& p : pairs) {
            inputs.push_back(model::query_input(p, config, *provider));
            queries.push_back(fold.model.query.encode(inputs.back(), config.pooling).values);
        }

        auto record = [&](const std::string& condition, std::vector<retrieval::RankedResult> ranked) {
            rows[condition].push_back({fold.label, retrieval::compute_metrics(ranked)});
            if (options.keep_rankings)
                for (const auto& r : ranked) out.rankings.push_back(ranking_record(condition, fold.label, r));
            return ranked;
        };

        if (wants(conditions, kSignal)) {
            const auto ranked = record(kSignal, model::rank_queries(queries, pairs, index, options.k));
            const auto rr = retrieval::reciprocal_ranks(ranked);
            signal_rr.insert(signal_rr.end(), rr.begin(), rr.end());
        }
        if (wants(conditions, kNoise)) {
            Rng rng = SeedBuilder(config.seed).mix(stream::kNoise).mix(fold.label).rng();
            const auto noise = retrieval::make_noise_queries(inputs, rng);
            std::vector<RowVector> encoded;
            for (const auto& n : noise) encoded.push_back(fold.model.query.encode(n, config.pooling).values);
            const auto ranked = record(kNoise, model::rank_queries(encoded, pairs, index, options.k));
            const auto rr = retrieval::reciprocal_ranks(ranked);
            noise_rr.insert(noise_rr.end(), rr.begin(), rr.end());
        }
        if (wants(conditions, kTextQuery)) {
            std::vector<RowVector> encoded;
            for (const auto& p : pairs) {
                const auto positions = p.query_positions();
                encoded.push_back(encoder::encode_text_passage({p.positive_passage_id, p.query_tokens, positions},
                                                               *provider, fold.model.passage, config.pooling)
                                      .values);
            }
            record(kTextQuery, model::rank_queries(encoded, pairs, index, options.k));
        }
        if (wants(conditions, kBm25)) {
            const retrieval::Bm25Index bm25(dataset.corpus(), ids);
            std::vector<retrieval::RankedResult> ranked;
            for (const auto& p : pairs) {
                auto r = bm25.rank(p.query_tokens, options.k, p.positive_passage_id);
                r.query_key = model::query_key(p);
                ranked.push_back(std::move(r));
            }
            record(kBm25, std::move(ranked));
        }

        std::vector<double> levels;
        for (double v : ict::kOverlapLevels)
            if (wants(conditions, overlap_condition(v))) levels.push_back(v);
        if (!levels.empty()) {
            const auto sets = ict::build_overlap_testsets(pairs, levels, config.seed);
            for (double v : levels) {
                const auto& docs = sets.at(v);
                std::vector<retrieval::RankedResult> ranked;
                for (std::size_t i = 0; i < pairs.size(); ++i) {
                    const RowVector positive = model::encode_document(fold.model, config, *provider, docs[i]);
                    auto r = retrieval::rank_with_positive(queries[i], index, options.k, pairs[i].positive_passage_id,
                                                           positive);
                    r.query_key = model::query_key(pairs[i]);
                    ranked.push_back(std::move(r));
                }
                record(overlap_condition(v), std::move(ranked));
            }
        }
    }

    out.report.protocol = corpus::to_string(protocol);
    for (const auto& c : conditions) out.report.conditions.push_back(retrieval::aggregate(c, rows[c]));

    out.results = retrieval::to_json(out.report);
    out.results["folds"] = nlohmann::json::array();
    for (const auto& f : folds) out.results["folds"].push_back(f.label);
    if (!signal_rr.empty() && !noise_rr.empty() && options.bootstrap_resamples > 0) {
        out.signal_vs_noise = retrieval::paired_bootstrap(signal_rr, noise_rr, options.bootstrap_resamples,
                                                          folds.front().config.seed);
        out.results["signal_vs_noise_mrr"] = {{"mean_difference", out.signal_vs_noise->mean_difference},
                                              {"ci95_lower", out.signal_vs_noise->lower},
                                              {"ci95_upper", out.signal_vs_noise->upper},
                                              {"resamples", options.bootstrap_resamples},
                                              {"queries", signal_rr.size()}};
    }
    return out;
}

std::vector<corpus::SplitPlan> make_plans(std::span<const RecordKey> keys, const TrainConfig& config,
                                          corpus::Protocol protocol) {
    if (protocol == corpus::Protocol::KFold) return corpus::make_splits(keys, config.folds, {}, config.seed);
    return corpus::make_loso_splits(keys, 0.1, config.seed);
}

std::string plan_label(const corpus::SplitPlan& plan) {
    return plan.protocol == corpus::Protocol::LeaveOneSubjectOut ? plan.held_out_subject
                                                                 : "fold_" + std::to_string(plan.fold_id);
}

namespace {

void round_to_float(model::DualEncoder& m) {
    for (const auto& t : m.tensors()) *t.tensor = t.tensor->cast<float>().cast<double>();
}

}  // namespace

TrainedRun train_plans(const corpus::Dataset& dataset, const TrainConfig& config,
                       std::span<const corpus::SplitPlan> plans, const LogSink& log) {
    TrainedRun run;
    const auto provider = model::make_provider(config);
    for (const auto& plan : plans) {
        const std::string label = plan_label(plan);
        spdlog::info("training {} ({} train / {} dev / {} test recordings)", label, plan.train.size(),
                     plan.dev.size(), plan.test.size());
        auto result = training::train(dataset, plan.train, plan.dev, config, *provider, [&](const nlohmann::json& j) {
            if (!log) return;
            nlohmann::json record = {{"fold", label}};
            record.update(j);
            log(record);
        });
        round_to_float(result.best);
        run.folds.push_back({label, plan, config, result.best});
        const bool diverged = result.diverged;
        run.results.push_back(std::move(result));
        if (diverged) break;
    }
    return run;
}

// ---------------------------------------------------------------- run directories

namespace {

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << text;
}

nlohmann::json read_json(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open " + path.string());
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
}

}  // namespace

void save_run(const std::string& dir, const std::string& data_dir, corpus::Protocol protocol,
              const TrainConfig& config, TrainedRun& run) {
    fs::create_directories(dir);
    nlohmann::json manifest = {{"data", fs::absolute(data_dir).lexically_normal().string()},
                               {"protocol", corpus::to_string(protocol)},
                               {"seed", config.seed},
                               {"folds", nlohmann::json::array()}};
    std::vector<corpus::SplitPlan> plans;
    std::string log;
    for (std::size_t i = 0; i < run.folds.size(); ++i) {
        auto& fold = run.folds[i];
        const std::string file = fold.label + ".bprc";
        model::save_checkpoint((fs::path(dir) / file).string(), fold.config, fold.model);
        const auto& result = run.results[i];
        manifest["folds"].push_back({{"label", fold.label},
                                     {"checkpoint", file},
                                     {"best_epoch", result.best_epoch},
                                     {"best_dev_mrr", result.best_dev_mrr},
                                     {"epochs_run", result.epochs_run},
                                     {"diverged", result.diverged}});
        plans.push_back(fold.plan);
        for (const auto& record : result.log) {
            nlohmann::json r = {{"fold", fold.label}};
            r.update(record);
            log += r.dump() + "\n";
        }
    }
    write_text(fs::path(dir) / kRunManifest, manifest.dump(2) + "\n");
    write_text(fs::path(dir) / kSplitsFile, corpus::splits_to_json(plans).dump(2) + "\n");
    write_text(fs::path(dir) / "config.json", config.to_json().dump(2) + "\n");
    write_text(fs::path(dir) / kTrainLog, log);
}

LoadedRun load_run(const std::string& dir, const std::string& data_override) {
    const auto manifest = read_json(fs::path(dir) / kRunManifest);
    LoadedRun run;
    try {
        run.data_dir = data_override.empty() ? manifest.at("data").get<std::string>() : data_override;
        run.protocol = corpus::parse_protocol(manifest.at("protocol").get<std::string>());
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("run manifest: ") + e.what());
    }
    run.dataset = corpus::load_dataset(run.data_dir);
    const auto keys = run.dataset.keys();
    const auto plans = corpus::splits_from_json(read_json(fs::path(dir) / kSplitsFile), keys);
    const auto& entries = manifest.at("folds");
    if (entries.size() != plans.size()) throw FormatError("run manifest: fold count does not match splits file");
    for (std::size_t i = 0; i < plans.size(); ++i) {
        const auto file = entries[i].at("checkpoint").get<std::string>();
        auto ck = model::load_checkpoint((fs::path(dir) / file).string());
        run.folds.push_back({entries[i].at("label").get<std::string>(), plans[i], ck.config, std::move(ck.model)});
    }
    return run;
}

void write_eval_output(const std::string& out_dir, const EvalOutput& output) {
    fs::create_directories(out_dir);
    write_text(fs::path(out_dir) / "results.json", output.results.dump(2) + "\n");
    std::string table = retrieval::format_table(output.report);
    if (output.signal_vs_noise) {
        table += fmt::format("signal - noise MRR: {:.4f} (95% CI {:.4f} .. {:.4f})\n",
                             output.signal_vs_noise->mean_difference, output.signal_vs_noise->lower,
                             output.signal_vs_noise->upper);
    }
    write_text(fs::path(out_dir) / "results.txt", table);
    std::string rankings;
    for (const auto& r : output.rankings) rankings += r.dump() + "\n";
    write_text(fs::path(out_dir) / "rankings.jsonl", rankings);
}

// ---------------------------------------------------------------- ablation

AblationAxis parse_axis(std::string_view s) {
    if (s == "encoder" || s == "query-encoder-type") return AblationAxis::Encoder;
    if (s == "negatives" || s == "negative-sampling") return AblationAxis::Negatives;
    if (s == "loss") return AblationAxis::Loss;
    if (s == "pooling") return AblationAxis::Pooling;
    throw ValidationError("unknown ablation axis: " + std::string(s) + " (expected encoder, negatives, loss or pooling)");
}

std::string to_string(AblationAxis a) {
    switch (a) {
        case AblationAxis::Encoder: return "encoder";
        case AblationAxis::Negatives: return "negatives";
        case AblationAxis::Loss: return "loss";
        case AblationAxis::Pooling: return "pooling";
    }
    return "?";
}

std::vector<Variant> ablation_variants(const TrainConfig& base, AblationAxis axis) {
    std::vector<Variant> out;
    auto with = [&](std::string label, auto&& change) {
        TrainConfig c = base;
        change(c);
        out.push_back({std::move(label), std::move(c)});
    };
    switch (axis) {
        case AblationAxis::Encoder:
            with("signal", [](TrainConfig& c) { c.query_encoder = training::QueryEncoderType::Signal; });
            with("text", [](TrainConfig& c) { c.query_encoder = training::QueryEncoderType::Text; });
            break;
        case AblationAxis::Negatives:
            with("subject-aware", [](TrainConfig& c) { c.negatives = training::NegativeSampling::SubjectAware; });
            with("in-batch", [](TrainConfig& c) { c.negatives = training::NegativeSampling::InBatch; });
            break;
        case AblationAxis::Loss:
            with("lambda=0.1", [](TrainConfig& c) { c.uniformity_weight = 0.1; });
            with("lambda=0", [](TrainConfig& c) { c.uniformity_weight = 0.0; });
            break;
        case AblationAxis::Pooling:
            for (auto p : {nn::Pooling::Cls, nn::Pooling::Mean, nn::Pooling::Max})
                with(nn::to_string(p), [p](TrainConfig& c) { c.pooling = p; });
            break;
    }
    return out;
}

AblationReport ablate(const corpus::Dataset& dataset, const TrainConfig& base, AblationAxis axis,
                      corpus::Protocol protocol, const LogSink& log) {
    AblationReport report;
    report.axis = to_string(axis);
    const auto keys = dataset.keys();
    for (const auto& variant : ablation_variants(base, axis)) {
        spdlog::info("ablation {}: variant {}", report.axis, variant.label);
        const auto plans = make_plans(keys, variant.config, protocol);
        auto run = train_plans(dataset, variant.config, plans, [&](const nlohmann::json& j) {
            if (!log) return;
            nlohmann::json record = {{"variant", variant.label}};
            record.update(j);
            log(record);
        });
        if (!run.results.empty() && run.results.back().diverged) {
            throw NumericError("variant " + variant.label + " diverged: " + run.results.back().divergence);
        }
        EvalOptions options;
        options.conditions = {kSignal};
        options.keep_rankings = false;
        const auto eval = evaluate_models(dataset, run.folds, protocol, options);

        VariantResult v;
        v.label = variant.label;
        v.test = eval.report.conditions.front();
        for (const auto& r : run.results) {
            v.dev_mrr += r.best_dev_mrr / static_cast<double>(run.results.size());
            for (const auto& record : r.log) v.unmasked_cross_subject_pairs += record.value("unmasked_cross_subject_pairs", 0);
        }
        v.config = variant.config.to_json();
        report.variants.push_back(std::move(v));
    }
    return report;
}

nlohmann::json to_json(const AblationReport& r) {
    nlohmann::json j = {{"axis", r.axis}, {"variants", nlohmann::json::array()}};
    for (const auto& v : r.variants) {
        nlohmann::json rows = nlohmann::json::array();
        for (const auto& row : v.test.rows) {
            auto rj = retrieval::to_json(row.metrics);
            rj["label"] = row.label;
            rows.push_back(std::move(rj));
        }
        j["variants"].push_back({{"label", v.label},
                                 {"test_mean", retrieval::to_json(v.test.mean)},
                                 {"test_sd", retrieval::to_json(v.test.sd)},
                                 {"test_rows", std::move(rows)},
                                 {"dev_mrr", v.dev_mrr},
                                 {"unmasked_cross_subject_pairs", v.unmasked_cross_subject_pairs},
                                 {"config", v.config}});
    }
    return j;
}

namespace {

std::string metric_cells(const retrieval::RunMetrics& mean, const retrieval::RunMetrics& sd) {
    std::string s;
    for (int k : retrieval::kDefaultCutoffs) s += fmt::format("{:>18}", fmt::format("{:.2f}% +-{:.2f}", 100 * mean.at(k), 100 * sd.at(k)));
    s += fmt::format("{:>18}", fmt::format("{:.2f}% +-{:.2f}", 100 * mean.mrr, 100 * sd.mrr));
    return s;
}

std::string metric_header(const std::string& first) {
    return fmt::format("{:<22}{:>18}{:>18}{:>18}{:>18}", first, "P@5", "P@10", "P@20", "MRR");
}

}  // namespace

std::string format_table(const AblationReport& r) {
    std::string s = metric_header("Variant (" + r.axis + ")") + fmt::format("{:>12}\n", "dev MRR");
    for (const auto& v : r.variants) {
        s += fmt::format("{:<22}", v.label) + metric_cells(v.test.mean, v.test.sd) +
             fmt::format("{:>12.4f}\n", v.dev_mrr);
    }
    return s;
}

// ---------------------------------------------------------------- p_mask sweep

SweepReport sweep_pmask(const corpus::Dataset& dataset, const TrainConfig& base, std::span<const double> levels,
                        corpus::Protocol protocol, const LogSink& log) {
    SweepReport report;
    const auto keys = dataset.keys();
    for (double level : levels) {
        TrainConfig config = base;
        config.p_mask = level;
        config.validate();
        spdlog::info("p_mask sweep: {}", level);
        const auto plans = make_plans(keys, config, protocol);
        auto run = train_plans(dataset, config, plans, [&](const nlohmann::json& j) {
            if (!log) return;
            nlohmann::json record = {{"p_mask", level}};
            record.update(j);
            log(record);
        });
        if (!run.results.empty() && run.results.back().diverged) {
            throw NumericError(fmt::format("p_mask {} run diverged: {}", level, run.results.back().divergence));
        }
        EvalOptions options;
        options.conditions = {overlap_condition(0.0)};
        options.keep_rankings = false;
        auto eval = evaluate_models(dataset, run.folds, protocol, options);
        report.levels.push_back(level);
        report.results.push_back(std::move(eval.report.conditions.front()));
    }
    return report;
}

nlohmann::json to_json(const SweepReport& r) {
    nlohmann::json j = {{"condition", overlap_condition(0.0)}, {"levels", nlohmann::json::array()}};
    for (std::size_t i = 0; i < r.levels.size(); ++i) {
        j["levels"].push_back({{"p_mask", r.levels[i]},
                               {"mean", retrieval::to_json(r.results[i].mean)},
                               {"sd", retrieval::to_json(r.results[i].sd)}});
    }
    return j;
}

std::string format_table(const SweepReport& r) {
    std::string s = metric_header("p_mask") + "\n";
    for (std::size_t i = 0; i < r.levels.size(); ++i) {
        s += fmt::format("{:<22}", fmt::format("{}", r.levels[i])) + metric_cells(r.results[i].mean, r.results[i].sd) + "\n";
    }
    return s;
}

std::string sweep_svg(const SweepReport& r) {
    constexpr double kWidth = 640, kHeight = 360, kLeft = 60, kRight = 130, kTop = 30, kBottom = 50;
    const double plot_w = kWidth - kLeft - kRight;
    const double plot_h = kHeight - kTop - kBottom;
    const char* colors[] = {"#4c72b0", "#55a868", "#c44e52", "#8172b2"};
    const char* names[] = {"P@5", "P@10", "P@20", "MRR"};

    std::string s = fmt::format(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{}\" height=\"{}\" font-family=\"sans-serif\" font-size=\"12\">\n",
        kWidth, kHeight);
    s += fmt::format("<text x=\"{}\" y=\"18\" text-anchor=\"middle\">Retrieval at zero query overlap by p_mask</text>\n",
                     kLeft + plot_w / 2);
    for (int t = 0; t <= 5; ++t) {
        const double v = t / 5.0;
        const double y = kTop + plot_h * (1.0 - v);
        s += fmt::format("<line x1=\"{}\" y1=\"{:.1f}\" x2=\"{}\" y2=\"{:.1f}\" stroke=\"#ddd\"/>\n", kLeft, y,
                         kLeft + plot_w, y);
        s += fmt::format("<text x=\"{}\" y=\"{:.1f}\" text-anchor=\"end\">{:.0f}%</text>\n", kLeft - 6, y + 4, v * 100);
    }
    const std::size_t groups = r.levels.size();
    const double group_w = groups ? plot_w / static_cast<double>(groups) : plot_w;
    const double bar_w = group_w * 0.8 / 4.0;
    for (std::size_t g = 0; g < groups; ++g) {
        const auto& m = r.results[g].mean;
        const double values[] = {m.at(5), m.at(10), m.at(20), m.mrr};
        const double x0 = kLeft + group_w * static_cast<double>(g) + group_w * 0.1;
        for (int b = 0; b < 4; ++b) {
            const double h = plot_h * std::clamp(values[b], 0.0, 1.0);
            s += fmt::format("<rect x=\"{:.1f}\" y=\"{:.1f}\" width=\"{:.1f}\" height=\"{:.1f}\" fill=\"{}\"/>\n",
                             x0 + bar_w * b, kTop + plot_h - h, bar_w, h, colors[b]);
        }
        s += fmt::format("<text x=\"{:.1f}\" y=\"{}\" text-anchor=\"middle\">{}</text>\n", x0 + bar_w * 2,
                         kTop + plot_h + 18, r.levels[g]);
    }
    s += fmt::format("<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">p_mask</text>\n", kLeft + plot_w / 2,
                     kHeight - 12);
    s += fmt::format("<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"#000\"/>\n", kLeft, kTop + plot_h,
                     kLeft + plot_w, kTop + plot_h);
    for (int b = 0; b < 4; ++b) {
        const double y = kTop + 10 + 20 * b;
        s += fmt::format("<rect x=\"{}\" y=\"{}\" width=\"12\" height=\"12\" fill=\"{}\"/>\n", kWidth - kRight + 20, y,
                         colors[b]);
        s += fmt::format("<text x=\"{}\" y=\"{}\">{}</text>\n", kWidth - kRight + 38, y + 10, names[b]);
    }
    s += "</svg>\n";
    return s;
}

}  // namespace bpr::evaluation
