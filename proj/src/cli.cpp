#include "bpr/cli.hpp"

#include "bpr/config.hpp"
#include "bpr/corpus.hpp"
#include "bpr/evaluation.hpp"
#include "bpr/ict.hpp"
#include "bpr/synth.hpp"
#include "bpr/training.hpp"

#include "CLI11.hpp"

#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

namespace bpr::cli {

namespace fs = std::filesystem;
using training::TrainConfig;

namespace {

struct Options {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::string out;
    std::string data;
    std::string checkpoint;
    std::string protocol;
    std::size_t k = 20;
    std::optional<int> folds;
    std::string axis;
    std::vector<std::string> conditions;
    synth::SynthConfig synth;
};

void setup_logging() {
    auto logger = spdlog::stderr_color_mt("bpr");
    logger->set_pattern("[%l] %v");
    spdlog::set_default_logger(logger);
    spdlog::set_level(spdlog::level::info);
    if (const char* env = std::getenv("BPR_LOG_LEVEL")) {
        const std::string level = env;
        if (level == "error") spdlog::set_level(spdlog::level::err);
        else if (level == "debug") spdlog::set_level(spdlog::level::debug);
        else if (level != "info") spdlog::warn("BPR_LOG_LEVEL must be error, info or debug; using info");
    }
}

void write_text(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << text;
}

void require(const std::string& value, const char* flag) {
    if (value.empty()) throw ValidationError(std::string("missing required flag ") + flag);
}

TrainConfig resolve_config(const Options& o) {
    TrainConfig c = o.config_path.empty() ? TrainConfig::desk() : training::read_config_file(o.config_path);
    if (o.seed) c.seed = *o.seed;
    if (o.folds) c.folds = *o.folds;
    c.validate();
    spdlog::info("resolved config: {}", c.to_json().dump());
    return c;
}

corpus::Protocol resolve_protocol(const Options& o) {
    return o.protocol.empty() ? corpus::Protocol::KFold : corpus::parse_protocol(o.protocol);
}

// JSON lines appended as training progresses.
class LogFile {
public:
    explicit LogFile(const fs::path& path) {
        if (path.has_parent_path()) fs::create_directories(path.parent_path());
        out_.open(path, std::ios::binary | std::ios::trunc);
        if (!out_) throw std::runtime_error("cannot write " + path.string());
    }
    void operator()(const nlohmann::json& j) { out_ << j.dump() << '\n' << std::flush; }

private:
    std::ofstream out_;
};

int run_synth(const Options& o) {
    require(o.out, "--out");
    synth::SynthConfig c = o.synth;
    if (o.seed) c.seed = *o.seed;
    c.validate();
    spdlog::info("synth: {} passages x {} subjects, F={}, sigma={}, seed={}", c.passages, c.subjects, c.feature_dim,
                 c.noise_sd, c.seed);
    corpus::save_dataset(o.out, synth::generate_synthetic_dataset(c));
    return kExitOk;
}

int run_validate(const Options& o) {
    require(o.data, "--data");
    const auto errors = corpus::validate_data_dir(o.data);
    for (const auto& e : errors) std::cout << "error: " << e << '\n';
    if (errors.empty()) std::cout << "ok: " << o.data << " passes all checks\n";
    return errors.empty() ? kExitOk : kExitValidation;
}

int run_stats(const Options& o) {
    require(o.data, "--data");
    const TrainConfig config = resolve_config(o);
    const auto dataset = corpus::load_dataset(o.data);
    const auto keys = dataset.keys();
    std::vector<corpus::NamedSplit> splits;
    const auto plans = evaluation::make_plans(keys, config, resolve_protocol(o));
    for (const auto& s : corpus::named_partitions(plans.front())) splits.push_back(s);
    const auto stats = corpus::corpus_stats(dataset.corpus(), splits, config.query_ratio);
    std::cout << corpus::format_stats_table(stats);
    if (!o.out.empty()) write_text(fs::path(o.out) / "stats.json", corpus::stats_to_json(stats).dump(2) + "\n");
    return kExitOk;
}

int run_ict_dump(const Options& o) {
    require(o.data, "--data");
    const TrainConfig config = resolve_config(o);
    const auto dataset = corpus::load_dataset(o.data);
    const auto keys = dataset.keys();
    const auto pairs = ict::build_ict_dataset(dataset, keys, {config.query_ratio, config.p_mask, config.seed}, 0);
    std::string text;
    for (const auto& p : pairs) text += ict::pair_to_json(p).dump() + "\n";
    if (o.out.empty()) std::cout << text;
    else write_text(fs::path(o.out) / "ict_pairs.jsonl", text);
    return kExitOk;
}

int run_train(const Options& o) {
    require(o.data, "--data");
    require(o.out, "--out");
    const TrainConfig config = resolve_config(o);
    const auto protocol = resolve_protocol(o);
    const auto dataset = corpus::load_dataset(o.data);
    const auto keys = dataset.keys();
    const auto plans = evaluation::make_plans(keys, config, protocol);
    fs::create_directories(o.out);
    LogFile log(fs::path(o.out) / evaluation::kTrainLog);
    auto run = evaluation::train_plans(dataset, config, plans, [&](const nlohmann::json& j) { log(j); });
    evaluation::save_run(o.out, o.data, protocol, config, run);
    for (const auto& r : run.results) {
        if (r.diverged) {
            spdlog::error("training diverged ({}); kept the last good checkpoint", r.divergence);
            return kExitRuntime;
        }
    }
    for (std::size_t i = 0; i < run.folds.size(); ++i) {
        spdlog::info("{}: best epoch {} dev MRR {:.4f}", run.folds[i].label, run.results[i].best_epoch,
                     run.results[i].best_dev_mrr);
    }
    return kExitOk;
}

evaluation::LoadedRun load_checked(const Options& o) {
    require(o.checkpoint, "--checkpoint");
    auto run = evaluation::load_run(o.checkpoint, o.data);
    if (!o.protocol.empty() && corpus::parse_protocol(o.protocol) != run.protocol) {
        throw ValidationError("checkpoint was trained with protocol " + corpus::to_string(run.protocol));
    }
    return run;
}

int run_eval(const Options& o, std::vector<std::string> conditions) {
    const auto run = load_checked(o);
    evaluation::EvalOptions options;
    if (!conditions.empty()) options.conditions = std::move(conditions);
    options.k = o.k;
    const auto out = evaluation::evaluate_models(run.dataset, run.folds, run.protocol, options);
    evaluation::write_eval_output(o.out.empty() ? o.checkpoint : o.out, out);
    std::cout << retrieval::format_table(out.report);
    if (out.signal_vs_noise) {
        std::cout << fmt::format("signal - noise MRR: {:.4f} (95% CI {:.4f} .. {:.4f})\n",
                                 out.signal_vs_noise->mean_difference, out.signal_vs_noise->lower,
                                 out.signal_vs_noise->upper);
    }
    return kExitOk;
}

int run_ablate(const Options& o) {
    require(o.data, "--data");
    require(o.out, "--out");
    require(o.axis, "--axis");
    const auto axis = evaluation::parse_axis(o.axis);
    const TrainConfig config = resolve_config(o);
    const auto dataset = corpus::load_dataset(o.data);
    LogFile log(fs::path(o.out) / evaluation::kTrainLog);
    const auto report = evaluation::ablate(dataset, config, axis, resolve_protocol(o), [&](const nlohmann::json& j) { log(j); });
    write_text(fs::path(o.out) / "ablation.json", evaluation::to_json(report).dump(2) + "\n");
    const auto table = evaluation::format_table(report);
    write_text(fs::path(o.out) / "ablation.txt", table);
    std::cout << table;
    return kExitOk;
}

int run_sweep(const Options& o) {
    require(o.data, "--data");
    require(o.out, "--out");
    const TrainConfig config = resolve_config(o);
    const auto dataset = corpus::load_dataset(o.data);
    LogFile log(fs::path(o.out) / evaluation::kTrainLog);
    const auto report = evaluation::sweep_pmask(dataset, config, evaluation::kSweepLevels, resolve_protocol(o),
                                                [&](const nlohmann::json& j) { log(j); });
    write_text(fs::path(o.out) / "sweep.json", evaluation::to_json(report).dump(2) + "\n");
    const auto table = evaluation::format_table(report);
    write_text(fs::path(o.out) / "sweep.txt", table);
    write_text(fs::path(o.out) / "sweep.svg", evaluation::sweep_svg(report));
    std::cout << table;
    return kExitOk;
}

}  // namespace

int dispatch(int argc, const char* const* argv) {
    if (!spdlog::get("bpr")) setup_logging();

    Options o;
    CLI::App app{"bpr: brain-signal passage retrieval"};
    app.require_subcommand(1);
    app.set_help_all_flag("--help-all");

    auto add_seed = [&](CLI::App* c) {
        c->add_option_function<std::uint64_t>("--seed", [&](const std::uint64_t& v) { o.seed = v; }, "Global seed");
    };
    auto add_config = [&](CLI::App* c) { c->add_option("--config", o.config_path, "Config file (key = value lines)")->check(CLI::ExistingFile); };
    auto add_folds = [&](CLI::App* c) {
        c->add_option_function<int>("--folds", [&](const int& v) { o.folds = v; }, "Number of k-fold splits");
    };
    auto add_protocol = [&](CLI::App* c) {
        c->add_option("--protocol", o.protocol, "kfold or loso")->check(CLI::IsMember({"kfold", "loso"}));
    };

    auto* synth = app.add_subcommand("synth", "Generate a synthetic corpus and recordings");
    synth->add_option("--out", o.out, "Output data directory");
    add_seed(synth);
    synth->add_option("--passages", o.synth.passages);
    synth->add_option("--subjects", o.synth.subjects);
    synth->add_option("--vocab", o.synth.vocab_size);
    synth->add_option("--min-length", o.synth.min_length);
    synth->add_option("--max-length", o.synth.max_length);
    synth->add_option("--feature-dim", o.synth.feature_dim);
    synth->add_option("--semantic-dim", o.synth.semantic_dim);
    synth->add_option("--noise-sd", o.synth.noise_sd);
    synth->add_option("--subject-mixing", o.synth.subject_mixing);
    synth->add_option("--topics", o.synth.topics);
    synth->add_option("--topic-weight", o.synth.topic_weight);

    auto* stats = app.add_subcommand("stats", "Corpus and split statistics");
    stats->add_option("--data", o.data, "Data directory");
    stats->add_option("--out", o.out, "Directory for stats.json");
    add_config(stats);
    add_seed(stats);
    add_folds(stats);
    add_protocol(stats);

    auto* dump = app.add_subcommand("ict-dump", "Write the epoch-0 ICT pairs as JSON lines");
    dump->add_option("--data", o.data, "Data directory");
    dump->add_option("--out", o.out, "Directory for ict_pairs.jsonl (default stdout)");
    add_config(dump);
    add_seed(dump);

    auto* train = app.add_subcommand("train", "Train one model per fold");
    train->add_option("--data", o.data, "Data directory");
    train->add_option("--out", o.out, "Checkpoint directory");
    add_config(train);
    add_seed(train);
    add_folds(train);
    add_protocol(train);

    auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint directory");
    eval->add_option("--checkpoint", o.checkpoint, "Checkpoint directory");
    eval->add_option("--data", o.data, "Data directory (default: the one recorded at training)");
    eval->add_option("--out", o.out, "Results directory (default: the checkpoint directory)");
    eval->add_option("--k", o.k, "Ranking depth kept in rankings.jsonl")->check(CLI::PositiveNumber);
    eval->add_option("--conditions", o.conditions, "Subset of conditions")->delimiter(',');
    add_protocol(eval);

    auto* noise = app.add_subcommand("noise-eval", "Compare trained queries against matched noise queries");
    noise->add_option("--checkpoint", o.checkpoint, "Checkpoint directory");
    noise->add_option("--data", o.data, "Data directory (default: the one recorded at training)");
    noise->add_option("--out", o.out, "Results directory (default: the checkpoint directory)");
    noise->add_option("--k", o.k, "Ranking depth kept in rankings.jsonl")->check(CLI::PositiveNumber);
    add_protocol(noise);

    auto* ablate = app.add_subcommand("ablate", "Train and compare the variants of one axis");
    ablate->add_option("--data", o.data, "Data directory");
    ablate->add_option("--out", o.out, "Output directory");
    ablate->add_option("--axis", o.axis, "encoder, negatives, loss or pooling");
    add_config(ablate);
    add_seed(ablate);
    add_folds(ablate);
    add_protocol(ablate);

    auto* sweep = app.add_subcommand("sweep-pmask", "Train at p_mask 0.5, 0.7, 0.9, 1.0 and evaluate at zero overlap");
    sweep->add_option("--data", o.data, "Data directory");
    sweep->add_option("--out", o.out, "Output directory");
    add_config(sweep);
    add_seed(sweep);
    add_folds(sweep);
    add_protocol(sweep);

    auto* validate = app.add_subcommand("validate", "Check a data directory (corpus manifest and recordings)");
    validate->add_option("--data", o.data, "Data directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitValidation;
    }

    try {
        if (*synth) return run_synth(o);
        if (*stats) return run_stats(o);
        if (*dump) return run_ict_dump(o);
        if (*train) return run_train(o);
        if (*eval) return run_eval(o, o.conditions);
        if (*noise) return run_eval(o, {evaluation::kSignal, evaluation::kNoise});
        if (*ablate) return run_ablate(o);
        if (*sweep) return run_sweep(o);
        if (*validate) return run_validate(o);
    } catch (const ValidationError& e) {
        spdlog::error("{}", e.what());
        return kExitValidation;
    } catch (const std::exception& e) {
        spdlog::error("{}", e.what());
        return kExitRuntime;
    }
    return kExitValidation;
}

}  // namespace bpr::cli
