#include "doctest.h"
#include "support.hpp"

#include "bpr/evaluation.hpp"
#include "bpr/synth.hpp"

#include <cmath>

using namespace bpr;
using namespace bpr::evaluation;

namespace {

training::TrainConfig small_config() {
    training::TrainConfig c;
    c.dims = {12, 16, 16, 1, 2, 0.1};
    c.batch_size = 8;
    c.epochs = 3;
    c.warmup_epochs = 1;
    c.patience = 2;
    return c;
}

const corpus::Dataset& data() {
    static const corpus::Dataset d = synth::generate_synthetic_dataset(test::small_synth(60, 3, 8));
    return d;
}

}  // namespace

TEST_SUITE("evaluation") {

TEST_CASE("condition names") {
    CHECK(overlap_condition(0.0) == "overlap-0");
    CHECK(overlap_condition(0.25) == "overlap-0.25");
    CHECK(overlap_condition(1.0) == "overlap-1");
    auto all = default_conditions();
    CHECK(all.size() == 9);
    CHECK_NOTHROW(validate_conditions(all));
    CHECK_THROWS_AS(validate_conditions({"overlap-0.3"}), ValidationError);
    CHECK_THROWS_AS(validate_conditions({}), ValidationError);
}

TEST_CASE("k-fold evaluation covers every condition") {
    auto config = small_config();
    auto keys = data().keys();
    auto plans = make_plans(keys, config, corpus::Protocol::KFold);
    REQUIRE(plans.size() == 5);
    CHECK(plan_label(plans[2]) == "fold_2");
    auto run = train_plans(data(), config, plans);
    REQUIRE(run.folds.size() == 5);
    auto out = evaluate_models(data(), run.folds, corpus::Protocol::KFold, {});
    for (const auto& name : default_conditions()) {
        const auto* c = out.report.find(name);
        REQUIRE(c != nullptr);
        CHECK(c->rows.size() == 5);
        CHECK(c->mean.at(5) <= c->mean.at(10));
        CHECK(c->mean.at(10) <= c->mean.at(20));
        for (const auto& row : c->rows) {
            CHECK(row.metrics.mrr >= 0.0);
            CHECK(row.metrics.mrr <= 1.0);
        }
    }
    // full restoration of the positive is the plain signal condition
    const auto* full = out.report.find("overlap-1");
    const auto* signal = out.report.find(kSignal);
    for (std::size_t i = 0; i < 5; ++i) CHECK(full->rows[i].metrics.mrr == signal->rows[i].metrics.mrr);
    CHECK(out.signal_vs_noise.has_value());
    std::size_t test_queries = 0;
    for (const auto& plan : plans) test_queries += plan.test.size();
    CHECK(out.rankings.size() == default_conditions().size() * test_queries);
    CHECK(out.results["folds"].size() == 5);

    // same inputs, same output
    auto again = evaluate_models(data(), run.folds, corpus::Protocol::KFold, {});
    CHECK(again.results.dump() == out.results.dump());
}

TEST_CASE("leave-one-subject-out rows and pooled mean") {
    auto config = small_config();
    auto keys = data().keys();
    auto plans = make_plans(keys, config, corpus::Protocol::LeaveOneSubjectOut);
    REQUIRE(plans.size() == 3);
    auto run = train_plans(data(), config, plans);
    EvalOptions options;
    options.conditions = {kSignal, kNoise};
    auto out = evaluate_models(data(), run.folds, corpus::Protocol::LeaveOneSubjectOut, options);
    const auto* signal = out.report.find(kSignal);
    REQUIRE(signal->rows.size() == 3);
    double mean = 0.0;
    for (const auto& r : signal->rows) mean += r.metrics.mrr;
    mean /= 3.0;
    double var = 0.0;
    for (const auto& r : signal->rows) var += (r.metrics.mrr - mean) * (r.metrics.mrr - mean);
    CHECK(signal->mean.mrr == doctest::Approx(mean).epsilon(1e-12));
    CHECK(signal->sd.mrr == doctest::Approx(std::sqrt(var / 3.0)).epsilon(1e-12));
    CHECK(signal->rows[0].label == "s0");
    CHECK(signal->rows[2].label == "s2");
}

TEST_CASE("ablation variants") {
    auto base = small_config();
    auto labels = [&](AblationAxis a) {
        std::vector<std::string> out;
        for (const auto& v : ablation_variants(base, a)) out.push_back(v.label);
        return out;
    };
    CHECK(labels(AblationAxis::Loss) == std::vector<std::string>{"lambda=0.1", "lambda=0"});
    CHECK(labels(AblationAxis::Pooling).size() == 3);
    CHECK(labels(AblationAxis::Negatives) == std::vector<std::string>{"subject-aware", "in-batch"});
    CHECK(labels(AblationAxis::Encoder) == std::vector<std::string>{"signal", "text"});
    for (const auto& v : ablation_variants(base, AblationAxis::Loss)) CHECK(v.config.seed == base.seed);
    CHECK(parse_axis("negative-sampling") == AblationAxis::Negatives);
    CHECK_THROWS_AS(parse_axis("depth"), ValidationError);
}

TEST_CASE("negatives ablation audits the sampler") {
    auto base = small_config();
    base.epochs = 2;
    auto report = ablate(data(), base, AblationAxis::Negatives);
    REQUIRE(report.variants.size() == 2);
    CHECK(report.variants[0].unmasked_cross_subject_pairs == 0);
    CHECK(report.variants[1].unmasked_cross_subject_pairs >= 1);
    CHECK(format_table(report).find("in-batch") != std::string::npos);
}

TEST_CASE("p_mask sweep table and chart") {
    auto base = small_config();
    base.epochs = 2;
    auto report = sweep_pmask(data(), base);
    REQUIRE(report.results.size() == 4);
    CHECK(report.levels == std::vector<double>{0.5, 0.7, 0.9, 1.0});
    for (const auto& r : report.results) CHECK(r.rows.size() == 5);
    auto svg = sweep_svg(report);
    CHECK(svg.rfind("<svg", 0) == 0);
    CHECK(svg.find("</svg>") != std::string::npos);
    CHECK(format_table(report).find("0.7") != std::string::npos);
}

TEST_CASE("retrieval quality falls as recording noise grows") {
    const auto config = training::TrainConfig::desk();
    std::vector<double> p5;
    for (double sd : {0.1, 1.0, 10.0}) {
        synth::SynthConfig sc;
        sc.noise_sd = sd;
        auto d = synth::generate_synthetic_dataset(sc);
        auto keys = d.keys();
        auto plans = make_plans(keys, config, corpus::Protocol::KFold);
        plans.resize(1);
        auto run = train_plans(d, config, plans);
        EvalOptions options;
        options.conditions = {kSignal};
        p5.push_back(evaluate_models(d, run.folds, corpus::Protocol::KFold, options).report.find(kSignal)->mean.at(5));
    }
    MESSAGE("P@5 at noise sd 0.1 / 1 / 10: " << p5[0] << " " << p5[1] << " " << p5[2]);
    CHECK(p5[0] >= p5[1]);
    CHECK(p5[1] >= p5[2]);
}

}  // TEST_SUITE
