#include "doctest.h"
#include "support.hpp"

#include "bpr/model.hpp"
#include "bpr/synth.hpp"
#include "bpr/training.hpp"

#include <cmath>
#include <cstring>
#include <set>

using namespace bpr;
using namespace bpr::training;

namespace {

std::vector<RecordKey> grid(int passages, int subjects) {
    std::vector<RecordKey> keys;
    for (int p = 0; p < passages; ++p)
        for (int s = 0; s < subjects; ++s) keys.push_back({"p" + std::to_string(p), "s" + std::to_string(s)});
    return keys;
}

TrainConfig small_config() {
    TrainConfig c;
    c.dims = {12, 16, 16, 1, 2, 0.1};
    c.batch_size = 8;
    c.epochs = 6;
    c.warmup_epochs = 1;
    c.patience = 3;
    return c;
}

}  // namespace

TEST_SUITE("training") {

TEST_CASE("exclusion index examples") {
    std::vector<RecordKey> keys{{"p1", "s1"}, {"p1", "s2"}, {"p2", "s1"}};
    ExclusionIndex index(keys);
    CHECK(index.excluded("p1", "s1") == std::vector<RecordKey>{{"p1", "s2"}});
    CHECK(index.excluded("p2", "s1").empty());
    CHECK(index.is_excluded({"p1", "s1"}, {"p1", "s2"}));
    CHECK(!index.is_excluded({"p1", "s1"}, {"p1", "s1"}));
    CHECK(!index.is_excluded({"p1", "s1"}, {"p2", "s1"}));

    auto all = grid(100, 3);
    ExclusionIndex big(all);
    for (const auto& k : all) CHECK(big.excluded(k.passage_id, k.subject_id).size() == 2);

    std::vector<RecordKey> dup{{"p", "s"}, {"p", "s"}};
    CHECK_THROWS_AS(ExclusionIndex{dup}, ValidationError);
}

TEST_CASE("mask rule") {
    std::vector<RecordKey> keys{{"p1", "s1"}, {"p1", "s2"}, {"p2", "s1"}, {"p3", "s3"}};
    ExclusionIndex index(keys);
    auto m = build_mask(keys, NegativeSampling::SubjectAware, index);
    CHECK(!m(0, 1));
    CHECK(!m(1, 0));
    for (Index i = 0; i < 4; ++i)
        for (Index j = 0; j < 4; ++j)
            if (!((i == 0 && j == 1) || (i == 1 && j == 0))) CHECK(m(i, j));
    auto in_batch = build_mask(keys, NegativeSampling::InBatch, index);
    CHECK(in_batch.all());
}

TEST_CASE("sampler audit over 1000 batches") {
    auto keys = grid(30, 3);
    ExclusionIndex index(keys);
    Rng rng(5);
    int masked_pairs = 0;
    for (int b = 0; b < 1000; ++b) {
        auto batch = sample_batch(keys, 16, NegativeSampling::SubjectAware, index, rng);
        REQUIRE(batch.size() == 16);
        std::set<std::size_t> distinct(batch.items.begin(), batch.items.end());
        CHECK(distinct.size() == 16);
        for (std::size_t i = 0; i < 16; ++i) {
            CHECK(batch.keys[i] == keys[batch.items[i]]);
            for (std::size_t j = 0; j < 16; ++j) {
                if (i == j) continue;
                const bool same_passage = batch.keys[i].passage_id == batch.keys[j].passage_id;
                const bool cross = same_passage && batch.keys[i].subject_id != batch.keys[j].subject_id;
                const bool masked = !batch.mask(static_cast<Index>(i), static_cast<Index>(j));
                if (masked) {
                    CHECK(same_passage);
                    ++masked_pairs;
                }
                CHECK(masked == cross);
            }
        }
        CHECK(batch.unmasked_cross_subject_pairs() == 0);
    }
    CHECK(masked_pairs > 0);

    Rng r1(9), r2(9);
    auto a = sample_batch(keys, 8, NegativeSampling::SubjectAware, index, r1);
    auto b = sample_batch(keys, 8, NegativeSampling::SubjectAware, index, r2);
    CHECK(a.items == b.items);
    CHECK_THROWS_AS(sample_batch(keys, 91, NegativeSampling::SubjectAware, index, r1), ValidationError);
}

TEST_CASE("batch of distinct passages is unmasked") {
    std::vector<RecordKey> keys{{"a", "s1"}, {"b", "s2"}, {"c", "s1"}};
    ExclusionIndex index(grid(3, 2));
    CHECK(build_mask(keys, NegativeSampling::SubjectAware, index).all());
}

TEST_CASE("epoch batches cover every item once") {
    auto keys = grid(21, 3);
    ExclusionIndex index(keys);
    auto batches = epoch_batches(keys, 16, NegativeSampling::InBatch, index, 3, 1);
    std::multiset<std::size_t> seen;
    int cross = 0;
    for (const auto& b : batches) {
        seen.insert(b.items.begin(), b.items.end());
        cross += b.unmasked_cross_subject_pairs();
    }
    CHECK(seen.size() == keys.size());
    CHECK(std::set<std::size_t>(seen.begin(), seen.end()).size() == keys.size());
    CHECK(cross >= 1);
    auto again = epoch_batches(keys, 16, NegativeSampling::InBatch, index, 3, 1);
    auto other = epoch_batches(keys, 16, NegativeSampling::InBatch, index, 3, 2);
    CHECK(again[0].items == batches[0].items);
    CHECK(other[0].items != batches[0].items);
}

TEST_CASE("gradient clipping") {
    Matrix a(1, 2), b(2, 1);
    a << 3, 0;
    b << 0, 4;
    nn::TensorList grads{{"a", &a, true}, {"b", &b, false}};
    CHECK(clip_grad_norm(grads, 10.0) == doctest::Approx(5.0));
    CHECK(a(0, 0) == 3.0);
    CHECK(clip_grad_norm(grads, 1.0) == doctest::Approx(5.0));
    CHECK(std::sqrt(a.squaredNorm() + b.squaredNorm()) == doctest::Approx(1.0).epsilon(1e-6));
    a(0, 0) = std::nan("");
    CHECK_THROWS_AS(clip_grad_norm(grads, 1.0), NumericError);
}

TEST_CASE("AdamW") {
    SUBCASE("first step moves by about lr") {
        for (double g : {1e-3, 0.5, -7.0}) {
            Matrix p = Matrix::Constant(1, 1, 2.0), grad = Matrix::Constant(1, 1, g);
            nn::TensorList params{{"p", &p, true}}, grads{{"p", &grad, true}};
            AdamW opt(params, 0.0);
            opt.step(params, grads, 0.01);
            // m_hat = g, v_hat = g^2
            const double expected = 2.0 - 0.01 * g / (std::abs(g) + AdamW::kEps);
            CHECK(std::abs(p(0, 0) - expected) < 1e-15);
            CHECK(std::abs(std::abs(p(0, 0) - 2.0) - 0.01) < 1e-7);
        }
    }
    SUBCASE("zero gradient without decay is a fixed point") {
        Matrix p = Matrix::Constant(2, 2, 1.5), grad = Matrix::Zero(2, 2);
        nn::TensorList params{{"p", &p, true}}, grads{{"p", &grad, true}};
        AdamW opt(params, 0.0);
        for (int i = 0; i < 5; ++i) opt.step(params, grads, 0.1);
        CHECK(p == Matrix::Constant(2, 2, 1.5));
        CHECK(opt.steps() == 5);
    }
    SUBCASE("lr 0 is the identity") {
        Matrix p = Matrix::Random(3, 3), grad = Matrix::Random(3, 3);
        const Matrix before = p;
        nn::TensorList params{{"p", &p, true}}, grads{{"p", &grad, true}};
        AdamW opt(params, 0.1);
        opt.step(params, grads, 0.0);
        CHECK(p == before);
    }
    SUBCASE("decay only touches decayed tensors") {
        Matrix w = Matrix::Constant(1, 1, 1.0), b = Matrix::Constant(1, 1, 1.0);
        Matrix gw = Matrix::Zero(1, 1), gb = Matrix::Zero(1, 1);
        nn::TensorList params{{"w", &w, true}, {"b", &b, false}}, grads{{"w", &gw, true}, {"b", &gb, false}};
        AdamW opt(params, 0.1);
        opt.step(params, grads, 0.5);
        CHECK(w(0, 0) == doctest::Approx(0.95).epsilon(1e-15));
        CHECK(b(0, 0) == 1.0);
    }
}

TEST_CASE("learning-rate schedule") {
    CHECK(scheduled_lr(1.0, 5.0, 10, 20) == doctest::Approx(0.5));
    CHECK(scheduled_lr(2.0, 10.0, 10, 20) == doctest::Approx(2.0));
    CHECK(scheduled_lr(2.0, 15.0, 10, 20) == doctest::Approx(1.0));
    CHECK(scheduled_lr(2.0, 20.0, 10, 20) == doctest::Approx(0.0));
    CHECK(scheduled_lr(1.0, 0.5, 0, 4) == doctest::Approx(0.875));
}

TEST_CASE("early stopping") {
    EarlyStopping s(5);
    int stopped_at = -1;
    for (int epoch = 0; epoch <= 30; ++epoch) {
        const double mrr = epoch <= 7 ? 0.1 * epoch : 0.7 - 0.01 * (epoch - 7);
        s.update(epoch, mrr);
        if (s.should_stop()) {
            stopped_at = epoch;
            break;
        }
    }
    CHECK(stopped_at == 12);
    CHECK(s.best_epoch() == 7);

    EarlyStopping ties(2);
    CHECK(ties.update(0, 0.5));
    CHECK(!ties.update(1, 0.5));
    CHECK(!ties.update(2, 0.5));
    CHECK(ties.should_stop());
    CHECK(ties.best_epoch() == 0);
}

TEST_CASE("gradient check") {
    auto signal = grad_check(GradComponent::SignalEncoder, 1);
    auto adapter = grad_check(GradComponent::Adapter, 1);
    CHECK(signal.max_relative < 1e-4);
    CHECK(adapter.max_relative < 1e-4);
    bool has_projection = false;
    for (const auto& t : signal.tensors) {
        has_projection = has_projection || t.name == "query.input.weight";
        CHECK(t.name.rfind("query.", 0) == 0);
        CHECK(t.name.find("temperature") == std::string::npos);
    }
    CHECK(has_projection);
    for (const auto& t : adapter.tensors) CHECK(t.name.rfind("passage.", 0) == 0);

    TrainConfig c;
    c.dims = {12, 16, 16, 2, 2, 0.1};
    model::DualEncoder m(c);
    CHECK(signal.tensors.size() + adapter.tensors.size() == m.tensors().size());
    CHECK(parse_grad_component("adapter") == GradComponent::Adapter);
    CHECK_THROWS_AS(parse_grad_component("tau"), ValidationError);
}

TEST_CASE("training is deterministic, improves dev MRR and leaves the provider alone") {
    auto data = synth::generate_synthetic_dataset(test::small_synth(60, 2, 3));
    auto keys = data.keys();
    auto plan = corpus::make_splits(keys, 5, {}, 0)[0];
    auto config = small_config();
    auto provider = model::make_provider(config);
    auto* hashed = dynamic_cast<const encoder::HashedTextProvider*>(provider.get());
    REQUIRE(hashed != nullptr);
    std::vector<std::string> probe{"w00", "w01", "w02"};
    const Matrix before = provider->embed({"p", probe, {}});
    auto mixing = hashed->mixing_layer();
    nn::TensorList frozen_before;
    mixing.collect("", frozen_before);

    std::vector<nlohmann::json> streamed;
    auto a = train(data, plan.train, plan.dev, config, *provider, [&](const nlohmann::json& r) { streamed.push_back(r); });
    auto b = train(data, plan.train, plan.dev, config, *provider);

    const Matrix after = provider->embed({"p", probe, {}});
    CHECK(std::memcmp(before.data(), after.data(), sizeof(double) * before.size()) == 0);
    auto mixing_after = hashed->mixing_layer();
    nn::TensorList frozen_after;
    mixing_after.collect("", frozen_after);
    for (std::size_t i = 0; i < frozen_before.size(); ++i) CHECK(*frozen_before[i].tensor == *frozen_after[i].tensor);

    REQUIRE(a.log.size() == b.log.size());
    CHECK(streamed.size() == a.log.size());
    for (std::size_t i = 0; i < a.log.size(); ++i) {
        for (const char* key : {"loss", "dev_mrr", "dev_p@5", "grad_norm", "lr"}) {
            if (!a.log[i].contains(key)) continue;
            CHECK(std::abs(a.log[i][key].get<double>() - b.log[i][key].get<double>()) <= 1e-12);
        }
    }
    CHECK(a.log[0]["epoch"] == 0);
    CHECK(a.best_dev_mrr > a.log[0]["dev_mrr"].get<double>());
    CHECK(!a.diverged);
    CHECK(a.log[1].contains("wall_time_s"));
    CHECK(a.log[1]["unmasked_cross_subject_pairs"] == 0);
}

TEST_CASE("training input errors") {
    auto data = synth::generate_synthetic_dataset(test::small_synth(20, 2, 3));
    auto keys = data.keys();
    auto config = small_config();
    auto provider = model::make_provider(config);
    std::vector<RecordKey> one{keys[0]};
    CHECK_THROWS_AS(train(data, keys, {}, config, *provider), ValidationError);
    CHECK_THROWS_AS(train(data, one, keys, config, *provider), ValidationError);
    config.dims.feature_dim = 13;
    CHECK_THROWS_AS(train(data, keys, keys, config, *provider), ValidationError);
}

}  // TEST_SUITE
