#pragma once
// Training configuration, presets and the `key = value` config file format.

#include "bpr/encoder.hpp"

#include "json.hpp"

#include <cstdint>
#include <iosfwd>
#include <string>
#include <string_view>

namespace bpr::training {

enum class NegativeSampling { SubjectAware, InBatch };
enum class QueryEncoderType { Signal, Text };

std::string to_string(NegativeSampling n);
std::string to_string(QueryEncoderType q);

struct TrainConfig {
    encoder::EncoderDims dims;
    nn::Pooling pooling = nn::Pooling::Cls;

    int batch_size = 16;
    double learning_rate = 1e-3;
    double weight_decay = 0.1;
    int warmup_epochs = 3;
    int epochs = 60;
    int patience = 5;
    double clip_norm = 1.0;
    double temperature = 0.07;
    double uniformity_weight = 0.1;
    bool uniformity_both = false;  // also spread passage embeddings

    double p_mask = 0.9;
    double query_ratio = 0.3;
    NegativeSampling negatives = NegativeSampling::SubjectAware;
    QueryEncoderType query_encoder = QueryEncoderType::Signal;

    std::uint64_t seed = 0;
    std::uint64_t provider_seed = 1234;
    int provider_hash_bits = 64;
    std::string provider_file;  // empty: hashed provider

    int folds = 5;

    // Desk-scale defaults for synthetic data.
    static TrainConfig desk();
    // Hyperparameters of the published ZuCo setup.
    static TrainConfig zuco();
    static TrainConfig preset(std::string_view name);

    void validate() const;
    // Applies one `key = value` setting; unknown keys throw ValidationError.
    void set(std::string_view key, std::string_view value);

    nlohmann::json to_json() const;
    static TrainConfig from_json(const nlohmann::json& j);
};

// Lines of `key = value`; '#' starts a comment. A `preset` key, if present,
// must come before any other key.
TrainConfig parse_config(std::istream& in);
TrainConfig read_config_file(const std::string& path);

}  // namespace bpr::training
