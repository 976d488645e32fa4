#include "bpr/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

namespace bpr::training {

std::string to_string(NegativeSampling n) { return n == NegativeSampling::SubjectAware ? "subject-aware" : "in-batch"; }
std::string to_string(QueryEncoderType q) { return q == QueryEncoderType::Signal ? "signal" : "text"; }

TrainConfig TrainConfig::desk() { return TrainConfig{}; }

TrainConfig TrainConfig::zuco() {
    TrainConfig c;
    c.dims = {840, 512, 768, 3, 8, 0.1};
    c.batch_size = 128;
    c.learning_rate = 1e-6;
    c.weight_decay = 0.1;
    c.warmup_epochs = 10;
    c.epochs = 100;
    c.patience = 5;
    c.clip_norm = 1.0;
    c.temperature = 0.07;
    c.uniformity_weight = 0.1;
    c.p_mask = 0.9;
    return c;
}

TrainConfig TrainConfig::preset(std::string_view name) {
    if (name == "desk") return desk();
    if (name == "zuco") return zuco();
    throw ValidationError("unknown preset: " + std::string(name));
}

void TrainConfig::validate() const {
    dims.validate();
    if (batch_size < 2) throw ValidationError("batch_size must be at least 2");
    if (!(temperature > 0.0)) throw ValidationError("temperature must be positive");
    if (!(uniformity_weight >= 0.0)) throw ValidationError("uniformity_weight must be non-negative");
    if (!(learning_rate >= 0.0) || !(weight_decay >= 0.0)) throw ValidationError("learning_rate and weight_decay must be non-negative");
    if (epochs < 1 || warmup_epochs < 0 || warmup_epochs > epochs) throw ValidationError("need 0 <= warmup_epochs <= epochs, epochs >= 1");
    if (patience < 1) throw ValidationError("patience must be at least 1");
    if (!(clip_norm > 0.0)) throw ValidationError("clip_norm must be positive");
    if (!(p_mask >= 0.0 && p_mask <= 1.0)) throw ValidationError("p_mask must lie in [0, 1]");
    if (!(query_ratio > 0.0 && query_ratio < 1.0)) throw ValidationError("query_ratio must lie in (0, 1)");
    if (folds < 2) throw ValidationError("folds must be at least 2");
    if (provider_hash_bits < 1 || provider_hash_bits > 64) throw ValidationError("provider_hash_bits must be in [1, 64]");
}

namespace {

template <class T>
T parse_number(std::string_view key, std::string_view v) {
    T out{};
    const auto* end = v.data() + v.size();
    auto [ptr, ec] = std::from_chars(v.data(), end, out);
    if (ec != std::errc() || ptr != end) {
        throw ValidationError("config key '" + std::string(key) + "': cannot parse '" + std::string(v) + "'");
    }
    return out;
}

bool parse_bool(std::string_view key, std::string_view v) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw ValidationError("config key '" + std::string(key) + "': expected true/false");
}

std::string_view trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

}  // namespace

void TrainConfig::set(std::string_view key, std::string_view v) {
    if (key == "feature_dim") dims.feature_dim = parse_number<Index>(key, v);
    else if (key == "model_dim") dims.model_dim = parse_number<Index>(key, v);
    else if (key == "out_dim") dims.out_dim = parse_number<Index>(key, v);
    else if (key == "layers") dims.layers = parse_number<Index>(key, v);
    else if (key == "heads") dims.heads = parse_number<Index>(key, v);
    else if (key == "dropout") dims.dropout = parse_number<double>(key, v);
    else if (key == "pooling") pooling = nn::parse_pooling(v);
    else if (key == "batch_size") batch_size = parse_number<int>(key, v);
    else if (key == "learning_rate") learning_rate = parse_number<double>(key, v);
    else if (key == "weight_decay") weight_decay = parse_number<double>(key, v);
    else if (key == "warmup_epochs") warmup_epochs = parse_number<int>(key, v);
    else if (key == "epochs") epochs = parse_number<int>(key, v);
    else if (key == "patience") patience = parse_number<int>(key, v);
    else if (key == "clip_norm") clip_norm = parse_number<double>(key, v);
    else if (key == "temperature") temperature = parse_number<double>(key, v);
    else if (key == "uniformity_weight") uniformity_weight = parse_number<double>(key, v);
    else if (key == "uniformity_both") uniformity_both = parse_bool(key, v);
    else if (key == "p_mask") p_mask = parse_number<double>(key, v);
    else if (key == "query_ratio") query_ratio = parse_number<double>(key, v);
    else if (key == "negatives") {
        if (v == "subject-aware") negatives = NegativeSampling::SubjectAware;
        else if (v == "in-batch") negatives = NegativeSampling::InBatch;
        else throw ValidationError("negatives must be subject-aware or in-batch");
    } else if (key == "query_encoder") {
        if (v == "signal") query_encoder = QueryEncoderType::Signal;
        else if (v == "text") query_encoder = QueryEncoderType::Text;
        else throw ValidationError("query_encoder must be signal or text");
    } else if (key == "seed") seed = parse_number<std::uint64_t>(key, v);
    else if (key == "provider_seed") provider_seed = parse_number<std::uint64_t>(key, v);
    else if (key == "provider_hash_bits") provider_hash_bits = parse_number<int>(key, v);
    else if (key == "provider_file") provider_file = std::string(v);
    else if (key == "folds") folds = parse_number<int>(key, v);
    else throw ValidationError("unknown config key: " + std::string(key));
}

nlohmann::json TrainConfig::to_json() const {
    return {{"feature_dim", dims.feature_dim},
            {"model_dim", dims.model_dim},
            {"out_dim", dims.out_dim},
            {"layers", dims.layers},
            {"heads", dims.heads},
            {"dropout", dims.dropout},
            {"pooling", nn::to_string(pooling)},
            {"batch_size", batch_size},
            {"learning_rate", learning_rate},
            {"weight_decay", weight_decay},
            {"warmup_epochs", warmup_epochs},
            {"epochs", epochs},
            {"patience", patience},
            {"clip_norm", clip_norm},
            {"temperature", temperature},
            {"uniformity_weight", uniformity_weight},
            {"uniformity_both", uniformity_both},
            {"p_mask", p_mask},
            {"query_ratio", query_ratio},
            {"negatives", to_string(negatives)},
            {"query_encoder", to_string(query_encoder)},
            {"seed", seed},
            {"provider_seed", provider_seed},
            {"provider_hash_bits", provider_hash_bits},
            {"provider_file", provider_file},
            {"folds", folds}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
    TrainConfig c;
    for (const auto& [key, value] : j.items()) {
        // numbers go through their decimal form so a JSON echo reproduces the config exactly
        if (value.is_string()) c.set(key, value.get<std::string>());
        else if (value.is_boolean()) c.set(key, value.get<bool>() ? "true" : "false");
        else if (value.is_number_unsigned()) c.set(key, std::to_string(value.get<std::uint64_t>()));
        else if (value.is_number_integer()) c.set(key, std::to_string(value.get<std::int64_t>()));
        else if (value.is_number_float()) c.set(key, value.dump());
        else throw ValidationError("config JSON: unsupported value for " + key);
    }
    c.validate();
    return c;
}

TrainConfig parse_config(std::istream& in) {
    TrainConfig c;
    std::string line;
    int line_no = 0;
    bool seen_other = false;
    while (std::getline(in, line)) {
        ++line_no;
        std::string_view view = line;
        if (const auto hash = view.find('#'); hash != std::string_view::npos) view = view.substr(0, hash);
        view = trim(view);
        if (view.empty()) continue;
        const auto eq = view.find('=');
        if (eq == std::string_view::npos) {
            throw ValidationError("config line " + std::to_string(line_no) + ": expected key = value");
        }
        const auto key = trim(view.substr(0, eq));
        const auto value = trim(view.substr(eq + 1));
        try {
            if (key == "preset") {
                if (seen_other) throw ValidationError("preset must precede other keys");
                c = TrainConfig::preset(value);
            } else {
                c.set(key, value);
            }
        } catch (const ValidationError& e) {
            throw ValidationError("config line " + std::to_string(line_no) + ": " + e.what());
        }
        seen_other = true;
    }
    c.validate();
    return c;
}

TrainConfig read_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open config file: " + path);
    return parse_config(in);
}

}  // namespace bpr::training
