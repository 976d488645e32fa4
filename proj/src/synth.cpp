#include "bpr/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace bpr::synth {

void SynthConfig::validate() const {
    if (vocab_size < 10) throw ValidationError("vocab_size must be at least 10");
    if (passages < 1) throw ValidationError("passages must be at least 1");
    if (min_length < 2 || max_length < min_length) throw ValidationError("need 2 <= min_length <= max_length");
    if (max_length > 512) throw ValidationError("max_length must not exceed 512");
    if (subjects < 1) throw ValidationError("subjects must be at least 1");
    if (semantic_dim < 1 || feature_dim < semantic_dim) throw ValidationError("need 1 <= semantic_dim <= feature_dim");
    if (!(noise_sd >= 0.0)) throw ValidationError("noise_sd must be non-negative");
    if (!(subject_mixing >= 0.0)) throw ValidationError("subject_mixing must be non-negative");
    if (topics < 0 || topics > vocab_size) throw ValidationError("topics must lie in [0, vocab_size]");
    if (!(topic_weight >= 0.0 && topic_weight <= 1.0)) throw ValidationError("topic_weight must lie in [0, 1]");
}

namespace {

std::string padded(char prefix, int value, int count) {
    const int digits = static_cast<int>(std::to_string(std::max(count - 1, 0)).size());
    std::string s = std::to_string(value);
    return prefix + std::string(static_cast<std::size_t>(std::max(0, digits - static_cast<int>(s.size()))), '0') + s;
}

Matrix gaussian(Index rows, Index cols, double sd, Rng& rng) {
    std::normal_distribution<double> normal(0.0, sd);
    Matrix m(rows, cols);
    for (Index r = 0; r < rows; ++r)
        for (Index c = 0; c < cols; ++c) m(r, c) = normal(rng);
    return m;
}

}  // namespace

SynthModel make_synth_model(const SynthConfig& config) {
    config.validate();
    SynthModel model;
    for (int w = 0; w < config.vocab_size; ++w) model.words.push_back(padded('w', w, config.vocab_size));
    for (int s = 0; s < config.subjects; ++s) model.subject_ids.push_back(padded('s', s, config.subjects));

    const Index m = config.semantic_dim;
    Rng latent_rng = SeedBuilder(config.seed).mix(stream::kSynth).mix("latents").rng();
    model.latents = gaussian(config.vocab_size, m, 1.0, latent_rng);
    Rng base_rng = SeedBuilder(config.seed).mix(stream::kSynth).mix("base").rng();
    model.base = gaussian(config.feature_dim, m, 1.0 / std::sqrt(static_cast<double>(m)), base_rng);
    for (const auto& sid : model.subject_ids) {
        Rng mix_rng = SeedBuilder(config.seed).mix(stream::kSynth).mix("mix").mix(sid).rng();
        const Matrix r = gaussian(m, m, 1.0 / std::sqrt(static_cast<double>(m)), mix_rng);
        model.mixes.push_back(model.base * (Matrix::Identity(m, m) + config.subject_mixing * r));
    }
    return model;
}

corpus::Dataset generate_synthetic_dataset(const SynthConfig& config) {
    const SynthModel model = make_synth_model(config);

    // topic t owns a contiguous block of a seeded vocabulary permutation
    std::vector<std::vector<int>> topic_words;
    if (config.topics > 0) {
        std::vector<int> order(static_cast<std::size_t>(config.vocab_size));
        std::iota(order.begin(), order.end(), 0);
        Rng topic_rng = SeedBuilder(config.seed).mix(stream::kSynth).mix("topics").rng();
        std::shuffle(order.begin(), order.end(), topic_rng);
        topic_words.resize(static_cast<std::size_t>(config.topics));
        for (std::size_t i = 0; i < order.size(); ++i) topic_words[i % topic_words.size()].push_back(order[i]);
    }

    std::vector<corpus::Passage> passages;
    std::vector<std::vector<int>> word_ids;
    for (int p = 0; p < config.passages; ++p) {
        const std::string pid = padded('p', p, config.passages);
        Rng rng = SeedBuilder(config.seed).mix(stream::kSynth).mix("passage").mix(pid).rng();
        const int length = std::uniform_int_distribution<int>(config.min_length, config.max_length)(rng);
        std::uniform_int_distribution<int> any_word(0, config.vocab_size - 1);
        const std::vector<int>* topic = nullptr;
        if (!topic_words.empty()) {
            topic = &topic_words[std::uniform_int_distribution<std::size_t>(0, topic_words.size() - 1)(rng)];
        }
        std::uniform_real_distribution<double> unit(0.0, 1.0);
        std::vector<int> ids;
        corpus::Passage passage;
        passage.passage_id = pid;
        for (int i = 0; i < length; ++i) {
            int w;
            if (topic && unit(rng) < config.topic_weight) {
                w = (*topic)[std::uniform_int_distribution<std::size_t>(0, topic->size() - 1)(rng)];
            } else {
                w = any_word(rng);
            }
            ids.push_back(w);
            passage.tokens.push_back(model.words[static_cast<std::size_t>(w)]);
        }
        for (std::size_t i = 0; i < passage.tokens.size(); ++i) passage.text += (i ? " " : "") + passage.tokens[i];
        passages.push_back(std::move(passage));
        word_ids.push_back(std::move(ids));
    }

    std::vector<corpus::SignalRecording> recordings;
    for (std::size_t p = 0; p < passages.size(); ++p) {
        for (std::size_t s = 0; s < model.subject_ids.size(); ++s) {
            const auto& sid = model.subject_ids[s];
            Rng noise_rng = SeedBuilder(config.seed).mix(stream::kSynth).mix("noise").mix(passages[p].passage_id).mix(sid).rng();
            std::normal_distribution<double> noise(0.0, 1.0);
            corpus::SignalRecording rec;
            rec.passage_id = passages[p].passage_id;
            rec.subject_id = sid;
            rec.features.resize(static_cast<Index>(word_ids[p].size()), config.feature_dim);
            for (std::size_t i = 0; i < word_ids[p].size(); ++i) {
                const Eigen::VectorXd clean = model.mixes[s] * model.latents.row(word_ids[p][i]).transpose();
                for (Index c = 0; c < config.feature_dim; ++c) {
                    const double v = clean(c) + (config.noise_sd > 0.0 ? config.noise_sd * noise(noise_rng) : 0.0);
                    rec.features(static_cast<Index>(i), c) = static_cast<float>(v);
                }
            }
            recordings.push_back(std::move(rec));
        }
    }
    return corpus::Dataset(corpus::Corpus(std::move(passages)), std::move(recordings));
}

}  // namespace bpr::synth
