#pragma once
// Synthetic paired corpus: word sequences plus per-subject signal recordings
// whose rows are a subject-specific linear image of each word's latent vector.

#include "bpr/corpus.hpp"
#include "bpr/rng.hpp"

#include <cstdint>

namespace bpr::synth {

struct SynthConfig {
    int vocab_size = 50;
    int passages = 200;
    int min_length = 8;
    int max_length = 20;
    int subjects = 3;
    Index feature_dim = 64;
    Index semantic_dim = 8;
    double noise_sd = 0.5;
    double subject_mixing = 0.5;  // alpha in M_s = A (I + alpha R_s)
    // Each passage draws a topic; a word comes from that topic's share of the
    // vocabulary with probability topic_weight, else from the whole vocabulary.
    // topics = 0 draws every word uniformly.
    int topics = 10;
    double topic_weight = 0.7;
    std::uint64_t seed = 0;

    void validate() const;
};

// Latent parameters, exposed for tests.
struct SynthModel {
    std::vector<std::string> words;
    Matrix latents;               // V x m
    Matrix base;                  // F x m
    std::vector<Matrix> mixes;    // per subject, F x m
    std::vector<std::string> subject_ids;
};

SynthModel make_synth_model(const SynthConfig& config);
corpus::Dataset generate_synthetic_dataset(const SynthConfig& config);

}  // namespace bpr::synth
