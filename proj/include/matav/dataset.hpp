#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace matav {

struct EmotionLabelSet {
    std::vector<std::string> names;

    std::size_t size() const { return names.size(); }
    void validate() const;  // unique names, size >= 2
};

// Feature values are stored as f32, matching the on-disk format bit for bit.
struct UtteranceFeatures {
    std::vector<float> t;
    std::vector<float> a;
    std::vector<float> v;

    bool operator==(const UtteranceFeatures&) const = default;
};

struct Dialogue {
    std::vector<UtteranceFeatures> utterances;
    std::vector<int> labels;

    std::size_t length() const { return utterances.size(); }
    bool operator==(const Dialogue&) const = default;
};

struct DialogueSet {
    EmotionLabelSet label_set;
    std::vector<Dialogue> dialogues;
    std::string split = "train";
    std::size_t t_dim = 256;
    std::size_t a_dim = 1024;
    std::size_t v_dim = 1000;

    std::size_t total_utterances() const;
    void validate() const;
    bool operator==(const DialogueSet&) const;
};

struct SynthConfig {
    uint64_t seed = 0;
    std::size_t n_dialogues = 8;
    std::size_t min_utterances = 4;
    std::size_t max_utterances = 12;
    std::size_t n_classes = 6;
    double cross_modal_correlation = 0.5;  // rho
    double noise_sigma = 1.0;
    double emotion_shift_prob = 0.3;
    std::size_t t_dim = 256;
    std::size_t a_dim = 1024;
    std::size_t v_dim = 1000;
    std::size_t latent_dim = 16;
    std::string split = "train";

    void validate() const;
};

// Binary feature file plus sibling <path>.manifest.json. Roundtrips are
// bit-exact: read_feature_file(write_feature_file(s)) == s.
void write_feature_file(const DialogueSet& set, const std::string& path);
DialogueSet read_feature_file(const std::string& path);

std::string manifest_path_for(const std::string& feature_path);

// Deterministic synthetic conversations standing in for pretrained encoders.
// One latent unit vector per class; features are rho * (per-modality linear
// map of the latent) + sigma * gaussian noise; consecutive utterances keep
// their label with probability 1 - emotion_shift_prob. Draw order is fixed
// by the xoshiro256++/Box-Muller stream in rng.hpp.
DialogueSet generate_synthetic(const SynthConfig& cfg);

// Diagnostic used by tests and the generator's correlation contract:
// mean cosine between M_t^T t and M_a^T a over matched utterance pairs.
double mean_matched_projection_cosine(const SynthConfig& cfg, std::size_t n_pairs);

}  // namespace matav
