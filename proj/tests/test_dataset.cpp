#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>

#include <json.hpp>

#include "matav/dataset.hpp"

using namespace matav;
namespace fs = std::filesystem;

namespace {

std::string tmp_path(const std::string& name) {
    return (fs::temp_directory_path() / name).string();
}

DialogueSet tiny_set(std::size_t td, std::size_t ad, std::size_t vd,
                     const std::vector<std::size_t>& lengths) {
    DialogueSet s;
    s.label_set.names = {"neutral", "happy", "sad"};
    s.t_dim = td;
    s.a_dim = ad;
    s.v_dim = vd;
    float x = 0.25f;
    for (std::size_t len : lengths) {
        Dialogue d;
        for (std::size_t i = 0; i < len; ++i) {
            UtteranceFeatures u;
            u.t.assign(td, x);
            u.a.assign(ad, -x);
            u.v.assign(vd, 2 * x);
            x += 0.5f;
            d.utterances.push_back(std::move(u));
            d.labels.push_back(static_cast<int>(i % 3));
        }
        s.dialogues.push_back(std::move(d));
    }
    return s;
}

}  // namespace

TEST_CASE("zero feature single utterance file layout") {
    DialogueSet s = tiny_set(256, 1024, 1000, {1});
    for (auto& f : s.dialogues[0].utterances[0].t) f = 0.0f;
    for (auto& f : s.dialogues[0].utterances[0].a) f = 0.0f;
    for (auto& f : s.dialogues[0].utterances[0].v) f = 0.0f;
    const std::string path = tmp_path("zero.mtav");
    write_feature_file(s, path);
    // 24-byte header then 2280 zero f32 values.
    CHECK(fs::file_size(path) == 24 + 2280 * 4);
    std::ifstream is(path, std::ios::binary);
    char magic[4];
    is.read(magic, 4);
    CHECK(std::string(magic, 4) == "MTAV");
    is.seekg(24);
    for (int i = 0; i < 2280; ++i) {
        float f = 1.0f;
        is.read(reinterpret_cast<char*>(&f), 4);
        CHECK(f == 0.0f);
    }
    CHECK(read_feature_file(path) == s);
}

TEST_CASE("roundtrip identity for generated sets") {
    SynthConfig cfg;
    cfg.seed = 11;
    cfg.n_dialogues = 5;
    cfg.t_dim = 8;
    cfg.a_dim = 6;
    cfg.v_dim = 4;
    DialogueSet s = generate_synthetic(cfg);
    const std::string path = tmp_path("roundtrip.mtav");
    write_feature_file(s, path);
    CHECK(read_feature_file(path) == s);
}

TEST_CASE("manifest records lengths and labels") {
    DialogueSet s = tiny_set(256, 1024, 1000, {2, 3, 4});
    const std::string path = tmp_path("manifest.mtav");
    write_feature_file(s, path);
    std::ifstream ms(manifest_path_for(path));
    nlohmann::json m = nlohmann::json::parse(ms);
    CHECK(m.at("dialogue_lengths") == std::vector<std::size_t>{2, 3, 4});
    CHECK(m.at("utterance_labels").size() == 9);
    CHECK(m.at("labels") == std::vector<std::string>{"neutral", "happy", "sad"});
    CHECK(m.at("split") == "train");
    CHECK(s.total_utterances() == 9);
}

TEST_CASE("truncated payload raises") {
    DialogueSet s = tiny_set(4, 3, 2, {10});
    const std::string path = tmp_path("trunc.mtav");
    write_feature_file(s, path);
    // Drop the last utterance's worth of floats: header claims 10, payload has 9.
    fs::resize_file(path, 24 + 9 * (4 + 3 + 2) * 4);
    CHECK_THROWS_WITH_AS(read_feature_file(path), "feature file: truncated payload",
                         std::runtime_error);
}

TEST_CASE("bad magic raises") {
    const std::string path = tmp_path("magic.mtav");
    {
        DialogueSet s = tiny_set(2, 2, 2, {1});
        write_feature_file(s, path);
        std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
        f.write("NOPE", 4);
    }
    CHECK_THROWS_WITH_AS(read_feature_file(path), "feature file: bad magic", std::runtime_error);
}

TEST_CASE("out of range manifest label raises") {
    DialogueSet s = tiny_set(2, 2, 2, {2});
    const std::string path = tmp_path("badlabel.mtav");
    write_feature_file(s, path);
    {
        std::ifstream ms(manifest_path_for(path));
        nlohmann::json m = nlohmann::json::parse(ms);
        m["utterance_labels"][0] = 3;  // == n_classes
        std::ofstream os(manifest_path_for(path));
        os << m.dump();
    }
    CHECK_THROWS(read_feature_file(path));
}

TEST_CASE("validate rejects malformed sets") {
    DialogueSet s = tiny_set(2, 2, 2, {2});
    s.dialogues[0].labels[1] = 7;
    CHECK_THROWS(s.validate());
    DialogueSet empty;
    empty.label_set.names = {"a", "b"};
    CHECK_THROWS(empty.validate());
}

TEST_CASE("generator is deterministic") {
    SynthConfig cfg;
    cfg.seed = 99;
    cfg.n_dialogues = 6;
    cfg.t_dim = 10;
    cfg.a_dim = 9;
    cfg.v_dim = 8;
    CHECK(generate_synthetic(cfg) == generate_synthetic(cfg));

    SynthConfig other = cfg;
    other.seed = 100;
    CHECK_FALSE(generate_synthetic(cfg) == generate_synthetic(other));
}

TEST_CASE("gen files are byte identical for a fixed seed") {
    SynthConfig cfg;
    cfg.seed = 7;
    cfg.n_dialogues = 3;
    cfg.t_dim = 6;
    cfg.a_dim = 5;
    cfg.v_dim = 4;
    const std::string p1 = tmp_path("det1.mtav");
    const std::string p2 = tmp_path("det2.mtav");
    write_feature_file(generate_synthetic(cfg), p1);
    write_feature_file(generate_synthetic(cfg), p2);
    std::ifstream f1(p1, std::ios::binary), f2(p2, std::ios::binary);
    std::string b1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
    std::string b2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
    CHECK(b1 == b2);
}

TEST_CASE("rho controls matched-pair projection cosine") {
    SynthConfig cfg;
    cfg.seed = 21;
    cfg.t_dim = 32;
    cfg.a_dim = 32;
    cfg.v_dim = 32;
    cfg.cross_modal_correlation = 0.0;
    cfg.noise_sigma = 1.0;
    // Monte-Carlo oracle: with rho = 0 the modalities share nothing, so the
    // mean cosine over 10k matched pairs sits near zero.
    CHECK(std::fabs(mean_matched_projection_cosine(cfg, 10000)) < 0.05);

    cfg.cross_modal_correlation = 0.9;
    cfg.noise_sigma = 0.1;
    CHECK(mean_matched_projection_cosine(cfg, 10000) > 0.5);
}

TEST_CASE("shift probability zero freezes dialogue labels") {
    SynthConfig cfg;
    cfg.seed = 13;
    cfg.n_dialogues = 12;
    cfg.emotion_shift_prob = 0.0;
    cfg.t_dim = 4;
    cfg.a_dim = 4;
    cfg.v_dim = 4;
    DialogueSet s = generate_synthetic(cfg);
    for (const auto& d : s.dialogues)
        for (int lab : d.labels) CHECK(lab == d.labels[0]);
}

TEST_CASE("shift probability one forces a change every turn") {
    SynthConfig cfg;
    cfg.seed = 14;
    cfg.n_dialogues = 12;
    cfg.emotion_shift_prob = 1.0;
    cfg.t_dim = 4;
    cfg.a_dim = 4;
    cfg.v_dim = 4;
    DialogueSet s = generate_synthetic(cfg);
    for (const auto& d : s.dialogues)
        for (std::size_t i = 1; i < d.labels.size(); ++i) CHECK(d.labels[i] != d.labels[i - 1]);
}

TEST_CASE("synth config validation") {
    SynthConfig cfg;
    cfg.min_utterances = 5;
    cfg.max_utterances = 4;
    CHECK_THROWS(cfg.validate());
    cfg = SynthConfig{};
    cfg.n_classes = 1;
    CHECK_THROWS(cfg.validate());
    cfg = SynthConfig{};
    cfg.noise_sigma = 0.0;
    CHECK_THROWS(cfg.validate());
}
