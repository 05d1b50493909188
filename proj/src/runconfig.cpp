#include "matav/runconfig.hpp"

#include <fstream>
#include <set>
#include <stdexcept>

#include <json.hpp>

namespace matav {

namespace {

using nlohmann::json;

void reject_unknown(const json& obj, const std::set<std::string>& allowed,
                    const std::string& where) {
    for (auto it = obj.begin(); it != obj.end(); ++it)
        if (!allowed.count(it.key()))
            throw std::invalid_argument("config: unknown key \"" + it.key() + "\" in " + where);
}

template <typename T>
void maybe(const json& obj, const char* key, T& out) {
    if (obj.contains(key)) out = obj.at(key).get<T>();
}

}  // namespace

void RunConfig::validate() const {
    train.validate();
    mec.validate();
    model.validate();
    if (has_synth) synth.validate();
    if (train_path.empty() && !has_synth)
        throw std::invalid_argument("config: need either data.train or a synth block");
}

RunConfig RunConfig::from_json_text(const std::string& text) {
    json j = json::parse(text);
    RunConfig c;
    reject_unknown(j, {"data", "synth", "train", "mec", "model", "out_dir"}, "top level");
    if (j.contains("data")) {
        const json& d = j.at("data");
        reject_unknown(d, {"train", "dev", "test"}, "data");
        maybe(d, "train", c.train_path);
        maybe(d, "dev", c.dev_path);
        maybe(d, "test", c.test_path);
    }
    if (j.contains("synth")) {
        c.has_synth = true;
        const json& s = j.at("synth");
        reject_unknown(s,
                       {"seed", "n_dialogues", "min_utterances", "max_utterances", "n_classes",
                        "rho", "sigma", "shift_prob", "t_dim", "a_dim", "v_dim", "latent_dim",
                        "split"},
                       "synth");
        maybe(s, "seed", c.synth.seed);
        maybe(s, "n_dialogues", c.synth.n_dialogues);
        maybe(s, "min_utterances", c.synth.min_utterances);
        maybe(s, "max_utterances", c.synth.max_utterances);
        maybe(s, "n_classes", c.synth.n_classes);
        maybe(s, "rho", c.synth.cross_modal_correlation);
        maybe(s, "sigma", c.synth.noise_sigma);
        maybe(s, "shift_prob", c.synth.emotion_shift_prob);
        maybe(s, "t_dim", c.synth.t_dim);
        maybe(s, "a_dim", c.synth.a_dim);
        maybe(s, "v_dim", c.synth.v_dim);
        maybe(s, "latent_dim", c.synth.latent_dim);
        maybe(s, "split", c.synth.split);
    }
    if (j.contains("train")) {
        const json& t = j.at("train");
        reject_unknown(
            t, {"batch_size", "epochs", "lr", "weight_decay", "seed", "ablation", "use_sgd"},
            "train");
        maybe(t, "batch_size", c.train.batch_size);
        maybe(t, "epochs", c.train.epochs);
        maybe(t, "lr", c.train.lr);
        maybe(t, "weight_decay", c.train.weight_decay);
        maybe(t, "seed", c.train.seed);
        if (t.contains("ablation"))
            c.train.ablation = ablation_from_string(t.at("ablation").get<std::string>());
        maybe(t, "use_sgd", c.train.use_sgd);
    }
    if (j.contains("mec")) {
        const json& m = j.at("mec");
        reject_unknown(m, {"lambda", "tau", "capacity", "momentum", "symmetric"}, "mec");
        maybe(m, "lambda", c.mec.lambda);
        maybe(m, "tau", c.mec.tau);
        maybe(m, "capacity", c.mec.capacity);
        maybe(m, "momentum", c.mec.momentum);
        maybe(m, "symmetric", c.mec.symmetric);
    }
    if (j.contains("model")) {
        const json& m = j.at("model");
        reject_unknown(
            m, {"d_model", "d_attn", "n_attn_layers", "d_state", "n_ssm_blocks", "proj_dim"},
            "model");
        maybe(m, "d_model", c.model.d_model);
        maybe(m, "d_attn", c.model.d_attn);
        maybe(m, "n_attn_layers", c.model.n_attn_layers);
        maybe(m, "d_state", c.model.d_state);
        maybe(m, "n_ssm_blocks", c.model.n_ssm_blocks);
        maybe(m, "proj_dim", c.model.proj_dim);
    }
    maybe(j, "out_dir", c.out_dir);
    return c;
}

RunConfig RunConfig::from_json_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::invalid_argument("config: cannot open " + path);
    std::string text((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
    return from_json_text(text);
}

std::string RunConfig::to_json() const {
    json j;
    if (!train_path.empty()) j["data"]["train"] = train_path;
    if (!dev_path.empty()) j["data"]["dev"] = dev_path;
    if (!test_path.empty()) j["data"]["test"] = test_path;
    if (has_synth) {
        json s;
        s["seed"] = synth.seed;
        s["n_dialogues"] = synth.n_dialogues;
        s["min_utterances"] = synth.min_utterances;
        s["max_utterances"] = synth.max_utterances;
        s["n_classes"] = synth.n_classes;
        s["rho"] = synth.cross_modal_correlation;
        s["sigma"] = synth.noise_sigma;
        s["shift_prob"] = synth.emotion_shift_prob;
        s["t_dim"] = synth.t_dim;
        s["a_dim"] = synth.a_dim;
        s["v_dim"] = synth.v_dim;
        s["latent_dim"] = synth.latent_dim;
        s["split"] = synth.split;
        j["synth"] = s;
    }
    j["train"]["batch_size"] = train.batch_size;
    j["train"]["epochs"] = train.epochs;
    j["train"]["lr"] = train.lr;
    j["train"]["weight_decay"] = train.weight_decay;
    j["train"]["seed"] = train.seed;
    j["train"]["ablation"] = to_string(train.ablation) == "full" ? "none" : to_string(train.ablation);
    j["train"]["use_sgd"] = train.use_sgd;
    j["mec"]["lambda"] = mec.lambda;
    j["mec"]["tau"] = mec.tau;
    j["mec"]["capacity"] = mec.capacity;
    j["mec"]["momentum"] = mec.momentum;
    j["mec"]["symmetric"] = mec.symmetric;
    j["model"]["d_model"] = model.d_model;
    j["model"]["d_attn"] = model.d_attn;
    j["model"]["n_attn_layers"] = model.n_attn_layers;
    j["model"]["d_state"] = model.d_state;
    j["model"]["n_ssm_blocks"] = model.n_ssm_blocks;
    j["model"]["proj_dim"] = model.proj_dim;
    j["out_dir"] = out_dir;
    return j.dump(2);
}

}  // namespace matav
