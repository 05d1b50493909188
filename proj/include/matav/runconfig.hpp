#pragma once

#include <string>

#include "matav/alignment.hpp"
#include "matav/dataset.hpp"
#include "matav/model.hpp"

namespace matav {

// Full configuration tree for the CLI. Parsed from JSON; unknown keys are
// rejected so typos fail loudly instead of silently using defaults.
struct RunConfig {
    std::string train_path;  // empty = use synth
    std::string dev_path;
    std::string test_path;
    bool has_synth = false;
    SynthConfig synth;
    TrainConfig train;
    MecConfig mec;
    ModelConfig model;
    std::string out_dir = ".";

    void validate() const;
    std::string to_json() const;

    static RunConfig from_json_file(const std::string& path);
    static RunConfig from_json_text(const std::string& text);
};

}  // namespace matav
