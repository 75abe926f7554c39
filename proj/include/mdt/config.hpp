#pragma once

#include <filesystem>
#include <string>

#include "mdt/pipeline.hpp"
#include "mdt/synthdata.hpp"

namespace mdt {

// Everything one experiment needs: testbed generation, the three-stage
// recipe, evaluation settings, output root and the global seed.
struct ExperimentConfig {
    std::uint64_t seed = 0;
    std::filesystem::path out_root = "out";
    std::vector<std::string> domains = {"reviews", "messaging", "descriptions"};
    SynthConfig synth;
    RecipeConfig recipe;
    std::size_t human_samples = 250;

    void validate() const;
};

// Parse + validate; violations name the config key path. Unknown keys are
// rejected to catch typos.
ExperimentConfig parse_experiment_config(const std::string &toml_text,
                                         const std::string &origin = "<config>");
ExperimentConfig load_experiment_config(const std::filesystem::path &path);

// Normalized echo: input values plus all defaults, as TOML.
std::string render_config_toml(const ExperimentConfig &cfg);

} // namespace mdt
