// Copyright (c) 2026 The moerlab Authors
// SPDX-License-Identifier: Apache-2.0
//
// Experiment configuration file. One JSON document whose sections carry the
// exact field names of the owning types; unknown keys are an error.
// Precedence: CLI flag > config file > built-in default.

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "moerlab/calibration.hpp"
#include "moerlab/corpus.hpp"
#include "moerlab/harness.hpp"
#include "moerlab/model.hpp"
#include "moerlab/policies.hpp"

namespace moerlab {

struct CalibrationConfig {
    std::size_t top_m = 3;
    double min_mult = 2.0;
    // Key rule threshold: mean + key_z * stddev of the domain's impacts.
    double key_z = 2.0;
    std::size_t kl_top_n = 0;  // 0: default_kl_top_n
    // Layer-sensitivity probe level; 0 means pruning.k_min.
    std::size_t k_low = 0;

    bool operator==(const CalibrationConfig&) const = default;
};

struct ExperimentConfig {
    // Root seed. The model and planting use it directly; the corpora use
    // mix_seed streams of it.
    std::uint64_t seed = 0;
    ModelConfig model;
    PlantOptions plant;
    // Construction knobs; specialized, planted_keys and noise_scale come
    // from plant.
    SyntheticModelSpec synthetic;
    // Calibration corpus (profiling, KL impact, sensitivities).
    CorpusOptions corpus;
    // Evaluation task items for run and compare.
    CorpusOptions tasks;
    CalibrationConfig calibration;
    // lambda, beta and k_min only; k_base comes from the model and the
    // sensitivities from calibration. k_min also bounds the token ratio.
    PruningConfig pruning;
    PickConfig pick;
    // tau, des_k_low and odp_attention_z only; des_k_low also drives the
    // median calibration.
    BaselineConfig baseline;
    PhaseMask phases;
    // record_runtime only; the key-token threshold is baseline.odp_attention_z.
    ExperimentOptions experiment;
    // Policy for run; list for compare.
    std::string policy = "baseline";
    std::vector<std::string> policies = {"baseline", "pick", "ban", "banpick",
                                         "dyntau",   "des",  "odp"};
    std::string out_dir = "moerlab_out";
    // Optional prebuilt model binary used instead of <out_dir>/model.bin.
    std::string model_path;

    ExperimentConfig();
    // Pushes the root seed into the model, plant and corpus seeds.
    void apply_seed(std::uint64_t seed);
    // Throws ConfigError on out-of-range values or unknown policy names.
    void validate() const;
    bool operator==(const ExperimentConfig&) const;

    // make_planted_spec(model, plant) with the synthetic knobs applied.
    SyntheticModelSpec planted_spec() const;
    SensitivityOptions sensitivity_options() const;
    // Pruning and baseline configs completed with k_base and a calibration.
    PruningConfig pruning_for(const SensitivityProfile& profile) const;
    BaselineConfig baseline_for(const SensitivityProfile& profile) const;
};

inline constexpr std::uint64_t kCorpusSeedStream = 0xC0;
inline constexpr std::uint64_t kTasksSeedStream = 0x7A;

const std::vector<std::string>& known_policies();

// Fields absent from the document keep their defaults. Throws ConfigError.
ExperimentConfig config_from_json(std::string_view text);
std::string config_to_json(const ExperimentConfig& config);
ExperimentConfig load_config(const std::filesystem::path& path);

}  // namespace moerlab
