// Copyright (c) 2026 The moerlab Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <filesystem>
#include <string>

#include "moerlab/config.hpp"
#include "moerlab/errors.hpp"
#include "moerlab/io.hpp"
#include "moerlab/rng.hpp"

namespace moerlab {
namespace {

TEST(Config, DefaultsAreValid) {
    const ExperimentConfig cfg;
    EXPECT_NO_THROW(cfg.validate());
    EXPECT_EQ(cfg.corpus.sequences_per_domain, 16u);
    EXPECT_EQ(cfg.tasks.sequences_per_domain, 40u);
    EXPECT_EQ(cfg.policy, "baseline");
    EXPECT_EQ(cfg.policies.size(), 7u);
}

TEST(Config, SeedFansOutToEveryStream) {
    ExperimentConfig cfg;
    cfg.apply_seed(42);
    EXPECT_EQ(cfg.seed, 42u);
    EXPECT_EQ(cfg.model.seed, 42u);
    EXPECT_EQ(cfg.plant.seed, 42u);
    EXPECT_EQ(cfg.corpus.seed, mix_seed(42, kCorpusSeedStream));
    EXPECT_EQ(cfg.tasks.seed, mix_seed(42, kTasksSeedStream));
    EXPECT_NE(cfg.corpus.seed, cfg.tasks.seed);
}

TEST(Config, EmptyDocumentGivesDefaults) {
    EXPECT_EQ(config_from_json("{}"), ExperimentConfig{});
}

TEST(Config, JsonRoundTrip) {
    ExperimentConfig cfg;
    cfg.apply_seed(7);
    cfg.model.num_layers = 6;
    cfg.plant.gamma = 12.5;
    cfg.synthetic.answer_gain = 0.1 + 0.2;
    cfg.synthetic.key_centroid_gain = 0.75;
    cfg.corpus.domains = {0, 2};
    cfg.tasks.task_mode = true;
    cfg.calibration.kl_top_n = 64;
    cfg.pruning.lambda = 0.3;
    cfg.pick.strategy = PickStrategy::E;
    cfg.pick.active_domains = {1};
    cfg.baseline.tau = 0.5;
    cfg.phases.decode = false;
    cfg.experiment.record_runtime = true;
    cfg.policy = "banpick";
    cfg.policies = {"ban", "pick"};
    cfg.out_dir = "elsewhere";
    const auto text = config_to_json(cfg);
    const auto back = config_from_json(text);
    EXPECT_EQ(back, cfg);
    EXPECT_EQ(config_to_json(back), text);
    EXPECT_EQ(back.model.num_layers, 6u);
    EXPECT_EQ(back.synthetic.answer_gain, 0.1 + 0.2);
    EXPECT_EQ(back.pick.strategy, PickStrategy::E);
    EXPECT_FALSE(back.phases.decode);
    EXPECT_EQ(back.corpus.seed, mix_seed(7, kCorpusSeedStream));
}

TEST(Config, PartialDocumentOverridesOnlyGivenFields) {
    const auto cfg = config_from_json(R"({"seed": 9, "pruning": {"lambda": 0.4}})");
    ExperimentConfig expected;
    expected.apply_seed(9);
    expected.pruning.lambda = 0.4;
    EXPECT_EQ(cfg, expected);
    EXPECT_EQ(cfg.pruning.beta, PruningConfig{}.beta);
}

TEST(Config, UnknownKeysAreErrors) {
    EXPECT_THROW(config_from_json(R"({"sed": 1})"), ConfigError);
    EXPECT_THROW(config_from_json(R"({"model": {"layers": 4}})"), ConfigError);
    EXPECT_THROW(config_from_json(R"({"pick": {"strategy": "D", "extra": true}})"), ConfigError);
    EXPECT_THROW(config_from_json(R"({"model": {"seed": 3}})"), ConfigError);
    try {
        config_from_json(R"({"pruning": {"lamda": 0.4}})");
        FAIL() << "expected ConfigError";
    } catch (const ConfigError& e) {
        EXPECT_NE(std::string(e.what()).find("lamda"), std::string::npos);
    }
}

TEST(Config, MalformedValuesAreErrors) {
    EXPECT_THROW(config_from_json("{"), ConfigError);
    EXPECT_THROW(config_from_json("[]"), ConfigError);
    EXPECT_THROW(config_from_json(R"({"seed": -1})"), ConfigError);
    EXPECT_THROW(config_from_json(R"({"seed": "1"})"), ConfigError);
    EXPECT_THROW(config_from_json(R"({"pruning": {"lambda": "high"}})"), ConfigError);
    EXPECT_THROW(config_from_json(R"({"pick": {"strategy": "Z"}})"), ConfigError);
    EXPECT_THROW(config_from_json(R"({"policies": [1]})"), ConfigError);
    EXPECT_THROW(config_from_json(R"({"model": 3})"), ConfigError);
}

TEST(Config, ValidationRejectsOutOfRangeValues) {
    auto expect_invalid = [](auto mutate) {
        ExperimentConfig cfg;
        mutate(cfg);
        EXPECT_THROW(cfg.validate(), ConfigError);
    };
    expect_invalid([](ExperimentConfig& c) { c.model.k_base = 0; });
    expect_invalid([](ExperimentConfig& c) { c.model.k_base = c.model.num_experts + 1; });
    expect_invalid([](ExperimentConfig& c) { c.pruning.lambda = 1.5; });
    expect_invalid([](ExperimentConfig& c) { c.pruning.k_min = c.model.k_base + 1; });
    expect_invalid([](ExperimentConfig& c) { c.corpus.seq_len = c.model.max_seq_len + 1; });
    expect_invalid([](ExperimentConfig& c) { c.tasks.sequences_per_domain = 0; });
    expect_invalid([](ExperimentConfig& c) { c.corpus.in_domain_rate = 1.5; });
    expect_invalid([](ExperimentConfig& c) { c.corpus.domains = {3}; });
    expect_invalid([](ExperimentConfig& c) { c.pick.active_domains = {3}; });
    expect_invalid([](ExperimentConfig& c) { c.calibration.top_m = 0; });
    expect_invalid([](ExperimentConfig& c) { c.calibration.k_low = c.model.k_base; });
    expect_invalid([](ExperimentConfig& c) { c.baseline.tau = 0.0; });
    expect_invalid([](ExperimentConfig& c) { c.baseline.des_k_low = 0; });
    expect_invalid([](ExperimentConfig& c) { c.baseline.des_k_low = c.model.k_base; });
    expect_invalid([](ExperimentConfig& c) { c.policy = "random"; });
    expect_invalid([](ExperimentConfig& c) { c.policies = {}; });
    expect_invalid([](ExperimentConfig& c) { c.policies = {"ban", "nope"}; });
    expect_invalid([](ExperimentConfig& c) { c.out_dir.clear(); });
    expect_invalid([](ExperimentConfig& c) { c.model_path = "/nonexistent/model.bin"; });
    expect_invalid([](ExperimentConfig& c) { c.synthetic.key_centroid_gain = -1.0; });
}

TEST(Config, EveryKnownPolicyValidates) {
    for (const auto& name : known_policies()) {
        ExperimentConfig cfg;
        cfg.policy = name;
        EXPECT_NO_THROW(cfg.validate()) << name;
    }
}

TEST(Config, PlantedSpecCarriesSyntheticKnobs) {
    ExperimentConfig cfg;
    cfg.synthetic.head_noise = 0.25;
    cfg.synthetic.key_centroid_gain = 0.125;
    cfg.plant.noise_scale = 0.4;
    const auto spec = cfg.planted_spec();
    EXPECT_EQ(spec.head_noise, 0.25);
    EXPECT_EQ(spec.key_centroid_gain, 0.125);
    EXPECT_EQ(spec.noise_scale, 0.4);
    EXPECT_EQ(spec.planted_keys, make_planted_spec(cfg.model, cfg.plant).planted_keys);
}

TEST(Config, CompletesPolicyConfigsFromCalibration) {
    ExperimentConfig cfg;
    SensitivityProfile profile;
    profile.k_base = cfg.model.k_base;
    profile.l_prime.assign(cfg.model.num_layers, 0.5);
    profile.r_min = 0.3;
    profile.r_max = 0.8;
    profile.des_k_low = cfg.baseline.des_k_low;
    profile.des_medians = {0.9, 0.8, 0.7, 0.6};
    const auto p = cfg.pruning_for(profile);
    EXPECT_EQ(p.k_base, cfg.model.k_base);
    EXPECT_EQ(p.layer_scores, profile.l_prime);
    EXPECT_EQ(p.r_min, 0.3);
    EXPECT_EQ(p.r_max, 0.8);
    EXPECT_EQ(p.lambda, cfg.pruning.lambda);
    const auto b = cfg.baseline_for(profile);
    EXPECT_EQ(b.des_medians, profile.des_medians);
    EXPECT_EQ(b.k_base, cfg.model.k_base);

    profile.l_prime.pop_back();
    EXPECT_THROW(cfg.pruning_for(profile), ConfigError);
    profile.des_k_low = cfg.baseline.des_k_low + 1;
    EXPECT_THROW(cfg.baseline_for(profile), ConfigError);
}

TEST(Config, LoadFromFile) {
    const auto dir = std::filesystem::temp_directory_path() / "moerlab_config_test";
    std::filesystem::remove_all(dir);
    write_file_atomic(dir / "config.json", R"({"seed": 5, "policy": "ban"})");
    const auto cfg = load_config(dir / "config.json");
    EXPECT_EQ(cfg.seed, 5u);
    EXPECT_EQ(cfg.policy, "ban");
    EXPECT_THROW(load_config(dir / "absent.json"), MissingArtifact);
    std::filesystem::remove_all(dir);
}

}  // namespace
}  // namespace moerlab
