// Copyright (c) 2026 The moerlab Authors
// SPDX-License-Identifier: Apache-2.0

#include "moerlab/config.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "json.hpp"
#include "json_util.hpp"
#include "moerlab/errors.hpp"
#include "moerlab/io.hpp"
#include "moerlab/rng.hpp"

namespace moerlab {

using json = nlohmann::ordered_json;

namespace {

const std::vector<std::string> kPolicies = {"baseline", "all",    "pick", "ban",
                                            "banpick",  "dyntau", "des",  "odp"};

void read_model(ObjectReader r, ModelConfig& m) {
    r.optional_size("num_layers", m.num_layers);
    r.optional_size("num_experts", m.num_experts);
    r.optional_size("k_base", m.k_base);
    r.optional_size("d_model", m.d_model);
    r.optional_size("d_expert", m.d_expert);
    r.optional_size("vocab", m.vocab);
    r.optional_size("num_domains", m.num_domains);
    r.optional_size("max_seq_len", m.max_seq_len);
    r.optional_size("num_query_tokens", m.num_query_tokens);
    r.finish();
}

json write_model(const ModelConfig& m) {
    return {{"num_layers", m.num_layers},   {"num_experts", m.num_experts},
            {"k_base", m.k_base},           {"d_model", m.d_model},
            {"d_expert", m.d_expert},       {"vocab", m.vocab},
            {"num_domains", m.num_domains}, {"max_seq_len", m.max_seq_len},
            {"num_query_tokens", m.num_query_tokens}};
}

void read_plant(ObjectReader r, PlantOptions& p) {
    r.optional_size("specialized_per_domain", p.specialized_per_domain);
    r.optional_real("alpha", p.alpha);
    r.optional_size("num_keys", p.num_keys);
    r.optional_real("key_alpha", p.key_alpha);
    r.optional_real("gamma", p.gamma);
    r.optional_real("noise_scale", p.noise_scale);
    r.finish();
}

json write_plant(const PlantOptions& p) {
    return {{"specialized_per_domain", p.specialized_per_domain},
            {"alpha", p.alpha},
            {"num_keys", p.num_keys},
            {"key_alpha", p.key_alpha},
            {"gamma", p.gamma},
            {"noise_scale", p.noise_scale}};
}

void read_synthetic(ObjectReader r, SyntheticModelSpec& s) {
    r.optional_real("embedding_noise", s.embedding_noise);
    r.optional_real("query_scale", s.query_scale);
    r.optional_real("position_scale", s.position_scale);
    r.optional_real("attention_scale", s.attention_scale);
    r.optional_real("attention_value_gain", s.attention_value_gain);
    r.optional_real("key_centroid_gain", s.key_centroid_gain);
    r.optional_real("ffn_noise", s.ffn_noise);
    r.optional_real("head_noise", s.head_noise);
    r.optional_real("answer_gain", s.answer_gain);
    r.finish();
}

json write_synthetic(const SyntheticModelSpec& s) {
    return {{"embedding_noise", s.embedding_noise},
            {"query_scale", s.query_scale},
            {"position_scale", s.position_scale},
            {"attention_scale", s.attention_scale},
            {"attention_value_gain", s.attention_value_gain},
            {"key_centroid_gain", s.key_centroid_gain},
            {"ffn_noise", s.ffn_noise},
            {"head_noise", s.head_noise},
            {"answer_gain", s.answer_gain}};
}

void read_corpus(ObjectReader r, CorpusOptions& c) {
    if (r.has("domains")) {
        c.domains = r.sizes("domains");
    }
    r.optional_size("sequences_per_domain", c.sequences_per_domain);
    r.optional_size("seq_len", c.seq_len);
    r.optional_bool("task_mode", c.task_mode);
    r.optional_real("in_domain_rate", c.in_domain_rate);
    r.optional_size("prompt_len", c.prompt_len);
    r.finish();
}

json write_corpus(const CorpusOptions& c) {
    return {{"domains", c.domains},
            {"sequences_per_domain", c.sequences_per_domain},
            {"seq_len", c.seq_len},
            {"task_mode", c.task_mode},
            {"in_domain_rate", c.in_domain_rate},
            {"prompt_len", c.prompt_len}};
}

void read_calibration(ObjectReader r, CalibrationConfig& c) {
    r.optional_size("top_m", c.top_m);
    r.optional_real("min_mult", c.min_mult);
    r.optional_real("key_z", c.key_z);
    r.optional_size("kl_top_n", c.kl_top_n);
    r.optional_size("k_low", c.k_low);
    r.finish();
}

json write_calibration(const CalibrationConfig& c) {
    return {{"top_m", c.top_m},
            {"min_mult", c.min_mult},
            {"key_z", c.key_z},
            {"kl_top_n", c.kl_top_n},
            {"k_low", c.k_low}};
}

void read_pruning(ObjectReader r, PruningConfig& p) {
    r.optional_real("lambda", p.lambda);
    r.optional_real("beta", p.beta);
    r.optional_size("k_min", p.k_min);
    r.finish();
}

json write_pruning(const PruningConfig& p) {
    return {{"lambda", p.lambda}, {"beta", p.beta}, {"k_min", p.k_min}};
}

void read_pick(ObjectReader r, PickConfig& p) {
    std::string strategy;
    if (r.optional_string("strategy", strategy)) {
        try {
            p.strategy = parse_strategy(strategy);
        } catch (const std::invalid_argument& e) {
            r.fail(e.what());
        }
    }
    r.optional_size("window_multiplier", p.window_multiplier);
    r.optional_real("bias_fraction", p.bias_fraction);
    if (r.has("active_domains")) {
        p.active_domains = r.sizes("active_domains");
    }
    r.optional_bool("bias_in_logit_space", p.bias_in_logit_space);
    r.finish();
}

json write_pick(const PickConfig& p) {
    return {{"strategy", std::string(1, strategy_letter(p.strategy))},
            {"window_multiplier", p.window_multiplier},
            {"bias_fraction", p.bias_fraction},
            {"active_domains", p.active_domains},
            {"bias_in_logit_space", p.bias_in_logit_space}};
}

void read_baseline(ObjectReader r, BaselineConfig& b) {
    r.optional_real("tau", b.tau);
    r.optional_size("des_k_low", b.des_k_low);
    r.optional_real("odp_attention_z", b.odp_attention_z);
    r.finish();
}

json write_baseline(const BaselineConfig& b) {
    return {{"tau", b.tau}, {"des_k_low", b.des_k_low}, {"odp_attention_z", b.odp_attention_z}};
}

void read_phases(ObjectReader r, PhaseMask& p) {
    r.optional_bool("prefill", p.prefill);
    r.optional_bool("decode", p.decode);
    r.finish();
}

void read_experiment(ObjectReader r, ExperimentOptions& e) {
    r.optional_bool("record_runtime", e.record_runtime);
    r.finish();
}

}  // namespace

const std::vector<std::string>& known_policies() { return kPolicies; }

ExperimentConfig::ExperimentConfig() {
    tasks.sequences_per_domain = 40;
    corpus.sequences_per_domain = 16;
    apply_seed(seed);
}

void ExperimentConfig::apply_seed(std::uint64_t s) {
    seed = s;
    model.seed = s;
    plant.seed = s;
    corpus.seed = mix_seed(s, kCorpusSeedStream);
    tasks.seed = mix_seed(s, kTasksSeedStream);
}

void ExperimentConfig::validate() const {
    try {
        model.validate();
        planted_spec().validate(model);
        pick.validate();
        for (std::size_t d : pick.active_domains) {
            if (d >= model.num_domains) {
                throw std::invalid_argument("pick: active domain out of range");
            }
        }
        PruningConfig p = pruning;
        p.k_base = model.k_base;
        p.validate();
        for (const CorpusOptions* c : {&corpus, &tasks}) {
            if (c->seq_len < 1 || c->seq_len > model.max_seq_len) {
                throw std::invalid_argument("corpus: seq_len must be in [1, max_seq_len]");
            }
            if (c->sequences_per_domain < 1) {
                throw std::invalid_argument("corpus: sequences_per_domain must be positive");
            }
            if (!(c->in_domain_rate >= 0.0 && c->in_domain_rate <= 1.0)) {
                throw std::invalid_argument("corpus: in_domain_rate must be in [0, 1]");
            }
            if (c->prompt_len > c->seq_len) {
                throw std::invalid_argument("corpus: prompt_len must not exceed seq_len");
            }
            for (std::size_t d : c->domains) {
                if (d >= model.num_domains) {
                    throw std::invalid_argument("corpus: domain out of range");
                }
            }
        }
        if (calibration.top_m < 1) {
            throw std::invalid_argument("calibration: top_m must be positive");
        }
        if (!(calibration.min_mult >= 0.0) || !std::isfinite(calibration.key_z)) {
            throw std::invalid_argument("calibration: min_mult and key_z must be finite, min_mult >= 0");
        }
        if (calibration.k_low != 0 && calibration.k_low >= model.k_base) {
            throw std::invalid_argument("calibration: k_low must be below k_base");
        }
        if (!(baseline.tau > 0.0 && baseline.tau <= 1.0)) {
            throw std::invalid_argument("baseline: tau must be in (0, 1]");
        }
        if (baseline.des_k_low < 1 || baseline.des_k_low >= model.k_base) {
            throw std::invalid_argument("baseline: des_k_low must be in [1, k_base)");
        }
        if (!std::isfinite(baseline.odp_attention_z)) {
            throw std::invalid_argument("attention z thresholds must be finite");
        }
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
    auto known = [](const std::string& name) {
        return std::find(kPolicies.begin(), kPolicies.end(), name) != kPolicies.end();
    };
    if (!known(policy)) {
        throw ConfigError("unknown policy '" + policy + "'");
    }
    if (policies.empty()) {
        throw ConfigError("policies must not be empty");
    }
    for (const auto& name : policies) {
        if (!known(name)) {
            throw ConfigError("unknown policy '" + name + "'");
        }
    }
    if (out_dir.empty()) {
        throw ConfigError("out_dir must not be empty");
    }
    if (!model_path.empty() && !std::filesystem::exists(model_path)) {
        throw ConfigError("model_path does not exist: " + model_path);
    }
}

bool ExperimentConfig::operator==(const ExperimentConfig& o) const {
    return config_to_json(*this) == config_to_json(o);
}

SyntheticModelSpec ExperimentConfig::planted_spec() const {
    SyntheticModelSpec spec = make_planted_spec(model, plant);
    spec.embedding_noise = synthetic.embedding_noise;
    spec.query_scale = synthetic.query_scale;
    spec.position_scale = synthetic.position_scale;
    spec.attention_scale = synthetic.attention_scale;
    spec.attention_value_gain = synthetic.attention_value_gain;
    spec.key_centroid_gain = synthetic.key_centroid_gain;
    spec.ffn_noise = synthetic.ffn_noise;
    spec.head_noise = synthetic.head_noise;
    spec.answer_gain = synthetic.answer_gain;
    return spec;
}

SensitivityOptions ExperimentConfig::sensitivity_options() const {
    SensitivityOptions o;
    o.k_min = pruning.k_min;
    o.k_low = calibration.k_low;
    o.kl_top_n = calibration.kl_top_n;
    o.des_k_low = baseline.des_k_low;
    return o;
}

PruningConfig ExperimentConfig::pruning_for(const SensitivityProfile& profile) const {
    PruningConfig p = pruning;
    p.k_base = model.k_base;
    p.layer_scores = profile.l_prime;
    p.r_min = profile.r_min;
    p.r_max = profile.r_max;
    if (p.layer_scores.size() != model.num_layers) {
        throw ConfigError("sensitivity profile does not match the model's layer count");
    }
    return p;
}

BaselineConfig ExperimentConfig::baseline_for(const SensitivityProfile& profile) const {
    BaselineConfig b = baseline;
    b.k_base = model.k_base;
    if (profile.des_k_low != baseline.des_k_low) {
        throw ConfigError("sensitivity profile was calibrated with a different des_k_low");
    }
    b.des_medians = profile.des_medians;
    return b;
}

ExperimentConfig config_from_json(std::string_view text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
    ExperimentConfig cfg;
    try {
        ObjectReader r(j, "config");
        std::uint64_t seed = cfg.seed;
        r.optional_u64("seed", seed);
        if (r.has("model")) read_model(ObjectReader(r.object("model"), "config.model"), cfg.model);
        if (r.has("plant")) read_plant(ObjectReader(r.object("plant"), "config.plant"), cfg.plant);
        if (r.has("synthetic")) {
            read_synthetic(ObjectReader(r.object("synthetic"), "config.synthetic"), cfg.synthetic);
        }
        if (r.has("corpus")) read_corpus(ObjectReader(r.object("corpus"), "config.corpus"), cfg.corpus);
        if (r.has("tasks")) read_corpus(ObjectReader(r.object("tasks"), "config.tasks"), cfg.tasks);
        if (r.has("calibration")) {
            read_calibration(ObjectReader(r.object("calibration"), "config.calibration"),
                             cfg.calibration);
        }
        if (r.has("pruning")) {
            read_pruning(ObjectReader(r.object("pruning"), "config.pruning"), cfg.pruning);
        }
        if (r.has("pick")) read_pick(ObjectReader(r.object("pick"), "config.pick"), cfg.pick);
        if (r.has("baseline")) {
            read_baseline(ObjectReader(r.object("baseline"), "config.baseline"), cfg.baseline);
        }
        if (r.has("phases")) read_phases(ObjectReader(r.object("phases"), "config.phases"), cfg.phases);
        if (r.has("experiment")) {
            read_experiment(ObjectReader(r.object("experiment"), "config.experiment"),
                            cfg.experiment);
        }
        r.optional_string("policy", cfg.policy);
        if (r.has("policies")) {
            cfg.policies.clear();
            for (const auto& v : r.array("policies")) {
                if (!v.is_string()) {
                    r.fail("'policies' must hold strings");
                }
                cfg.policies.push_back(v.get<std::string>());
            }
        }
        r.optional_string("out_dir", cfg.out_dir);
        r.optional_string("model_path", cfg.model_path);
        r.finish();
        cfg.apply_seed(seed);
    } catch (const FormatError& e) {
        throw ConfigError(e.what());
    }
    return cfg;
}

std::string config_to_json(const ExperimentConfig& c) {
    json j;
    j["seed"] = c.seed;
    j["model"] = write_model(c.model);
    j["plant"] = write_plant(c.plant);
    j["synthetic"] = write_synthetic(c.synthetic);
    j["corpus"] = write_corpus(c.corpus);
    j["tasks"] = write_corpus(c.tasks);
    j["calibration"] = write_calibration(c.calibration);
    j["pruning"] = write_pruning(c.pruning);
    j["pick"] = write_pick(c.pick);
    j["baseline"] = write_baseline(c.baseline);
    j["phases"] = {{"prefill", c.phases.prefill}, {"decode", c.phases.decode}};
    j["experiment"] = {{"record_runtime", c.experiment.record_runtime}};
    j["policy"] = c.policy;
    j["policies"] = c.policies;
    j["out_dir"] = c.out_dir;
    j["model_path"] = c.model_path;
    return j.dump(2) + "\n";
}

ExperimentConfig load_config(const std::filesystem::path& path) {
    return config_from_json(read_file(path, "config file"));
}

}  // namespace moerlab
