// Copyright (c) 2026 The moerlab Authors
// SPDX-License-Identifier: Apache-2.0

#include "moerlab/cli.hpp"

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <memory>
#include <optional>
#include <stdexcept>

#include "CLI11.hpp"
#include "moerlab/calibration.hpp"
#include "moerlab/config.hpp"
#include "moerlab/errors.hpp"
#include "moerlab/harness.hpp"
#include "moerlab/io.hpp"

namespace moerlab {

namespace {

namespace fs = std::filesystem;

constexpr const char* kModelFile = "model.bin";
constexpr const char* kSpecFile = "spec.json";
constexpr const char* kConfigFile = "config.json";
constexpr const char* kCorpusFile = "corpus.json";
constexpr const char* kTasksFile = "tasks.json";
constexpr const char* kCandidatesFile = "candidates.json";
constexpr const char* kImpactFile = "kl_impact.json";
constexpr const char* kSensitivityFile = "sensitivity.json";
constexpr const char* kKeysFile = "key_experts.json";
constexpr const char* kMetricsFile = "metrics.csv";

struct Flags {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::string out_dir;
    bool timing = false;
    std::string policy;
    std::vector<std::string> policies;
};

// Loads artifacts lazily from the output directory.
class Session {
public:
    Session(ExperimentConfig cfg, fs::path dir, std::ostream& out)
        : cfg_(std::move(cfg)), dir_(std::move(dir)), out_(out) {}

    const ExperimentConfig& config() const { return cfg_; }
    const fs::path& dir() const { return dir_; }

    void write(const std::string& name, const std::string& content) {
        write_file_atomic(dir_ / name, content);
        announce(name);
    }
    void announce(const std::string& name) { out_ << "wrote " << (dir_ / name).string() << "\n"; }

    const ModelParams& model() {
        if (!model_) {
            const fs::path path = cfg_.model_path.empty() ? dir_ / kModelFile : fs::path(cfg_.model_path);
            model_ = load_model(path);
            // The model file is authoritative for the architecture.
            const std::uint64_t seed = cfg_.model.seed;
            cfg_.model = model_->config;
            cfg_.model.seed = seed;
        }
        return *model_;
    }

    // Generated and saved on first use when absent.
    const Corpus& corpus() { return corpus_or_generate(corpus_, kCorpusFile, cfg_.corpus); }
    const Corpus& tasks() { return corpus_or_generate(tasks_, kTasksFile, cfg_.tasks); }

    const SensitivityProfile& sensitivity() {
        if (!sensitivity_) {
            sensitivity_ = sensitivity_from_json(
                read_file(dir_ / kSensitivityFile, "run calibrate first"));
        }
        return *sensitivity_;
    }

    const KeyExpertSet& keys() {
        if (!keys_) {
            keys_ = key_experts_from_json(read_file(dir_ / kKeysFile, "run identify first"));
            keys_->validate(model().config.num_experts);
        }
        return *keys_;
    }

    std::unique_ptr<RoutingPolicy> make_policy(const std::string& name) {
        const std::size_t k = model().config.k_base;
        if (name == "baseline") return std::make_unique<BaselinePolicy>(k);
        if (name == "all") return std::make_unique<SelectAllPolicy>();
        if (name == "ban") {
            return std::make_unique<BanPolicy>(cfg_.pruning_for(sensitivity()), cfg_.phases);
        }
        if (name == "pick") {
            return std::make_unique<PickPolicy>(k, keys(), pick_config(), cfg_.phases);
        }
        if (name == "banpick") {
            return std::make_unique<BanPickPolicy>(keys(), pick_config(),
                                                   cfg_.pruning_for(sensitivity()), cfg_.phases);
        }
        BaselineConfig b = cfg_.baseline;
        b.k_base = k;
        if (name == "dyntau") return std::make_unique<DynamicTauPolicy>(b);
        if (name == "odp") return std::make_unique<OdpPolicy>(cfg_.baseline_for(sensitivity()));
        if (name == "des") return std::make_unique<DesPolicy>(cfg_.baseline_for(sensitivity()));
        throw ConfigError("unknown policy '" + name + "'");
    }

    ExperimentOptions experiment_options() const {
        ExperimentOptions o = cfg_.experiment;
        o.key_token_z = cfg_.baseline.odp_attention_z;
        return o;
    }

private:
    // An empty active-domain list means every domain of the key set.
    PickConfig pick_config() {
        PickConfig p = cfg_.pick;
        if (p.active_domains.empty()) {
            p.active_domains = keys().domains();
        }
        return p;
    }

    const Corpus& corpus_or_generate(std::optional<Corpus>& slot, const char* name,
                                     const CorpusOptions& options) {
        if (!slot) {
            const fs::path path = dir_ / name;
            if (fs::exists(path)) {
                slot = corpus_from_json(read_file(path));
            } else {
                slot = gen_corpus(model().config, options);
                write(name, corpus_to_json(*slot));
            }
            try {
                slot->validate(model().config);
            } catch (const std::invalid_argument& e) {
                throw FormatError(path.string() + ": " + e.what());
            }
        }
        return *slot;
    }

    ExperimentConfig cfg_;
    fs::path dir_;
    std::ostream& out_;
    std::optional<ModelParams> model_;
    std::optional<Corpus> corpus_;
    std::optional<Corpus> tasks_;
    std::optional<SensitivityProfile> sensitivity_;
    std::optional<KeyExpertSet> keys_;
};

ExperimentConfig resolve_config(const Flags& flags) {
    ExperimentConfig cfg = flags.config_path.empty() ? ExperimentConfig{} : load_config(flags.config_path);
    if (flags.seed) {
        cfg.apply_seed(*flags.seed);
    }
    if (flags.timing) {
        cfg.experiment.record_runtime = true;
    }
    if (!flags.policy.empty()) {
        cfg.policy = flags.policy;
    }
    if (!flags.policies.empty()) {
        cfg.policies = flags.policies;
    }
    // Output directory: --out, then MOERLAB_OUT, then the config file.
    if (!flags.out_dir.empty()) {
        cfg.out_dir = flags.out_dir;
    } else if (const char* env = std::getenv("MOERLAB_OUT"); env != nullptr && *env != '\0') {
        cfg.out_dir = env;
    }
    cfg.validate();
    return cfg;
}

void cmd_gen_model(Session& s) {
    const ExperimentConfig& cfg = s.config();
    const SyntheticModelSpec spec = cfg.planted_spec();
    const ModelParams model = build_model(cfg.model, spec);
    s.write(kModelFile, serialize_model(model));
    s.write(kSpecFile, synthetic_spec_to_json(spec));
    s.write(kConfigFile, config_to_json(cfg));
}

void cmd_gen_corpus(Session& s) {
    const ExperimentConfig& cfg = s.config();
    const ModelConfig& mc = s.model().config;
    s.write(kCorpusFile, corpus_to_json(gen_corpus(mc, cfg.corpus)));
    s.write(kTasksFile, corpus_to_json(gen_corpus(mc, cfg.tasks)));
}

std::vector<UsageStats> domain_usage(Session& s) {
    BaselinePolicy base(s.model().config.k_base);
    return profile_usage_by_domain(s.model(), s.corpus(), base);
}

void cmd_profile(Session& s) {
    ReportInputs inputs;
    inputs.usage = domain_usage(s);
    const std::size_t layers = s.model().config.num_layers;
    s.write("usage.csv", usage_csv(inputs.usage));
    for (std::size_t l = 0; l < layers; ++l) {
        s.write("usage_layer_" + std::to_string(l) + ".svg", usage_svg(inputs.usage, l));
    }
}

void cmd_calibrate(Session& s) {
    const ExperimentConfig& cfg = s.config();
    const auto usage = domain_usage(s);
    s.write("usage.csv", usage_csv(usage));
    const CandidateSet candidates =
        select_candidates(usage, cfg.calibration.top_m, cfg.calibration.min_mult);
    s.write(kCandidatesFile, candidates_to_json(candidates));
    const std::size_t top_n = cfg.calibration.kl_top_n == 0 ? default_kl_top_n(s.model().config)
                                                            : cfg.calibration.kl_top_n;
    const KLImpactReport report = prune_impact(s.model(), s.corpus(), candidates, top_n);
    s.write(kImpactFile, kl_report_to_json(report));
    const SensitivityProfile profile =
        calibrate_sensitivity(s.model(), s.corpus(), cfg.sensitivity_options());
    s.write(kSensitivityFile, sensitivity_to_json(profile));
    s.write("sensitivity.csv", sensitivity_csv(profile));
}

void cmd_identify(Session& s) {
    const KLImpactReport report =
        kl_report_from_json(read_file(s.dir() / kImpactFile, "run calibrate first"));
    const KeyExpertSet keys = identify_key_experts(report, KeyRule{s.config().calibration.key_z});
    s.write(kKeysFile, key_experts_to_json(keys, &report));
}

void run_policies(Session& s, const std::vector<std::string>& names, const std::string& metrics_name,
                  std::ostream& out) {
    std::vector<std::unique_ptr<RoutingPolicy>> owned;
    std::vector<const RoutingPolicy*> policies;
    for (const auto& name : names) {
        owned.push_back(s.make_policy(name));
        policies.push_back(owned.back().get());
    }
    std::vector<RoutingTrace> traces;
    std::vector<MetricsReport> reports;
    if (policies.size() == 1) {
        traces.resize(1);
        reports.push_back(run_experiment(s.model(), s.tasks(), *policies.front(),
                                         s.experiment_options(), &traces.front()));
    } else {
        reports = compare_policies(s.model(), s.tasks(), policies, s.experiment_options(), &traces);
    }
    for (std::size_t i = 0; i < names.size(); ++i) {
        s.write("trace_" + names[i] + ".ndjson", trace_ndjson(traces[i]));
    }
    s.write(metrics_name, metrics_csv(reports));
    for (const auto& m : reports) {
        out << m.policy << ": accuracy " << format_real(m.accuracy) << ", avg_topk "
            << format_real(m.avg_topk) << "\n";
    }
}

void cmd_report(Session& s) {
    ReportInputs inputs;
    inputs.usage = domain_usage(s);
    if (fs::exists(s.dir() / kSensitivityFile)) {
        inputs.sensitivity = s.sensitivity();
    }
    if (fs::exists(s.dir() / kImpactFile)) {
        inputs.kl_report = kl_report_from_json(read_file(s.dir() / kImpactFile));
    }
    if (fs::exists(s.dir() / kKeysFile)) {
        inputs.keys = s.keys();
    }
    if (fs::exists(s.dir() / kMetricsFile)) {
        inputs.metrics = metrics_from_csv(read_file(s.dir() / kMetricsFile));
    }
    for (const auto& name : emit_reports(inputs, s.dir())) {
        s.announce(name);
    }
}

}  // namespace

int cli_main(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"moerlab: MoE routing lab (key-expert enhancement and dynamic expert pruning)",
                 "moerlab"};
    app.fallthrough();
    app.require_subcommand(1, 1);
    Flags flags;
    app.add_option("--config", flags.config_path, "Experiment config JSON file");
    app.add_option("--seed", flags.seed, "Root seed; overrides the config file");
    app.add_option("--out", flags.out_dir, "Output directory; overrides MOERLAB_OUT and the config");
    app.add_flag("--timing", flags.timing, "Record wall-clock runtime in the metrics");

    app.add_subcommand("gen-model", "Build the planted synthetic model");
    app.add_subcommand("gen-corpus", "Generate the calibration corpus and the task items");
    app.add_subcommand("profile", "Profile per-domain expert usage");
    app.add_subcommand("calibrate", "Candidates, KL impact and layer/token sensitivities");
    app.add_subcommand("identify", "Select key experts from the KL impact report");
    auto* run = app.add_subcommand("run", "Run the task items under one policy");
    run->add_option("--policy", flags.policy, "Policy name");
    auto* compare = app.add_subcommand("compare", "Run the task items under several policies");
    compare->add_option("--policies", flags.policies, "Comma-separated policy names")
        ->delimiter(',');
    app.add_subcommand("report", "Emit CSV, SVG and key-expert reports");
    app.footer("Policies: baseline all pick ban banpick dyntau des odp");

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return 0;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return 0;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n" << app.help();
        return 1;
    }

    const std::string command = app.get_subcommands().front()->get_name();
    try {
        const ExperimentConfig cfg = resolve_config(flags);
        Session session(cfg, cfg.out_dir, out);
        if (command == "gen-model") {
            cmd_gen_model(session);
        } else if (command == "gen-corpus") {
            cmd_gen_corpus(session);
        } else if (command == "profile") {
            cmd_profile(session);
        } else if (command == "calibrate") {
            cmd_calibrate(session);
        } else if (command == "identify") {
            cmd_identify(session);
        } else if (command == "run") {
            run_policies(session, {cfg.policy}, "metrics_" + cfg.policy + ".csv", out);
        } else if (command == "compare") {
            run_policies(session, cfg.policies, kMetricsFile, out);
        } else if (command == "report") {
            cmd_report(session);
        }
    } catch (const MissingArtifact& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << "\n";
        return 1;
    } catch (const FormatError& e) {
        err << "format error: " << e.what() << "\n";
        return 1;
    } catch (const std::invalid_argument& e) {
        err << "invalid argument: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        err << "runtime error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}

int cli_main(int argc, const char* const* argv) {
    std::vector<std::string> args;
    for (int i = 1; i < argc; ++i) {
        args.emplace_back(argv[i]);
    }
    return cli_main(args, std::cout, std::cerr);
}

}  // namespace moerlab
