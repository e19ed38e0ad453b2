// Copyright (c) 2026 The moerlab Authors
// SPDX-License-Identifier: Apache-2.0

#include "moerlab/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "moerlab/numerics.hpp"

namespace moerlab {

double expert_flops_per_activation(const ModelConfig& config) {
    return 2.0 * static_cast<double>(config.d_model) * static_cast<double>(config.d_expert) * 2.0;
}

MetricsReport run_experiment(const ModelParams& model, const Corpus& corpus,
                             const RoutingPolicy& policy, const ExperimentOptions& options,
                             RoutingTrace* trace_out) {
    const ModelConfig& cfg = model.config;
    if (corpus.sequences.empty()) {
        throw std::invalid_argument("run_experiment: empty corpus");
    }
    corpus.validate(cfg);

    MetricsReport report;
    report.policy = policy.name();
    if (trace_out != nullptr) {
        trace_out->policy = report.policy;
        trace_out->records.clear();
    }
    std::vector<std::size_t> correct(cfg.num_domains, 0);
    std::vector<std::size_t> items(cfg.num_domains, 0);

    const auto start = std::chrono::steady_clock::now();
    for (std::size_t s = 0; s < corpus.sequences.size(); ++s) {
        const auto& seq = corpus.sequences[s];
        ForwardOptions opts;
        opts.prefill_len = corpus.prompt_len;
        opts.seq_id = s;
        opts.record_router_logits = false;
        opts.final_logits_only = true;
        opts.key_token_z = options.key_token_z;
        auto result = forward(model, seq.tokens, policy, opts);

        for (const auto& rec : result.trace.records) {
            report.activations += rec.decision.k_used();
        }
        report.token_layers += result.trace.records.size();
        if (seq.answer) {
            items[seq.domain] += 1;
            if (topk(result.logits.back(), 1).front() == *seq.answer) {
                correct[seq.domain] += 1;
            }
        }
        if (trace_out != nullptr) {
            for (auto& rec : result.trace.records) {
                trace_out->records.push_back(std::move(rec));
            }
        }
    }
    if (options.record_runtime) {
        report.runtime_s =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    }

    std::size_t total_items = 0;
    std::size_t total_correct = 0;
    report.domain_accuracy.assign(cfg.num_domains, std::numeric_limits<double>::quiet_NaN());
    for (std::size_t d = 0; d < cfg.num_domains; ++d) {
        total_items += items[d];
        total_correct += correct[d];
        if (items[d] > 0) {
            report.domain_accuracy[d] =
                static_cast<double>(correct[d]) / static_cast<double>(items[d]);
        }
    }
    report.accuracy = total_items == 0
                          ? 0.0
                          : static_cast<double>(total_correct) / static_cast<double>(total_items);
    report.avg_topk = report.token_layers == 0 ? 0.0
                                               : static_cast<double>(report.activations) /
                                                     static_cast<double>(report.token_layers);
    report.est_flops = static_cast<double>(report.activations) * expert_flops_per_activation(cfg);
    return report;
}

std::vector<MetricsReport> compare_policies(const ModelParams& model, const Corpus& corpus,
                                            std::span<const RoutingPolicy* const> policies,
                                            const ExperimentOptions& options,
                                            std::vector<RoutingTrace>* traces) {
    if (policies.size() < 2) {
        throw std::invalid_argument("compare_policies: need at least two policies");
    }
    std::vector<MetricsReport> reports;
    if (traces != nullptr) {
        traces->assign(policies.size(), {});
    }
    for (std::size_t i = 0; i < policies.size(); ++i) {
        reports.push_back(run_experiment(model, corpus, *policies[i], options,
                                         traces != nullptr ? &(*traces)[i] : nullptr));
    }
    return reports;
}

std::vector<std::vector<std::size_t>> all_domain_subsets(std::span<const std::size_t> domains) {
    if (domains.size() >= 20) {
        throw std::invalid_argument("all_domain_subsets: too many domains");
    }
    std::vector<std::vector<std::size_t>> subsets;
    const std::size_t n = domains.size();
    for (std::size_t mask = 1; mask < (std::size_t{1} << n); ++mask) {
        std::vector<std::size_t> subset;
        for (std::size_t i = 0; i < n; ++i) {
            if (mask & (std::size_t{1} << i)) {
                subset.push_back(domains[i]);
            }
        }
        subsets.push_back(std::move(subset));
    }
    std::stable_sort(subsets.begin(), subsets.end(),
                     [](const auto& a, const auto& b) { return a.size() < b.size(); });
    return subsets;
}

std::vector<MultiDomainRow> multi_domain_experiment(
    const ModelParams& model, const Corpus& corpus, const KeyExpertSet& keys,
    std::vector<std::vector<std::size_t>> subsets, const PickConfig& pick,
    const ExperimentOptions& options) {
    if (subsets.empty()) {
        const auto domains = keys.domains();
        subsets = all_domain_subsets(domains);
    }
    const auto known = keys.domains();
    for (const auto& subset : subsets) {
        if (subset.empty()) {
            throw std::invalid_argument("multi_domain_experiment: empty domain subset");
        }
        for (std::size_t d : subset) {
            if (std::find(known.begin(), known.end(), d) == known.end()) {
                throw std::invalid_argument("multi_domain_experiment: no keys for domain " +
                                            std::to_string(d));
            }
        }
    }
    std::vector<MultiDomainRow> rows;
    const BaselinePolicy baseline(model.config.k_base);
    rows.push_back({{}, run_experiment(model, corpus, baseline, options).domain_accuracy});
    for (const auto& subset : subsets) {
        PickConfig cfg = pick;
        cfg.active_domains = subset;
        const PickPolicy policy(model.config.k_base, keys, cfg);
        rows.push_back({subset, run_experiment(model, corpus, policy, options).domain_accuracy});
    }
    return rows;
}

}  // namespace moerlab
