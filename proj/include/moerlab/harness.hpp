// Copyright (c) 2026 The moerlab Authors
// SPDX-License-Identifier: Apache-2.0
//
// End-to-end experiments: run a corpus under one or more routing policies and
// summarize accuracy and expert-compute usage.

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "moerlab/corpus.hpp"
#include "moerlab/model.hpp"
#include "moerlab/policies.hpp"

namespace moerlab {

struct MetricsReport {
    std::string policy;
    // Fraction of task items whose final-position argmax is the answer token.
    double accuracy = 0.0;
    // Per domain id; NaN for domains without task items.
    std::vector<double> domain_accuracy;
    double avg_topk = 0.0;
    std::uint64_t activations = 0;
    std::uint64_t token_layers = 0;
    // activations * 2 * d_model * d_expert * 2 (two matmuls, multiply-add).
    double est_flops = 0.0;
    // Wall clock; only measured when requested, 0 otherwise.
    double runtime_s = 0.0;
};

struct ExperimentOptions {
    bool record_runtime = false;
    double key_token_z = 2.0;
};

double expert_flops_per_activation(const ModelConfig& config);

// If trace_out is non-null it receives the trace of every sequence
// (seq_id = index in the corpus), without router logits.
MetricsReport run_experiment(const ModelParams& model, const Corpus& corpus,
                             const RoutingPolicy& policy, const ExperimentOptions& options = {},
                             RoutingTrace* trace_out = nullptr);

// One report per policy, in the order given, over the identical corpus.
std::vector<MetricsReport> compare_policies(const ModelParams& model, const Corpus& corpus,
                                            std::span<const RoutingPolicy* const> policies,
                                            const ExperimentOptions& options = {},
                                            std::vector<RoutingTrace>* traces = nullptr);

struct MultiDomainRow {
    // Active key domains; empty for the unmodified baseline row.
    std::vector<std::size_t> domains;
    std::vector<double> domain_accuracy;
};

// Every non-empty subset of the key set's domains, smallest first.
std::vector<std::vector<std::size_t>> all_domain_subsets(std::span<const std::size_t> domains);

// First row is the baseline; then one row per subset with Pick activating the
// union of the subset's key sets.
std::vector<MultiDomainRow> multi_domain_experiment(
    const ModelParams& model, const Corpus& corpus, const KeyExpertSet& keys,
    std::vector<std::vector<std::size_t>> subsets, const PickConfig& pick,
    const ExperimentOptions& options = {});

}  // namespace moerlab
