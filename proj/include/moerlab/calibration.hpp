// Copyright (c) 2026 The moerlab Authors
// SPDX-License-Identifier: Apache-2.0
//
// Offline pipelines that produce what the policies consume: expert usage,
// candidate and key experts, layer/token sensitivities and DES medians.
// All reductions run in corpus order, so results are bit-stable.

#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <vector>

#include "moerlab/corpus.hpp"
#include "moerlab/model.hpp"
#include "moerlab/policies.hpp"

namespace moerlab {

struct UsageStats {
    std::size_t num_layers = 0;
    std::size_t num_experts = 0;
    std::size_t k_base = 0;
    std::optional<std::size_t> domain;  // set when profiled on one domain
    std::vector<std::vector<std::uint64_t>> counts;                           // [layer][expert]
    std::vector<std::vector<std::map<TokenId, std::uint64_t>>> token_assoc;  // [layer][expert]
    std::uint64_t total_tokens = 0;
    std::uint64_t prefill_tokens = 0;
    std::uint64_t decode_tokens = 0;

    // Share of tokens that routed to the expert at this layer.
    double frequency(std::size_t layer, std::size_t expert) const;
    double uniform_rate() const;
};

UsageStats profile_usage(const ModelParams& model, const Corpus& corpus,
                         const RoutingPolicy& policy);

// One UsageStats per domain present in the corpus, ascending domain.
std::vector<UsageStats> profile_usage_by_domain(const ModelParams& model, const Corpus& corpus,
                                                const RoutingPolicy& policy);

struct Candidate {
    std::size_t layer = 0;
    std::size_t expert = 0;
    std::size_t domain = 0;
    double frequency = 0.0;

    bool operator==(const Candidate&) const = default;
};

struct CandidateSet {
    // Ordered by (domain, layer, descending frequency).
    std::vector<Candidate> candidates;

    bool empty() const { return candidates.empty(); }
    bool contains(std::size_t layer, std::size_t expert, std::size_t domain) const;
};

// Per layer, the top_m most frequent experts whose frequency is at least
// min_mult times the uniform rate k_base / E.
CandidateSet select_candidates(const UsageStats& stats, std::size_t top_m = 3,
                               double min_mult = 2.0);
CandidateSet select_candidates(const std::vector<UsageStats>& per_domain, std::size_t top_m = 3,
                               double min_mult = 2.0);

struct KLImpact {
    std::size_t layer = 0;
    std::size_t expert = 0;
    std::size_t domain = 0;
    double mean_kl = 0.0;
    std::size_t samples = 0;

    bool operator==(const KLImpact&) const = default;
};

struct KLImpactReport {
    std::vector<KLImpact> entries;

    bool operator==(const KLImpactReport&) const = default;
};

std::size_t default_kl_top_n(const ModelConfig& config);

// Mean restricted KL between the final-position next-token distributions of
// the intact model and the model with one candidate pruned, averaged over
// the candidate's domain sequences. Routing is top-k_base.
KLImpactReport prune_impact(const ModelParams& model, const Corpus& corpus,
                            const CandidateSet& candidates, std::size_t kl_top_n);

struct KeyRule {
    // A candidate is key when its impact exceeds mean + z * stddev of its
    // domain's impacts; otherwise the domain keeps its single strongest one.
    double z = 2.0;
};

KeyExpertSet identify_key_experts(const KLImpactReport& report, const KeyRule& rule = {});

struct LayerSensitivity {
    std::vector<double> w;
    std::vector<double> l_prime;
    double w_min = 0.0;
    double w_max = 0.0;
};

// Min-max normalization; all ones when the spread is below 1e-12.
LayerSensitivity normalize_layer_scores(std::vector<double> w);

LayerSensitivity calibrate_layer_sensitivity(const ModelParams& model, const Corpus& corpus,
                                             std::size_t k_low, std::size_t kl_top_n);

struct TokenRatioBounds {
    double r_min = 0.0;
    double r_max = 0.0;
};

inline constexpr std::size_t kMinRatioSamples = 100;

// Exact min/max of cum_ratio(shifted_exp(logits), k_min, k_base), the same
// ratio as over the softmax. Throws
// CalibrationError on fewer than kMinRatioSamples samples or a zero range.
TokenRatioBounds token_ratio_bounds(const std::vector<std::vector<double>>& router_logits,
                                    std::size_t k_min, std::size_t k_base);
TokenRatioBounds calibrate_token_ratios(const ModelParams& model, const Corpus& corpus,
                                        std::size_t k_min);

// Lower median of r_(j)/r_(j+1) for j = k_low .. k_base-1 over the samples.
std::vector<double> des_medians(const std::vector<std::vector<double>>& router_logits,
                                std::size_t k_low, std::size_t k_base);
std::vector<double> calibrate_des_medians(const ModelParams& model, const Corpus& corpus,
                                          std::size_t k_low);

// Router logits of every (token, layer) under top-k_base routing, corpus order.
std::vector<std::vector<double>> collect_router_logits(const ModelParams& model,
                                                       const Corpus& corpus);

struct SensitivityProfile {
    std::size_t k_low = 3;
    std::size_t k_min = 3;
    std::size_t k_base = 8;
    std::vector<double> w;
    std::vector<double> l_prime;
    double w_min = 0.0;
    double w_max = 0.0;
    double r_min = 0.0;
    double r_max = 0.0;
    std::size_t des_k_low = 4;
    std::vector<double> des_medians;

    bool operator==(const SensitivityProfile&) const = default;
};

struct SensitivityOptions {
    std::size_t k_min = 3;
    std::size_t k_low = 0;  // 0: same as k_min
    std::size_t kl_top_n = 0;  // 0: default_kl_top_n
    std::size_t des_k_low = 4;
};

SensitivityProfile calibrate_sensitivity(const ModelParams& model, const Corpus& corpus,
                                         const SensitivityOptions& options);

struct FailureSetResult {
    std::size_t failure_set_size = 0;
    std::size_t baseline_correct = 0;
    std::size_t enhanced_correct = 0;
};

// Collects the task items top-k_base routing gets wrong, then re-runs them
// with the item domain's keys force-added (strategy A).
FailureSetResult validate_failure_set(const ModelParams& model, const KeyExpertSet& keys,
                                      const Corpus& tasks);

}  // namespace moerlab
