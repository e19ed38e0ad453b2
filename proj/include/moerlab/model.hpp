// Copyright (c) 2026 The moerlab Authors
// SPDX-License-Identifier: Apache-2.0
//
// A tiny fine-grained MoE transformer whose weights are planted so that the
// domain-specialized experts and key experts are known by construction.
//
// Vocabulary layout: the last num_domains ids are the per-domain answer
// tokens, the num_query_tokens ids before them are domain-neutral query
// tokens, and the remaining content ids are split into num_domains
// contiguous slices.

#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "moerlab/routing.hpp"

namespace moerlab {

using TokenId = std::uint32_t;

struct ModelConfig {
    std::size_t num_layers = 8;
    std::size_t num_experts = 32;
    std::size_t k_base = 8;
    std::size_t d_model = 64;
    std::size_t d_expert = 128;
    std::size_t vocab = 256;
    std::size_t num_domains = 3;
    std::size_t max_seq_len = 64;
    // Domain-neutral tokens that end every task item.
    std::size_t num_query_tokens = 8;
    std::uint64_t seed = 0;

    void validate() const;
    bool operator==(const ModelConfig&) const = default;
};

struct SpecializedExpert {
    std::size_t expert = 0;
    double alpha = 0.0;

    bool operator==(const SpecializedExpert&) const = default;
};

struct PlantedKey {
    std::size_t layer = 0;
    std::size_t expert = 0;
    std::size_t domain = 0;
    double gamma = 0.0;

    bool operator==(const PlantedKey&) const = default;
};

struct SyntheticModelSpec {
    // (layer, domain) -> experts whose gate row leans towards the domain.
    std::map<std::pair<std::size_t, std::size_t>, std::vector<SpecializedExpert>> specialized;
    std::vector<PlantedKey> planted_keys;
    // Std-dev of router logits produced by the gate noise on a unit input.
    double noise_scale = 0.5;

    // Remaining construction knobs; the defaults give the desk-scale model.
    double embedding_noise = 0.6;
    // Approximate norm of the query-token embeddings; they are noise
    // orthogonal to the planted directions.
    double query_scale = 3.0;
    double position_scale = 0.1;
    double attention_scale = 0.1;
    // Gain of the first layer's centroid-subspace value projection, so
    // attention carries the context's domain into every later position.
    double attention_value_gain = 1.0;
    // A key expert also writes key_centroid_gain * gamma along its domain
    // centroid, so its answer output does not drown the domain signal that
    // later routers read.
    double key_centroid_gain = 0.5;
    double ffn_noise = 0.05;
    double head_noise = 0.5;
    double answer_gain = 8.0;

    void validate(const ModelConfig& config) const;
    bool operator==(const SyntheticModelSpec&) const = default;
};

struct PlantOptions {
    std::uint64_t seed = 0;
    std::size_t specialized_per_domain = 1;
    double alpha = 3.0;
    std::size_t num_keys = 3;
    double key_alpha = 3.5;
    double gamma = 40.0;
    double noise_scale = 0.5;
};

// Specialized experts for every (layer, domain) plus num_keys key experts
// assigned round-robin over domains at distinct layers after the first. Each
// key is an extra specialized expert with strength key_alpha: the router picks
// it on content tokens but only sometimes at the query position, where the
// domain signal arrives through attention alone.
SyntheticModelSpec make_planted_spec(const ModelConfig& config, const PlantOptions& options);

struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

    double& at(std::size_t r, std::size_t c) { return data[r * cols + c]; }
    double at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
    std::span<const double> row(std::size_t r) const { return {data.data() + r * cols, cols}; }
    std::span<double> row(std::size_t r) { return {data.data() + r * cols, cols}; }

    bool operator==(const Matrix&) const = default;
};

struct AttentionWeights {
    Matrix query;   // d_model x d_model
    Matrix key;     // d_model x d_model
    Matrix value;   // d_model x d_model
    Matrix output;  // d_model x d_model

    bool operator==(const AttentionWeights&) const = default;
};

// Row-vector convention: y = relu(x * up) * down.
struct ExpertWeights {
    Matrix up;    // d_model x d_expert
    Matrix down;  // d_expert x d_model

    bool operator==(const ExpertWeights&) const = default;
};

struct LayerParams {
    AttentionWeights attention;
    Matrix gate;  // num_experts x d_model
    std::vector<ExpertWeights> experts;

    bool operator==(const LayerParams&) const = default;
};

struct ModelParams {
    ModelConfig config;
    Matrix token_embeddings;  // vocab x d_model
    Matrix positions;         // max_seq_len x d_model
    std::vector<LayerParams> layers;
    Matrix output_head;  // vocab x d_model

    bool operator==(const ModelParams&) const = default;
};

std::size_t answer_token(const ModelConfig& config, std::size_t domain);
std::size_t query_token(const ModelConfig& config, std::size_t index);
// Number of content ids, [0, content_vocab).
std::size_t content_vocab(const ModelConfig& config);
// Half-open [first, second) range of the domain's content tokens.
std::pair<std::size_t, std::size_t> domain_slice(const ModelConfig& config, std::size_t domain);

ModelParams build_model(const ModelConfig& config, const SyntheticModelSpec& spec);

// Expert FFN on an already-normalized input.
std::vector<double> expert_output(const ExpertWeights& expert, std::span<const double> input);

struct TraceRecord {
    std::uint64_t seq_id = 0;
    std::size_t position = 0;
    std::size_t layer = 0;
    Phase phase = Phase::prefill;
    std::vector<double> logits;  // empty when logits are not recorded
    RoutingDecision decision;

    bool operator==(const TraceRecord&) const = default;
};

struct RoutingTrace {
    std::string policy;
    std::vector<TraceRecord> records;

    std::size_t total_activations() const;
    bool operator==(const RoutingTrace&) const = default;
};

struct PrunedExpert {
    std::size_t layer = 0;
    std::size_t expert = 0;
};

struct ForwardOptions {
    // Positions [0, prefill_len) are prefill, the rest decode.
    std::size_t prefill_len = SIZE_MAX;
    std::uint64_t seq_id = 0;
    std::optional<PrunedExpert> pruned;
    bool record_router_logits = true;
    bool record_trace = true;
    // When set only the last position's output logits are produced.
    bool final_logits_only = false;
    double key_token_z = 2.0;
};

struct ForwardResult {
    std::vector<std::vector<double>> logits;
    RoutingTrace trace;
    // Column sum of the causal attention map per position, averaged over layers.
    std::vector<double> attention_mass;
};

// Residual stream per layer (before attention) for every position; lets a
// caller replay the tail of a forward pass from a given layer.
struct LayerCheckpoints {
    std::vector<std::vector<std::vector<double>>> states;  // [layer][position][d_model]
};

ForwardResult forward(const ModelParams& params, std::span<const TokenId> tokens,
                      const RoutingPolicy& policy, Phase phase = Phase::prefill);

ForwardResult forward(const ModelParams& params, std::span<const TokenId> tokens,
                      const RoutingPolicy& policy, const ForwardOptions& options,
                      LayerCheckpoints* capture = nullptr);

// Same as forward, but the pruned expert's router logit is -inf before the
// policy sees it.
ForwardResult forward_with_pruned_expert(const ModelParams& params,
                                         std::span<const TokenId> tokens,
                                         const RoutingPolicy& policy, PrunedExpert pruned,
                                         ForwardOptions options = {});

// Replays layers [start_layer, L) from checkpoints captured by an earlier
// forward over the same tokens. Trace and attention mass cover only the
// replayed layers. Bit-identical to a full forward when nothing before
// start_layer differs.
ForwardResult forward_from_layer(const ModelParams& params, std::span<const TokenId> tokens,
                                 const RoutingPolicy& policy, const ForwardOptions& options,
                                 const LayerCheckpoints& checkpoints, std::size_t start_layer);

// True when the attention mass at each position is an outlier above
// mean + z * stddev of the sequence. Single-position sequences have no key token.
std::vector<bool> key_token_flags(std::span<const double> attention_mass, double z);

}  // namespace moerlab
