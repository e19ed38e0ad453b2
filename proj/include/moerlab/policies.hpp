// Copyright (c) 2026 The moerlab Authors
// SPDX-License-Identifier: Apache-2.0
//
// Routing policies. The free functions are the per-(token, layer) decision
// rules; the classes bind a rule to its configuration so the forward pass
// can drive it through RoutingPolicy.
//
// Every decision lists its experts in descending router score (ties: lower
// id first) and carries weights equal to the full-softmax scores of the
// selected set, renormalized to sum to 1. The weights are evaluated from the
// selected logits alone, so unselected experts never perturb them.

#pragma once

#include <cstddef>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "moerlab/routing.hpp"

namespace moerlab {

// Plain top-k gate.
RoutingDecision route_baseline(std::span<const double> logits, std::size_t k);

// Builds a decision over an explicit expert set using full-softmax scores.
RoutingDecision decision_from_set(std::span<const double> probs,
                                  std::vector<std::size_t> experts);
// Same weights computed as a softmax over the selected logits.
RoutingDecision decision_from_logits(std::span<const double> logits,
                                     std::vector<std::size_t> experts);

// ---------------------------------------------------------------------------
// Pick

enum class PickStrategy {
    A,  // forced addition
    B,  // forced replacement
    C,  // range-based addition
    D,  // range-based replacement
    E,  // score bias
};

char strategy_letter(PickStrategy s);
PickStrategy parse_strategy(const std::string& text);

struct PickConfig {
    PickStrategy strategy = PickStrategy::D;
    // Range strategies only act on keys ranked within window_multiplier * k_base.
    std::size_t window_multiplier = 2;
    // Strategy E bias as a fraction of the mean top-k softmax weight.
    double bias_fraction = 0.2;
    std::vector<std::size_t> active_domains;
    // Strategy E: add the bias to the raw logit instead of the softmax score.
    bool bias_in_logit_space = false;

    void validate() const;
    bool operator==(const PickConfig&) const = default;
};

struct KeyExpertSet {
    // domain -> layer -> expert ids
    std::map<std::size_t, std::map<std::size_t, std::vector<std::size_t>>> by_domain;

    bool empty() const;
    // Sorted union of the keys of the given domains at this layer.
    std::vector<std::size_t> keys_for_layer(std::size_t layer,
                                            std::span<const std::size_t> domains) const;
    std::size_t max_keys_per_layer(std::span<const std::size_t> domains,
                                   std::size_t num_layers) const;
    std::vector<std::size_t> domains() const;
    void validate(std::size_t num_experts) const;

    bool operator==(const KeyExpertSet&) const = default;
};

// Applies one Pick strategy on top of a top-k_base decision.
RoutingDecision apply_pick(std::span<const double> logits, const RoutingDecision& base,
                           std::span<const std::size_t> keys, const PickConfig& cfg,
                           std::size_t k_base);

// ---------------------------------------------------------------------------
// Ban

struct PruningConfig {
    double lambda = 0.7;
    double beta = 0.5;
    std::size_t k_min = 3;
    std::size_t k_base = 8;
    // Normalized layer sensitivity L' per layer.
    std::vector<double> layer_scores;
    double r_min = 0.0;
    double r_max = 1.0;

    void validate() const;
    bool operator==(const PruningConfig&) const = default;
};

// T' in [0, 1]: how evenly the token spreads its routing mass.
double token_sensitivity(std::span<const double> logits, const PruningConfig& cfg);

// Rounded k_min + (k_base - k_min) * lambda * (beta L' + (1 - beta) T'),
// clamped to [k_min, k_base].
std::size_t dynamic_k(double l_prime, double t_prime, const PruningConfig& cfg);

RoutingDecision route_ban(std::span<const double> logits, std::size_t layer,
                          const PruningConfig& cfg);

// Ban followed by range-based addition of this layer's keys. The range
// window is measured against k_base, not the pruned K.
RoutingDecision route_banpick(std::span<const double> logits, std::size_t layer,
                              std::span<const std::size_t> keys, const PickConfig& pick_cfg,
                              const PruningConfig& prune_cfg);

// ---------------------------------------------------------------------------
// Baselines from the expert-skipping literature

struct BaselineConfig {
    // dynamic-tau: cumulative softmax mass threshold.
    double tau = 0.9;
    // DES/ODP ceiling; ODP key tokens get exactly this many experts.
    std::size_t k_base = 8;
    // Lowest level DES may prune to.
    std::size_t des_k_low = 4;
    // Median of r_(j)/r_(j+1) for j = des_k_low .. k_base-1.
    std::vector<double> des_medians;
    double odp_attention_z = 2.0;

    bool operator==(const BaselineConfig&) const = default;
};

RoutingDecision route_dynamic_tau(std::span<const double> logits, const BaselineConfig& cfg);
RoutingDecision route_des(std::span<const double> logits, const BaselineConfig& cfg);
RoutingDecision route_odp(std::span<const double> logits, bool is_key_token,
                          const BaselineConfig& cfg);

// ---------------------------------------------------------------------------
// Policy objects

// Per-phase enable switch for the interventions; a disabled phase falls back
// to top-k_base.
struct PhaseMask {
    bool prefill = true;
    bool decode = true;

    bool enabled(Phase phase) const { return phase == Phase::prefill ? prefill : decode; }
    bool operator==(const PhaseMask&) const = default;
};

class BaselinePolicy final : public RoutingPolicy {
public:
    explicit BaselinePolicy(std::size_t k, std::string name = "baseline")
        : k_(k), name_(std::move(name)) {}
    std::string name() const override { return name_; }
    RoutingDecision route(std::span<const double> logits, const RoutingContext&) const override {
        return route_baseline(logits, k_);
    }

private:
    std::size_t k_;
    std::string name_;
};

// All experts, full-softmax weights (the dense mixture).
class SelectAllPolicy final : public RoutingPolicy {
public:
    std::string name() const override { return "all"; }
    RoutingDecision route(std::span<const double> logits, const RoutingContext&) const override {
        return route_baseline(logits, logits.size());
    }
};

// Top-k_base everywhere except one layer, which runs top-k_override.
class LayerOverridePolicy final : public RoutingPolicy {
public:
    LayerOverridePolicy(std::size_t k_base, std::size_t layer, std::size_t k_override)
        : k_base_(k_base), layer_(layer), k_override_(k_override) {}
    std::string name() const override;
    RoutingDecision route(std::span<const double> logits,
                          const RoutingContext& ctx) const override;

private:
    std::size_t k_base_;
    std::size_t layer_;
    std::size_t k_override_;
};

class PickPolicy final : public RoutingPolicy {
public:
    PickPolicy(std::size_t k_base, KeyExpertSet keys, PickConfig cfg, PhaseMask phases = {});
    std::string name() const override;
    RoutingDecision route(std::span<const double> logits,
                          const RoutingContext& ctx) const override;

private:
    std::size_t k_base_;
    KeyExpertSet keys_;
    PickConfig cfg_;
    PhaseMask phases_;
};

class BanPolicy final : public RoutingPolicy {
public:
    explicit BanPolicy(PruningConfig cfg, PhaseMask phases = {});
    std::string name() const override { return "ban"; }
    RoutingDecision route(std::span<const double> logits,
                          const RoutingContext& ctx) const override;

private:
    PruningConfig cfg_;
    PhaseMask phases_;
};

class BanPickPolicy final : public RoutingPolicy {
public:
    BanPickPolicy(KeyExpertSet keys, PickConfig pick_cfg, PruningConfig prune_cfg,
                  PhaseMask phases = {});
    std::string name() const override { return "banpick"; }
    RoutingDecision route(std::span<const double> logits,
                          const RoutingContext& ctx) const override;

private:
    KeyExpertSet keys_;
    PickConfig pick_cfg_;
    PruningConfig prune_cfg_;
    PhaseMask phases_;
};

class DynamicTauPolicy final : public RoutingPolicy {
public:
    explicit DynamicTauPolicy(BaselineConfig cfg);
    std::string name() const override { return "dyntau"; }
    RoutingDecision route(std::span<const double> logits, const RoutingContext&) const override {
        return route_dynamic_tau(logits, cfg_);
    }

private:
    BaselineConfig cfg_;
};

class DesPolicy final : public RoutingPolicy {
public:
    explicit DesPolicy(BaselineConfig cfg);
    std::string name() const override { return "des"; }
    RoutingDecision route(std::span<const double> logits, const RoutingContext&) const override {
        return route_des(logits, cfg_);
    }

private:
    BaselineConfig cfg_;
};

class OdpPolicy final : public RoutingPolicy {
public:
    explicit OdpPolicy(BaselineConfig cfg);
    std::string name() const override { return "odp"; }
    RoutingDecision route(std::span<const double> logits,
                          const RoutingContext& ctx) const override {
        return route_odp(logits, ctx.key_token, cfg_);
    }

private:
    BaselineConfig cfg_;
};

}  // namespace moerlab
