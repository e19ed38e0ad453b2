// Copyright (c) 2026 The moerlab Authors
// SPDX-License-Identifier: Apache-2.0
//
// The contract between the MoE forward pass and a routing policy: per token
// and layer the model hands over raw router logits plus context, the policy
// returns which experts run and with what mixing weights.

#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace moerlab {

enum class Phase { prefill, decode };

const char* phase_name(Phase phase);

struct ExpertWeight {
    std::size_t expert = 0;
    double weight = 0.0;

    bool operator==(const ExpertWeight&) const = default;
};

struct RoutingDecision {
    std::vector<ExpertWeight> selected;

    std::size_t k_used() const { return selected.size(); }
    bool contains(std::size_t expert) const;
    std::vector<std::size_t> experts() const;

    bool operator==(const RoutingDecision&) const = default;
};

struct RoutingContext {
    std::size_t layer = 0;
    std::size_t position = 0;
    Phase phase = Phase::prefill;
    // Attention-mass outlier flag for this position at this layer.
    bool key_token = false;
};

class RoutingPolicy {
public:
    virtual ~RoutingPolicy() = default;
    virtual std::string name() const = 0;
    virtual RoutingDecision route(std::span<const double> logits,
                                  const RoutingContext& ctx) const = 0;
};

// Throws ContractViolation unless ids are < num_experts and unique, weights
// are finite and non-negative and sum to 1 within tolerance.
void validate_decision(const RoutingDecision& decision, std::size_t num_experts,
                       double tolerance = 1e-9);

}  // namespace moerlab
