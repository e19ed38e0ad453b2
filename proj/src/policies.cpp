// Copyright (c) 2026 The moerlab Authors
// SPDX-License-Identifier: Apache-2.0

#include "moerlab/policies.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <stdexcept>

#include "moerlab/errors.hpp"
#include "moerlab/numerics.hpp"

namespace moerlab {

namespace {

// Descending score, ties to the lower id.
void canonical_order(std::vector<std::size_t>& experts, std::span<const double> scores) {
    std::sort(experts.begin(), experts.end(), [&](std::size_t a, std::size_t b) {
        if (scores[a] != scores[b]) {
            return scores[a] > scores[b];
        }
        return a < b;
    });
}

// 1-based rank of every expert under the topk ordering.
std::vector<std::size_t> ranks_of(std::span<const double> logits) {
    const auto order = argsort_desc(logits);
    std::vector<std::size_t> rank(logits.size());
    for (std::size_t i = 0; i < order.size(); ++i) {
        rank[order[i]] = i + 1;
    }
    return rank;
}

// Keys that are not yet selected and can carry weight, strongest first.
std::vector<std::size_t> pending_keys(std::span<const std::size_t> keys,
                                      const std::vector<std::size_t>& selected,
                                      std::span<const double> logits) {
    std::vector<std::size_t> out;
    for (std::size_t e : keys) {
        if (e >= logits.size()) {
            throw std::invalid_argument("apply_pick: key expert id out of range");
        }
        if (logits[e] == -std::numeric_limits<double>::infinity()) {
            continue;  // pruned
        }
        if (std::find(selected.begin(), selected.end(), e) != selected.end()) {
            continue;
        }
        if (std::find(out.begin(), out.end(), e) == out.end()) {
            out.push_back(e);
        }
    }
    canonical_order(out, logits);
    return out;
}

void add_in_range(std::vector<std::size_t>& selected, std::span<const std::size_t> pending,
                  const std::vector<std::size_t>& rank, std::size_t window, bool ranged) {
    for (std::size_t e : pending) {
        if (!ranged || rank[e] <= window) {
            selected.push_back(e);
        }
    }
}

void replace_in_range(std::vector<std::size_t>& selected, std::span<const std::size_t> pending,
                      std::span<const std::size_t> keys, std::span<const double> logits,
                      const std::vector<std::size_t>& rank, std::size_t window, bool ranged) {
    for (std::size_t e : pending) {
        if (ranged && rank[e] > window) {
            continue;
        }
        // Lowest-weight non-key selected expert; ties replace the higher id.
        std::ptrdiff_t victim = -1;
        for (std::size_t i = 0; i < selected.size(); ++i) {
            const std::size_t s = selected[i];
            if (std::find(keys.begin(), keys.end(), s) != keys.end()) {
                continue;
            }
            if (victim < 0) {
                victim = static_cast<std::ptrdiff_t>(i);
                continue;
            }
            const std::size_t v = selected[static_cast<std::size_t>(victim)];
            if (logits[s] < logits[v] || (logits[s] == logits[v] && s > v)) {
                victim = static_cast<std::ptrdiff_t>(i);
            }
        }
        if (victim < 0) {
            return;
        }
        selected[static_cast<std::size_t>(victim)] = e;
    }
}

// Experts whose logit is not -inf; pruned experts are never routed.
std::size_t routable_count(std::span<const double> logits) {
    return static_cast<std::size_t>(std::count_if(
        logits.begin(), logits.end(), [](double x) { return x != -std::numeric_limits<double>::infinity(); }));
}

}  // namespace

RoutingDecision decision_from_set(std::span<const double> probs,
                                  std::vector<std::size_t> experts) {
    canonical_order(experts, probs);
    double total = 0.0;
    for (std::size_t e : experts) {
        total += probs[e];
    }
    if (!(total > 0.0)) {
        throw std::invalid_argument("decision_from_set: selected experts carry no mass");
    }
    RoutingDecision decision;
    decision.selected.reserve(experts.size());
    for (std::size_t e : experts) {
        decision.selected.push_back({e, probs[e] / total});
    }
    return decision;
}

RoutingDecision decision_from_logits(std::span<const double> logits,
                                     std::vector<std::size_t> experts) {
    if (experts.empty()) {
        throw std::invalid_argument("decision_from_logits: no experts");
    }
    canonical_order(experts, logits);
    const double top = logits[experts.front()];
    if (!std::isfinite(top)) {
        throw std::invalid_argument("decision_from_logits: selected experts carry no mass");
    }
    std::vector<double> mass(experts.size());
    double total = 0.0;
    for (std::size_t i = 0; i < experts.size(); ++i) {
        mass[i] = std::exp(logits[experts[i]] - top);
        total += mass[i];
    }
    RoutingDecision decision;
    decision.selected.reserve(experts.size());
    for (std::size_t i = 0; i < experts.size(); ++i) {
        decision.selected.push_back({experts[i], mass[i] / total});
    }
    return decision;
}

RoutingDecision route_baseline(std::span<const double> logits, std::size_t k) {
    if (k == 0 || k > logits.size()) {
        throw std::invalid_argument("route_baseline: k out of range");
    }
    return decision_from_logits(logits, topk(logits, std::min(k, routable_count(logits))));
}

// ---------------------------------------------------------------------------

char strategy_letter(PickStrategy s) {
    return static_cast<char>('A' + static_cast<int>(s));
}

PickStrategy parse_strategy(const std::string& text) {
    if (text.size() == 1) {
        const char c = static_cast<char>(std::toupper(static_cast<unsigned char>(text[0])));
        if (c >= 'A' && c <= 'E') {
            return static_cast<PickStrategy>(c - 'A');
        }
    }
    throw std::invalid_argument("unknown pick strategy '" + text + "' (expected A-E)");
}

void PickConfig::validate() const {
    if (window_multiplier < 1) {
        throw std::invalid_argument("pick config: window_multiplier must be >= 1");
    }
    if (!(bias_fraction > 0.0 && bias_fraction < 1.0)) {
        throw std::invalid_argument("pick config: bias_fraction must be in (0, 1)");
    }
}

bool KeyExpertSet::empty() const {
    for (const auto& [domain, layers] : by_domain) {
        for (const auto& [layer, experts] : layers) {
            if (!experts.empty()) {
                return false;
            }
        }
    }
    return true;
}

std::vector<std::size_t> KeyExpertSet::keys_for_layer(
    std::size_t layer, std::span<const std::size_t> domains) const {
    std::set<std::size_t> keys;
    for (std::size_t d : domains) {
        auto dit = by_domain.find(d);
        if (dit == by_domain.end()) {
            continue;
        }
        auto lit = dit->second.find(layer);
        if (lit == dit->second.end()) {
            continue;
        }
        keys.insert(lit->second.begin(), lit->second.end());
    }
    return {keys.begin(), keys.end()};
}

std::size_t KeyExpertSet::max_keys_per_layer(std::span<const std::size_t> domains,
                                             std::size_t num_layers) const {
    std::size_t best = 0;
    for (std::size_t l = 0; l < num_layers; ++l) {
        best = std::max(best, keys_for_layer(l, domains).size());
    }
    return best;
}

std::vector<std::size_t> KeyExpertSet::domains() const {
    std::vector<std::size_t> out;
    for (const auto& [d, layers] : by_domain) {
        out.push_back(d);
    }
    return out;
}

void KeyExpertSet::validate(std::size_t num_experts) const {
    for (const auto& [d, layers] : by_domain) {
        for (const auto& [l, experts] : layers) {
            for (std::size_t e : experts) {
                if (e >= num_experts) {
                    throw std::invalid_argument("key expert id out of range");
                }
            }
        }
    }
}

RoutingDecision apply_pick(std::span<const double> logits, const RoutingDecision& base,
                           std::span<const std::size_t> keys, const PickConfig& cfg,
                           std::size_t k_base) {
    if (logits.empty() || base.selected.empty()) {
        throw std::invalid_argument("apply_pick: empty input");
    }
    const auto probs = softmax(logits);
    std::vector<std::size_t> selected = base.experts();
    const auto pending = pending_keys(keys, selected, logits);
    if (pending.empty()) {
        return base;
    }
    const std::size_t window = std::min(cfg.window_multiplier * k_base, logits.size());
    const auto rank = ranks_of(logits);

    switch (cfg.strategy) {
        case PickStrategy::A:
            add_in_range(selected, pending, rank, window, false);
            break;
        case PickStrategy::C:
            add_in_range(selected, pending, rank, window, true);
            break;
        case PickStrategy::B:
            replace_in_range(selected, pending, keys, logits, rank, window, false);
            break;
        case PickStrategy::D:
            replace_in_range(selected, pending, keys, logits, rank, window, true);
            break;
        case PickStrategy::E: {
            const std::size_t k = base.k_used();
            const auto unbiased_top = topk(probs, k);
            double mean = 0.0;
            for (std::size_t e : unbiased_top) {
                mean += probs[e];
            }
            mean /= static_cast<double>(k);
            const double bias = cfg.bias_fraction * mean;
            std::vector<double> biased;
            if (cfg.bias_in_logit_space) {
                biased.assign(logits.begin(), logits.end());
            } else {
                biased = probs;
            }
            for (std::size_t e : keys) {
                if (logits[e] != -std::numeric_limits<double>::infinity()) {
                    biased[e] += bias;
                }
            }
            selected = topk(biased, std::min(k, routable_count(logits)));
            break;
        }
    }
    return decision_from_logits(logits, std::move(selected));
}

// ---------------------------------------------------------------------------

void PruningConfig::validate() const {
    if (!(lambda > 0.0 && lambda < 1.0)) {
        throw std::invalid_argument("pruning config: lambda must be in (0, 1)");
    }
    if (!(beta >= 0.0 && beta <= 1.0)) {
        throw std::invalid_argument("pruning config: beta must be in [0, 1]");
    }
    if (k_min < 1 || k_min >= k_base) {
        throw std::invalid_argument("pruning config: require 1 <= k_min < k_base");
    }
    if (!(r_min < r_max)) {
        throw std::invalid_argument("pruning config: require r_min < r_max");
    }
    for (double s : layer_scores) {
        if (!(s >= 0.0 && s <= 1.0)) {
            throw std::invalid_argument("pruning config: layer scores must be in [0, 1]");
        }
    }
}

double token_sensitivity(std::span<const double> logits, const PruningConfig& cfg) {
    if (!(cfg.r_min < cfg.r_max)) {
        throw std::invalid_argument("token_sensitivity: require r_min < r_max");
    }
    const double ratio = cum_ratio(shifted_exp(logits), cfg.k_min, cfg.k_base);
    const double t = (cfg.r_max - ratio) / (cfg.r_max - cfg.r_min);
    return std::clamp(t, 0.0, 1.0);
}

std::size_t dynamic_k(double l_prime, double t_prime, const PruningConfig& cfg) {
    if (!(l_prime >= 0.0 && l_prime <= 1.0 && t_prime >= 0.0 && t_prime <= 1.0)) {
        throw std::invalid_argument("dynamic_k: sensitivities must be in [0, 1]");
    }
    const double score = cfg.lambda * (cfg.beta * l_prime + (1.0 - cfg.beta) * t_prime);
    const double raw = static_cast<double>(cfg.k_min) +
                       static_cast<double>(cfg.k_base - cfg.k_min) * score;
    // raw >= 0, so half-away-from-zero is half-up. The 1e-9 slack absorbs
    // representation error on exact .5 boundaries such as 3 + 5 * 0.7 * 1.
    const auto k = static_cast<std::size_t>(std::floor(raw + 0.5 + 1e-9));
    return std::clamp(k, cfg.k_min, cfg.k_base);
}

RoutingDecision route_ban(std::span<const double> logits, std::size_t layer,
                          const PruningConfig& cfg) {
    if (layer >= cfg.layer_scores.size()) {
        throw ConfigError("route_ban: no calibrated sensitivity for layer " +
                          std::to_string(layer));
    }
    const double t_prime = token_sensitivity(logits, cfg);
    const std::size_t k = dynamic_k(cfg.layer_scores[layer], t_prime, cfg);
    return route_baseline(logits, k);
}

RoutingDecision route_banpick(std::span<const double> logits, std::size_t layer,
                              std::span<const std::size_t> keys, const PickConfig& pick_cfg,
                              const PruningConfig& prune_cfg) {
    RoutingDecision ban = route_ban(logits, layer, prune_cfg);
    if (keys.empty()) {
        return ban;
    }
    PickConfig range_add = pick_cfg;
    range_add.strategy = PickStrategy::C;
    return apply_pick(logits, ban, keys, range_add, prune_cfg.k_base);
}

// ---------------------------------------------------------------------------

RoutingDecision route_dynamic_tau(std::span<const double> logits, const BaselineConfig& cfg) {
    if (!(cfg.tau > 0.0 && cfg.tau <= 1.0)) {
        throw std::invalid_argument("route_dynamic_tau: tau must be in (0, 1]");
    }
    const auto probs = softmax(logits);
    // Logit order: pruned experts sort last even when probabilities underflow.
    const auto order = argsort_desc(logits);
    std::size_t m = routable_count(logits);
    if (cfg.tau < 1.0) {
        double prefix = 0.0;
        for (std::size_t i = 0; i < order.size(); ++i) {
            prefix += probs[order[i]];
            if (prefix >= cfg.tau) {
                m = i + 1;
                break;
            }
        }
    }
    return decision_from_logits(logits,
                                {order.begin(), order.begin() + static_cast<std::ptrdiff_t>(m)});
}

RoutingDecision route_des(std::span<const double> logits, const BaselineConfig& cfg) {
    if (cfg.des_k_low < 1 || cfg.des_k_low >= cfg.k_base || cfg.k_base > logits.size()) {
        throw ConfigError("route_des: require 1 <= des_k_low < k_base <= num_experts");
    }
    if (cfg.des_medians.size() != cfg.k_base - cfg.des_k_low) {
        throw ConfigError("route_des: DES medians are not calibrated for levels " +
                          std::to_string(cfg.des_k_low) + ".." + std::to_string(cfg.k_base - 1));
    }
    const auto mass = shifted_exp(logits);
    // Logit order: pruned experts sort last even when probabilities underflow.
    const auto order = argsort_desc(logits);
    const std::size_t ceiling = std::min(cfg.k_base, routable_count(logits));
    std::size_t keep = ceiling;
    for (std::size_t j = cfg.des_k_low; j < ceiling; ++j) {
        const double upper = mass[order[j - 1]];
        const double lower = mass[order[j]];
        const bool exceeds =
            lower == 0.0 ? upper > 0.0 : upper / lower > cfg.des_medians[j - cfg.des_k_low];
        if (exceeds) {
            keep = j;
            break;
        }
    }
    return decision_from_logits(logits,
                                {order.begin(), order.begin() + static_cast<std::ptrdiff_t>(keep)});
}

RoutingDecision route_odp(std::span<const double> logits, bool is_key_token,
                          const BaselineConfig& cfg) {
    if (is_key_token) {
        return route_baseline(logits, cfg.k_base);
    }
    return route_des(logits, cfg);
}

// ---------------------------------------------------------------------------

std::string LayerOverridePolicy::name() const {
    return "layer" + std::to_string(layer_) + "-top" + std::to_string(k_override_);
}

RoutingDecision LayerOverridePolicy::route(std::span<const double> logits,
                                           const RoutingContext& ctx) const {
    return route_baseline(logits, ctx.layer == layer_ ? k_override_ : k_base_);
}

PickPolicy::PickPolicy(std::size_t k_base, KeyExpertSet keys, PickConfig cfg, PhaseMask phases)
    : k_base_(k_base), keys_(std::move(keys)), cfg_(std::move(cfg)), phases_(phases) {
    cfg_.validate();
}

std::string PickPolicy::name() const {
    return std::string("pick-") + strategy_letter(cfg_.strategy);
}

RoutingDecision PickPolicy::route(std::span<const double> logits,
                                  const RoutingContext& ctx) const {
    RoutingDecision base = route_baseline(logits, k_base_);
    if (!phases_.enabled(ctx.phase)) {
        return base;
    }
    const auto keys = keys_.keys_for_layer(ctx.layer, cfg_.active_domains);
    if (keys.empty()) {
        return base;
    }
    return apply_pick(logits, base, keys, cfg_, k_base_);
}

BanPolicy::BanPolicy(PruningConfig cfg, PhaseMask phases)
    : cfg_(std::move(cfg)), phases_(phases) {
    cfg_.validate();
}

RoutingDecision BanPolicy::route(std::span<const double> logits,
                                 const RoutingContext& ctx) const {
    if (!phases_.enabled(ctx.phase)) {
        return route_baseline(logits, cfg_.k_base);
    }
    return route_ban(logits, ctx.layer, cfg_);
}

BanPickPolicy::BanPickPolicy(KeyExpertSet keys, PickConfig pick_cfg, PruningConfig prune_cfg,
                             PhaseMask phases)
    : keys_(std::move(keys)),
      pick_cfg_(std::move(pick_cfg)),
      prune_cfg_(std::move(prune_cfg)),
      phases_(phases) {
    pick_cfg_.validate();
    prune_cfg_.validate();
}

RoutingDecision BanPickPolicy::route(std::span<const double> logits,
                                     const RoutingContext& ctx) const {
    if (!phases_.enabled(ctx.phase)) {
        return route_baseline(logits, prune_cfg_.k_base);
    }
    const auto keys = keys_.keys_for_layer(ctx.layer, pick_cfg_.active_domains);
    return route_banpick(logits, ctx.layer, keys, pick_cfg_, prune_cfg_);
}

DynamicTauPolicy::DynamicTauPolicy(BaselineConfig cfg) : cfg_(std::move(cfg)) {
    if (!(cfg_.tau > 0.0 && cfg_.tau <= 1.0)) {
        throw std::invalid_argument("dynamic-tau: tau must be in (0, 1]");
    }
}

DesPolicy::DesPolicy(BaselineConfig cfg) : cfg_(std::move(cfg)) {
    if (cfg_.des_medians.size() + cfg_.des_k_low != cfg_.k_base) {
        throw ConfigError("des: medians are not calibrated");
    }
}

OdpPolicy::OdpPolicy(BaselineConfig cfg) : cfg_(std::move(cfg)) {
    if (cfg_.des_medians.size() + cfg_.des_k_low != cfg_.k_base) {
        throw ConfigError("odp: medians are not calibrated");
    }
}

}  // namespace moerlab
