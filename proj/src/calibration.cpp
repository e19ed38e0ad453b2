// Copyright (c) 2026 The moerlab Authors
// SPDX-License-Identifier: Apache-2.0

#include "moerlab/calibration.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "moerlab/errors.hpp"
#include "moerlab/numerics.hpp"

namespace moerlab {

namespace {

ForwardOptions corpus_options(const Corpus& corpus, std::size_t seq_id) {
    ForwardOptions opts;
    opts.prefill_len = corpus.prompt_len;
    opts.seq_id = seq_id;
    return opts;
}

ForwardOptions final_only(ForwardOptions opts) {
    opts.record_trace = false;
    opts.record_router_logits = false;
    opts.final_logits_only = true;
    return opts;
}

std::vector<double> final_distribution(const ForwardResult& result) {
    return softmax(result.logits.back());
}

std::size_t predicted_token(const ForwardResult& result) {
    return topk(result.logits.back(), 1).front();
}

}  // namespace

double UsageStats::frequency(std::size_t layer, std::size_t expert) const {
    if (total_tokens == 0) {
        return 0.0;
    }
    return static_cast<double>(counts[layer][expert]) / static_cast<double>(total_tokens);
}

double UsageStats::uniform_rate() const {
    return num_experts == 0 ? 0.0
                            : static_cast<double>(k_base) / static_cast<double>(num_experts);
}

UsageStats profile_usage(const ModelParams& model, const Corpus& corpus,
                         const RoutingPolicy& policy) {
    if (corpus.sequences.empty()) {
        throw std::invalid_argument("profile_usage: empty corpus");
    }
    corpus.validate(model.config);
    const ModelConfig& cfg = model.config;
    UsageStats stats;
    stats.num_layers = cfg.num_layers;
    stats.num_experts = cfg.num_experts;
    stats.k_base = cfg.k_base;
    stats.counts.assign(cfg.num_layers, std::vector<std::uint64_t>(cfg.num_experts, 0));
    stats.token_assoc.assign(cfg.num_layers,
                             std::vector<std::map<TokenId, std::uint64_t>>(cfg.num_experts));
    const auto domains = corpus.domains();
    if (domains.size() == 1) {
        stats.domain = domains.front();
    }

    for (std::size_t s = 0; s < corpus.sequences.size(); ++s) {
        const auto& seq = corpus.sequences[s];
        ForwardOptions opts = corpus_options(corpus, s);
        opts.record_router_logits = false;
        opts.final_logits_only = true;
        const auto result = forward(model, seq.tokens, policy, opts);
        for (const auto& rec : result.trace.records) {
            for (const auto& ew : rec.decision.selected) {
                stats.counts[rec.layer][ew.expert] += 1;
                stats.token_assoc[rec.layer][ew.expert][seq.tokens[rec.position]] += 1;
            }
        }
        for (std::size_t p = 0; p < seq.tokens.size(); ++p) {
            stats.total_tokens += 1;
            if (p < corpus.prompt_len) {
                stats.prefill_tokens += 1;
            } else {
                stats.decode_tokens += 1;
            }
        }
    }
    return stats;
}

std::vector<UsageStats> profile_usage_by_domain(const ModelParams& model, const Corpus& corpus,
                                                const RoutingPolicy& policy) {
    std::vector<UsageStats> out;
    for (std::size_t d : corpus.domains()) {
        out.push_back(profile_usage(model, corpus.filter_domain(d), policy));
        out.back().domain = d;
    }
    return out;
}

bool CandidateSet::contains(std::size_t layer, std::size_t expert, std::size_t domain) const {
    return std::any_of(candidates.begin(), candidates.end(), [&](const Candidate& c) {
        return c.layer == layer && c.expert == expert && c.domain == domain;
    });
}

CandidateSet select_candidates(const UsageStats& stats, std::size_t top_m, double min_mult) {
    CandidateSet set;
    if (stats.total_tokens == 0 || top_m == 0) {
        return set;
    }
    const double floor = min_mult * stats.uniform_rate();
    for (std::size_t l = 0; l < stats.num_layers; ++l) {
        std::vector<double> freq(stats.num_experts);
        for (std::size_t e = 0; e < stats.num_experts; ++e) {
            freq[e] = stats.frequency(l, e);
        }
        for (std::size_t e : topk(freq, std::min(top_m, stats.num_experts))) {
            if (freq[e] >= floor) {
                set.candidates.push_back({l, e, stats.domain.value_or(0), freq[e]});
            }
        }
    }
    return set;
}

CandidateSet select_candidates(const std::vector<UsageStats>& per_domain, std::size_t top_m,
                               double min_mult) {
    CandidateSet all;
    for (const auto& stats : per_domain) {
        auto part = select_candidates(stats, top_m, min_mult);
        all.candidates.insert(all.candidates.end(), part.candidates.begin(),
                              part.candidates.end());
    }
    std::stable_sort(all.candidates.begin(), all.candidates.end(),
                     [](const Candidate& a, const Candidate& b) {
                         if (a.domain != b.domain) {
                             return a.domain < b.domain;
                         }
                         return a.layer < b.layer;
                     });
    return all;
}

std::size_t default_kl_top_n(const ModelConfig& config) {
    return std::min<std::size_t>(1000, config.vocab);
}

KLImpactReport prune_impact(const ModelParams& model, const Corpus& corpus,
                            const CandidateSet& candidates, std::size_t kl_top_n) {
    const ModelConfig& cfg = model.config;
    corpus.validate(cfg);
    if (kl_top_n == 0 || kl_top_n > cfg.vocab) {
        throw std::invalid_argument("prune_impact: kl_top_n out of range");
    }
    const BaselinePolicy baseline(cfg.k_base);

    KLImpactReport report;
    report.entries.reserve(candidates.candidates.size());
    for (const auto& c : candidates.candidates) {
        report.entries.push_back({c.layer, c.expert, c.domain, 0.0, 0});
    }

    for (std::size_t s = 0; s < corpus.sequences.size(); ++s) {
        const auto& seq = corpus.sequences[s];
        std::vector<std::size_t> mine;
        for (std::size_t i = 0; i < candidates.candidates.size(); ++i) {
            if (candidates.candidates[i].domain == seq.domain) {
                mine.push_back(i);
            }
        }
        if (mine.empty()) {
            continue;
        }
        ForwardOptions opts = corpus_options(corpus, s);
        opts.record_router_logits = false;
        opts.final_logits_only = true;
        LayerCheckpoints checkpoints;
        const auto original = forward(model, seq.tokens, baseline, opts, &checkpoints);
        const auto p = final_distribution(original);

        for (std::size_t i : mine) {
            const auto& c = candidates.candidates[i];
            auto& entry = report.entries[i];
            entry.samples += 1;
            // An expert the intact run never selected at this layer cannot
            // change the output when pruned.
            const bool used = std::any_of(
                original.trace.records.begin(), original.trace.records.end(),
                [&](const TraceRecord& r) { return r.layer == c.layer && r.decision.contains(c.expert); });
            if (!used) {
                continue;
            }
            ForwardOptions pruned_opts = final_only(opts);
            pruned_opts.pruned = PrunedExpert{c.layer, c.expert};
            const auto pruned =
                forward_from_layer(model, seq.tokens, baseline, pruned_opts, checkpoints, c.layer);
            entry.mean_kl += restricted_kl(p, final_distribution(pruned), kl_top_n);
        }
    }
    for (auto& entry : report.entries) {
        if (entry.samples > 0) {
            entry.mean_kl /= static_cast<double>(entry.samples);
        }
    }
    return report;
}

KeyExpertSet identify_key_experts(const KLImpactReport& report, const KeyRule& rule) {
    KeyExpertSet keys;
    std::map<std::size_t, std::vector<const KLImpact*>> by_domain;
    for (const auto& e : report.entries) {
        by_domain[e.domain].push_back(&e);
    }
    for (const auto& [domain, entries] : by_domain) {
        std::vector<const KLImpact*> chosen;
        const bool any_infinite = std::any_of(entries.begin(), entries.end(), [](const KLImpact* e) {
            return !std::isfinite(e->mean_kl);
        });
        if (any_infinite) {
            for (const auto* e : entries) {
                if (!std::isfinite(e->mean_kl)) {
                    chosen.push_back(e);
                }
            }
        } else {
            double mean = 0.0;
            for (const auto* e : entries) {
                mean += e->mean_kl;
            }
            mean /= static_cast<double>(entries.size());
            double var = 0.0;
            for (const auto* e : entries) {
                var += (e->mean_kl - mean) * (e->mean_kl - mean);
            }
            const double threshold =
                mean + rule.z * std::sqrt(var / static_cast<double>(entries.size()));
            for (const auto* e : entries) {
                if (e->mean_kl > threshold) {
                    chosen.push_back(e);
                }
            }
        }
        if (chosen.empty()) {
            const KLImpact* best = entries.front();
            for (const auto* e : entries) {
                const bool better =
                    e->mean_kl > best->mean_kl ||
                    (e->mean_kl == best->mean_kl &&
                     (e->layer < best->layer || (e->layer == best->layer && e->expert < best->expert)));
                if (better) {
                    best = e;
                }
            }
            chosen.push_back(best);
        }
        for (const auto* e : chosen) {
            auto& list = keys.by_domain[domain][e->layer];
            if (std::find(list.begin(), list.end(), e->expert) == list.end()) {
                list.push_back(e->expert);
            }
        }
        for (auto& [layer, list] : keys.by_domain[domain]) {
            std::sort(list.begin(), list.end());
        }
    }
    return keys;
}

LayerSensitivity normalize_layer_scores(std::vector<double> w) {
    if (w.empty()) {
        throw std::invalid_argument("normalize_layer_scores: no layers");
    }
    LayerSensitivity out;
    out.w_min = *std::min_element(w.begin(), w.end());
    out.w_max = *std::max_element(w.begin(), w.end());
    const double span = out.w_max - out.w_min;
    out.l_prime.resize(w.size());
    for (std::size_t l = 0; l < w.size(); ++l) {
        out.l_prime[l] = span < 1e-12 ? 1.0 : (w[l] - out.w_min) / span;
    }
    out.w = std::move(w);
    return out;
}

LayerSensitivity calibrate_layer_sensitivity(const ModelParams& model, const Corpus& corpus,
                                             std::size_t k_low, std::size_t kl_top_n) {
    const ModelConfig& cfg = model.config;
    if (k_low < 1 || k_low >= cfg.k_base) {
        throw std::invalid_argument("calibrate_layer_sensitivity: require 1 <= k_low < k_base");
    }
    if (corpus.sequences.empty()) {
        throw std::invalid_argument("calibrate_layer_sensitivity: empty corpus");
    }
    corpus.validate(cfg);
    const BaselinePolicy baseline(cfg.k_base);
    std::vector<double> w(cfg.num_layers, 0.0);
    for (std::size_t s = 0; s < corpus.sequences.size(); ++s) {
        const auto& seq = corpus.sequences[s];
        const ForwardOptions opts = final_only(corpus_options(corpus, s));
        LayerCheckpoints checkpoints;
        const auto original = forward(model, seq.tokens, baseline, opts, &checkpoints);
        const auto p = final_distribution(original);
        for (std::size_t l = 0; l < cfg.num_layers; ++l) {
            const LayerOverridePolicy reduced(cfg.k_base, l, k_low);
            const auto out = forward_from_layer(model, seq.tokens, reduced, opts, checkpoints, l);
            w[l] += restricted_kl(p, final_distribution(out), kl_top_n);
        }
    }
    for (double& v : w) {
        v /= static_cast<double>(corpus.sequences.size());
    }
    return normalize_layer_scores(std::move(w));
}

std::vector<std::vector<double>> collect_router_logits(const ModelParams& model,
                                                       const Corpus& corpus) {
    corpus.validate(model.config);
    const BaselinePolicy baseline(model.config.k_base);
    std::vector<std::vector<double>> out;
    for (std::size_t s = 0; s < corpus.sequences.size(); ++s) {
        ForwardOptions opts = corpus_options(corpus, s);
        opts.final_logits_only = true;
        auto result = forward(model, corpus.sequences[s].tokens, baseline, opts);
        for (auto& rec : result.trace.records) {
            out.push_back(std::move(rec.logits));
        }
    }
    return out;
}

TokenRatioBounds token_ratio_bounds(const std::vector<std::vector<double>>& router_logits,
                                    std::size_t k_min, std::size_t k_base) {
    if (router_logits.size() < kMinRatioSamples) {
        throw CalibrationError("token ratio calibration needs at least " +
                               std::to_string(kMinRatioSamples) + " token-layer samples, got " +
                               std::to_string(router_logits.size()));
    }
    TokenRatioBounds bounds{std::numeric_limits<double>::infinity(),
                            -std::numeric_limits<double>::infinity()};
    for (const auto& logits : router_logits) {
        const double r = cum_ratio(shifted_exp(logits), k_min, k_base);
        bounds.r_min = std::min(bounds.r_min, r);
        bounds.r_max = std::max(bounds.r_max, r);
    }
    if (!(bounds.r_min < bounds.r_max)) {
        throw CalibrationError("token ratio calibration is degenerate: R_min == R_max == " +
                               std::to_string(bounds.r_max));
    }
    return bounds;
}

TokenRatioBounds calibrate_token_ratios(const ModelParams& model, const Corpus& corpus,
                                        std::size_t k_min) {
    if (k_min < 1 || k_min >= model.config.k_base) {
        throw std::invalid_argument("calibrate_token_ratios: require 1 <= k_min < k_base");
    }
    return token_ratio_bounds(collect_router_logits(model, corpus), k_min, model.config.k_base);
}

std::vector<double> des_medians(const std::vector<std::vector<double>>& router_logits,
                                std::size_t k_low, std::size_t k_base) {
    if (k_low < 1 || k_low >= k_base) {
        throw std::invalid_argument("des_medians: require 1 <= k_low < k_base");
    }
    if (router_logits.size() < kMinRatioSamples) {
        throw CalibrationError("DES calibration needs at least " +
                               std::to_string(kMinRatioSamples) + " token-layer samples");
    }
    std::vector<std::vector<double>> ratios(k_base - k_low);
    for (const auto& logits : router_logits) {
        if (logits.size() < k_base) {
            throw std::invalid_argument("des_medians: fewer experts than k_base");
        }
        const auto mass = shifted_exp(logits);
        const auto order = argsort_desc(logits);
        for (std::size_t j = k_low; j < k_base; ++j) {
            const double lower = mass[order[j]];
            if (lower > 0.0) {
                ratios[j - k_low].push_back(mass[order[j - 1]] / lower);
            }
        }
    }
    std::vector<double> medians;
    for (auto& sample : ratios) {
        if (sample.empty()) {
            throw CalibrationError("DES calibration: every ratio sample had a zero denominator");
        }
        const std::size_t mid = (sample.size() - 1) / 2;
        std::nth_element(sample.begin(), sample.begin() + static_cast<std::ptrdiff_t>(mid),
                         sample.end());
        medians.push_back(sample[mid]);
    }
    return medians;
}

std::vector<double> calibrate_des_medians(const ModelParams& model, const Corpus& corpus,
                                          std::size_t k_low) {
    return des_medians(collect_router_logits(model, corpus), k_low, model.config.k_base);
}

SensitivityProfile calibrate_sensitivity(const ModelParams& model, const Corpus& corpus,
                                         const SensitivityOptions& options) {
    const ModelConfig& cfg = model.config;
    SensitivityProfile profile;
    profile.k_min = options.k_min;
    profile.k_low = options.k_low == 0 ? options.k_min : options.k_low;
    profile.k_base = cfg.k_base;
    profile.des_k_low = options.des_k_low;
    const std::size_t top_n = options.kl_top_n == 0 ? default_kl_top_n(cfg) : options.kl_top_n;

    const auto layers = calibrate_layer_sensitivity(model, corpus, profile.k_low, top_n);
    profile.w = layers.w;
    profile.l_prime = layers.l_prime;
    profile.w_min = layers.w_min;
    profile.w_max = layers.w_max;

    const auto logits = collect_router_logits(model, corpus);
    const auto bounds = token_ratio_bounds(logits, profile.k_min, cfg.k_base);
    profile.r_min = bounds.r_min;
    profile.r_max = bounds.r_max;
    profile.des_medians = des_medians(logits, profile.des_k_low, cfg.k_base);
    return profile;
}

FailureSetResult validate_failure_set(const ModelParams& model, const KeyExpertSet& keys,
                                      const Corpus& tasks) {
    const ModelConfig& cfg = model.config;
    tasks.validate(cfg);
    const BaselinePolicy baseline(cfg.k_base);
    FailureSetResult result;
    for (std::size_t s = 0; s < tasks.sequences.size(); ++s) {
        const auto& seq = tasks.sequences[s];
        if (!seq.answer) {
            throw std::invalid_argument("validate_failure_set: task item without an answer");
        }
        const ForwardOptions opts = final_only(corpus_options(tasks, s));
        if (predicted_token(forward(model, seq.tokens, baseline, opts)) == *seq.answer) {
            continue;
        }
        result.failure_set_size += 1;
        PickConfig forced;
        forced.strategy = PickStrategy::A;
        forced.active_domains = {seq.domain};
        const PickPolicy enhanced(cfg.k_base, keys, forced);
        if (predicted_token(forward(model, seq.tokens, enhanced, opts)) == *seq.answer) {
            result.enhanced_correct += 1;
        }
    }
    return result;
}

}  // namespace moerlab
