// Copyright (c) 2026 The moerlab Authors
// SPDX-License-Identifier: Apache-2.0

#include "moerlab/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>

namespace moerlab {

std::vector<double> shifted_exp(std::span<const double> logits) {
    if (logits.empty()) {
        throw std::invalid_argument("softmax: empty input");
    }
    double max_logit = -std::numeric_limits<double>::infinity();
    for (double v : logits) {
        if (std::isnan(v) || v == std::numeric_limits<double>::infinity()) {
            throw std::invalid_argument("softmax: non-finite logit");
        }
        max_logit = std::max(max_logit, v);
    }
    if (!std::isfinite(max_logit)) {
        throw std::invalid_argument("softmax: all logits are -inf");
    }
    std::vector<double> out(logits.size());
    for (std::size_t i = 0; i < logits.size(); ++i) {
        out[i] = std::exp(logits[i] - max_logit);
    }
    return out;
}

std::vector<double> softmax(std::span<const double> logits) {
    std::vector<double> out = shifted_exp(logits);
    double total = 0.0;
    for (double v : out) {
        total += v;
    }
    for (double& v : out) {
        v /= total;
    }
    return out;
}

std::vector<std::size_t> argsort_desc(std::span<const double> scores) {
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
    return order;
}

std::vector<std::size_t> topk(std::span<const double> scores, std::size_t k) {
    if (k == 0 || k > scores.size()) {
        throw std::invalid_argument("topk: k=" + std::to_string(k) + " out of range [1, " +
                                    std::to_string(scores.size()) + "]");
    }
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    auto better = [&](std::size_t a, std::size_t b) {
        if (scores[a] != scores[b]) {
            return scores[a] > scores[b];
        }
        return a < b;
    };
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(),
                      better);
    order.resize(k);
    return order;
}

double restricted_kl(std::span<const double> p, std::span<const double> q, std::size_t n) {
    if (p.size() != q.size()) {
        throw std::invalid_argument("restricted_kl: length mismatch");
    }
    if (n == 0 || n > p.size()) {
        throw std::invalid_argument("restricted_kl: n out of range");
    }
    const auto support = topk(p, n);
    double p_mass = 0.0;
    double q_mass = 0.0;
    for (std::size_t i : support) {
        p_mass += p[i];
        q_mass += q[i];
    }
    if (p_mass <= 0.0) {
        throw std::invalid_argument("restricted_kl: p has no mass on its top-n support");
    }
    double kl = 0.0;
    for (std::size_t i : support) {
        const double pi = p[i] / p_mass;
        if (pi == 0.0) {
            continue;
        }
        const double qi = q_mass > 0.0 ? q[i] / q_mass : 0.0;
        if (qi == 0.0) {
            return kInfiniteDivergence;
        }
        kl += pi * std::log(pi / qi);
    }
    // Rounding can leave a tiny negative residue for near-identical inputs.
    return std::max(kl, 0.0);
}

double cum_ratio(std::span<const double> weights, std::size_t a, std::size_t b) {
    if (a == 0 || a > b) {
        throw std::invalid_argument("cum_ratio: require 1 <= a <= b");
    }
    if (b > weights.size()) {
        throw std::invalid_argument("cum_ratio: b exceeds vector length");
    }
    if (std::any_of(weights.begin(), weights.end(), [](double w) { return w < 0.0; })) {
        throw std::invalid_argument("cum_ratio: negative weight");
    }
    std::vector<double> sorted(weights.begin(), weights.end());
    std::sort(sorted.begin(), sorted.end(), std::greater<>());
    double top_a = 0.0;
    double top_b = 0.0;
    for (std::size_t i = 0; i < b; ++i) {
        top_b += sorted[i];
        if (i < a) {
            top_a += sorted[i];
        }
    }
    if (top_b == 0.0) {
        return 1.0;
    }
    return top_a / top_b;
}

long round_half_away(double value) {
    return std::lround(value);
}

}  // namespace moerlab
