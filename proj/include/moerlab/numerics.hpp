// Copyright (c) 2026 The moerlab Authors
// SPDX-License-Identifier: Apache-2.0
//
// Scalar/vector primitives shared by the router, the policies and the
// calibration pipelines. Everything here is pure and reentrant.

#pragma once

#include <cstddef>
#include <limits>
#include <span>
#include <vector>

namespace moerlab {

// Returned by restricted_kl when q' vanishes where p' does not.
inline constexpr double kInfiniteDivergence = std::numeric_limits<double>::infinity();

// Max-subtracted softmax. Entries equal to -inf (pruned experts) map to 0;
// at least one entry must be finite.
std::vector<double> softmax(std::span<const double> logits);

// exp(logit - max logit), the unnormalized softmax. Ratios between entries
// do not depend on the other logits, which keeps them bit-stable when an
// unrelated expert is pruned.
std::vector<double> shifted_exp(std::span<const double> logits);

// Indices of the k largest scores, descending; ties go to the lower index.
std::vector<std::size_t> topk(std::span<const double> scores, std::size_t k);

// Full descending ordering with the same tie-break as topk.
std::vector<std::size_t> argsort_desc(std::span<const double> scores);

// KL(p' || q') over the top-n support of p, both sides renormalized there.
// Natural log. Returns kInfiniteDivergence if q' has a hole under p'.
double restricted_kl(std::span<const double> p, std::span<const double> q, std::size_t n);

// Sum of the a largest weights over the sum of the b largest. A zero
// denominator yields 1.
double cum_ratio(std::span<const double> weights, std::size_t a, std::size_t b);

// Round half away from zero.
long round_half_away(double value);

}  // namespace moerlab
