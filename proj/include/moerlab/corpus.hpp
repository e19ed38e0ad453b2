// Copyright (c) 2026 The moerlab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

#include "moerlab/model.hpp"

namespace moerlab {

struct Sequence {
    std::size_t domain = 0;
    std::vector<TokenId> tokens;
    // Correct next token after the sequence (task mode only).
    std::optional<TokenId> answer;

    bool operator==(const Sequence&) const = default;
};

struct Corpus {
    std::vector<Sequence> sequences;
    // Positions [0, prompt_len) are routed as prefill, the rest as decode.
    std::size_t prompt_len = 0;
    std::uint64_t seed = 0;

    std::vector<std::size_t> domains() const;
    Corpus filter_domain(std::size_t domain) const;
    void validate(const ModelConfig& config) const;
    bool operator==(const Corpus&) const = default;
};

struct CorpusOptions {
    std::vector<std::size_t> domains;  // empty: all domains of the model
    std::size_t sequences_per_domain = 32;
    std::size_t seq_len = 16;
    // Task items end with a query token and carry the domain's answer.
    bool task_mode = true;
    std::uint64_t seed = 0;
    // Share of tokens drawn from the domain's own vocabulary slice.
    double in_domain_rate = 0.85;
    // 0 means seq_len / 2.
    std::size_t prompt_len = 0;
};

// Domain-major, sequences_per_domain sequences per listed domain.
Corpus gen_corpus(const ModelConfig& config, const CorpusOptions& options);

}  // namespace moerlab
