// Copyright (c) 2026 The moerlab Authors
// SPDX-License-Identifier: Apache-2.0

#include "moerlab/corpus.hpp"

#include <algorithm>
#include <numeric>
#include <set>
#include <stdexcept>
#include <string>

#include "moerlab/rng.hpp"

namespace moerlab {

std::vector<std::size_t> Corpus::domains() const {
    std::set<std::size_t> ds;
    for (const auto& s : sequences) {
        ds.insert(s.domain);
    }
    return {ds.begin(), ds.end()};
}

Corpus Corpus::filter_domain(std::size_t domain) const {
    Corpus out;
    out.prompt_len = prompt_len;
    out.seed = seed;
    for (const auto& s : sequences) {
        if (s.domain == domain) {
            out.sequences.push_back(s);
        }
    }
    return out;
}

void Corpus::validate(const ModelConfig& config) const {
    for (const auto& s : sequences) {
        if (s.domain >= config.num_domains) {
            throw std::invalid_argument("corpus: domain label " + std::to_string(s.domain) +
                                        " outside the model");
        }
        if (s.tokens.empty() || s.tokens.size() > config.max_seq_len) {
            throw std::invalid_argument("corpus: sequence length outside [1, max_seq_len]");
        }
        for (TokenId t : s.tokens) {
            if (t >= config.vocab) {
                throw std::invalid_argument("corpus: token id outside vocabulary");
            }
        }
        if (s.answer && *s.answer >= config.vocab) {
            throw std::invalid_argument("corpus: answer token outside vocabulary");
        }
    }
}

Corpus gen_corpus(const ModelConfig& config, const CorpusOptions& options) {
    config.validate();
    if (options.sequences_per_domain < 1 || options.seq_len < 1) {
        throw std::invalid_argument("gen_corpus: sizes must be positive");
    }
    if (options.seq_len > config.max_seq_len) {
        throw std::invalid_argument("gen_corpus: seq_len exceeds max_seq_len");
    }
    if (!(options.in_domain_rate >= 0.0 && options.in_domain_rate <= 1.0)) {
        throw std::invalid_argument("gen_corpus: in_domain_rate must be in [0, 1]");
    }
    std::vector<std::size_t> domains = options.domains;
    if (domains.empty()) {
        domains.resize(config.num_domains);
        std::iota(domains.begin(), domains.end(), std::size_t{0});
    }
    for (std::size_t d : domains) {
        if (d >= config.num_domains) {
            throw std::invalid_argument("gen_corpus: unknown domain " + std::to_string(d));
        }
    }

    const std::size_t content = content_vocab(config);
    Corpus corpus;
    corpus.seed = options.seed;
    corpus.prompt_len = options.prompt_len == 0 ? options.seq_len / 2 : options.prompt_len;

    for (std::size_t d : domains) {
        Rng rng(mix_seed(options.seed, 1000 + d));
        // Zipf-like preference over a seeded permutation of the slice.
        const auto [begin, end] = domain_slice(config, d);
        std::vector<TokenId> slice(end - begin);
        std::iota(slice.begin(), slice.end(), static_cast<TokenId>(begin));
        for (std::size_t i = slice.size(); i > 1; --i) {
            std::swap(slice[i - 1], slice[rng.below(i)]);
        }
        std::vector<double> cdf(slice.size());
        double acc = 0.0;
        for (std::size_t r = 0; r < slice.size(); ++r) {
            acc += 1.0 / static_cast<double>(r + 1);
            cdf[r] = acc;
        }
        for (double& c : cdf) {
            c /= acc;
        }

        for (std::size_t s = 0; s < options.sequences_per_domain; ++s) {
            Sequence seq;
            seq.domain = d;
            seq.tokens.reserve(options.seq_len);
            const std::size_t body = options.task_mode ? options.seq_len - 1 : options.seq_len;
            for (std::size_t p = 0; p < body; ++p) {
                if (rng.uniform() < options.in_domain_rate) {
                    const double u = rng.uniform();
                    const auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
                    const std::size_t r =
                        std::min<std::size_t>(static_cast<std::size_t>(it - cdf.begin()),
                                              slice.size() - 1);
                    seq.tokens.push_back(slice[r]);
                } else {
                    seq.tokens.push_back(static_cast<TokenId>(rng.below(content)));
                }
            }
            if (options.task_mode) {
                seq.tokens.push_back(
                    static_cast<TokenId>(query_token(config, rng.below(config.num_query_tokens))));
                seq.answer = static_cast<TokenId>(answer_token(config, d));
            }
            corpus.sequences.push_back(std::move(seq));
        }
    }
    return corpus;
}

}  // namespace moerlab
