// Copyright (c) 2026 The moerlab Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>
#include <vector>

#include "moerlab/corpus.hpp"
#include "moerlab/model.hpp"
#include "moerlab/policies.hpp"

namespace moerlab {
namespace {

ModelConfig small_config(std::uint64_t seed = 1) {
    ModelConfig c;
    c.num_layers = 4;
    c.num_experts = 16;
    c.k_base = 4;
    c.d_model = 32;
    c.d_expert = 32;
    c.vocab = 64;
    c.num_domains = 2;
    c.max_seq_len = 16;
    c.num_query_tokens = 4;
    c.seed = seed;
    return c;
}

PlantOptions small_plant(std::uint64_t seed = 1) {
    PlantOptions p;
    p.seed = seed;
    p.num_keys = 2;
    return p;
}

ModelParams small_model(std::uint64_t seed = 1) {
    const auto cfg = small_config(seed);
    return build_model(cfg, make_planted_spec(cfg, small_plant(seed)));
}

double norm(std::span<const double> v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
}

TEST(ModelConfig, Validation) {
    auto c = small_config();
    EXPECT_NO_THROW(c.validate());
    c.k_base = 17;
    EXPECT_THROW(c.validate(), std::invalid_argument);
    c = small_config();
    c.vocab = 2 * c.num_domains + c.num_query_tokens - 1;
    EXPECT_THROW(c.validate(), std::invalid_argument);
    c = small_config();
    c.num_query_tokens = 0;
    EXPECT_THROW(c.validate(), std::invalid_argument);
}

TEST(Vocabulary, LayoutIsDisjointAndCoversEverything) {
    const auto c = small_config();
    std::set<std::size_t> seen;
    for (std::size_t d = 0; d < c.num_domains; ++d) {
        EXPECT_EQ(answer_token(c, d), c.vocab - c.num_domains + d);
        seen.insert(answer_token(c, d));
        const auto [lo, hi] = domain_slice(c, d);
        EXPECT_LT(lo, hi);
        for (std::size_t t = lo; t < hi; ++t) seen.insert(t);
    }
    for (std::size_t q = 0; q < c.num_query_tokens; ++q) seen.insert(query_token(c, q));
    EXPECT_EQ(seen.size(), c.vocab);
    EXPECT_EQ(content_vocab(c), c.vocab - c.num_domains - c.num_query_tokens);
    EXPECT_THROW(query_token(c, c.num_query_tokens), std::invalid_argument);
}

TEST(PlantedSpec, KeysOnDistinctLayersAfterTheFirst) {
    const auto c = small_config();
    const auto spec = make_planted_spec(c, small_plant());
    ASSERT_EQ(spec.planted_keys.size(), 2u);
    std::set<std::size_t> layers;
    for (std::size_t i = 0; i < spec.planted_keys.size(); ++i) {
        const auto& k = spec.planted_keys[i];
        EXPECT_GE(k.layer, 1u);
        EXPECT_EQ(k.domain, i % c.num_domains);
        EXPECT_GE(k.gamma, 10.0 * spec.noise_scale);
        layers.insert(k.layer);
        // The key is also a specialized expert of its domain.
        const auto& list = spec.specialized.at({k.layer, k.domain});
        EXPECT_TRUE(std::any_of(list.begin(), list.end(),
                                [&](const SpecializedExpert& s) { return s.expert == k.expert; }));
    }
    EXPECT_EQ(layers.size(), 2u);
    auto too_many = small_plant();
    too_many.num_keys = c.num_layers;
    EXPECT_THROW(make_planted_spec(c, too_many), std::invalid_argument);
}

TEST(BuildModel, DeterministicAndSeedSensitive) {
    EXPECT_EQ(small_model(3), small_model(3));
    EXPECT_NE(small_model(3), small_model(4));
}

TEST(BuildModel, KeyExpertCarriesRankOneAnswerComponent) {
    const auto c = small_config();
    const auto spec = make_planted_spec(c, small_plant());
    const auto model = build_model(c, spec);
    for (const auto& k : spec.planted_keys) {
        const auto& down = model.layers[k.layer].experts[k.expert].down;
        const auto row = down.row(0);
        EXPECT_NEAR(norm(row), k.gamma, 0.1 * k.gamma);
        // Aligned with the answer token's output-head row.
        const auto head = model.output_head.row(answer_token(c, k.domain));
        double dot = 0.0;
        for (std::size_t i = 0; i < row.size(); ++i) dot += row[i] * head[i];
        EXPECT_GT(dot / (norm(row) * norm(head)), 0.9);
    }
    // Non-key FFNs are small noise.
    const auto& other = model.layers[0].experts[0].down;
    double max_norm = 0.0;
    for (std::size_t r = 0; r < other.rows; ++r) max_norm = std::max(max_norm, norm(other.row(r)));
    EXPECT_LT(max_norm, 1.0);
}

TEST(BuildModel, KeyExpertRestoresItsDomainCentroid) {
    const auto c = small_config();
    const auto spec = make_planted_spec(c, small_plant());
    const auto model = build_model(c, spec);
    ASSERT_FALSE(spec.planted_keys.empty());
    for (const auto& k : spec.planted_keys) {
        const auto& expert = model.layers[k.layer].experts[k.expert];
        for (std::size_t i = 0; i < c.d_model; ++i) {
            EXPECT_EQ(expert.up.at(i, 1), expert.up.at(i, 0));
        }
        const auto row = expert.down.row(1);
        EXPECT_NEAR(norm(row), spec.key_centroid_gain * k.gamma, 1e-9 * k.gamma);
        // Centroids are orthogonal to every answer direction.
        const auto head = model.output_head.row(answer_token(c, k.domain));
        double dot = 0.0;
        for (std::size_t i = 0; i < row.size(); ++i) dot += row[i] * head[i];
        EXPECT_NEAR(dot, 0.0, 1e-9 * norm(row) * norm(head));
    }
    auto narrow = c;
    narrow.d_expert = 1;
    EXPECT_THROW(build_model(narrow, spec), std::invalid_argument);
}

TEST(BuildModel, RejectsInconsistentSpec) {
    const auto c = small_config();
    auto spec = make_planted_spec(c, small_plant());
    spec.planted_keys.push_back({0, 99, 0, 40.0});
    EXPECT_THROW(build_model(c, spec), std::invalid_argument);
}

TEST(Forward, TraceCoversEveryPositionAndLayer) {
    const auto model = small_model();
    const std::vector<TokenId> tokens = {1, 2, 3, 4, 5};
    BaselinePolicy policy(4);
    ForwardOptions opts;
    opts.prefill_len = 2;
    const auto r = forward(model, tokens, policy, opts);
    EXPECT_EQ(r.logits.size(), tokens.size());
    EXPECT_EQ(r.logits[0].size(), model.config.vocab);
    ASSERT_EQ(r.trace.records.size(), tokens.size() * model.config.num_layers);
    for (const auto& rec : r.trace.records) {
        EXPECT_EQ(rec.decision.k_used(), 4u);
        EXPECT_EQ(rec.phase, rec.position < 2 ? Phase::prefill : Phase::decode);
        EXPECT_EQ(rec.logits.size(), model.config.num_experts);
    }
    EXPECT_EQ(r.trace.total_activations(), tokens.size() * model.config.num_layers * 4);
}

TEST(Forward, DeterministicAndInputValidation) {
    const auto model = small_model();
    BaselinePolicy policy(4);
    const std::vector<TokenId> tokens = {7, 8, 9};
    EXPECT_EQ(forward(model, tokens, policy).trace, forward(model, tokens, policy).trace);
    EXPECT_THROW(forward(model, std::vector<TokenId>{}, policy), std::invalid_argument);
    EXPECT_THROW(forward(model, std::vector<TokenId>{64}, policy), std::invalid_argument);
    EXPECT_THROW(forward(model, std::vector<TokenId>(17, 1), policy), std::invalid_argument);
}

TEST(Forward, SingleTokenSequence) {
    const auto model = small_model();
    BaselinePolicy policy(4);
    const auto r = forward(model, std::vector<TokenId>{3}, policy);
    EXPECT_EQ(r.logits.size(), 1u);
    EXPECT_EQ(r.trace.records.size(), model.config.num_layers);
    for (double x : r.logits[0]) EXPECT_TRUE(std::isfinite(x));
}

TEST(Forward, PrunedExpertIsNeverSelected) {
    const auto model = small_model();
    SelectAllPolicy all;
    const std::vector<TokenId> tokens = {1, 2, 3, 4};
    const auto r = forward_with_pruned_expert(model, tokens, all, {2, 5});
    for (const auto& rec : r.trace.records) {
        EXPECT_EQ(rec.decision.contains(5), rec.layer != 2);
        if (rec.layer == 2) {
            EXPECT_EQ(rec.decision.k_used(), 15u);
        }
    }
    EXPECT_THROW(forward_with_pruned_expert(model, tokens, all, {9, 0}), std::invalid_argument);
}

TEST(Forward, PruningANeverSelectedExpertChangesNothing) {
    const auto model = small_model();
    BaselinePolicy policy(4);
    const std::vector<TokenId> tokens = {1, 2, 3, 4, 5, 6};
    const auto full = forward(model, tokens, policy);
    std::set<std::size_t> used;
    for (const auto& rec : full.trace.records) {
        if (rec.layer == 1) {
            for (auto e : rec.decision.experts()) used.insert(e);
        }
    }
    std::size_t unused = 0;
    while (used.count(unused)) ++unused;
    ASSERT_LT(unused, model.config.num_experts);
    const auto pruned = forward_with_pruned_expert(model, tokens, policy, {1, unused});
    EXPECT_EQ(pruned.logits, full.logits);
}

TEST(Forward, ReplayFromLayerIsBitIdentical) {
    const auto model = small_model();
    BaselinePolicy policy(4);
    const std::vector<TokenId> tokens = {1, 2, 3, 4, 5};
    ForwardOptions opts;
    LayerCheckpoints cp;
    const auto full = forward(model, tokens, policy, opts, &cp);
    for (std::size_t start = 0; start < model.config.num_layers; ++start) {
        const auto tail = forward_from_layer(model, tokens, policy, opts, cp, start);
        EXPECT_EQ(tail.logits, full.logits) << start;
    }
}

TEST(KeyTokenFlags, OutlierDetection) {
    EXPECT_EQ(key_token_flags(std::vector<double>{5.0}, 2.0), std::vector<bool>{false});
    const std::vector<double> mass = {1, 1, 1, 1, 1, 1, 1, 1, 1, 20};
    const auto flags = key_token_flags(mass, 2.0);
    EXPECT_TRUE(flags[9]);
    EXPECT_EQ(std::count(flags.begin(), flags.end(), true), 1);
    EXPECT_EQ(key_token_flags(std::vector<double>(5, 1.0), 2.0), std::vector<bool>(5, false));
}

TEST(Corpus, DeterministicLayoutAndTaskItems) {
    const auto c = small_config();
    CorpusOptions o;
    o.sequences_per_domain = 5;
    o.seq_len = 8;
    o.seed = 9;
    const auto corpus = gen_corpus(c, o);
    EXPECT_EQ(corpus, gen_corpus(c, o));
    ASSERT_EQ(corpus.sequences.size(), 10u);
    EXPECT_EQ(corpus.prompt_len, 4u);
    for (std::size_t i = 0; i < corpus.sequences.size(); ++i) {
        const auto& s = corpus.sequences[i];
        EXPECT_EQ(s.domain, i / 5);
        ASSERT_EQ(s.tokens.size(), 8u);
        ASSERT_TRUE(s.answer.has_value());
        EXPECT_EQ(*s.answer, answer_token(c, s.domain));
        const TokenId last = s.tokens.back();
        EXPECT_GE(last, query_token(c, 0));
        EXPECT_LE(last, query_token(c, c.num_query_tokens - 1));
        for (std::size_t p = 0; p + 1 < s.tokens.size(); ++p) EXPECT_LT(s.tokens[p], content_vocab(c));
    }
    EXPECT_NO_THROW(corpus.validate(c));
    EXPECT_EQ(corpus.domains(), (std::vector<std::size_t>{0, 1}));
    EXPECT_EQ(corpus.filter_domain(1).sequences.size(), 5u);
}

TEST(Corpus, InDomainRateControlsSliceShare) {
    const auto c = small_config();
    CorpusOptions o;
    o.sequences_per_domain = 50;
    o.seq_len = 16;
    o.task_mode = false;
    o.in_domain_rate = 1.0;
    for (const auto& s : gen_corpus(c, o).sequences) {
        EXPECT_FALSE(s.answer.has_value());
        const auto [lo, hi] = domain_slice(c, s.domain);
        for (TokenId t : s.tokens) {
            EXPECT_GE(t, lo);
            EXPECT_LT(t, hi);
        }
    }
}

TEST(Corpus, RejectsBadOptions) {
    const auto c = small_config();
    CorpusOptions o;
    o.seq_len = c.max_seq_len + 1;
    EXPECT_THROW(gen_corpus(c, o), std::invalid_argument);
    o = {};
    o.domains = {5};
    EXPECT_THROW(gen_corpus(c, o), std::invalid_argument);
    Corpus bad;
    bad.sequences.push_back({0, {999}, std::nullopt});
    EXPECT_THROW(bad.validate(c), std::invalid_argument);
}

}  // namespace
}  // namespace moerlab
