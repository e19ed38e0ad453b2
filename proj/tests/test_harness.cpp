// Copyright (c) 2026 The moerlab Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <stdexcept>
#include <vector>

#include "moerlab/harness.hpp"
#include "moerlab/numerics.hpp"

namespace moerlab {
namespace {

ModelConfig small_config() {
    ModelConfig c;
    c.num_layers = 3;
    c.num_experts = 12;
    c.k_base = 4;
    c.d_model = 16;
    c.d_expert = 8;
    c.vocab = 48;
    c.num_domains = 2;
    c.max_seq_len = 16;
    c.num_query_tokens = 4;
    c.seed = 21;
    return c;
}

struct Fixture {
    ModelConfig config = small_config();
    ModelParams model;
    Corpus corpus;
    KeyExpertSet keys;

    Fixture() {
        PlantOptions p;
        p.seed = config.seed;
        p.num_keys = 2;
        const auto spec = make_planted_spec(config, p);
        model = build_model(config, spec);
        CorpusOptions o;
        o.sequences_per_domain = 5;
        o.seq_len = 6;
        o.seed = 3;
        corpus = gen_corpus(config, o);
        for (const auto& k : spec.planted_keys) {
            keys.by_domain[k.domain][k.layer].push_back(k.expert);
        }
    }
};

const Fixture& fixture() {
    static const Fixture f;
    return f;
}

// Routes layer l to its top (l + 1) experts, so activation counts are known
// without running the model.
class LayerDepthPolicy final : public RoutingPolicy {
public:
    std::string name() const override { return "depth"; }
    RoutingDecision route(std::span<const double> logits,
                          const RoutingContext& ctx) const override {
        return decision_from_logits(logits, topk(logits, ctx.layer + 1));
    }
};

TEST(ExpertFlops, CountsTwoMultiplyAddMatmuls) {
    const auto c = small_config();
    EXPECT_DOUBLE_EQ(expert_flops_per_activation(c), 2.0 * 16 * 8 * 2);
}

TEST(RunExperiment, MatchesIndependentForwardOracle) {
    const auto& f = fixture();
    const BaselinePolicy base(f.config.k_base);
    const auto report = run_experiment(f.model, f.corpus, base);

    std::size_t correct = 0;
    std::size_t items = 0;
    std::vector<std::size_t> dom_correct(2, 0), dom_items(2, 0);
    for (const auto& seq : f.corpus.sequences) {
        ForwardOptions o;
        o.prefill_len = f.corpus.prompt_len;
        const auto r = forward(f.model, seq.tokens, base, o);
        ASSERT_TRUE(seq.answer.has_value());
        const auto& last = r.logits.back();
        std::size_t best = 0;
        for (std::size_t v = 1; v < last.size(); ++v) {
            if (last[v] > last[best]) {
                best = v;
            }
        }
        ++items;
        ++dom_items[seq.domain];
        if (best == *seq.answer) {
            ++correct;
            ++dom_correct[seq.domain];
        }
    }
    EXPECT_EQ(report.policy, "baseline");
    EXPECT_DOUBLE_EQ(report.accuracy, static_cast<double>(correct) / items);
    ASSERT_EQ(report.domain_accuracy.size(), 2u);
    for (std::size_t d = 0; d < 2; ++d) {
        EXPECT_DOUBLE_EQ(report.domain_accuracy[d],
                         static_cast<double>(dom_correct[d]) / dom_items[d]);
    }
    const std::uint64_t token_layers = 10 * 6 * 3;
    EXPECT_EQ(report.token_layers, token_layers);
    EXPECT_EQ(report.activations, token_layers * 4);
    EXPECT_DOUBLE_EQ(report.avg_topk, 4.0);
    EXPECT_DOUBLE_EQ(report.est_flops, token_layers * 4 * 512.0);
    EXPECT_EQ(report.runtime_s, 0.0);
}

TEST(RunExperiment, VariableKActivations) {
    const auto& f = fixture();
    const LayerDepthPolicy depth;
    const auto report = run_experiment(f.model, f.corpus, depth);
    // Per token: 1 + 2 + 3 activations over the three layers.
    EXPECT_EQ(report.activations, 10u * 6u * 6u);
    EXPECT_DOUBLE_EQ(report.avg_topk, 2.0);
    EXPECT_DOUBLE_EQ(report.est_flops, 360.0 * 512.0);
}

TEST(RunExperiment, TraceCoversEverySequence) {
    const auto& f = fixture();
    const BaselinePolicy base(f.config.k_base);
    RoutingTrace trace;
    trace.records.resize(3);  // stale content is replaced
    run_experiment(f.model, f.corpus, base, {}, &trace);
    EXPECT_EQ(trace.policy, "baseline");
    ASSERT_EQ(trace.records.size(), 10u * 6u * 3u);
    for (std::size_t i = 0; i < trace.records.size(); ++i) {
        const auto& rec = trace.records[i];
        EXPECT_EQ(rec.seq_id, i / 18);
        EXPECT_TRUE(rec.logits.empty());
        EXPECT_EQ(rec.phase, rec.position < f.corpus.prompt_len ? Phase::prefill : Phase::decode);
    }
    EXPECT_EQ(trace.total_activations(), 180u * 4u);
}

TEST(RunExperiment, RuntimeOnlyWhenRequested) {
    const auto& f = fixture();
    const BaselinePolicy base(f.config.k_base);
    ExperimentOptions o;
    o.record_runtime = true;
    EXPECT_GT(run_experiment(f.model, f.corpus, base, o).runtime_s, 0.0);
}

TEST(RunExperiment, DomainWithoutItemsIsNaN) {
    const auto& f = fixture();
    const BaselinePolicy base(f.config.k_base);
    const auto report = run_experiment(f.model, f.corpus.filter_domain(1), base);
    EXPECT_TRUE(std::isnan(report.domain_accuracy[0]));
    EXPECT_FALSE(std::isnan(report.domain_accuracy[1]));
    EXPECT_DOUBLE_EQ(report.accuracy, report.domain_accuracy[1]);
}

TEST(RunExperiment, NonTaskCorpusHasZeroAccuracy) {
    const auto& f = fixture();
    CorpusOptions o;
    o.sequences_per_domain = 2;
    o.seq_len = 5;
    o.task_mode = false;
    const BaselinePolicy base(f.config.k_base);
    const auto report = run_experiment(f.model, gen_corpus(f.config, o), base);
    EXPECT_EQ(report.accuracy, 0.0);
    EXPECT_TRUE(std::isnan(report.domain_accuracy[0]));
    EXPECT_EQ(report.activations, 4u * 5u * 3u * 4u);
}

TEST(RunExperiment, RejectsEmptyCorpus) {
    const auto& f = fixture();
    const BaselinePolicy base(f.config.k_base);
    EXPECT_THROW(run_experiment(f.model, Corpus{}, base), std::invalid_argument);
}

TEST(ComparePolicies, KeepsOrderAndMatchesSingleRuns) {
    const auto& f = fixture();
    const BaselinePolicy base(f.config.k_base);
    const LayerDepthPolicy depth;
    const BaselinePolicy narrow(2, "narrow");
    const std::vector<const RoutingPolicy*> policies = {&depth, &base, &narrow};
    std::vector<RoutingTrace> traces;
    const auto reports = compare_policies(f.model, f.corpus, policies, {}, &traces);
    ASSERT_EQ(reports.size(), 3u);
    ASSERT_EQ(traces.size(), 3u);
    for (std::size_t i = 0; i < 3; ++i) {
        const auto single = run_experiment(f.model, f.corpus, *policies[i]);
        EXPECT_EQ(reports[i].policy, single.policy);
        EXPECT_EQ(reports[i].accuracy, single.accuracy);
        EXPECT_EQ(reports[i].activations, single.activations);
        EXPECT_EQ(traces[i].policy, single.policy);
    }
    EXPECT_EQ(reports[0].policy, "depth");
    EXPECT_EQ(reports[2].policy, "narrow");
    EXPECT_THROW(compare_policies(f.model, f.corpus,
                                  std::vector<const RoutingPolicy*>{&base}),
                 std::invalid_argument);
}

TEST(DomainSubsets, AllNonEmptySubsetsSmallestFirst) {
    const std::vector<std::size_t> domains = {0, 2, 5};
    const std::vector<std::vector<std::size_t>> expected = {
        {0}, {2}, {5}, {0, 2}, {0, 5}, {2, 5}, {0, 2, 5}};
    EXPECT_EQ(all_domain_subsets(domains), expected);
    EXPECT_TRUE(all_domain_subsets(std::vector<std::size_t>{}).empty());
}

TEST(MultiDomain, RowsMatchDirectRuns) {
    const auto& f = fixture();
    ASSERT_EQ(f.keys.domains(), (std::vector<std::size_t>{0, 1}));
    const PickConfig pick;
    const auto rows = multi_domain_experiment(f.model, f.corpus, f.keys, {}, pick);
    ASSERT_EQ(rows.size(), 4u);
    EXPECT_TRUE(rows[0].domains.empty());
    const BaselinePolicy base(f.config.k_base);
    const auto base_acc = run_experiment(f.model, f.corpus, base).domain_accuracy;
    for (std::size_t d = 0; d < 2; ++d) {
        EXPECT_EQ(rows[0].domain_accuracy[d], base_acc[d]);
    }
    const std::vector<std::vector<std::size_t>> subsets = {{0}, {1}, {0, 1}};
    for (std::size_t i = 0; i < subsets.size(); ++i) {
        EXPECT_EQ(rows[i + 1].domains, subsets[i]);
        PickConfig cfg = pick;
        cfg.active_domains = subsets[i];
        const PickPolicy policy(f.config.k_base, f.keys, cfg);
        const auto acc = run_experiment(f.model, f.corpus, policy).domain_accuracy;
        for (std::size_t d = 0; d < 2; ++d) {
            EXPECT_EQ(rows[i + 1].domain_accuracy[d], acc[d]);
        }
    }
}

TEST(MultiDomain, RejectsUnknownOrEmptySubsets) {
    const auto& f = fixture();
    const PickConfig pick;
    EXPECT_THROW(multi_domain_experiment(f.model, f.corpus, f.keys, {{7}}, pick),
                 std::invalid_argument);
    EXPECT_THROW(multi_domain_experiment(f.model, f.corpus, f.keys, {{}}, pick),
                 std::invalid_argument);
}

}  // namespace
}  // namespace moerlab
