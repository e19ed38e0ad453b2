// Copyright (c) 2026 The moerlab Authors
// SPDX-License-Identifier: Apache-2.0
//
// File formats. Round-trip artifacts (model binary, JSON documents) reload to
// equal in-memory values; report files (CSV, NDJSON traces, SVG) print reals
// with 9 significant digits. Every write goes to a temporary file that is
// renamed into place.

#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "moerlab/calibration.hpp"
#include "moerlab/corpus.hpp"
#include "moerlab/harness.hpp"
#include "moerlab/model.hpp"
#include "moerlab/policies.hpp"

namespace moerlab {

namespace fs = std::filesystem;

// "%.9g"; non-finite values print as inf, -inf and nan.
std::string format_real(double value);

void write_file_atomic(const fs::path& path, std::string_view content);
// Throws MissingArtifact when the file does not exist.
std::string read_file(const fs::path& path, const std::string& hint = {});

// Model binary: magic "MOERLAB1", ten little-endian u64 config fields
// (num_layers, num_experts, k_base, d_model, d_expert, vocab, num_domains,
// max_seq_len, num_query_tokens, seed), then little-endian f64 blocks in
// row-major order: token embeddings, positions, per layer attention
// (query, key, value, output), per layer gate, per layer per expert (up,
// down), output head.
std::string serialize_model(const ModelParams& params);
ModelParams deserialize_model(std::string_view bytes);
void save_model(const ModelParams& params, const fs::path& path);
ModelParams load_model(const fs::path& path);

std::string synthetic_spec_to_json(const SyntheticModelSpec& spec);
SyntheticModelSpec synthetic_spec_from_json(std::string_view text);

std::string corpus_to_json(const Corpus& corpus);
Corpus corpus_from_json(std::string_view text);

// Key-expert document: {"domains": {"<d>": [{"layer", "expert", "kl_impact"}]}}.
// kl_impact is taken from the report when given, else omitted.
std::string key_experts_to_json(const KeyExpertSet& keys, const KLImpactReport* report = nullptr);
KeyExpertSet key_experts_from_json(std::string_view text);

std::string kl_report_to_json(const KLImpactReport& report);
KLImpactReport kl_report_from_json(std::string_view text);

std::string sensitivity_to_json(const SensitivityProfile& profile);
SensitivityProfile sensitivity_from_json(std::string_view text);

std::string candidates_to_json(const CandidateSet& candidates);

// layer,expert,domain,frequency; rows sorted by (layer, expert, domain).
std::string usage_csv(const std::vector<UsageStats>& per_domain);
// layer,W,L_prime
std::string sensitivity_csv(const SensitivityProfile& profile);
// policy,accuracy,avg_topk,activations,est_flops,runtime_s
std::string metrics_csv(const std::vector<MetricsReport>& reports);
// Reads back the columns metrics_csv writes; other fields stay default.
std::vector<MetricsReport> metrics_from_csv(std::string_view text);
// One NDJSON record per (sequence, position, layer).
std::string trace_ndjson(const RoutingTrace& trace);
// Bar chart of per-expert usage frequency at one layer, one bar group per expert.
std::string usage_svg(const std::vector<UsageStats>& per_domain, std::size_t layer);

struct ReportInputs {
    std::vector<UsageStats> usage;
    std::optional<SensitivityProfile> sensitivity;
    std::optional<KLImpactReport> kl_report;
    std::optional<KeyExpertSet> keys;
    std::vector<MetricsReport> metrics;
};

// Writes usage.csv, usage_layer_<l>.svg per layer, sensitivity.csv,
// key_experts.json (only when keys are given) and metrics.csv. Missing or
// empty inputs give header-only CSV files. Returns the written file names in
// write order.
std::vector<std::string> emit_reports(const ReportInputs& inputs, const fs::path& out_dir);

}  // namespace moerlab
