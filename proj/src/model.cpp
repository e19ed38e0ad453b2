// Copyright (c) 2026 The moerlab Authors
// SPDX-License-Identifier: Apache-2.0

#include "moerlab/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <numeric>
#include <set>
#include <stdexcept>
#include <string>

#include "moerlab/errors.hpp"
#include "moerlab/numerics.hpp"
#include "moerlab/rng.hpp"

namespace moerlab {

namespace {

using Vec = std::vector<double>;

// Stream ids for independent parameter blocks.
enum Stream : std::uint64_t {
    kDirections = 1,
    kEmbeddings,
    kPositions,
    kAttention,
    kGates,
    kExperts,
    kHead,
    kPlanting,
};

void fill_normal(Matrix& m, Rng& rng, double scale) {
    for (double& v : m.data) {
        v = scale * rng.normal();
    }
}

// Four fixed lanes of partial sums. The association order is part of the
// code, not the optimizer, so results stay reproducible while the lanes map
// onto SIMD registers.
using Lanes = double __attribute__((vector_size(16)));

double dot(std::span<const double> a, std::span<const double> b) {
    const std::size_t n = a.size();
    Lanes lo = {0.0, 0.0};
    Lanes hi = {0.0, 0.0};
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        Lanes xa, xb, ya, yb;
        std::memcpy(&xa, a.data() + i, sizeof(Lanes));
        std::memcpy(&xb, a.data() + i + 2, sizeof(Lanes));
        std::memcpy(&ya, b.data() + i, sizeof(Lanes));
        std::memcpy(&yb, b.data() + i + 2, sizeof(Lanes));
        lo += xa * ya;
        hi += xb * yb;
    }
    double tail = 0.0;
    for (; i < n; ++i) {
        tail += a[i] * b[i];
    }
    return ((lo[0] + lo[1]) + (hi[0] + hi[1])) + tail;
}

void matvec(const Matrix& m, std::span<const double> x, std::span<double> out) {
    for (std::size_t r = 0; r < m.rows; ++r) {
        out[r] = dot(m.row(r), x);
    }
}

Vec unit(std::span<const double> x) {
    const double norm = std::sqrt(dot(x, x));
    Vec out(x.begin(), x.end());
    if (norm > 1e-12) {
        for (double& v : out) {
            v /= norm;
        }
    }
    return out;
}

// Orthonormal directions: the first num_domains are domain centroids, the
// next num_domains are answer directions.
std::vector<Vec> planted_directions(const ModelConfig& config) {
    Rng rng(mix_seed(config.seed, kDirections));
    std::vector<Vec> basis;
    const std::size_t count = 2 * config.num_domains;
    while (basis.size() < count) {
        Vec v(config.d_model);
        for (double& x : v) {
            x = rng.normal();
        }
        for (const Vec& b : basis) {
            const double proj = dot(v, b);
            for (std::size_t i = 0; i < v.size(); ++i) {
                v[i] -= proj * b[i];
            }
        }
        const double norm = std::sqrt(dot(v, v));
        if (norm < 1e-6) {
            continue;
        }
        for (double& x : v) {
            x /= norm;
        }
        basis.push_back(std::move(v));
    }
    return basis;
}

}  // namespace

const char* phase_name(Phase phase) {
    return phase == Phase::prefill ? "prefill" : "decode";
}

bool RoutingDecision::contains(std::size_t expert) const {
    return std::any_of(selected.begin(), selected.end(),
                       [&](const ExpertWeight& ew) { return ew.expert == expert; });
}

std::vector<std::size_t> RoutingDecision::experts() const {
    std::vector<std::size_t> out;
    out.reserve(selected.size());
    for (const auto& ew : selected) {
        out.push_back(ew.expert);
    }
    return out;
}

void validate_decision(const RoutingDecision& decision, std::size_t num_experts,
                       double tolerance) {
    if (decision.selected.empty()) {
        throw ContractViolation("routing decision selects no expert");
    }
    std::set<std::size_t> seen;
    double total = 0.0;
    for (const auto& ew : decision.selected) {
        if (ew.expert >= num_experts) {
            throw ContractViolation("routing decision uses expert id " +
                                    std::to_string(ew.expert) + " >= " +
                                    std::to_string(num_experts));
        }
        if (!seen.insert(ew.expert).second) {
            throw ContractViolation("routing decision repeats expert " +
                                    std::to_string(ew.expert));
        }
        if (!std::isfinite(ew.weight) || ew.weight < 0.0) {
            throw ContractViolation("routing decision has an invalid weight");
        }
        total += ew.weight;
    }
    if (std::abs(total - 1.0) > tolerance) {
        throw ContractViolation("routing weights sum to " + std::to_string(total));
    }
}

void ModelConfig::validate() const {
    if (num_layers < 1 || num_experts < 1 || d_model < 1 || d_expert < 1 || num_domains < 1 ||
        max_seq_len < 1 || num_query_tokens < 1) {
        throw std::invalid_argument("model config: dimensions must be positive");
    }
    if (k_base < 1 || k_base > num_experts) {
        throw std::invalid_argument("model config: k_base must be in [1, num_experts]");
    }
    if (vocab < 2 * num_domains + num_query_tokens) {
        throw std::invalid_argument(
            "model config: vocab must hold the answer, query and per-domain content tokens");
    }
    if (2 * num_domains > d_model) {
        throw std::invalid_argument("model config: d_model too small for the planted directions");
    }
}

void SyntheticModelSpec::validate(const ModelConfig& config) const {
    auto fail = [](const std::string& msg) {
        throw std::invalid_argument("synthetic spec: " + msg);
    };
    if (!(noise_scale >= 0.0) || !(embedding_noise > 0.0) || !(query_scale >= 0.0) || !(ffn_noise >= 0.0) ||
        !(head_noise >= 0.0) || !(attention_scale >= 0.0) || !(attention_value_gain >= 0.0) ||
        !(key_centroid_gain >= 0.0) || !(position_scale >= 0.0)) {
        fail("noise scales must be non-negative and embedding_noise positive");
    }
    if (!planted_keys.empty() && config.d_expert < 2) {
        fail("planted keys need d_expert >= 2");
    }
    for (const auto& [key, experts] : specialized) {
        const auto [layer, domain] = key;
        if (layer >= config.num_layers || domain >= config.num_domains) {
            fail("specialized entry outside the model");
        }
        std::set<std::size_t> ids;
        for (const auto& s : experts) {
            if (s.expert >= config.num_experts) {
                fail("specialized expert id out of range");
            }
            if (!(s.alpha > 0.0)) {
                fail("alignment strength must be positive");
            }
            if (!ids.insert(s.expert).second) {
                fail("duplicate specialized expert");
            }
        }
    }
    std::set<std::pair<std::size_t, std::size_t>> key_slots;
    for (const auto& k : planted_keys) {
        if (k.layer >= config.num_layers || k.expert >= config.num_experts ||
            k.domain >= config.num_domains) {
            fail("planted key outside the model");
        }
        if (!(k.gamma > 0.0)) {
            fail("planted key strength must be positive");
        }
        if (!key_slots.insert({k.layer, k.expert}).second) {
            fail("expert planted as key twice");
        }
        auto it = specialized.find({k.layer, k.domain});
        const bool listed =
            it != specialized.end() &&
            std::any_of(it->second.begin(), it->second.end(),
                        [&](const SpecializedExpert& s) { return s.expert == k.expert; });
        if (!listed) {
            fail("planted key is not specialized for its domain");
        }
    }
}

SyntheticModelSpec make_planted_spec(const ModelConfig& config, const PlantOptions& options) {
    config.validate();
    const std::size_t per_layer =
        config.num_domains * options.specialized_per_domain +
        (options.num_keys + config.num_layers - 1) / config.num_layers;
    if (per_layer > config.num_experts) {
        throw std::invalid_argument("make_planted_spec: not enough experts per layer");
    }
    // Keys skip layer 0 when possible: the first layer has seen almost no
    // context at the query position.
    const std::size_t first_key_layer = config.num_layers > 1 ? 1 : 0;
    if (options.num_keys > config.num_layers - first_key_layer) {
        throw std::invalid_argument("make_planted_spec: keys must sit on distinct layers");
    }
    Rng rng(mix_seed(options.seed, kPlanting));
    SyntheticModelSpec spec;
    spec.noise_scale = options.noise_scale;

    // Random layer order for keys; key i goes to domain i mod D.
    std::vector<std::size_t> layers(config.num_layers - first_key_layer);
    std::iota(layers.begin(), layers.end(), first_key_layer);
    for (std::size_t i = layers.size(); i > 1; --i) {
        std::swap(layers[i - 1], layers[rng.below(i)]);
    }

    std::vector<std::vector<std::size_t>> pools(config.num_layers);
    for (std::size_t l = 0; l < config.num_layers; ++l) {
        auto& pool = pools[l];
        pool.resize(config.num_experts);
        std::iota(pool.begin(), pool.end(), std::size_t{0});
        for (std::size_t i = pool.size(); i > 1; --i) {
            std::swap(pool[i - 1], pool[rng.below(i)]);
        }
        std::size_t next = 0;
        for (std::size_t d = 0; d < config.num_domains; ++d) {
            auto& list = spec.specialized[{l, d}];
            for (std::size_t j = 0; j < options.specialized_per_domain; ++j) {
                list.push_back({pool[next++], options.alpha});
            }
        }
        pool.erase(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(next));
    }
    for (std::size_t i = 0; i < options.num_keys; ++i) {
        const std::size_t layer = layers[i];
        const std::size_t domain = i % config.num_domains;
        const std::size_t expert = pools[layer].front();
        pools[layer].erase(pools[layer].begin());
        spec.specialized[{layer, domain}].push_back({expert, options.key_alpha});
        spec.planted_keys.push_back({layer, expert, domain, options.gamma});
    }
    return spec;
}

std::size_t answer_token(const ModelConfig& config, std::size_t domain) {
    return config.vocab - config.num_domains + domain;
}

std::size_t query_token(const ModelConfig& config, std::size_t index) {
    if (index >= config.num_query_tokens) {
        throw std::invalid_argument("query_token: index out of range");
    }
    return content_vocab(config) + index;
}

std::size_t content_vocab(const ModelConfig& config) {
    return config.vocab - config.num_domains - config.num_query_tokens;
}

std::pair<std::size_t, std::size_t> domain_slice(const ModelConfig& config, std::size_t domain) {
    const std::size_t content = content_vocab(config);
    const std::size_t width = content / config.num_domains;
    const std::size_t begin = domain * width;
    const std::size_t end = domain + 1 == config.num_domains ? content : begin + width;
    return {begin, end};
}

ModelParams build_model(const ModelConfig& config, const SyntheticModelSpec& spec) {
    config.validate();
    spec.validate(config);

    const std::size_t d = config.d_model;
    const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));
    const auto directions = planted_directions(config);
    auto centroid = [&](std::size_t domain) -> const Vec& { return directions[domain]; };
    auto answer_dir = [&](std::size_t domain) -> const Vec& {
        return directions[config.num_domains + domain];
    };

    ModelParams params;
    params.config = config;

    {
        Rng rng(mix_seed(config.seed, kEmbeddings));
        params.token_embeddings = Matrix(config.vocab, d);
        fill_normal(params.token_embeddings, rng, spec.embedding_noise * inv_sqrt_d);
        // Query tokens are noise orthogonal to every planted direction, so
        // they move router logits without carrying domain or answer signal.
        for (std::size_t q = 0; q < config.num_query_tokens; ++q) {
            auto row = params.token_embeddings.row(query_token(config, q));
            for (const Vec& dir : directions) {
                const double proj = dot(row, dir);
                for (std::size_t i = 0; i < d; ++i) {
                    row[i] -= proj * dir[i];
                }
            }
            for (double& v : row) {
                v *= spec.query_scale / spec.embedding_noise;
            }
        }
        for (std::size_t dom = 0; dom < config.num_domains; ++dom) {
            const auto [begin, end] = domain_slice(config, dom);
            for (std::size_t t = begin; t < end; ++t) {
                auto row = params.token_embeddings.row(t);
                for (std::size_t i = 0; i < d; ++i) {
                    row[i] += centroid(dom)[i];
                }
            }
        }
    }
    {
        Rng rng(mix_seed(config.seed, kPositions));
        params.positions = Matrix(config.max_seq_len, d);
        fill_normal(params.positions, rng, spec.position_scale * inv_sqrt_d);
    }

    Rng attn_rng(mix_seed(config.seed, kAttention));
    Rng gate_rng(mix_seed(config.seed, kGates));
    Rng expert_rng(mix_seed(config.seed, kExperts));
    params.layers.resize(config.num_layers);
    for (std::size_t l = 0; l < config.num_layers; ++l) {
        LayerParams& layer = params.layers[l];
        for (Matrix* m : {&layer.attention.query, &layer.attention.key, &layer.attention.value,
                          &layer.attention.output}) {
            *m = Matrix(d, d);
            fill_normal(*m, attn_rng, spec.attention_scale * inv_sqrt_d);
        }
        // The first layer's value projection copies the centroid subspace, so
        // every later position carries its context's domain, but never the
        // answer direction.
        for (std::size_t dom = 0; l == 0 && dom < config.num_domains; ++dom) {
            const Vec& c = centroid(dom);
            for (std::size_t i = 0; i < d; ++i) {
                for (std::size_t j = 0; j < d; ++j) {
                    layer.attention.value.at(i, j) += spec.attention_value_gain * c[i] * c[j];
                }
            }
        }
        for (std::size_t i = 0; i < d; ++i) {
            layer.attention.output.at(i, i) += 1.0;
        }

        layer.gate = Matrix(config.num_experts, d);
        fill_normal(layer.gate, gate_rng, spec.noise_scale);
        for (std::size_t dom = 0; dom < config.num_domains; ++dom) {
            auto it = spec.specialized.find({l, dom});
            if (it == spec.specialized.end()) {
                continue;
            }
            for (const auto& s : it->second) {
                auto row = layer.gate.row(s.expert);
                for (std::size_t i = 0; i < d; ++i) {
                    row[i] += s.alpha * centroid(dom)[i];
                }
            }
        }

        layer.experts.resize(config.num_experts);
        for (auto& expert : layer.experts) {
            expert.up = Matrix(d, config.d_expert);
            fill_normal(expert.up, expert_rng, inv_sqrt_d);
            expert.down = Matrix(config.d_expert, d);
            fill_normal(expert.down, expert_rng,
                        spec.ffn_noise / std::sqrt(static_cast<double>(config.d_expert)));
        }
    }

    // Rank-1 planting: hidden unit 0 reads the domain centroid against the
    // other centroids, and its down-projection row writes gamma along the
    // answer direction.
    for (const auto& key : spec.planted_keys) {
        ExpertWeights& expert = params.layers[key.layer].experts[key.expert];
        for (std::size_t i = 0; i < d; ++i) {
            double v = centroid(key.domain)[i];
            for (std::size_t dom = 0; dom < config.num_domains; ++dom) {
                if (dom != key.domain) {
                    v -= centroid(dom)[i];
                }
            }
            expert.up.at(i, 0) = v;
        }
        auto down_row = expert.down.row(0);
        for (std::size_t i = 0; i < d; ++i) {
            down_row[i] = key.gamma * answer_dir(key.domain)[i];
        }
        // Hidden unit 1 reads the same contrast and restores the domain
        // centroid's share of the residual.
        for (std::size_t i = 0; i < d; ++i) {
            expert.up.at(i, 1) = expert.up.at(i, 0);
        }
        auto centroid_row = expert.down.row(1);
        for (std::size_t i = 0; i < d; ++i) {
            centroid_row[i] = spec.key_centroid_gain * key.gamma * centroid(key.domain)[i];
        }
    }

    {
        Rng rng(mix_seed(config.seed, kHead));
        params.output_head = Matrix(config.vocab, d);
        fill_normal(params.output_head, rng, spec.head_noise * inv_sqrt_d);
        for (std::size_t dom = 0; dom < config.num_domains; ++dom) {
            auto row = params.output_head.row(answer_token(config, dom));
            for (std::size_t i = 0; i < d; ++i) {
                row[i] = spec.answer_gain * answer_dir(dom)[i];
            }
        }
    }
    return params;
}

namespace {

// Row-vector convention: hidden = relu(x * up), out = hidden * down. Both
// products are row axpys, so every output element accumulates in a fixed
// order and zero hidden units are skipped.
void expert_output_into(const ExpertWeights& expert, std::span<const double> input,
                        std::span<double> hidden, std::span<double> out) {
    std::fill(hidden.begin(), hidden.end(), 0.0);
    const std::size_t h = hidden.size();
    for (std::size_t i = 0; i < input.size(); ++i) {
        const double xi = input[i];
        const double* row = expert.up.data.data() + i * h;
        for (std::size_t j = 0; j < h; ++j) {
            hidden[j] += xi * row[j];
        }
    }
    std::fill(out.begin(), out.end(), 0.0);
    const std::size_t d = out.size();
    for (std::size_t j = 0; j < h; ++j) {
        const double hj = hidden[j];
        if (hj <= 0.0) {
            continue;
        }
        const double* row = expert.down.data.data() + j * d;
        for (std::size_t c = 0; c < d; ++c) {
            out[c] += hj * row[c];
        }
    }
}

}  // namespace

std::vector<double> expert_output(const ExpertWeights& expert, std::span<const double> input) {
    Vec hidden(expert.up.cols);
    Vec out(expert.down.cols);
    expert_output_into(expert, input, hidden, out);
    return out;
}

std::size_t RoutingTrace::total_activations() const {
    std::size_t total = 0;
    for (const auto& r : records) {
        total += r.decision.k_used();
    }
    return total;
}

std::vector<bool> key_token_flags(std::span<const double> attention_mass, double z) {
    const std::size_t n = attention_mass.size();
    std::vector<bool> flags(n, false);
    if (n < 2) {
        return flags;
    }
    double mean = 0.0;
    for (double m : attention_mass) {
        mean += m;
    }
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (double m : attention_mass) {
        var += (m - mean) * (m - mean);
    }
    const double stddev = std::sqrt(var / static_cast<double>(n));
    for (std::size_t i = 0; i < n; ++i) {
        flags[i] = attention_mass[i] > mean + z * stddev;
    }
    return flags;
}

namespace {

ForwardResult run_layers(const ModelParams& params, std::span<const TokenId> tokens,
                         const RoutingPolicy& policy, const ForwardOptions& options,
                         std::vector<Vec> states, std::size_t start_layer,
                         LayerCheckpoints* capture) {
    const ModelConfig& cfg = params.config;
    const std::size_t n = tokens.size();
    const std::size_t d = cfg.d_model;
    const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));

    ForwardResult result;
    result.trace.policy = policy.name();
    result.attention_mass.assign(n, 0.0);
    if (capture != nullptr) {
        capture->states.assign(cfg.num_layers, {});
    }

    Vec q_all(n * d), k_all(n * d), v_all(n * d);
    Vec logits(cfg.num_experts);
    Vec scores(n);
    Vec mixed(d), projected(d), layer_out(d);
    Vec hidden(cfg.d_expert), expert_out(d);
    std::vector<Vec> normed(n);

    for (std::size_t l = start_layer; l < cfg.num_layers; ++l) {
        if (capture != nullptr) {
            capture->states[l] = states;
        }
        const LayerParams& layer = params.layers[l];

        // Causal single-head attention on unit-normalized inputs.
        for (std::size_t i = 0; i < n; ++i) {
            normed[i] = unit(states[i]);
            matvec(layer.attention.query, normed[i], {q_all.data() + i * d, d});
            matvec(layer.attention.key, normed[i], {k_all.data() + i * d, d});
            matvec(layer.attention.value, normed[i], {v_all.data() + i * d, d});
        }
        Vec column_mass(n, 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            const std::span<const double> qi{q_all.data() + i * d, d};
            for (std::size_t j = 0; j <= i; ++j) {
                scores[j] = dot(qi, {k_all.data() + j * d, d}) * inv_sqrt_d;
            }
            const auto attn = softmax({scores.data(), i + 1});
            std::fill(mixed.begin(), mixed.end(), 0.0);
            for (std::size_t j = 0; j <= i; ++j) {
                column_mass[j] += attn[j];
                const double* vj = v_all.data() + j * d;
                for (std::size_t c = 0; c < d; ++c) {
                    mixed[c] += attn[j] * vj[c];
                }
            }
            matvec(layer.attention.output, mixed, projected);
            for (std::size_t c = 0; c < d; ++c) {
                states[i][c] += projected[c];
            }
        }
        for (std::size_t j = 0; j < n; ++j) {
            result.attention_mass[j] += column_mass[j];
        }
        const auto key_flags = key_token_flags(column_mass, options.key_token_z);

        // Routed expert mixture.
        for (std::size_t i = 0; i < n; ++i) {
            const Vec hn = unit(states[i]);
            matvec(layer.gate, hn, logits);
            if (options.pruned && options.pruned->layer == l) {
                logits[options.pruned->expert] = -std::numeric_limits<double>::infinity();
            }
            RoutingContext ctx;
            ctx.layer = l;
            ctx.position = i;
            ctx.phase = i < options.prefill_len ? Phase::prefill : Phase::decode;
            ctx.key_token = key_flags[i];
            RoutingDecision decision = policy.route(logits, ctx);
            validate_decision(decision, cfg.num_experts);

            std::fill(layer_out.begin(), layer_out.end(), 0.0);
            for (const auto& ew : decision.selected) {
                if (ew.weight == 0.0) {
                    continue;
                }
                expert_output_into(layer.experts[ew.expert], hn, hidden, expert_out);
                for (std::size_t c = 0; c < d; ++c) {
                    layer_out[c] += ew.weight * expert_out[c];
                }
            }
            for (std::size_t c = 0; c < d; ++c) {
                states[i][c] += layer_out[c];
            }
            if (options.record_trace) {
                TraceRecord rec;
                rec.seq_id = options.seq_id;
                rec.position = i;
                rec.layer = l;
                rec.phase = ctx.phase;
                if (options.record_router_logits) {
                    rec.logits = logits;
                }
                rec.decision = std::move(decision);
                result.trace.records.push_back(std::move(rec));
            }
        }
    }

    const std::size_t replayed = cfg.num_layers - start_layer;
    if (replayed > 0) {
        for (double& m : result.attention_mass) {
            m /= static_cast<double>(replayed);
        }
    }

    const std::size_t first = options.final_logits_only ? n - 1 : 0;
    for (std::size_t i = first; i < n; ++i) {
        const Vec hn = unit(states[i]);
        Vec out(cfg.vocab);
        matvec(params.output_head, hn, out);
        result.logits.push_back(std::move(out));
    }
    return result;
}

void check_tokens(const ModelConfig& cfg, std::span<const TokenId> tokens) {
    if (tokens.empty()) {
        throw std::invalid_argument("forward: empty token sequence");
    }
    if (tokens.size() > cfg.max_seq_len) {
        throw std::invalid_argument("forward: sequence longer than max_seq_len");
    }
    for (TokenId t : tokens) {
        if (t >= cfg.vocab) {
            throw std::invalid_argument("forward: token id " + std::to_string(t) +
                                        " outside vocabulary");
        }
    }
}

}  // namespace

ForwardResult forward(const ModelParams& params, std::span<const TokenId> tokens,
                      const RoutingPolicy& policy, Phase phase) {
    ForwardOptions options;
    options.prefill_len = phase == Phase::prefill ? SIZE_MAX : 0;
    return forward(params, tokens, policy, options);
}

ForwardResult forward(const ModelParams& params, std::span<const TokenId> tokens,
                      const RoutingPolicy& policy, const ForwardOptions& options,
                      LayerCheckpoints* capture) {
    const ModelConfig& cfg = params.config;
    check_tokens(cfg, tokens);
    if (options.pruned && (options.pruned->layer >= cfg.num_layers ||
                           options.pruned->expert >= cfg.num_experts)) {
        throw std::invalid_argument("forward: pruned expert out of range");
    }
    std::vector<Vec> states(tokens.size(), Vec(cfg.d_model));
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        const auto emb = params.token_embeddings.row(tokens[i]);
        const auto pos = params.positions.row(i);
        for (std::size_t c = 0; c < cfg.d_model; ++c) {
            states[i][c] = emb[c] + pos[c];
        }
    }
    return run_layers(params, tokens, policy, options, std::move(states), 0, capture);
}

ForwardResult forward_with_pruned_expert(const ModelParams& params,
                                         std::span<const TokenId> tokens,
                                         const RoutingPolicy& policy, PrunedExpert pruned,
                                         ForwardOptions options) {
    options.pruned = pruned;
    return forward(params, tokens, policy, options);
}

ForwardResult forward_from_layer(const ModelParams& params, std::span<const TokenId> tokens,
                                 const RoutingPolicy& policy, const ForwardOptions& options,
                                 const LayerCheckpoints& checkpoints, std::size_t start_layer) {
    const ModelConfig& cfg = params.config;
    check_tokens(cfg, tokens);
    if (start_layer >= cfg.num_layers || checkpoints.states.size() != cfg.num_layers ||
        checkpoints.states[start_layer].size() != tokens.size()) {
        throw std::invalid_argument("forward_from_layer: checkpoints do not match the request");
    }
    if (options.pruned && (options.pruned->layer >= cfg.num_layers ||
                           options.pruned->expert >= cfg.num_experts)) {
        throw std::invalid_argument("forward: pruned expert out of range");
    }
    return run_layers(params, tokens, policy, options, checkpoints.states[start_layer],
                      start_layer, nullptr);
}

}  // namespace moerlab
