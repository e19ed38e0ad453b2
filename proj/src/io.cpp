// Copyright (c) 2026 The moerlab Authors
// SPDX-License-Identifier: Apache-2.0

#include "moerlab/io.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>
#include <system_error>

#include "json.hpp"
#include "moerlab/errors.hpp"
#include "json_util.hpp"

namespace moerlab {

using json = nlohmann::ordered_json;

std::string format_real(double value) {
    if (std::isnan(value)) {
        return "nan";
    }
    if (std::isinf(value)) {
        return value > 0 ? "inf" : "-inf";
    }
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.9g", value);
    return buf;
}

void write_file_atomic(const fs::path& path, std::string_view content) {
    std::error_code ec;
    if (path.has_parent_path()) {
        fs::create_directories(path.parent_path(), ec);
        if (ec) {
            throw IoError("cannot create directory " + path.parent_path().string() + ": " +
                          ec.message());
        }
    }
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) {
            throw IoError("cannot write " + tmp.string());
        }
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        out.flush();
        if (!out) {
            throw IoError("short write to " + tmp.string());
        }
    }
    fs::rename(tmp, path, ec);
    if (ec) {
        fs::remove(tmp, ec);
        throw IoError("cannot move " + tmp.string() + " to " + path.string());
    }
}

std::string read_file(const fs::path& path, const std::string& hint) {
    if (!fs::exists(path)) {
        throw MissingArtifact(path.string(), hint);
    }
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot read " + path.string());
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// ---------------------------------------------------------------------------
// Model binary

namespace {

constexpr char kModelMagic[8] = {'M', 'O', 'E', 'R', 'L', 'A', 'B', '1'};

template <typename T>
T to_little(T value) {
    if constexpr (std::endian::native == std::endian::big) {
        auto bytes = std::bit_cast<std::array<unsigned char, sizeof(T)>>(value);
        std::reverse(bytes.begin(), bytes.end());
        return std::bit_cast<T>(bytes);
    }
    return value;
}

class Writer {
public:
    void u64(std::uint64_t v) { put(to_little(v)); }
    void matrix(const Matrix& m) {
        for (double v : m.data) {
            put(to_little(std::bit_cast<std::uint64_t>(v)));
        }
    }
    void raw(const char* data, std::size_t n) { out_.append(data, n); }
    std::string take() { return std::move(out_); }

private:
    template <typename T>
    void put(T v) {
        char buf[sizeof(T)];
        std::memcpy(buf, &v, sizeof(T));
        out_.append(buf, sizeof(T));
    }
    std::string out_;
};

class Reader {
public:
    explicit Reader(std::string_view in) : in_(in) {}
    std::uint64_t u64() { return to_little(get<std::uint64_t>()); }
    void matrix(Matrix& m) {
        for (double& v : m.data) {
            v = std::bit_cast<double>(to_little(get<std::uint64_t>()));
        }
    }
    void expect(std::string_view bytes) {
        if (in_.substr(pos_, bytes.size()) != bytes) {
            throw FormatError("model file: bad magic");
        }
        pos_ += bytes.size();
    }
    std::size_t remaining() const { return in_.size() - pos_; }

private:
    template <typename T>
    T get() {
        if (remaining() < sizeof(T)) {
            throw FormatError("model file: truncated");
        }
        T v;
        std::memcpy(&v, in_.data() + pos_, sizeof(T));
        pos_ += sizeof(T);
        return v;
    }
    std::string_view in_;
    std::size_t pos_ = 0;
};

std::size_t checked_size(std::uint64_t v, std::uint64_t limit, const char* field) {
    if (v > limit) {
        throw FormatError(std::string("model file: implausible ") + field);
    }
    return static_cast<std::size_t>(v);
}

}  // namespace

std::string serialize_model(const ModelParams& params) {
    const ModelConfig& c = params.config;
    Writer w;
    w.raw(kModelMagic, sizeof(kModelMagic));
    for (std::uint64_t v : {std::uint64_t{c.num_layers}, std::uint64_t{c.num_experts},
                            std::uint64_t{c.k_base}, std::uint64_t{c.d_model},
                            std::uint64_t{c.d_expert}, std::uint64_t{c.vocab},
                            std::uint64_t{c.num_domains}, std::uint64_t{c.max_seq_len},
                            std::uint64_t{c.num_query_tokens}, c.seed}) {
        w.u64(v);
    }
    w.matrix(params.token_embeddings);
    w.matrix(params.positions);
    for (const auto& layer : params.layers) {
        w.matrix(layer.attention.query);
        w.matrix(layer.attention.key);
        w.matrix(layer.attention.value);
        w.matrix(layer.attention.output);
    }
    for (const auto& layer : params.layers) {
        w.matrix(layer.gate);
    }
    for (const auto& layer : params.layers) {
        for (const auto& expert : layer.experts) {
            w.matrix(expert.up);
            w.matrix(expert.down);
        }
    }
    w.matrix(params.output_head);
    return w.take();
}

ModelParams deserialize_model(std::string_view bytes) {
    Reader r(bytes);
    r.expect({kModelMagic, sizeof(kModelMagic)});
    constexpr std::uint64_t kDimLimit = 1u << 20;
    ModelConfig c;
    c.num_layers = checked_size(r.u64(), kDimLimit, "num_layers");
    c.num_experts = checked_size(r.u64(), kDimLimit, "num_experts");
    c.k_base = checked_size(r.u64(), kDimLimit, "k_base");
    c.d_model = checked_size(r.u64(), kDimLimit, "d_model");
    c.d_expert = checked_size(r.u64(), kDimLimit, "d_expert");
    c.vocab = checked_size(r.u64(), kDimLimit, "vocab");
    c.num_domains = checked_size(r.u64(), kDimLimit, "num_domains");
    c.max_seq_len = checked_size(r.u64(), kDimLimit, "max_seq_len");
    c.num_query_tokens = checked_size(r.u64(), kDimLimit, "num_query_tokens");
    c.seed = r.u64();
    try {
        c.validate();
    } catch (const std::invalid_argument& e) {
        throw FormatError(std::string("model file: ") + e.what());
    }
    const std::size_t d = c.d_model;
    const std::size_t per_layer =
        4 * d * d + c.num_experts * d + c.num_experts * 2 * d * c.d_expert;
    const std::size_t expected =
        8 * (c.vocab * d + c.max_seq_len * d + c.num_layers * per_layer + c.vocab * d);
    if (r.remaining() != expected) {
        throw FormatError("model file: payload is " + std::to_string(r.remaining()) +
                          " bytes, expected " + std::to_string(expected));
    }

    ModelParams p;
    p.config = c;
    p.token_embeddings = Matrix(c.vocab, d);
    r.matrix(p.token_embeddings);
    p.positions = Matrix(c.max_seq_len, d);
    r.matrix(p.positions);
    p.layers.resize(c.num_layers);
    for (auto& layer : p.layers) {
        for (Matrix* m : {&layer.attention.query, &layer.attention.key, &layer.attention.value,
                          &layer.attention.output}) {
            *m = Matrix(d, d);
            r.matrix(*m);
        }
    }
    for (auto& layer : p.layers) {
        layer.gate = Matrix(c.num_experts, d);
        r.matrix(layer.gate);
    }
    for (auto& layer : p.layers) {
        layer.experts.resize(c.num_experts);
        for (auto& expert : layer.experts) {
            expert.up = Matrix(d, c.d_expert);
            r.matrix(expert.up);
            expert.down = Matrix(c.d_expert, d);
            r.matrix(expert.down);
        }
    }
    p.output_head = Matrix(c.vocab, d);
    r.matrix(p.output_head);
    return p;
}

void save_model(const ModelParams& params, const fs::path& path) {
    write_file_atomic(path, serialize_model(params));
}

ModelParams load_model(const fs::path& path) {
    return deserialize_model(read_file(path, "run gen-model first"));
}

// ---------------------------------------------------------------------------
// JSON documents

namespace {

json parse_json(std::string_view text, const char* what) {
    try {
        return json::parse(text);
    } catch (const json::parse_error& e) {
        throw FormatError(std::string(what) + ": " + e.what());
    }
}

}  // namespace

std::string synthetic_spec_to_json(const SyntheticModelSpec& spec) {
    json specialized = json::array();
    for (const auto& [key, experts] : spec.specialized) {
        json list = json::array();
        for (const auto& s : experts) {
            list.push_back({{"expert", s.expert}, {"alpha", s.alpha}});
        }
        specialized.push_back({{"layer", key.first}, {"domain", key.second}, {"experts", list}});
    }
    json keys = json::array();
    for (const auto& k : spec.planted_keys) {
        keys.push_back(
            {{"layer", k.layer}, {"expert", k.expert}, {"domain", k.domain}, {"gamma", k.gamma}});
    }
    json j;
    j["specialized"] = specialized;
    j["planted_keys"] = keys;
    j["noise_scale"] = spec.noise_scale;
    j["embedding_noise"] = spec.embedding_noise;
    j["query_scale"] = spec.query_scale;
    j["position_scale"] = spec.position_scale;
    j["attention_scale"] = spec.attention_scale;
    j["attention_value_gain"] = spec.attention_value_gain;
    j["key_centroid_gain"] = spec.key_centroid_gain;
    j["ffn_noise"] = spec.ffn_noise;
    j["head_noise"] = spec.head_noise;
    j["answer_gain"] = spec.answer_gain;
    return j.dump(2) + "\n";
}

SyntheticModelSpec synthetic_spec_from_json(std::string_view text) {
    const json j = parse_json(text, "synthetic spec");
    ObjectReader r(j, "synthetic spec");
    SyntheticModelSpec spec;
    for (const auto& entry : r.array("specialized")) {
        ObjectReader e(entry, "synthetic spec specialized entry");
        const auto layer = e.size("layer");
        const auto domain = e.size("domain");
        auto& list = spec.specialized[{layer, domain}];
        for (const auto& item : e.array("experts")) {
            ObjectReader s(item, "synthetic spec expert");
            list.push_back({s.size("expert"), s.real("alpha")});
            s.finish();
        }
        e.finish();
    }
    for (const auto& entry : r.array("planted_keys")) {
        ObjectReader k(entry, "synthetic spec planted key");
        spec.planted_keys.push_back(
            {k.size("layer"), k.size("expert"), k.size("domain"), k.real("gamma")});
        k.finish();
    }
    r.optional_real("noise_scale", spec.noise_scale);
    r.optional_real("embedding_noise", spec.embedding_noise);
    r.optional_real("query_scale", spec.query_scale);
    r.optional_real("position_scale", spec.position_scale);
    r.optional_real("attention_scale", spec.attention_scale);
    r.optional_real("attention_value_gain", spec.attention_value_gain);
    r.optional_real("key_centroid_gain", spec.key_centroid_gain);
    r.optional_real("ffn_noise", spec.ffn_noise);
    r.optional_real("head_noise", spec.head_noise);
    r.optional_real("answer_gain", spec.answer_gain);
    r.finish();
    return spec;
}

std::string corpus_to_json(const Corpus& corpus) {
    json seqs = json::array();
    for (const auto& s : corpus.sequences) {
        json item;
        item["domain"] = s.domain;
        item["tokens"] = s.tokens;
        if (s.answer) {
            item["answer"] = *s.answer;
        }
        seqs.push_back(std::move(item));
    }
    json j;
    j["seed"] = corpus.seed;
    j["prompt_len"] = corpus.prompt_len;
    j["sequences"] = seqs;
    return j.dump() + "\n";
}

Corpus corpus_from_json(std::string_view text) {
    const json j = parse_json(text, "corpus");
    ObjectReader r(j, "corpus");
    Corpus corpus;
    corpus.seed = r.u64("seed");
    corpus.prompt_len = r.size("prompt_len");
    for (const auto& item : r.array("sequences")) {
        ObjectReader s(item, "corpus sequence");
        Sequence seq;
        seq.domain = s.size("domain");
        for (const auto& t : s.array("tokens")) {
            if (!t.is_number_unsigned()) {
                throw FormatError("corpus: token ids must be non-negative integers");
            }
            seq.tokens.push_back(t.get<TokenId>());
        }
        std::size_t answer = 0;
        if (s.optional_size("answer", answer)) {
            seq.answer = static_cast<TokenId>(answer);
        }
        s.finish();
        corpus.sequences.push_back(std::move(seq));
    }
    r.finish();
    return corpus;
}

std::string key_experts_to_json(const KeyExpertSet& keys, const KLImpactReport* report) {
    json domains = json::object();
    for (const auto& [domain, layers] : keys.by_domain) {
        json list = json::array();
        for (const auto& [layer, experts] : layers) {
            for (std::size_t e : experts) {
                json item;
                item["layer"] = layer;
                item["expert"] = e;
                if (report != nullptr) {
                    for (const auto& entry : report->entries) {
                        if (entry.domain == domain && entry.layer == layer && entry.expert == e) {
                            item["kl_impact"] = report_real(entry.mean_kl);
                        }
                    }
                }
                list.push_back(std::move(item));
            }
        }
        domains[std::to_string(domain)] = list;
    }
    json j;
    j["domains"] = domains;
    return j.dump(2) + "\n";
}

KeyExpertSet key_experts_from_json(std::string_view text) {
    const json j = parse_json(text, "key experts");
    ObjectReader r(j, "key experts");
    KeyExpertSet keys;
    const json& domains = r.object("domains");
    for (const auto& [name, list] : domains.items()) {
        const std::size_t domain = parse_index(name, "key experts domain");
        if (!list.is_array()) {
            throw FormatError("key experts: domain entry must be an array");
        }
        auto& layers = keys.by_domain[domain];
        for (const auto& item : list) {
            ObjectReader k(item, "key experts entry");
            const auto layer = k.size("layer");
            const auto expert = k.size("expert");
            double ignored = 0.0;
            k.optional_real("kl_impact", ignored);
            k.finish();
            auto& experts = layers[layer];
            if (std::find(experts.begin(), experts.end(), expert) == experts.end()) {
                experts.push_back(expert);
            }
        }
        for (auto& [layer, experts] : layers) {
            std::sort(experts.begin(), experts.end());
        }
    }
    r.finish();
    return keys;
}

std::string kl_report_to_json(const KLImpactReport& report) {
    json entries = json::array();
    for (const auto& e : report.entries) {
        entries.push_back({{"layer", e.layer},
                           {"expert", e.expert},
                           {"domain", e.domain},
                           {"mean_kl", real_json(e.mean_kl)},
                           {"samples", e.samples}});
    }
    json j;
    j["entries"] = entries;
    return j.dump(2) + "\n";
}

KLImpactReport kl_report_from_json(std::string_view text) {
    const json j = parse_json(text, "kl impact report");
    ObjectReader r(j, "kl impact report");
    KLImpactReport report;
    for (const auto& item : r.array("entries")) {
        ObjectReader e(item, "kl impact entry");
        KLImpact entry;
        entry.layer = e.size("layer");
        entry.expert = e.size("expert");
        entry.domain = e.size("domain");
        entry.mean_kl = e.real("mean_kl");
        entry.samples = e.size("samples");
        e.finish();
        report.entries.push_back(entry);
    }
    r.finish();
    return report;
}

std::string sensitivity_to_json(const SensitivityProfile& p) {
    json j;
    j["k_low"] = p.k_low;
    j["k_min"] = p.k_min;
    j["k_base"] = p.k_base;
    j["w"] = reals_json(p.w);
    j["l_prime"] = reals_json(p.l_prime);
    j["w_min"] = real_json(p.w_min);
    j["w_max"] = real_json(p.w_max);
    j["r_min"] = real_json(p.r_min);
    j["r_max"] = real_json(p.r_max);
    j["des_k_low"] = p.des_k_low;
    j["des_medians"] = reals_json(p.des_medians);
    return j.dump(2) + "\n";
}

SensitivityProfile sensitivity_from_json(std::string_view text) {
    const json j = parse_json(text, "sensitivity profile");
    ObjectReader r(j, "sensitivity profile");
    SensitivityProfile p;
    p.k_low = r.size("k_low");
    p.k_min = r.size("k_min");
    p.k_base = r.size("k_base");
    p.w = r.reals("w");
    p.l_prime = r.reals("l_prime");
    p.w_min = r.real("w_min");
    p.w_max = r.real("w_max");
    p.r_min = r.real("r_min");
    p.r_max = r.real("r_max");
    p.des_k_low = r.size("des_k_low");
    p.des_medians = r.reals("des_medians");
    r.finish();
    if (p.l_prime.size() != p.w.size()) {
        throw FormatError("sensitivity profile: w and l_prime differ in length");
    }
    return p;
}

std::string candidates_to_json(const CandidateSet& candidates) {
    json list = json::array();
    for (const auto& c : candidates.candidates) {
        list.push_back({{"layer", c.layer},
                        {"expert", c.expert},
                        {"domain", c.domain},
                        {"frequency", report_real(c.frequency)}});
    }
    json j;
    j["candidates"] = list;
    return j.dump(2) + "\n";
}

// ---------------------------------------------------------------------------
// Report files

std::string usage_csv(const std::vector<UsageStats>& per_domain) {
    struct Row {
        std::size_t layer, expert;
        std::string domain;
        std::size_t domain_order;
        double frequency;
    };
    std::vector<Row> rows;
    for (std::size_t i = 0; i < per_domain.size(); ++i) {
        const auto& s = per_domain[i];
        const std::string label = s.domain ? std::to_string(*s.domain) : "all";
        for (std::size_t l = 0; l < s.num_layers; ++l) {
            for (std::size_t e = 0; e < s.num_experts; ++e) {
                rows.push_back({l, e, label, i, s.frequency(l, e)});
            }
        }
    }
    std::stable_sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) {
        if (a.layer != b.layer) return a.layer < b.layer;
        if (a.expert != b.expert) return a.expert < b.expert;
        return a.domain_order < b.domain_order;
    });
    std::string out = "layer,expert,domain,frequency\n";
    for (const auto& r : rows) {
        out += std::to_string(r.layer) + "," + std::to_string(r.expert) + "," + r.domain + "," +
               format_real(r.frequency) + "\n";
    }
    return out;
}

std::string sensitivity_csv(const SensitivityProfile& profile) {
    std::string out = "layer,W,L_prime\n";
    for (std::size_t l = 0; l < profile.w.size(); ++l) {
        out += std::to_string(l) + "," + format_real(profile.w[l]) + "," +
               format_real(profile.l_prime[l]) + "\n";
    }
    return out;
}

std::string metrics_csv(const std::vector<MetricsReport>& reports) {
    std::string out = "policy,accuracy,avg_topk,activations,est_flops,runtime_s\n";
    for (const auto& m : reports) {
        out += m.policy + "," + format_real(m.accuracy) + "," + format_real(m.avg_topk) + "," +
               std::to_string(m.activations) + "," + format_real(m.est_flops) + "," +
               format_real(m.runtime_s) + "\n";
    }
    return out;
}

std::vector<MetricsReport> metrics_from_csv(std::string_view text) {
    std::vector<MetricsReport> out;
    std::istringstream in{std::string(text)};
    std::string line;
    if (!std::getline(in, line) ||
        line != "policy,accuracy,avg_topk,activations,est_flops,runtime_s") {
        throw FormatError("metrics csv: bad header");
    }
    while (std::getline(in, line)) {
        std::vector<std::string> cells;
        std::istringstream row(line);
        std::string cell;
        while (std::getline(row, cell, ',')) {
            cells.push_back(cell);
        }
        if (cells.size() != 6) {
            throw FormatError("metrics csv: expected 6 columns in '" + line + "'");
        }
        auto real = [&](const std::string& c) {
            char* end = nullptr;
            const double v = std::strtod(c.c_str(), &end);
            if (c.empty() || *end != '\0') {
                throw FormatError("metrics csv: bad number '" + c + "'");
            }
            return v;
        };
        MetricsReport m;
        m.policy = cells[0];
        m.accuracy = real(cells[1]);
        m.avg_topk = real(cells[2]);
        if (cells[3].empty() || cells[3].find_first_not_of("0123456789") != std::string::npos) {
            throw FormatError("metrics csv: bad activation count '" + cells[3] + "'");
        }
        m.activations = std::stoull(cells[3]);
        m.est_flops = real(cells[4]);
        m.runtime_s = real(cells[5]);
        out.push_back(std::move(m));
    }
    return out;
}

std::string trace_ndjson(const RoutingTrace& trace) {
    std::string out;
    for (const auto& rec : trace.records) {
        out += "{\"seq_id\":" + std::to_string(rec.seq_id) +
               ",\"pos\":" + std::to_string(rec.position) +
               ",\"layer\":" + std::to_string(rec.layer) + ",\"phase\":\"" +
               phase_name(rec.phase) + "\",\"policy\":" + json(trace.policy).dump() +
               ",\"k_used\":" + std::to_string(rec.decision.k_used()) + ",\"selected\":[";
        for (std::size_t i = 0; i < rec.decision.selected.size(); ++i) {
            const auto& ew = rec.decision.selected[i];
            out += (i == 0 ? "\"" : ",\"") + std::to_string(ew.expert) + ":" +
                   format_real(ew.weight) + "\"";
        }
        out += "]}\n";
    }
    return out;
}

std::string usage_svg(const std::vector<UsageStats>& per_domain, std::size_t layer) {
    static const char* kColors[] = {"#4e79a7", "#f28e2b", "#59a14f", "#e15759",
                                    "#76b7b2", "#edc948", "#b07aa1", "#9c755f"};
    const std::size_t experts = per_domain.empty() ? 0 : per_domain.front().num_experts;
    const std::size_t groups = std::max<std::size_t>(per_domain.size(), 1);
    const double bar = 6.0;
    const double group_w = bar * static_cast<double>(groups) + 4.0;
    const double plot_h = 200.0;
    const double left = 40.0;
    const double top = 30.0;
    const double width = left + group_w * static_cast<double>(experts) + 20.0;
    const double height = top + plot_h + 40.0;

    std::string out = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + format_real(width) +
                      "\" height=\"" + format_real(height) + "\" viewBox=\"0 0 " +
                      format_real(width) + " " + format_real(height) + "\">\n";
    out += "<title>Expert usage frequency, layer " + std::to_string(layer) + "</title>\n";
    out += "<text x=\"" + format_real(left) + "\" y=\"18\" font-family=\"sans-serif\" "
           "font-size=\"12\">layer " + std::to_string(layer) + " usage frequency</text>\n";
    out += "<line x1=\"" + format_real(left) + "\" y1=\"" + format_real(top + plot_h) +
           "\" x2=\"" + format_real(width - 10.0) + "\" y2=\"" + format_real(top + plot_h) +
           "\" stroke=\"black\"/>\n";
    for (std::size_t g = 0; g < per_domain.size(); ++g) {
        const auto& s = per_domain[g];
        const std::string label = s.domain ? "domain " + std::to_string(*s.domain) : "all";
        for (std::size_t e = 0; e < experts; ++e) {
            const double f = layer < s.num_layers ? s.frequency(layer, e) : 0.0;
            const double h = plot_h * std::clamp(f, 0.0, 1.0);
            const double x = left + group_w * static_cast<double>(e) + bar * static_cast<double>(g);
            out += "<rect x=\"" + format_real(x) + "\" y=\"" + format_real(top + plot_h - h) +
                   "\" width=\"" + format_real(bar) + "\" height=\"" + format_real(h) +
                   "\" fill=\"" + kColors[g % 8] + "\"><title>" + label + " expert " +
                   std::to_string(e) + ": " + format_real(f) + "</title></rect>\n";
        }
    }
    for (std::size_t e = 0; e < experts; e += 4) {
        out += "<text x=\"" + format_real(left + group_w * static_cast<double>(e)) + "\" y=\"" +
               format_real(top + plot_h + 14.0) +
               "\" font-family=\"sans-serif\" font-size=\"9\">" + std::to_string(e) + "</text>\n";
    }
    out += "</svg>\n";
    return out;
}

std::vector<std::string> emit_reports(const ReportInputs& inputs, const fs::path& out_dir) {
    std::vector<std::string> written;
    auto emit = [&](const std::string& name, const std::string& content) {
        write_file_atomic(out_dir / name, content);
        written.push_back(name);
    };
    emit("usage.csv", usage_csv(inputs.usage));
    const std::size_t layers = inputs.usage.empty() ? 0 : inputs.usage.front().num_layers;
    for (std::size_t l = 0; l < layers; ++l) {
        emit("usage_layer_" + std::to_string(l) + ".svg", usage_svg(inputs.usage, l));
    }
    emit("sensitivity.csv",
         inputs.sensitivity ? sensitivity_csv(*inputs.sensitivity) : sensitivity_csv({}));
    if (inputs.keys) {
        emit("key_experts.json",
             key_experts_to_json(*inputs.keys, inputs.kl_report ? &*inputs.kl_report : nullptr));
    }
    emit("metrics.csv", metrics_csv(inputs.metrics));
    return written;
}

}  // namespace moerlab
