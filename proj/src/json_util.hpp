// Copyright (c) 2026 The moerlab Authors
// SPDX-License-Identifier: Apache-2.0
//
// Strict JSON object reading shared by the artifact and config loaders.
// Unknown keys, missing required keys and wrongly typed values are errors.

#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdlib>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"
#include "moerlab/errors.hpp"
#include "moerlab/io.hpp"

namespace moerlab {

// Finite reals are JSON numbers; non-finite ones are the strings inf, -inf, nan.
inline nlohmann::ordered_json real_json(double v) {
    if (std::isfinite(v)) {
        return v;
    }
    return format_real(v);
}

inline nlohmann::ordered_json reals_json(const std::vector<double>& values) {
    auto out = nlohmann::ordered_json::array();
    for (double v : values) {
        out.push_back(real_json(v));
    }
    return out;
}

// A real rounded to 9 significant digits, for human-facing documents.
inline nlohmann::ordered_json report_real(double v) {
    if (!std::isfinite(v)) {
        return format_real(v);
    }
    return std::strtod(format_real(v).c_str(), nullptr);
}

inline std::size_t parse_index(const std::string& text, const std::string& what) {
    if (text.empty() || text.size() > 18 ||
        text.find_first_not_of("0123456789") != std::string::npos) {
        throw FormatError(what + ": expected a non-negative integer, got '" + text + "'");
    }
    return static_cast<std::size_t>(std::stoull(text));
}

class ObjectReader {
public:
    using json = nlohmann::ordered_json;

    ObjectReader(const json& j, std::string what) : j_(j), what_(std::move(what)) {
        if (!j_.is_object()) {
            fail("expected an object");
        }
    }

    bool has(const std::string& key) const { return j_.contains(key); }

    const json& at(const std::string& key) {
        if (!j_.contains(key)) {
            fail("missing key '" + key + "'");
        }
        used_.insert(key);
        return j_.at(key);
    }

    std::uint64_t u64(const std::string& key) {
        const json& v = at(key);
        if (!v.is_number_unsigned()) {
            fail("'" + key + "' must be a non-negative integer");
        }
        return v.get<std::uint64_t>();
    }
    std::size_t size(const std::string& key) { return static_cast<std::size_t>(u64(key)); }

    double real(const std::string& key) { return to_real(at(key), key); }

    bool boolean(const std::string& key) {
        const json& v = at(key);
        if (!v.is_boolean()) {
            fail("'" + key + "' must be a boolean");
        }
        return v.get<bool>();
    }

    std::string string(const std::string& key) {
        const json& v = at(key);
        if (!v.is_string()) {
            fail("'" + key + "' must be a string");
        }
        return v.get<std::string>();
    }

    std::vector<double> reals(const std::string& key) {
        std::vector<double> out;
        for (const auto& v : array(key)) {
            out.push_back(to_real(v, key));
        }
        return out;
    }

    std::vector<std::size_t> sizes(const std::string& key) {
        std::vector<std::size_t> out;
        for (const auto& v : array(key)) {
            if (!v.is_number_unsigned()) {
                fail("'" + key + "' must hold non-negative integers");
            }
            out.push_back(v.get<std::size_t>());
        }
        return out;
    }

    const json& array(const std::string& key) {
        const json& v = at(key);
        if (!v.is_array()) {
            fail("'" + key + "' must be an array");
        }
        return v;
    }

    const json& object(const std::string& key) {
        const json& v = at(key);
        if (!v.is_object()) {
            fail("'" + key + "' must be an object");
        }
        return v;
    }

    template <typename T>
    bool optional_size(const std::string& key, T& out) {
        if (!has(key)) return false;
        out = static_cast<T>(u64(key));
        return true;
    }
    bool optional_u64(const std::string& key, std::uint64_t& out) {
        if (!has(key)) return false;
        out = u64(key);
        return true;
    }
    bool optional_real(const std::string& key, double& out) {
        if (!has(key)) return false;
        out = real(key);
        return true;
    }
    bool optional_bool(const std::string& key, bool& out) {
        if (!has(key)) return false;
        out = boolean(key);
        return true;
    }
    bool optional_string(const std::string& key, std::string& out) {
        if (!has(key)) return false;
        out = string(key);
        return true;
    }

    // Throws on any key that was never read.
    void finish() const {
        for (const auto& item : j_.items()) {
            if (!used_.count(item.key())) {
                fail("unknown key '" + item.key() + "'");
            }
        }
    }

    [[noreturn]] void fail(const std::string& msg) const { throw FormatError(what_ + ": " + msg); }

private:
    double to_real(const json& v, const std::string& key) const {
        if (v.is_number()) {
            return v.get<double>();
        }
        if (v.is_string()) {
            const auto s = v.get<std::string>();
            if (s == "inf") return INFINITY;
            if (s == "-inf") return -INFINITY;
            if (s == "nan") return NAN;
        }
        fail("'" + key + "' must be a number");
    }

    const json& j_;
    std::string what_;
    std::set<std::string> used_;
};

}  // namespace moerlab
