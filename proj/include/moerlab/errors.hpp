// Copyright (c) 2026 The moerlab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace moerlab {

// A policy or caller broke a documented contract (e.g. routed to an expert
// id outside the layer).
class ContractViolation : public std::logic_error {
public:
    explicit ContractViolation(const std::string& what) : std::logic_error(what) {}
};

// Missing or inconsistent configuration (uncalibrated layer, unknown key...).
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// A calibration run could not produce a usable statistic.
class CalibrationError : public std::runtime_error {
public:
    explicit CalibrationError(const std::string& what) : std::runtime_error(what) {}
};

// A required input file (model, corpus, calibration output) does not exist.
class MissingArtifact : public std::runtime_error {
public:
    MissingArtifact(const std::string& artifact, const std::string& hint)
        : std::runtime_error("missing artifact " + artifact + (hint.empty() ? "" : " (" + hint + ")")),
          artifact_(artifact) {}
    const std::string& artifact() const { return artifact_; }

private:
    std::string artifact_;
};

// A file exists but cannot be parsed, or cannot be written.
class FormatError : public std::runtime_error {
public:
    explicit FormatError(const std::string& what) : std::runtime_error(what) {}
};

class IoError : public std::runtime_error {
public:
    explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace moerlab
