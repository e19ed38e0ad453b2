// Copyright (c) 2026 The moerlab Authors
// SPDX-License-Identifier: Apache-2.0
//
// Command-line front end: gen-model, gen-corpus, profile, calibrate, identify,
// run, compare and report. Exit codes: 0 success, 1 validation error
// (bad flags, bad config, missing or malformed artifact), 2 runtime error.

#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace moerlab {

// args excludes the program name.
int cli_main(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int cli_main(int argc, const char* const* argv);

}  // namespace moerlab
