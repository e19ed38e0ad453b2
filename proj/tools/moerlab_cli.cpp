// Copyright (c) 2026 The moerlab Authors
// SPDX-License-Identifier: Apache-2.0

#include "moerlab/cli.hpp"

int main(int argc, char** argv) { return moerlab::cli_main(argc, argv); }
