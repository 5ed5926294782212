// SPDX-FileCopyrightText: © 2026 The diffq Authors
//
// SPDX-License-Identifier: Apache-2.0

#include "diffq/cli/commands.hpp"

int main(int argc, char** argv) { return diffq::cli::run_cli(argc, argv); }
