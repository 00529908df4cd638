// Copyright 2026 The fewshot Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace fewshot {

/// Stable process exit codes.
enum ExitCode : int {
  kExitOk = 0,
  kExitUsage = 2,
  kExitIo = 3,
  kExitNumeric = 4,
  kExitInfeasible = 5,
};

/// Runs the command line `args` (without the program name), writing results
/// to `out` and diagnostics to `err`. Subcommands: pretrain, embed, solve,
/// eval, make-images, make-features.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace fewshot
