// Copyright 2026 The fewshot Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "fewshot/contrastive_pretrain.hpp"
#include "fewshot/evaluation_harness.hpp"

namespace fewshot {

/// Every tunable of the pipeline as one flat key/value namespace. Values are
/// parsed and range-checked on set(); unknown keys raise UsageError.
///
/// Config files hold one `key = value` per line; `#` starts a comment.
struct RunConfig {
  GraphConfig graph;
  TaskTrainConfig train;
  PretrainConfig pretrain;
  std::uint64_t seed = 0;

  void set(std::string_view key, std::string_view value);
  void load_file(const std::filesystem::path& path);

  /// Applies "key=value" overrides in order.
  void apply_overrides(const std::vector<std::string>& assignments);

  static const std::vector<std::string_view>& keys();

  std::vector<std::pair<std::string, std::string>> pretrain_echo() const;
};

}  // namespace fewshot
