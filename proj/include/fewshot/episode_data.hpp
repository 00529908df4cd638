// Copyright 2026 The fewshot Authors
// SPDX-License-Identifier: Apache-2.0

// Feature storage, on-disk formats and N-way k-shot q-query episode sampling.

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "fewshot/linalg.hpp"

namespace fewshot {

/// A labeled collection of fixed-width feature vectors, stored row-major.
///
/// Invariants (checked by validate()): every value finite, `labels.size()`
/// rows of exactly `dim` values, class ids dense in [0, C).
struct FeatureDataset {
  std::uint32_t dim = 1;
  std::vector<std::uint32_t> labels;
  std::vector<double> values;
  std::map<std::uint32_t, std::string> class_names;

  std::size_t size() const { return labels.size(); }
  std::span<const double> row(std::size_t i) const {
    return {values.data() + i * dim, static_cast<std::size_t>(dim)};
  }

  /// Number of distinct classes, i.e. max class id + 1 (0 when empty).
  std::uint32_t num_classes() const;

  /// Record indices of each class, in record order.
  std::vector<std::vector<std::size_t>> class_members() const;

  void push_back(std::uint32_t label, std::span<const double> vector);

  /// Throws FormatError (shape, density) or NumericError (non-finite value).
  void validate() const;
};

struct EpisodeSpec {
  std::uint32_t n_way = 5;
  std::uint32_t k_shot = 1;
  std::uint32_t q_query = 15;

  /// Throws ContractError unless n_way >= 2, k_shot >= 1, q_query >= 1.
  void validate() const;
  std::size_t support_size() const { return std::size_t{n_way} * k_shot; }
  std::size_t query_size() const { return std::size_t{n_way} * q_query; }
  std::size_t total_size() const { return support_size() + query_size(); }
};

struct EpisodeItem {
  std::size_t index = 0;     // row in the FeatureDataset
  std::uint32_t label = 0;   // episode label in [0, N)
  friend bool operator==(const EpisodeItem&, const EpisodeItem&) = default;
};

/// One sampled task. Support and query are stored class-major; materialized
/// vertex matrices put the support rows first, then the query rows.
struct Episode {
  EpisodeSpec spec;
  std::vector<EpisodeItem> support;
  std::vector<EpisodeItem> query;
  std::vector<std::uint32_t> class_map;  // episode label -> dataset class id

  std::vector<std::uint32_t> support_labels() const;
  std::vector<std::uint32_t> query_labels() const;

  /// Stacks support rows then query rows of `data` into an N(k+q) x dim matrix.
  Matrix vertex_matrix(const FeatureDataset& data) const;
};

/// Reads the little-endian "CFSL" feature store.
FeatureDataset load_features(const std::filesystem::path& path);

/// Writes the "CFSL" feature store. Output bytes depend only on `dataset`.
void save_features(const FeatureDataset& dataset, const std::filesystem::path& path);

/// Parses `label,f1,...,fd` lines. The first line is treated as a header when
/// its feature fields are not numeric. Labels get ids in first-appearance order.
FeatureDataset import_csv(const std::filesystem::path& path);

/// Picks N classes uniformly without replacement, then k+q records per class
/// without replacement; the first k drawn become support.
Episode sample_episode(const FeatureDataset& dataset, const EpisodeSpec& spec, std::uint64_t seed);

}  // namespace fewshot
