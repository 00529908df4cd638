// Copyright 2026 The fewshot Authors
// SPDX-License-Identifier: Apache-2.0

// Seeded synthetic data: clustered feature sets that stand in for extracted
// image features, paired-view sets and small class-structured images for
// exercising pretraining.

#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "fewshot/contrastive_pretrain.hpp"
#include "fewshot/episode_data.hpp"

namespace fewshot {

/// Isotropic Gaussian clusters. Centroids sit on mutually orthogonal
/// directions at distance `separation * noise_std` from the origin (random
/// unit directions when clusters > dim), so centroids are at least
/// `separation` within-class standard deviations apart. separation = 0 gives
/// pure noise.
struct ClusterSpec {
  std::uint32_t clusters = 5;
  double separation = 10.0;
  std::uint32_t dim = 64;
  std::uint32_t per_class = 100;
  double noise_std = 1.0;
  bool shuffle_labels = false;  // permute labels across records after generation
  std::uint64_t seed = 0;

  /// Parses "clusters=5,sep=10,dim=64,per_class=100[,noise=1,shuffle=1,seed=3]".
  /// UsageError on unknown keys or out-of-range values.
  static ClusterSpec parse(std::string_view text);

  /// Key/value pairs recorded in reports.
  std::vector<std::pair<std::string, std::string>> describe() const;
};

FeatureDataset make_clustered_features(const ClusterSpec& spec);

/// view1 ~ N(0, I_dim); view2 = R view1 + noise * N(0, I_dim) with R a fixed
/// seeded random rotation.
std::vector<RawSample> make_paired_views(std::size_t count, std::size_t dim, double noise, std::uint64_t seed);

/// Each class has a random prototype image; samples are the prototype plus
/// per-pixel Gaussian noise, clamped to [0, 1].
RawSampleSet make_synthetic_images(std::uint32_t classes, std::uint32_t per_class, std::uint32_t width,
                                   std::uint32_t height, double noise, std::uint64_t seed);

}  // namespace fewshot
