// Copyright 2026 The fewshot Authors
// SPDX-License-Identifier: Apache-2.0

#include "fewshot/synthetic.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fmt/format.h>

#include "fewshot/error.hpp"
#include "fewshot/linalg.hpp"
#include "fewshot/rng.hpp"

namespace fewshot {
namespace {

template <typename T>
T parse_number(std::string_view key, std::string_view value) {
  T out{};
  const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc() || ptr != value.data() + value.size()) {
    throw UsageError(fmt::format("synthetic: invalid value '{}' for '{}'", value, key));
  }
  return out;
}

Matrix random_orthonormal_rows(Eigen::Index rows, Eigen::Index dim, Rng& rng) {
  Matrix g(dim, rows);
  for (Eigen::Index i = 0; i < g.size(); ++i) g.data()[i] = rng.normal();
  // Gram-Schmidt on the columns; deterministic, unlike pivoted factorizations.
  for (Eigen::Index c = 0; c < rows; ++c) {
    for (Eigen::Index p = 0; p < c; ++p) g.col(c) -= g.col(p).dot(g.col(c)) * g.col(p);
    g.col(c).normalize();
  }
  return g.transpose();
}

}  // namespace

ClusterSpec ClusterSpec::parse(std::string_view text) {
  ClusterSpec spec;
  while (!text.empty()) {
    const auto comma = text.find(',');
    const auto item = text.substr(0, comma);
    text = comma == std::string_view::npos ? std::string_view{} : text.substr(comma + 1);
    if (item.empty()) continue;
    const auto eq = item.find('=');
    if (eq == std::string_view::npos) throw UsageError(fmt::format("synthetic: expected key=value, got '{}'", item));
    const auto key = item.substr(0, eq);
    const auto value = item.substr(eq + 1);
    if (key == "clusters") {
      spec.clusters = parse_number<std::uint32_t>(key, value);
    } else if (key == "sep") {
      spec.separation = parse_number<double>(key, value);
    } else if (key == "dim") {
      spec.dim = parse_number<std::uint32_t>(key, value);
    } else if (key == "per_class") {
      spec.per_class = parse_number<std::uint32_t>(key, value);
    } else if (key == "noise") {
      spec.noise_std = parse_number<double>(key, value);
    } else if (key == "shuffle") {
      spec.shuffle_labels = parse_number<int>(key, value) != 0;
    } else if (key == "seed") {
      spec.seed = parse_number<std::uint64_t>(key, value);
    } else {
      throw UsageError(fmt::format("synthetic: unknown key '{}'", key));
    }
  }
  if (spec.clusters < 1 || spec.dim < 1 || spec.per_class < 1) {
    throw UsageError("synthetic: clusters, dim and per_class must be positive");
  }
  if (!(spec.separation >= 0.0) || !(spec.noise_std > 0.0) || !std::isfinite(spec.separation) ||
      !std::isfinite(spec.noise_std)) {
    throw UsageError("synthetic: sep must be >= 0 and noise > 0");
  }
  return spec;
}

std::vector<std::pair<std::string, std::string>> ClusterSpec::describe() const {
  return {{"synthetic.clusters", std::to_string(clusters)},
          {"synthetic.sep", fmt::format("{}", separation)},
          {"synthetic.dim", std::to_string(dim)},
          {"synthetic.per_class", std::to_string(per_class)},
          {"synthetic.noise", fmt::format("{}", noise_std)},
          {"synthetic.shuffle", shuffle_labels ? "1" : "0"},
          {"synthetic.seed", std::to_string(seed)}};
}

FeatureDataset make_clustered_features(const ClusterSpec& spec) {
  Rng rng(spec.seed);
  Matrix centroids;
  if (spec.clusters <= spec.dim) {
    centroids = random_orthonormal_rows(spec.clusters, spec.dim, rng);
  } else {
    centroids = Matrix(spec.clusters, spec.dim);
    for (Eigen::Index i = 0; i < centroids.size(); ++i) centroids.data()[i] = rng.normal();
    centroids.rowwise().normalize();
  }
  centroids *= spec.separation * spec.noise_std;

  FeatureDataset data;
  data.dim = spec.dim;
  std::vector<double> row(spec.dim);
  for (std::uint32_t c = 0; c < spec.clusters; ++c) {
    for (std::uint32_t r = 0; r < spec.per_class; ++r) {
      for (std::uint32_t d = 0; d < spec.dim; ++d) row[d] = centroids(c, d) + spec.noise_std * rng.normal();
      data.push_back(c, row);
    }
  }
  if (spec.shuffle_labels) rng.shuffle(std::span<std::uint32_t>(data.labels));
  for (std::uint32_t c = 0; c < spec.clusters; ++c) data.class_names[c] = "cluster" + std::to_string(c);
  return data;
}

std::vector<RawSample> make_paired_views(std::size_t count, std::size_t dim, double noise, std::uint64_t seed) {
  Rng rng(seed);
  const auto d = static_cast<Eigen::Index>(dim);
  const Matrix rotation = random_orthonormal_rows(d, d, rng);
  std::vector<RawSample> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    Vector a(d);
    for (Eigen::Index k = 0; k < d; ++k) a(k) = rng.normal();
    Vector b = rotation * a;
    for (Eigen::Index k = 0; k < d; ++k) b(k) += noise * rng.normal();
    out.emplace_back(ViewPair{{a.data(), a.data() + d}, {b.data(), b.data() + d}});
  }
  return out;
}

RawSampleSet make_synthetic_images(std::uint32_t classes, std::uint32_t per_class, std::uint32_t width,
                                   std::uint32_t height, double noise, std::uint64_t seed) {
  if (classes == 0 || width == 0 || height == 0) throw ContractError("synthetic images need positive sizes");
  Rng rng(seed);
  const std::size_t values = std::size_t{width} * height * 3;
  std::vector<std::vector<double>> prototypes(classes, std::vector<double>(values));
  for (auto& proto : prototypes) {
    for (auto& px : proto) px = rng.uniform(0.15, 0.85);
  }
  RawSampleSet set;
  for (std::uint32_t c = 0; c < classes; ++c) {
    for (std::uint32_t i = 0; i < per_class; ++i) {
      ImageSample img{width, height, prototypes[c]};
      for (auto& px : img.pixels) px = std::clamp(px + noise * rng.normal(), 0.0, 1.0);
      set.samples.emplace_back(std::move(img));
      set.labels.push_back(c);
    }
  }
  return set;
}

}  // namespace fewshot
