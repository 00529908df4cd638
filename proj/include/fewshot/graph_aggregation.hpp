// Copyright 2026 The fewshot Authors
// SPDX-License-Identifier: Apache-2.0

// Per-task cosine nearest-neighbour graph and feature propagation
// V_new = (alpha*I + E)^gamma * V with a trainable alpha.

#pragma once

#include <cstddef>
#include <span>

#include "fewshot/linalg.hpp"

namespace fewshot {

/// Floor applied to vertex degrees so that isolated vertices stay finite.
inline constexpr double kDegreeFloor = 1e-12;

/// How "keep the m largest on each row and on the corresponding column" is
/// read. kUnion keeps (i,j) if it is in the top-m of row i or of row j.
/// kIntersection requires both.
enum class SparsifyRule { kUnion, kIntersection };

/// u.v / (|u| |v|), clamped to [-1, 1]. NumericError on a zero-norm input,
/// ContractError on a length mismatch.
double cosine_similarity(std::span<const double> u, std::span<const double> v);

/// Pairwise cosine similarity of the rows of `v` with a zero diagonal. Each
/// unordered pair is evaluated once and mirrored, so the result is exactly
/// symmetric.
Matrix build_similarity(const Matrix& v);

/// Zeroes every off-diagonal entry that does not rank among the m largest of
/// its row (and/or column, per `rule`). Ties go to the lower column index.
/// When m >= n - 1 nothing can be pruned and `s` is returned unchanged.
Matrix sparsify_top_m(const Matrix& s, std::size_t m, SparsifyRule rule = SparsifyRule::kUnion);

struct NormalizedAdjacency {
  Matrix e_norm;
  Vector degrees;
};

/// E = D^-1/2 S D^-1/2 with D_ii = max(sum_j S_ij, kDegreeFloor).
/// ContractError if `s` has a negative entry, a non-zero diagonal or is not
/// square.
NormalizedAdjacency normalize_adjacency(const Matrix& s);

struct PropagationConfig {
  double alpha = 1.0;
  int gamma = 3;

  void validate() const;
};

/// (alpha*I + E)^gamma * V, evaluated as gamma updates W <- alpha*W + E*W.
Matrix propagate(const Matrix& v, const Matrix& e_norm, const PropagationConfig& cfg);

/// d/d(alpha) of <upstream, propagate(v, e_norm, cfg)>, which equals
/// gamma * <upstream, (alpha*I + E)^(gamma-1) V>.
double propagate_alpha_grad(const Matrix& v, const Matrix& e_norm, const PropagationConfig& cfg,
                            const Matrix& upstream);

/// The graph of one episode: vertices, sparsified similarities and the
/// normalized adjacency used for propagation.
struct TaskGraph {
  Matrix v;
  Matrix s;
  Matrix e_norm;
  Vector degrees;
  std::size_t m = 10;

  /// Similarity, top-m sparsification, then normalization. Kept entries with
  /// negative cosine are set to zero so `s` and `e_norm` stay non-negative.
  static TaskGraph build(Matrix vertices, std::size_t m, SparsifyRule rule = SparsifyRule::kUnion);

  Eigen::Index vertex_count() const { return v.rows(); }
};

}  // namespace fewshot
