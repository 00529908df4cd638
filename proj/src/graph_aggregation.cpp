// Copyright 2026 The fewshot Authors
// SPDX-License-Identifier: Apache-2.0

#include "fewshot/graph_aggregation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include <spdlog/spdlog.h>

#include "fewshot/error.hpp"

namespace fewshot {
namespace {

void require_square(const Matrix& m, const char* what) {
  if (m.rows() != m.cols()) {
    throw ContractError(std::string(what) + " must be square, got " + std::to_string(m.rows()) + "x" +
                        std::to_string(m.cols()));
  }
}

void require_propagation_shapes(const Matrix& v, const Matrix& e_norm) {
  require_square(e_norm, "adjacency");
  if (e_norm.rows() != v.rows()) {
    throw ContractError("adjacency has " + std::to_string(e_norm.rows()) + " vertices but V has " +
                        std::to_string(v.rows()) + " rows");
  }
}

// Columns of the m largest off-diagonal entries of row i, ties to the lower index.
std::vector<Eigen::Index> top_m_columns(const Matrix& s, Eigen::Index i, std::size_t m) {
  std::vector<Eigen::Index> cols;
  cols.reserve(static_cast<std::size_t>(s.cols()));
  for (Eigen::Index j = 0; j < s.cols(); ++j) {
    if (j != i) cols.push_back(j);
  }
  const auto keep = std::min(m, cols.size());
  std::partial_sort(cols.begin(), cols.begin() + static_cast<std::ptrdiff_t>(keep), cols.end(),
                    [&](Eigen::Index a, Eigen::Index b) {
                      return s(i, a) > s(i, b) || (s(i, a) == s(i, b) && a < b);
                    });
  cols.resize(keep);
  return cols;
}

}  // namespace

double cosine_similarity(std::span<const double> u, std::span<const double> v) {
  if (u.size() != v.size()) {
    throw ContractError("cosine_similarity: length mismatch " + std::to_string(u.size()) + " vs " +
                        std::to_string(v.size()));
  }
  double dot = 0.0, uu = 0.0, vv = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    dot += u[i] * v[i];
    uu += u[i] * u[i];
    vv += v[i] * v[i];
  }
  if (uu == 0.0 || vv == 0.0) throw NumericError("cosine_similarity: degenerate zero-norm vector");
  return std::clamp(dot / (std::sqrt(uu) * std::sqrt(vv)), -1.0, 1.0);
}

Matrix build_similarity(const Matrix& v) {
  const Eigen::Index n = v.rows();
  Vector norms(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    norms(i) = v.row(i).norm();
    if (norms(i) == 0.0) throw NumericError("build_similarity: row " + std::to_string(i) + " has zero norm");
  }
  Matrix s = Matrix::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const double c = std::clamp(v.row(i).dot(v.row(j)) / (norms(i) * norms(j)), -1.0, 1.0);
      s(i, j) = c;
      s(j, i) = c;
    }
  }
  return s;
}

Matrix sparsify_top_m(const Matrix& s, std::size_t m, SparsifyRule rule) {
  require_square(s, "similarity matrix");
  const Eigen::Index n = s.rows();
  if (n == 0 || m >= static_cast<std::size_t>(n - 1)) {
    spdlog::debug("sparsify_top_m: m={} keeps every entry of a {}-vertex graph", m, n);
    return s;
  }
  Eigen::Matrix<int, Eigen::Dynamic, Eigen::Dynamic> votes = Eigen::MatrixXi::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j : top_m_columns(s, i, m)) {
      votes(i, j) += 1;
      votes(j, i) += 1;
    }
  }
  const int needed = rule == SparsifyRule::kUnion ? 1 : 2;
  Matrix out = Matrix::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      if (i != j && votes(i, j) >= needed) out(i, j) = s(i, j);
    }
  }
  return out;
}

NormalizedAdjacency normalize_adjacency(const Matrix& s) {
  require_square(s, "similarity matrix");
  const Eigen::Index n = s.rows();
  NormalizedAdjacency out;
  out.degrees = Vector::Zero(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (s(i, i) != 0.0) throw ContractError("normalize_adjacency: non-zero diagonal at " + std::to_string(i));
    double sum = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) {
      if (s(i, j) < 0.0) {
        throw ContractError("normalize_adjacency: negative entry at (" + std::to_string(i) + "," +
                            std::to_string(j) + ")");
      }
      sum += s(i, j);
    }
    out.degrees(i) = std::max(sum, kDegreeFloor);
  }
  Vector root = out.degrees.cwiseSqrt();
  out.e_norm = Matrix::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const double e = s(i, j) / (root(i) * root(j));
      out.e_norm(i, j) = e;
      out.e_norm(j, i) = e;
    }
  }
  return out;
}

void PropagationConfig::validate() const {
  if (gamma < 0) throw ContractError("propagation gamma must be non-negative");
  if (!std::isfinite(alpha)) throw NumericError("propagation alpha is not finite");
}

Matrix propagate(const Matrix& v, const Matrix& e_norm, const PropagationConfig& cfg) {
  cfg.validate();
  require_propagation_shapes(v, e_norm);
  Matrix w = v;
  for (int step = 0; step < cfg.gamma; ++step) {
    Matrix next = e_norm * w;
    next += cfg.alpha * w;
    w = std::move(next);
  }
  return w;
}

double propagate_alpha_grad(const Matrix& v, const Matrix& e_norm, const PropagationConfig& cfg,
                            const Matrix& upstream) {
  cfg.validate();
  require_propagation_shapes(v, e_norm);
  if (upstream.rows() != v.rows() || upstream.cols() != v.cols()) {
    throw ContractError("upstream gradient shape does not match V");
  }
  if (cfg.gamma == 0) return 0.0;
  const Matrix partial = propagate(v, e_norm, {cfg.alpha, cfg.gamma - 1});
  return static_cast<double>(cfg.gamma) * upstream.cwiseProduct(partial).sum();
}

TaskGraph TaskGraph::build(Matrix vertices, std::size_t m, SparsifyRule rule) {
  TaskGraph g;
  g.m = m;
  g.v = std::move(vertices);
  // Negative similarities carry no neighbourhood signal and would break D^{-1/2}; they are dropped as edges.
  g.s = sparsify_top_m(build_similarity(g.v), m, rule).cwiseMax(0.0);
  auto adjacency = normalize_adjacency(g.s);
  g.e_norm = std::move(adjacency.e_norm);
  g.degrees = std::move(adjacency.degrees);
  return g;
}

}  // namespace fewshot
