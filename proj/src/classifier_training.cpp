// Copyright 2026 The fewshot Authors
// SPDX-License-Identifier: Apache-2.0

#include "fewshot/classifier_training.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "fewshot/error.hpp"
#include "fewshot/optimizer.hpp"
#include "fewshot/rng.hpp"

namespace fewshot {
namespace {

constexpr double kProbFloor = 1e-300;

void check_labels(std::span<const std::uint32_t> labels, Eigen::Index rows, Eigen::Index classes) {
  if (static_cast<Eigen::Index>(labels.size()) != rows) {
    throw ContractError(std::to_string(labels.size()) + " labels for " + std::to_string(rows) + " rows");
  }
  for (auto y : labels) {
    if (static_cast<Eigen::Index>(y) >= classes) {
      throw ContractError("label " + std::to_string(y) + " out of range for " + std::to_string(classes) + " classes");
    }
  }
}

void softmax_in_place(Eigen::Ref<Eigen::RowVectorXd> logits) {
  logits.array() -= logits.maxCoeff();
  logits = logits.array().exp().matrix();
  logits /= logits.sum();
}

// Flattened view used by Adam: weight (row-major), bias, then optionally alpha.
std::vector<double> flatten(const ClassifierParams& p, bool with_alpha) {
  std::vector<double> out(p.weight.data(), p.weight.data() + p.weight.size());
  out.insert(out.end(), p.bias.data(), p.bias.data() + p.bias.size());
  if (with_alpha) out.push_back(p.alpha);
  return out;
}

void unflatten(std::span<const double> flat, ClassifierParams& p, bool with_alpha) {
  const auto w = static_cast<std::size_t>(p.weight.size());
  const auto b = static_cast<std::size_t>(p.bias.size());
  std::copy_n(flat.begin(), w, p.weight.data());
  std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(w), b, p.bias.data());
  if (with_alpha) p.alpha = flat[w + b];
}

std::vector<double> flatten_grads(const Matrix& gw, const Vector& gb, const double* galpha) {
  std::vector<double> out(gw.data(), gw.data() + gw.size());
  out.insert(out.end(), gb.data(), gb.data() + gb.size());
  if (galpha != nullptr) out.push_back(*galpha);
  return out;
}

AdamConfig adam_config(const TaskTrainConfig& cfg, double lr) {
  return {lr, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps};
}

void check_graph_matches(const TaskGraph& graph, const Episode& episode) {
  if (static_cast<std::size_t>(graph.vertex_count()) != episode.spec.total_size()) {
    throw ContractError("task graph has " + std::to_string(graph.vertex_count()) + " vertices, episode has " +
                        std::to_string(episode.spec.total_size()));
  }
}

}  // namespace

void TaskTrainConfig::validate() const {
  if (!(lambda_mix > 0.0 && lambda_mix <= 1.0)) throw ContractError("lambda_mix must lie in (0, 1]");
  if (!(beta >= 0.0 && beta <= 1.0)) throw ContractError("beta must lie in [0, 1]");
  if (!(lr1 > 0.0) || !(lr2 > 0.0)) throw ContractError("learning rates must be positive");
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0) || !(adam_beta2 >= 0.0 && adam_beta2 < 1.0)) {
    throw ContractError("Adam betas must lie in [0, 1)");
  }
  if (!(adam_eps > 0.0)) throw ContractError("Adam epsilon must be positive");
}

ClassifierParams init_classifier(Eigen::Index input_dim, Eigen::Index classes, double alpha, std::uint64_t seed) {
  if (input_dim <= 0 || classes <= 0) throw ContractError("classifier dimensions must be positive");
  Rng rng(seed);
  const double bound = std::sqrt(6.0 / static_cast<double>(input_dim + classes));
  ClassifierParams p{Matrix(input_dim, classes), Vector::Zero(classes), alpha};
  for (Eigen::Index r = 0; r < input_dim; ++r) {
    for (Eigen::Index c = 0; c < classes; ++c) p.weight(r, c) = rng.uniform(-bound, bound);
  }
  return p;
}

std::vector<MixPair> plan_mixup(std::size_t rows, std::size_t copies, std::uint64_t seed) {
  if (rows == 0) throw ContractError("plan_mixup: no base rows");
  Rng rng(seed);
  std::vector<MixPair> plan;
  plan.reserve(rows * copies);
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t c = 0; c < copies; ++c) plan.push_back({i, static_cast<std::size_t>(rng.uniform_index(rows))});
  }
  return plan;
}

MixupResult mixup_augment(const Matrix& v_support, std::span<const std::uint32_t> labels, double lambda,
                          std::size_t copies, std::uint64_t seed) {
  if (!(lambda > 0.0 && lambda <= 1.0)) throw ContractError("mixup lambda must lie in (0, 1]");
  if (static_cast<Eigen::Index>(labels.size()) != v_support.rows()) {
    throw ContractError("mixup_augment: label count does not match support rows");
  }
  const auto plan = plan_mixup(static_cast<std::size_t>(v_support.rows()), copies, seed);
  MixupResult out{Matrix(static_cast<Eigen::Index>(plan.size()), v_support.cols()), {}};
  out.labels.reserve(plan.size());
  for (std::size_t r = 0; r < plan.size(); ++r) {
    const auto i = static_cast<Eigen::Index>(plan[r].base);
    const auto j = static_cast<Eigen::Index>(plan[r].partner);
    out.rows.row(static_cast<Eigen::Index>(r)) = lambda * v_support.row(i) + (1.0 - lambda) * v_support.row(j);
    out.labels.push_back(labels[plan[r].base]);
  }
  return out;
}

Vector forward(const ClassifierParams& params, std::span<const double> v) {
  if (static_cast<Eigen::Index>(v.size()) != params.input_dim()) {
    throw ContractError("forward: input length " + std::to_string(v.size()) + " does not match classifier width " +
                        std::to_string(params.input_dim()));
  }
  Eigen::RowVectorXd logits =
      Eigen::Map<const Eigen::RowVectorXd>(v.data(), static_cast<Eigen::Index>(v.size())) * params.weight +
      params.bias.transpose();
  softmax_in_place(logits);
  return logits.transpose();
}

Matrix forward_batch(const ClassifierParams& params, const Matrix& rows) {
  if (rows.cols() != params.input_dim()) {
    throw ContractError("forward: input width " + std::to_string(rows.cols()) + " does not match classifier width " +
                        std::to_string(params.input_dim()));
  }
  Matrix probs = rows * params.weight;
  probs.rowwise() += params.bias.transpose();
  for (Eigen::Index i = 0; i < probs.rows(); ++i) softmax_in_place(probs.row(i));
  return probs;
}

double ce_loss(std::span<const double> probs, std::uint32_t label) {
  if (label >= probs.size()) {
    throw ContractError("ce_loss: label " + std::to_string(label) + " out of range for " +
                        std::to_string(probs.size()) + " classes");
  }
  return -std::log(std::max(probs[label], kProbFloor));
}

double kl_div(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) throw ContractError("kl_div: length mismatch");
  double total = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] > 0.0) total += p[i] * (std::log(p[i]) - std::log(std::max(q[i], kProbFloor)));
  }
  return total;
}

LossAndGrads mean_ce_loss(const ClassifierParams& params, const Matrix& rows, std::span<const std::uint32_t> labels) {
  check_labels(labels, rows.rows(), params.classes());
  if (rows.rows() == 0) throw ContractError("mean_ce_loss: no rows");
  Matrix g = forward_batch(params, rows);  // becomes dL/dlogits below
  const double inv_n = 1.0 / static_cast<double>(rows.rows());
  double total = 0.0;
  for (Eigen::Index i = 0; i < g.rows(); ++i) {
    total += ce_loss({g.row(i).data(), static_cast<std::size_t>(g.cols())}, labels[static_cast<std::size_t>(i)]);
    g(i, labels[static_cast<std::size_t>(i)]) -= 1.0;
  }
  g *= inv_n;
  LossAndGrads out;
  out.loss = total / static_cast<double>(rows.rows());
  out.grad_weight = rows.transpose() * g;
  out.grad_bias = g.colwise().sum().transpose();
  out.grad_rows = g * params.weight.transpose();
  return out;
}

LossAndGrads distill_loss(const ClassifierParams& params, const ClassifierParams& teacher, const Matrix& rows,
                          std::span<const std::uint32_t> labels, double beta, KlDirection direction) {
  return distill_loss(params, forward_batch(teacher, rows), rows, labels, beta, direction);
}

LossAndGrads distill_loss(const ClassifierParams& params, const Matrix& teacher_probs, const Matrix& rows,
                          std::span<const std::uint32_t> labels, double beta, KlDirection direction) {
  if (!(beta >= 0.0 && beta <= 1.0)) throw ContractError("distill_loss: beta must lie in [0, 1]");
  check_labels(labels, rows.rows(), params.classes());
  if (rows.rows() == 0) throw ContractError("distill_loss: no rows");
  if (teacher_probs.rows() != rows.rows() || teacher_probs.cols() != params.classes()) {
    throw ContractError("distill_loss: teacher predictions have the wrong shape");
  }
  const Matrix probs = forward_batch(params, rows);
  const auto n_classes = static_cast<std::size_t>(probs.cols());
  Matrix g(probs.rows(), probs.cols());
  double total = 0.0;
  for (Eigen::Index i = 0; i < probs.rows(); ++i) {
    const std::span<const double> p(probs.row(i).data(), n_classes);
    const std::span<const double> t(teacher_probs.row(i).data(), n_classes);
    const auto y = labels[static_cast<std::size_t>(i)];
    double kl = 0.0;
    if (direction == KlDirection::kStudentTeacher) {
      kl = kl_div(p, t);
      for (std::size_t c = 0; c < n_classes; ++c) {
        const double f = std::log(std::max(p[c], kProbFloor)) - std::log(std::max(t[c], kProbFloor));
        g(i, static_cast<Eigen::Index>(c)) = (1.0 - beta) * p[c] * (f - kl);
      }
    } else {
      kl = kl_div(t, p);
      for (std::size_t c = 0; c < n_classes; ++c) g(i, static_cast<Eigen::Index>(c)) = (1.0 - beta) * (p[c] - t[c]);
    }
    total += beta * ce_loss(p, y) + (1.0 - beta) * kl;
    for (std::size_t c = 0; c < n_classes; ++c) {
      g(i, static_cast<Eigen::Index>(c)) += beta * (p[c] - (c == y ? 1.0 : 0.0));
    }
  }
  g /= static_cast<double>(probs.rows());
  LossAndGrads out;
  out.loss = total / static_cast<double>(probs.rows());
  out.grad_weight = rows.transpose() * g;
  out.grad_bias = g.colwise().sum().transpose();
  return out;
}

Stage1Loss stage1_loss(const TaskGraph& graph, std::span<const std::uint32_t> support_labels,
                       std::span<const MixPair> plan, double lambda, const ClassifierParams& params, int gamma) {
  const PropagationConfig prop{params.alpha, gamma};
  const Matrix v_new = propagate(graph.v, graph.e_norm, prop);
  const auto n_support = static_cast<Eigen::Index>(support_labels.size());
  if (n_support == 0 || n_support > v_new.rows()) throw ContractError("stage1_loss: bad support count");

  const auto total_rows = n_support + static_cast<Eigen::Index>(plan.size());
  Matrix x(total_rows, v_new.cols());
  std::vector<std::uint32_t> labels(support_labels.begin(), support_labels.end());
  labels.reserve(static_cast<std::size_t>(total_rows));
  x.topRows(n_support) = v_new.topRows(n_support);
  for (std::size_t r = 0; r < plan.size(); ++r) {
    if (static_cast<Eigen::Index>(plan[r].base) >= n_support || static_cast<Eigen::Index>(plan[r].partner) >= n_support) {
      throw ContractError("stage1_loss: mixup index outside the support rows");
    }
    x.row(n_support + static_cast<Eigen::Index>(r)) =
        lambda * v_new.row(static_cast<Eigen::Index>(plan[r].base)) +
        (1.0 - lambda) * v_new.row(static_cast<Eigen::Index>(plan[r].partner));
    labels.push_back(support_labels[plan[r].base]);
  }

  auto ce = mean_ce_loss(params, x, labels);
  Matrix upstream = Matrix::Zero(v_new.rows(), v_new.cols());
  upstream.topRows(n_support) = ce.grad_rows.topRows(n_support);
  for (std::size_t r = 0; r < plan.size(); ++r) {
    const auto g = ce.grad_rows.row(n_support + static_cast<Eigen::Index>(r));
    upstream.row(static_cast<Eigen::Index>(plan[r].base)) += lambda * g;
    upstream.row(static_cast<Eigen::Index>(plan[r].partner)) += (1.0 - lambda) * g;
  }

  Stage1Loss out;
  out.loss = ce.loss;
  out.grad_weight = std::move(ce.grad_weight);
  out.grad_bias = std::move(ce.grad_bias);
  out.grad_alpha = propagate_alpha_grad(graph.v, graph.e_norm, prop, upstream);
  return out;
}

StageResult train_stage1(const TaskGraph& graph, const Episode& episode, const TaskTrainConfig& cfg,
                         const PropagationConfig& prop) {
  cfg.validate();
  prop.validate();
  check_graph_matches(graph, episode);
  const auto labels = episode.support_labels();
  const auto plan = plan_mixup(labels.size(), cfg.copies, cfg.seed ^ kMixupSeedSalt);

  StageResult result;
  result.params = init_classifier(graph.v.cols(), episode.spec.n_way, prop.alpha, cfg.seed);
  auto flat = flatten(result.params, true);
  Adam adam(flat.size(), adam_config(cfg, cfg.lr1));
  for (std::size_t step = 0; step <= cfg.stage1_epochs; ++step) {
    const auto loss = stage1_loss(graph, labels, plan, cfg.lambda_mix, result.params, prop.gamma);
    if (!std::isfinite(loss.loss)) throw NumericError("stage 1: non-finite loss at step " + std::to_string(step));
    result.loss_trace.push_back(loss.loss);
    if (step == cfg.stage1_epochs) break;
    const auto grads = flatten_grads(loss.grad_weight, loss.grad_bias, &loss.grad_alpha);
    adam.step(flat, grads);
    unflatten(flat, result.params, true);
  }
  return result;
}

StageResult train_stage2(const TaskGraph& graph, const Episode& episode, const ClassifierParams& teacher,
                         const TaskTrainConfig& cfg, const PropagationConfig& prop) {
  cfg.validate();
  check_graph_matches(graph, episode);
  const Matrix v_new = propagate(graph.v, graph.e_norm, {teacher.alpha, prop.gamma});
  const auto labels = episode.support_labels();
  const Matrix support = v_new.topRows(static_cast<Eigen::Index>(labels.size()));
  const Matrix teacher_probs = forward_batch(teacher, support);

  StageResult result;
  result.params = init_classifier(graph.v.cols(), episode.spec.n_way, teacher.alpha, cfg.seed ^ kStage2SeedSalt);
  auto flat = flatten(result.params, false);
  Adam adam(flat.size(), adam_config(cfg, cfg.lr2));
  for (std::size_t step = 0; step <= cfg.stage2_epochs; ++step) {
    const auto loss = distill_loss(result.params, teacher_probs, support, labels, cfg.beta, cfg.kl_direction);
    if (!std::isfinite(loss.loss)) throw NumericError("stage 2: non-finite loss at step " + std::to_string(step));
    result.loss_trace.push_back(loss.loss);
    if (step == cfg.stage2_epochs) break;
    adam.step(flat, flatten_grads(loss.grad_weight, loss.grad_bias, nullptr));
    unflatten(flat, result.params, false);
  }
  return result;
}

std::vector<std::uint32_t> predict(const ClassifierParams& params, const Matrix& rows) {
  const Matrix probs = forward_batch(params, rows);
  std::vector<std::uint32_t> out;
  out.reserve(static_cast<std::size_t>(probs.rows()));
  for (Eigen::Index i = 0; i < probs.rows(); ++i) {
    Eigen::Index best = 0;
    for (Eigen::Index c = 1; c < probs.cols(); ++c) {
      if (probs(i, c) > probs(i, best)) best = c;
    }
    out.push_back(static_cast<std::uint32_t>(best));
  }
  return out;
}

}  // namespace fewshot
