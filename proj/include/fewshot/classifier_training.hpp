// Copyright 2026 The fewshot Authors
// SPDX-License-Identifier: Apache-2.0

// Task-time training of the single-layer softmax classifier.
//
// Stage 1 trains weight, bias and the propagation alpha with cross-entropy
// on the aggregated support vertices plus mixup copies of them. Stage 2
// retrains weight and bias from a fresh start on the support vertices only,
// against a convex mix of cross-entropy and KL to the stage-1 predictions.

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "fewshot/episode_data.hpp"
#include "fewshot/graph_aggregation.hpp"
#include "fewshot/linalg.hpp"

namespace fewshot {

/// Fully-connected layer R^d -> R^N followed by a softmax; alpha rides along
/// so that a stage-1 snapshot records the propagation it was trained with.
struct ClassifierParams {
  Matrix weight;  // d x N
  Vector bias;    // N
  double alpha = 1.0;

  Eigen::Index input_dim() const { return weight.rows(); }
  Eigen::Index classes() const { return weight.cols(); }
};

/// Which way the distillation KL is taken. kStudentTeacher is
/// KL(student || teacher), the order in which the two predictions are written
/// in the loss.
enum class KlDirection { kStudentTeacher, kTeacherStudent };

struct TaskTrainConfig {
  double lambda_mix = 0.95;
  std::size_t copies = 120;
  double beta = 0.5;
  std::size_t stage1_epochs = 11;
  std::size_t stage2_epochs = 1000;
  double lr1 = 1e-2;
  double lr2 = 1e-3;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  KlDirection kl_direction = KlDirection::kStudentTeacher;
  std::uint64_t seed = 0;

  void validate() const;
};

/// XOR-ed into the run seed for the stage-2 "from scratch" initialization.
inline constexpr std::uint64_t kStage2SeedSalt = 0xD1B54A32D192ED03ULL;
/// XOR-ed into the run seed for the mixup partner draws.
inline constexpr std::uint64_t kMixupSeedSalt = 0x8CB92BA72F3D8DD7ULL;

/// Glorot-uniform weight, zero bias.
ClassifierParams init_classifier(Eigen::Index input_dim, Eigen::Index classes, double alpha, std::uint64_t seed);

/// One augmented row: lambda * V[base] + (1 - lambda) * V[partner], labelled
/// like `base`.
struct MixPair {
  std::size_t base = 0;
  std::size_t partner = 0;
};

/// `copies` partners per base row, each uniform over all `rows` (the base row
/// itself included). Output is base-major.
std::vector<MixPair> plan_mixup(std::size_t rows, std::size_t copies, std::uint64_t seed);

struct MixupResult {
  Matrix rows;
  std::vector<std::uint32_t> labels;
};

/// Materializes plan_mixup(...) over `v_support`. ContractError when lambda
/// is outside (0, 1].
MixupResult mixup_augment(const Matrix& v_support, std::span<const std::uint32_t> labels, double lambda,
                          std::size_t copies, std::uint64_t seed);

/// softmax(v^T W + b) with max subtraction.
Vector forward(const ClassifierParams& params, std::span<const double> v);

/// Row-wise forward() over a batch.
Matrix forward_batch(const ClassifierParams& params, const Matrix& rows);

/// -log(max(probs[label], 1e-300)).
double ce_loss(std::span<const double> probs, std::uint32_t label);

/// sum_i p_i log(p_i / max(q_i, 1e-300)) with 0 log 0 = 0.
double kl_div(std::span<const double> p, std::span<const double> q);

struct LossAndGrads {
  double loss = 0.0;
  Matrix grad_weight;
  Vector grad_bias;
  Matrix grad_rows;  // dL/d(input rows); filled by mean_ce_loss only
};

/// Mean cross-entropy over `rows` and its gradients.
LossAndGrads mean_ce_loss(const ClassifierParams& params, const Matrix& rows, std::span<const std::uint32_t> labels);

/// (1/n) sum_i [beta * CE(student_i, y_i) + (1 - beta) * KL(student_i, teacher_i)].
/// The teacher is a constant. ContractError when beta is outside [0, 1].
LossAndGrads distill_loss(const ClassifierParams& params, const ClassifierParams& teacher, const Matrix& rows,
                          std::span<const std::uint32_t> labels, double beta,
                          KlDirection direction = KlDirection::kStudentTeacher);

/// Same as above with precomputed teacher probabilities (one row per input row).
LossAndGrads distill_loss(const ClassifierParams& params, const Matrix& teacher_probs, const Matrix& rows,
                          std::span<const std::uint32_t> labels, double beta,
                          KlDirection direction = KlDirection::kStudentTeacher);

struct Stage1Loss {
  double loss = 0.0;
  Matrix grad_weight;
  Vector grad_bias;
  double grad_alpha = 0.0;
};

/// Stage-1 objective at `params` (alpha taken from params): propagate the
/// graph, build support + mixed rows, mean cross-entropy. Query vertices carry
/// no loss terms; they only influence alpha through the graph.
Stage1Loss stage1_loss(const TaskGraph& graph, std::span<const std::uint32_t> support_labels,
                       std::span<const MixPair> plan, double lambda, const ClassifierParams& params, int gamma);

struct StageResult {
  ClassifierParams params;
  std::vector<double> loss_trace;  // loss before each optimizer step, then the final loss
};

/// Full-batch Adam on stage1_loss for stage1_epochs steps. The mixup plan is
/// drawn once; mixed rows are rebuilt from the current propagation each step.
StageResult train_stage1(const TaskGraph& graph, const Episode& episode, const TaskTrainConfig& cfg,
                         const PropagationConfig& prop);

/// Propagates once with teacher.alpha, re-initializes weight and bias from
/// seed ^ kStage2SeedSalt and runs stage2_epochs full-batch Adam steps on
/// distill_loss over the support vertices.
StageResult train_stage2(const TaskGraph& graph, const Episode& episode, const ClassifierParams& teacher,
                         const TaskTrainConfig& cfg, const PropagationConfig& prop);

/// Argmax of forward() per row; ties go to the lowest class index.
std::vector<std::uint32_t> predict(const ClassifierParams& params, const Matrix& rows);

}  // namespace fewshot
