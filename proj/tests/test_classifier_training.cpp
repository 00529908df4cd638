// Copyright 2026 The fewshot Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include "fewshot/classifier_training.hpp"
#include "fewshot/error.hpp"
#include "fewshot/evaluation_harness.hpp"
#include "fewshot/synthetic.hpp"
#include "test_util.hpp"

namespace fewshot {
namespace {

using testing::random_matrix;
using testing::rel_error;

Vector random_probs(Rng& rng, Eigen::Index n) {
  Vector p(n);
  for (Eigen::Index i = 0; i < n; ++i) p(i) = std::exp(2.0 * rng.normal());
  return p / p.sum();
}

std::span<const double> as_span(const Vector& v) { return {v.data(), static_cast<std::size_t>(v.size())}; }

ClassifierParams random_params(Rng& rng, Eigen::Index d, Eigen::Index n) {
  return {random_matrix(rng, d, n), random_matrix(rng, n, 1), rng.uniform(0.5, 1.5)};
}

std::vector<std::uint32_t> random_labels(Rng& rng, std::size_t count, std::uint32_t classes) {
  std::vector<std::uint32_t> y(count);
  for (auto& v : y) v = static_cast<std::uint32_t>(rng.uniform_index(classes));
  return y;
}

TEST(Mixup, LambdaOneIsIdentity) {
  Rng rng(31);
  const Matrix v = random_matrix(rng, 5, 4);
  const std::vector<std::uint32_t> labels{0, 1, 2, 3, 4};
  const auto out = mixup_augment(v, labels, 1.0, 7, 3);
  const auto plan = plan_mixup(5, 7, 3);
  ASSERT_EQ(out.rows.rows(), 35);
  for (std::size_t r = 0; r < plan.size(); ++r) {
    EXPECT_EQ(out.rows.row(static_cast<Eigen::Index>(r)), v.row(static_cast<Eigen::Index>(plan[r].base)));
    EXPECT_EQ(out.labels[r], labels[plan[r].base]);
  }
}

TEST(Mixup, KeepsBaseLabel) {
  Matrix v(2, 2);
  v << 1, 0, 0, 1;
  const std::vector<std::uint32_t> labels{3, 8};
  const auto plan = plan_mixup(2, 50, 4);
  const auto out = mixup_augment(v, labels, 0.95, 50, 4);
  bool saw_cross = false;
  for (std::size_t r = 0; r < plan.size(); ++r) {
    const auto row = out.rows.row(static_cast<Eigen::Index>(r));
    EXPECT_EQ(out.labels[r], labels[plan[r].base]);
    if (plan[r].base == 0 && plan[r].partner == 1) {
      saw_cross = true;
      EXPECT_NEAR(row(0), 0.95, 1e-15);
      EXPECT_NEAR(row(1), 0.05, 1e-15);
    }
  }
  EXPECT_TRUE(saw_cross);
}

TEST(Mixup, CountsAndHistogram) {
  Rng rng(32);
  const auto out = mixup_augment(random_matrix(rng, 5, 3), std::vector<std::uint32_t>{0, 1, 2, 3, 4}, 0.95, 120, 1);
  EXPECT_EQ(out.rows.rows(), 600);
  std::vector<int> hist(5);
  for (auto y : out.labels) ++hist[y];
  for (int h : hist) EXPECT_EQ(h, 120);
}

TEST(Mixup, RejectsBadLambda) {
  const Matrix v = Matrix::Ones(2, 2);
  const std::vector<std::uint32_t> y{0, 1};
  EXPECT_THROW(mixup_augment(v, y, 0.0, 1, 0), ContractError);
  EXPECT_THROW(mixup_augment(v, y, 1.5, 1, 0), ContractError);
}

TEST(Forward, UniformAndStable) {
  ClassifierParams zero{Matrix::Zero(3, 4), Vector::Zero(4), 1.0};
  const Vector p = forward(zero, std::vector<double>{1, 2, 3});
  for (Eigen::Index i = 0; i < 4; ++i) EXPECT_EQ(p(i), 0.25);

  ClassifierParams big{Matrix::Zero(2, 3), (Vector(3) << 1000, 0, 0).finished(), 1.0};
  const Vector q = forward(big, std::vector<double>{0, 0});
  EXPECT_TRUE(q.allFinite());
  EXPECT_NEAR(q(0), 1.0, 1e-15);
  EXPECT_THROW(forward(big, std::vector<double>{1}), ContractError);
}

TEST(Forward, HandComputedTwoByTwo) {
  Matrix w(2, 2);
  w << 1, -1, 0.5, 2;
  ClassifierParams p{w, (Vector(2) << 0.1, -0.3).finished(), 1.0};
  const Vector out = forward(p, std::vector<double>{2, -1});
  const double l0 = 2 * 1 + -1 * 0.5 + 0.1;   // 1.6
  const double l1 = 2 * -1 + -1 * 2 - 0.3;    // -4.3
  const double z = std::exp(l0) + std::exp(l1);
  EXPECT_NEAR(out(0), std::exp(l0) / z, 1e-12);
  EXPECT_NEAR(out(1), std::exp(l1) / z, 1e-12);
}

TEST(Forward, SumsToOneUnderExtremeLogits) {
  Rng rng(33);
  for (int t = 0; t < 200; ++t) {
    ClassifierParams p{Matrix::Zero(2, 6), 1e4 * random_matrix(rng, 6, 1), 1.0};
    const Vector out = forward(p, std::vector<double>{0, 0});
    EXPECT_TRUE(out.allFinite());
    EXPECT_NEAR(out.sum(), 1.0, 1e-12);
  }
}

TEST(CrossEntropy, Examples) {
  EXPECT_EQ(ce_loss(std::vector<double>{0, 1, 0}, 1), 0.0);
  EXPECT_NEAR(ce_loss(std::vector<double>(5, 0.2), 3), 1.6094379124, 1e-10);
  EXPECT_NEAR(ce_loss(std::vector<double>{0.5, 0.5}, 0), 0.6931471806, 1e-10);
  EXPECT_TRUE(std::isfinite(ce_loss(std::vector<double>{1, 0}, 1)));
  EXPECT_THROW(ce_loss(std::vector<double>{1, 0}, 2), ContractError);
}

TEST(KlDivergence, Examples) {
  const std::vector<double> p{0.2, 0.3, 0.5};
  EXPECT_EQ(kl_div(p, p), 0.0);
  EXPECT_NEAR(kl_div(std::vector<double>{1, 0}, std::vector<double>{0.5, 0.5}), 0.6931471806, 1e-10);
  EXPECT_THROW(kl_div(p, std::vector<double>{1}), ContractError);
}

TEST(KlDivergence, NonNegativeOverRandomPairs) {
  Rng rng(34);
  for (int t = 0; t < 1000; ++t) {
    const auto n = static_cast<Eigen::Index>(2 + rng.uniform_index(6));
    const Vector p = random_probs(rng, n);
    const Vector q = random_probs(rng, n);
    EXPECT_GE(kl_div(as_span(p), as_span(q)), 0.0);
  }
}

TEST(DistillLoss, BetaOneIsMeanCrossEntropyBitwise) {
  Rng rng(35);
  for (int t = 0; t < 50; ++t) {
    const auto params = random_params(rng, 4, 5);
    const auto teacher = random_params(rng, 4, 5);
    const Matrix rows = random_matrix(rng, 7, 4);
    const auto labels = random_labels(rng, 7, 5);
    const auto d = distill_loss(params, teacher, rows, labels, 1.0);
    const auto c = mean_ce_loss(params, rows, labels);
    EXPECT_EQ(d.loss, c.loss);
    EXPECT_LE(rel_error(d.grad_weight, c.grad_weight), 1e-15);
  }
}

TEST(DistillLoss, SelfAgreementLeavesCrossEntropyOnly) {
  Rng rng(36);
  const auto params = random_params(rng, 4, 3);
  const Matrix rows = random_matrix(rng, 6, 4);
  const auto labels = random_labels(rng, 6, 3);
  const double beta = 0.3;
  EXPECT_NEAR(distill_loss(params, params, rows, labels, beta).loss, beta * mean_ce_loss(params, rows, labels).loss,
              1e-15);
  EXPECT_THROW(distill_loss(params, params, rows, labels, 1.1), ContractError);
}

TEST(DistillLoss, GradientsMatchFiniteDifference) {
  Rng rng(37);
  for (int t = 0; t < 60; ++t) {
    auto params = random_params(rng, 6, 5);
    const auto teacher = random_params(rng, 6, 5);
    const Matrix rows = random_matrix(rng, 5, 6);
    const auto labels = random_labels(rng, 5, 5);
    const double beta = rng.uniform01();
    const auto dir = t % 2 == 0 ? KlDirection::kStudentTeacher : KlDirection::kTeacherStudent;
    const auto g = distill_loss(params, teacher, rows, labels, beta, dir);
    const auto f = [&] { return distill_loss(params, teacher, rows, labels, beta, dir).loss; };
    EXPECT_LE(rel_error(g.grad_weight, testing::numeric_grad(params.weight, f)), 1e-6);
    Matrix bias = params.bias;
    const Matrix nb = testing::numeric_grad(bias, [&] {
      params.bias = bias;
      return f();
    });
    params.bias = bias;
    EXPECT_LE(rel_error(Matrix(g.grad_bias), nb), 1e-6);
  }
}

TEST(MeanCrossEntropy, RowGradientMatchesFiniteDifference) {
  Rng rng(38);
  for (int t = 0; t < 30; ++t) {
    const auto params = random_params(rng, 4, 3);
    Matrix rows = random_matrix(rng, 6, 4);
    const auto labels = random_labels(rng, 6, 3);
    const auto g = mean_ce_loss(params, rows, labels);
    const Matrix numeric = testing::numeric_grad(rows, [&] { return mean_ce_loss(params, rows, labels).loss; });
    EXPECT_LE(rel_error(g.grad_rows, numeric), 1e-6);
  }
}

struct EpisodeFixture {
  FeatureDataset data;
  Episode episode;
  TaskGraph graph;
};

EpisodeFixture make_fixture(std::uint32_t classes, std::uint32_t k, std::uint64_t seed, double sep = 10.0,
                           std::uint32_t dim = 16) {
  ClusterSpec spec;
  spec.clusters = classes;
  spec.dim = dim;
  spec.per_class = 40;
  spec.separation = sep;
  spec.seed = seed;
  EpisodeFixture f;
  f.data = make_clustered_features(spec);
  f.episode = sample_episode(f.data, {classes, k, 15}, seed);
  f.graph = TaskGraph::build(f.episode.vertex_matrix(f.data), 10);
  return f;
}

TEST(Stage1Loss, AlphaAndWeightGradientsMatchFiniteDifference) {
  Rng rng(39);
  for (int t = 0; t < 20; ++t) {
    const auto f = make_fixture(3, 2, static_cast<std::uint64_t>(t), 2.0);
    const auto labels = f.episode.support_labels();
    const auto plan = plan_mixup(labels.size(), 4, static_cast<std::uint64_t>(t));
    auto params = random_params(rng, 16, 3);
    params.weight *= 0.1;
    const auto g = stage1_loss(f.graph, labels, plan, 0.9, params, 3);
    const auto loss = [&] { return stage1_loss(f.graph, labels, plan, 0.9, params, 3).loss; };
    EXPECT_LE(rel_error(g.grad_alpha, testing::numeric_grad(params.alpha, loss)), 1e-5);
    EXPECT_LE(rel_error(g.grad_weight, testing::numeric_grad(params.weight, loss)), 1e-6);
  }
}

TEST(Stage1, LossDecreasesAndTrainingSetSize) {
  const auto f = make_fixture(5, 1, 3);
  TaskTrainConfig cfg;
  cfg.seed = 4;
  const auto r = train_stage1(f.graph, f.episode, cfg, {1.0, 3});
  ASSERT_EQ(r.loss_trace.size(), cfg.stage1_epochs + 1);
  EXPECT_LT(r.loss_trace.back(), r.loss_trace.front());
  EXPECT_EQ(plan_mixup(5, cfg.copies, 0).size() + 5, 605u);
  EXPECT_NE(r.params.alpha, 1.0);  // alpha is trained
}

TEST(Stage1, NoCopiesTrainsOnOriginalsOnly) {
  const auto f = make_fixture(5, 1, 5);
  TaskTrainConfig cfg;
  cfg.copies = 0;
  const auto r = train_stage1(f.graph, f.episode, cfg, {1.0, 3});
  const auto direct = stage1_loss(f.graph, f.episode.support_labels(), {}, cfg.lambda_mix,
                                  init_classifier(16, 5, 1.0, cfg.seed), 3);
  EXPECT_EQ(r.loss_trace.front(), direct.loss);
}

TEST(Stage2, ZeroEpochsIsFreshInitialization) {
  const auto f = make_fixture(5, 1, 6);
  TaskTrainConfig cfg;
  cfg.seed = 12;
  cfg.stage2_epochs = 0;
  const auto teacher = train_stage1(f.graph, f.episode, cfg, {1.0, 3}).params;
  const auto student = train_stage2(f.graph, f.episode, teacher, cfg, {1.0, 3}).params;
  const auto fresh = init_classifier(16, 5, teacher.alpha, cfg.seed ^ kStage2SeedSalt);
  EXPECT_EQ(student.weight, fresh.weight);
  EXPECT_EQ(student.bias, fresh.bias);
  EXPECT_EQ(student.alpha, teacher.alpha);
  EXPECT_NE(student.weight, init_classifier(16, 5, 1.0, cfg.seed).weight);
}

TEST(Stage2, BetaOneIsPlainCrossEntropyRetraining) {
  const auto f = make_fixture(5, 2, 7);
  TaskTrainConfig cfg;
  cfg.beta = 1.0;
  cfg.stage2_epochs = 30;
  const auto teacher = train_stage1(f.graph, f.episode, cfg, {1.0, 3}).params;
  auto other = teacher;
  other.weight.setZero();
  other.bias.setConstant(3.0);
  const auto a = train_stage2(f.graph, f.episode, teacher, cfg, {1.0, 3});
  const auto b = train_stage2(f.graph, f.episode, other, cfg, {1.0, 3});
  EXPECT_EQ(a.params.weight, b.params.weight);  // teacher is irrelevant at beta = 1
  EXPECT_LT(a.loss_trace.back(), a.loss_trace.front());
}

TEST(Stage2, DistillationDoesNotDegradeOnSeparableData) {
  ClusterSpec spec;
  spec.dim = 32;
  spec.per_class = 40;
  const auto data = make_clustered_features(spec);
  EvalConfig cfg;
  cfg.spec = {5, 5, 15};
  double teacher_acc = 0.0, student_acc = 0.0;
  for (std::uint64_t s = 0; s < 50; ++s) {
    const auto ep = sample_episode(data, cfg.spec, s);
    cfg.train.seed = task_train_seed(s);
    const auto r = solve_episode(data, ep, cfg);
    const Matrix v_new = propagate(TaskGraph::build(ep.vertex_matrix(data), cfg.graph.m).v,
                                   TaskGraph::build(ep.vertex_matrix(data), cfg.graph.m).e_norm,
                                   {r.teacher.alpha, cfg.graph.gamma});
    const auto teacher_pred = predict(r.teacher, v_new.bottomRows(75));
    std::size_t hits = 0;
    for (std::size_t i = 0; i < 75; ++i) hits += teacher_pred[i] == ep.query[i].label;
    teacher_acc += static_cast<double>(hits) / 75.0;
    student_acc += r.accuracy;
  }
  EXPECT_GE(student_acc / 50.0, teacher_acc / 50.0 - 0.02);
}

TEST(Predict, TieRuleAndBiasShiftInvariance) {
  ClassifierParams uniform{Matrix::Zero(3, 4), Vector::Zero(4), 1.0};
  Rng rng(40);
  const Matrix rows = random_matrix(rng, 10, 3);
  for (auto y : predict(uniform, rows)) EXPECT_EQ(y, 0u);

  ClassifierParams onehot{Matrix::Zero(3, 4), (Vector(4) << 0, 0, 50, 0).finished(), 1.0};
  for (auto y : predict(onehot, rows)) EXPECT_EQ(y, 2u);

  for (int t = 0; t < 50; ++t) {
    auto p = random_params(rng, 3, 4);
    const auto before = predict(p, rows);
    p.bias.array() += rng.uniform(-5.0, 5.0);
    EXPECT_EQ(predict(p, rows), before);
  }
}

TEST(Predict, AgreesWithNearestCentroidOracle) {
  double agree = 0.0;
  const int episodes = 20;
  for (int s = 0; s < episodes; ++s) {
    const auto f = make_fixture(3, 3, static_cast<std::uint64_t>(100 + s), 10.0, 64);
    EvalConfig cfg;
    cfg.spec = f.episode.spec;
    cfg.train.seed = task_train_seed(static_cast<std::uint64_t>(s));
    const auto r = solve_episode(f.data, f.episode, cfg);

    const Matrix v = f.episode.vertex_matrix(f.data);
    Matrix centroids = Matrix::Zero(3, v.cols());
    for (std::size_t i = 0; i < f.episode.support.size(); ++i) {
      centroids.row(f.episode.support[i].label) += v.row(static_cast<Eigen::Index>(i)) / 3.0;
    }
    std::size_t same = 0;
    for (std::size_t q = 0; q < f.episode.query.size(); ++q) {
      const auto row = v.row(static_cast<Eigen::Index>(f.episode.support.size() + q));
      Eigen::Index best = 0;
      (centroids.rowwise() - row).rowwise().squaredNorm().minCoeff(&best);
      same += static_cast<std::uint32_t>(best) == r.predictions[q];
    }
    agree += static_cast<double>(same) / static_cast<double>(f.episode.query.size());
  }
  EXPECT_GE(agree / episodes, 0.90);
}

TEST(Training, DeterministicGivenSeed) {
  const auto f = make_fixture(5, 1, 8);
  EvalConfig cfg;
  cfg.train.seed = 77;
  cfg.train.stage2_epochs = 100;
  const auto a = solve_episode(f.data, f.episode, cfg);
  const auto b = solve_episode(f.data, f.episode, cfg);
  EXPECT_EQ(a.student.weight, b.student.weight);
  EXPECT_EQ(a.student.bias, b.student.bias);
  EXPECT_EQ(a.predictions, b.predictions);
}

}  // namespace
}  // namespace fewshot
