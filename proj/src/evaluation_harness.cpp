// Copyright 2026 The fewshot Authors
// SPDX-License-Identifier: Apache-2.0

#include "fewshot/evaluation_harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <mutex>
#include <numeric>
#include <thread>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "fewshot/error.hpp"
#include "fewshot/rng.hpp"

namespace fewshot {

std::string_view ablation_name(Ablation ablation) {
  switch (ablation) {
    case Ablation::kFull: return "full";
    case Ablation::kNoDistill: return "no_distill";
    case Ablation::kNoAug: return "no_aug";
    case Ablation::kNoBoth: return "no_both";
  }
  return "unknown";
}

void EvalConfig::validate() const {
  spec.validate();
  train.validate();
  if (tasks < 1) throw ContractError("tasks must be at least 1");
  if (graph.m < 1) throw ContractError("graph sparsity m must be at least 1");
  PropagationConfig{graph.alpha_init, graph.gamma}.validate();
}

EpisodeResult solve_episode(const FeatureDataset& features, const Episode& episode, const EvalConfig& cfg) {
  const bool augment = cfg.ablation == Ablation::kFull || cfg.ablation == Ablation::kNoDistill;
  const bool distill = cfg.ablation == Ablation::kFull || cfg.ablation == Ablation::kNoAug;

  const TaskGraph graph = TaskGraph::build(episode.vertex_matrix(features), cfg.graph.m, cfg.graph.rule);
  const PropagationConfig prop{cfg.graph.alpha_init, cfg.graph.gamma};
  TaskTrainConfig train = cfg.train;
  if (!augment) train.copies = 0;

  EpisodeResult result;
  result.teacher = train_stage1(graph, episode, train, prop).params;
  result.student = distill ? train_stage2(graph, episode, result.teacher, train, prop).params : result.teacher;

  const Matrix v_new = propagate(graph.v, graph.e_norm, {result.teacher.alpha, prop.gamma});
  const auto n_support = static_cast<Eigen::Index>(episode.support.size());
  result.predictions = predict(result.student, v_new.bottomRows(v_new.rows() - n_support));
  std::size_t correct = 0;
  for (std::size_t i = 0; i < episode.query.size(); ++i) {
    if (result.predictions[i] == episode.query[i].label) ++correct;
  }
  result.accuracy = static_cast<double>(correct) / static_cast<double>(episode.query.size());
  return result;
}

double run_episode(const FeatureDataset& features, const Episode& episode, const EvalConfig& cfg) {
  return solve_episode(features, episode, cfg).accuracy;
}

std::uint64_t task_seed(std::uint64_t seed, std::size_t index) { return derive_seed(seed, index); }

std::uint64_t task_train_seed(std::uint64_t seed) { return splitmix64(seed ^ 0x5851F42D4C957F2DULL); }

double ci95(std::span<const double> per_task) {
  if (per_task.size() < 2) return 0.0;
  const double n = static_cast<double>(per_task.size());
  const double mean = std::accumulate(per_task.begin(), per_task.end(), 0.0) / n;
  double sq = 0.0;
  for (double a : per_task) sq += (a - mean) * (a - mean);
  return 1.96 * std::sqrt(sq / n) / std::sqrt(n);
}

void check_feasible(const FeatureDataset& features, const EpisodeSpec& spec) {
  spec.validate();
  const auto members = features.class_members();
  if (members.size() < spec.n_way) {
    throw InfeasibleError(fmt::format("dataset has {} classes, {}-way episodes need at least {}", members.size(),
                                      spec.n_way, spec.n_way));
  }
  const std::size_t need = std::size_t{spec.k_shot} + spec.q_query;
  for (std::size_t c = 0; c < members.size(); ++c) {
    if (members[c].size() < need) {
      throw InfeasibleError(fmt::format("class {} has {} records, k + q = {} needed", c, members[c].size(), need));
    }
  }
}

EvalReport evaluate(const FeatureDataset& features, const EvalConfig& cfg) {
  cfg.validate();
  check_feasible(features, cfg.spec);
  const auto start = std::chrono::steady_clock::now();

  EvalReport report;
  report.config = cfg;
  report.per_task_accuracies.assign(cfg.tasks, 0.0);
  report.task_seeds.resize(cfg.tasks);
  for (std::size_t t = 0; t < cfg.tasks; ++t) report.task_seeds[t] = task_seed(cfg.seed, t);

  std::atomic<std::size_t> next{0};
  std::mutex error_mutex;
  std::size_t failed_task = cfg.tasks;
  std::exception_ptr failure;
  const auto worker = [&] {
    for (std::size_t t = next.fetch_add(1); t < cfg.tasks; t = next.fetch_add(1)) {
      try {
        const Episode episode = sample_episode(features, cfg.spec, report.task_seeds[t]);
        EvalConfig task_cfg = cfg;
        task_cfg.train.seed = task_train_seed(report.task_seeds[t]);
        report.per_task_accuracies[t] = run_episode(features, episode, task_cfg);
      } catch (...) {
        // Keep the lowest failing index so the surfaced error is worker-count independent.
        std::lock_guard lock(error_mutex);
        if (t < failed_task) {
          failed_task = t;
          failure = std::current_exception();
        }
      }
    }
  };
  const std::size_t threads = std::clamp<std::size_t>(cfg.workers, 1, cfg.tasks);
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    pool.reserve(threads);
    for (std::size_t i = 0; i < threads; ++i) pool.emplace_back(worker);
  }
  if (failure) std::rethrow_exception(failure);

  const auto& acc = report.per_task_accuracies;
  report.mean_accuracy = std::accumulate(acc.begin(), acc.end(), 0.0) / static_cast<double>(acc.size());
  report.ci95 = ci95(acc);
  report.wall_time_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  spdlog::info("evaluate [{}] {}-way {}-shot: {} tasks, mean {:.4f} +- {:.4f} in {:.2f}s", ablation_name(cfg.ablation),
               cfg.spec.n_way, cfg.spec.k_shot, cfg.tasks, report.mean_accuracy, report.ci95,
               report.wall_time_seconds);
  return report;
}

std::vector<EvalReport> sweep_k(const FeatureDataset& features, const EvalConfig& base,
                                std::span<const std::uint32_t> k_list) {
  std::vector<EvalConfig> configs;
  for (auto k : k_list) {
    EvalConfig cfg = base;
    cfg.spec.k_shot = k;
    check_feasible(features, cfg.spec);
    configs.push_back(cfg);
  }
  std::vector<EvalReport> reports;
  for (const auto& cfg : configs) reports.push_back(evaluate(features, cfg));
  return reports;
}

std::array<EvalReport, 4> ablation_grid(const FeatureDataset& features, const EvalConfig& base) {
  std::array<EvalReport, 4> reports;
  constexpr std::array variants{Ablation::kFull, Ablation::kNoDistill, Ablation::kNoAug, Ablation::kNoBoth};
  for (std::size_t i = 0; i < variants.size(); ++i) {
    EvalConfig cfg = base;
    cfg.ablation = variants[i];
    reports[i] = evaluate(features, cfg);
  }
  return reports;
}

std::vector<std::pair<std::string, std::string>> describe(const EvalConfig& cfg) {
  const auto& t = cfg.train;
  return {
      {"variant", std::string(ablation_name(cfg.ablation))},
      {"n_way", std::to_string(cfg.spec.n_way)},
      {"k_shot", std::to_string(cfg.spec.k_shot)},
      {"q_query", std::to_string(cfg.spec.q_query)},
      {"tasks", std::to_string(cfg.tasks)},
      {"seed", std::to_string(cfg.seed)},
      {"m", std::to_string(cfg.graph.m)},
      {"gamma", std::to_string(cfg.graph.gamma)},
      {"alpha_init", fmt::format("{}", cfg.graph.alpha_init)},
      {"sparsify", cfg.graph.rule == SparsifyRule::kUnion ? "union" : "intersection"},
      {"lambda", fmt::format("{}", t.lambda_mix)},
      {"copies", std::to_string(t.copies)},
      {"beta", fmt::format("{}", t.beta)},
      {"stage1_epochs", std::to_string(t.stage1_epochs)},
      {"stage2_epochs", std::to_string(t.stage2_epochs)},
      {"lr1", fmt::format("{}", t.lr1)},
      {"lr2", fmt::format("{}", t.lr2)},
      {"adam_beta1", fmt::format("{}", t.adam_beta1)},
      {"adam_beta2", fmt::format("{}", t.adam_beta2)},
      {"adam_eps", fmt::format("{}", t.adam_eps)},
      {"kl_direction", t.kl_direction == KlDirection::kStudentTeacher ? "student_teacher" : "teacher_student"},
  };
}

std::string format_report(const EvalReport& report) {
  std::string out;
  for (const auto& [key, value] : describe(report.config)) out += fmt::format("{}: {}\n", key, value);
  for (const auto& [key, value] : report.provenance) out += fmt::format("{}: {}\n", key, value);
  out += fmt::format("mean_accuracy: {:.17g}\n", report.mean_accuracy);
  out += fmt::format("ci95: {:.17g}\n", report.ci95);
  for (std::size_t t = 0; t < report.per_task_accuracies.size(); ++t) {
    out += fmt::format("{}\t{:.17g}\n", t, report.per_task_accuracies[t]);
  }
  return out;
}

}  // namespace fewshot
