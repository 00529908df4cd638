// Copyright 2026 The fewshot Authors
// SPDX-License-Identifier: Apache-2.0

// End-to-end episodes and their aggregation: accuracy over many sampled
// tasks with a 95% interval, the k sweep and the ablation grid.

#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "fewshot/classifier_training.hpp"
#include "fewshot/episode_data.hpp"
#include "fewshot/graph_aggregation.hpp"

namespace fewshot {

enum class Ablation { kFull, kNoDistill, kNoAug, kNoBoth };

std::string_view ablation_name(Ablation ablation);

struct GraphConfig {
  std::size_t m = 10;
  int gamma = 3;
  double alpha_init = 1.0;
  SparsifyRule rule = SparsifyRule::kUnion;
};

struct EvalConfig {
  EpisodeSpec spec;
  std::size_t tasks = 600;
  std::uint64_t seed = 0;
  Ablation ablation = Ablation::kFull;
  GraphConfig graph;
  TaskTrainConfig train;
  std::size_t workers = 1;  // execution only; never changes results

  void validate() const;
};

struct EpisodeResult {
  double accuracy = 0.0;
  std::vector<std::uint32_t> predictions;  // episode labels, one per query
  ClassifierParams teacher;                // stage-1 result
  ClassifierParams student;                // final classifier (== teacher without distillation)
};

/// Builds the task graph over support + query, trains stage 1 (and stage 2
/// unless ablated) with cfg.train.seed and classifies the queries.
EpisodeResult solve_episode(const FeatureDataset& features, const Episode& episode, const EvalConfig& cfg);

/// Fraction of correctly classified queries of solve_episode().
double run_episode(const FeatureDataset& features, const Episode& episode, const EvalConfig& cfg);

/// Seed of task `index`: derive_seed(seed, index).
std::uint64_t task_seed(std::uint64_t seed, std::size_t index);

/// Training seed used for a task; decorrelated from the episode sampling stream.
std::uint64_t task_train_seed(std::uint64_t task_seed);

struct EvalReport {
  double mean_accuracy = 0.0;
  double ci95 = 0.0;
  std::vector<double> per_task_accuracies;
  std::vector<std::uint64_t> task_seeds;
  EvalConfig config;
  std::vector<std::pair<std::string, std::string>> provenance;  // e.g. synthetic generator parameters
  double wall_time_seconds = 0.0;
};

/// 1.96 * population stddev / sqrt(T); 0 for a single task.
double ci95(std::span<const double> per_task);

/// InfeasibleError unless every class holds at least k + q records and there
/// are at least N classes.
void check_feasible(const FeatureDataset& features, const EpisodeSpec& spec);

/// Runs cfg.tasks episodes on up to cfg.workers threads. Per-task results are
/// stored by task index, so the report does not depend on the worker count.
EvalReport evaluate(const FeatureDataset& features, const EvalConfig& cfg);

/// One evaluate() per k, everything else fixed.
std::vector<EvalReport> sweep_k(const FeatureDataset& features, const EvalConfig& base,
                                std::span<const std::uint32_t> k_list);

/// Paired evaluate() runs in the fixed order full, no_distill, no_aug, no_both.
std::array<EvalReport, 4> ablation_grid(const FeatureDataset& features, const EvalConfig& base);

/// Effective configuration as ordered key/value pairs (worker count excluded).
std::vector<std::pair<std::string, std::string>> describe(const EvalConfig& cfg);

/// "key: value" header lines followed by one "task_index<TAB>accuracy" line
/// per task. Wall time is not included so the text is reproducible.
std::string format_report(const EvalReport& report);

}  // namespace fewshot
