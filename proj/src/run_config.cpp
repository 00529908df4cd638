// Copyright 2026 The fewshot Authors
// SPDX-License-Identifier: Apache-2.0

#include "fewshot/run_config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>

#include <fmt/format.h>

#include "fewshot/error.hpp"

namespace fewshot {
namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

[[noreturn]] void bad_value(std::string_view key, std::string_view value, std::string_view expected) {
  throw UsageError(fmt::format("config: '{}' = '{}' is invalid ({})", key, value, expected));
}

double real_in(std::string_view key, std::string_view value, double lo, double hi, bool lo_open, bool hi_open,
               std::string_view expected) {
  double out = 0.0;
  const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc() || ptr != value.data() + value.size() || !std::isfinite(out)) {
    bad_value(key, value, "expected a finite number");
  }
  const bool lo_ok = lo_open ? out > lo : out >= lo;
  const bool hi_ok = hi_open ? out < hi : out <= hi;
  if (!lo_ok || !hi_ok) bad_value(key, value, expected);
  return out;
}

std::uint64_t integer_at_least(std::string_view key, std::string_view value, std::uint64_t lo) {
  std::uint64_t out = 0;
  const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc() || ptr != value.data() + value.size()) bad_value(key, value, "expected a non-negative integer");
  if (out < lo) bad_value(key, value, fmt::format("must be >= {}", lo));
  return out;
}

constexpr double kInf = std::numeric_limits<double>::infinity();

}  // namespace

const std::vector<std::string_view>& RunConfig::keys() {
  static const std::vector<std::string_view> names = {
      "m",          "gamma",      "alpha_init", "sparsify",        "lambda",    "copies",     "beta",
      "stage1_epochs", "stage2_epochs", "lr1",   "lr2",             "adam_beta1", "adam_beta2", "adam_eps",
      "kl_direction", "tau",      "embed_dim",  "hidden",          "pretrain_epochs", "batch_size", "pretrain_lr",
      "momentum",   "seed"};
  return names;
}

void RunConfig::set(std::string_view key, std::string_view raw) {
  const auto value = trim(raw);
  if (key == "m") {
    graph.m = integer_at_least(key, value, 1);
  } else if (key == "gamma") {
    graph.gamma = static_cast<int>(integer_at_least(key, value, 0));
  } else if (key == "alpha_init") {
    graph.alpha_init = real_in(key, value, -kInf, kInf, true, true, "finite");
  } else if (key == "sparsify") {
    if (value == "union") graph.rule = SparsifyRule::kUnion;
    else if (value == "intersection") graph.rule = SparsifyRule::kIntersection;
    else bad_value(key, value, "union or intersection");
  } else if (key == "lambda") {
    train.lambda_mix = real_in(key, value, 0.0, 1.0, true, false, "must lie in (0, 1]");
  } else if (key == "copies") {
    train.copies = integer_at_least(key, value, 0);
  } else if (key == "beta") {
    train.beta = real_in(key, value, 0.0, 1.0, false, false, "must lie in [0, 1]");
  } else if (key == "stage1_epochs") {
    train.stage1_epochs = integer_at_least(key, value, 1);
  } else if (key == "stage2_epochs") {
    train.stage2_epochs = integer_at_least(key, value, 1);
  } else if (key == "lr1") {
    train.lr1 = real_in(key, value, 0.0, kInf, true, true, "must be positive");
  } else if (key == "lr2") {
    train.lr2 = real_in(key, value, 0.0, kInf, true, true, "must be positive");
  } else if (key == "adam_beta1") {
    train.adam_beta1 = real_in(key, value, 0.0, 1.0, false, true, "must lie in [0, 1)");
  } else if (key == "adam_beta2") {
    train.adam_beta2 = real_in(key, value, 0.0, 1.0, false, true, "must lie in [0, 1)");
  } else if (key == "adam_eps") {
    train.adam_eps = real_in(key, value, 0.0, kInf, true, true, "must be positive");
  } else if (key == "kl_direction") {
    if (value == "student_teacher") train.kl_direction = KlDirection::kStudentTeacher;
    else if (value == "teacher_student") train.kl_direction = KlDirection::kTeacherStudent;
    else bad_value(key, value, "student_teacher or teacher_student");
  } else if (key == "tau") {
    pretrain.temperature = real_in(key, value, 0.0, kInf, true, true, "must be positive");
  } else if (key == "embed_dim") {
    pretrain.embed_dim = static_cast<std::uint32_t>(integer_at_least(key, value, 1));
  } else if (key == "hidden") {
    std::vector<std::size_t> widths;
    if (value != "none") {
      std::string_view rest = value;
      while (!rest.empty()) {
        const auto comma = rest.find(',');
        widths.push_back(integer_at_least(key, trim(rest.substr(0, comma)), 1));
        rest = comma == std::string_view::npos ? std::string_view{} : rest.substr(comma + 1);
      }
    }
    pretrain.hidden = std::move(widths);
  } else if (key == "pretrain_epochs") {
    pretrain.epochs = integer_at_least(key, value, 1);
  } else if (key == "batch_size") {
    pretrain.batch_size = integer_at_least(key, value, 2);
  } else if (key == "pretrain_lr") {
    pretrain.learning_rate = real_in(key, value, 0.0, kInf, true, true, "must be positive");
  } else if (key == "momentum") {
    pretrain.momentum = real_in(key, value, 0.0, 1.0, false, true, "must lie in [0, 1)");
  } else if (key == "seed") {
    seed = integer_at_least(key, value, 0);
    pretrain.seed = seed;
  } else {
    throw UsageError(fmt::format("config: unknown key '{}'", key));
  }
}

void RunConfig::load_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config '" + path.string() + "'");
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string_view text = line;
    text = trim(text.substr(0, text.find('#')));
    if (text.empty()) continue;
    const auto eq = text.find('=');
    if (eq == std::string_view::npos) {
      throw UsageError(fmt::format("{}:{}: expected 'key = value'", path.string(), line_no));
    }
    set(trim(text.substr(0, eq)), text.substr(eq + 1));
  }
}

void RunConfig::apply_overrides(const std::vector<std::string>& assignments) {
  for (const auto& a : assignments) {
    const auto eq = a.find('=');
    if (eq == std::string::npos) throw UsageError("--set expects key=value, got '" + a + "'");
    set(trim(std::string_view(a).substr(0, eq)), std::string_view(a).substr(eq + 1));
  }
}

std::vector<std::pair<std::string, std::string>> RunConfig::pretrain_echo() const {
  std::string hidden;
  for (std::size_t i = 0; i < pretrain.hidden.size(); ++i) hidden += (i ? "," : "") + std::to_string(pretrain.hidden[i]);
  return {{"tau", fmt::format("{}", pretrain.temperature)},
          {"embed_dim", std::to_string(pretrain.embed_dim)},
          {"hidden", hidden.empty() ? "none" : hidden},
          {"pretrain_epochs", std::to_string(pretrain.epochs)},
          {"batch_size", std::to_string(pretrain.batch_size)},
          {"pretrain_lr", fmt::format("{}", pretrain.learning_rate)},
          {"momentum", fmt::format("{}", pretrain.momentum)},
          {"seed", std::to_string(pretrain.seed)}};
}

}  // namespace fewshot
