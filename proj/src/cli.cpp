// Copyright 2026 The fewshot Authors
// SPDX-License-Identifier: Apache-2.0

#include "fewshot/cli.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <memory>
#include <optional>

#include <fmt/format.h>
#include <spdlog/sinks/ostream_sink.h>
#include <spdlog/spdlog.h>

#include "CLI11.hpp"
#include "fewshot/contrastive_pretrain.hpp"
#include "fewshot/episode_data.hpp"
#include "fewshot/error.hpp"
#include "fewshot/evaluation_harness.hpp"
#include "fewshot/run_config.hpp"
#include "fewshot/synthetic.hpp"

namespace fewshot {
namespace {

struct ConfigArgs {
  std::string config_path;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;

  void attach(CLI::App& cmd) {
    cmd.add_option("--config", config_path, "Flat 'key = value' configuration file");
    cmd.add_option("--set", overrides, "Override a configuration key (key=value), repeatable");
    cmd.add_option("--seed", seed, "Run seed");
  }

  RunConfig resolve() const {
    RunConfig cfg;
    if (!config_path.empty()) cfg.load_file(config_path);
    cfg.apply_overrides(overrides);
    if (seed) cfg.set("seed", std::to_string(*seed));
    return cfg;
  }
};

struct EpisodeArgs {
  std::uint32_t n = 5;
  std::uint32_t k = 1;
  std::uint32_t q = 15;
  bool no_aug = false;
  bool no_distill = false;

  void attach(CLI::App& cmd) {
    cmd.add_option("--n", n, "Classes per episode (N)")->check(CLI::Range(2u, 1000000u));
    cmd.add_option("--k", k, "Support examples per class (k)")->check(CLI::Range(1u, 1000000u));
    cmd.add_option("--q", q, "Query examples per class (q)")->check(CLI::Range(1u, 1000000u));
    cmd.add_flag("--no-aug", no_aug, "Disable mixup augmentation");
    cmd.add_flag("--no-distill", no_distill, "Disable the self-distillation stage");
  }

  Ablation ablation() const {
    if (no_aug && no_distill) return Ablation::kNoBoth;
    if (no_aug) return Ablation::kNoAug;
    if (no_distill) return Ablation::kNoDistill;
    return Ablation::kFull;
  }
};

void echo(std::ostream& out, const std::vector<std::pair<std::string, std::string>>& pairs) {
  for (const auto& [key, value] : pairs) out << "# " << key << ": " << value << '\n';
}

EvalConfig make_eval_config(const RunConfig& run, const EpisodeArgs& ep) {
  EvalConfig cfg;
  cfg.spec = {ep.n, ep.k, ep.q};
  cfg.seed = run.seed;
  cfg.ablation = ep.ablation();
  cfg.graph = run.graph;
  cfg.train = run.train;
  return cfg;
}

std::string cell(const EvalReport& r) {
  return fmt::format("{:.2f}±{:.2f}", 100.0 * r.mean_accuracy, 100.0 * r.ci95);
}

int cmd_pretrain(const std::string& data, const std::string& out_path, const ConfigArgs& args, std::ostream& out) {
  const RunConfig run = args.resolve();
  const auto set = load_images(data);
  echo(out, run.pretrain_echo());
  out << "# samples: " << set.samples.size() << '\n';
  const auto result = pretrain(set.samples, run.pretrain);
  out << "# epoch\tloss\n";
  for (std::size_t e = 0; e < result.epoch_loss.size(); ++e) {
    out << e << '\t' << fmt::format("{:.17g}", result.epoch_loss[e]) << '\n';
  }
  save_encoders(result.params, out_path);
  return kExitOk;
}

int cmd_embed(const std::string& encoder_path, const std::string& data, const std::string& out_path, std::ostream& out) {
  const auto params = load_encoders(encoder_path);
  const auto set = load_images(data);
  auto features = extract_features(params, set.samples, set.labels);
  save_features(features, out_path);
  out << "# records: " << features.size() << '\n';
  out << "# dim: " << features.dim << '\n';
  return kExitOk;
}

int cmd_solve(const std::string& features_path, const EpisodeArgs& ep, const ConfigArgs& args, std::ostream& out) {
  const RunConfig run = args.resolve();
  const auto features = load_features(features_path);
  EvalConfig cfg = make_eval_config(run, ep);
  cfg.tasks = 1;
  cfg.validate();
  const auto episode = sample_episode(features, cfg.spec, cfg.seed);
  cfg.train.seed = task_train_seed(cfg.seed);
  const auto result = solve_episode(features, episode, cfg);

  echo(out, describe(cfg));
  out << "# query\tdataset_index\tpredicted_class\ttrue_class\n";
  const auto name = [&](std::uint32_t label) {
    const auto id = episode.class_map[label];
    const auto it = features.class_names.find(id);
    return it == features.class_names.end() ? std::to_string(id) : it->second;
  };
  for (std::size_t i = 0; i < episode.query.size(); ++i) {
    out << i << '\t' << episode.query[i].index << '\t' << name(result.predictions[i]) << '\t'
        << name(episode.query[i].label) << '\n';
  }
  out << "# accuracy: " << fmt::format("{:.17g}", result.accuracy) << '\n';
  return kExitOk;
}

std::vector<std::uint32_t> parse_k_list(const std::string& text) {
  std::vector<std::uint32_t> ks;
  std::string_view rest = text;
  while (!rest.empty()) {
    const auto comma = rest.find(',');
    const auto item = rest.substr(0, comma);
    std::uint32_t k = 0;
    const auto [ptr, ec] = std::from_chars(item.data(), item.data() + item.size(), k);
    if (ec != std::errc() || ptr != item.data() + item.size() || k == 0) {
      throw UsageError("--sweep-k expects a comma-separated list of positive integers, got '" + text + "'");
    }
    ks.push_back(k);
    rest = comma == std::string_view::npos ? std::string_view{} : rest.substr(comma + 1);
  }
  if (ks.empty()) throw UsageError("--sweep-k list is empty");
  return ks;
}

struct EvalArgs {
  std::string features;
  std::string synthetic;
  std::size_t tasks = 600;
  std::string sweep;
  bool ablate = false;
  std::size_t workers = 1;
  std::string out_path;
};

int cmd_eval(const EvalArgs& ea, const EpisodeArgs& ep, const ConfigArgs& args, std::ostream& out) {
  const RunConfig run = args.resolve();
  if (ea.features.empty() == ea.synthetic.empty()) throw UsageError("eval needs exactly one of --features or --synthetic");
  FeatureDataset features;
  std::vector<std::pair<std::string, std::string>> provenance;
  if (!ea.features.empty()) {
    features = load_features(ea.features);
    provenance.emplace_back("features", ea.features);
  } else {
    const auto spec = ClusterSpec::parse(ea.synthetic);
    features = make_clustered_features(spec);
    provenance = spec.describe();
  }

  EvalConfig base = make_eval_config(run, ep);
  base.tasks = ea.tasks;
  base.workers = ea.workers;
  base.validate();
  const auto ks = ea.sweep.empty() ? std::vector<std::uint32_t>{ep.k} : parse_k_list(ea.sweep);
  const std::vector<Ablation> variants =
      ea.ablate ? std::vector<Ablation>{Ablation::kFull, Ablation::kNoDistill, Ablation::kNoAug, Ablation::kNoBoth}
                : std::vector<Ablation>{base.ablation};
  for (auto k : ks) check_feasible(features, {ep.n, k, ep.q});

  std::vector<std::vector<EvalReport>> table;  // [variant][k]
  for (auto variant : variants) {
    EvalConfig cfg = base;
    cfg.ablation = variant;
    auto reports = sweep_k(features, cfg, ks);
    for (auto& r : reports) r.provenance = provenance;
    table.push_back(std::move(reports));
  }

  echo(out, provenance);
  echo(out, describe(base));
  out << "# variant";
  for (auto k : ks) out << '\t' << k << "-shot";
  out << '\n';
  for (std::size_t v = 0; v < variants.size(); ++v) {
    out << ablation_name(variants[v]);
    for (const auto& r : table[v]) out << '\t' << cell(r);
    out << '\n';
  }

  std::string reports;
  for (const auto& row : table) {
    for (const auto& r : row) reports += (reports.empty() ? "" : "\n") + format_report(r);
  }
  if (ea.out_path.empty()) {
    out << '\n' << reports;
  } else {
    std::ofstream file(ea.out_path, std::ios::binary | std::ios::trunc);
    if (!file) throw IoError("cannot open '" + ea.out_path + "' for writing");
    file << reports;
    if (!file) throw IoError("write to '" + ea.out_path + "' failed");
  }
  return kExitOk;
}

int dispatch(const std::vector<std::string>& argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Few-shot classification: contrastive pretraining, graph aggregation, mixup and self-distillation"};
  app.name("fewshot");
  app.require_subcommand(1);

  std::string data, out_path, encoder, features;
  ConfigArgs cfg_args;
  EpisodeArgs ep_args;
  EvalArgs eval_args;

  auto* pretrain_cmd = app.add_subcommand("pretrain", "Train the two view encoders on a raw image file");
  pretrain_cmd->add_option("--data", data, "CIMG raw-sample file")->required();
  pretrain_cmd->add_option("--out", out_path, "Encoder file to write")->required();
  cfg_args.attach(*pretrain_cmd);

  auto* embed_cmd = app.add_subcommand("embed", "Extract concatenated features with trained encoders");
  embed_cmd->add_option("--encoder", encoder, "CENC encoder file")->required();
  embed_cmd->add_option("--data", data, "CIMG raw-sample file")->required();
  embed_cmd->add_option("--out", out_path, "CFSL feature file to write")->required();

  ConfigArgs solve_cfg;
  EpisodeArgs solve_ep;
  auto* solve_cmd = app.add_subcommand("solve", "Sample one episode and classify its queries");
  solve_cmd->add_option("--features", features, "CFSL feature file")->required();
  solve_ep.attach(*solve_cmd);
  solve_cfg.attach(*solve_cmd);

  auto* eval_cmd = app.add_subcommand("eval", "Evaluate over many sampled episodes");
  eval_cmd->add_option("--features", eval_args.features, "CFSL feature file");
  eval_cmd->add_option("--synthetic", eval_args.synthetic,
                       "Generate clustered features, e.g. clusters=5,sep=10,dim=64,per_class=100");
  eval_cmd->add_option("--tasks", eval_args.tasks, "Number of sampled episodes")->check(CLI::PositiveNumber);
  eval_cmd->add_option("--sweep-k", eval_args.sweep, "Comma-separated k values, one column each");
  eval_cmd->add_flag("--ablate", eval_args.ablate, "Run full, no_distill, no_aug and no_both on paired episodes");
  eval_cmd->add_option("--workers", eval_args.workers, "Worker threads (results do not depend on it)")
      ->check(CLI::PositiveNumber);
  eval_cmd->add_option("--out", eval_args.out_path, "Write the per-task reports here instead of stdout");
  ep_args.attach(*eval_cmd);
  cfg_args.attach(*eval_cmd);

  std::string synth_spec;
  auto* make_features_cmd = app.add_subcommand("make-features", "Write a synthetic clustered feature file");
  make_features_cmd->add_option("--synthetic", synth_spec, "Generator parameters")->required();
  make_features_cmd->add_option("--out", out_path, "CFSL feature file to write")->required();

  std::uint32_t classes = 10, per_class = 20, width = 8, height = 8;
  double noise = 0.05;
  std::uint64_t image_seed = 0;
  auto* make_images_cmd = app.add_subcommand("make-images", "Write a synthetic CIMG raw image file");
  make_images_cmd->add_option("--out", out_path, "CIMG file to write")->required();
  make_images_cmd->add_option("--classes", classes)->check(CLI::PositiveNumber);
  make_images_cmd->add_option("--per-class", per_class)->check(CLI::PositiveNumber);
  make_images_cmd->add_option("--width", width)->check(CLI::PositiveNumber);
  make_images_cmd->add_option("--height", height)->check(CLI::PositiveNumber);
  make_images_cmd->add_option("--noise", noise)->check(CLI::NonNegativeNumber);
  make_images_cmd->add_option("--seed", image_seed);

  try {
    std::vector<std::string> reversed(argv.rbegin(), argv.rend());
    app.parse(std::move(reversed));
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      out << app.help();
      return kExitOk;
    }
    err << "error: " << e.what() << '\n' << app.help();
    return kExitUsage;
  }

  if (pretrain_cmd->parsed()) return cmd_pretrain(data, out_path, cfg_args, out);
  if (embed_cmd->parsed()) return cmd_embed(encoder, data, out_path, out);
  if (solve_cmd->parsed()) return cmd_solve(features, solve_ep, solve_cfg, out);
  if (eval_cmd->parsed()) return cmd_eval(eval_args, ep_args, cfg_args, out);
  if (make_features_cmd->parsed()) {
    const auto spec = ClusterSpec::parse(synth_spec);
    const auto data_set = make_clustered_features(spec);
    save_features(data_set, out_path);
    out << "# records: " << data_set.size() << '\n' << "# dim: " << data_set.dim << '\n';
    return kExitOk;
  }
  if (make_images_cmd->parsed()) {
    const auto set = make_synthetic_images(classes, per_class, width, height, noise, image_seed);
    save_images(set, out_path);
    out << "# samples: " << set.samples.size() << '\n';
    return kExitOk;
  }
  return kExitUsage;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  auto sink = std::make_shared<spdlog::sinks::ostream_sink_mt>(err);
  sink->set_pattern("[%l] %v");
  const auto previous = spdlog::default_logger();
  spdlog::set_default_logger(std::make_shared<spdlog::logger>("fewshot", sink));
  const auto restore = [&] { spdlog::set_default_logger(previous); };

  int code = kExitOk;
  try {
    code = dispatch(args, out, err);
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << '\n';
    code = kExitUsage;
  } catch (const IoError& e) {
    err << "i/o error: " << e.what() << '\n';
    code = kExitIo;
  } catch (const FormatError& e) {
    err << "format error: " << e.what() << '\n';
    code = kExitIo;
  } catch (const InfeasibleError& e) {
    err << "infeasible: " << e.what() << '\n';
    code = kExitInfeasible;
  } catch (const Error& e) {
    err << "numeric error: " << e.what() << '\n';
    code = kExitNumeric;
  }
  out.flush();
  restore();
  return code;
}

}  // namespace fewshot
