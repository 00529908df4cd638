// Copyright 2026 The fewshot Authors
// SPDX-License-Identifier: Apache-2.0

#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "fewshot/cli.hpp"
#include "fewshot/error.hpp"
#include "fewshot/run_config.hpp"
#include "test_util.hpp"

namespace fewshot {
namespace {

using testing::TempDir;

struct Run {
  int code;
  std::string out;
  std::string err;
};

Run run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

std::vector<std::string> data_lines(const std::string& text) {
  std::vector<std::string> lines;
  std::istringstream in(text);
  for (std::string line; std::getline(in, line);) {
    if (!line.empty() && line[0] != '#') lines.push_back(line);
  }
  return lines;
}

TEST(RunConfigParse, KeysRangesAndFiles) {
  RunConfig cfg;
  cfg.set("m", "7");
  cfg.set("lambda", " 0.9 ");
  cfg.set("hidden", "16,8");
  cfg.set("sparsify", "intersection");
  cfg.set("kl_direction", "teacher_student");
  EXPECT_EQ(cfg.graph.m, 7u);
  EXPECT_EQ(cfg.train.lambda_mix, 0.9);
  EXPECT_EQ(cfg.pretrain.hidden, (std::vector<std::size_t>{16, 8}));
  EXPECT_EQ(cfg.graph.rule, SparsifyRule::kIntersection);
  EXPECT_EQ(cfg.train.kl_direction, KlDirection::kTeacherStudent);
  cfg.set("hidden", "none");
  EXPECT_TRUE(cfg.pretrain.hidden.empty());

  EXPECT_THROW(cfg.set("bogus", "1"), UsageError);
  EXPECT_THROW(cfg.set("lambda", "0"), UsageError);
  EXPECT_THROW(cfg.set("beta", "1.5"), UsageError);
  EXPECT_THROW(cfg.set("m", "0"), UsageError);
  EXPECT_THROW(cfg.set("tau", "nan"), UsageError);
  EXPECT_THROW(cfg.set("gamma", "-1"), UsageError);
  EXPECT_THROW(cfg.apply_overrides({"m"}), UsageError);

  TempDir dir;
  std::ofstream(dir / "c.cfg") << "# comment\nm = 4\n\ncopies = 3  # trailing\n";
  RunConfig file_cfg;
  file_cfg.load_file(dir / "c.cfg");
  EXPECT_EQ(file_cfg.graph.m, 4u);
  EXPECT_EQ(file_cfg.train.copies, 3u);
  std::ofstream(dir / "bad.cfg") << "m 4\n";
  EXPECT_THROW(file_cfg.load_file(dir / "bad.cfg"), UsageError);
  EXPECT_THROW(file_cfg.load_file(dir / "missing.cfg"), IoError);
  for (auto key : RunConfig::keys()) EXPECT_FALSE(key.empty());
}

TEST(Cli, UsageErrors) {
  EXPECT_EQ(run({}).code, kExitUsage);
  const auto r = run({"pretrain", "--out", "x.cenc"});
  EXPECT_EQ(r.code, kExitUsage);
  EXPECT_NE(r.err.find("--data"), std::string::npos);
  EXPECT_NE(r.err.find("Usage"), std::string::npos);
  EXPECT_EQ(run({"solve", "--features", "x", "--n", "1"}).code, kExitUsage);
  EXPECT_EQ(run({"eval", "--tasks", "3"}).code, kExitUsage);
  EXPECT_EQ(run({"--help"}).code, kExitOk);
}

TEST(Cli, SolveWritesOneLinePerQuery) {
  TempDir dir;
  const auto f = (dir / "f.cfsl").string();
  ASSERT_EQ(run({"make-features", "--synthetic", "clusters=6,per_class=30,dim=16", "--out", f}).code, kExitOk);
  const std::vector<std::string> args{"solve", "--features", f, "--n", "5", "--k", "1", "--q", "15", "--seed", "7"};
  const auto a = run(args);
  ASSERT_EQ(a.code, kExitOk) << a.err;
  EXPECT_EQ(data_lines(a.out).size(), 75u);
  EXPECT_NE(a.out.find("# accuracy: "), std::string::npos);
  EXPECT_NE(a.out.find("# variant: full"), std::string::npos);
  EXPECT_EQ(run(args).out, a.out);

  auto ablated = args;
  ablated.insert(ablated.end(), {"--no-aug", "--no-distill"});
  const auto b = run(ablated);
  EXPECT_EQ(b.code, kExitOk);
  EXPECT_NE(b.out.find("# variant: no_both"), std::string::npos);
}

TEST(Cli, ErrorExitCodes) {
  TempDir dir;
  const auto f = (dir / "f.cfsl").string();
  ASSERT_EQ(run({"make-features", "--synthetic", "clusters=3,per_class=5,dim=4", "--out", f}).code, kExitOk);
  EXPECT_EQ(run({"solve", "--features", f, "--n", "5"}).code, kExitInfeasible);
  EXPECT_EQ(run({"eval", "--features", f, "--n", "3", "--k", "5", "--tasks", "2"}).code, kExitInfeasible);
  EXPECT_EQ(run({"solve", "--features", (dir / "none").string()}).code, kExitIo);
  std::ofstream(dir / "bad.cfsl") << "XXXXjunk";
  const auto bad = run({"solve", "--features", (dir / "bad.cfsl").string()});
  EXPECT_EQ(bad.code, kExitIo);
  EXPECT_NE(bad.err.find("CFSL"), std::string::npos);
  EXPECT_EQ(run({"solve", "--features", f, "--n", "3", "--q", "2", "--set", "nope=1"}).code, kExitUsage);
}

TEST(Cli, EvalTablesAndReports) {
  TempDir dir;
  const auto out = (dir / "r.txt").string();
  const std::vector<std::string> args{"eval",   "--synthetic", "clusters=5,sep=10,dim=16,per_class=40",
                                      "--tasks", "3",          "--sweep-k",
                                      "1,5",     "--ablate",   "--set",
                                      "stage2_epochs=50", "--out", out};
  const auto r = run(args);
  ASSERT_EQ(r.code, kExitOk) << r.err;
  const auto rows = data_lines(r.out);
  ASSERT_EQ(rows.size(), 4u);
  EXPECT_EQ(rows[0].rfind("full\t", 0), 0u);
  EXPECT_EQ(rows[3].rfind("no_both\t", 0), 0u);
  EXPECT_EQ(std::count(rows[0].begin(), rows[0].end(), '\t'), 2);
  EXPECT_NE(r.out.find("# variant\t1-shot\t5-shot"), std::string::npos);
  EXPECT_NE(r.out.find("# synthetic.sep: 10"), std::string::npos);
  EXPECT_NE(r.out.find("# stage2_epochs: 50"), std::string::npos);

  const auto report = slurp(out);
  EXPECT_EQ(std::count(report.begin(), report.end(), '\n') > 0, true);
  std::size_t reports = 0;
  for (std::size_t pos = 0; (pos = report.find("mean_accuracy: ", pos)) != std::string::npos; ++pos) ++reports;
  EXPECT_EQ(reports, 8u);

  const auto again = run(args);
  EXPECT_EQ(again.out, r.out);
  EXPECT_EQ(slurp(out), report);
}

TEST(Cli, FlagsOverrideConfigFile) {
  TempDir dir;
  std::ofstream(dir / "c.cfg") << "seed = 3\nstage2_epochs = 20\nm = 5\n";
  const auto r = run({"eval", "--synthetic", "dim=8,per_class=30", "--tasks", "2", "--config",
                      (dir / "c.cfg").string(), "--set", "m=6", "--seed", "11"});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  EXPECT_NE(r.out.find("# seed: 11\n"), std::string::npos);
  EXPECT_NE(r.out.find("# m: 6\n"), std::string::npos);
  EXPECT_NE(r.out.find("# stage2_epochs: 20\n"), std::string::npos);
  EXPECT_NE(r.out.find("\n0\t"), std::string::npos);  // report on stdout when --out is absent
}

TEST(Cli, PretrainEmbedPipeline) {
  TempDir dir;
  const auto images = (dir / "i.cimg").string();
  const auto enc_a = (dir / "a.cenc").string();
  const auto enc_b = (dir / "b.cenc").string();
  ASSERT_EQ(run({"make-images", "--out", images, "--classes", "4", "--per-class", "10", "--width", "4",
                 "--height", "4"})
                .code,
            kExitOk);
  const std::vector<std::string> base{"pretrain", "--data", images, "--seed", "7", "--set", "pretrain_epochs=4",
                                      "--set",    "embed_dim=6", "--set", "batch_size=8"};
  auto a_args = base;
  a_args.insert(a_args.end(), {"--out", enc_a});
  auto b_args = base;
  b_args.insert(b_args.end(), {"--out", enc_b});
  const auto a = run(a_args);
  ASSERT_EQ(a.code, kExitOk) << a.err;
  EXPECT_EQ(data_lines(a.out).size(), 4u);
  ASSERT_EQ(run(b_args).code, kExitOk);
  EXPECT_EQ(slurp(enc_a), slurp(enc_b));

  const auto feats = (dir / "x.cfsl").string();
  ASSERT_EQ(run({"embed", "--encoder", enc_a, "--data", images, "--out", feats}).code, kExitOk);
  const auto d = load_features(feats);
  EXPECT_EQ(d.dim, 12u);
  EXPECT_EQ(d.size(), 40u);
  const auto feats2 = (dir / "y.cfsl").string();
  ASSERT_EQ(run({"embed", "--encoder", enc_a, "--data", images, "--out", feats2}).code, kExitOk);
  EXPECT_EQ(slurp(feats), slurp(feats2));

  EXPECT_EQ(run({"embed", "--encoder", images, "--data", images, "--out", feats}).code, kExitIo);
}

}  // namespace
}  // namespace fewshot
