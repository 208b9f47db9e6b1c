// Copyright (c) 2026, The cmae Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>

#include <json.hpp>

#include "cli.hpp"

namespace cmae::cli {
namespace {

namespace fs = std::filesystem;

struct Outcome {
  int code = 0;
  std::string out;
  std::string err;
};

Outcome run_cli(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  Outcome o;
  o.code = run(args, out, err);
  o.out = out.str();
  o.err = err.str();
  return o;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

double csv_value(const std::string& text, const std::string& key) {
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    if (line.rfind(key + ",", 0) == 0) return std::stod(line.substr(key.size() + 1));
  }
  ADD_FAILURE() << "no row '" << key << "' in:\n" << text;
  return 0.0;
}

TEST(CliHelp, EverySubcommandListsDefaults) {
  for (const char* cmd : {"gen-data", "pretrain", "finetune", "reconstruct", "analyze-attn", "decompose", "flops"}) {
    const auto o = run_cli({cmd, "--help"});
    EXPECT_EQ(o.code, kExitOk) << cmd;
    EXPECT_NE(o.out.find("--seed UINT [0]"), std::string::npos) << cmd;
    EXPECT_NE(o.out.find("--threads UINT [1]"), std::string::npos) << cmd;
  }
  const auto pre = run_cli({"pretrain", "--help"}).out;
  for (const char* expected : {"--mask-ratio FLOAT [0.75]", "--pred-ratio FLOAT [0.75]", "--decoder-depth UINT [12]",
                               "[cross]", "--base-lr FLOAT [0.00015]", "[[0.9,0.95]]",
                               "--weight-decay FLOAT [0.05]"}) {
    EXPECT_NE(pre.find(expected), std::string::npos) << expected << "\n" << pre;
  }
}

TEST(CliUsage, UnknownFlagPrintsUsage) {
  const auto o = run_cli({"pretrain", "--bogus", "1"});
  EXPECT_EQ(o.code, kExitUsage);
  EXPECT_NE(o.err.find("bogus"), std::string::npos) << o.err;
  EXPECT_NE(o.err.find("Usage"), std::string::npos) << o.err;
}

TEST(CliUsage, SubcommandIsRequired) {
  EXPECT_EQ(run_cli({}).code, kExitUsage);
  EXPECT_EQ(run_cli({"train"}).code, kExitUsage);
}

TEST(CliUsage, PredictionRatioAboveMaskRatioRejected) {
  const auto o = run_cli({"pretrain", "--data", "x.bin", "--out", "o", "--pred-ratio", "0.9", "--mask-ratio", "0.75"});
  EXPECT_EQ(o.code, kExitUsage);
  EXPECT_NE(o.err.find("pred-ratio"), std::string::npos) << o.err;
}

TEST(CliUsage, MissingRequiredPathsRejected) {
  EXPECT_EQ(run_cli({"pretrain", "--out", "o"}).code, kExitUsage);
  EXPECT_EQ(run_cli({"gen-data"}).code, kExitUsage);
}

TEST(CliFlops, SelfVersusCrossRatio) {
  const auto self = run_cli({"flops", "--variant", "self", "--decoder-depth", "8"});
  ASSERT_EQ(self.code, kExitOk) << self.err;
  EXPECT_DOUBLE_EQ(csv_value(self.out, "decoder_ratio_vs_mae"), 1.0);
  const auto cross = run_cli({"flops", "--variant", "cross", "--decoder-depth", "12", "--pred-ratio", "0.25"});
  ASSERT_EQ(cross.code, kExitOk) << cross.err;
  const double ratio = csv_value(cross.out, "decoder_ratio_vs_mae");
  EXPECT_GE(ratio, 2.0);
  EXPECT_LE(ratio, 3.0);
  EXPECT_NE(cross.out.find("multiply-add = 2 FLOPs"), std::string::npos);
}

class CliRuns : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("cmae_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  void make_data(const std::string& name, std::size_t count, bool labeled) {
    std::vector<std::string> args = {"gen-data", "--out", path(name), "--count", std::to_string(count),
                                     "--image-size", "16", "--seed", "3"};
    if (labeled) args.push_back("--labeled");
    const auto o = run_cli(args);
    ASSERT_EQ(o.code, kExitOk) << o.err;
  }

  static std::vector<std::string> tiny_model() {
    return {"--image-size", "16",  "--enc-dim",   "16", "--enc-depth", "1", "--enc-heads", "2",
            "--dec-dim",    "8",   "--decoder-depth", "2", "--dec-heads", "2"};
  }

  Outcome pretrain(const std::string& out, std::vector<std::string> extra = {}) {
    std::vector<std::string> args = {"pretrain", "--data", path("d.bin"), "--out", path(out), "--batch-size", "16",
                                     "--epochs", "2", "--base-lr", "1e-3", "--threads", "1", "--record-plans", "4"};
    const auto m = tiny_model();
    args.insert(args.end(), m.begin(), m.end());
    args.insert(args.end(), extra.begin(), extra.end());
    return run_cli(args);
  }

  fs::path dir_;
};

TEST_F(CliRuns, MissingDatasetIsDataError) {
  const auto o = run_cli({"pretrain", "--data", path("nope.bin"), "--out", path("o")});
  EXPECT_EQ(o.code, kExitData) << o.err;
}

TEST_F(CliRuns, GenDataWritesManifest) {
  make_data("d.bin", 8, true);
  ASSERT_TRUE(fs::exists(path("d.bin.manifest.json")));
  const auto m = nlohmann::json::parse(slurp(path("d.bin.manifest.json")));
  EXPECT_EQ(m.at("count"), 8);
  EXPECT_EQ(m.at("labeled"), true);
}

TEST_F(CliRuns, PretrainOutputsAndManifestReplay) {
  make_data("d.bin", 48, false);
  const auto first = pretrain("a", {"--variant", "cross", "--pred-ratio", "0.5"});
  ASSERT_EQ(first.code, kExitOk) << first.err;
  for (const char* f : {"manifest.json", "metrics.csv", "checkpoint.cmae", "mask_plans.jsonl"}) {
    EXPECT_TRUE(fs::exists(dir_ / "a" / f)) << f;
  }
  const auto m = nlohmann::json::parse(slurp(dir_ / "a" / "manifest.json"));
  EXPECT_EQ(m.at("/masking/pred_ratio"_json_pointer), 0.5);
  EXPECT_EQ(m.at("/model/decoder_depth"_json_pointer), 2);
  EXPECT_DOUBLE_EQ(m.at("effective_lr").get<double>(), 1e-3 * 16 * 0.5 / (256 * 0.75));
  EXPECT_TRUE(m.contains("/data/fingerprint"_json_pointer));
  const std::string header = slurp(dir_ / "a" / "metrics.csv").substr(0, 39);
  EXPECT_EQ(header, "epoch,step,lr,loss,variant,p,gamma,seed");

  // Replaying the manifest alone reproduces the run byte for byte.
  const auto replay = run_cli({"pretrain", "--manifest", path("a/manifest.json"), "--out", path("b")});
  ASSERT_EQ(replay.code, kExitOk) << replay.err;
  EXPECT_EQ(slurp(dir_ / "a" / "metrics.csv"), slurp(dir_ / "b" / "metrics.csv"));
  EXPECT_EQ(slurp(dir_ / "a" / "mask_plans.jsonl"), slurp(dir_ / "b" / "mask_plans.jsonl"));
  EXPECT_EQ(slurp(dir_ / "a" / "checkpoint.cmae"), slurp(dir_ / "b" / "checkpoint.cmae"));

  // Flags beat the manifest; unset flags still come from it.
  const auto over = run_cli({"pretrain", "--manifest", path("a/manifest.json"), "--out", path("c"), "--pred-ratio",
                             "0.25", "--epochs", "1"});
  ASSERT_EQ(over.code, kExitOk) << over.err;
  const auto mc = nlohmann::json::parse(slurp(dir_ / "c" / "manifest.json"));
  EXPECT_EQ(mc.at("/masking/pred_ratio"_json_pointer), 0.25);
  EXPECT_EQ(mc.at("/model/decoder_depth"_json_pointer), 2);
  EXPECT_EQ(mc.at("/model/enc_dim"_json_pointer), 16);
}

TEST_F(CliRuns, SeedComesFromEnvironment) {
  make_data("d.bin", 32, false);
  ::setenv("CMAE_SEED", "77", 1);
  const auto o = pretrain("e", {"--max-steps", "1"});
  ::unsetenv("CMAE_SEED");
  ASSERT_EQ(o.code, kExitOk) << o.err;
  EXPECT_EQ(nlohmann::json::parse(slurp(dir_ / "e" / "manifest.json")).at("seed"), 77);
  ::setenv("CMAE_SEED", "abc", 1);
  EXPECT_EQ(run_cli({"flops"}).code, kExitUsage);
  ::unsetenv("CMAE_SEED");
}

TEST_F(CliRuns, DownstreamCommandsUseTheCheckpointManifest) {
  make_data("d.bin", 48, true);
  ASSERT_EQ(pretrain("self", {"--variant", "self"}).code, kExitOk);
  ASSERT_EQ(pretrain("cross", {"--variant", "cross"}).code, kExitOk);

  const auto ft = run_cli({"finetune", "--checkpoint", path("cross/checkpoint.cmae"), "--out", path("ft"), "--epochs",
                           "2", "--batch-size", "8"});
  ASSERT_EQ(ft.code, kExitOk) << ft.err;
  const std::string acc = slurp(dir_ / "ft" / "accuracy.csv");
  EXPECT_EQ(acc.rfind("mode,train_accuracy,test_accuracy,final_loss\nlinear_probe,", 0), 0u) << acc;

  const auto rec = run_cli({"reconstruct", "--checkpoint", path("cross/checkpoint.cmae"), "--out", path("rec"),
                            "--count", "2"});
  ASSERT_EQ(rec.code, kExitOk) << rec.err;
  EXPECT_TRUE(fs::exists(dir_ / "rec" / "recon_00000.ppm"));
  EXPECT_TRUE(fs::exists(dir_ / "rec" / "recon_00001.ppm"));

  const auto attn = run_cli({"analyze-attn", "--checkpoint", path("self/checkpoint.cmae"), "--out", path("attn"),
                             "--count", "4"});
  ASSERT_EQ(attn.code, kExitOk) << attn.err;
  EXPECT_TRUE(fs::exists(dir_ / "attn" / "attention_stats.csv"));
  EXPECT_EQ(run_cli({"analyze-attn", "--checkpoint", path("cross/checkpoint.cmae"), "--out", path("attn2")}).code,
            kExitUsage);

  const auto dec = run_cli({"decompose", "--checkpoint", path("cross/checkpoint.cmae"), "--out", path("dec")});
  ASSERT_EQ(dec.code, kExitOk) << dec.err;
  EXPECT_TRUE(fs::exists(dir_ / "dec" / "decomposition.csv"));
  EXPECT_TRUE(fs::exists(dir_ / "dec" / "interblock_weights.csv"));
  EXPECT_TRUE(fs::exists(dir_ / "dec" / "interblock_weights.ppm"));
}

TEST_F(CliRuns, FinetuneNeedsLabels) {
  make_data("d.bin", 32, false);
  std::vector<std::string> args = {"finetune", "--data", path("d.bin"), "--out", path("ft"), "--epochs", "1"};
  const auto m = tiny_model();
  args.insert(args.end(), m.begin(), m.end());
  EXPECT_EQ(run_cli(args).code, kExitData);
}

}  // namespace
}  // namespace cmae::cli
