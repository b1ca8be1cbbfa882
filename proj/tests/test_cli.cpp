// Copyright 2026 The dopphase Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//   http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <gtest/gtest.h>

#include <filesystem>
#include <sstream>

#include "dopphase/cli.hpp"

using namespace dopphase;
namespace fs = std::filesystem;

namespace {

struct CliRun {
  int code;
  std::string out;
  std::string err;
};

CliRun run(std::vector<std::string> args) {
  args.insert(args.begin(), "dopphase");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("dopphase_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }
  std::string p(const char* name) const { return (dir_ / name).string(); }
  fs::path dir_;
};

}  // namespace

TEST(Cli, UsageErrors) {
  EXPECT_EQ(run({}).code, kExitUsage);
  const auto unknown = run({"frobnicate"});
  EXPECT_EQ(unknown.code, kExitUsage);
  EXPECT_NE(unknown.err.find("Usage"), std::string::npos);
  const auto missing = run({"predict", "--wav", "x.wav"});
  EXPECT_EQ(missing.code, kExitUsage);
  EXPECT_NE(missing.err.find("--model"), std::string::npos);
  EXPECT_EQ(run({"eval", "--data-root", "d", "--model", "m", "--split", "bogus"}).code, kExitUsage);
  EXPECT_EQ(run({"--help"}).code, kExitOk);
}

TEST(Cli, RuntimeErrors) {
  EXPECT_EQ(run({"predict", "--model", "/nonexistent/m.phzm", "--wav", "/nonexistent/x.wav"}).code, kExitRuntime);
  EXPECT_EQ(run({"split", "--data-root", "/nonexistent/empty"}).code, kExitRuntime);
}

TEST_F(CliTest, FullPipeline) {
  auto r = run({"synth", "--data-root", p("data"), "--n-per-class", "3", "--seed", "5"});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  EXPECT_EQ(load_manifest(dir_ / "data").entries.size(), 9u);

  r = run({"split", "--data-root", p("data"), "--train-fraction", "0.67", "--seed", "1"});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  EXPECT_EQ(r.out, "train 6 test 3\n");

  r = run({"train", "--data-root", p("data"), "--model", p("m.phzm"), "--epochs", "2", "--input-side", "16",
           "--history", p("h.csv")});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  EXPECT_NE(r.out.find("epoch 2 "), std::string::npos);
  EXPECT_TRUE(fs::exists(dir_ / "m.phzm"));
  EXPECT_EQ(parse_history_csv([&] {
              const auto b = read_file(dir_ / "h.csv");
              return std::string(b.begin(), b.end());
            }())
                .epochs.size(),
            2u);
  EXPECT_EQ(load_model(dir_ / "m.phzm").input.side, 16u);

  r = run({"eval", "--data-root", p("data"), "--model", p("m.phzm")});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  EXPECT_EQ(r.out.rfind("accuracy ", 0), 0u);
  EXPECT_NE(r.out.find("macro_f1 "), std::string::npos);

  const auto wav = (dir_ / "data" / load_manifest(dir_ / "data").entries[2].wav_path).string();
  r = run({"predict", "--model", p("m.phzm"), "--wav", wav});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  std::istringstream lines(r.out);
  std::string label;
  std::getline(lines, label);
  EXPECT_TRUE(parse_label(label).has_value()) << label;
  double sum = 0;
  for (auto l : kAllLabels) {
    std::string name;
    double prob;
    lines >> name >> prob;
    EXPECT_EQ(name, label_name(l));
    sum += prob;
  }
  EXPECT_NEAR(sum, 1.0, 1e-5);

  r = run({"spectrogram", "--wav", wav, "--out", p("s.png"), "--input-side", "32"});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  const auto png = read_file(dir_ / "s.png");
  ASSERT_GT(png.size(), 24u);
  EXPECT_EQ(png[19], 32);  // IHDR width, big-endian low byte
  EXPECT_EQ(png[23], 32);

  EXPECT_EQ(run({"spectrogram", "--wav", wav, "--out", p("t.png"), "--frame-len", "500"}).code, kExitRuntime);
}

TEST_F(CliTest, TrainAssignsSplitWhenMissing) {
  ASSERT_EQ(run({"synth", "--data-root", p("data"), "--n-per-class", "2"}).code, kExitOk);
  const auto r = run({"train", "--data-root", p("data"), "--model", p("m.phzm"), "--epochs", "1", "--input-side", "8",
                      "--train-fraction", "0.5"});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  EXPECT_EQ(entries_in_split(load_manifest(dir_ / "data"), Split::train).size(), 3u);
}
