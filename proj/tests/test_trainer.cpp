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

#include <cstring>
#include <filesystem>
#include <sstream>

#include "dopphase/model_io.hpp"
#include "dopphase/synth.hpp"
#include "dopphase/trainer.hpp"
#include "oracles.hpp"

using namespace dopphase;
namespace fs = std::filesystem;

namespace {

ConfusionMatrix make_cm(std::array<std::array<std::uint64_t, 3>, 3> counts) {
  ConfusionMatrix cm;
  cm.counts = counts;
  return cm;
}

// 2x2 input where pixel k is hot; after standardization pixel k is the unique
// maximum, so a dense layer with W[i][j] = (i == j) predicts class k.
Spectrogram hot_pixel(int k) {
  Spectrogram s;
  s.values = Matrix<double>(2, 2, -80.0);
  s.values.data[static_cast<std::size_t>(k)] = -10.0;
  return s;
}

nn::Model hot_pixel_model() {
  InputConfig in;
  in.side = 2;
  auto m = nn::make_model({{nn::LayerKind::flatten}, {nn::LayerKind::dense, 3}}, in, 0);
  auto& w = m.params[0].data;
  std::fill(w.begin(), w.end(), 0.0f);
  for (std::size_t i = 0; i < 3; ++i) w[i * 3 + i] = 1.0f;
  return m;
}

class TrainerData : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    root_ = fs::temp_directory_path() / "dopphase_trainer_test";
    fs::remove_all(root_);
    CorpusConfig cc;
    cc.n_per_class = 4;
    cc.master_seed = 3;
    manifest_ = assign_split(generate_corpus(root_, cc), 0.75, 1);
  }
  static void TearDownTestSuite() { fs::remove_all(root_); }

  static TrainConfig small_config() {
    TrainConfig cfg;
    cfg.epochs = 4;
    cfg.batch_size = 4;
    cfg.seed = 5;
    cfg.input.side = 16;
    return cfg;
  }

  static inline fs::path root_;
  static inline DatasetManifest manifest_;
};

}  // namespace

// --- metrics -----------------------------------------------------------------------

TEST(Metrics, Accuracy) {
  EXPECT_DOUBLE_EQ(accuracy_from_confusion(make_cm({{{10, 0, 0}, {0, 10, 0}, {0, 0, 10}}})), 1.0);
  EXPECT_DOUBLE_EQ(accuracy_from_confusion(make_cm({{{0, 5, 0}, {3, 0, 0}, {1, 1, 0}}})), 0.0);
  EXPECT_DOUBLE_EQ(accuracy_from_confusion(make_cm({{{17, 1, 0}, {0, 17, 1}, {0, 0, 17}}})), 51.0 / 53.0);
  EXPECT_THROW(accuracy_from_confusion(ConfusionMatrix{}), EmptyError);
  EXPECT_THROW(f1_from_confusion(ConfusionMatrix{}), EmptyError);
}

TEST(Metrics, F1Examples) {
  const auto diag = f1_from_confusion(make_cm({{{4, 0, 0}, {0, 5, 0}, {0, 0, 6}}}));
  for (double f : diag.f1) EXPECT_DOUBLE_EQ(f, 1.0);
  EXPECT_DOUBLE_EQ(diag.macro_f1, 1.0);

  // class 0: TP 8, FP 1 (from class 1), FN 1 (to class 2)
  const auto m = f1_from_confusion(make_cm({{{8, 0, 1}, {1, 5, 0}, {0, 0, 5}}}));
  EXPECT_NEAR(m.f1[0], 8.0 / 9.0, 1e-15);

  const auto degenerate = f1_from_confusion(make_cm({{{3, 1, 0}, {2, 4, 0}, {0, 0, 0}}}));
  EXPECT_EQ(degenerate.f1[2], 0.0);
  EXPECT_TRUE(std::isfinite(degenerate.macro_f1));
  EXPECT_NEAR(degenerate.macro_f1, (degenerate.f1[0] + degenerate.f1[1]) / 3.0, 1e-15);
}

TEST(Metrics, MatchBruteForceOracle) {
  Rng rng(17);
  for (int trial = 0; trial < 1000; ++trial) {
    std::array<std::array<std::uint64_t, 3>, 3> counts{};
    for (auto& row : counts)
      for (auto& v : row) v = rng.below(4) == 0 ? 0 : rng.below(50);
    counts[rng.below(3)][rng.below(3)] += 1;
    const auto cm = make_cm(counts);
    const auto got = f1_from_confusion(cm);
    const auto ref = oracle::brute_metrics(counts);
    EXPECT_EQ(got.accuracy, static_cast<double>(cm.trace()) / static_cast<double>(cm.total()));
    EXPECT_EQ(got.micro_f1, got.accuracy);
    EXPECT_NEAR(got.micro_f1, ref.micro_f1, 1e-12);
    EXPECT_NEAR(got.macro_f1, ref.macro_f1, 1e-12);
    for (std::size_t c = 0; c < 3; ++c) EXPECT_NEAR(got.f1[c], ref.f1[c], 1e-12);
  }
}

// --- evaluate --------------------------------------------------------------------------------

TEST(Evaluate, PerfectConstantAndMixedPredictors) {
  const auto model = hot_pixel_model();
  std::vector<LabeledInput> perfect;
  for (int i = 0; i < 60; ++i) perfect.emplace_back(hot_pixel(i % 3), label_from_index(i % 3));
  const auto ev = evaluate(model, perfect);
  EXPECT_EQ(ev.confusion, make_cm({{{20, 0, 0}, {0, 20, 0}, {0, 0, 20}}}));
  EXPECT_DOUBLE_EQ(ev.metrics.accuracy, 1.0);
  EXPECT_DOUBLE_EQ(ev.metrics.macro_f1, 1.0);

  auto constant = model;
  std::fill(constant.params[0].data.begin(), constant.params[0].data.end(), 0.0f);
  constant.params[1].data = {1.0f, 0.0f, 0.0f};
  EXPECT_DOUBLE_EQ(evaluate(constant, perfect).metrics.accuracy, 1.0 / 3.0);

  const std::vector<LabeledInput> mixed{{hot_pixel(0), PhasicityLabel::Monophasic},
                                        {hot_pixel(1), PhasicityLabel::Biphasic},
                                        {hot_pixel(2), PhasicityLabel::Biphasic},
                                        {hot_pixel(2), PhasicityLabel::Triphasic}};
  EXPECT_DOUBLE_EQ(evaluate(model, mixed).metrics.accuracy, 0.75);
  EXPECT_THROW(evaluate(model, std::vector<LabeledInput>{}), EmptyError);
}

// --- history ------------------------------------------------------------------------------------

TEST(History, CsvShapeAndRoundTrip) {
  TrainingHistory h;
  for (int i = 0; i < 10; ++i) h.epochs.push_back({1.0 / (i + 1), 0.1 * i, 0.7 + 1e-7 * i, 0.33333333});
  const auto csv = history_to_csv(h);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 11);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "epoch,train_loss,train_acc,test_loss,test_acc");
  const auto back = parse_history_csv(csv);
  ASSERT_EQ(back.epochs.size(), 10u);
  for (std::size_t i = 0; i < 10; ++i) {
    EXPECT_NEAR(back.epochs[i].train_loss, h.epochs[i].train_loss, 1e-6);
    EXPECT_NEAR(back.epochs[i].train_accuracy, h.epochs[i].train_accuracy, 1e-6);
    EXPECT_NEAR(back.epochs[i].test_loss, h.epochs[i].test_loss, 1e-6);
    EXPECT_NEAR(back.epochs[i].test_accuracy, h.epochs[i].test_accuracy, 1e-6);
  }
  EXPECT_THROW(history_to_csv(TrainingHistory{}), EmptyError);
  EXPECT_THROW(parse_history_csv("nope\n"), FormatError);
}

TEST(History, ExportWritesFile) {
  const auto path = fs::temp_directory_path() / "dopphase_history_test.csv";
  TrainingHistory h;
  h.epochs.push_back({0.5, 0.5, 0.4, 0.6});
  export_history(h, path);
  const auto bytes = read_file(path);
  EXPECT_EQ(std::string(bytes.begin(), bytes.end()), history_to_csv(h));
  fs::remove(path);
  EXPECT_THROW(export_history(h, fs::path("/proc/definitely/not/here.csv")), IoError);
}

TEST(History, SmoothedLoss) {
  TrainingHistory h;
  for (double l : {3.0, 2.0, 1.0, 1.5, 0.5}) h.epochs.push_back({l, 0, 0, 0});
  const auto s = smoothed_train_loss(h);
  ASSERT_EQ(s.size(), 3u);
  EXPECT_DOUBLE_EQ(s[0], 2.0);
  EXPECT_DOUBLE_EQ(s[1], 1.5);
  EXPECT_DOUBLE_EQ(s[2], 1.0);
}

// --- model files ------------------------------------------------------------------------------------

TEST(ModelFile, RoundTripIsBitwise) {
  auto m = nn::make_model(nn::default_layers(), InputConfig{}, 21);
  Rng rng(1);
  for (auto& p : m.params)
    for (auto& v : p.data) v = static_cast<float>(rng.normal());
  m.params[1].data[0] = -0.0f;
  m.params[1].data[1] = 1e-40f;  // subnormal
  m.input.stft.hop = 64;
  const auto bytes = serialize_model(m);
  EXPECT_EQ(std::memcmp(bytes.data(), "PHZM", 4), 0);
  const auto back = deserialize_model(bytes);
  EXPECT_EQ(back, m);
  for (std::size_t i = 0; i < m.params.size(); ++i)
    EXPECT_EQ(std::memcmp(back.params[i].data.data(), m.params[i].data.data(), 4 * m.params[i].size()), 0);
  EXPECT_EQ(serialize_model(back), bytes);

  const auto path = fs::temp_directory_path() / "dopphase_model_test.phzm";
  save_model(m, path);
  EXPECT_EQ(load_model(path), m);
  fs::remove(path);
}

TEST(ModelFile, ErrorKinds) {
  const auto bytes = serialize_model(nn::make_model(nn::default_layers(), InputConfig{}, 2));
  auto bad_magic = bytes;
  bad_magic[0] = 'X';
  EXPECT_THROW(deserialize_model(bad_magic), FormatError);
  auto bad_version = bytes;
  bad_version[4] = 2;
  EXPECT_THROW(deserialize_model(bad_version), VersionError);
  for (std::size_t cut : {std::size_t{2}, std::size_t{10}, std::size_t{40}, bytes.size() / 2, bytes.size() - 1})
    EXPECT_THROW(deserialize_model(std::span(bytes).first(cut)), CorruptError) << cut;
  auto flipped = bytes;
  flipped[bytes.size() / 2] ^= 0x40;
  EXPECT_THROW(deserialize_model(flipped), CorruptError);
  EXPECT_THROW(load_model(fs::temp_directory_path() / "dopphase_missing.phzm"), IoError);
}

TEST(ModelFile, DescriptorRoundTrip) {
  InputConfig in;
  in.side = 32;
  in.stft = {256, 64, WindowKind::rectangular};
  const auto m = nn::make_model(nn::default_layers(), in, 3);
  const auto d = parse_model_descriptor(model_descriptor(m));
  EXPECT_EQ(d.input, in);
  EXPECT_EQ(d.layers, m.layers);
  EXPECT_EQ(model_fingerprint(m).size(), 8u);
}

// --- training ---------------------------------------------------------------------------------------

TEST_F(TrainerData, DeterministicWithHistoryPerEpoch) {
  const auto cfg = small_config();
  const auto init = nn::make_model(nn::default_layers(), cfg.input, 1);
  const auto a = train(init, manifest_, root_, cfg);
  const auto b = train(init, manifest_, root_, cfg);
  EXPECT_EQ(a.model, b.model);
  EXPECT_EQ(serialize_model(a.model), serialize_model(b.model));
  EXPECT_NE(a.model, init);
  ASSERT_EQ(a.history.epochs.size(), 4u);
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_EQ(a.history.epochs[i].train_loss, b.history.epochs[i].train_loss);
    EXPECT_TRUE(std::isfinite(a.history.epochs[i].test_loss));
  }
  auto other = cfg;
  other.seed = 6;
  EXPECT_NE(train(init, manifest_, root_, other).model, a.model);
}

TEST_F(TrainerData, AugmentedRunIsDeterministic) {
  auto cfg = small_config();
  cfg.epochs = 2;
  cfg.augment = AugmentConfig{0.2, ZoomMode::in_out, 9};
  const auto init = nn::make_model(nn::default_layers(), cfg.input, 1);
  EXPECT_EQ(train(init, manifest_, root_, cfg).model, train(init, manifest_, root_, cfg).model);
}

TEST_F(TrainerData, EvaluateIsPureAndRepeatable) {
  const auto cfg = small_config();
  const auto model = nn::make_model(nn::default_layers(), cfg.input, 1);
  const auto copy = model;
  const auto a = evaluate(model, manifest_, root_, Split::test);
  const auto b = evaluate(model, manifest_, root_, Split::test);
  EXPECT_EQ(model, copy);
  EXPECT_EQ(a.confusion, b.confusion);
  EXPECT_EQ(a.metrics, b.metrics);
  EXPECT_EQ(a.confusion.total(), 3u);
  EXPECT_THROW(evaluate(model, manifest_, root_, Split::unassigned), EmptyError);
}

TEST_F(TrainerData, MissingClassIsDataError) {
  auto m = manifest_;
  for (auto& e : m.entries)
    if (e.label == PhasicityLabel::Biphasic) e.split = Split::test;
  const auto cfg = small_config();
  EXPECT_THROW(train(nn::make_model(nn::default_layers(), cfg.input, 1), m, root_, cfg), DataError);
}

TEST(TrainConfigTest, Validation) {
  TrainConfig cfg;
  cfg.epochs = 0;
  EXPECT_THROW(cfg.validate(), RangeError);
  cfg = {};
  cfg.batch_size = 0;
  EXPECT_THROW(cfg.validate(), RangeError);
  cfg = {};
  cfg.lr = 0;
  EXPECT_THROW(cfg.validate(), RangeError);
  cfg = {};
  cfg.augment = AugmentConfig{0.9, ZoomMode::in_out, 0};
  EXPECT_THROW(cfg.validate(), RangeError);
}
