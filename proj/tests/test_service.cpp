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
#include <future>

#include "dopphase/service.hpp"
#include "dopphase/synth.hpp"

using namespace dopphase;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string wav_body(PhasicityLabel label, std::uint64_t seed) {
  SynthParams p;
  p.seed = seed;
  p.noise_level = 0.05;
  const auto bytes = encode_wav(synthesize_clip(label, p));
  return std::string(bytes.begin(), bytes.end());
}

class ServiceTest : public ::testing::Test {
 protected:
  void SetUp() override {
    root_ = fs::temp_directory_path() /
            ("dopphase_svc_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(root_);
    service_ = std::make_unique<PhasicityService>(root_);
    host_ = std::make_unique<ServiceHost>(*service_);
    const int port = host_->start();
    client_ = std::make_unique<httplib::Client>("127.0.0.1", port);
  }
  void TearDown() override {
    host_->stop();
    fs::remove_all(root_);
  }

  void load_small_model(std::uint64_t seed = 1) {
    InputConfig in;
    in.side = 16;
    service_->set_model(nn::make_model(nn::default_layers(), in, seed));
  }

  httplib::Result post_wav(const std::string& body, const char* type = "audio/wav") {
    return client_->Post("/api/v1/predict", body, type);
  }

  fs::path root_;
  std::unique_ptr<PhasicityService> service_;
  std::unique_ptr<ServiceHost> host_;
  std::unique_ptr<httplib::Client> client_;
};

}  // namespace

TEST_F(ServiceTest, Health) {
  auto r = client_->Get("/api/v1/health");
  ASSERT_TRUE(r);
  EXPECT_EQ(r->status, 200);
  EXPECT_EQ(json::parse(r->body)["status"], "ok");
}

TEST_F(ServiceTest, ModelInfo) {
  auto r = client_->Get("/api/v1/model");
  ASSERT_TRUE(r);
  EXPECT_EQ(r->status, 503);
  load_small_model();
  r = client_->Get("/api/v1/model");
  EXPECT_EQ(r->status, 200);
  const auto j = json::parse(r->body);
  EXPECT_EQ(j["input_side"], 16);
  EXPECT_EQ(j["classes"], json::array({"Monophasic", "Biphasic", "Triphasic"}));
  EXPECT_EQ(j["version"].get<std::string>().size(), 8u);
}

TEST_F(ServiceTest, PredictWithoutModelIs503) {
  auto r = post_wav(wav_body(PhasicityLabel::Biphasic, 1));
  ASSERT_TRUE(r);
  EXPECT_EQ(r->status, 503);
}

TEST_F(ServiceTest, PredictReturnsNormalizedProbabilities) {
  load_small_model();
  auto r = post_wav(wav_body(PhasicityLabel::Triphasic, 2), "audio/x-wav");
  ASSERT_TRUE(r);
  ASSERT_EQ(r->status, 200) << r->body;
  const auto j = json::parse(r->body);
  const auto probs = j["probabilities"].get<std::vector<double>>();
  ASSERT_EQ(probs.size(), 3u);
  double sum = 0;
  std::size_t best = 0;
  for (std::size_t i = 0; i < 3; ++i) {
    sum += probs[i];
    if (probs[i] > probs[best]) best = i;
  }
  EXPECT_NEAR(sum, 1.0, 1e-6);
  EXPECT_EQ(j["label"], label_name(label_from_index(static_cast<int>(best))));
  EXPECT_EQ(j["model_version"], service_->snapshot()->version);

  const auto id = j["spectrogram_id"].get<std::string>();
  auto png = client_->Get("/api/v1/spectrogram/" + id);
  ASSERT_TRUE(png);
  EXPECT_EQ(png->status, 200);
  EXPECT_EQ(png->get_header_value("Content-Type"), "image/png");
  EXPECT_EQ(png->body.substr(1, 3), "PNG");
}

TEST_F(ServiceTest, PredictRejectsBadPayloads) {
  load_small_model();
  auto r = client_->Post("/api/v1/predict", "hello", "text/plain");
  ASSERT_TRUE(r);
  EXPECT_EQ(r->status, 415);
  r = post_wav("RIFF....garbage");
  EXPECT_EQ(r->status, 400);
  const auto tiny = encode_wav(AudioClip{std::vector<double>(100, 0.5), 16000});  // shorter than one frame
  r = post_wav(std::string(tiny.begin(), tiny.end()));
  EXPECT_EQ(r->status, 400);
  r = post_wav(std::string(kMaxRequestBytes + 1, 'x'));
  ASSERT_TRUE(r);
  EXPECT_EQ(r->status, 413);
}

TEST_F(ServiceTest, ConcurrentPredictsMatchSerial) {
  load_small_model(4);
  const auto body = wav_body(PhasicityLabel::Monophasic, 5);
  const auto serial = json::parse(post_wav(body)->body)["probabilities"];
  const int port = host_->port();
  std::vector<std::future<json>> futures;
  for (int i = 0; i < 6; ++i)
    futures.push_back(std::async(std::launch::async, [&, port] {
      httplib::Client c("127.0.0.1", port);
      auto r = c.Post("/api/v1/predict", body, "audio/wav");
      return r && r->status == 200 ? json::parse(r->body)["probabilities"] : json();
    }));
  for (auto& f : futures) EXPECT_EQ(f.get(), serial);
}

TEST_F(ServiceTest, SubmitRecordingGrowsManifest) {
  const auto body = wav_body(PhasicityLabel::Biphasic, 6);
  httplib::MultipartFormDataItems items = {
      {"file", body, "clip.wav", "audio/wav"}, {"label", "Biphasic", "", ""}, {"artery", "popliteal", "", ""}};
  auto r = client_->Post("/api/v1/recordings", items);
  ASSERT_TRUE(r);
  ASSERT_EQ(r->status, 201) << r->body;
  const auto id1 = json::parse(r->body)["id"].get<std::string>();
  r = client_->Post("/api/v1/recordings", items);
  ASSERT_EQ(r->status, 201);
  const auto id2 = json::parse(r->body)["id"].get<std::string>();
  EXPECT_NE(id1, id2);

  const auto m = load_manifest(root_);
  ASSERT_EQ(m.entries.size(), 2u);
  EXPECT_EQ(m.entries[0].id, id1);
  EXPECT_EQ(m.entries[0].label, PhasicityLabel::Biphasic);
  EXPECT_EQ(m.entries[0].source, Source::ui_upload);
  EXPECT_EQ(m.entries[0].artery, std::optional<std::string>("popliteal"));
  EXPECT_EQ(m.entries[0].split, Split::unassigned);

  auto png = client_->Get("/api/v1/spectrogram/" + id1);
  EXPECT_EQ(png->status, 200);
}

TEST_F(ServiceTest, SubmitRecordingErrors) {
  const auto body = wav_body(PhasicityLabel::Biphasic, 7);
  auto r = client_->Post("/api/v1/recordings",
                         httplib::MultipartFormDataItems{{"file", body, "a.wav", "audio/wav"}, {"label", "Quadphasic", "", ""}});
  ASSERT_TRUE(r);
  EXPECT_EQ(r->status, 422);
  r = client_->Post("/api/v1/recordings", httplib::MultipartFormDataItems{{"file", "not a wav", "a.wav", "audio/wav"},
                                                                           {"label", "Triphasic", "", ""}});
  EXPECT_EQ(r->status, 400);
  r = client_->Post("/api/v1/recordings", httplib::MultipartFormDataItems{{"label", "Triphasic", "", ""}});
  EXPECT_EQ(r->status, 400);
  r = client_->Post("/api/v1/recordings", body, "audio/wav");
  EXPECT_EQ(r->status, 415);
  EXPECT_TRUE(load_manifest(root_).entries.empty());
}

TEST_F(ServiceTest, UnknownSpectrogramIs404) {
  auto r = client_->Get("/api/v1/spectrogram/0123456789abcdef0123456789abcdef");
  ASSERT_TRUE(r);
  EXPECT_EQ(r->status, 404);
}

TEST_F(ServiceTest, BlankClipRendersUniformPng) {
  load_small_model();
  const auto bytes = encode_wav(AudioClip{std::vector<double>(64000, 0.0), 16000});
  auto r = post_wav(std::string(bytes.begin(), bytes.end()));
  ASSERT_EQ(r->status, 200);
  const auto id = json::parse(r->body)["spectrogram_id"].get<std::string>();
  Spectrogram blank;
  blank.values = Matrix<double>(16, 16, kDefaultFloorDb);
  const auto expected = spectrogram_to_png(blank);
  EXPECT_EQ(client_->Get("/api/v1/spectrogram/" + id)->body, std::string(expected.begin(), expected.end()));
}

TEST_F(ServiceTest, ReloadModel) {
  const auto path = root_ / "m.phzm";
  fs::create_directories(root_);
  InputConfig in;
  in.side = 16;
  const auto model = nn::make_model(nn::default_layers(), in, 11);
  save_model(model, path);
  auto r = client_->Post("/api/v1/admin/reload-model", json{{"path", path.string()}}.dump(), "application/json");
  ASSERT_TRUE(r);
  EXPECT_EQ(r->status, 200);
  EXPECT_EQ(json::parse(r->body)["version"], model_fingerprint(model));
  EXPECT_EQ(service_->snapshot()->model, model);

  r = client_->Post("/api/v1/admin/reload-model", "{}", "application/json");
  EXPECT_EQ(r->status, 400);
  r = client_->Post("/api/v1/admin/reload-model", json{{"path", (root_ / "nope").string()}}.dump(), "application/json");
  EXPECT_EQ(r->status, 422);
  EXPECT_EQ(service_->snapshot()->model, model);
}

TEST(SpectrogramCacheTest, EvictsLeastRecentlyUsed) {
  SpectrogramCache cache(2);
  cache.put("a", {1});
  cache.put("b", {2});
  ASSERT_TRUE(cache.get("a"));
  cache.put("c", {3});
  EXPECT_TRUE(cache.get("a"));
  EXPECT_FALSE(cache.get("b"));
  EXPECT_TRUE(cache.get("c"));
  EXPECT_EQ(cache.size(), 2u);
}

TEST(ContentType, WavVariants) {
  EXPECT_TRUE(PhasicityService::is_wav_type("audio/wav"));
  EXPECT_TRUE(PhasicityService::is_wav_type("Audio/WAV; charset=binary"));
  EXPECT_TRUE(PhasicityService::is_wav_type("audio/x-wav"));
  EXPECT_FALSE(PhasicityService::is_wav_type("text/plain"));
  EXPECT_FALSE(PhasicityService::is_wav_type(""));
}
