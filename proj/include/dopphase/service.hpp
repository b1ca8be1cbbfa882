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

#pragma once

#include <array>
#include <cctype>
#include <cstdint>
#include <filesystem>
#include <list>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <thread>
#include <unordered_map>
#include <utility>
#include <vector>

#include "httplib.h"
#include "json.hpp"

#include "dopphase/dataset.hpp"
#include "dopphase/dsp.hpp"
#include "dopphase/errors.hpp"
#include "dopphase/labels.hpp"
#include "dopphase/model_io.hpp"
#include "dopphase/nn.hpp"
#include "dopphase/png.hpp"
#include "dopphase/wav.hpp"

namespace dopphase {

inline constexpr std::size_t kMaxRequestBytes = 10u * 1024u * 1024u;
inline constexpr std::size_t kSpectrogramCacheSize = 1024;

struct Reply {
  int status = 200;
  std::string content_type = "application/json";
  std::string body;
};

struct PredictionResponse {
  PhasicityLabel label = PhasicityLabel::Monophasic;
  std::array<double, kNumClasses> probabilities{};
  std::string model_version;
  std::optional<std::string> spectrogram_id;

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    j["label"] = label_name(label);
    j["probabilities"] = probabilities;
    j["model_version"] = model_version;
    j["spectrogram_id"] = spectrogram_id ? nlohmann::ordered_json(*spectrogram_id) : nlohmann::ordered_json(nullptr);
    return j;
  }
};

/// Bounded LRU cache of rendered spectrogram PNGs keyed by opaque id.
class SpectrogramCache {
 public:
  explicit SpectrogramCache(std::size_t capacity = kSpectrogramCacheSize) : capacity_(capacity) {}

  void put(const std::string& id, std::vector<std::uint8_t> png) {
    std::lock_guard lock(mu_);
    if (auto it = index_.find(id); it != index_.end()) {
      order_.erase(it->second);
      index_.erase(it);
    }
    order_.emplace_front(id, std::make_shared<const std::vector<std::uint8_t>>(std::move(png)));
    index_[id] = order_.begin();
    while (order_.size() > capacity_) {
      index_.erase(order_.back().first);
      order_.pop_back();
    }
  }

  std::shared_ptr<const std::vector<std::uint8_t>> get(const std::string& id) {
    std::lock_guard lock(mu_);
    auto it = index_.find(id);
    if (it == index_.end()) return nullptr;
    order_.splice(order_.begin(), order_, it->second);
    return it->second->second;
  }

  std::size_t size() const {
    std::lock_guard lock(mu_);
    return order_.size();
  }

 private:
  using Item = std::pair<std::string, std::shared_ptr<const std::vector<std::uint8_t>>>;
  std::size_t capacity_;
  mutable std::mutex mu_;
  std::list<Item> order_;
  std::unordered_map<std::string, std::list<Item>::iterator> index_;
};

/// HTTP-independent request handling for the inference and intake API.
/// The model is an immutable snapshot swapped atomically on reload.
class PhasicityService {
 public:
  struct Snapshot {
    nn::Model model;
    std::string version;
  };

  explicit PhasicityService(std::filesystem::path data_root)
      : store_(std::move(data_root)), token_rng_(std::random_device{}()) {}

  void set_model(nn::Model model) {
    auto snap = std::make_shared<Snapshot>();
    snap->version = model_fingerprint(model);
    snap->model = std::move(model);
    std::lock_guard lock(model_mu_);
    model_ = std::move(snap);
  }

  void load_model(const std::filesystem::path& path) { set_model(dopphase::load_model(path)); }

  std::shared_ptr<const Snapshot> snapshot() const {
    std::lock_guard lock(model_mu_);
    return model_;
  }

  DatasetStore& store() { return store_; }
  SpectrogramCache& spectrograms() { return cache_; }

  Reply health() const { return json_reply(200, {{"status", "ok"}}); }

  Reply model_info() const {
    const auto snap = snapshot();
    if (!snap) return error_reply(503, "no model loaded");
    nlohmann::ordered_json j;
    j["version"] = snap->version;
    j["input_side"] = snap->model.input.side;
    j["classes"] = nlohmann::json::array();
    for (auto l : kAllLabels) j["classes"].push_back(label_name(l));
    return json_reply(200, j);
  }

  Reply predict(std::string_view content_type, const std::string& body) {
    if (body.size() > kMaxRequestBytes) return error_reply(413, "request body exceeds 10 MiB");
    if (!is_wav_type(content_type)) return error_reply(415, "expected an audio/wav body");
    const auto snap = snapshot();
    if (!snap) return error_reply(503, "no model loaded");

    AudioClip clip;
    Spectrogram spec;
    try {
      clip = decode_wav(body);
      spec = clip_to_input(clip, snap->model.input);
    } catch (const Error& e) {
      return error_reply(400, std::string("invalid WAV: ") + e.what());
    }
    const auto result = nn::forward(snap->model, spec);

    PredictionResponse resp;
    resp.label = label_from_index(nn::argmax(result.probs));
    for (std::size_t i = 0; i < kNumClasses; ++i) resp.probabilities[i] = result.probs[i];
    resp.model_version = snap->version;
    resp.spectrogram_id = new_token();
    cache_.put(*resp.spectrogram_id, spectrogram_to_png(spec));
    return json_reply(200, resp.to_json());
  }

  Reply submit_recording(const std::string& wav_bytes, const std::string& label_text,
                         std::optional<std::string> artery) {
    if (wav_bytes.size() > kMaxRequestBytes) return error_reply(413, "request body exceeds 10 MiB");
    const auto label = parse_label(label_text);
    if (!label) return error_reply(422, "label must be Monophasic, Biphasic or Triphasic");
    AudioClip clip;
    std::optional<Spectrogram> spec;
    try {
      clip = decode_wav(wav_bytes);
    } catch (const Error& e) {
      return error_reply(400, std::string("invalid WAV: ") + e.what());
    }
    try {
      const auto snap = snapshot();
      spec = clip_to_input(clip, snap ? snap->model.input : InputConfig{});
    } catch (const Error&) {
      // too short to render; the recording is still stored
    }
    if (artery && artery->empty()) artery.reset();
    const auto entry = store_.add_entry(clip, *label, std::move(artery), Source::ui_upload);
    if (spec) cache_.put(entry.id, spectrogram_to_png(*spec));
    return json_reply(201, {{"id", entry.id}});
  }

  Reply get_spectrogram(const std::string& id) {
    const auto png = cache_.get(id);
    if (!png) return error_reply(404, "unknown spectrogram id");
    return {200, "image/png", std::string(png->begin(), png->end())};
  }

  Reply reload_model(const std::string& body) {
    std::string path;
    try {
      path = nlohmann::json::parse(body).at("path").get<std::string>();
    } catch (const nlohmann::json::exception&) {
      return error_reply(400, "expected {\"path\": \"...\"}");
    }
    try {
      load_model(path);
    } catch (const Error& e) {
      return error_reply(422, std::string("cannot load model: ") + e.what());
    }
    return json_reply(200, {{"version", snapshot()->version}});
  }

  static bool is_wav_type(std::string_view content_type) {
    const auto semi = content_type.find(';');
    std::string base(content_type.substr(0, semi));
    while (!base.empty() && base.back() == ' ') base.pop_back();
    for (auto& ch : base) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
    return base == "audio/wav" || base == "audio/x-wav" || base == "audio/wave" || base == "audio/vnd.wave";
  }

 private:
  static Reply json_reply(int status, const nlohmann::ordered_json& j) { return {status, "application/json", j.dump()}; }
  static Reply error_reply(int status, const std::string& message) {
    return json_reply(status, {{"error", message}});
  }

  std::string new_token() {
    static constexpr char kHex[] = "0123456789abcdef";
    std::lock_guard lock(token_mu_);
    std::string id;
    for (int word = 0; word < 2; ++word) {
      std::uint64_t bits = token_rng_.next_u64();
      for (int i = 0; i < 16; ++i, bits >>= 4) id.push_back(kHex[bits & 0xF]);
    }
    return id;
  }

  DatasetStore store_;
  SpectrogramCache cache_;
  mutable std::mutex model_mu_;
  std::shared_ptr<const Snapshot> model_;
  std::mutex token_mu_;
  Rng token_rng_;
};

/// Registers the /api/v1 routes of a service on an httplib server.
inline void bind_routes(httplib::Server& server, PhasicityService& service) {
  auto send = [](httplib::Response& res, const Reply& r) {
    res.status = r.status;
    res.set_content(r.body, r.content_type);
  };
  server.set_payload_max_length(kMaxRequestBytes);

  server.Get("/api/v1/health", [&, send](const httplib::Request&, httplib::Response& res) {
    send(res, service.health());
  });
  server.Get("/api/v1/model", [&, send](const httplib::Request&, httplib::Response& res) {
    send(res, service.model_info());
  });
  server.Post("/api/v1/predict", [&, send](const httplib::Request& req, httplib::Response& res) {
    send(res, service.predict(req.get_header_value("Content-Type"), req.body));
  });
  server.Post("/api/v1/recordings", [&, send](const httplib::Request& req, httplib::Response& res) {
    if (!req.is_multipart_form_data()) {
      send(res, {415, "application/json", R"({"error":"expected multipart/form-data"})"});
      return;
    }
    if (!req.has_file("file")) {
      send(res, {400, "application/json", R"({"error":"missing file part"})"});
      return;
    }
    const std::string label = req.has_file("label") ? req.get_file_value("label").content : "";
    std::optional<std::string> artery;
    if (req.has_file("artery")) artery = req.get_file_value("artery").content;
    send(res, service.submit_recording(req.get_file_value("file").content, label, std::move(artery)));
  });
  server.Get(R"(/api/v1/spectrogram/([0-9A-Za-z_\-]+))",
             [&, send](const httplib::Request& req, httplib::Response& res) {
               send(res, service.get_spectrogram(req.matches[1]));
             });
  server.Post("/api/v1/admin/reload-model", [&, send](const httplib::Request& req, httplib::Response& res) {
    send(res, service.reload_model(req.body));
  });
}

/// Owns an httplib server running on a background thread.
class ServiceHost {
 public:
  explicit ServiceHost(PhasicityService& service) { bind_routes(server_, service); }
  ~ServiceHost() { stop(); }

  ServiceHost(const ServiceHost&) = delete;
  ServiceHost& operator=(const ServiceHost&) = delete;

  httplib::Server& server() { return server_; }

  /// Starts listening; port 0 picks a free port. Returns the bound port.
  int start(const std::string& host = "127.0.0.1", int port = 0) {
    port_ = port == 0 ? server_.bind_to_any_port(host) : (server_.bind_to_port(host, port) ? port : -1);
    if (port_ < 0) throw IoError("cannot bind " + host + ":" + std::to_string(port));
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
    return port_;
  }

  void stop() {
    if (thread_.joinable()) {
      server_.stop();
      thread_.join();
    }
  }

  int port() const { return port_; }

 private:
  httplib::Server server_;
  std::thread thread_;
  int port_ = -1;
};

}  // namespace dopphase
