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

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <mutex>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "json.hpp"

#include "dopphase/dsp.hpp"
#include "dopphase/errors.hpp"
#include "dopphase/io.hpp"
#include "dopphase/labels.hpp"
#include "dopphase/rng.hpp"
#include "dopphase/wav.hpp"

namespace dopphase {

enum class Split { train, test, unassigned };
enum class Source { clinical, synthetic, ui_upload };

inline constexpr int kManifestVersion = 1;
inline constexpr std::string_view kManifestFile = "manifest.json";
inline constexpr std::string_view kWavDir = "wav";

inline std::string_view split_name(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::test: return "test";
    case Split::unassigned: return "unassigned";
  }
  return "unassigned";
}

inline std::string_view source_name(Source s) {
  switch (s) {
    case Source::clinical: return "clinical";
    case Source::synthetic: return "synthetic";
    case Source::ui_upload: return "ui_upload";
  }
  return "clinical";
}

inline Split parse_split(std::string_view name) {
  for (auto s : {Split::train, Split::test, Split::unassigned})
    if (split_name(s) == name) return s;
  throw FormatError("unknown split '" + std::string(name) + "'");
}

inline Source parse_source(std::string_view name) {
  for (auto s : {Source::clinical, Source::synthetic, Source::ui_upload})
    if (source_name(s) == name) return s;
  throw FormatError("unknown source '" + std::string(name) + "'");
}

struct DatasetEntry {
  std::string id;
  std::string wav_path;  // relative to the dataset root
  PhasicityLabel label = PhasicityLabel::Monophasic;
  std::optional<std::string> artery;
  Split split = Split::unassigned;
  Source source = Source::clinical;

  bool operator==(const DatasetEntry&) const = default;
};

struct DatasetManifest {
  int version = kManifestVersion;
  std::vector<DatasetEntry> entries;

  bool operator==(const DatasetManifest&) const = default;
};

// ---------------------------------------------------------------------------
// Manifest text format: a JSON object with one entry record per line.

inline nlohmann::ordered_json entry_to_json(const DatasetEntry& e) {
  nlohmann::ordered_json j;
  j["id"] = e.id;
  j["wav_path"] = e.wav_path;
  j["label"] = label_name(e.label);
  j["artery"] = e.artery ? nlohmann::ordered_json(*e.artery) : nlohmann::ordered_json(nullptr);
  j["split"] = split_name(e.split);
  j["source"] = source_name(e.source);
  return j;
}

inline std::string manifest_to_text(const DatasetManifest& m) {
  std::ostringstream os;
  os << "{\"version\": " << m.version << ",\n \"entries\": [";
  for (std::size_t i = 0; i < m.entries.size(); ++i) {
    os << (i ? ",\n  " : "\n  ") << entry_to_json(m.entries[i]).dump();
  }
  os << (m.entries.empty() ? "]}\n" : "\n ]}\n");
  return os.str();
}

inline DatasetManifest manifest_from_text(std::string_view text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& ex) {
    throw FormatError(std::string("manifest is not valid JSON: ") + ex.what());
  }
  try {
    DatasetManifest m;
    m.version = j.at("version").get<int>();
    if (m.version != kManifestVersion)
      throw VersionError("manifest version " + std::to_string(m.version) + " not supported");
    for (const auto& je : j.at("entries")) {
      DatasetEntry e;
      e.id = je.at("id").get<std::string>();
      e.wav_path = je.at("wav_path").get<std::string>();
      const auto label = parse_label(je.at("label").get<std::string>());
      if (!label) throw FormatError("bad label in entry " + e.id);
      e.label = *label;
      if (je.contains("artery") && !je.at("artery").is_null())
        e.artery = je.at("artery").get<std::string>();
      e.split = parse_split(je.at("split").get<std::string>());
      e.source = parse_source(je.at("source").get<std::string>());
      m.entries.push_back(std::move(e));
    }
    return m;
  } catch (const nlohmann::json::exception& ex) {
    throw FormatError(std::string("malformed manifest: ") + ex.what());
  }
}

inline std::filesystem::path manifest_path(const std::filesystem::path& root) {
  return root / kManifestFile;
}

inline void save_manifest(const std::filesystem::path& root, const DatasetManifest& m) {
  write_file_atomic(manifest_path(root), manifest_to_text(m));
}

/// Loads {root}/manifest.json; a missing file is an empty manifest.
inline DatasetManifest load_manifest(const std::filesystem::path& root) {
  const auto path = manifest_path(root);
  if (!std::filesystem::exists(path)) return {};
  const auto bytes = read_file(path);
  return manifest_from_text(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
}

inline void ensure_storage(const std::filesystem::path& root) {
  std::error_code ec;
  std::filesystem::create_directories(root / kWavDir, ec);
  if (ec || !std::filesystem::is_directory(root / kWavDir))
    throw IoError("cannot create storage directory under " + root.string());
}

inline AudioClip read_entry_clip(const std::filesystem::path& root, const DatasetEntry& e) {
  std::vector<std::uint8_t> bytes;
  try {
    bytes = read_file(root / e.wav_path);
  } catch (const IoError&) {
    throw IoError("entry " + e.id + ": cannot read " + (root / e.wav_path).string());
  }
  return decode_wav(bytes);
}

// ---------------------------------------------------------------------------
// Store

/// Local recording store rooted at a directory. Mutations are serialized and
/// the manifest is replaced atomically after every change.
class DatasetStore {
 public:
  explicit DatasetStore(std::filesystem::path root)
      : root_(std::move(root)), manifest_(load_manifest(root_)), id_rng_(std::random_device{}()) {}

  const std::filesystem::path& root() const { return root_; }

  DatasetManifest snapshot() const {
    std::lock_guard lock(mu_);
    return manifest_;
  }

  DatasetEntry add_entry(const AudioClip& clip, PhasicityLabel label,
                         std::optional<std::string> artery, Source source) {
    std::lock_guard lock(mu_);
    ensure_storage(root_);

    std::set<std::string> taken;
    for (const auto& e : manifest_.entries) taken.insert(e.id);
    std::string id;
    do {
      id = fresh_id();
    } while (taken.count(id) != 0);

    DatasetEntry entry;
    entry.id = id;
    entry.wav_path = (std::filesystem::path(kWavDir) / (id + ".wav")).generic_string();
    entry.label = label;
    entry.artery = std::move(artery);
    entry.split = Split::unassigned;
    entry.source = source;

    write_file_atomic(root_ / entry.wav_path, encode_wav(clip));
    DatasetManifest next = manifest_;
    next.entries.push_back(entry);
    save_manifest(root_, next);
    manifest_ = std::move(next);
    return entry;
  }

  void replace(DatasetManifest m) {
    std::lock_guard lock(mu_);
    std::error_code ec;
    std::filesystem::create_directories(root_, ec);
    save_manifest(root_, m);
    manifest_ = std::move(m);
  }

 private:
  std::string fresh_id() {
    static constexpr char kHex[] = "0123456789abcdef";
    std::string id(16, '0');
    std::uint64_t bits = id_rng_.next_u64();
    for (auto& ch : id) {
      ch = kHex[bits & 0xF];
      bits >>= 4;
    }
    return id;
  }

  std::filesystem::path root_;
  mutable std::mutex mu_;
  DatasetManifest manifest_;
  Rng id_rng_;
};

// ---------------------------------------------------------------------------
// Split assignment

/// Per-class stratified shuffle: in each class, round(fraction * count) entries
/// go to train and the rest to test.
inline DatasetManifest assign_split(const DatasetManifest& manifest, double train_fraction,
                                    std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0))
    throw RangeError("train fraction must be in (0, 1)");
  if (manifest.entries.empty()) throw EmptyError("cannot split an empty manifest");

  DatasetManifest out = manifest;
  Rng rng(seed);
  for (auto label : kAllLabels) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < out.entries.size(); ++i)
      if (out.entries[i].label == label) idx.push_back(i);
    for (std::size_t i = idx.size(); i > 1; --i) std::swap(idx[i - 1], idx[rng.below(i)]);
    const auto n_train = static_cast<std::size_t>(std::lround(train_fraction * static_cast<double>(idx.size())));
    for (std::size_t k = 0; k < idx.size(); ++k)
      out.entries[idx[k]].split = k < n_train ? Split::train : Split::test;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Augmentation

enum class ZoomMode { in_only, in_out };

struct AugmentConfig {
  double zoom_fraction = 0.20;
  ZoomMode mode = ZoomMode::in_only;
  std::uint64_t seed = 0;

  void validate() const {
    if (!(zoom_fraction >= 0.0 && zoom_fraction <= 0.5))
      throw RangeError("zoom fraction must be in [0, 0.5]");
  }
};

inline double zoom_factor(const AugmentConfig& cfg, double draw) {
  const double lo = 1.0 - cfg.zoom_fraction;
  const double hi = cfg.mode == ZoomMode::in_only ? 1.0 : 1.0 + cfg.zoom_fraction;
  return lo + std::clamp(draw, 0.0, 1.0) * (hi - lo);
}

/// Zooms a square spectrogram about its center and restores the original
/// size. Zoom-in crops; zoom-out pads with the dB floor.
inline Spectrogram random_zoom(const Spectrogram& spec, const AugmentConfig& cfg, double draw) {
  cfg.validate();
  const std::size_t side = spec.rows();
  if (side == 0 || spec.cols() != side) throw ShapeError("random_zoom needs a square spectrogram");

  const double z = zoom_factor(cfg, draw);
  const auto scaled = static_cast<std::size_t>(
      std::max<long long>(1, std::llround(z * static_cast<double>(side))));
  if (scaled == side) return spec;

  Spectrogram out = spec;
  Matrix<double> window;
  if (scaled < side) {
    const std::size_t off = (side - scaled) / 2;
    window = Matrix<double>(scaled, scaled);
    for (std::size_t r = 0; r < scaled; ++r)
      for (std::size_t c = 0; c < scaled; ++c) window(r, c) = spec.values(r + off, c + off);
  } else {
    const std::size_t off = (scaled - side) / 2;
    window = Matrix<double>(scaled, scaled, spec.floor_db);
    for (std::size_t r = 0; r < side; ++r)
      for (std::size_t c = 0; c < side; ++c) window(r + off, c + off) = spec.values(r, c);
  }
  out.values = resize_bilinear(window, side, side);
  return out;
}

// ---------------------------------------------------------------------------
// Training pairs

using LabeledInput = std::pair<Spectrogram, PhasicityLabel>;

inline std::vector<std::size_t> entries_in_split(const DatasetManifest& m, Split split) {
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < m.entries.size(); ++i)
    if (m.entries[i].split == split) idx.push_back(i);
  return idx;
}

/// Draw stream for one epoch's augmentation.
inline Rng augment_rng(const AugmentConfig& cfg, std::uint64_t epoch) {
  return Rng(cfg.seed ^ (0xA0761D6478BD642FULL * (epoch + 1)));
}

/// Network inputs for one split in manifest order. Augmentation applies only
/// to the train split.
inline std::vector<LabeledInput> load_training_pairs(const DatasetManifest& manifest,
                                                     const std::filesystem::path& root, Split split,
                                                     const InputConfig& input,
                                                     const std::optional<AugmentConfig>& augment = std::nullopt,
                                                     std::uint64_t epoch = 0) {
  const bool assigned = std::any_of(manifest.entries.begin(), manifest.entries.end(),
                                    [](const DatasetEntry& e) { return e.split != Split::unassigned; });
  if (!assigned && split != Split::unassigned) throw StateError("manifest split not assigned");

  std::vector<LabeledInput> pairs;
  std::optional<Rng> rng;
  if (augment && split == Split::train) rng.emplace(augment_rng(*augment, epoch));
  for (std::size_t i : entries_in_split(manifest, split)) {
    const auto& e = manifest.entries[i];
    Spectrogram spec = clip_to_input(read_entry_clip(root, e), input);
    if (rng) spec = random_zoom(spec, *augment, rng->uniform());
    pairs.emplace_back(std::move(spec), e.label);
  }
  return pairs;
}

}  // namespace dopphase
