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

#include <zlib.h>

#include <bit>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <map>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "dopphase/errors.hpp"
#include "dopphase/io.hpp"
#include "dopphase/nn.hpp"

namespace dopphase {

// Model file layout (all integers little-endian):
//   "PHZM" | u32 version | u32 descriptor length | descriptor (UTF-8)
//   | f32 weights then f32 bias per parameterized layer, in layer order
//   | u32 CRC-32 of every preceding byte
inline constexpr char kModelMagic[4] = {'P', 'H', 'Z', 'M'};
inline constexpr std::uint32_t kModelFormatVersion = 1;

namespace detail {

inline std::string window_name(WindowKind k) { return k == WindowKind::hann ? "hann" : "rectangular"; }

inline std::string layer_token(const nn::LayerDescriptor& l) {
  switch (l.kind) {
    case nn::LayerKind::conv2d: return "conv2d:" + std::to_string(l.units);
    case nn::LayerKind::maxpool2: return "maxpool2";
    case nn::LayerKind::relu: return "relu";
    case nn::LayerKind::flatten: return "flatten";
    case nn::LayerKind::dense: return "dense:" + std::to_string(l.units);
  }
  return "?";
}

inline nn::LayerDescriptor parse_layer_token(const std::string& tok) {
  auto units = [&](std::size_t prefix) -> std::size_t {
    try {
      std::size_t used = 0;
      const auto v = std::stoul(tok.substr(prefix), &used);
      if (used != tok.size() - prefix) throw FormatError("");
      return v;
    } catch (const std::exception&) {
      throw FormatError("bad layer token '" + tok + "'");
    }
  };
  if (tok.rfind("conv2d:", 0) == 0) return {nn::LayerKind::conv2d, units(7)};
  if (tok.rfind("dense:", 0) == 0) return {nn::LayerKind::dense, units(6)};
  if (tok == "maxpool2") return {nn::LayerKind::maxpool2};
  if (tok == "relu") return {nn::LayerKind::relu};
  if (tok == "flatten") return {nn::LayerKind::flatten};
  throw FormatError("unknown layer kind '" + tok + "'");
}

inline void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xFF));
}

inline std::uint32_t get_u32(const std::uint8_t* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

inline std::uint32_t crc32_of(std::span<const std::uint8_t> bytes) {
  return static_cast<std::uint32_t>(crc32(0L, bytes.data(), static_cast<uInt>(bytes.size())));
}

}  // namespace detail

/// Architecture and preprocessing, e.g.
/// "side=64;frame_len=512;hop=128;window=hann;rate=16000;seconds=4;floor_db=-80;layers=conv2d:8,relu,...".
inline std::string model_descriptor(const nn::Model& m) {
  std::ostringstream os;
  char num[32];
  os << "side=" << m.input.side << ";frame_len=" << m.input.stft.frame_len << ";hop=" << m.input.stft.hop
     << ";window=" << detail::window_name(m.input.stft.window) << ";rate=" << m.input.sample_rate_hz;
  std::snprintf(num, sizeof num, "%.17g", m.input.clip_seconds);
  os << ";seconds=" << num;
  std::snprintf(num, sizeof num, "%.17g", m.input.floor_db);
  os << ";floor_db=" << num << ";layers=";
  for (std::size_t i = 0; i < m.layers.size(); ++i) os << (i ? "," : "") << detail::layer_token(m.layers[i]);
  return os.str();
}

struct ModelDescriptor {
  InputConfig input;
  std::vector<nn::LayerDescriptor> layers;
};

inline ModelDescriptor parse_model_descriptor(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::istringstream is(text);
  std::string field;
  while (std::getline(is, field, ';')) {
    const auto eq = field.find('=');
    if (eq == std::string::npos) throw FormatError("bad descriptor field '" + field + "'");
    kv[field.substr(0, eq)] = field.substr(eq + 1);
  }
  auto get = [&](const char* key) -> const std::string& {
    auto it = kv.find(key);
    if (it == kv.end()) throw FormatError(std::string("descriptor missing '") + key + "'");
    return it->second;
  };
  ModelDescriptor d;
  try {
    d.input.side = std::stoul(get("side"));
    d.input.stft.frame_len = std::stoul(get("frame_len"));
    d.input.stft.hop = std::stoul(get("hop"));
    d.input.sample_rate_hz = std::stoi(get("rate"));
    d.input.clip_seconds = std::stod(get("seconds"));
    d.input.floor_db = std::stod(get("floor_db"));
  } catch (const std::logic_error&) {
    throw FormatError("non-numeric descriptor field");
  }
  const auto& window = get("window");
  if (window == "hann") {
    d.input.stft.window = WindowKind::hann;
  } else if (window == "rectangular") {
    d.input.stft.window = WindowKind::rectangular;
  } else {
    throw FormatError("unknown window '" + window + "'");
  }
  std::istringstream ls(get("layers"));
  std::string tok;
  while (std::getline(ls, tok, ',')) d.layers.push_back(detail::parse_layer_token(tok));
  return d;
}

inline std::vector<std::uint8_t> serialize_model(const nn::Model& m) {
  m.validate();
  std::vector<std::uint8_t> out(kModelMagic, kModelMagic + 4);
  detail::put_u32(out, kModelFormatVersion);
  const std::string desc = model_descriptor(m);
  detail::put_u32(out, static_cast<std::uint32_t>(desc.size()));
  out.insert(out.end(), desc.begin(), desc.end());
  for (const auto& p : m.params)
    for (float v : p.data) detail::put_u32(out, std::bit_cast<std::uint32_t>(v));
  detail::put_u32(out, detail::crc32_of(out));
  return out;
}

inline nn::Model deserialize_model(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4) throw CorruptError("model file truncated before magic");
  if (std::memcmp(bytes.data(), kModelMagic, 4) != 0) throw FormatError("not a model file (bad magic)");
  if (bytes.size() < 12) throw CorruptError("model file truncated in header");
  const std::uint32_t version = detail::get_u32(bytes.data() + 4);
  if (version != kModelFormatVersion)
    throw VersionError("model format version " + std::to_string(version) + " not supported");
  const std::uint32_t desc_len = detail::get_u32(bytes.data() + 8);
  if (bytes.size() < 12 + static_cast<std::size_t>(desc_len))
    throw CorruptError("model file truncated in descriptor");
  const std::string desc(reinterpret_cast<const char*>(bytes.data() + 12), desc_len);

  ModelDescriptor d;
  try {
    d = parse_model_descriptor(desc);
  } catch (const FormatError& e) {
    // a damaged descriptor in an otherwise valid header is corruption
    throw CorruptError(std::string("unreadable descriptor: ") + e.what());
  }
  // shapes come from a throwaway init; the values are overwritten below
  nn::Model m;
  try {
    m = nn::make_model<float>(d.layers, d.input, 0);
  } catch (const ShapeError& e) {
    throw CorruptError(std::string("descriptor describes an invalid model: ") + e.what());
  }

  const std::size_t weights_at = 12 + desc_len;
  const std::size_t expected = weights_at + 4 * m.parameter_count() + 4;
  if (bytes.size() < expected) throw CorruptError("model file truncated in weights");
  if (bytes.size() > expected) throw CorruptError("trailing bytes after model checksum");
  const std::uint32_t stored = detail::get_u32(bytes.data() + expected - 4);
  if (stored != detail::crc32_of(bytes.first(expected - 4))) throw CorruptError("model checksum mismatch");

  const std::uint8_t* p = bytes.data() + weights_at;
  for (auto& t : m.params) {
    for (float& v : t.data) {
      v = std::bit_cast<float>(detail::get_u32(p));
      p += 4;
    }
  }
  return m;
}

inline void save_model(const nn::Model& m, const std::filesystem::path& path) {
  write_file_atomic(path, serialize_model(m));
}

inline nn::Model load_model(const std::filesystem::path& path) { return deserialize_model(read_file(path)); }

/// Short content fingerprint (hex CRC-32 of the serialized model).
inline std::string model_fingerprint(const nn::Model& m) {
  const auto bytes = serialize_model(m);
  char buf[16];
  std::snprintf(buf, sizeof buf, "%08x", detail::get_u32(bytes.data() + bytes.size() - 4));
  return buf;
}

}  // namespace dopphase
