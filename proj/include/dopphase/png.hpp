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

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "dopphase/dsp.hpp"
#include "dopphase/errors.hpp"

namespace dopphase {

/// 8-bit gray level for a dB value: 0 at the floor, 255 at 0 dB.
inline std::uint8_t gray_level(double value_db, double floor_db) {
  const double v = std::round(255.0 * (value_db - floor_db) / (0.0 - floor_db));
  return static_cast<std::uint8_t>(std::clamp(v, 0.0, 255.0));
}

namespace detail {

inline void png_chunk(std::vector<std::uint8_t>& out, const char* type,
                      const std::vector<std::uint8_t>& body) {
  const auto len = static_cast<std::uint32_t>(body.size());
  for (int s = 24; s >= 0; s -= 8) out.push_back(static_cast<std::uint8_t>((len >> s) & 0xFF));
  const std::size_t type_at = out.size();
  out.insert(out.end(), type, type + 4);
  out.insert(out.end(), body.begin(), body.end());
  const uLong crc = crc32(0L, out.data() + type_at, static_cast<uInt>(body.size() + 4));
  for (int s = 24; s >= 0; s -= 8) out.push_back(static_cast<std::uint8_t>((crc >> s) & 0xFF));
}

inline void put_u32be(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int s = 24; s >= 0; s -= 8) out.push_back(static_cast<std::uint8_t>((v >> s) & 0xFF));
}

}  // namespace detail

/// Grayscale PNG rendering of a spectrogram; the lowest frequency bin is the
/// bottom image row.
inline std::vector<std::uint8_t> spectrogram_to_png(const Spectrogram& spec) {
  const std::size_t h = spec.rows();
  const std::size_t w = spec.cols();
  if (h == 0 || w == 0) throw ShapeError("cannot render an empty spectrogram");

  std::vector<std::uint8_t> raw;
  raw.reserve(h * (w + 1));
  for (std::size_t y = 0; y < h; ++y) {
    raw.push_back(0);  // filter: none
    const std::size_t row = h - 1 - y;
    for (std::size_t x = 0; x < w; ++x) raw.push_back(gray_level(spec.values(row, x), spec.floor_db));
  }

  uLongf packed_len = compressBound(static_cast<uLong>(raw.size()));
  std::vector<std::uint8_t> packed(packed_len);
  if (compress2(packed.data(), &packed_len, raw.data(), static_cast<uLong>(raw.size()), 6) != Z_OK)
    throw Error("deflate failed");
  packed.resize(packed_len);

  std::vector<std::uint8_t> png = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1A, '\n'};
  std::vector<std::uint8_t> ihdr;
  detail::put_u32be(ihdr, static_cast<std::uint32_t>(w));
  detail::put_u32be(ihdr, static_cast<std::uint32_t>(h));
  ihdr.insert(ihdr.end(), {8, 0, 0, 0, 0});  // 8-bit, grayscale, deflate, no filter, no interlace
  detail::png_chunk(png, "IHDR", ihdr);
  detail::png_chunk(png, "IDAT", packed);
  detail::png_chunk(png, "IEND", {});
  return png;
}

}  // namespace dopphase
