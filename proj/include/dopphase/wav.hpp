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
#include <cstring>
#include <span>
#include <string>
#include <vector>

#include "dopphase/dsp.hpp"
#include "dopphase/errors.hpp"

namespace dopphase {

namespace detail {

inline std::uint16_t read_u16le(const std::uint8_t* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

inline std::uint32_t read_u32le(const std::uint8_t* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

inline void put_u16le(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v & 0xFF));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}

inline void put_u32le(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xFF));
}

inline void put_tag(std::vector<std::uint8_t>& out, const char* tag) {
  out.insert(out.end(), tag, tag + 4);
}

}  // namespace detail

/// Decodes a RIFF/WAVE PCM 16-bit file, averaging stereo to mono.
inline AudioClip decode_wav(std::span<const std::uint8_t> bytes) {
  using detail::read_u16le;
  using detail::read_u32le;

  if (bytes.size() < 12) throw FormatError("file too small for a RIFF header");
  if (std::memcmp(bytes.data(), "RIFF", 4) != 0) throw FormatError("missing RIFF magic");
  if (std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) throw FormatError("missing WAVE form type");

  bool have_fmt = false;
  std::uint16_t format = 0, channels = 0, bits = 0, block_align = 0;
  std::uint32_t rate = 0;
  const std::uint8_t* data = nullptr;
  std::size_t data_len = 0;

  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const std::uint8_t* chunk = bytes.data() + pos;
    const std::uint32_t len = read_u32le(chunk + 4);
    const std::size_t body = pos + 8;
    const std::size_t available = bytes.size() - body;

    if (std::memcmp(chunk, "fmt ", 4) == 0) {
      if (len < 16 || available < 16) throw FormatError("fmt chunk too short");
      format = read_u16le(chunk + 8);
      channels = read_u16le(chunk + 10);
      rate = read_u32le(chunk + 12);
      block_align = read_u16le(chunk + 20);
      bits = read_u16le(chunk + 22);
      // WAVE_FORMAT_EXTENSIBLE: the real codec is the first two bytes of the sub-format GUID
      if (format == 0xFFFE) {
        if (len < 40 || available < 40) throw FormatError("extensible fmt chunk too short");
        format = read_u16le(chunk + 8 + 24);
      }
      have_fmt = true;
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      if (!have_fmt) throw FormatError("data chunk before fmt chunk");
      data = chunk + 8;
      // streaming writers leave the size at 0 or 0xFFFFFFFF
      data_len = (len == 0 || len > available) ? available : len;
      break;
    }
    if (len > available) throw FormatError("chunk length exceeds file size");
    pos = body + len + (len & 1u);
  }

  if (!have_fmt) throw FormatError("missing fmt chunk");
  if (data == nullptr) throw FormatError("missing data chunk");
  if (format != 1) throw UnsupportedError("unsupported WAV codec " + std::to_string(format));
  if (bits != 16) throw UnsupportedError("unsupported bit depth " + std::to_string(bits));
  if (channels != 1 && channels != 2)
    throw UnsupportedError("unsupported channel count " + std::to_string(channels));
  if (rate < static_cast<std::uint32_t>(kMinRateHz) || rate > static_cast<std::uint32_t>(kMaxRateHz))
    throw UnsupportedError("unsupported sample rate " + std::to_string(rate));
  if (block_align != channels * 2) throw FormatError("inconsistent block alignment");

  const std::size_t frames = data_len / block_align;
  AudioClip clip;
  clip.sample_rate_hz = static_cast<int>(rate);
  clip.samples.resize(frames);
  for (std::size_t i = 0; i < frames; ++i) {
    const std::uint8_t* p = data + i * block_align;
    const auto left = static_cast<std::int16_t>(read_u16le(p));
    if (channels == 1) {
      clip.samples[i] = left / 32768.0;
    } else {
      const auto right = static_cast<std::int16_t>(read_u16le(p + 2));
      clip.samples[i] = (static_cast<double>(left) + static_cast<double>(right)) / 65536.0;
    }
  }
  return clip;
}

inline AudioClip decode_wav(const std::string& bytes) {
  return decode_wav(std::span(reinterpret_cast<const std::uint8_t*>(bytes.data()), bytes.size()));
}

/// Encodes a clip as PCM 16-bit mono. Samples are clamped to the int16 range.
inline std::vector<std::uint8_t> encode_wav(const AudioClip& clip) {
  using detail::put_tag;
  using detail::put_u16le;
  using detail::put_u32le;

  const auto data_len = static_cast<std::uint32_t>(clip.samples.size() * 2);
  std::vector<std::uint8_t> out;
  out.reserve(44 + data_len);
  put_tag(out, "RIFF");
  put_u32le(out, 36 + data_len);
  put_tag(out, "WAVE");
  put_tag(out, "fmt ");
  put_u32le(out, 16);
  put_u16le(out, 1);  // PCM
  put_u16le(out, 1);  // mono
  put_u32le(out, static_cast<std::uint32_t>(clip.sample_rate_hz));
  put_u32le(out, static_cast<std::uint32_t>(clip.sample_rate_hz) * 2);
  put_u16le(out, 2);
  put_u16le(out, 16);
  put_tag(out, "data");
  put_u32le(out, data_len);
  for (double s : clip.samples) {
    const double scaled = std::clamp(std::round(s * 32768.0), -32768.0, 32767.0);
    put_u16le(out, static_cast<std::uint16_t>(static_cast<std::int16_t>(scaled)));
  }
  return out;
}

}  // namespace dopphase
