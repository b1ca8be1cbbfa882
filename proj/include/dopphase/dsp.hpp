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
#include <bit>
#include <cassert>
#include <cmath>
#include <complex>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "dopphase/errors.hpp"

namespace dopphase {

inline constexpr int kCanonicalRateHz = 16000;
inline constexpr double kClipSeconds = 4.0;
inline constexpr double kDefaultFloorDb = -80.0;
inline constexpr double kMagnitudeEpsilon = 1e-10;
inline constexpr int kMinRateHz = 8000;
inline constexpr int kMaxRateHz = 48000;

/// Mono PCM audio, samples nominally in [-1, 1].
struct AudioClip {
  std::vector<double> samples;
  int sample_rate_hz = kCanonicalRateHz;

  double duration_s() const {
    return static_cast<double>(samples.size()) / static_cast<double>(sample_rate_hz);
  }
  bool operator==(const AudioClip&) const = default;
};

enum class WindowKind { hann, rectangular };

struct StftParams {
  std::size_t frame_len = 512;
  std::size_t hop = 128;
  WindowKind window = WindowKind::hann;

  void validate() const {
    if (frame_len == 0 || !std::has_single_bit(frame_len))
      throw RangeError("frame_len must be a power of two, got " + std::to_string(frame_len));
    if (hop == 0 || hop > frame_len)
      throw RangeError("hop must satisfy 0 < hop <= frame_len");
  }
  bool operator==(const StftParams&) const = default;
};

/// Dense row-major matrix.
template <class T>
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<T> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, T fill = T{}) : rows(r), cols(c), data(r * c, fill) {}

  T& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  const T& operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
  bool empty() const { return data.empty(); }
  bool operator==(const Matrix&) const = default;
};

using ComplexMatrix = Matrix<std::complex<double>>;

/// Log-magnitude time-frequency image: rows are frequency bins (row 0 = DC),
/// columns are time frames.
struct Spectrogram {
  Matrix<double> values;
  StftParams params;
  double floor_db = kDefaultFloorDb;

  std::size_t rows() const { return values.rows; }
  std::size_t cols() const { return values.cols; }
  bool operator==(const Spectrogram&) const = default;
};

// ---------------------------------------------------------------------------
// Clip conditioning

inline AudioClip resample(const AudioClip& clip, int target_rate_hz) {
  if (target_rate_hz < kMinRateHz || target_rate_hz > kMaxRateHz)
    throw RangeError("target rate " + std::to_string(target_rate_hz) + " Hz outside [8000, 48000]");
  if (clip.sample_rate_hz <= 0) throw RangeError("source sample rate must be positive");
  if (target_rate_hz == clip.sample_rate_hz) return clip;

  const std::size_t n_in = clip.samples.size();
  const double ratio = static_cast<double>(clip.sample_rate_hz) / target_rate_hz;
  const auto n_out = static_cast<std::size_t>(
      std::llround(static_cast<double>(n_in) * target_rate_hz / clip.sample_rate_hz));

  AudioClip out;
  out.sample_rate_hz = target_rate_hz;
  out.samples.resize(n_out);
  if (n_in == 0) return out;
  for (std::size_t i = 0; i < n_out; ++i) {
    const double pos = static_cast<double>(i) * ratio;
    const auto i0 = std::min(static_cast<std::size_t>(pos), n_in - 1);
    const std::size_t i1 = std::min(i0 + 1, n_in - 1);
    const double frac = pos - static_cast<double>(i0);
    const double a = clip.samples[i0];
    const double b = clip.samples[i1];
    // a + frac*(b-a) would break exact constancy through rounding
    out.samples[i] = a == b ? a : (1.0 - frac) * a + frac * b;
  }
  return out;
}

inline AudioClip peak_normalize(const AudioClip& clip) {
  double peak = 0.0;
  for (double s : clip.samples) peak = std::max(peak, std::abs(s));
  if (peak == 0.0) return clip;
  AudioClip out = clip;
  for (double& s : out.samples) s /= peak;
  return out;
}

/// Center-crops longer clips and symmetrically zero-pads shorter ones to
/// exactly round(seconds * rate) samples.
inline AudioClip fit_duration(const AudioClip& clip, double seconds) {
  const auto target = static_cast<std::size_t>(std::llround(seconds * clip.sample_rate_hz));
  const std::size_t n = clip.samples.size();
  if (n == target) return clip;
  AudioClip out;
  out.sample_rate_hz = clip.sample_rate_hz;
  if (n > target) {
    const std::size_t start = (n - target) / 2;
    out.samples.assign(clip.samples.begin() + static_cast<std::ptrdiff_t>(start),
                       clip.samples.begin() + static_cast<std::ptrdiff_t>(start + target));
  } else {
    out.samples.assign(target, 0.0);
    std::copy(clip.samples.begin(), clip.samples.end(),
              out.samples.begin() + static_cast<std::ptrdiff_t>((target - n) / 2));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Spectral analysis

inline std::vector<double> make_window(WindowKind kind, std::size_t n) {
  if (n == 0) throw RangeError("window length must be >= 1");
  std::vector<double> w(n, 1.0);
  if (kind == WindowKind::hann && n > 1) {
    const double denom = static_cast<double>(n - 1);
    for (std::size_t k = 0; k < n; ++k)
      w[k] = 0.5 * (1.0 - std::cos(2.0 * std::numbers::pi * static_cast<double>(k) / denom));
    // exact symmetry regardless of cos rounding
    for (std::size_t k = 0; k < n / 2; ++k) w[n - 1 - k] = w[k];
  }
  return w;
}

/// In-place iterative radix-2 decimation-in-time FFT (forward, unnormalized).
inline void fft_inplace(std::span<std::complex<double>> x) {
  const std::size_t n = x.size();
  if (n == 0 || !std::has_single_bit(n))
    throw RangeError("fft length must be a power of two, got " + std::to_string(n));

  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(x[i], x[j]);
  }

  for (std::size_t len = 2; len <= n; len <<= 1) {
    const std::size_t half = len / 2;
    // twiddles evaluated directly (no recurrence) to keep error near 1 ulp
    for (std::size_t k = 0; k < half; ++k) {
      const double angle = -2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(len);
      const std::complex<double> tw(std::cos(angle), std::sin(angle));
      for (std::size_t start = 0; start < n; start += len) {
        const std::complex<double> u = x[start + k];
        const std::complex<double> v = x[start + k + half] * tw;
        x[start + k] = u + v;
        x[start + k + half] = u - v;
      }
    }
  }
}

inline std::vector<std::complex<double>> fft(std::span<const std::complex<double>> frame) {
  std::vector<std::complex<double>> out(frame.begin(), frame.end());
  fft_inplace(out);
  return out;
}

inline std::size_t stft_frame_count(std::size_t signal_len, const StftParams& params) {
  if (signal_len < params.frame_len) return 0;
  return 1 + (signal_len - params.frame_len) / params.hop;
}

/// Full DFT of every windowed frame. Rows are DFT bins (frame_len of them),
/// column t is DFT(x[t*hop .. t*hop+frame_len) * w).
inline ComplexMatrix stft(const AudioClip& clip, const StftParams& params) {
  params.validate();
  const std::size_t n = params.frame_len;
  if (clip.samples.size() < n)
    throw TooShortError("clip has " + std::to_string(clip.samples.size()) +
                        " samples, need at least one frame of " + std::to_string(n));
  const std::size_t frames = stft_frame_count(clip.samples.size(), params);
  const auto window = make_window(params.window, n);

  ComplexMatrix out(n, frames);
  std::vector<std::complex<double>> buf(n);
  for (std::size_t t = 0; t < frames; ++t) {
    const std::size_t offset = t * params.hop;
    for (std::size_t i = 0; i < n; ++i) buf[i] = clip.samples[offset + i] * window[i];
    fft_inplace(buf);
    for (std::size_t k = 0; k < n; ++k) out(k, t) = buf[k];
  }
  return out;
}

/// Keeps the non-negative frequency bins and converts to dB with a floor:
/// max(20 log10(|X| / reference + 1e-10), floor_db).
inline Spectrogram to_spectrogram(const ComplexMatrix& stft_matrix, double floor_db,
                                  const StftParams& params = {}, double reference = 1.0) {
  if (!(reference > 0.0)) throw RangeError("magnitude reference must be positive");
  if (stft_matrix.empty()) throw ShapeError("empty STFT matrix");
  const std::size_t bins = stft_matrix.rows / 2 + 1;
  Spectrogram spec;
  spec.params = params;
  spec.params.frame_len = stft_matrix.rows;
  spec.floor_db = floor_db;
  spec.values = Matrix<double>(bins, stft_matrix.cols);
  for (std::size_t r = 0; r < bins; ++r) {
    for (std::size_t c = 0; c < stft_matrix.cols; ++c) {
      const double db = 20.0 * std::log10(std::abs(stft_matrix(r, c)) / reference + kMagnitudeEpsilon);
      spec.values(r, c) = std::isfinite(db) ? std::max(db, floor_db) : floor_db;
    }
  }
  return spec;
}

namespace detail {

struct ResizeTaps {
  std::vector<std::size_t> first;   // first input index per output sample
  std::vector<std::vector<double>> weights;
};

// Triangle (linear) filter on pixel centers. When shrinking, the support
// widens by the scale factor so every input pixel contributes; when growing
// this is plain bilinear interpolation with edge clamping.
inline ResizeTaps triangle_taps(std::size_t n_in, std::size_t n_out) {
  ResizeTaps taps;
  taps.first.resize(n_out);
  taps.weights.resize(n_out);
  const double scale = static_cast<double>(n_in) / static_cast<double>(n_out);
  const double support = std::max(scale, 1.0);
  for (std::size_t i = 0; i < n_out; ++i) {
    const double center = (static_cast<double>(i) + 0.5) * scale;
    const auto lo = static_cast<std::ptrdiff_t>(std::floor(center - support));
    const auto hi = static_cast<std::ptrdiff_t>(std::ceil(center + support));
    const std::size_t j0 = static_cast<std::size_t>(std::max<std::ptrdiff_t>(lo, 0));
    const std::size_t j1 = static_cast<std::size_t>(std::min<std::ptrdiff_t>(hi, static_cast<std::ptrdiff_t>(n_in)));
    std::vector<double> w;
    std::size_t first = n_in;
    for (std::size_t j = j0; j < j1; ++j) {
      const double x = std::abs((static_cast<double>(j) + 0.5 - center) / support);
      if (x >= 1.0) continue;
      if (first == n_in) first = j;
      w.resize(j - first + 1, 0.0);
      w.back() = 1.0 - x;
    }
    if (first == n_in) {  // cannot happen for support >= 1, kept for safety of the index math
      first = std::min(static_cast<std::size_t>(center), n_in - 1);
      w = {1.0};
    }
    double total = 0.0;
    for (double v : w) total += v;
    for (double& v : w) v /= total;
    taps.first[i] = first;
    taps.weights[i] = std::move(w);
  }
  return taps;
}

// Weighted mean written as v0 + sum w (v - v0), clamped to the tap range, so
// constant inputs come back bit-exact and the result never leaves [min, max].
template <class Get>
double apply_taps(std::size_t first, const std::vector<double>& w, Get get) {
  const double v0 = get(first);
  double lo = v0, hi = v0, acc = 0.0;
  for (std::size_t k = 0; k < w.size(); ++k) {
    const double v = get(first + k);
    lo = std::min(lo, v);
    hi = std::max(hi, v);
    acc += w[k] * (v - v0);
  }
  return std::clamp(v0 + acc, lo, hi);
}

}  // namespace detail

/// Separable bilinear resize on pixel centers with edge clamping, antialiased
/// when shrinking.
inline Matrix<double> resize_bilinear(const Matrix<double>& in, std::size_t out_rows,
                                      std::size_t out_cols) {
  if (out_rows == 0 || out_cols == 0) throw RangeError("resize target dimension must be positive");
  if (in.empty()) throw ShapeError("cannot resize an empty matrix");
  if (in.rows == out_rows && in.cols == out_cols) return in;

  const auto ct = detail::triangle_taps(in.cols, out_cols);
  Matrix<double> horizontal(in.rows, out_cols);
  for (std::size_t r = 0; r < in.rows; ++r)
    for (std::size_t c = 0; c < out_cols; ++c)
      horizontal(r, c) = detail::apply_taps(ct.first[c], ct.weights[c], [&](std::size_t j) { return in(r, j); });

  const auto rt = detail::triangle_taps(in.rows, out_rows);
  Matrix<double> out(out_rows, out_cols);
  for (std::size_t r = 0; r < out_rows; ++r)
    for (std::size_t c = 0; c < out_cols; ++c)
      out(r, c) = detail::apply_taps(rt.first[r], rt.weights[r], [&](std::size_t j) { return horizontal(j, c); });
  return out;
}

inline Spectrogram resize_bilinear(const Spectrogram& spec, std::size_t out_rows,
                                   std::size_t out_cols) {
  Spectrogram out;
  out.params = spec.params;
  out.floor_db = spec.floor_db;
  out.values = resize_bilinear(spec.values, out_rows, out_cols);
  return out;
}

/// |X| of a unit-amplitude sinusoid centered on a bin: half the window sum.
inline double tone_reference(const StftParams& params) {
  const auto w = make_window(params.window, params.frame_len);
  double sum = 0.0;
  for (double v : w) sum += v;
  return sum / 2.0;
}

struct InputConfig {
  StftParams stft{};
  std::size_t side = 64;
  int sample_rate_hz = kCanonicalRateHz;
  double clip_seconds = kClipSeconds;
  double floor_db = kDefaultFloorDb;

  bool operator==(const InputConfig&) const = default;
};

/// Full audio-to-network-input pipeline: resample, fix duration, normalize,
/// STFT, dB, square resize. Pure and deterministic. Magnitudes are referenced
/// to a full-scale tone, so values sit at or below about 0 dB.
inline Spectrogram clip_to_input(const AudioClip& clip, const InputConfig& cfg) {
  if (cfg.side == 0) throw RangeError("input side must be positive");
  cfg.stft.validate();
  AudioClip x = resample(clip, cfg.sample_rate_hz);
  if (x.samples.size() < cfg.stft.frame_len)
    throw TooShortError("clip shorter than one STFT frame after resampling");
  x = fit_duration(x, cfg.clip_seconds);
  x = peak_normalize(x);
  const Spectrogram spec = to_spectrogram(stft(x, cfg.stft), cfg.floor_db, cfg.stft, tone_reference(cfg.stft));
  return resize_bilinear(spec, cfg.side, cfg.side);
}

inline Spectrogram clip_to_input(const AudioClip& clip, const StftParams& params,
                                 std::size_t side) {
  InputConfig cfg;
  cfg.stft = params;
  cfg.side = side;
  return clip_to_input(clip, cfg);
}

}  // namespace dopphase
