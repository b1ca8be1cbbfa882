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
#include <numbers>
#include <string>
#include <vector>

#include "dopphase/dataset.hpp"
#include "dopphase/dsp.hpp"
#include "dopphase/errors.hpp"
#include "dopphase/labels.hpp"
#include "dopphase/rng.hpp"
#include "dopphase/wav.hpp"

namespace dopphase {

struct SynthParams {
  double heart_rate_bpm = 72.0;
  double duration_s = kClipSeconds;
  int sample_rate_hz = kCanonicalRateHz;
  double noise_level = 0.0;  // white-noise RMS relative to the pulse peak
  double hum_level = 0.0;    // mains hum amplitude
  double hum_hz = 60.0;
  double f_min_hz = 200.0;
  double f_max_hz = 3000.0;
  std::uint64_t seed = 0;

  double period_s() const { return 60.0 / heart_rate_bpm; }

  void validate() const {
    if (!(heart_rate_bpm >= 40.0 && heart_rate_bpm <= 140.0))
      throw RangeError("heart rate must be in [40, 140] bpm");
    if (sample_rate_hz <= 0) throw RangeError("sample rate must be positive");
    if (!(noise_level >= 0.0 && noise_level <= 1.0)) throw RangeError("noise level must be in [0, 1]");
    if (!(hum_level >= 0.0 && hum_level <= 1.0)) throw RangeError("hum level must be in [0, 1]");
    if (!(f_min_hz > 0.0 && f_min_hz < f_max_hz && f_max_hz < sample_rate_hz / 2.0))
      throw RangeError("Doppler band must satisfy 0 < f_min < f_max < rate/2");
    if (!(duration_s > period_s())) throw RangeError("duration must exceed one cardiac period");
  }
};

struct Lobe {
  double center;     // fraction of the cardiac period
  double width;      // Gaussian sigma as a fraction of the period
  double amplitude;  // signed; negative lobes are reverse flow
};

struct EnvelopeSpec {
  std::vector<Lobe> lobes;
};

inline EnvelopeSpec envelope_for(PhasicityLabel label) {
  switch (label) {
    case PhasicityLabel::Triphasic:
      return {{{0.12, 0.05, 1.0}, {0.28, 0.05, -0.35}, {0.45, 0.06, 0.20}}};
    case PhasicityLabel::Biphasic:
      return {{{0.12, 0.05, 1.0}, {0.28, 0.05, -0.35}}};
    case PhasicityLabel::Monophasic:
      return {{{0.18, 0.14, 0.6}}};
  }
  return {};
}

/// Velocity at time t for a train of periodic Gaussian lobes. The distance to
/// each lobe center is wrapped into half a period either side, so the train
/// stays continuous across period boundaries.
inline double velocity_at(const EnvelopeSpec& spec, double period_s, double t) {
  double phase = std::fmod(t, period_s);
  if (phase < 0.0) phase += period_s;
  double v = 0.0;
  for (const auto& lobe : spec.lobes) {
    double d = phase - lobe.center * period_s;
    if (d > 0.5 * period_s) d -= period_s;
    if (d < -0.5 * period_s) d += period_s;
    const double sigma = lobe.width * period_s;
    v += lobe.amplitude * std::exp(-(d * d) / (2.0 * sigma * sigma));
  }
  return v;
}

inline std::vector<double> velocity_envelope(const EnvelopeSpec& spec, const SynthParams& params) {
  const auto n = static_cast<std::size_t>(std::llround(params.duration_s * params.sample_rate_hz));
  const double period = params.period_s();
  std::vector<double> v(n);
  for (std::size_t i = 0; i < n; ++i)
    v[i] = velocity_at(spec, period, static_cast<double>(i) / params.sample_rate_hz);
  return v;
}

/// Audible Doppler clip: a tone whose pitch follows the flow speed |v(t)|,
/// scaled by |v(t)|, plus white noise and mains hum, peak-normalized.
inline AudioClip synthesize_clip(PhasicityLabel label, const SynthParams& params) {
  params.validate();
  const auto v = velocity_envelope(envelope_for(label), params);
  double vmax = 0.0;
  for (double x : v) vmax = std::max(vmax, std::abs(x));

  const double fs = params.sample_rate_hz;
  const double two_pi = 2.0 * std::numbers::pi;
  Rng rng(params.seed);
  AudioClip clip;
  clip.sample_rate_hz = params.sample_rate_hz;
  clip.samples.resize(v.size());
  double phase = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double speed = std::abs(v[i]);
    const double f = params.f_min_hz + (params.f_max_hz - params.f_min_hz) * (vmax > 0 ? speed / vmax : 0.0);
    const double t = static_cast<double>(i) / fs;
    double s = speed * std::sin(phase);
    s += params.noise_level * rng.normal();
    s += params.hum_level * std::sin(two_pi * params.hum_hz * t);
    clip.samples[i] = s;
    phase = std::fmod(phase + two_pi * f / fs, two_pi);
  }
  return peak_normalize(clip);
}

struct CorpusConfig {
  std::size_t n_per_class = 100;
  std::uint64_t master_seed = 42;
  SynthParams base{};          // rate, duration, band, hum
  double heart_rate_min = 55.0;
  double heart_rate_max = 95.0;
  double noise_max = 0.15;     // per-clip noise ~ U(0, noise_max)
};

inline std::string corpus_entry_id(PhasicityLabel label, std::size_t index, std::uint64_t seed) {
  return std::string(label_name(label)) + "_" + std::to_string(index) + "_" + std::to_string(seed);
}

/// Per-clip parameters for corpus index k (seed_k = master ^ k).
inline SynthParams corpus_clip_params(const CorpusConfig& cfg, std::uint64_t k) {
  SynthParams p = cfg.base;
  p.seed = cfg.master_seed ^ k;
  Rng jitter(p.seed ^ 0x5851F42D4C957F2DULL);
  p.heart_rate_bpm = jitter.uniform(cfg.heart_rate_min, cfg.heart_rate_max);
  p.noise_level = jitter.uniform(0.0, cfg.noise_max);
  return p;
}

/// Writes n_per_class clips per class under {root}/wav and the manifest.
/// Clips are interleaved by class: index k has label k % 3.
inline DatasetManifest generate_corpus(const std::filesystem::path& root, const CorpusConfig& cfg) {
  if (cfg.n_per_class == 0) throw RangeError("n_per_class must be >= 1");
  if (cfg.noise_max < 0.0 || cfg.noise_max > 1.0) throw RangeError("noise jitter must be in [0, 1]");
  ensure_storage(root);

  DatasetManifest manifest;
  const std::size_t total = cfg.n_per_class * kNumClasses;
  for (std::size_t k = 0; k < total; ++k) {
    const auto label = label_from_index(static_cast<int>(k % kNumClasses));
    const SynthParams p = corpus_clip_params(cfg, k);
    DatasetEntry e;
    e.id = corpus_entry_id(label, k, p.seed);
    e.wav_path = (std::filesystem::path(kWavDir) / (e.id + ".wav")).generic_string();
    e.label = label;
    e.source = Source::synthetic;
    write_file_atomic(root / e.wav_path, encode_wav(synthesize_clip(label, p)));
    manifest.entries.push_back(std::move(e));
  }
  save_manifest(root, manifest);
  return manifest;
}

}  // namespace dopphase
