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
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

namespace dopphase {

/// Waveform phasicity class. Integer codes are part of the on-disk formats.
enum class PhasicityLabel : std::uint8_t {
  Monophasic = 0,
  Biphasic = 1,
  Triphasic = 2,
};

inline constexpr int kNumClasses = 3;

inline constexpr std::array<PhasicityLabel, kNumClasses> kAllLabels = {
    PhasicityLabel::Monophasic, PhasicityLabel::Biphasic, PhasicityLabel::Triphasic};

inline constexpr int to_index(PhasicityLabel label) { return static_cast<int>(label); }

inline constexpr PhasicityLabel label_from_index(int index) {
  return static_cast<PhasicityLabel>(index);
}

/// Number of flow phases per cardiac cycle for the class.
inline constexpr int phase_count(PhasicityLabel label) { return to_index(label) + 1; }

inline constexpr std::string_view label_name(PhasicityLabel label) {
  switch (label) {
    case PhasicityLabel::Monophasic: return "Monophasic";
    case PhasicityLabel::Biphasic: return "Biphasic";
    case PhasicityLabel::Triphasic: return "Triphasic";
  }
  return "Unknown";
}

inline std::optional<PhasicityLabel> parse_label(std::string_view name) {
  for (auto label : kAllLabels) {
    if (label_name(label) == name) return label;
  }
  return std::nullopt;
}

}  // namespace dopphase
