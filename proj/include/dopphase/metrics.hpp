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
#include <numeric>

#include "dopphase/errors.hpp"
#include "dopphase/labels.hpp"

namespace dopphase {

/// Rows are true classes, columns predicted classes.
struct ConfusionMatrix {
  std::array<std::array<std::uint64_t, kNumClasses>, kNumClasses> counts{};

  void add(int true_class, int predicted) {
    counts.at(static_cast<std::size_t>(true_class)).at(static_cast<std::size_t>(predicted)) += 1;
  }

  std::uint64_t total() const {
    std::uint64_t n = 0;
    for (const auto& row : counts) n = std::accumulate(row.begin(), row.end(), n);
    return n;
  }

  std::uint64_t trace() const {
    std::uint64_t n = 0;
    for (std::size_t c = 0; c < counts.size(); ++c) n += counts[c][c];
    return n;
  }

  bool operator==(const ConfusionMatrix&) const = default;
};

struct Metrics {
  double accuracy = 0.0;
  std::array<double, kNumClasses> precision{};
  std::array<double, kNumClasses> recall{};
  std::array<double, kNumClasses> f1{};
  double macro_f1 = 0.0;
  double micro_f1 = 0.0;

  bool operator==(const Metrics&) const = default;
};

/// Fraction of samples on the diagonal.
inline double accuracy_from_confusion(const ConfusionMatrix& cm) {
  const auto total = cm.total();
  if (total == 0) throw EmptyError("confusion matrix is empty");
  return static_cast<double>(cm.trace()) / static_cast<double>(total);
}

namespace detail {
// TP / (TP + (FP + FN) / 2), with 0/0 defined as 0.
inline double f1_score(double tp, double fp, double fn) {
  const double denom = tp + 0.5 * (fp + fn);
  return denom == 0.0 ? 0.0 : tp / denom;
}
inline double ratio_or_zero(double num, double denom) { return denom == 0.0 ? 0.0 : num / denom; }
}  // namespace detail

/// One-vs-rest per-class scores plus macro and micro F1.
inline Metrics f1_from_confusion(const ConfusionMatrix& cm) {
  Metrics m;
  m.accuracy = accuracy_from_confusion(cm);
  double tp_all = 0.0, fp_all = 0.0, fn_all = 0.0;
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    double row = 0.0, col = 0.0;
    for (std::size_t k = 0; k < kNumClasses; ++k) {
      row += static_cast<double>(cm.counts[c][k]);
      col += static_cast<double>(cm.counts[k][c]);
    }
    const double tp = static_cast<double>(cm.counts[c][c]);
    const double fp = col - tp;
    const double fn = row - tp;
    m.precision[c] = detail::ratio_or_zero(tp, tp + fp);
    m.recall[c] = detail::ratio_or_zero(tp, tp + fn);
    m.f1[c] = detail::f1_score(tp, fp, fn);
    tp_all += tp;
    fp_all += fp;
    fn_all += fn;
  }
  m.macro_f1 = (m.f1[0] + m.f1[1] + m.f1[2]) / kNumClasses;
  m.micro_f1 = detail::f1_score(tp_all, fp_all, fn_all);
  return m;
}

}  // namespace dopphase
