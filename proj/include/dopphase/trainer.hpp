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
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "dopphase/dataset.hpp"
#include "dopphase/errors.hpp"
#include "dopphase/io.hpp"
#include "dopphase/labels.hpp"
#include "dopphase/metrics.hpp"
#include "dopphase/nn.hpp"
#include "dopphase/rng.hpp"

namespace dopphase {

struct TrainConfig {
  int epochs = 10;
  std::size_t batch_size = 16;
  double lr = 1e-3;
  std::uint64_t seed = 0;
  double train_fraction = 0.8;
  std::optional<AugmentConfig> augment;  // off unless configured
  InputConfig input{};

  void validate() const {
    if (epochs < 1) throw RangeError("epochs must be >= 1");
    if (batch_size < 1) throw RangeError("batch size must be >= 1");
    if (!(lr > 0.0)) throw RangeError("learning rate must be positive");
    if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw RangeError("train fraction must be in (0, 1)");
    if (augment) augment->validate();
  }
};

struct EpochRecord {
  double train_loss = 0.0;
  double train_accuracy = 0.0;
  double test_loss = std::numeric_limits<double>::quiet_NaN();
  double test_accuracy = std::numeric_limits<double>::quiet_NaN();
};

struct TrainingHistory {
  std::vector<EpochRecord> epochs;
};

struct TrainResult {
  nn::Model model;
  TrainingHistory history;
};

struct Evaluation {
  ConfusionMatrix confusion;
  Metrics metrics;
  double mean_loss = 0.0;
};

/// Argmax predictions over a fixed set of inputs; never augments.
inline Evaluation evaluate(const nn::Model& model, const std::vector<LabeledInput>& inputs) {
  if (inputs.empty()) throw EmptyError("nothing to evaluate");
  Evaluation ev;
  double loss = 0.0;
  for (const auto& [spec, label] : inputs) {
    const auto r = nn::forward(model, spec);
    ev.confusion.add(to_index(label), nn::argmax(r.probs));
    loss += static_cast<double>(nn::sparse_ce_loss(r.probs, to_index(label)));
  }
  ev.mean_loss = loss / static_cast<double>(inputs.size());
  ev.metrics = f1_from_confusion(ev.confusion);
  return ev;
}

inline Evaluation evaluate(const nn::Model& model, const DatasetManifest& manifest,
                           const std::filesystem::path& root, Split split) {
  if (entries_in_split(manifest, split).empty())
    throw EmptyError(std::string("split '") + std::string(split_name(split)) + "' is empty");
  return evaluate(model, load_training_pairs(manifest, root, split, model.input));
}

/// Mini-batch Adam on preloaded inputs. Per-sample gradients are summed in a
/// fixed order, so a given seed always reproduces the same weights.
inline TrainResult train(nn::Model model, const std::vector<LabeledInput>& train_set,
                         const std::vector<LabeledInput>& test_set, const TrainConfig& cfg) {
  cfg.validate();
  model.validate();
  std::array<std::size_t, kNumClasses> per_class{};
  for (const auto& p : train_set) per_class[static_cast<std::size_t>(to_index(p.second))] += 1;
  for (auto label : kAllLabels)
    if (per_class[static_cast<std::size_t>(to_index(label))] == 0)
      throw DataError(std::string("class ") + std::string(label_name(label)) + " absent from train split");

  nn::AdamState<float> adam;
  adam.lr = cfg.lr;
  Rng shuffle_rng(cfg.seed ^ 0x2545F4914F6CDD1DULL);
  TrainingHistory history;
  std::vector<std::size_t> order(train_set.size());
  std::vector<nn::Tensor<float>> inputs(train_set.size());

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    if (cfg.augment) {
      Rng draws = augment_rng(*cfg.augment, static_cast<std::uint64_t>(epoch));
      for (std::size_t i = 0; i < train_set.size(); ++i)
        inputs[i] = nn::spectrogram_to_tensor<float>(random_zoom(train_set[i].first, *cfg.augment, draws.uniform()));
    } else if (epoch == 0) {
      for (std::size_t i = 0; i < train_set.size(); ++i)
        inputs[i] = nn::spectrogram_to_tensor<float>(train_set[i].first);
    }

    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[shuffle_rng.below(i)]);

    double loss_sum = 0.0;
    std::size_t correct = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(start + cfg.batch_size, order.size());
      auto batch_grads = nn::zero_gradients(model);
      for (std::size_t b = start; b < end; ++b) {
        const std::size_t i = order[b];
        const int target = to_index(train_set[i].second);
        const auto fw = nn::forward(model, inputs[i]);
        loss_sum += static_cast<double>(nn::sparse_ce_loss(fw.probs, target));
        correct += nn::argmax(fw.probs) == target ? 1 : 0;
        const auto g = nn::backward(model, fw.cache, target);
        for (std::size_t p = 0; p < g.params.size(); ++p) {
          auto& acc = batch_grads.params[p].data;
          for (std::size_t j = 0; j < acc.size(); ++j) acc[j] += g.params[p].data[j];
        }
      }
      const float scale = 1.0f / static_cast<float>(end - start);
      for (auto& t : batch_grads.params)
        for (auto& v : t.data) v *= scale;
      nn::apply_adam(model, batch_grads, adam);
    }

    EpochRecord rec;
    rec.train_loss = loss_sum / static_cast<double>(train_set.size());
    rec.train_accuracy = static_cast<double>(correct) / static_cast<double>(train_set.size());
    if (!test_set.empty()) {
      const auto ev = evaluate(model, test_set);
      rec.test_loss = ev.mean_loss;
      rec.test_accuracy = ev.metrics.accuracy;
    }
    history.epochs.push_back(rec);
  }
  return {std::move(model), std::move(history)};
}

inline TrainResult train(nn::Model model, const DatasetManifest& manifest, const std::filesystem::path& root,
                         const TrainConfig& cfg) {
  auto train_set = load_training_pairs(manifest, root, Split::train, model.input);
  auto test_set = entries_in_split(manifest, Split::test).empty()
                      ? std::vector<LabeledInput>{}
                      : load_training_pairs(manifest, root, Split::test, model.input);
  return train(std::move(model), train_set, test_set, cfg);
}

// ---------------------------------------------------------------------------
// History CSV

inline std::string history_to_csv(const TrainingHistory& history) {
  if (history.epochs.empty()) throw EmptyError("training history is empty");
  std::ostringstream os;
  os << "epoch,train_loss,train_acc,test_loss,test_acc\n";
  char line[160];
  for (std::size_t i = 0; i < history.epochs.size(); ++i) {
    const auto& e = history.epochs[i];
    std::snprintf(line, sizeof line, "%zu,%.9g,%.9g,%.9g,%.9g\n", i + 1, e.train_loss, e.train_accuracy,
                  e.test_loss, e.test_accuracy);
    os << line;
  }
  return os.str();
}

inline void export_history(const TrainingHistory& history, const std::filesystem::path& path) {
  write_file_atomic(path, history_to_csv(history));
}

inline TrainingHistory parse_history_csv(const std::string& text) {
  std::istringstream is(text);
  std::string line;
  if (!std::getline(is, line) || line != "epoch,train_loss,train_acc,test_loss,test_acc")
    throw FormatError("missing history header");
  TrainingHistory h;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string cell;
    std::vector<double> v;
    while (std::getline(ls, cell, ',')) v.push_back(std::strtod(cell.c_str(), nullptr));
    if (v.size() != 5) throw FormatError("bad history row '" + line + "'");
    h.epochs.push_back({v[1], v[2], v[3], v[4]});
  }
  return h;
}

/// Trailing moving average of the train loss (window w, full windows only).
inline std::vector<double> smoothed_train_loss(const TrainingHistory& h, std::size_t w = 3) {
  std::vector<double> out;
  for (std::size_t i = 0; i + w <= h.epochs.size(); ++i) {
    double s = 0.0;
    for (std::size_t k = 0; k < w; ++k) s += h.epochs[i + k].train_loss;
    out.push_back(s / static_cast<double>(w));
  }
  return out;
}

}  // namespace dopphase
