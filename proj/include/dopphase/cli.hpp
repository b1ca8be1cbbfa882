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

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "dopphase/dataset.hpp"
#include "dopphase/dsp.hpp"
#include "dopphase/errors.hpp"
#include "dopphase/model_io.hpp"
#include "dopphase/nn.hpp"
#include "dopphase/png.hpp"
#include "dopphase/service.hpp"
#include "dopphase/synth.hpp"
#include "dopphase/trainer.hpp"
#include "dopphase/wav.hpp"

namespace dopphase {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitRuntime = 2;

namespace detail {

inline std::string fmt_double(double v, const char* spec = "%.4f") {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

inline void print_metrics(std::ostream& out, const Evaluation& ev) {
  out << "accuracy " << fmt_double(ev.metrics.accuracy) << "\n";
  out << "macro_f1 " << fmt_double(ev.metrics.macro_f1) << "\n";
  out << "micro_f1 " << fmt_double(ev.metrics.micro_f1) << "\n";
  for (auto l : kAllLabels) {
    const auto c = static_cast<std::size_t>(to_index(l));
    out << "  " << label_name(l) << " precision " << fmt_double(ev.metrics.precision[c]) << " recall "
        << fmt_double(ev.metrics.recall[c]) << " f1 " << fmt_double(ev.metrics.f1[c]) << "\n";
  }
  out << "confusion (rows=true, cols=predicted)\n";
  for (const auto& row : ev.confusion.counts) out << "  " << row[0] << " " << row[1] << " " << row[2] << "\n";
}

}  // namespace detail

/// Entry point for the dopphase command line. Returns 0 on success, 1 on a
/// usage error and 2 on a runtime error.
inline int run_cli(int argc, const char* const* argv, std::ostream& out = std::cout,
                   std::ostream& err = std::cerr) {
  CLI::App app{"Doppler waveform phasicity classifier", "dopphase"};
  app.require_subcommand(1);

  std::string data_root, model_path, wav_path, out_path, history_path, split_name_opt = "test";
  std::string host = "127.0.0.1", static_dir;
  std::uint64_t seed = 42;
  int epochs = 10, port = 8080;
  std::size_t batch_size = 16, input_side = 64, frame_len = 512, hop = 128, n_per_class = 100;
  double lr = 1e-3, noise = 0.15, train_fraction = 0.8, zoom = 0.0;

  auto* synth = app.add_subcommand("synth", "Generate a labeled synthetic Doppler corpus");
  synth->add_option("--data-root", data_root, "Dataset directory")->required();
  synth->add_option("--n-per-class", n_per_class, "Clips per class")->capture_default_str();
  synth->add_option("--seed", seed, "Master seed")->capture_default_str();
  synth->add_option("--noise", noise, "Upper bound of per-clip noise level")->capture_default_str();

  auto* spectro = app.add_subcommand("spectrogram", "Render a WAV file as a grayscale PNG spectrogram");
  spectro->add_option("--wav", wav_path, "Input WAV")->required();
  spectro->add_option("--out", out_path, "Output PNG")->required();
  spectro->add_option("--frame-len", frame_len)->capture_default_str();
  spectro->add_option("--hop", hop)->capture_default_str();
  spectro->add_option("--input-side", input_side)->capture_default_str();

  auto* split = app.add_subcommand("split", "Assign a stratified train/test split");
  split->add_option("--data-root", data_root)->required();
  split->add_option("--train-fraction", train_fraction)->capture_default_str();
  split->add_option("--seed", seed)->capture_default_str();

  auto* train_cmd = app.add_subcommand("train", "Train a model on the train split");
  train_cmd->add_option("--data-root", data_root)->required();
  train_cmd->add_option("--model", model_path, "Output model file")->required();
  train_cmd->add_option("--epochs", epochs)->capture_default_str();
  train_cmd->add_option("--batch-size", batch_size)->capture_default_str();
  train_cmd->add_option("--lr", lr)->capture_default_str();
  train_cmd->add_option("--seed", seed)->capture_default_str();
  train_cmd->add_option("--input-side", input_side)->capture_default_str();
  train_cmd->add_option("--frame-len", frame_len)->capture_default_str();
  train_cmd->add_option("--hop", hop)->capture_default_str();
  train_cmd->add_option("--train-fraction", train_fraction, "Used when the split is unassigned")
      ->capture_default_str();
  train_cmd->add_option("--zoom", zoom, "Random zoom-in fraction; 0 disables augmentation")->capture_default_str();
  train_cmd->add_option("--history", history_path, "Write per-epoch CSV here");

  auto* eval = app.add_subcommand("eval", "Evaluate a model on a split");
  eval->add_option("--data-root", data_root)->required();
  eval->add_option("--model", model_path)->required();
  eval->add_option("--split", split_name_opt)->check(CLI::IsMember({"train", "test"}))->capture_default_str();

  auto* predict = app.add_subcommand("predict", "Classify one WAV file");
  predict->add_option("--model", model_path)->required();
  predict->add_option("--wav", wav_path)->required();

  auto* serve = app.add_subcommand("serve", "Run the HTTP service");
  serve->add_option("--data-root", data_root)->required();
  serve->add_option("--model", model_path, "Model to load at startup");
  serve->add_option("--port", port)->capture_default_str();
  serve->add_option("--host", host)->capture_default_str();
  serve->add_option("--static-dir", static_dir, "Directory served at / (web UI build)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n" << app.help();
    return kExitUsage;
  }

  auto input_config = [&] {
    InputConfig in;
    in.stft.frame_len = frame_len;
    in.stft.hop = hop;
    in.side = input_side;
    in.stft.validate();
    if (input_side == 0) throw RangeError("--input-side must be positive");
    return in;
  };

  try {
    if (*synth) {
      CorpusConfig cfg;
      cfg.n_per_class = n_per_class;
      cfg.master_seed = seed;
      cfg.noise_max = noise;
      cfg.base.hum_level = 0.05;
      const auto m = generate_corpus(data_root, cfg);
      out << "wrote " << m.entries.size() << " clips to " << data_root << "\n";
    } else if (*spectro) {
      const auto clip = decode_wav(read_file(wav_path));
      const auto spec = clip_to_input(clip, input_config());
      write_file_atomic(out_path, spectrogram_to_png(spec));
      out << "wrote " << spec.rows() << "x" << spec.cols() << " spectrogram to " << out_path << "\n";
    } else if (*split) {
      DatasetStore store(data_root);
      auto m = assign_split(store.snapshot(), train_fraction, seed);
      store.replace(m);
      out << "train " << entries_in_split(m, Split::train).size() << " test "
          << entries_in_split(m, Split::test).size() << "\n";
    } else if (*train_cmd) {
      DatasetStore store(data_root);
      auto m = store.snapshot();
      if (entries_in_split(m, Split::train).empty()) {
        m = assign_split(m, train_fraction, seed);
        store.replace(m);
      }
      TrainConfig cfg;
      cfg.epochs = epochs;
      cfg.batch_size = batch_size;
      cfg.lr = lr;
      cfg.seed = seed;
      cfg.train_fraction = train_fraction;
      cfg.input = input_config();
      if (zoom > 0.0) {
        AugmentConfig aug;
        aug.zoom_fraction = zoom;
        aug.seed = seed;
        cfg.augment = aug;
      }
      auto model = nn::make_model<float>(nn::default_layers(), cfg.input, seed);
      auto result = train(std::move(model), m, data_root, cfg);
      for (std::size_t i = 0; i < result.history.epochs.size(); ++i) {
        const auto& e = result.history.epochs[i];
        out << "epoch " << (i + 1) << " train_loss " << detail::fmt_double(e.train_loss) << " train_acc "
            << detail::fmt_double(e.train_accuracy) << " test_loss " << detail::fmt_double(e.test_loss)
            << " test_acc " << detail::fmt_double(e.test_accuracy) << "\n";
      }
      save_model(result.model, model_path);
      if (!history_path.empty()) export_history(result.history, history_path);
      out << "saved model " << model_fingerprint(result.model) << " to " << model_path << "\n";
    } else if (*eval) {
      const auto model = load_model(model_path);
      const auto m = load_manifest(data_root);
      const auto ev = evaluate(model, m, data_root, parse_split(split_name_opt));
      detail::print_metrics(out, ev);
    } else if (*predict) {
      const auto model = load_model(model_path);
      const auto clip = decode_wav(read_file(wav_path));
      const auto r = nn::forward(model, clip_to_input(clip, model.input));
      out << label_name(label_from_index(nn::argmax(r.probs))) << "\n";
      for (auto l : kAllLabels)
        out << "  " << label_name(l) << " " << detail::fmt_double(r.probs[static_cast<std::size_t>(to_index(l))], "%.6f")
            << "\n";
    } else if (*serve) {
      PhasicityService service(data_root);
      if (!model_path.empty()) service.load_model(model_path);
      httplib::Server server;
      bind_routes(server, service);
      if (!static_dir.empty() && !server.set_mount_point("/", static_dir))
        throw IoError("cannot serve static directory " + static_dir);
      out << "listening on http://" << host << ":" << port << "\n" << std::flush;
      if (!server.listen(host, port)) throw IoError("cannot listen on " + host + ":" + std::to_string(port));
    }
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitOk;
}

}  // namespace dopphase
