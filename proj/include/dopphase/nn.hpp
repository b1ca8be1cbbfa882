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
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "dopphase/dsp.hpp"
#include "dopphase/errors.hpp"
#include "dopphase/labels.hpp"
#include "dopphase/rng.hpp"

namespace dopphase::nn {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_size(const Shape& s) {
  return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) out += (i ? "x" : "") + std::to_string(s[i]);
  return out + "]";
}

/// Row-major dense tensor. Images are stored H x W x C.
template <class T>
struct Tensor {
  Shape shape;
  std::vector<T> data;

  Tensor() = default;
  explicit Tensor(Shape s, T fill = T{}) : shape(std::move(s)), data(shape_size(shape), fill) {}
  Tensor(Shape s, std::vector<T> values) : shape(std::move(s)), data(std::move(values)) {
    if (data.size() != shape_size(shape)) throw ShapeError("tensor data does not match shape " + shape_str(shape));
  }

  std::size_t size() const { return data.size(); }
  T& operator[](std::size_t i) { return data[i]; }
  const T& operator[](std::size_t i) const { return data[i]; }

  template <class U>
  Tensor<U> cast() const {
    Tensor<U> out;
    out.shape = shape;
    out.data.assign(data.begin(), data.end());
    return out;
  }

  bool operator==(const Tensor&) const = default;
};

// ---------------------------------------------------------------------------
// Layer primitives

/// 3x3 convolution, stride 1, zero "same" padding.
/// input HxWxC, kernels 3x3xCxK, bias K -> HxWxK.
template <class T>
Tensor<T> conv2d_forward(const Tensor<T>& in, const Tensor<T>& ker, const Tensor<T>& bias) {
  if (in.shape.size() != 3 || ker.shape.size() != 4 || bias.shape.size() != 1 || ker.shape[0] != 3 ||
      ker.shape[1] != 3 || ker.shape[2] != in.shape[2] || bias.shape[0] != ker.shape[3])
    throw ShapeError("conv2d shapes incompatible: input " + shape_str(in.shape) + ", kernel " +
                     shape_str(ker.shape) + ", bias " + shape_str(bias.shape));
  const std::size_t h = in.shape[0], w = in.shape[1], c_in = in.shape[2], k_out = ker.shape[3];
  Tensor<T> out({h, w, k_out});
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      T* o = &out.data[(y * w + x) * k_out];
      for (std::size_t k = 0; k < k_out; ++k) o[k] = bias[k];
      for (std::size_t dy = 0; dy < 3; ++dy) {
        if (y + dy < 1 || y + dy > h) continue;
        const std::size_t sy = y + dy - 1;
        for (std::size_t dx = 0; dx < 3; ++dx) {
          if (x + dx < 1 || x + dx > w) continue;
          const std::size_t sx = x + dx - 1;
          const T* src = &in.data[(sy * w + sx) * c_in];
          const T* kr = &ker.data[(dy * 3 + dx) * c_in * k_out];
          for (std::size_t c = 0; c < c_in; ++c) {
            const T v = src[c];
            const T* kc = kr + c * k_out;
            for (std::size_t k = 0; k < k_out; ++k) o[k] += v * kc[k];
          }
        }
      }
    }
  }
  return out;
}

template <class T>
struct ConvGrads {
  Tensor<T> d_input;
  Tensor<T> d_kernel;
  Tensor<T> d_bias;
};

template <class T>
ConvGrads<T> conv2d_backward(const Tensor<T>& in, const Tensor<T>& ker, const Tensor<T>& d_out) {
  const std::size_t h = in.shape[0], w = in.shape[1], c_in = in.shape[2], k_out = ker.shape[3];
  if (d_out.shape != Shape{h, w, k_out}) throw ShapeError("conv2d gradient shape mismatch");
  ConvGrads<T> g{Tensor<T>(in.shape), Tensor<T>(ker.shape), Tensor<T>({k_out})};
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      const T* go = &d_out.data[(y * w + x) * k_out];
      for (std::size_t k = 0; k < k_out; ++k) g.d_bias[k] += go[k];
      for (std::size_t dy = 0; dy < 3; ++dy) {
        if (y + dy < 1 || y + dy > h) continue;
        const std::size_t sy = y + dy - 1;
        for (std::size_t dx = 0; dx < 3; ++dx) {
          if (x + dx < 1 || x + dx > w) continue;
          const std::size_t sx = x + dx - 1;
          const T* src = &in.data[(sy * w + sx) * c_in];
          T* gsrc = &g.d_input.data[(sy * w + sx) * c_in];
          const std::size_t kbase = (dy * 3 + dx) * c_in * k_out;
          for (std::size_t c = 0; c < c_in; ++c) {
            const T v = src[c];
            const T* kc = &ker.data[kbase + c * k_out];
            T* gk = &g.d_kernel.data[kbase + c * k_out];
            T acc{};
            for (std::size_t k = 0; k < k_out; ++k) {
              gk[k] += v * go[k];
              acc += kc[k] * go[k];
            }
            gsrc[c] += acc;
          }
        }
      }
    }
  }
  return g;
}

template <class T>
struct PoolResult {
  Tensor<T> out;
  std::vector<std::uint32_t> argmax;  // flat input index per output element
};

/// 2x2 max pooling, stride 2. Ties resolve to the first element in row-major
/// window order.
template <class T>
PoolResult<T> maxpool2_forward(const Tensor<T>& in) {
  if (in.shape.size() != 3) throw ShapeError("maxpool2 needs an HxWxC tensor");
  const std::size_t h = in.shape[0], w = in.shape[1], c = in.shape[2];
  if (h % 2 != 0 || w % 2 != 0) throw ShapeError("maxpool2 needs even spatial dims, got " + shape_str(in.shape));
  PoolResult<T> r{Tensor<T>({h / 2, w / 2, c}), {}};
  r.argmax.resize(r.out.size());
  for (std::size_t y = 0; y < h / 2; ++y) {
    for (std::size_t x = 0; x < w / 2; ++x) {
      for (std::size_t ch = 0; ch < c; ++ch) {
        std::size_t best = ((2 * y) * w + 2 * x) * c + ch;
        for (std::size_t dy = 0; dy < 2; ++dy) {
          for (std::size_t dx = 0; dx < 2; ++dx) {
            const std::size_t idx = ((2 * y + dy) * w + 2 * x + dx) * c + ch;
            if (in.data[idx] > in.data[best]) best = idx;
          }
        }
        const std::size_t o = (y * (w / 2) + x) * c + ch;
        r.out.data[o] = in.data[best];
        r.argmax[o] = static_cast<std::uint32_t>(best);
      }
    }
  }
  return r;
}

template <class T>
Tensor<T> maxpool2_backward(const Tensor<T>& d_out, const std::vector<std::uint32_t>& argmax,
                            const Shape& in_shape) {
  if (argmax.size() != d_out.size()) throw ShapeError("maxpool2 gradient shape mismatch");
  Tensor<T> d_in(in_shape);
  for (std::size_t i = 0; i < d_out.size(); ++i) d_in.data[argmax[i]] += d_out.data[i];
  return d_in;
}

template <class T>
Tensor<T> relu_forward(const Tensor<T>& in) {
  Tensor<T> out = in;
  for (auto& v : out.data) v = v > T{} ? v : T{};
  return out;
}

template <class T>
Tensor<T> relu_backward(const Tensor<T>& in, const Tensor<T>& d_out) {
  Tensor<T> d_in = d_out;
  for (std::size_t i = 0; i < d_in.size(); ++i)
    if (!(in.data[i] > T{})) d_in.data[i] = T{};
  return d_in;
}

/// out = input^T W + b, with W stored N x M.
template <class T>
Tensor<T> dense_forward(const Tensor<T>& in, const Tensor<T>& weights, const Tensor<T>& bias) {
  if (in.shape.size() != 1 || weights.shape.size() != 2 || bias.shape.size() != 1 ||
      weights.shape[0] != in.shape[0] || weights.shape[1] != bias.shape[0])
    throw ShapeError("dense shapes incompatible: input " + shape_str(in.shape) + ", weights " +
                     shape_str(weights.shape) + ", bias " + shape_str(bias.shape));
  const std::size_t n = in.shape[0], m = bias.shape[0];
  Tensor<T> out({m}, bias.data);
  for (std::size_t i = 0; i < n; ++i) {
    const T v = in.data[i];
    if (v == T{}) continue;
    const T* row = &weights.data[i * m];
    for (std::size_t j = 0; j < m; ++j) out.data[j] += v * row[j];
  }
  return out;
}

template <class T>
struct DenseGrads {
  Tensor<T> d_input;
  Tensor<T> d_weights;
  Tensor<T> d_bias;
};

template <class T>
DenseGrads<T> dense_backward(const Tensor<T>& in, const Tensor<T>& weights, const Tensor<T>& d_out) {
  const std::size_t n = in.shape[0], m = weights.shape[1];
  if (d_out.shape != Shape{m}) throw ShapeError("dense gradient shape mismatch");
  DenseGrads<T> g{Tensor<T>({n}), Tensor<T>(weights.shape), d_out};
  for (std::size_t i = 0; i < n; ++i) {
    const T v = in.data[i];
    const T* row = &weights.data[i * m];
    T* grow = &g.d_weights.data[i * m];
    T acc{};
    for (std::size_t j = 0; j < m; ++j) {
      grow[j] = v * d_out.data[j];
      acc += row[j] * d_out.data[j];
    }
    g.d_input.data[i] = acc;
  }
  return g;
}

/// Numerically stable softmax (max subtraction).
template <class T>
Tensor<T> softmax(const Tensor<T>& logits) {
  if (logits.size() == 0) throw ShapeError("softmax of an empty tensor");
  for (T v : logits.data)
    if (std::isnan(v)) throw NumericError("NaN logit");
  const T mx = *std::max_element(logits.data.begin(), logits.data.end());
  Tensor<T> out(logits.shape);
  T sum{};
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out.data[i] = std::exp(logits.data[i] - mx);
    sum += out.data[i];
  }
  for (auto& v : out.data) v /= sum;
  return out;
}

inline constexpr double kLossEpsilon = 1e-12;

template <class T>
T sparse_ce_loss(const Tensor<T>& probs, int true_class) {
  if (true_class < 0 || static_cast<std::size_t>(true_class) >= probs.size())
    throw RangeError("class index " + std::to_string(true_class) + " out of range");
  const double p = static_cast<double>(probs.data[static_cast<std::size_t>(true_class)]);
  return static_cast<T>(std::max(0.0, -std::log(p + kLossEpsilon)));
}

/// Lowest index wins on ties.
template <class T>
int argmax(const Tensor<T>& v) {
  int best = 0;
  for (std::size_t i = 1; i < v.size(); ++i)
    if (v.data[i] > v.data[static_cast<std::size_t>(best)]) best = static_cast<int>(i);
  return best;
}

// ---------------------------------------------------------------------------
// Model

enum class LayerKind { conv2d, maxpool2, relu, flatten, dense };

struct LayerDescriptor {
  LayerKind kind;
  std::size_t units = 0;  // conv2d: output channels, dense: output units

  bool has_params() const { return kind == LayerKind::conv2d || kind == LayerKind::dense; }
  bool operator==(const LayerDescriptor&) const = default;
};

inline std::vector<LayerDescriptor> default_layers() {
  return {{LayerKind::conv2d, 8},   {LayerKind::relu},      {LayerKind::maxpool2},
          {LayerKind::conv2d, 16},  {LayerKind::relu},      {LayerKind::maxpool2},
          {LayerKind::flatten},     {LayerKind::dense, 32}, {LayerKind::relu},
          {LayerKind::dense, 3}};
}

/// Output shape after each layer; element 0 is the input shape.
inline std::vector<Shape> infer_shapes(const std::vector<LayerDescriptor>& layers, std::size_t side,
                                       std::size_t channels = 1) {
  std::vector<Shape> shapes{{side, side, channels}};
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const Shape& s = shapes.back();
    const std::string where = "layer " + std::to_string(i) + ": ";
    switch (layers[i].kind) {
      case LayerKind::conv2d:
        if (s.size() != 3) throw ShapeError(where + "conv2d needs an image input");
        if (layers[i].units == 0) throw ShapeError(where + "conv2d needs output channels");
        shapes.push_back({s[0], s[1], layers[i].units});
        break;
      case LayerKind::maxpool2:
        if (s.size() != 3 || s[0] % 2 || s[1] % 2) throw ShapeError(where + "maxpool2 needs even image dims");
        shapes.push_back({s[0] / 2, s[1] / 2, s[2]});
        break;
      case LayerKind::relu:
        shapes.push_back(s);
        break;
      case LayerKind::flatten:
        shapes.push_back({shape_size(s)});
        break;
      case LayerKind::dense:
        if (s.size() != 1) throw ShapeError(where + "dense needs a flat input");
        if (layers[i].units == 0) throw ShapeError(where + "dense needs output units");
        shapes.push_back({layers[i].units});
        break;
    }
  }
  return shapes;
}

template <class T>
struct BasicModel {
  std::vector<LayerDescriptor> layers;
  std::vector<Tensor<T>> params;       // weights then bias for every parameterized layer, in order
  std::vector<std::ptrdiff_t> param_at;  // per layer: index of its weight tensor, or -1
  InputConfig input{};                 // preprocessing the model was trained with
  int n_classes = kNumClasses;
  std::uint64_t generation = 0;        // bumped on every optimizer step

  std::size_t input_side() const { return input.side; }

  const Tensor<T>& weight(std::size_t layer) const { return params[static_cast<std::size_t>(param_at[layer])]; }
  const Tensor<T>& bias(std::size_t layer) const { return params[static_cast<std::size_t>(param_at[layer]) + 1]; }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& p : params) n += p.size();
    return n;
  }

  template <class U>
  BasicModel<U> cast() const {
    BasicModel<U> m;
    m.layers = layers;
    m.param_at = param_at;
    m.input = input;
    m.n_classes = n_classes;
    m.generation = generation;
    for (const auto& p : params) m.params.push_back(p.template cast<U>());
    return m;
  }

  /// Validates layer compatibility and that weight shapes match descriptors.
  void validate() const {
    const auto shapes = infer_shapes(layers, input.side);
    if (layers.empty() || layers.back().kind != LayerKind::dense ||
        layers.back().units != static_cast<std::size_t>(n_classes))
      throw ShapeError("final layer must be dense with " + std::to_string(n_classes) + " units");
    if (param_at.size() != layers.size()) throw ShapeError("parameter index does not match layers");
    std::size_t next = 0;
    for (std::size_t i = 0; i < layers.size(); ++i) {
      if (!layers[i].has_params()) {
        if (param_at[i] != -1) throw ShapeError("parameter-free layer has weights");
        continue;
      }
      if (param_at[i] != static_cast<std::ptrdiff_t>(next)) throw ShapeError("parameter index out of order");
      if (params.size() < next + 2) throw ShapeError("missing parameters for layer " + std::to_string(i));
      const Shape& in = shapes[i];
      const Shape w = layers[i].kind == LayerKind::conv2d ? Shape{3, 3, in[2], layers[i].units}
                                                           : Shape{in[0], layers[i].units};
      if (params[next].shape != w || params[next + 1].shape != Shape{layers[i].units})
        throw ShapeError("weight shape mismatch at layer " + std::to_string(i));
      next += 2;
    }
    if (next != params.size()) throw ShapeError("extra parameter tensors");
  }

  /// Equality ignores the optimizer generation counter.
  bool operator==(const BasicModel& o) const {
    return layers == o.layers && params == o.params && param_at == o.param_at && input == o.input &&
           n_classes == o.n_classes;
  }
};

using Model = BasicModel<float>;

/// Builds a model with He-uniform weights (limit sqrt(6 / fan_in)) and zero
/// biases from a seeded stream.
template <class T = float>
BasicModel<T> make_model(std::vector<LayerDescriptor> layers, const InputConfig& input, std::uint64_t seed) {
  BasicModel<T> m;
  m.layers = std::move(layers);
  m.input = input;
  const auto shapes = infer_shapes(m.layers, input.side);
  Rng rng(seed);
  for (std::size_t i = 0; i < m.layers.size(); ++i) {
    if (!m.layers[i].has_params()) {
      m.param_at.push_back(-1);
      continue;
    }
    m.param_at.push_back(static_cast<std::ptrdiff_t>(m.params.size()));
    const Shape& in = shapes[i];
    const std::size_t units = m.layers[i].units;
    Shape w_shape;
    std::size_t fan_in;
    if (m.layers[i].kind == LayerKind::conv2d) {
      w_shape = {3, 3, in[2], units};
      fan_in = 9 * in[2];
    } else {
      w_shape = {in[0], units};
      fan_in = in[0];
    }
    Tensor<T> w(w_shape);
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in));
    for (auto& v : w.data) v = static_cast<T>(rng.uniform(-limit, limit));
    m.params.push_back(std::move(w));
    m.params.push_back(Tensor<T>({units}));
  }
  m.validate();
  return m;
}

/// Per-spectrogram standardization to zero mean and unit variance. A flat
/// spectrogram maps to all zeros.
template <class T = float>
Tensor<T> spectrogram_to_tensor(const Spectrogram& spec) {
  Tensor<T> t({spec.rows(), spec.cols(), 1});
  const auto& v = spec.values.data;
  if (v.empty()) return t;
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  double var = 0.0;
  for (double x : v) var += (x - mean) * (x - mean);
  const double sd = std::sqrt(var / static_cast<double>(v.size()));
  const double inv = sd > 1e-9 ? 1.0 / sd : 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) t.data[i] = static_cast<T>((v[i] - mean) * inv);
  return t;
}

// ---------------------------------------------------------------------------
// Forward / backward

template <class T>
struct ForwardCache {
  std::vector<Tensor<T>> activations;               // activations[i] is the input to layer i
  std::vector<std::vector<std::uint32_t>> argmax;  // per layer, maxpool only
  Tensor<T> probs;
  const void* model = nullptr;
  std::uint64_t generation = 0;

  const Tensor<T>& logits() const { return activations.back(); }

  /// ReLU on/off mask and pooling winners; identical patterns mean the
  /// network is in the same linear region.
  std::vector<std::uint32_t> activation_pattern(const BasicModel<T>& m) const {
    std::vector<std::uint32_t> pattern;
    for (std::size_t i = 0; i < m.layers.size(); ++i) {
      if (m.layers[i].kind == LayerKind::relu) {
        for (T v : activations[i].data) pattern.push_back(v > T{} ? 1u : 0u);
      } else if (m.layers[i].kind == LayerKind::maxpool2) {
        pattern.insert(pattern.end(), argmax[i].begin(), argmax[i].end());
      }
    }
    return pattern;
  }
};

template <class T>
struct ForwardResult {
  Tensor<T> probs;
  ForwardCache<T> cache;
};

template <class T>
ForwardResult<T> forward(const BasicModel<T>& model, const Tensor<T>& input) {
  const Shape expected{model.input.side, model.input.side, 1};
  if (input.shape != expected)
    throw ShapeError("model expects input " + shape_str(expected) + ", got " + shape_str(input.shape));

  ForwardCache<T> cache;
  cache.model = &model;
  cache.generation = model.generation;
  cache.activations.reserve(model.layers.size() + 1);
  cache.argmax.resize(model.layers.size());
  cache.activations.push_back(input);
  for (std::size_t i = 0; i < model.layers.size(); ++i) {
    const Tensor<T>& x = cache.activations.back();
    Tensor<T> y;
    switch (model.layers[i].kind) {
      case LayerKind::conv2d: y = conv2d_forward(x, model.weight(i), model.bias(i)); break;
      case LayerKind::maxpool2: {
        auto r = maxpool2_forward(x);
        y = std::move(r.out);
        cache.argmax[i] = std::move(r.argmax);
        break;
      }
      case LayerKind::relu: y = relu_forward(x); break;
      case LayerKind::flatten: y = Tensor<T>({x.size()}, x.data); break;
      case LayerKind::dense: y = dense_forward(x, model.weight(i), model.bias(i)); break;
    }
    cache.activations.push_back(std::move(y));
  }
  cache.probs = softmax(cache.activations.back());
  return {cache.probs, std::move(cache)};
}

template <class T>
ForwardResult<T> forward(const BasicModel<T>& model, const Spectrogram& input) {
  return forward(model, spectrogram_to_tensor<T>(input));
}

template <class T>
struct Gradients {
  std::vector<Tensor<T>> params;  // aligned with BasicModel::params
  Tensor<T> logits;
};

template <class T>
Gradients<T> zero_gradients(const BasicModel<T>& model) {
  Gradients<T> g;
  for (const auto& p : model.params) g.params.emplace_back(p.shape);
  return g;
}

/// Gradient of the sparse cross-entropy loss with respect to every parameter.
template <class T>
Gradients<T> backward(const BasicModel<T>& model, const ForwardCache<T>& cache, int true_class) {
  if (cache.model != &model || cache.generation != model.generation ||
      cache.activations.size() != model.layers.size() + 1)
    throw StateError("forward cache does not belong to this model state");
  if (true_class < 0 || true_class >= static_cast<int>(cache.probs.size()))
    throw RangeError("class index " + std::to_string(true_class) + " out of range");

  Gradients<T> g = zero_gradients(model);
  Tensor<T> delta = cache.probs;
  delta.data[static_cast<std::size_t>(true_class)] -= T{1};
  g.logits = delta;

  for (std::size_t li = model.layers.size(); li-- > 0;) {
    const Tensor<T>& x = cache.activations[li];
    switch (model.layers[li].kind) {
      case LayerKind::conv2d: {
        auto cg = conv2d_backward(x, model.weight(li), delta);
        const auto at = static_cast<std::size_t>(model.param_at[li]);
        g.params[at] = std::move(cg.d_kernel);
        g.params[at + 1] = std::move(cg.d_bias);
        delta = std::move(cg.d_input);
        break;
      }
      case LayerKind::maxpool2: delta = maxpool2_backward(delta, cache.argmax[li], x.shape); break;
      case LayerKind::relu: delta = relu_backward(x, delta); break;
      case LayerKind::flatten: delta = Tensor<T>(x.shape, std::move(delta.data)); break;
      case LayerKind::dense: {
        auto dg = dense_backward(x, model.weight(li), delta);
        const auto at = static_cast<std::size_t>(model.param_at[li]);
        g.params[at] = std::move(dg.d_weights);
        g.params[at + 1] = std::move(dg.d_bias);
        delta = std::move(dg.d_input);
        break;
      }
    }
  }
  return g;
}

// ---------------------------------------------------------------------------
// Adam

template <class T>
struct AdamState {
  std::vector<Tensor<T>> m;
  std::vector<Tensor<T>> v;
  std::uint64_t t = 0;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// One bias-corrected Adam update. Moments are created on the first call.
template <class T>
void adam_step(std::vector<Tensor<T>>& params, const std::vector<Tensor<T>>& grads, AdamState<T>& st) {
  if (grads.size() != params.size()) throw ShapeError("gradient count does not match parameters");
  if (!(st.beta1 >= 0.0 && st.beta1 < 1.0 && st.beta2 >= 0.0 && st.beta2 < 1.0))
    throw RangeError("Adam betas must be in [0, 1)");
  if (st.m.empty()) {
    for (const auto& p : params) {
      st.m.emplace_back(p.shape);
      st.v.emplace_back(p.shape);
    }
  }
  if (st.m.size() != params.size()) throw ShapeError("optimizer state does not match parameters");
  for (std::size_t i = 0; i < params.size(); ++i)
    if (grads[i].shape != params[i].shape || st.m[i].shape != params[i].shape)
      throw ShapeError("gradient shape mismatch for parameter " + std::to_string(i));

  st.t += 1;
  const double bc1 = 1.0 - std::pow(st.beta1, static_cast<double>(st.t));
  const double bc2 = 1.0 - std::pow(st.beta2, static_cast<double>(st.t));
  const T b1 = static_cast<T>(st.beta1), b2 = static_cast<T>(st.beta2);
  const T one_b1 = static_cast<T>(1.0 - st.beta1), one_b2 = static_cast<T>(1.0 - st.beta2);
  const T step = static_cast<T>(st.lr / bc1);
  const T inv_bc2 = static_cast<T>(1.0 / bc2);
  const T eps = static_cast<T>(st.eps);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i].data;
    auto& m = st.m[i].data;
    auto& v = st.v[i].data;
    const auto& g = grads[i].data;
    for (std::size_t j = 0; j < p.size(); ++j) {
      m[j] = b1 * m[j] + one_b1 * g[j];
      v[j] = b2 * v[j] + one_b2 * g[j] * g[j];
      p[j] -= step * m[j] / (std::sqrt(v[j] * inv_bc2) + eps);
    }
  }
}

template <class T>
void apply_adam(BasicModel<T>& model, const Gradients<T>& grads, AdamState<T>& st) {
  adam_step(model.params, grads.params, st);
  ++model.generation;
}

// ---------------------------------------------------------------------------
// Gradient verification

/// Max relative error between backprop and central differences (h = 1e-4),
/// evaluated in double precision. Parameters whose +-h perturbation moves the
/// network across a ReLU or pooling boundary are skipped, since the loss is
/// not differentiable there. max_per_tensor = 0 checks every parameter.
template <class T>
double gradient_check(const BasicModel<T>& model, const Tensor<T>& input, int true_class,
                      std::size_t max_per_tensor = 0, std::uint64_t sample_seed = 0) {
  constexpr double h = 1e-4;
  BasicModel<double> m = model.template cast<double>();
  const Tensor<double> x = input.template cast<double>();

  const auto base = forward(m, x);
  const auto analytic = backward(m, base.cache, true_class);
  const auto base_pattern = base.cache.activation_pattern(m);

  auto loss_at = [&](std::vector<std::uint32_t>& pattern) {
    auto r = forward(m, x);
    pattern = r.cache.activation_pattern(m);
    return sparse_ce_loss(r.probs, true_class);
  };

  Rng rng(sample_seed);
  double worst = 0.0;
  for (std::size_t pi = 0; pi < m.params.size(); ++pi) {
    auto& p = m.params[pi].data;
    std::vector<std::size_t> which(p.size());
    std::iota(which.begin(), which.end(), std::size_t{0});
    if (max_per_tensor != 0 && which.size() > max_per_tensor) {
      for (std::size_t i = 0; i < max_per_tensor; ++i)
        std::swap(which[i], which[i + rng.below(which.size() - i)]);
      which.resize(max_per_tensor);
    }
    for (std::size_t j : which) {
      const double saved = p[j];
      std::vector<std::uint32_t> pat_plus, pat_minus;
      p[j] = saved + h;
      const double lp = loss_at(pat_plus);
      p[j] = saved - h;
      const double lm = loss_at(pat_minus);
      p[j] = saved;
      if (pat_plus != base_pattern || pat_minus != base_pattern) continue;
      const double numeric = (lp - lm) / (2.0 * h);
      const double exact = analytic.params[pi].data[j];
      const double denom = std::max({std::abs(exact), std::abs(numeric), 1e-8});
      worst = std::max(worst, std::abs(exact - numeric) / denom);
    }
  }
  return worst;
}

}  // namespace dopphase::nn
