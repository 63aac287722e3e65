// Copyright 2026 The mmvae Authors
// SPDX-License-Identifier: Apache-2.0

// Small dense-network algebra: tensors, affine+activation layers with
// analytic reverse-mode gradients, a central-difference gradient oracle, and
// Adam. Everything is float64 and single-threaded.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <concepts>
#include <cstdint>
#include <functional>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "json.hpp"
#include "mmvae/rng.hpp"

namespace mmvae {

class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(std::vector<std::size_t> shape, double fill = 0.0)
      : shape_(std::move(shape)), data_(element_count(shape_), fill) {}

  Tensor(std::vector<std::size_t> shape, std::vector<double> data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    if (data_.size() != element_count(shape_)) {
      throw std::invalid_argument("Tensor: data length does not match shape");
    }
  }

  static Tensor vector(std::vector<double> values) {
    const std::size_t n = values.size();
    return Tensor({n}, std::move(values));
  }

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }

  /// Leading extent for rank-2 tensors, 1 for vectors.
  std::size_t rows() const { return rank() == 2 ? shape_[0] : 1; }
  std::size_t cols() const { return shape_.empty() ? 0 : shape_.back(); }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }
  double& at(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
  double at(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }

  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }
  std::span<const double> row(std::size_t r) const { return std::span<const double>(data_).subspan(r * cols(), cols()); }
  std::span<double> row(std::size_t r) { return std::span<double>(data_).subspan(r * cols(), cols()); }
  const std::vector<double>& data() const { return data_; }

  bool all_finite() const {
    for (double v : data_) {
      if (!std::isfinite(v)) return false;
    }
    return true;
  }

  bool operator==(const Tensor&) const = default;

 private:
  static std::size_t element_count(const std::vector<std::size_t>& shape) {
    if (shape.empty()) return 0;
    std::size_t n = 1;
    for (std::size_t d : shape) {
      if (d == 0) throw std::invalid_argument("Tensor: shape extents must be positive");
      n *= d;
    }
    return n;
  }

  std::vector<std::size_t> shape_;
  std::vector<double> data_;
};

enum class Activation { identity, relu, tanh };

inline std::string_view to_string(Activation a) {
  switch (a) {
    case Activation::identity: return "identity";
    case Activation::relu: return "relu";
    case Activation::tanh: return "tanh";
  }
  return "?";
}

inline Activation parse_activation(std::string_view s) {
  if (s == "identity") return Activation::identity;
  if (s == "relu") return Activation::relu;
  if (s == "tanh") return Activation::tanh;
  throw std::invalid_argument("unknown activation '" + std::string(s) + "'");
}

struct DenseLayer {
  Tensor weight;  // (out, in)
  Tensor bias;    // (out)
  Activation activation = Activation::identity;

  std::size_t in_dim() const { return weight.shape().at(1); }
  std::size_t out_dim() const { return weight.shape().at(0); }
  bool operator==(const DenseLayer&) const = default;
};

struct DenseNet {
  std::vector<DenseLayer> layers;

  std::size_t in_dim() const { return layers.front().in_dim(); }
  std::size_t out_dim() const { return layers.back().out_dim(); }
  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : layers) n += l.weight.size() + l.bias.size();
    return n;
  }

  void validate() const {
    if (layers.empty()) throw std::invalid_argument("DenseNet: no layers");
    for (std::size_t i = 0; i < layers.size(); ++i) {
      const auto& l = layers[i];
      if (l.weight.rank() != 2 || l.bias.rank() != 1 || l.bias.size() != l.out_dim()) {
        throw std::invalid_argument("DenseNet: malformed layer " + std::to_string(i));
      }
      if (i + 1 < layers.size() && l.out_dim() != layers[i + 1].in_dim()) {
        throw std::invalid_argument("DenseNet: layer " + std::to_string(i) + " does not chain");
      }
    }
  }

  bool operator==(const DenseNet&) const = default;
};

/// Activation record for one forward call. Holds each layer's input and
/// post-activation output, plus the net's layer dimensions for staleness checks.
struct ForwardCache {
  const DenseNet* net = nullptr;
  std::vector<std::pair<std::size_t, std::size_t>> dims;
  std::vector<Tensor> inputs;
  std::vector<Tensor> outputs;
};

struct LayerGradient {
  Tensor weight;
  Tensor bias;
};

struct NetGradient {
  std::vector<LayerGradient> layers;
  Tensor input;
};

namespace detail {

inline double activate(Activation a, double x) {
  switch (a) {
    case Activation::identity: return x;
    case Activation::relu: return x > 0.0 ? x : 0.0;
    case Activation::tanh: return std::tanh(x);
  }
  return x;
}

// Derivative expressed through the activation's output y.
inline double activation_slope(Activation a, double y) {
  switch (a) {
    case Activation::identity: return 1.0;
    case Activation::relu: return y > 0.0 ? 1.0 : 0.0;
    case Activation::tanh: return 1.0 - y * y;
  }
  return 1.0;
}

}  // namespace detail

/// Rank-1 input (in) or rank-2 batch (rows, in). The output has the same rank.
inline std::pair<Tensor, ForwardCache> forward(const DenseNet& net, const Tensor& input) {
  if (net.layers.empty()) throw std::invalid_argument("forward: empty net");
  if ((input.rank() != 1 && input.rank() != 2) || input.cols() != net.in_dim()) {
    throw std::invalid_argument("forward: input shape does not match first layer (expected " +
                                std::to_string(net.in_dim()) + " columns)");
  }
  ForwardCache cache;
  cache.net = &net;
  const std::size_t rows = input.rows();
  Tensor x = input;
  for (const auto& layer : net.layers) {
    const std::size_t in = layer.in_dim();
    const std::size_t out = layer.out_dim();
    cache.dims.emplace_back(out, in);
    Tensor y = input.rank() == 1 ? Tensor({out}) : Tensor({rows, out});
    for (std::size_t r = 0; r < rows; ++r) {
      const auto xr = x.row(r);
      auto yr = y.row(r);
      for (std::size_t o = 0; o < out; ++o) {
        const auto w = layer.weight.row(o);
        double acc = layer.bias[o];
        for (std::size_t i = 0; i < in; ++i) acc += w[i] * xr[i];
        yr[o] = detail::activate(layer.activation, acc);
      }
    }
    cache.inputs.push_back(std::move(x));
    x = y;
    cache.outputs.push_back(std::move(y));
  }
  return {std::move(x), std::move(cache)};
}

inline Tensor predict(const DenseNet& net, const Tensor& input) { return forward(net, input).first; }

inline std::vector<double> predict(const DenseNet& net, std::span<const double> input) {
  return predict(net, Tensor::vector({input.begin(), input.end()})).data();
}

/// Exact gradients of the cached forward map, summed over batch rows.
inline NetGradient backward(const DenseNet& net, const ForwardCache& cache, const Tensor& output_gradient) {
  if (cache.net != &net || cache.dims.size() != net.layers.size()) {
    throw std::invalid_argument("backward: cache was produced by a different net");
  }
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    if (cache.dims[l] != std::make_pair(net.layers[l].out_dim(), net.layers[l].in_dim())) {
      throw std::invalid_argument("backward: stale cache (layer dimensions changed)");
    }
  }
  if (output_gradient.shape() != cache.outputs.back().shape()) {
    throw std::invalid_argument("backward: output gradient shape mismatch");
  }
  NetGradient g;
  g.layers.resize(net.layers.size());
  Tensor upstream = output_gradient;
  for (std::size_t l = net.layers.size(); l-- > 0;) {
    const auto& layer = net.layers[l];
    const Tensor& x = cache.inputs[l];
    const Tensor& y = cache.outputs[l];
    const std::size_t in = layer.in_dim();
    const std::size_t out = layer.out_dim();
    const std::size_t rows = x.rows();
    LayerGradient lg{Tensor({out, in}), Tensor({out})};
    Tensor down = x.rank() == 1 ? Tensor({in}) : Tensor({rows, in});
    for (std::size_t r = 0; r < rows; ++r) {
      const auto xr = x.row(r);
      const auto yr = y.row(r);
      const auto ur = upstream.row(r);
      auto dr = down.row(r);
      for (std::size_t o = 0; o < out; ++o) {
        const double delta = ur[o] * detail::activation_slope(layer.activation, yr[o]);
        if (delta == 0.0) continue;
        lg.bias[o] += delta;
        auto gw = lg.weight.row(o);
        const auto w = layer.weight.row(o);
        for (std::size_t i = 0; i < in; ++i) {
          gw[i] += delta * xr[i];
          dr[i] += delta * w[i];
        }
      }
    }
    g.layers[l] = std::move(lg);
    upstream = std::move(down);
  }
  g.input = std::move(upstream);
  return g;
}

inline NetGradient zero_gradient(const DenseNet& net) {
  NetGradient g;
  for (const auto& l : net.layers) g.layers.push_back({Tensor(l.weight.shape()), Tensor(l.bias.shape())});
  g.input = Tensor({net.in_dim()});
  return g;
}

/// into += scale * g (parameter parts only).
inline void accumulate(NetGradient& into, const NetGradient& g, double scale = 1.0) {
  for (std::size_t l = 0; l < into.layers.size(); ++l) {
    auto dw = into.layers[l].weight.values();
    auto sw = g.layers[l].weight.values();
    for (std::size_t i = 0; i < dw.size(); ++i) dw[i] += scale * sw[i];
    auto db = into.layers[l].bias.values();
    auto sb = g.layers[l].bias.values();
    for (std::size_t i = 0; i < db.size(); ++i) db[i] += scale * sb[i];
  }
}

/// Layer-major order: weights then bias for each layer.
inline std::vector<double> flatten(const DenseNet& net) {
  std::vector<double> out;
  out.reserve(net.parameter_count());
  for (const auto& l : net.layers) {
    out.insert(out.end(), l.weight.data().begin(), l.weight.data().end());
    out.insert(out.end(), l.bias.data().begin(), l.bias.data().end());
  }
  return out;
}

inline std::vector<double> flatten(const NetGradient& g) {
  std::vector<double> out;
  for (const auto& l : g.layers) {
    out.insert(out.end(), l.weight.data().begin(), l.weight.data().end());
    out.insert(out.end(), l.bias.data().begin(), l.bias.data().end());
  }
  return out;
}

/// Inverse of flatten; returns the number of values consumed.
inline std::size_t assign(DenseNet& net, std::span<const double> values) {
  std::size_t k = 0;
  for (auto& l : net.layers) {
    for (auto* t : {&l.weight, &l.bias}) {
      if (k + t->size() > values.size()) throw std::invalid_argument("assign: too few values");
      std::copy_n(values.begin() + static_cast<std::ptrdiff_t>(k), t->size(), t->values().begin());
      k += t->size();
    }
  }
  return k;
}

inline std::vector<Tensor*> parameter_tensors(DenseNet& net) {
  std::vector<Tensor*> out;
  for (auto& l : net.layers) {
    out.push_back(&l.weight);
    out.push_back(&l.bias);
  }
  return out;
}

inline std::vector<const Tensor*> gradient_tensors(const NetGradient& g) {
  std::vector<const Tensor*> out;
  for (const auto& l : g.layers) {
    out.push_back(&l.weight);
    out.push_back(&l.bias);
  }
  return out;
}

/// Central differences (f(p + h e_i) - f(p - h e_i)) / 2h for every coordinate.
inline std::vector<double> finite_diff_grad(const std::function<double(std::span<const double>)>& f,
                                            std::span<const double> params, double step) {
  if (!(step > 0.0)) throw std::invalid_argument("finite_diff_grad: step must be positive");
  std::vector<double> p(params.begin(), params.end());
  std::vector<double> grad(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double orig = p[i];
    p[i] = orig + step;
    const double up = f(p);
    p[i] = orig - step;
    const double down = f(p);
    p[i] = orig;
    grad[i] = (up - down) / (2.0 * step);
  }
  return grad;
}

/// Central differences with the loss evaluated in precision T. At a fixed step
/// the rounding error of a 64-bit loss is about eps * |f| / h, which swamps
/// gradient components below ~1e-6; long double pushes that floor down by ~2000x.
template <std::floating_point T>
std::vector<double> finite_diff_grad_as(const std::function<T(std::span<const T>)>& f,
                                        std::span<const double> params, double step) {
  if (!(step > 0.0)) throw std::invalid_argument("finite_diff_grad: step must be positive");
  std::vector<T> p(params.begin(), params.end());
  std::vector<double> grad(p.size());
  const T h = static_cast<T>(step);
  for (std::size_t i = 0; i < p.size(); ++i) {
    const T orig = p[i];
    p[i] = orig + h;
    const T up = f(p);
    p[i] = orig - h;
    const T down = f(p);
    p[i] = orig;
    grad[i] = static_cast<double>((up - down) / (2 * h));
  }
  return grad;
}

/// Forward pass in precision T with parameters supplied in flatten() order.
template <std::floating_point T>
std::vector<T> predict_flat(const DenseNet& net, std::span<const T> params, std::span<const T> input) {
  if (params.size() < net.parameter_count()) throw std::invalid_argument("predict_flat: too few parameters");
  if (input.size() != net.in_dim()) throw std::invalid_argument("predict_flat: input dimension mismatch");
  std::vector<T> x(input.begin(), input.end());
  std::size_t k = 0;
  for (const auto& layer : net.layers) {
    const std::size_t in = layer.in_dim();
    const std::size_t out = layer.out_dim();
    const T* w = params.data() + k;
    const T* b = w + out * in;
    k += out * in + out;
    std::vector<T> y(out);
    for (std::size_t o = 0; o < out; ++o) {
      T acc = b[o];
      for (std::size_t i = 0; i < in; ++i) acc += w[o * in + i] * x[i];
      switch (layer.activation) {
        case Activation::identity: y[o] = acc; break;
        case Activation::relu: y[o] = acc > 0 ? acc : T(0); break;
        case Activation::tanh: y[o] = std::tanh(acc); break;
      }
    }
    x = std::move(y);
  }
  return x;
}

/// Largest |a - b| / max(|a|, |b|) over coordinates where max(|a|, |b|) > floor.
inline double max_relative_error(std::span<const double> a, std::span<const double> b, double floor = 1e-8) {
  if (a.size() != b.size()) throw std::invalid_argument("max_relative_error: length mismatch");
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double scale = std::max(std::abs(a[i]), std::abs(b[i]));
    if (scale > floor) worst = std::max(worst, std::abs(a[i] - b[i]) / scale);
  }
  return worst;
}

struct AdamConfig {
  double learning_rate = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  AdamConfig config;
  std::int64_t step = 0;
  std::vector<Tensor> first_moment;
  std::vector<Tensor> second_moment;
};

inline AdamState make_adam_state(std::span<Tensor* const> params, AdamConfig config = {}) {
  AdamState s;
  s.config = config;
  for (const Tensor* p : params) {
    s.first_moment.emplace_back(p->shape());
    s.second_moment.emplace_back(p->shape());
  }
  return s;
}

/// Bias-corrected Adam descent step on `params` given `grads` of the loss.
inline void adam_step(AdamState& state, std::span<Tensor* const> params, std::span<const Tensor* const> grads) {
  if (params.size() != grads.size() || params.size() != state.first_moment.size()) {
    throw std::invalid_argument("adam_step: parameter/gradient/state count mismatch");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i]->shape() != grads[i]->shape() || params[i]->shape() != state.first_moment[i].shape()) {
      throw std::invalid_argument("adam_step: shape mismatch at tensor " + std::to_string(i));
    }
  }
  const auto& c = state.config;
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double correct1 = 1.0 - std::pow(c.beta1, t);
  const double correct2 = 1.0 - std::pow(c.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto p = params[i]->values();
    auto g = grads[i]->values();
    auto m = state.first_moment[i].values();
    auto v = state.second_moment[i].values();
    for (std::size_t k = 0; k < p.size(); ++k) {
      m[k] = c.beta1 * m[k] + (1.0 - c.beta1) * g[k];
      v[k] = c.beta2 * v[k] + (1.0 - c.beta2) * g[k] * g[k];
      const double m_hat = m[k] / correct1;
      const double v_hat = v[k] / correct2;
      p[k] -= c.learning_rate * m_hat / (std::sqrt(v_hat) + c.epsilon);
    }
  }
}

/// Weights i.i.d. N(0, 1/fan_in), biases zero.
inline DenseNet init_net(std::span<const std::size_t> layer_dims, std::span<const Activation> activations,
                         std::uint64_t seed) {
  if (layer_dims.size() < 2 || activations.size() + 1 != layer_dims.size()) {
    throw std::invalid_argument("init_net: need n+1 dims for n activations");
  }
  Rng rng(seed);
  DenseNet net;
  for (std::size_t l = 0; l + 1 < layer_dims.size(); ++l) {
    const std::size_t in = layer_dims[l];
    const std::size_t out = layer_dims[l + 1];
    if (in == 0 || out == 0) throw std::invalid_argument("init_net: dims must be positive");
    DenseLayer layer{Tensor({out, in}), Tensor({out}), activations[l]};
    const double scale = 1.0 / std::sqrt(static_cast<double>(in));
    for (double& w : layer.weight.values()) w = scale * rng.normal();
    net.layers.push_back(std::move(layer));
  }
  return net;
}

/// Hidden layers share one activation; the output layer is linear.
inline DenseNet init_mlp(std::size_t in, std::span<const std::size_t> hidden, std::size_t out,
                         Activation hidden_activation, std::uint64_t seed) {
  std::vector<std::size_t> dims{in};
  dims.insert(dims.end(), hidden.begin(), hidden.end());
  dims.push_back(out);
  std::vector<Activation> acts(hidden.size(), hidden_activation);
  acts.push_back(Activation::identity);
  return init_net(dims, acts, seed);
}

inline void to_json(nlohmann::json& j, const DenseNet& net) {
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& l : net.layers) {
    layers.push_back({{"in", l.in_dim()},
                      {"out", l.out_dim()},
                      {"activation", std::string(to_string(l.activation))},
                      {"weight", l.weight.data()},
                      {"bias", l.bias.data()}});
  }
  j = {{"format", "mmvae.densenet"}, {"version", 1}, {"layers", layers}};
}

inline void from_json(const nlohmann::json& j, DenseNet& net) {
  if (j.value("format", "") != "mmvae.densenet" || j.value("version", 0) != 1) {
    throw std::runtime_error("checkpoint: not an mmvae.densenet v1 record");
  }
  net.layers.clear();
  for (const auto& lj : j.at("layers")) {
    const auto in = lj.at("in").get<std::size_t>();
    const auto out = lj.at("out").get<std::size_t>();
    DenseLayer layer{Tensor({out, in}, lj.at("weight").get<std::vector<double>>()),
                     Tensor({out}, lj.at("bias").get<std::vector<double>>()),
                     parse_activation(lj.at("activation").get<std::string>())};
    net.layers.push_back(std::move(layer));
  }
  net.validate();
}

}  // namespace mmvae
