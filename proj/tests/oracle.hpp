#pragma once

// Reference implementations used to cross-check the library. Written for
// clarity, not speed, and independent of the code under test.

#include <cmath>
#include <random>
#include <vector>

#include "tlc/tensor_nn.hpp"

namespace oracle {

using tlc::nn::LayerChain;
using tlc::nn::LayerKind;
using tlc::nn::NetworkParams;
using tlc::nn::Tensor;

// Direct-sum evaluation of a layer chain on a flat buffer.
inline std::vector<double> evaluate(const NetworkParams& params, const LayerChain& specs, std::vector<double> x,
                                    std::vector<std::size_t> shape) {
  for (std::size_t i = 0; i < specs.size(); ++i) {
    const auto& s = specs[i];
    const auto& p = params.layers[i];
    if (s.kind == LayerKind::dense) {
      std::vector<double> y(s.out_features);
      for (std::size_t o = 0; o < s.out_features; ++o) {
        double acc = p.bias.data[o];
        for (std::size_t k = 0; k < s.in_features; ++k) acc += p.weight.data[o * s.in_features + k] * x[k];
        y[o] = acc;
      }
      x = y;
      shape = {s.out_features};
    } else if (s.kind == LayerKind::conv2d) {
      const std::size_t C = shape[0], H = shape[1], W = shape[2];
      const std::size_t Ho = (H - s.kernel_h) / s.stride + 1, Wo = (W - s.kernel_w) / s.stride + 1;
      std::vector<double> y(s.out_channels * Ho * Wo);
      for (std::size_t oc = 0; oc < s.out_channels; ++oc)
        for (std::size_t oy = 0; oy < Ho; ++oy)
          for (std::size_t ox = 0; ox < Wo; ++ox) {
            double acc = p.bias.data[oc];
            for (std::size_t ic = 0; ic < C; ++ic)
              for (std::size_t ky = 0; ky < s.kernel_h; ++ky)
                for (std::size_t kx = 0; kx < s.kernel_w; ++kx) {
                  const double w = p.weight.data[((oc * C + ic) * s.kernel_h + ky) * s.kernel_w + kx];
                  acc += w * x[(ic * H + oy * s.stride + ky) * W + ox * s.stride + kx];
                }
            y[(oc * Ho + oy) * Wo + ox] = acc;
          }
      x = y;
      shape = {s.out_channels, Ho, Wo};
    } else if (s.kind == LayerKind::relu) {
      for (auto& v : x) v = v > 0.0 ? v : 0.0;
    } else {
      shape = {x.size()};
    }
  }
  return x;
}

inline double half_squared_error(const std::vector<double>& y, const std::vector<double>& t) {
  double s = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) s += 0.5 * (y[i] - t[i]) * (y[i] - t[i]);
  return s;
}

inline double mean_squared_error(const std::vector<double>& y, const std::vector<double>& t) {
  double s = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) s += (y[i] - t[i]) * (y[i] - t[i]);
  return s / static_cast<double>(y.size());
}

// Central-difference derivative of the mean squared error with respect to
// one parameter entry.
inline double numeric_gradient(NetworkParams params, const LayerChain& specs, const Tensor& input,
                               const std::vector<double>& target, std::size_t layer, bool bias, std::size_t index,
                               double h) {
  auto& v = bias ? params.layers[layer].bias.data : params.layers[layer].weight.data;
  const double saved = v[index];
  v[index] = saved + h;
  const double up = mean_squared_error(evaluate(params, specs, input.data, input.shape), target);
  v[index] = saved - h;
  const double down = mean_squared_error(evaluate(params, specs, input.data, input.shape), target);
  return (up - down) / (2.0 * h);
}

inline Tensor random_tensor(std::vector<std::size_t> shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(shape));
  std::uniform_real_distribution<double> u(lo, hi);
  for (auto& v : t.data) v = u(rng);
  return t;
}

// Draws inputs until every relu pre-activation is at least `margin` from 0.
inline Tensor kink_free_input(const NetworkParams& params, const LayerChain& specs, std::vector<std::size_t> shape,
                              std::mt19937_64& rng, double margin = 1e-3) {
  for (int attempt = 0; attempt < 10000; ++attempt) {
    auto x = random_tensor(shape, rng);
    if (tlc::nn::min_relu_margin(params, specs, x) >= margin) return x;
  }
  return random_tensor(shape, rng);
}

}  // namespace oracle
