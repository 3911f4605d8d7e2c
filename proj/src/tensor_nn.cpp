#include "tlc/tensor_nn.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>

namespace tlc::nn {

std::size_t element_count(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_string(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

Tensor::Tensor(Shape s, double fill) : shape(std::move(s)), data(element_count(shape), fill) {}

Tensor::Tensor(Shape s, std::vector<double> values) : shape(std::move(s)), data(std::move(values)) {
  if (data.size() != element_count(shape)) {
    throw InvalidArgument("tensor data length " + std::to_string(data.size()) + " does not match shape " +
                          shape_string(shape));
  }
}

ShapeError::ShapeError(std::size_t layer, const std::string& what)
    : Error("layer " + std::to_string(layer) + ": " + what), layer_(layer) {}

std::string to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::dense: return "dense";
    case LayerKind::conv2d: return "conv2d";
    case LayerKind::relu: return "relu";
    case LayerKind::flatten: return "flatten";
  }
  return "?";
}

LayerSpec LayerSpec::dense(std::size_t in, std::size_t out) {
  LayerSpec s;
  s.kind = LayerKind::dense;
  s.in_features = in;
  s.out_features = out;
  return s;
}

LayerSpec LayerSpec::conv2d(std::size_t in_channels, std::size_t out_channels, std::size_t kernel_h,
                            std::size_t kernel_w, std::size_t stride) {
  LayerSpec s;
  s.kind = LayerKind::conv2d;
  s.in_channels = in_channels;
  s.out_channels = out_channels;
  s.kernel_h = kernel_h;
  s.kernel_w = kernel_w;
  s.stride = stride;
  return s;
}

LayerSpec LayerSpec::relu() { return LayerSpec{}; }

LayerSpec LayerSpec::flatten() {
  LayerSpec s;
  s.kind = LayerKind::flatten;
  return s;
}

std::size_t NetworkParams::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers) n += l.weight.size() + l.bias.size();
  return n;
}

std::vector<Shape> infer_shapes(const LayerChain& specs, const Shape& input) {
  std::vector<Shape> shapes;
  shapes.reserve(specs.size());
  Shape cur = input;
  for (std::size_t i = 0; i < specs.size(); ++i) {
    const auto& s = specs[i];
    switch (s.kind) {
      case LayerKind::dense:
        if (cur.size() != 1 || cur[0] != s.in_features) {
          throw ShapeError(i, "dense expects [" + std::to_string(s.in_features) + "], got " + shape_string(cur));
        }
        if (s.out_features == 0) throw ShapeError(i, "dense with zero outputs");
        cur = {s.out_features};
        break;
      case LayerKind::conv2d: {
        if (cur.size() != 3 || cur[0] != s.in_channels) {
          throw ShapeError(i, "conv2d expects [" + std::to_string(s.in_channels) + ",H,W], got " +
                                  shape_string(cur));
        }
        if (s.stride == 0 || s.kernel_h == 0 || s.kernel_w == 0 || s.out_channels == 0) {
          throw ShapeError(i, "conv2d with zero-sized kernel, stride or channel count");
        }
        if (cur[1] < s.kernel_h || cur[2] < s.kernel_w) {
          throw ShapeError(i, "conv2d kernel larger than input " + shape_string(cur));
        }
        cur = {s.out_channels, (cur[1] - s.kernel_h) / s.stride + 1, (cur[2] - s.kernel_w) / s.stride + 1};
        break;
      }
      case LayerKind::relu:
        break;
      case LayerKind::flatten:
        cur = {element_count(cur)};
        break;
    }
    shapes.push_back(cur);
  }
  return shapes;
}

NetworkParams init_params(const LayerChain& specs, const Shape& input, std::mt19937_64& rng) {
  const auto shapes = infer_shapes(specs, input);
  NetworkParams params;
  params.layers.resize(specs.size());
  for (std::size_t i = 0; i < specs.size(); ++i) {
    const auto& s = specs[i];
    auto& p = params.layers[i];
    double fan_in = 0.0;
    double fan_out = 0.0;
    if (s.kind == LayerKind::dense) {
      p.weight = Tensor({s.out_features, s.in_features});
      p.bias = Tensor({s.out_features});
      fan_in = static_cast<double>(s.in_features);
      fan_out = static_cast<double>(s.out_features);
    } else if (s.kind == LayerKind::conv2d) {
      p.weight = Tensor({s.out_channels, s.in_channels, s.kernel_h, s.kernel_w});
      p.bias = Tensor({s.out_channels});
      const double area = static_cast<double>(s.kernel_h * s.kernel_w);
      fan_in = static_cast<double>(s.in_channels) * area;
      fan_out = static_cast<double>(s.out_channels) * area;
    } else {
      continue;
    }
    const double limit = std::sqrt(6.0 / (fan_in + fan_out));
    std::uniform_real_distribution<double> dist(-limit, limit);
    for (auto& w : p.weight.data) w = dist(rng);
  }
  return params;
}

NetworkParams zeros_like(const NetworkParams& params) {
  NetworkParams z;
  z.layers.reserve(params.layers.size());
  auto zero = [](const Tensor& t) { return t.data.empty() ? Tensor{} : Tensor(t.shape); };
  for (const auto& l : params.layers) z.layers.push_back(LayerParams{zero(l.weight), zero(l.bias)});
  return z;
}

namespace {

void check_params(const NetworkParams& params, const LayerChain& specs) {
  if (params.layers.size() != specs.size()) {
    throw ShapeError(0, "parameter set has " + std::to_string(params.layers.size()) + " layers, chain has " +
                            std::to_string(specs.size()));
  }
}

Tensor dense_forward(const LayerSpec& s, const LayerParams& p, const Tensor& x) {
  Tensor y({s.out_features});
  const double* w = p.weight.data.data();
  for (std::size_t o = 0; o < s.out_features; ++o) {
    const double* row = w + o * s.in_features;
    // Four partial sums; fixed order keeps results deterministic.
    double a0 = 0.0, a1 = 0.0, a2 = 0.0, a3 = 0.0;
    std::size_t k = 0;
    for (; k + 4 <= s.in_features; k += 4) {
      a0 += row[k] * x[k];
      a1 += row[k + 1] * x[k + 1];
      a2 += row[k + 2] * x[k + 2];
      a3 += row[k + 3] * x[k + 3];
    }
    for (; k < s.in_features; ++k) a0 += row[k] * x[k];
    y[o] = p.bias[o] + ((a0 + a1) + (a2 + a3));
  }
  return y;
}

Tensor conv_forward(const LayerSpec& s, const LayerParams& p, const Tensor& x) {
  const std::size_t H = x.shape[1], W = x.shape[2];
  const std::size_t Ho = (H - s.kernel_h) / s.stride + 1, Wo = (W - s.kernel_w) / s.stride + 1;
  const std::size_t plane = Ho * Wo;
  Tensor y({s.out_channels, Ho, Wo});
  for (std::size_t oc = 0; oc < s.out_channels; ++oc) {
    std::fill_n(y.data.begin() + static_cast<std::ptrdiff_t>(oc * plane), plane, p.bias[oc]);
  }
  // Scatter each nonzero input into the outputs whose window covers it;
  // occupancy grids and relu maps are mostly zero.
  const std::size_t ksize = s.kernel_h * s.kernel_w;
  for (std::size_t ic = 0; ic < s.in_channels; ++ic) {
    for (std::size_t iy = 0; iy < H; ++iy) {
      for (std::size_t ix = 0; ix < W; ++ix) {
        const double xv = x.data[(ic * H + iy) * W + ix];
        if (xv == 0.0) continue;
        for (std::size_t ky = 0; ky < s.kernel_h && ky <= iy; ++ky) {
          if ((iy - ky) % s.stride != 0) continue;
          const std::size_t oy = (iy - ky) / s.stride;
          if (oy >= Ho) continue;
          for (std::size_t kx = 0; kx < s.kernel_w && kx <= ix; ++kx) {
            if ((ix - kx) % s.stride != 0) continue;
            const std::size_t ox = (ix - kx) / s.stride;
            if (ox >= Wo) continue;
            const double* wk = &p.weight.data[ic * ksize + ky * s.kernel_w + kx];
            double* yo = &y.data[oy * Wo + ox];
            const std::size_t wstride = s.in_channels * ksize;
            for (std::size_t oc = 0; oc < s.out_channels; ++oc) yo[oc * plane] += wk[oc * wstride] * xv;
          }
        }
      }
    }
  }
  return y;
}

}  // namespace

Activations forward(const NetworkParams& params, const LayerChain& specs, const Tensor& input) {
  check_params(params, specs);
  infer_shapes(specs, input.shape);
  Activations acts;
  acts.reserve(specs.size() + 1);
  acts.push_back(input);
  for (std::size_t i = 0; i < specs.size(); ++i) {
    const auto& s = specs[i];
    const auto& x = acts.back();
    switch (s.kind) {
      case LayerKind::dense:
        acts.push_back(dense_forward(s, params.layers[i], x));
        break;
      case LayerKind::conv2d:
        acts.push_back(conv_forward(s, params.layers[i], x));
        break;
      case LayerKind::relu: {
        Tensor y = x;
        for (auto& v : y.data) v = v > 0.0 ? v : 0.0;
        acts.push_back(std::move(y));
        break;
      }
      case LayerKind::flatten: {
        Tensor y = x;
        y.shape = {x.size()};
        acts.push_back(std::move(y));
        break;
      }
    }
  }
  return acts;
}

Tensor backward_into(const NetworkParams& params, const LayerChain& specs, const Activations& acts,
                     const Tensor& output_gradient, NetworkParams& grads, bool input_gradient) {
  check_params(params, specs);
  check_params(grads, specs);
  if (acts.size() != specs.size() + 1) {
    throw ShapeError(0, "activation set has " + std::to_string(acts.size()) + " entries, expected " +
                            std::to_string(specs.size() + 1));
  }
  if (output_gradient.shape != acts.back().shape) {
    throw ShapeError(specs.size() ? specs.size() - 1 : 0,
                     "output gradient shape " + shape_string(output_gradient.shape) + " != output shape " +
                         shape_string(acts.back().shape));
  }

  Tensor grad = output_gradient;
  for (std::size_t li = specs.size(); li-- > 0;) {
    const auto& s = specs[li];
    const auto& x = acts[li];
    // The first layer's input gradient is only needed when the caller chains.
    const bool need_gx = li > 0 || input_gradient;
    switch (s.kind) {
      case LayerKind::dense: {
        const auto& w = params.layers[li].weight.data;
        auto& gw = grads.layers[li].weight.data;
        auto& gb = grads.layers[li].bias.data;
        Tensor gx = need_gx ? Tensor(x.shape) : Tensor{};
        for (std::size_t o = 0; o < s.out_features; ++o) {
          const double go = grad[o];
          if (go == 0.0) continue;
          gb[o] += go;
          const std::size_t row = o * s.in_features;
          double* gwr = gw.data() + row;
          for (std::size_t k = 0; k < s.in_features; ++k) gwr[k] += go * x[k];
          if (need_gx) {
            const double* wr = w.data() + row;
            for (std::size_t k = 0; k < s.in_features; ++k) gx[k] += go * wr[k];
          }
        }
        grad = std::move(gx);
        break;
      }
      case LayerKind::conv2d: {
        const std::size_t H = x.shape[1], W = x.shape[2];
        const std::size_t Ho = grad.shape[1], Wo = grad.shape[2];
        const auto& w = params.layers[li].weight.data;
        auto& gw = grads.layers[li].weight.data;
        auto& gb = grads.layers[li].bias.data;
        Tensor gx = need_gx ? Tensor(x.shape) : Tensor{};
        for (std::size_t oc = 0; oc < s.out_channels; ++oc) {
          for (std::size_t oy = 0; oy < Ho; ++oy) {
            for (std::size_t ox = 0; ox < Wo; ++ox) {
              const double go = grad.data[(oc * Ho + oy) * Wo + ox];
              if (go == 0.0) continue;
              gb[oc] += go;
              for (std::size_t ic = 0; ic < s.in_channels; ++ic) {
                const std::size_t wbase = ((oc * s.in_channels + ic) * s.kernel_h) * s.kernel_w;
                for (std::size_t ky = 0; ky < s.kernel_h; ++ky) {
                  const std::size_t xbase = (ic * H + oy * s.stride + ky) * W + ox * s.stride;
                  for (std::size_t kx = 0; kx < s.kernel_w; ++kx) {
                    gw[wbase + ky * s.kernel_w + kx] += go * x.data[xbase + kx];
                    if (need_gx) gx.data[xbase + kx] += go * w[wbase + ky * s.kernel_w + kx];
                  }
                }
              }
            }
          }
        }
        grad = std::move(gx);
        break;
      }
      case LayerKind::relu:
        for (std::size_t k = 0; k < grad.size(); ++k) {
          if (!(x[k] > 0.0)) grad[k] = 0.0;
        }
        break;
      case LayerKind::flatten:
        if (need_gx) grad.shape = x.shape;
        break;
    }
  }
  return grad;
}

Gradients backward(const NetworkParams& params, const LayerChain& specs, const Activations& acts,
                   const Tensor& output_gradient) {
  Gradients g;
  g.params = zeros_like(params);
  g.input = backward_into(params, specs, acts, output_gradient, g.params, true);
  return g;
}

void accumulate(NetworkParams& dst, const NetworkParams& src, double scale) {
  if (dst.layers.size() != src.layers.size()) throw InvalidArgument("accumulate: layer count mismatch");
  for (std::size_t i = 0; i < dst.layers.size(); ++i) {
    auto& d = dst.layers[i];
    const auto& s = src.layers[i];
    if (d.weight.shape != s.weight.shape || d.bias.shape != s.bias.shape) {
      throw ShapeError(i, "accumulate: parameter shape mismatch");
    }
    for (std::size_t k = 0; k < d.weight.size(); ++k) d.weight[k] += scale * s.weight[k];
    for (std::size_t k = 0; k < d.bias.size(); ++k) d.bias[k] += scale * s.bias[k];
  }
}

double squared_norm(const NetworkParams& grads) {
  double n = 0.0;
  for (const auto& l : grads.layers) {
    for (double v : l.weight.data) n += v * v;
    for (double v : l.bias.data) n += v * v;
  }
  return n;
}

std::string to_string(OptimizerKind k) { return k == OptimizerKind::sgd ? "sgd" : "adam"; }

OptimizerKind optimizer_from_string(const std::string& s) {
  if (s == "sgd") return OptimizerKind::sgd;
  if (s == "adam") return OptimizerKind::adam;
  throw InvalidArgument("unknown optimizer '" + s + "' (expected sgd or adam)");
}

void OptimizerConfig::validate() const {
  if (!(learning_rate >= 0.0 && learning_rate <= 1.0)) {
    throw InvalidArgument("learning rate must lie in [0, 1]");
  }
  if (!std::isfinite(clip_norm)) throw InvalidArgument("clip norm must be finite");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw InvalidArgument("adam betas must lie in [0, 1)");
  }
  if (!(epsilon > 0.0) || !std::isfinite(epsilon)) throw InvalidArgument("adam epsilon must be positive");
}

void apply_scaled_update(NetworkParams& params, const NetworkParams& grads, double step) {
  accumulate(params, grads, -step);
}

double clip_factor(double grad_norm, const OptimizerConfig& cfg) {
  if (cfg.clip_norm > 0.0 && grad_norm > cfg.clip_norm) return cfg.clip_norm / grad_norm;
  return 1.0;
}

void apply_update(NetworkParams& params, const NetworkParams& grads, const OptimizerConfig& cfg) {
  cfg.validate();
  if (cfg.kind != OptimizerKind::sgd) throw InvalidArgument("apply_update is plain gradient descent only");
  const double factor = clip_factor(std::sqrt(squared_norm(grads)), cfg);
  apply_scaled_update(params, grads, cfg.learning_rate * factor);
}

void apply_adam_update(NetworkParams& params, const NetworkParams& grads, double grad_scale, MomentState& moments,
                       std::size_t step, const OptimizerConfig& cfg) {
  if (step == 0) throw InvalidArgument("adam step count is 1-based");
  if (moments.first.layers.empty()) {
    moments.first = zeros_like(params);
    moments.second = zeros_like(params);
  }
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
  auto update = [&](std::size_t l, Tensor& p, const Tensor& g, Tensor& m, Tensor& v) {
    if (g.size() != p.size()) throw ShapeError(l, "gradient shape does not match parameters");
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double gi = g[i] * grad_scale;
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * gi;
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * gi * gi;
      p[i] -= cfg.learning_rate * (m[i] / c1) / (std::sqrt(v[i] / c2) + cfg.epsilon);
    }
  };
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    auto& pl = params.layers[l];
    update(l, pl.weight, grads.layers[l].weight, moments.first.layers[l].weight, moments.second.layers[l].weight);
    update(l, pl.bias, grads.layers[l].bias, moments.first.layers[l].bias, moments.second.layers[l].bias);
  }
}

double mse_loss(const Tensor& prediction, const Tensor& target) {
  if (prediction.shape != target.shape) throw InvalidArgument("mse_loss: shape mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < prediction.size(); ++i) {
    const double d = prediction[i] - target[i];
    acc += d * d;
  }
  return acc / static_cast<double>(prediction.size());
}

Tensor mse_gradient(const Tensor& prediction, const Tensor& target) {
  if (prediction.shape != target.shape) throw InvalidArgument("mse_gradient: shape mismatch");
  Tensor g(prediction.shape);
  const double scale = 2.0 / static_cast<double>(prediction.size());
  for (std::size_t i = 0; i < prediction.size(); ++i) g[i] = scale * (prediction[i] - target[i]);
  return g;
}

double min_relu_margin(const NetworkParams& params, const LayerChain& specs, const Tensor& input) {
  const auto acts = forward(params, specs, input);
  double margin = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < specs.size(); ++i) {
    if (specs[i].kind != LayerKind::relu) continue;
    for (double v : acts[i].data) margin = std::min(margin, std::abs(v));
  }
  return margin;
}

GradientCheckResult finite_difference_check(const NetworkParams& params, const LayerChain& specs,
                                            const Tensor& input, const Tensor& target, double h, double floor) {
  if (!(h > 0.0)) throw InvalidArgument("finite difference step must be positive");
  const auto acts = forward(params, specs, input);
  const auto analytic = backward(params, specs, acts, mse_gradient(output(acts), target)).params;

  auto loss_at = [&](const NetworkParams& p) { return mse_loss(output(forward(p, specs, input)), target); };

  GradientCheckResult result;
  NetworkParams probe = params;
  for (std::size_t li = 0; li < probe.layers.size(); ++li) {
    for (int part = 0; part < 2; ++part) {
      auto& values = part == 0 ? probe.layers[li].weight.data : probe.layers[li].bias.data;
      const auto& grads = part == 0 ? analytic.layers[li].weight.data : analytic.layers[li].bias.data;
      for (std::size_t k = 0; k < values.size(); ++k) {
        const double saved = values[k];
        values[k] = saved + h;
        const double up = loss_at(probe);
        values[k] = saved - h;
        const double down = loss_at(probe);
        values[k] = saved;
        const double numeric = (up - down) / (2.0 * h);
        const double a = grads[k];
        const double denom = std::max({std::abs(a), std::abs(numeric), floor});
        const double rel = std::abs(a - numeric) / denom;
        ++result.checked;
        if (rel > result.max_relative_error) {
          result.max_relative_error = rel;
          result.layer = li;
          result.index = k;
          result.in_bias = part == 1;
        }
      }
    }
  }
  return result;
}

void write_network(std::ostream& out, const std::string& name, const LayerChain& specs,
                   const NetworkParams& params) {
  check_params(params, specs);
  out << "network " << name << " " << specs.size() << "\n";
  for (std::size_t i = 0; i < specs.size(); ++i) {
    const auto& s = specs[i];
    out << "layer " << i << " " << to_string(s.kind);
    if (s.kind == LayerKind::dense) out << " " << s.in_features << " " << s.out_features;
    if (s.kind == LayerKind::conv2d) {
      out << " " << s.in_channels << " " << s.out_channels << " " << s.kernel_h << " " << s.kernel_w << " "
          << s.stride;
    }
    out << "\n";
    if (!s.has_params()) continue;
    const auto& p = params.layers[i];
    for (const auto* t : {&p.weight, &p.bias}) {
      out << "tensor " << (t == &p.weight ? "weight" : "bias") << " " << t->shape.size();
      for (auto d : t->shape) out << " " << d;
      out << "\n";
      std::ostringstream line;
      line << std::setprecision(17);
      for (std::size_t k = 0; k < t->size(); ++k) line << (k ? " " : "") << t->data[k];
      out << line.str() << "\n";
    }
  }
}

namespace {

void expect_token(std::istream& in, const std::string& want) {
  std::string got;
  if (!(in >> got) || got != want) {
    throw ConfigError("checkpoint: expected '" + want + "', got '" + got + "'");
  }
}

Tensor read_tensor(std::istream& in, const std::string& name, const Shape& want) {
  expect_token(in, "tensor");
  expect_token(in, name);
  std::size_t rank = 0;
  if (!(in >> rank)) throw ConfigError("checkpoint: missing tensor rank");
  Shape shape(rank);
  for (auto& d : shape) {
    if (!(in >> d)) throw ConfigError("checkpoint: missing tensor dimension");
  }
  if (shape != want) {
    throw ConfigError("checkpoint: tensor shape " + shape_string(shape) + " != expected " + shape_string(want));
  }
  Tensor t(shape);
  for (auto& v : t.data) {
    if (!(in >> v)) throw ConfigError("checkpoint: truncated tensor data");
  }
  return t;
}

}  // namespace

NamedNetwork read_network(std::istream& in) {
  NamedNetwork net;
  std::size_t count = 0;
  expect_token(in, "network");
  if (!(in >> net.name >> count)) throw ConfigError("checkpoint: malformed network header");
  net.specs.reserve(count);
  net.params.layers.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    expect_token(in, "layer");
    std::size_t index = 0;
    std::string kind;
    if (!(in >> index >> kind) || index != i) throw ConfigError("checkpoint: malformed layer header");
    LayerSpec s;
    if (kind == "dense") {
      std::size_t a = 0, b = 0;
      if (!(in >> a >> b)) throw ConfigError("checkpoint: malformed dense layer");
      s = LayerSpec::dense(a, b);
    } else if (kind == "conv2d") {
      std::size_t ic = 0, oc = 0, kh = 0, kw = 0, st = 0;
      if (!(in >> ic >> oc >> kh >> kw >> st)) throw ConfigError("checkpoint: malformed conv2d layer");
      s = LayerSpec::conv2d(ic, oc, kh, kw, st);
    } else if (kind == "relu") {
      s = LayerSpec::relu();
    } else if (kind == "flatten") {
      s = LayerSpec::flatten();
    } else {
      throw ConfigError("checkpoint: unknown layer kind '" + kind + "'");
    }
    net.specs.push_back(s);
    if (s.kind == LayerKind::dense) {
      net.params.layers[i].weight = read_tensor(in, "weight", {s.out_features, s.in_features});
      net.params.layers[i].bias = read_tensor(in, "bias", {s.out_features});
    } else if (s.kind == LayerKind::conv2d) {
      net.params.layers[i].weight = read_tensor(in, "weight", {s.out_channels, s.in_channels, s.kernel_h, s.kernel_w});
      net.params.layers[i].bias = read_tensor(in, "bias", {s.out_channels});
    }
  }
  return net;
}

}  // namespace tlc::nn
