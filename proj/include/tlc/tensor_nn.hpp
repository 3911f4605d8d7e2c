#pragma once

// Small dense/conv network core: layer chains evaluated one sample at a time
// in double precision, with exact reverse-mode gradients.

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "tlc/error.hpp"

namespace tlc::nn {

using Shape = std::vector<std::size_t>;

std::size_t element_count(const Shape& shape);
std::string shape_string(const Shape& shape);

struct Tensor {
  Shape shape;
  std::vector<double> data;  // row-major

  Tensor() = default;
  explicit Tensor(Shape s, double fill = 0.0);
  Tensor(Shape s, std::vector<double> values);

  std::size_t size() const noexcept { return data.size(); }
  double& operator[](std::size_t i) { return data[i]; }
  double operator[](std::size_t i) const { return data[i]; }

  friend bool operator==(const Tensor&, const Tensor&) = default;
};

class ShapeError : public Error {
 public:
  ShapeError(std::size_t layer, const std::string& what);
  std::size_t layer() const noexcept { return layer_; }

 private:
  std::size_t layer_;
};

enum class LayerKind : std::uint8_t { dense, conv2d, relu, flatten };

std::string to_string(LayerKind kind);

struct LayerSpec {
  LayerKind kind = LayerKind::relu;
  // dense
  std::size_t in_features = 0;
  std::size_t out_features = 0;
  // conv2d, input laid out as [channels, height, width], no padding
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;
  std::size_t kernel_h = 0;
  std::size_t kernel_w = 0;
  std::size_t stride = 1;

  static LayerSpec dense(std::size_t in, std::size_t out);
  static LayerSpec conv2d(std::size_t in_channels, std::size_t out_channels, std::size_t kernel_h,
                          std::size_t kernel_w, std::size_t stride);
  static LayerSpec relu();
  static LayerSpec flatten();

  bool has_params() const noexcept { return kind == LayerKind::dense || kind == LayerKind::conv2d; }
  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

using LayerChain = std::vector<LayerSpec>;

// Weight and bias for one layer; both empty for parameter-free layers.
struct LayerParams {
  Tensor weight;
  Tensor bias;
  friend bool operator==(const LayerParams&, const LayerParams&) = default;
};

struct NetworkParams {
  std::vector<LayerParams> layers;

  std::size_t parameter_count() const;
  friend bool operator==(const NetworkParams&, const NetworkParams&) = default;
};

// Output shape of every layer in the chain; throws ShapeError naming the
// first layer that does not compose.
std::vector<Shape> infer_shapes(const LayerChain& specs, const Shape& input);

// Uniform in +-sqrt(6 / (fan_in + fan_out)) for weights, zero biases.
NetworkParams init_params(const LayerChain& specs, const Shape& input, std::mt19937_64& rng);
NetworkParams zeros_like(const NetworkParams& params);

// activations[0] is the input, activations[i + 1] the output of layer i.
using Activations = std::vector<Tensor>;

Activations forward(const NetworkParams& params, const LayerChain& specs, const Tensor& input);
inline const Tensor& output(const Activations& acts) { return acts.back(); }

struct Gradients {
  NetworkParams params;
  Tensor input;  // dLoss/dInput, for chaining into an upstream network
};

Gradients backward(const NetworkParams& params, const LayerChain& specs, const Activations& acts,
                   const Tensor& output_gradient);

// Adds the parameter gradients into `grads` and returns dLoss/dInput (an
// empty tensor when input_gradient is false).
Tensor backward_into(const NetworkParams& params, const LayerChain& specs, const Activations& acts,
                     const Tensor& output_gradient, NetworkParams& grads, bool input_gradient = true);

// Accumulates `src` into `dst` (same shapes).
void accumulate(NetworkParams& dst, const NetworkParams& src, double scale = 1.0);
double squared_norm(const NetworkParams& grads);

enum class OptimizerKind { sgd, adam };

std::string to_string(OptimizerKind k);
OptimizerKind optimizer_from_string(const std::string& s);

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::sgd;
  double learning_rate = 0.001;
  double clip_norm = 0.0;  // <= 0 disables clipping
  double beta1 = 0.9;      // adam only
  double beta2 = 0.999;
  double epsilon = 1e-8;

  void validate() const;
};

// Running first and second moments for adam.
struct MomentState {
  NetworkParams first;
  NetworkParams second;
};

// theta <- theta - step * g
void apply_scaled_update(NetworkParams& params, const NetworkParams& grads, double step);

// Multiplier applied to gradients whose global L2 norm exceeds clip_norm.
double clip_factor(double grad_norm, const OptimizerConfig& cfg);

// theta <- theta - lr * clip(g)
void apply_update(NetworkParams& params, const NetworkParams& grads, const OptimizerConfig& cfg);

// One adam step on grads * grad_scale; `step` is the 1-based update count
// used for bias correction. Moments are sized on first use.
void apply_adam_update(NetworkParams& params, const NetworkParams& grads, double grad_scale, MomentState& moments,
                       std::size_t step, const OptimizerConfig& cfg);

// Squared-error loss mean((y - target)^2) and its output gradient.
double mse_loss(const Tensor& prediction, const Tensor& target);
Tensor mse_gradient(const Tensor& prediction, const Tensor& target);

// Smallest |pre-activation| feeding any relu for this input; inputs with a
// comfortable margin are safe for finite differencing.
double min_relu_margin(const NetworkParams& params, const LayerChain& specs, const Tensor& input);

struct GradientCheckResult {
  double max_relative_error = 0.0;
  std::size_t layer = 0;
  std::size_t index = 0;
  bool in_bias = false;
  std::size_t checked = 0;
};

// Compares every analytic parameter gradient of the squared-error loss with
// a central difference at step h. Relative error uses
// |a - n| / max(|a|, |n|, floor).
GradientCheckResult finite_difference_check(const NetworkParams& params, const LayerChain& specs,
                                            const Tensor& input, const Tensor& target, double h,
                                            double floor = 1e-6);

// One network block of a checkpoint file:
//   network <name> <layer count>
//   layer <i> <kind> [dims...]          dense: in out; conv2d: in_c out_c kh kw stride
//   tensor weight <rank> <dims...>      only for dense/conv2d
//   <row-major values, 17 significant digits>
//   tensor bias <rank> <dims...>
//   <values>
void write_network(std::ostream& out, const std::string& name, const LayerChain& specs,
                   const NetworkParams& params);
struct NamedNetwork {
  std::string name;
  LayerChain specs;
  NetworkParams params;
};
NamedNetwork read_network(std::istream& in);

}  // namespace tlc::nn
