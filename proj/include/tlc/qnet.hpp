#pragma once

// Phase-gated Q-network.
//
//   grid -> conv encoder -> latent
//   [queue, count, wait, phase one-hots, latent] -> shared dense stack
//   -> branch selected by the current phase -> (Q_keep, Q_change)
//
// Only the branch matching the observation's current phase is evaluated, so
// the other branch has no influence on outputs or gradients.

#include <array>
#include <iosfwd>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "tlc/mdp_env.hpp"
#include "tlc/replay.hpp"
#include "tlc/tensor_nn.hpp"

namespace tlc::qnet {

using env::Action;
using env::Observation;
using sim::Phase;

struct QNetConfig {
  std::size_t grid_rows = sim::kLaneCount;
  std::size_t grid_cols = 30;
  std::vector<std::size_t> conv_channels{8, 16};
  std::size_t kernel = 3;
  std::size_t stride = 2;
  std::vector<std::size_t> shared_units{64};
  std::vector<std::size_t> branch_units{32};
  // Fixed input scaling applied to the lane vectors before the first layer.
  double queue_scale = 0.1;
  double count_scale = 0.1;
  double wait_scale = 0.01;

  void validate() const;
};

struct QValues {
  double keep = 0.0;
  double change = 0.0;

  double operator[](Action a) const noexcept { return a == Action::Keep ? keep : change; }
  double max() const noexcept { return keep >= change ? keep : change; }
};

// A layer chain together with its parameters.
struct Subnet {
  nn::LayerChain specs;
  nn::NetworkParams params;
};

struct QNetGradients {
  nn::NetworkParams encoder;
  nn::NetworkParams shared;
  std::array<nn::NetworkParams, 2> branch;

  double squared_norm() const;
};

class PhaseGateQNet {
 public:
  PhaseGateQNet() = default;
  PhaseGateQNet(QNetConfig cfg, std::uint64_t seed);

  QValues q_values(const Observation& obs) const;
  std::vector<double> encode(const Observation& obs) const;  // latent vector from the grid
  nn::Tensor features(const Observation& obs) const;         // concatenated state vector

  // Adds scale * d(Q(obs, action))/d(theta) into grads and returns Q(obs, action).
  double accumulate_gradient(const Observation& obs, Action action, double scale, QNetGradients& grads) const;
  // Adds weight * d((Q(obs, action) - target)^2)/d(theta) into grads and
  // returns the squared error.
  double accumulate_squared_error(const Observation& obs, Action action, double target, double weight,
                                  QNetGradients& grads) const;
  QNetGradients zero_gradients() const;

  // Gradient step over all parts with one global clipping norm.
  void apply(const QNetGradients& grads, const nn::OptimizerConfig& cfg);

  // Zeroes the output layer of both branches.
  void zero_heads();

  const QNetConfig& config() const noexcept { return cfg_; }
  const Subnet& encoder() const noexcept { return encoder_; }
  const Subnet& shared() const noexcept { return shared_; }
  const Subnet& branch(Phase p) const noexcept { return branch_[static_cast<std::size_t>(p)]; }
  Subnet& mutable_branch(Phase p) noexcept { return branch_[static_cast<std::size_t>(p)]; }
  Subnet& mutable_shared() noexcept { return shared_; }
  Subnet& mutable_encoder() noexcept { return encoder_; }
  std::size_t feature_size() const noexcept { return feature_size_; }
  std::size_t latent_size() const noexcept { return latent_size_; }

  void save(std::ostream& out) const;
  static PhaseGateQNet load(std::istream& in);
  void save_file(const std::string& path) const;
  static PhaseGateQNet load_file(const std::string& path);

 private:
  struct Trace {
    nn::Activations encoder;
    nn::Activations shared;
    nn::Activations branch;
  };
  Trace trace(const Observation& obs) const;
  void backpropagate(const Observation& obs, const Trace& t, Action action, double scale,
                     QNetGradients& grads) const;
  nn::Tensor grid_tensor(const Observation& obs) const;
  void check(const Observation& obs) const;

  QNetConfig cfg_;
  Subnet encoder_;
  Subnet shared_;
  std::array<Subnet, 2> branch_;
  std::size_t latent_size_ = 0;
  std::size_t feature_size_ = 0;
  // Adam moments for encoder, shared, branch NS, branch WE. Not checkpointed.
  std::array<nn::MomentState, 4> moments_;
  std::size_t updates_ = 0;
};

// argmax over the two actions; ties go to Keep.
Action greedy_action(const QValues& q);

Action epsilon_greedy(const QValues& q, double epsilon, std::mt19937_64& rng);

// y = R + gamma * max_a Q(s', a) with the current network.
std::vector<double> td_targets(std::span<const replay::Experience> batch, const PhaseGateQNet& net, double gamma);

// Mean squared error between targets and Q(s, a) over the batch (evaluated
// before the update), followed by one gradient step.
double train_batch(PhaseGateQNet& net, std::span<const replay::Experience> batch, std::span<const double> targets,
                   const nn::OptimizerConfig& cfg);

double batch_loss(const PhaseGateQNet& net, std::span<const replay::Experience> batch,
                  std::span<const double> targets);

}  // namespace tlc::qnet
