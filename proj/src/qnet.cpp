#include "tlc/qnet.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <istream>
#include <ostream>

namespace tlc::qnet {

namespace {

constexpr std::size_t kLaneBlocks = 3;
constexpr std::size_t kPhaseInputs = 4;

std::size_t idx(Phase p) { return static_cast<std::size_t>(p); }

}  // namespace

void QNetConfig::validate() const {
  if (grid_rows == 0 || grid_cols == 0) throw InvalidArgument("grid dimensions must be positive");
  if (kernel == 0 || stride == 0) throw InvalidArgument("conv kernel and stride must be positive");
  for (auto c : conv_channels) {
    if (c == 0) throw InvalidArgument("conv channel counts must be positive");
  }
  for (auto u : shared_units) {
    if (u == 0) throw InvalidArgument("shared layer widths must be positive");
  }
  for (auto u : branch_units) {
    if (u == 0) throw InvalidArgument("branch layer widths must be positive");
  }
  for (double s : {queue_scale, count_scale, wait_scale}) {
    if (!std::isfinite(s) || s <= 0.0) throw InvalidArgument("input scales must be positive");
  }
}

double QNetGradients::squared_norm() const {
  return nn::squared_norm(encoder) + nn::squared_norm(shared) + nn::squared_norm(branch[0]) +
         nn::squared_norm(branch[1]);
}

PhaseGateQNet::PhaseGateQNet(QNetConfig cfg, std::uint64_t seed) : cfg_(std::move(cfg)) {
  cfg_.validate();
  std::mt19937_64 rng(seed);

  std::size_t channels = 1;
  for (auto c : cfg_.conv_channels) {
    encoder_.specs.push_back(nn::LayerSpec::conv2d(channels, c, cfg_.kernel, cfg_.kernel, cfg_.stride));
    encoder_.specs.push_back(nn::LayerSpec::relu());
    channels = c;
  }
  encoder_.specs.push_back(nn::LayerSpec::flatten());
  const nn::Shape grid_shape{1, cfg_.grid_rows, cfg_.grid_cols};
  latent_size_ = nn::infer_shapes(encoder_.specs, grid_shape).back()[0];
  encoder_.params = nn::init_params(encoder_.specs, grid_shape, rng);

  feature_size_ = kLaneBlocks * sim::kLaneCount + kPhaseInputs + latent_size_;
  std::size_t width = feature_size_;
  for (auto u : cfg_.shared_units) {
    shared_.specs.push_back(nn::LayerSpec::dense(width, u));
    shared_.specs.push_back(nn::LayerSpec::relu());
    width = u;
  }
  shared_.params = nn::init_params(shared_.specs, {feature_size_}, rng);

  for (auto& b : branch_) {
    std::size_t w = width;
    for (auto u : cfg_.branch_units) {
      b.specs.push_back(nn::LayerSpec::dense(w, u));
      b.specs.push_back(nn::LayerSpec::relu());
      w = u;
    }
    b.specs.push_back(nn::LayerSpec::dense(w, 2));
    b.params = nn::init_params(b.specs, {width}, rng);
  }
}

void PhaseGateQNet::check(const Observation& obs) const {
  if (obs.grid.rows != cfg_.grid_rows || obs.grid.cols != cfg_.grid_cols ||
      obs.grid.cells.size() != cfg_.grid_rows * cfg_.grid_cols) {
    throw InvalidArgument("observation grid is " + std::to_string(obs.grid.rows) + "x" +
                          std::to_string(obs.grid.cols) + ", network expects " + std::to_string(cfg_.grid_rows) +
                          "x" + std::to_string(cfg_.grid_cols));
  }
}

nn::Tensor PhaseGateQNet::grid_tensor(const Observation& obs) const {
  nn::Tensor t({1, cfg_.grid_rows, cfg_.grid_cols});
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = obs.grid.cells[i];
  return t;
}

std::vector<double> PhaseGateQNet::encode(const Observation& obs) const {
  check(obs);
  return nn::output(nn::forward(encoder_.params, encoder_.specs, grid_tensor(obs))).data;
}

namespace {

nn::Tensor concat_features(const QNetConfig& cfg, const Observation& obs, const std::vector<double>& latent,
                           std::size_t size) {
  nn::Tensor x({size});
  std::size_t k = 0;
  for (double q : obs.queue) x[k++] = q * cfg.queue_scale;
  for (double v : obs.count) x[k++] = v * cfg.count_scale;
  for (double w : obs.wait) x[k++] = w * cfg.wait_scale;
  x[k++] = obs.current_phase == Phase::NS ? 1.0 : 0.0;
  x[k++] = obs.current_phase == Phase::WE ? 1.0 : 0.0;
  x[k++] = obs.next_phase == Phase::NS ? 1.0 : 0.0;
  x[k++] = obs.next_phase == Phase::WE ? 1.0 : 0.0;
  for (double l : latent) x[k++] = l;
  return x;
}

}  // namespace

nn::Tensor PhaseGateQNet::features(const Observation& obs) const {
  return concat_features(cfg_, obs, encode(obs), feature_size_);
}

PhaseGateQNet::Trace PhaseGateQNet::trace(const Observation& obs) const {
  check(obs);
  Trace t;
  t.encoder = nn::forward(encoder_.params, encoder_.specs, grid_tensor(obs));
  t.shared = nn::forward(shared_.params, shared_.specs,
                         concat_features(cfg_, obs, nn::output(t.encoder).data, feature_size_));
  const auto& b = branch_[idx(obs.current_phase)];
  t.branch = nn::forward(b.params, b.specs, nn::output(t.shared));
  return t;
}

QValues PhaseGateQNet::q_values(const Observation& obs) const {
  const auto t = trace(obs);
  const auto& out = nn::output(t.branch);
  return QValues{out[0], out[1]};
}

QNetGradients PhaseGateQNet::zero_gradients() const {
  QNetGradients g;
  g.encoder = nn::zeros_like(encoder_.params);
  g.shared = nn::zeros_like(shared_.params);
  g.branch[0] = nn::zeros_like(branch_[0].params);
  g.branch[1] = nn::zeros_like(branch_[1].params);
  return g;
}

double PhaseGateQNet::accumulate_gradient(const Observation& obs, Action action, double scale,
                                          QNetGradients& grads) const {
  const auto t = trace(obs);
  const double q = nn::output(t.branch)[static_cast<std::size_t>(action)];
  if (scale != 0.0) backpropagate(obs, t, action, scale, grads);
  return q;
}

double PhaseGateQNet::accumulate_squared_error(const Observation& obs, Action action, double target, double weight,
                                               QNetGradients& grads) const {
  const auto t = trace(obs);
  const double d = nn::output(t.branch)[static_cast<std::size_t>(action)] - target;
  if (d != 0.0 && weight != 0.0) backpropagate(obs, t, action, 2.0 * d * weight, grads);
  return d * d;
}

void PhaseGateQNet::backpropagate(const Observation& obs, const Trace& t, Action action, double scale,
                                  QNetGradients& grads) const {
  nn::Tensor head_grad({2});
  head_grad[static_cast<std::size_t>(action)] = scale;
  const auto p = idx(obs.current_phase);
  const auto g_branch = nn::backward_into(branch_[p].params, branch_[p].specs, t.branch, head_grad, grads.branch[p]);
  const auto g_shared = nn::backward_into(shared_.params, shared_.specs, t.shared, g_branch, grads.shared);

  nn::Tensor latent_grad({latent_size_});
  const std::size_t offset = feature_size_ - latent_size_;
  for (std::size_t k = 0; k < latent_size_; ++k) latent_grad[k] = g_shared[offset + k];
  nn::backward_into(encoder_.params, encoder_.specs, t.encoder, latent_grad, grads.encoder, false);
}

void PhaseGateQNet::apply(const QNetGradients& grads, const nn::OptimizerConfig& cfg) {
  cfg.validate();
  const double factor = nn::clip_factor(std::sqrt(grads.squared_norm()), cfg);
  if (cfg.kind == nn::OptimizerKind::adam) {
    ++updates_;
    nn::apply_adam_update(encoder_.params, grads.encoder, factor, moments_[0], updates_, cfg);
    nn::apply_adam_update(shared_.params, grads.shared, factor, moments_[1], updates_, cfg);
    nn::apply_adam_update(branch_[0].params, grads.branch[0], factor, moments_[2], updates_, cfg);
    nn::apply_adam_update(branch_[1].params, grads.branch[1], factor, moments_[3], updates_, cfg);
    return;
  }
  const double step = cfg.learning_rate * factor;
  nn::apply_scaled_update(encoder_.params, grads.encoder, step);
  nn::apply_scaled_update(shared_.params, grads.shared, step);
  nn::apply_scaled_update(branch_[0].params, grads.branch[0], step);
  nn::apply_scaled_update(branch_[1].params, grads.branch[1], step);
}

void PhaseGateQNet::zero_heads() {
  for (auto& b : branch_) {
    auto& head = b.params.layers.back();
    std::fill(head.weight.data.begin(), head.weight.data.end(), 0.0);
    std::fill(head.bias.data.begin(), head.bias.data.end(), 0.0);
  }
}

namespace {

void write_list(std::ostream& out, const char* key, const std::vector<std::size_t>& xs) {
  out << key << " " << xs.size();
  for (auto x : xs) out << " " << x;
  out << "\n";
}

std::vector<std::size_t> read_list(std::istream& in, const char* key) {
  std::string k;
  std::size_t n = 0;
  if (!(in >> k >> n) || k != key) throw ConfigError(std::string("checkpoint: expected '") + key + "'");
  std::vector<std::size_t> xs(n);
  for (auto& x : xs) {
    if (!(in >> x)) throw ConfigError(std::string("checkpoint: truncated '") + key + "'");
  }
  return xs;
}

void restore(Subnet& dst, const nn::NamedNetwork& src, const std::string& name) {
  if (src.name != name) throw ConfigError("checkpoint: expected network '" + name + "', got '" + src.name + "'");
  if (src.specs != dst.specs) throw ConfigError("checkpoint: network '" + name + "' does not match its config");
  dst.params = src.params;
}

}  // namespace

void PhaseGateQNet::save(std::ostream& out) const {
  out << "tlc-qnet 1\n";
  out << "grid " << cfg_.grid_rows << " " << cfg_.grid_cols << "\n";
  write_list(out, "conv", cfg_.conv_channels);
  out << "kernel " << cfg_.kernel << " " << cfg_.stride << "\n";
  write_list(out, "shared", cfg_.shared_units);
  write_list(out, "branch", cfg_.branch_units);
  out << std::setprecision(17) << "scales " << cfg_.queue_scale << " " << cfg_.count_scale << " "
      << cfg_.wait_scale << "\n";
  nn::write_network(out, "encoder", encoder_.specs, encoder_.params);
  nn::write_network(out, "shared", shared_.specs, shared_.params);
  nn::write_network(out, "branch_NS", branch_[0].specs, branch_[0].params);
  nn::write_network(out, "branch_WE", branch_[1].specs, branch_[1].params);
}

PhaseGateQNet PhaseGateQNet::load(std::istream& in) {
  std::string magic;
  int version = 0;
  if (!(in >> magic >> version) || magic != "tlc-qnet") throw ConfigError("checkpoint: not a tlc-qnet file");
  if (version != 1) throw ConfigError("checkpoint: unsupported version " + std::to_string(version));
  QNetConfig cfg;
  std::string key;
  if (!(in >> key >> cfg.grid_rows >> cfg.grid_cols) || key != "grid") throw ConfigError("checkpoint: bad grid line");
  cfg.conv_channels = read_list(in, "conv");
  if (!(in >> key >> cfg.kernel >> cfg.stride) || key != "kernel") throw ConfigError("checkpoint: bad kernel line");
  cfg.shared_units = read_list(in, "shared");
  cfg.branch_units = read_list(in, "branch");
  if (!(in >> key >> cfg.queue_scale >> cfg.count_scale >> cfg.wait_scale) || key != "scales") {
    throw ConfigError("checkpoint: bad scales line");
  }
  PhaseGateQNet net(cfg, 0);
  restore(net.encoder_, nn::read_network(in), "encoder");
  restore(net.shared_, nn::read_network(in), "shared");
  restore(net.branch_[0], nn::read_network(in), "branch_NS");
  restore(net.branch_[1], nn::read_network(in), "branch_WE");
  return net;
}

void PhaseGateQNet::save_file(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw Error("cannot write checkpoint " + path);
  save(out);
  if (!out) throw Error("failed writing checkpoint " + path);
}

PhaseGateQNet PhaseGateQNet::load_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open checkpoint " + path);
  return load(in);
}

Action greedy_action(const QValues& q) { return q.change > q.keep ? Action::Change : Action::Keep; }

Action epsilon_greedy(const QValues& q, double epsilon, std::mt19937_64& rng) {
  if (!(epsilon >= 0.0 && epsilon <= 1.0)) throw InvalidArgument("epsilon must lie in [0, 1]");
  std::uniform_real_distribution<double> u(0.0, 1.0);
  if (u(rng) < epsilon) {
    std::bernoulli_distribution coin(0.5);
    return coin(rng) ? Action::Change : Action::Keep;
  }
  return greedy_action(q);
}

std::vector<double> td_targets(std::span<const replay::Experience> batch, const PhaseGateQNet& net, double gamma) {
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw InvalidArgument("discount factor must lie in [0, 1]");
  std::vector<double> y;
  y.reserve(batch.size());
  for (const auto& e : batch) {
    y.push_back(gamma == 0.0 ? e.reward : e.reward + gamma * net.q_values(e.next_state).max());
  }
  return y;
}

double batch_loss(const PhaseGateQNet& net, std::span<const replay::Experience> batch,
                  std::span<const double> targets) {
  if (batch.empty()) throw InvalidArgument("empty training batch");
  if (batch.size() != targets.size()) throw InvalidArgument("one target per experience required");
  double loss = 0.0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const double d = targets[i] - net.q_values(batch[i].state)[batch[i].action];
    loss += d * d;
  }
  return loss / static_cast<double>(batch.size());
}

double train_batch(PhaseGateQNet& net, std::span<const replay::Experience> batch, std::span<const double> targets,
                   const nn::OptimizerConfig& cfg) {
  if (batch.empty()) throw InvalidArgument("empty training batch");
  if (batch.size() != targets.size()) throw InvalidArgument("one target per experience required");
  const double n = static_cast<double>(batch.size());
  auto grads = net.zero_gradients();
  double loss = 0.0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    loss += net.accumulate_squared_error(batch[i].state, batch[i].action, targets[i], 1.0 / n, grads);
  }
  net.apply(grads, cfg);
  return loss / n;
}

}  // namespace tlc::qnet
