// End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
// exits non-zero if any fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "oracle.hpp"
#include "tlc/harness.hpp"

using namespace tlc;
namespace fs = std::filesystem;

namespace {

// Tolerances and budgets.
constexpr double kGradientTolerance = 1e-4;
constexpr double kFiniteDifferenceStep = 1e-5;
constexpr double kGradientBudgetSeconds = 30.0;
constexpr double kScenarioBudgetSeconds = 600.0;
constexpr double kSwitchWaitRatio = 0.20;
constexpr double kImbalancedReduction = 0.40;
constexpr double kDipFactor = 2.0;
constexpr std::size_t kStepsPerHour = 720;
constexpr double kRecoveryHours = 2.0;

int failures = 0;

void report(int id, bool ok, const std::string& detail) {
  std::printf("criterion %d: %s  %s\n", id, ok ? "PASS" : "FAIL", detail.c_str());
  std::fflush(stdout);
  if (!ok) ++failures;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(const char* f, auto... args) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// ---------------------------------------------------------------------------

void gradient_correctness() {
  using namespace nn;
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(1001);
  double worst = 0.0;
  std::size_t checked = 0;
  for (int k = 0; k < 20; ++k) {
    LayerChain specs;
    Shape input;
    if (k % 2 == 0) {
      const std::size_t in = 4 + k % 5, hidden = 6 + k % 3;
      specs = {LayerSpec::dense(in, hidden), LayerSpec::relu(), LayerSpec::dense(hidden, 5), LayerSpec::relu(),
               LayerSpec::dense(5, 2)};
      input = {in};
    } else {
      const std::size_t h = 6 + k % 4, w = 8 + k % 3;
      const std::size_t oh = (h - 3) / 2 + 1, ow = (w - 3) / 2 + 1;
      specs = {LayerSpec::conv2d(1, 3, 3, 3, 2), LayerSpec::relu(), LayerSpec::flatten(),
               LayerSpec::dense(3 * oh * ow, 6), LayerSpec::relu(), LayerSpec::dense(6, 2)};
      input = {1, h, w};
    }
    const auto params = init_params(specs, input, rng);
    const auto x = oracle::kink_free_input(params, specs, input, rng);
    const auto target = oracle::random_tensor({2}, rng);
    const auto r = finite_difference_check(params, specs, x, target, kFiniteDifferenceStep);
    worst = std::max(worst, r.max_relative_error);
    checked += r.checked;
  }
  const double elapsed = seconds_since(t0);
  report(1, worst < kGradientTolerance && elapsed < kGradientBudgetSeconds,
         fmt("max relative error %.3e over %zu parameters, %.2f s", worst, checked, elapsed));
}

// ---------------------------------------------------------------------------

env::Observation random_observation(std::mt19937_64& rng, sim::Phase phase, const qnet::QNetConfig& cfg) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  env::Observation o;
  for (std::size_t i = 0; i < sim::kLaneCount; ++i) {
    o.count[i] = std::floor(u(rng) * 15);
    o.queue[i] = std::floor(u(rng) * (o.count[i] + 1));
    o.wait[i] = u(rng) * 150 * o.queue[i];
  }
  o.current_phase = phase;
  o.next_phase = sim::next(phase);
  o.grid.rows = cfg.grid_rows;
  o.grid.cols = cfg.grid_cols;
  o.grid.cells.resize(cfg.grid_rows * cfg.grid_cols);
  for (auto& c : o.grid.cells) c = u(rng) < 0.25 ? 1 : 0;
  return o;
}

void gate_isolation() {
  std::mt19937_64 rng(2002);
  std::normal_distribution<double> noise(0.0, 2.0);
  std::size_t violations = 0, checked = 0;
  for (auto phase : {sim::Phase::NS, sim::Phase::WE}) {
    const auto other = sim::next(phase);
    const auto slot = static_cast<std::size_t>(other);
    qnet::PhaseGateQNet net(qnet::QNetConfig{}, 77);
    for (int k = 0; k < 100; ++k) {
      const auto obs = random_observation(rng, phase, net.config());
      auto altered = net;
      for (auto& layer : altered.mutable_branch(other).params.layers) {
        for (auto& v : layer.weight.data) v = noise(rng);
        for (auto& v : layer.bias.data) v = noise(rng);
      }
      const auto a = net.q_values(obs), b = altered.q_values(obs);
      auto ga = net.zero_gradients(), gb = altered.zero_gradients();
      for (auto act : {env::Action::Keep, env::Action::Change}) {
        net.accumulate_gradient(obs, act, 1.0, ga);
        altered.accumulate_gradient(obs, act, 1.0, gb);
      }
      bool ok = a.keep == b.keep && a.change == b.change;
      for (const auto* g : {&ga, &gb}) {
        for (const auto& layer : g->branch[slot].layers) {
          for (double v : layer.weight.data) ok = ok && v == 0.0;
          for (double v : layer.bias.data) ok = ok && v == 0.0;
        }
      }
      violations += !ok;
      ++checked;
    }
  }
  report(2, violations == 0, fmt("%zu of %zu observations affected by the inactive branch", violations, checked));
}

// ---------------------------------------------------------------------------

void palace_balance() {
  // Transitions from a short imbalanced run, topped up until every cell is
  // populated, then a long skewed stream.
  replay::ReplayPalace palace(1000);
  const auto scenario = harness::load_scenario("imbalanced");
  env::TrafficEnv e(harness::SimConfig{}.layout(), scenario.schedule(), env::EnvConfig{}, 3003);
  std::mt19937_64 rng(3003);
  std::bernoulli_distribution change(0.1);
  auto obs = e.observe();
  std::size_t max_cell = 0;
  for (int k = 0; k < 20000; ++k) {
    const auto phase = e.phase();
    const auto action = change(rng) ? env::Action::Change : env::Action::Keep;
    auto res = e.step(action);
    palace.store(replay::Experience{obs, action, res.reward.total, res.observation, phase});
    for (auto c : palace.stats().counts) max_cell = std::max(max_cell, c);
    obs = std::move(res.observation);
  }
  bool exact = true;
  for (int draw = 0; draw < 50; ++draw) {
    std::array<std::size_t, replay::kCellCount> n{};
    for (const auto& x : palace.sample_balanced(300, rng)) ++n[replay::cell_index(x.phase, x.action)];
    for (auto c : n) exact = exact && c == 75;
  }
  report(3, exact && max_cell <= 1000, fmt("75 per cell on every draw: %s, largest cell %zu", exact ? "yes" : "no", max_cell));
}

// ---------------------------------------------------------------------------

void schedule_exactness() {
  const train::Timetable tt{20, 10, sim::Phase::WE};
  std::vector<int> got;
  for (int t = 0; t < 100; t += 5) {
    if (train::timetable_action(tt, t) == env::Action::Change) got.push_back(t);
  }
  const std::vector<int> want{10, 30, 40, 60, 70, 90};
  std::string list;
  for (int t : got) list += (list.empty() ? "" : ",") + std::to_string(t);
  report(4, got == want, "Change at {" + list + "}");
}

// ---------------------------------------------------------------------------

void conservation_and_determinism(const fs::path& work) {
  harness::RunConfig cfg;
  const auto scenario = harness::load_scenario("switch");
  const auto plan = harness::fixed_plan_for("switch");
  env::TrafficEnv e(cfg.sim.layout(), scenario.schedule(), cfg.env, 5005);
  const std::size_t steps = static_cast<std::size_t>(scenario.total_hours * 3600.0 / cfg.env.step_seconds);
  std::size_t broken = 0;
  for (std::size_t k = 0; k < steps; ++k) {
    e.step_with_plan([&](double t) { return plan.phase_at(t); });
    const auto& s = e.state();
    broken += s.entered_total != s.vehicles_inside() + s.exited_total;
  }
  const auto entered = e.state().entered_total;

  const auto a = harness::run_fixed_baseline(scenario, plan, 5005, cfg);
  const auto b = harness::run_fixed_baseline(scenario, plan, 5005, cfg);
  harness::write_run(work / "c5_a", a);
  harness::write_run(work / "c5_b", b);
  const bool same = slurp(work / "c5_a" / "metrics.csv") == slurp(work / "c5_b" / "metrics.csv");
  report(5, broken == 0 && same && entered > 0,
         fmt("%zu steps, %llu vehicles entered, %zu conservation breaks, metrics.csv identical: %s", steps,
             static_cast<unsigned long long>(entered), broken, same ? "yes" : "no"));
}

// ---------------------------------------------------------------------------

struct ScenarioOutcome {
  std::string name;
  double rl_wait = 0.0;
  double fixed_wait = 0.0;
  double seconds = 0.0;
  std::vector<double> online_rewards;
};

ScenarioOutcome run_scenario(const std::string& name, const harness::RunConfig& cfg, const fs::path& work) {
  ScenarioOutcome out;
  out.name = name;
  const auto scenario = harness::load_scenario(name);
  const auto t0 = std::chrono::steady_clock::now();
  auto rl = harness::run_rl(scenario, cfg, 42, work / name / "checkpoints");
  out.seconds = seconds_since(t0);
  harness::write_run(work / name, rl.report, rl.steps);
  const auto fixed = harness::run_fixed_baseline(scenario, harness::fixed_plan_for(name), 42, cfg);
  out.rl_wait = rl.report.headline().wait_s;
  out.fixed_wait = fixed.headline().wait_s;
  const double online_start = cfg.training.offline_hours * 3600.0;
  for (const auto& s : rl.steps) {
    if (s.sim_time >= online_start) out.online_rewards.push_back(s.reward);
  }
  std::printf("  %-10s rl wait %.3f s, fixed wait %.3f s, %.1f s wall\n", name.c_str(), out.rl_wait, out.fixed_wait,
              out.seconds);
  std::fflush(stdout);
  return out;
}

void table_reproduction(const std::vector<ScenarioOutcome>& runs) {
  bool ok = true;
  std::string detail;
  for (const auto& r : runs) {
    bool pass = r.seconds < kScenarioBudgetSeconds;
    if (r.name == "switch") pass = pass && r.rl_wait <= kSwitchWaitRatio * r.fixed_wait;
    else if (r.name == "imbalanced") pass = pass && r.rl_wait <= (1.0 - kImbalancedReduction) * r.fixed_wait;
    else pass = pass && r.rl_wait < r.fixed_wait;
    ok = ok && pass;
    detail += fmt("%s %+.1f%%%s; ", r.name.c_str(), harness::percent_change(r.fixed_wait, r.rl_wait),
                  pass ? "" : " (miss)");
  }
  report(6, ok, detail);
}

double mean(const std::vector<double>& v, std::size_t from, std::size_t to) {
  double s = 0.0;
  for (std::size_t i = from; i < to; ++i) s += v[i];
  return s / static_cast<double>(to - from);
}

// Finds a one-hour rolling mean at least kDipFactor times worse than the hour
// before it near the reversal, then a return above that threshold within the
// recovery window. Rewards are negative, so "worse" means more negative.
bool dip_and_recovery(const std::vector<double>& rewards, double online_start_hour, std::string& detail) {
  const std::size_t n = rewards.size();
  const auto step_at = [&](double hour) {
    return static_cast<std::size_t>(std::llround((hour - online_start_hour) * kStepsPerHour));
  };
  std::vector<double> prefix(n + 1, 0.0);
  for (std::size_t i = 0; i < n; ++i) prefix[i + 1] = prefix[i] + rewards[i];
  const auto rolling = [&](std::size_t end) {
    return (prefix[end] - prefix[end - kStepsPerHour]) / static_cast<double>(kStepsPerHour);
  };
  const std::size_t recovery = static_cast<std::size_t>(kRecoveryHours * kStepsPerHour);
  const std::size_t lo = std::max(step_at(9.0), 2 * kStepsPerHour);
  const std::size_t hi = std::min(step_at(12.0), n);
  for (std::size_t end = lo; end <= hi; end += 12) {
    const double before = rolling(end - kStepsPerHour);
    const double now = rolling(end);
    if (!(before < 0.0 && now <= kDipFactor * before)) continue;
    for (std::size_t later = end + 12; later <= std::min(end + recovery, n); later += 12) {
      if (rolling(later) > kDipFactor * before) {
        detail = fmt("dip to %.1f from %.1f at hour %.2f, recovered to %.1f at hour %.2f", now, before,
                     online_start_hour + end / double(kStepsPerHour), rolling(later),
                     online_start_hour + later / double(kStepsPerHour));
        return true;
      }
    }
    detail = fmt("dip to %.1f from %.1f at hour %.2f without recovery", now, before,
                 online_start_hour + end / double(kStepsPerHour));
    return false;
  }
  detail = "no dip near the reversal";
  return false;
}

void learning_trend(const std::vector<ScenarioOutcome>& runs, double online_start_hour) {
  bool ok = true;
  std::string detail;
  for (const auto& r : runs) {
    const std::size_t n = r.online_rewards.size();
    const std::size_t k = std::max<std::size_t>(1, n / 10);
    const double first = mean(r.online_rewards, 0, k), last = mean(r.online_rewards, n - k, n);
    bool pass = last > first;
    detail += fmt("%s %.1f -> %.1f", r.name.c_str(), first, last);
    if (r.name == "switch") {
      std::string dip;
      const bool d = dip_and_recovery(r.online_rewards, online_start_hour, dip);
      pass = pass && d;
      detail += " (" + dip + ")";
    }
    detail += pass ? "; " : " (miss); ";
    ok = ok && pass;
  }
  report(7, ok, detail);
}

// ---------------------------------------------------------------------------

void constant_fidelity() {
  using harness::FlowRow;
  bool ok = true;
  ok = ok && harness::load_scenario("balanced").flows == std::vector<FlowRow>{{"WE", 720, 0, 20}, {"NS", 720, 0, 20}};
  ok = ok && harness::load_scenario("imbalanced").flows == std::vector<FlowRow>{{"WE", 1440, 0, 20}, {"NS", 240, 0, 20}};
  ok = ok && harness::load_scenario("switch").flows == std::vector<FlowRow>{{"WE", 1440, 0, 10}, {"NS", 1440, 10, 20}};
  ok = ok && harness::load_scenario("hangzhou").flows == std::vector<FlowRow>{{"WE", 716, 0, 20}, {"NS", 1132, 0, 20}};
  const auto plan_is = [](const std::string& s, double we, double ns, double cycle) {
    const auto p = harness::fixed_plan_for(s);
    return p.we_green == we && p.ns_green == ns && p.cycle == cycle;
  };
  ok = ok && plan_is("balanced", 18, 18, 36) && plan_is("imbalanced", 33, 6, 39) && plan_is("switch", 28, 28, 56) &&
       plan_is("hangzhou", 16, 25, 41);
  const auto w = harness::config_from_json_text(harness::config_to_json_text(harness::RunConfig{})).env.weights;
  ok = ok && w == env::RewardWeights{-0.25, -0.25, -0.25, -5.0, -1.0, -1.0};
  const double pct = std::round(harness::percent_change(14.5, 6.2) * 10.0) / 10.0;
  ok = ok && pct == -57.2;
  report(8, ok, fmt("scenarios, plans and reward weights round-trip; compare(14.5, 6.2) = %.1f%%", pct));
}

}  // namespace

int main(int argc, char** argv) {
  const fs::path work = argc > 1 ? fs::path(argv[1]) : fs::temp_directory_path() / "tlc_acceptance";
  fs::remove_all(work);
  fs::create_directories(work);

  gradient_correctness();
  gate_isolation();
  palace_balance();
  schedule_exactness();
  conservation_and_determinism(work);

  const harness::RunConfig cfg;
  std::vector<ScenarioOutcome> runs;
  for (const auto& name : harness::builtin_scenarios()) runs.push_back(run_scenario(name, cfg, work));
  table_reproduction(runs);
  learning_trend(runs, cfg.training.offline_hours);

  constant_fidelity();
  std::printf("%d criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
