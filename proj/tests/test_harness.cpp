#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "tlc/harness.hpp"

using namespace tlc;
using namespace tlc::harness;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("tlc_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

double rate_sum(const sim::ArrivalSchedule& s, sim::Direction d, double t) { return s.rate_at(d, t); }

RunConfig fast_config() {
  RunConfig cfg;
  cfg.network.conv_channels = {2};
  cfg.network.shared_units = {8};
  cfg.network.branch_units = {4};
  cfg.training.offline_epochs = 1;
  return cfg;
}

}  // namespace

TEST_CASE("built-in scenarios") {
  CHECK(builtin_scenarios() == std::vector<std::string>{"balanced", "imbalanced", "switch", "hangzhou"});
  CHECK(load_scenario("balanced").flows == std::vector<FlowRow>{{"WE", 720, 0, 20}, {"NS", 720, 0, 20}});
  CHECK(load_scenario("imbalanced").flows == std::vector<FlowRow>{{"WE", 1440, 0, 20}, {"NS", 240, 0, 20}});
  CHECK(load_scenario("switch").flows == std::vector<FlowRow>{{"WE", 1440, 0, 10}, {"NS", 1440, 10, 20}});
  CHECK(load_scenario("hangzhou").flows == std::vector<FlowRow>{{"WE", 716, 0, 20}, {"NS", 1132, 0, 20}});
  for (const auto& name : builtin_scenarios()) CHECK(load_scenario(name).total_hours == 20.0);
  CHECK_THROWS_AS(load_scenario("rush-hour"), ConfigError);
}

TEST_CASE("axis rows expand to both approaches") {
  const auto s = load_scenario("switch").schedule();
  using sim::Direction;
  CHECK(rate_sum(s, Direction::E, 100) == 1440);
  CHECK(rate_sum(s, Direction::W, 100) == 1440);
  CHECK(rate_sum(s, Direction::N, 100) == 0);
  CHECK(rate_sum(s, Direction::N, 10 * 3600) == 1440);
  CHECK(rate_sum(s, Direction::E, 10 * 3600) == 0);
}

TEST_CASE("scenario files") {
  const auto dir = scratch_dir("scenario");
  SUBCASE("valid file") {
    std::ofstream(dir / "s.json") << R"({"name": "peak", "total_hours": 3,
      "flows": [{"directions": "N", "rate": 500, "start": 0, "end": 3}]})";
    const auto s = load_scenario((dir / "s.json").string());
    CHECK(s.name == "peak");
    CHECK(s.total_hours == 3.0);
    CHECK(s.flows == std::vector<FlowRow>{{"N", 500, 0, 3}});
  }
  SUBCASE("negative rate") {
    std::ofstream(dir / "bad.json") << R"({"name": "x", "total_hours": 3,
      "flows": [{"directions": "WE", "rate": -1, "start": 0, "end": 3}]})";
    CHECK_THROWS_AS(load_scenario((dir / "bad.json").string()), ConfigError);
  }
  SUBCASE("unknown direction") {
    std::ofstream(dir / "bad.json") << R"({"name": "x", "total_hours": 3,
      "flows": [{"directions": "NE", "rate": 10, "start": 0, "end": 3}]})";
    CHECK_THROWS_AS(load_scenario((dir / "bad.json").string()), ConfigError);
  }
  SUBCASE("malformed JSON") {
    std::ofstream(dir / "bad.json") << "{";
    CHECK_THROWS_AS(load_scenario((dir / "bad.json").string()), ConfigError);
  }
}

TEST_CASE("fixed plans") {
  auto same = [](const FixedPlan& p, double we, double ns, double cycle) {
    return p.we_green == we && p.ns_green == ns && p.cycle == cycle;
  };
  CHECK(same(fixed_plan_for("balanced"), 18, 18, 36));
  CHECK(same(fixed_plan_for("imbalanced"), 33, 6, 39));
  CHECK(same(fixed_plan_for("switch"), 28, 28, 56));
  CHECK(same(fixed_plan_for("hangzhou"), 16, 25, 41));
  CHECK_THROWS_AS(fixed_plan_for("nowhere"), InvalidArgument);

  const auto p = fixed_plan_for("imbalanced");
  CHECK(p.phase_at(0) == sim::Phase::WE);
  CHECK(p.phase_at(32.5) == sim::Phase::WE);
  CHECK(p.phase_at(33) == sim::Phase::NS);
  CHECK(p.phase_at(38.9) == sim::Phase::NS);
  CHECK(p.phase_at(39) == sim::Phase::WE);
  CHECK_THROWS_AS((FixedPlan{18, 18, 40}.validate()), InvalidArgument);
}

TEST_CASE("percent change") {
  CHECK(std::round(percent_change(14.5, 6.2) * 10) / 10 == -57.2);
  CHECK(std::round(percent_change(13.8, 1.5) * 10) / 10 == -89.1);
  CHECK(percent_change(80.3, 0.0) == -100.0);
  // Less negative reward is an improvement.
  CHECK(std::round(percent_change(-1.139, -0.903) * 10) / 10 == 20.7);
  CHECK(percent_change(0.0, 0.0) == 0.0);
}

TEST_CASE("compare") {
  MetricSummary fixed{14.5, 204.2, 1.988, -1.139, 0};
  MetricSummary rl{6.2, 169.3, 1.180, -0.903, 0};
  const auto c = compare("balanced", rl, fixed);
  REQUIRE(c.metrics.size() == 4);
  CHECK(c.metrics[0].metric == "wait_s");
  CHECK(c.metrics[0].percent_change == doctest::Approx(-57.2413793));
  CHECK(c.to_csv().rfind("scenario,metric,fixed,rl,percent_change\n", 0) == 0);
  CHECK(c.to_table().find("wait_s") != std::string::npos);

  MetricsReport a, b;
  a.scenario = "balanced";
  b.scenario = "switch";
  a.total_hours = b.total_hours = 1;
  CHECK_THROWS_AS(compare(a, b), InvalidArgument);
}

TEST_CASE("hour rows") {
  HourRow r;
  CHECK(r.wait() == 0.0);
  CHECK(r.travel() == 0.0);
  r.steps = 4;
  r.reward_sum = -10;
  r.wait_sum = 30;
  r.vehicle_steps = 12;
  r.queue_sum = 6;
  r.lane_steps = 48;
  r.travel_sum = 50;
  r.completed = 5;
  CHECK(r.wait() == doctest::Approx(2.5));
  CHECK(r.travel() == doctest::Approx(10.0));
  CHECK(r.queue() == doctest::Approx(0.125));
  CHECK(r.reward() == doctest::Approx(-2.5));
}

TEST_CASE("run configuration JSON") {
  SUBCASE("defaults round-trip") {
    const RunConfig def;
    const auto back = config_from_json_text(config_to_json_text(def));
    CHECK(back.env.weights == def.env.weights);
    CHECK(back.training.gamma == def.training.gamma);
    CHECK(back.training.batch_size == def.training.batch_size);
    CHECK(back.training.optimizer.kind == def.training.optimizer.kind);
    CHECK(back.training.optimizer.learning_rate == def.training.optimizer.learning_rate);
    CHECK(back.training.offline_timetables.size() == def.training.offline_timetables.size());
    CHECK(back.network.conv_channels == def.network.conv_channels);
    CHECK(back.sim.lane_length == def.sim.lane_length);
  }
  SUBCASE("reward defaults") {
    const auto w = config_from_json_text("{}").env.weights;
    CHECK(w == env::RewardWeights{-0.25, -0.25, -0.25, -5.0, -1.0, -1.0});
  }
  SUBCASE("partial override") {
    const auto c = config_from_json_text(R"({"training": {"gamma": 0.5}, "reward": {"change": -2}})");
    CHECK(c.training.gamma == 0.5);
    CHECK(c.env.weights.change == -2.0);
    CHECK(c.training.epsilon == 0.05);
  }
  SUBCASE("invalid values") {
    CHECK_THROWS_AS(config_from_json_text(R"({"training": {"gamma": 2}})"), ConfigError);
    CHECK_THROWS_AS(config_from_json_text(R"({"training": {"update_interval": 7}})"), ConfigError);
    CHECK_THROWS_AS(config_from_json_text(R"({"training": {"optimizer": "lbfgs"}})"), ConfigError);
    CHECK_THROWS_AS(config_from_json_text("[1, 2"), ConfigError);
  }
  CHECK_THROWS_AS(load_config("/nonexistent/cfg.json"), ConfigError);
}

TEST_CASE("fixed baseline") {
  RunConfig cfg;
  SUBCASE("no traffic means no waiting") {
    ScenarioSpec empty{"empty", {{"WE", 0, 0, 1}}, 1};
    const auto r = run_fixed_baseline(empty, fixed_plan_for("balanced"), 1, cfg);
    REQUIRE(r.rows.size() == 1);
    CHECK(r.rows[0].wait() == 0.0);
    CHECK(r.rows[0].queue() == 0.0);
    CHECK(r.rows[0].completed == 0);
    CHECK(r.entered == 0);
  }
  SUBCASE("switch plan makes one-way traffic wait") {
    auto s = load_scenario("switch");
    s.total_hours = 2;
    cfg.training.offline_hours = 0;
    const auto r = run_fixed_baseline(s, fixed_plan_for("switch"), 42, cfg);
    CHECK(r.headline().wait_s > 0.0);
    CHECK(r.headline().queue > 0.0);
    CHECK(r.exited <= r.entered);
    CHECK(r.entered <= r.exited + r.stragglers);
  }
  SUBCASE("same seed, same report") {
    auto s = load_scenario("hangzhou");
    s.total_hours = 1;
    cfg.training.offline_hours = 0;
    const auto a = run_fixed_baseline(s, fixed_plan_for("hangzhou"), 5, cfg);
    const auto b = run_fixed_baseline(s, fixed_plan_for("hangzhou"), 5, cfg);
    const auto dir = scratch_dir("fixed_det");
    write_run(dir / "a", a);
    write_run(dir / "b", b);
    CHECK(slurp(dir / "a" / "metrics.csv") == slurp(dir / "b" / "metrics.csv"));
    const auto c = run_fixed_baseline(s, fixed_plan_for("hangzhou"), 6, cfg);
    write_run(dir / "c", c);
    CHECK(slurp(dir / "a" / "metrics.csv") != slurp(dir / "c" / "metrics.csv"));
  }
}

TEST_CASE("run directory files") {
  auto s = load_scenario("balanced");
  s.total_hours = 3;
  RunConfig cfg;
  cfg.training.offline_hours = 1;
  const auto report = run_fixed_baseline(s, fixed_plan_for("balanced"), 3, cfg);
  const auto dir = scratch_dir("rundir");
  write_run(dir, report);

  std::ifstream in(dir / "metrics.csv");
  std::string line;
  std::getline(in, line);
  CHECK(line == kMetricsHeader);
  std::size_t rows = 0;
  while (std::getline(in, line)) ++rows;
  CHECK(rows == 3);

  const auto sum = read_summary(dir);
  CHECK(sum.scenario == "balanced");
  CHECK(sum.controller == "fixed");
  CHECK(sum.seed == 3);
  CHECK(sum.eval_start_hour == 1.0);
  CHECK(sum.headline.wait_s == doctest::Approx(report.headline().wait_s).epsilon(1e-6));
  CHECK(format_report(dir).find("wait_s") != std::string::npos);
  CHECK_THROWS_AS(read_summary(dir / "missing"), Error);
}

TEST_CASE("short RL run writes checkpoints and step logs") {
  ScenarioSpec s = load_scenario("imbalanced");
  s.total_hours = 1.5;
  auto cfg = fast_config();
  cfg.training.offline_hours = 0.5;
  const auto dir = scratch_dir("rl");
  const auto run = run_rl(s, cfg, 7, dir / "checkpoints");
  CHECK(fs::exists(dir / "checkpoints" / "pretrained.txt"));
  CHECK(fs::exists(dir / "checkpoints" / "hour_01.txt"));
  CHECK(run.steps.size() == 1080);
  CHECK(run.online.steps == 720);
  CHECK(run.online.updates == 12);
  CHECK(run.report.rows.size() == 2);
  CHECK(run.report.eval_start_hour == 0.5);

  const auto reloaded = qnet::PhaseGateQNet::load_file((dir / "checkpoints" / "pretrained.txt").string());
  CHECK(reloaded.config().shared_units == cfg.network.shared_units);

  write_run(dir, run.report, run.steps);
  std::ifstream in(dir / "steps.csv");
  std::string header;
  std::getline(in, header);
  CHECK(header == "step,sim_time_s,phase,action,reward,loss_if_update");

  const auto again = run_rl(s, cfg, 7);
  const auto dir2 = scratch_dir("rl2");
  write_run(dir2, again.report, again.steps);
  CHECK(slurp(dir / "metrics.csv") == slurp(dir2 / "metrics.csv"));
  CHECK(slurp(dir / "steps.csv") == slurp(dir2 / "steps.csv"));
}
