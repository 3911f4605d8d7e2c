#include "tlc/harness.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>

#include <json.hpp>

namespace tlc::harness {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

std::vector<sim::Direction> expand_directions(const std::string& d) {
  using sim::Direction;
  if (d == "WE" || d == "EW") return {Direction::E, Direction::W};
  if (d == "NS" || d == "SN") return {Direction::N, Direction::S};
  return {sim::direction_from_string(d)};
}

std::string format_double(double v, int decimals = 6) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
  return buf;
}

}  // namespace

// ---------------------------------------------------------------- scenarios

sim::ArrivalSchedule ScenarioSpec::schedule() const {
  sim::ArrivalSchedule s;
  for (const auto& f : flows) {
    for (auto d : expand_directions(f.directions)) s.entries.push_back({d, f.rate, f.start, f.end});
  }
  return s;
}

void ScenarioSpec::validate() const {
  if (!(total_hours > 0.0)) throw ConfigError("scenario '" + name + "': total_hours must be positive");
  for (const auto& f : flows) {
    try {
      expand_directions(f.directions);
    } catch (const InvalidArgument&) {
      throw ConfigError("scenario '" + name + "': unknown direction '" + f.directions + "'");
    }
  }
  try {
    schedule().validate();
  } catch (const InvalidArgument& e) {
    throw ConfigError("scenario '" + name + "': " + e.what());
  }
}

const std::vector<std::string>& builtin_scenarios() {
  static const std::vector<std::string> names{"balanced", "imbalanced", "switch", "hangzhou"};
  return names;
}

namespace {

std::optional<ScenarioSpec> builtin(const std::string& name) {
  if (name == "balanced") return ScenarioSpec{name, {{"WE", 720, 0, 20}, {"NS", 720, 0, 20}}, 20};
  if (name == "imbalanced") return ScenarioSpec{name, {{"WE", 1440, 0, 20}, {"NS", 240, 0, 20}}, 20};
  if (name == "switch") return ScenarioSpec{name, {{"WE", 1440, 0, 10}, {"NS", 1440, 10, 20}}, 20};
  if (name == "hangzhou") return ScenarioSpec{name, {{"WE", 716, 0, 20}, {"NS", 1132, 0, 20}}, 20};
  return std::nullopt;
}

ScenarioSpec scenario_from_json(const json& j, const std::string& fallback_name) {
  ScenarioSpec s;
  s.name = j.value("name", fallback_name);
  s.total_hours = j.value("total_hours", 20.0);
  if (!j.contains("flows") || !j["flows"].is_array()) throw ConfigError("scenario file needs a 'flows' array");
  for (const auto& f : j["flows"]) {
    s.flows.push_back(FlowRow{f.at("directions").get<std::string>(), f.at("rate").get<double>(),
                              f.at("start").get<double>(), f.at("end").get<double>()});
  }
  s.validate();
  return s;
}

}  // namespace

ScenarioSpec load_scenario(const std::string& name_or_path) {
  if (auto s = builtin(name_or_path)) return *s;
  std::ifstream in(name_or_path);
  if (!in) throw ConfigError("unknown scenario '" + name_or_path + "'");
  try {
    return scenario_from_json(json::parse(in), fs::path(name_or_path).stem().string());
  } catch (const json::exception& e) {
    throw ConfigError("malformed scenario file '" + name_or_path + "': " + e.what());
  }
}

// ------------------------------------------------------------- fixed plans

void FixedPlan::validate() const {
  if (!(we_green > 0.0) || !(ns_green > 0.0)) throw InvalidArgument("fixed plan greens must be positive");
  if (std::abs(cycle - (we_green + ns_green)) > 1e-9) throw InvalidArgument("fixed plan cycle must equal WE + NS");
}

Phase FixedPlan::phase_at(double t) const {
  return train::timetable_phase(train::Timetable{ns_green, we_green, Phase::WE}, t);
}

FixedPlan fixed_plan_for(const std::string& scenario) {
  if (scenario == "balanced") return {18, 18, 36};
  if (scenario == "imbalanced") return {33, 6, 39};
  if (scenario == "switch") return {28, 28, 56};
  if (scenario == "hangzhou") return {16, 25, 41};
  throw InvalidArgument("no fixed plan for scenario '" + scenario + "'");
}

// ------------------------------------------------------------------ config

sim::Layout SimConfig::layout() const {
  auto l = sim::Layout::uniform(lane_length, speed_limit);
  l.min_spacing = min_spacing;
  l.saturation_headway = saturation_headway;
  l.substep = substep;
  l.initial_phase = initial_phase;
  return l;
}

void RunConfig::validate() const {
  sim::build_intersection(sim.layout(), 0);
  env.weights.validate();
  if (!(env.step_seconds > 0.0)) throw ConfigError("environment step must be positive");
  if (std::abs(env.step_seconds - training.step_seconds) > 1e-12) {
    throw ConfigError("environment and training step lengths differ");
  }
  if (env.grid.cells() != network.grid_cols) {
    throw ConfigError("grid has " + std::to_string(env.grid.cells()) + " cells per lane but the network expects " +
                      std::to_string(network.grid_cols));
  }
  network.validate();
  training.validate();
}

namespace {

template <typename T>
void read_opt(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

RunConfig config_from_json_text(const std::string& text) {
  RunConfig c;
  try {
    const auto j = json::parse(text);
    if (j.contains("simulator")) {
      const auto& s = j["simulator"];
      read_opt(s, "lane_length", c.sim.lane_length);
      read_opt(s, "speed_limit", c.sim.speed_limit);
      read_opt(s, "min_spacing", c.sim.min_spacing);
      read_opt(s, "saturation_headway", c.sim.saturation_headway);
      read_opt(s, "substep", c.sim.substep);
      if (s.contains("initial_phase")) c.sim.initial_phase = sim::phase_from_string(s["initial_phase"]);
    }
    if (j.contains("environment")) {
      const auto& e = j["environment"];
      read_opt(e, "step_seconds", c.env.step_seconds);
      read_opt(e, "cell_size", c.env.grid.cell_size);
      read_opt(e, "grid_extent", c.env.grid.extent);
    }
    if (j.contains("reward")) {
      const auto& r = j["reward"];
      read_opt(r, "delay", c.env.weights.delay);
      read_opt(r, "wait", c.env.weights.wait);
      read_opt(r, "queue", c.env.weights.queue);
      read_opt(r, "change", c.env.weights.change);
      read_opt(r, "throughput", c.env.weights.throughput);
      read_opt(r, "travel_time", c.env.weights.travel_time);
    }
    if (j.contains("network")) {
      const auto& n = j["network"];
      read_opt(n, "conv_channels", c.network.conv_channels);
      read_opt(n, "kernel", c.network.kernel);
      read_opt(n, "stride", c.network.stride);
      read_opt(n, "shared_units", c.network.shared_units);
      read_opt(n, "branch_units", c.network.branch_units);
      read_opt(n, "queue_scale", c.network.queue_scale);
      read_opt(n, "count_scale", c.network.count_scale);
      read_opt(n, "wait_scale", c.network.wait_scale);
    }
    if (j.contains("training")) {
      const auto& t = j["training"];
      read_opt(t, "update_interval", c.training.update_interval);
      read_opt(t, "gamma", c.training.gamma);
      read_opt(t, "epsilon", c.training.epsilon);
      read_opt(t, "batch_size", c.training.batch_size);
      read_opt(t, "offline_hours", c.training.offline_hours);
      read_opt(t, "total_hours", c.training.total_hours);
      read_opt(t, "learning_rate", c.training.optimizer.learning_rate);
      read_opt(t, "clip_norm", c.training.optimizer.clip_norm);
      if (t.contains("optimizer")) c.training.optimizer.kind = nn::optimizer_from_string(t["optimizer"].get<std::string>());
      read_opt(t, "adam_beta1", c.training.optimizer.beta1);
      read_opt(t, "adam_beta2", c.training.optimizer.beta2);
      read_opt(t, "adam_epsilon", c.training.optimizer.epsilon);
      read_opt(t, "gradient_steps", c.training.gradient_steps);
      read_opt(t, "reward_scale", c.training.reward_scale);
      read_opt(t, "offline_epochs", c.training.offline_epochs);
      read_opt(t, "palace_capacity", c.training.palace_capacity);
      read_opt(t, "seed", c.training.seed);
      if (t.contains("offline_timetables")) {
        c.training.offline_timetables.clear();
        for (const auto& tt : t["offline_timetables"]) {
          c.training.offline_timetables.push_back(train::Timetable{
              tt.at("ns_green").get<double>(), tt.at("we_green").get<double>(),
              sim::phase_from_string(tt.value("initial_phase", std::string("WE")))});
        }
      }
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed config: ") + e.what());
  } catch (const InvalidArgument& e) {
    throw ConfigError(std::string("malformed config: ") + e.what());
  }
  c.training.step_seconds = c.env.step_seconds;
  c.network.grid_rows = sim::kLaneCount;
  c.network.grid_cols = c.env.grid.cells();
  try {
    c.validate();
  } catch (const InvalidArgument& e) {
    throw ConfigError(std::string("invalid config: ") + e.what());
  }
  return c;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return config_from_json_text(ss.str());
}

std::string config_to_json_text(const RunConfig& c) {
  json j;
  j["simulator"] = {{"lane_length", c.sim.lane_length},
                    {"speed_limit", c.sim.speed_limit},
                    {"min_spacing", c.sim.min_spacing},
                    {"saturation_headway", c.sim.saturation_headway},
                    {"substep", c.sim.substep},
                    {"initial_phase", sim::to_string(c.sim.initial_phase)}};
  j["environment"] = {
      {"step_seconds", c.env.step_seconds}, {"cell_size", c.env.grid.cell_size}, {"grid_extent", c.env.grid.extent}};
  j["reward"] = {{"delay", c.env.weights.delay},           {"wait", c.env.weights.wait},
                 {"queue", c.env.weights.queue},           {"change", c.env.weights.change},
                 {"throughput", c.env.weights.throughput}, {"travel_time", c.env.weights.travel_time}};
  j["network"] = {{"conv_channels", c.network.conv_channels}, {"kernel", c.network.kernel},
                  {"stride", c.network.stride},               {"shared_units", c.network.shared_units},
                  {"branch_units", c.network.branch_units},   {"queue_scale", c.network.queue_scale},
                  {"count_scale", c.network.count_scale},     {"wait_scale", c.network.wait_scale}};
  json tts = json::array();
  for (const auto& tt : c.training.offline_timetables) {
    tts.push_back({{"ns_green", tt.ns_green}, {"we_green", tt.we_green},
                   {"initial_phase", sim::to_string(tt.initial_phase)}});
  }
  j["training"] = {{"update_interval", c.training.update_interval},
                   {"gamma", c.training.gamma},
                   {"epsilon", c.training.epsilon},
                   {"batch_size", c.training.batch_size},
                   {"offline_hours", c.training.offline_hours},
                   {"total_hours", c.training.total_hours},
                   {"learning_rate", c.training.optimizer.learning_rate},
                   {"clip_norm", c.training.optimizer.clip_norm},
                   {"optimizer", nn::to_string(c.training.optimizer.kind)},
                   {"adam_beta1", c.training.optimizer.beta1},
                   {"adam_beta2", c.training.optimizer.beta2},
                   {"adam_epsilon", c.training.optimizer.epsilon},
                   {"gradient_steps", c.training.gradient_steps},
                   {"reward_scale", c.training.reward_scale},
                   {"offline_epochs", c.training.offline_epochs},
                   {"palace_capacity", c.training.palace_capacity},
                   {"seed", c.training.seed},
                   {"offline_timetables", tts}};
  return j.dump(2);
}

// ----------------------------------------------------------------- metrics

double HourRow::wait() const { return vehicle_steps > 0 ? wait_sum / vehicle_steps : 0.0; }
double HourRow::travel() const { return completed > 0 ? travel_sum / static_cast<double>(completed) : 0.0; }
double HourRow::queue() const { return lane_steps > 0 ? queue_sum / lane_steps : 0.0; }
double HourRow::reward() const { return steps > 0 ? reward_sum / static_cast<double>(steps) : 0.0; }

MetricSummary MetricsReport::summary(double from_hour, double to_hour) const {
  HourRow total;
  for (const auto& r : rows) {
    const double h = static_cast<double>(r.hour);
    if (h + 1e-9 < from_hour || h + 1e-9 >= to_hour) continue;
    total.steps += r.steps;
    total.reward_sum += r.reward_sum;
    total.wait_sum += r.wait_sum;
    total.vehicle_steps += r.vehicle_steps;
    total.queue_sum += r.queue_sum;
    total.lane_steps += r.lane_steps;
    total.travel_sum += r.travel_sum;
    total.completed += r.completed;
  }
  return MetricSummary{total.wait(), total.travel(), total.queue(), total.reward(), total.completed};
}

MetricsAccumulator::MetricsAccumulator(double total_hours) {
  const auto n = static_cast<std::size_t>(std::ceil(total_hours - 1e-9));
  rows_.resize(n);
  for (std::size_t h = 0; h < n; ++h) rows_[h].hour = h;
}

void MetricsAccumulator::add(double step_start_clock, const env::StepResult& step) {
  auto h = static_cast<std::size_t>(std::floor(step_start_clock / 3600.0 + 1e-12));
  if (h >= rows_.size()) return;
  auto& r = rows_[h];
  ++r.steps;
  r.reward_sum += step.reward.total;
  for (const auto& lane : step.snapshot.lanes) {
    r.wait_sum += lane.wait;
    r.vehicle_steps += lane.count;
    r.queue_sum += lane.queue;
    r.lane_steps += 1.0;
  }
  for (const auto& e : step.exits) {
    r.travel_sum += e.travel_time();
    ++r.completed;
  }
}

// ----------------------------------------------------------------- runners

MetricsReport run_fixed_baseline(const ScenarioSpec& scenario, const FixedPlan& plan, std::uint64_t seed,
                                 const RunConfig& cfg) {
  scenario.validate();
  plan.validate();
  env::TrafficEnv environment(cfg.sim.layout(), scenario.schedule(), cfg.env, seed);
  MetricsAccumulator acc(scenario.total_hours);
  const auto steps = static_cast<std::size_t>(std::llround(scenario.total_hours * 3600.0 / cfg.env.step_seconds));
  auto phase_at = [&plan](double t) { return plan.phase_at(t); };
  for (std::size_t k = 0; k < steps; ++k) {
    const double clock = environment.clock();
    acc.add(clock, environment.step_with_plan(phase_at));
  }
  MetricsReport report;
  report.scenario = scenario.name;
  report.controller = "fixed";
  report.seed = seed;
  report.total_hours = scenario.total_hours;
  report.eval_start_hour = std::min(cfg.training.offline_hours, scenario.total_hours);
  report.rows = acc.rows();
  report.stragglers = environment.state().vehicles_inside() + environment.state().deferred_total();
  report.entered = environment.state().entered_total;
  report.exited = environment.state().exited_total;
  return report;
}

RlRun run_rl(const ScenarioSpec& scenario, const RunConfig& cfg_in, std::uint64_t seed,
             const std::optional<fs::path>& checkpoint_dir) {
  scenario.validate();
  RunConfig cfg = cfg_in;
  cfg.training.seed = seed;
  cfg.training.total_hours = scenario.total_hours;
  cfg.validate();

  env::TrafficEnv environment(cfg.sim.layout(), scenario.schedule(), cfg.env, seed);
  RlRun run;
  run.net = qnet::PhaseGateQNet(cfg.network, seed);
  MetricsAccumulator acc(scenario.total_hours);
  if (checkpoint_dir) fs::create_directories(*checkpoint_dir);

  auto observer = [&](const train::StepRecord& rec) {
    acc.add(rec.sim_time, *rec.result);
    run.steps.push_back(StepLogRow{rec.step, rec.sim_time, rec.phase, rec.action, rec.result->reward.total, rec.loss});
    if (rec.online && checkpoint_dir) {
      const double end = rec.sim_time + cfg.env.step_seconds;
      const double hours = end / 3600.0;
      if (std::abs(hours - std::round(hours)) < 1e-9) {
        char name[32];
        std::snprintf(name, sizeof name, "hour_%02d.txt", static_cast<int>(std::lround(hours)));
        rec.net->save_file((*checkpoint_dir / name).string());
      }
    }
  };

  run.offline = train::offline_pretrain(environment, cfg.training.offline_timetables, cfg.training, run.net, observer);
  if (checkpoint_dir) run.net.save_file((*checkpoint_dir / "pretrained.txt").string());

  replay::ReplayPalace palace(cfg.training.palace_capacity);
  for (const auto& e : run.offline.experiences) palace.store(e);
  run.online = train::online_train(environment, run.net, palace, cfg.training, observer, std::nullopt,
                                   cfg.training.offline_steps());

  auto& report = run.report;
  report.scenario = scenario.name;
  report.controller = "rl";
  report.seed = seed;
  report.total_hours = scenario.total_hours;
  report.eval_start_hour = cfg.training.offline_hours;
  report.rows = acc.rows();
  report.stragglers = environment.state().vehicles_inside() + environment.state().deferred_total();
  report.entered = environment.state().entered_total;
  report.exited = environment.state().exited_total;
  return run;
}

// -------------------------------------------------------------- comparison

double percent_change(double fixed, double rl) {
  if (fixed == 0.0) {
    if (rl == 0.0) return 0.0;
    return rl > 0.0 ? std::numeric_limits<double>::infinity() : -std::numeric_limits<double>::infinity();
  }
  return (rl - fixed) / std::abs(fixed) * 100.0;
}

Comparison compare(const std::string& scenario, const MetricSummary& rl, const MetricSummary& fixed) {
  Comparison c;
  c.scenario = scenario;
  auto add = [&](const char* name, double f, double r) { c.metrics.push_back({name, f, r, percent_change(f, r)}); };
  add("wait_s", fixed.wait_s, rl.wait_s);
  add("travel_s", fixed.travel_s, rl.travel_s);
  add("queue", fixed.queue, rl.queue);
  add("reward", fixed.reward, rl.reward);
  return c;
}

Comparison compare(const MetricsReport& rl, const MetricsReport& fixed) {
  if (std::abs(rl.total_hours - fixed.total_hours) > 1e-9 ||
      std::abs(rl.eval_start_hour - fixed.eval_start_hour) > 1e-9) {
    throw InvalidArgument("cannot compare reports with different horizons");
  }
  if (rl.scenario != fixed.scenario) throw InvalidArgument("cannot compare reports from different scenarios");
  return compare(rl.scenario, rl.headline(), fixed.headline());
}

std::string Comparison::to_csv() const {
  std::string out = "scenario,metric,fixed,rl,percent_change\n";
  for (const auto& m : metrics) {
    out += scenario + "," + m.metric + "," + format_double(m.fixed) + "," + format_double(m.rl) + "," +
           format_double(m.percent_change, 1) + "\n";
  }
  return out;
}

std::string Comparison::to_table() const {
  std::ostringstream out;
  char line[160];
  std::snprintf(line, sizeof line, "%-10s %14s %14s %10s\n", "metric", "fixed", "rl", "change");
  out << "scenario: " << scenario << "\n" << line;
  for (const auto& m : metrics) {
    std::snprintf(line, sizeof line, "%-10s %14.3f %14.3f %+9.1f%%\n", m.metric.c_str(), m.fixed, m.rl,
                  m.percent_change);
    out << line;
  }
  return out.str();
}

// ---------------------------------------------------------------- run dirs

void write_metrics_csv(const fs::path& path, const MetricsReport& report) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << kMetricsHeader << "\n";
  for (const auto& r : report.rows) {
    out << r.hour << "," << format_double(r.wait()) << "," << format_double(r.travel()) << ","
        << format_double(r.queue()) << "," << format_double(r.reward()) << "\n";
  }
}

void write_steps_csv(const fs::path& path, const std::vector<StepLogRow>& rows) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << "step,sim_time_s,phase,action,reward,loss_if_update\n";
  for (const auto& r : rows) {
    out << r.step << "," << format_double(r.sim_time, 1) << "," << sim::to_string(r.phase) << ","
        << env::to_string(r.action) << "," << format_double(r.reward) << ","
        << (r.loss ? format_double(*r.loss) : std::string()) << "\n";
  }
}

void write_summary(const fs::path& path, const MetricsReport& report) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  const auto h = report.headline();
  const auto all = report.summary(0.0, report.total_hours);
  out << "scenario = " << report.scenario << "\n"
      << "controller = " << report.controller << "\n"
      << "seed = " << report.seed << "\n"
      << "total_hours = " << format_double(report.total_hours, 3) << "\n"
      << "eval_start_hour = " << format_double(report.eval_start_hour, 3) << "\n"
      << "wait_s = " << format_double(h.wait_s) << "\n"
      << "travel_s = " << format_double(h.travel_s) << "\n"
      << "queue = " << format_double(h.queue) << "\n"
      << "reward = " << format_double(h.reward) << "\n"
      << "completed = " << h.completed << "\n"
      << "all_hours_wait_s = " << format_double(all.wait_s) << "\n"
      << "all_hours_travel_s = " << format_double(all.travel_s) << "\n"
      << "all_hours_queue = " << format_double(all.queue) << "\n"
      << "all_hours_reward = " << format_double(all.reward) << "\n"
      << "entered = " << report.entered << "\n"
      << "exited = " << report.exited << "\n"
      << "stragglers = " << report.stragglers << "\n";
}

void write_run(const fs::path& dir, const MetricsReport& report, const std::vector<StepLogRow>& steps) {
  fs::create_directories(dir);
  write_metrics_csv(dir / "metrics.csv", report);
  write_steps_csv(dir / "steps.csv", steps);
  write_summary(dir / "summary.txt", report);
}

RunSummary read_summary(const fs::path& dir) {
  std::ifstream in(dir / "summary.txt");
  if (!in) throw Error("no summary.txt in " + dir.string());
  std::map<std::string, std::string> kv;
  std::string line;
  while (std::getline(in, line)) {
    const auto eq = line.find(" = ");
    if (eq == std::string::npos) continue;
    kv[line.substr(0, eq)] = line.substr(eq + 3);
  }
  auto get = [&](const std::string& key) -> const std::string& {
    auto it = kv.find(key);
    if (it == kv.end()) throw ConfigError("summary.txt in " + dir.string() + " lacks '" + key + "'");
    return it->second;
  };
  RunSummary s;
  s.scenario = get("scenario");
  s.controller = get("controller");
  s.seed = std::stoull(get("seed"));
  s.total_hours = std::stod(get("total_hours"));
  s.eval_start_hour = std::stod(get("eval_start_hour"));
  s.headline.wait_s = std::stod(get("wait_s"));
  s.headline.travel_s = std::stod(get("travel_s"));
  s.headline.queue = std::stod(get("queue"));
  s.headline.reward = std::stod(get("reward"));
  s.headline.completed = std::stoull(get("completed"));
  s.stragglers = std::stoull(get("stragglers"));
  return s;
}

Comparison compare_runs(const fs::path& rl_dir, const fs::path& fixed_dir) {
  const auto rl = read_summary(rl_dir);
  const auto fixed = read_summary(fixed_dir);
  if (std::abs(rl.total_hours - fixed.total_hours) > 1e-9 ||
      std::abs(rl.eval_start_hour - fixed.eval_start_hour) > 1e-9) {
    throw InvalidArgument("cannot compare runs with different horizons");
  }
  if (rl.scenario != fixed.scenario) throw InvalidArgument("cannot compare runs from different scenarios");
  return compare(rl.scenario, rl.headline, fixed.headline);
}

std::string format_report(const fs::path& dir) {
  const auto s = read_summary(dir);
  std::ifstream in(dir / "metrics.csv");
  if (!in) throw Error("no metrics.csv in " + dir.string());
  std::ostringstream out;
  out << "run: " << dir.string() << "\n"
      << "scenario " << s.scenario << ", controller " << s.controller << ", seed " << s.seed << "\n"
      << "headline window: hours " << s.eval_start_hour << "-" << s.total_hours << "\n";
  char line[160];
  std::snprintf(line, sizeof line, "%5s %10s %10s %8s %12s\n", "hour", "wait_s", "travel_s", "queue", "reward");
  out << line;
  std::string row;
  std::getline(in, row);
  if (row != kMetricsHeader) throw ConfigError("unexpected metrics.csv header in " + dir.string());
  while (std::getline(in, row)) {
    std::istringstream ss(row);
    std::string cell;
    std::vector<std::string> cells;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() != 5) throw ConfigError("malformed metrics.csv row: " + row);
    std::snprintf(line, sizeof line, "%5s %10.2f %10.2f %8.3f %12.3f\n", cells[0].c_str(), std::stod(cells[1]),
                  std::stod(cells[2]), std::stod(cells[3]), std::stod(cells[4]));
    out << line;
  }
  std::snprintf(line, sizeof line, "%5s %10.2f %10.2f %8.3f %12.3f\n", "mean", s.headline.wait_s,
                s.headline.travel_s, s.headline.queue, s.headline.reward);
  out << line << "completed trips " << s.headline.completed << ", stragglers " << s.stragglers << "\n";
  return out.str();
}

}  // namespace tlc::harness
