#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <random>

#include "tlc/harness.hpp"

namespace py = pybind11;
using namespace tlc;

namespace {

env::TrafficEnv make_env(const std::string& scenario, std::uint64_t seed) {
  const harness::RunConfig cfg;
  return env::TrafficEnv(cfg.sim.layout(), harness::load_scenario(scenario).schedule(), cfg.env, seed);
}

py::dict reward_dict(const env::RewardBreakdown& r) {
  py::dict d;
  d["delay"] = r.sum_delay;
  d["wait"] = r.sum_wait;
  d["queue"] = r.sum_queue;
  d["change"] = r.change_flag;
  d["passed"] = r.passed_count;
  d["travel_time"] = r.passed_travel_time;
  d["total"] = r.total;
  return d;
}

py::dict summary_dict(const harness::MetricSummary& s) {
  py::dict d;
  d["wait_s"] = s.wait_s;
  d["travel_s"] = s.travel_s;
  d["queue"] = s.queue;
  d["reward"] = s.reward;
  d["completed"] = s.completed;
  return d;
}

// Bad arguments and malformed configs surface as ValueError.
void translate_errors() {
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const InvalidArgument& e) {
      PyErr_SetString(PyExc_ValueError, e.what());
    } catch (const ConfigError& e) {
      PyErr_SetString(PyExc_ValueError, e.what());
    }
  });
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Adaptive traffic-light controller: simulator, Q-network and experiment harness";
  translate_errors();

  py::enum_<sim::Phase>(m, "Phase").value("NS", sim::Phase::NS).value("WE", sim::Phase::WE);
  py::enum_<env::Action>(m, "Action").value("Keep", env::Action::Keep).value("Change", env::Action::Change);

  py::class_<env::Observation>(m, "Observation")
      .def_readonly("queue", &env::Observation::queue)
      .def_readonly("count", &env::Observation::count)
      .def_readonly("wait", &env::Observation::wait)
      .def_readonly("current_phase", &env::Observation::current_phase)
      .def_readonly("next_phase", &env::Observation::next_phase)
      .def_property_readonly("grid_shape",
                             [](const env::Observation& o) { return py::make_tuple(o.grid.rows, o.grid.cols); })
      .def_property_readonly("grid", [](const env::Observation& o) { return o.grid.cells; })
      .def_property_readonly("occupied", [](const env::Observation& o) { return o.grid.occupied(); });

  py::class_<env::TrafficEnv>(m, "TrafficEnv")
      .def(py::init(&make_env), py::arg("scenario"), py::arg("seed") = 42)
      .def("observe", &env::TrafficEnv::observe)
      .def(
          "step",
          [](env::TrafficEnv& e, env::Action a) {
            auto r = e.step(a);
            return py::make_tuple(std::move(r.observation), reward_dict(r.reward));
          },
          py::arg("action"))
      .def_property_readonly("clock", &env::TrafficEnv::clock)
      .def_property_readonly("phase", &env::TrafficEnv::phase)
      .def_property_readonly("entered", [](const env::TrafficEnv& e) { return e.state().entered_total; })
      .def_property_readonly("exited", [](const env::TrafficEnv& e) { return e.state().exited_total; })
      .def_property_readonly("inside", [](const env::TrafficEnv& e) { return e.state().vehicles_inside(); });

  py::class_<qnet::PhaseGateQNet>(m, "PhaseGateQNet")
      .def(py::init([](std::uint64_t seed) { return qnet::PhaseGateQNet(qnet::QNetConfig{}, seed); }),
           py::arg("seed") = 1)
      .def("q_values",
           [](const qnet::PhaseGateQNet& n, const env::Observation& o) {
             const auto q = n.q_values(o);
             return py::make_tuple(q.keep, q.change);
           })
      .def("greedy", [](const qnet::PhaseGateQNet& n, const env::Observation& o) {
        return qnet::greedy_action(n.q_values(o));
      })
      .def_property_readonly("feature_size", &qnet::PhaseGateQNet::feature_size)
      .def_property_readonly("latent_size", &qnet::PhaseGateQNet::latent_size)
      .def("save", &qnet::PhaseGateQNet::save_file, py::arg("path"))
      .def_static("load", &qnet::PhaseGateQNet::load_file, py::arg("path"));

  py::class_<replay::ReplayPalace>(m, "ReplayPalace")
      .def(py::init<std::size_t>(), py::arg("capacity") = 1000)
      .def(
          "store",
          [](replay::ReplayPalace& p, const env::Observation& s, env::Action a, double r,
             const env::Observation& next) { p.store(replay::Experience{s, a, r, next, s.current_phase}); },
          py::arg("state"), py::arg("action"), py::arg("reward"), py::arg("next_state"))
      .def("__len__", &replay::ReplayPalace::size)
      .def_property_readonly("counts", [](const replay::ReplayPalace& p) { return p.stats().counts; })
      .def("quotas", &replay::ReplayPalace::quotas, py::arg("batch_size"))
      .def(
          "sample_balanced",
          [](const replay::ReplayPalace& p, std::size_t n, std::uint64_t seed) {
            std::mt19937_64 rng(seed);
            std::vector<py::tuple> out;
            for (const auto& e : p.sample_balanced(n, rng)) out.push_back(py::make_tuple(e.phase, e.action, e.reward));
            return out;
          },
          py::arg("batch_size"), py::arg("seed") = 0);

  m.def("scenarios", &harness::builtin_scenarios);
  m.def(
      "scenario_flows",
      [](const std::string& name) {
        std::vector<py::tuple> rows;
        for (const auto& f : harness::load_scenario(name).flows)
          rows.push_back(py::make_tuple(f.directions, f.rate, f.start, f.end));
        return rows;
      },
      py::arg("name"));
  m.def(
      "fixed_plan",
      [](const std::string& name) {
        const auto p = harness::fixed_plan_for(name);
        return py::make_tuple(p.we_green, p.ns_green, p.cycle);
      },
      py::arg("scenario"));
  m.def("percent_change", &harness::percent_change, py::arg("fixed"), py::arg("rl"));
  m.def(
      "timetable_action",
      [](double ns_green, double we_green, sim::Phase first, double t) {
        return train::timetable_action(train::Timetable{ns_green, we_green, first}, t);
      },
      py::arg("ns_green"), py::arg("we_green"), py::arg("initial_phase"), py::arg("t"));
  m.def(
      "run_baseline",
      [](const std::string& name, std::uint64_t seed, double total_hours, double offline_hours) {
        auto scenario = harness::load_scenario(name);
        scenario.total_hours = total_hours;
        harness::RunConfig cfg;
        cfg.training.total_hours = total_hours;
        cfg.training.offline_hours = offline_hours;
        harness::MetricsReport report;
        {
          py::gil_scoped_release release;
          report = harness::run_fixed_baseline(scenario, harness::fixed_plan_for(name), seed, cfg);
        }
        py::dict d = summary_dict(report.headline());
        d["entered"] = report.entered;
        d["exited"] = report.exited;
        d["stragglers"] = report.stragglers;
        return d;
      },
      py::arg("scenario"), py::arg("seed") = 42, py::arg("total_hours") = 1.0, py::arg("offline_hours") = 0.0);
}
