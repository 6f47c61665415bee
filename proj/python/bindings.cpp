#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "bsim/log_format.hpp"
#include "bsim/pipeline.hpp"

namespace py = pybind11;
using namespace bsim;

namespace {

RunConfig config_from(const std::string& json_text) {
  return run_config_from_json(json_text.empty() ? nlohmann::json{{"version", RunConfig::kVersion}}
                                                : nlohmann::json::parse(json_text));
}

py::array_t<int> py_distance_map(py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast> mask,
                                 int saturation) {
  if (mask.ndim() != 2) throw py::value_error("mask must be 2-D");
  const int rows = static_cast<int>(mask.shape(0)), cols = static_cast<int>(mask.shape(1));
  const DistanceMap dm = distance_map({mask.data(), static_cast<std::size_t>(mask.size())}, rows, cols, saturation);
  py::array_t<int> out({rows, cols});
  std::copy(dm.values.begin(), dm.values.end(), out.mutable_data());
  return out;
}

double py_emd(py::array_t<double, py::array::c_style | py::array::forcecast> xs, std::vector<double> a,
              py::array_t<double, py::array::c_style | py::array::forcecast> ys, std::vector<double> b) {
  const auto points = [](const py::array_t<double, py::array::c_style | py::array::forcecast>& p) {
    if (p.ndim() != 2 || p.shape(1) != 2) throw py::value_error("points must have shape (n, 2)");
    std::vector<Vec2> v;
    for (py::ssize_t i = 0; i < p.shape(0); ++i) v.push_back({p.at(i, 0), p.at(i, 1)});
    return v;
  };
  return emd_points(points(xs), a, points(ys), b);
}

py::array_t<double> py_ou(py::array_t<double, py::array::c_style | py::array::forcecast> xy, double theta, double sigma,
                          double dt, std::uint64_t seed) {
  if (xy.ndim() != 2 || xy.shape(1) != 2) throw py::value_error("trajectory must have shape (n, 2)");
  std::vector<AgentState> traj(static_cast<std::size_t>(xy.shape(0)));
  for (std::size_t i = 0; i < traj.size(); ++i) {
    traj[i].x = xy.at(static_cast<py::ssize_t>(i), 0);
    traj[i].y = xy.at(static_cast<py::ssize_t>(i), 1);
  }
  const auto p = ou_perturb(traj, theta, sigma, dt, seed);
  py::array_t<double> out({static_cast<py::ssize_t>(p.size()), py::ssize_t{2}});
  auto m = out.mutable_unchecked<2>();
  for (std::size_t i = 0; i < p.size(); ++i) {
    m(static_cast<py::ssize_t>(i), 0) = p[i].x;
    m(static_cast<py::ssize_t>(i), 1) = p[i].y;
  }
  return out;
}

py::dict stage(const StageResult& s) {
  py::dict d;
  d["dir"] = s.dir;
  d["hash"] = s.hash;
  d["reused"] = s.reused;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "bsim core bindings";
  py::register_exception<Error>(m, "BsimError", PyExc_RuntimeError);

  m.def("sigmoid", &sigmoid);
  m.def("wrap_angle", &wrap_angle);
  m.def("distance_map", &py_distance_map, py::arg("mask"), py::arg("saturation") = 20);
  m.def("emd_points", &py_emd, py::arg("xs"), py::arg("a"), py::arg("ys"), py::arg("b"));
  m.def("ou_perturb", &py_ou, py::arg("xy"), py::arg("theta"), py::arg("sigma"), py::arg("dt") = 0.1,
        py::arg("seed") = 0);
  m.def(
      "step",
      [](py::tuple s, double speed_cmd, double yaw_rate) {
        AgentState a{.x = s[0].cast<double>(), .y = s[1].cast<double>(), .heading = s[2].cast<double>(),
                     .speed = s[3].cast<double>()};
        const AgentState b = step(a, Control{speed_cmd, yaw_rate}, Limits{});
        return py::make_tuple(b.x, b.y, b.heading, b.speed);
      },
      py::arg("state"), py::arg("speed_cmd"), py::arg("yaw_rate"));
  m.def(
      "expert_log",
      [](const std::string& kind, int agents, double seconds, std::uint64_t seed) {
        MapSpec spec;
        spec.kind = map_kind_from_string(kind);
        spec.seed = seed;
        return serialize_log(gen_expert_log(gen_map(spec), agents, seconds, seed));
      },
      py::arg("kind") = "straight", py::arg("agents") = 4, py::arg("seconds") = 10.0, py::arg("seed") = 0);

  m.def("default_config", [] { return to_json(RunConfig{}).dump(); });
  m.def("resolve_config", [](const std::string& j) { return to_json(config_from(j)).dump(); }, py::arg("config") = "");
  m.def("gen", [](const std::string& j) { return stage(cmd_gen(config_from(j))); }, py::arg("config") = "");
  m.def("train", [](const std::string& j) { return stage(cmd_train(config_from(j))); }, py::arg("config") = "");
  m.def("sim", [](const std::string& j) { return stage(cmd_sim(config_from(j))); }, py::arg("config") = "");
  m.def(
      "eval", [](const std::string& j) { return cmd_eval(config_from(j)).to_json().dump(); }, py::arg("config") = "");
  m.def(
      "sweep",
      [](const std::string& j, const std::string& axis) {
        nlohmann::json out = nlohmann::json::array();
        for (const auto& r : cmd_sweep(config_from(j), axis)) out.push_back(r.to_json());
        return out.dump();
      },
      py::arg("config"), py::arg("axis"));
  m.def("plot", &cmd_plot, py::arg("rollout"), py::arg("out") = "");
}
