#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <map>
#include <sstream>

#include "cli.hpp"
#include "ipmocp/barrier.hpp"
#include "ipmocp/continuation.hpp"
#include "ipmocp/io.hpp"
#include "ipmocp/problems.hpp"

namespace py = pybind11;
using namespace ipmocp;

namespace {

// Python callables wrapped as problem callbacks; the GIL is held because
// every solve runs on the calling thread.
VectorFn vector_fn(py::function f) {
  return [f](const Vector& x) { return f(x).cast<Vector>(); };
}

MatrixFn matrix_fn(py::function f) {
  return [f](const Vector& x) { return f(x).cast<Matrix>(); };
}

ScalarFn scalar_fn(py::function f) {
  return [f](const Vector& x) { return f(x).cast<double>(); };
}

ContractionFn contraction_fn(py::function f) {
  return [f](const Vector& x, const Vector& u) { return f(x, u).cast<Matrix>(); };
}

void set_derivative(OcpProblem& pb, const std::string& name, py::function f) {
  if (name == "f1_x") pb.f1_x = matrix_fn(f);
  else if (name == "f2u_x") pb.f2u_x = contraction_fn(f);
  else if (name == "l1_x") pb.l1_x = vector_fn(f);
  else if (name == "l2_x") pb.l2_x = matrix_fn(f);
  else if (name == "phi_x") pb.phi_x = vector_fn(f);
  else if (name == "g_x") pb.g_x = matrix_fn(f);
  else if (name == "au_x") pb.au_x = contraction_fn(f);
  else if (name == "b_x") pb.b_x = matrix_fn(f);
  else if (name == "lagrangian_hessian") {
    pb.lagrangian_hessian = [f](const Vector& x, const Vector& u, const Vector& p, const Vector& theta,
                                const Vector& eta) { return f(x, u, p, theta, eta).cast<Matrix>(); };
  } else {
    throw ConfigError("unknown derivative callback '" + name + "'");
  }
}

OcpProblem custom_problem(const std::string& name, Index nx, Index nu, Index ng, Index nc, double horizon,
                          const Vector& x0, py::function f1, py::function f2, py::function l1, py::function l2,
                          py::function g, py::function a, py::function b, std::optional<py::function> phi,
                          const std::map<std::string, py::function>& derivatives) {
  OcpProblem pb;
  pb.name = name;
  pb.nx = nx;
  pb.nu = nu;
  pb.ng = ng;
  pb.nc = nc;
  pb.horizon = horizon;
  pb.f1 = vector_fn(f1);
  pb.f2 = matrix_fn(f2);
  pb.l1 = scalar_fn(l1);
  pb.l2 = vector_fn(l2);
  pb.g = vector_fn(g);
  pb.a = matrix_fn(a);
  pb.b = vector_fn(b);
  if (phi) pb.phi = scalar_fn(*phi);
  for (const auto& [name, f] : derivatives) set_derivative(pb, name, f);
  pb.bc = BoundaryConditions::fixed_initial(x0);
  pb.check();
  return pb;
}

py::dict trajectory_dict(const Trajectory& tr) {
  py::dict d;
  d["t"] = tr.t;
  d["x"] = tr.x;
  d["p"] = tr.p;
  d["u"] = tr.u;
  d["theta"] = tr.theta;
  d["eta"] = tr.eta;
  d["lambda"] = tr.lambda;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Interior-point solver for state- and mixed-constrained optimal control";

  // Translators registered later are tried first: base class first.
  py::register_exception<Error>(m, "SolverError", PyExc_RuntimeError);
  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<io::IoError>(m, "IoError", PyExc_OSError);
  py::register_exception<InteriorityError>(m, "InteriorityError", PyExc_ArithmeticError);

  py::class_<OcpProblem>(m, "OcpProblem")
      .def_readonly("name", &OcpProblem::name)
      .def_readonly("nx", &OcpProblem::nx)
      .def_readonly("nu", &OcpProblem::nu)
      .def_readonly("ng", &OcpProblem::ng)
      .def_readonly("nc", &OcpProblem::nc)
      .def_readonly("horizon", &OcpProblem::horizon)
      .def("dynamics", [](const OcpProblem& p, const Vector& x, const Vector& u) { return eval_dynamics(p, x, u); })
      .def("state_constraints", [](const OcpProblem& p, const Vector& x) { return eval_state_constraints(p, x); })
      .def("mixed_constraints", [](const OcpProblem& p, const Vector& x, const Vector& u) { return eval_mixed(p, x, u); })
      .def("__repr__", [](const OcpProblem& p) {
        std::ostringstream s;
        s << "<OcpProblem " << p.name << " nx=" << p.nx << " nu=" << p.nu << " ng=" << p.ng << " nc=" << p.nc
          << " T=" << p.horizon << ">";
        return s.str();
      });

  m.def("robbins_problem", &robbins_problem);
  m.def("lq_example", &lq_example, py::arg("general_bc") = false);
  m.def("problem_by_name", &problem_by_name);
  m.def("problem_names", &problem_names);
  m.def("custom_problem", &custom_problem, py::arg("name"), py::arg("nx"), py::arg("nu"), py::arg("ng"),
        py::arg("nc"), py::arg("horizon"), py::arg("x0"), py::arg("f1"), py::arg("f2"), py::arg("l1"),
        py::arg("l2"), py::arg("g"), py::arg("a"), py::arg("b"), py::arg("phi") = py::none(),
        py::arg("derivatives") = std::map<std::string, py::function>{},
        "Control-affine problem from Python callables. `derivatives` maps f1_x, f2u_x, l1_x, l2_x, phi_x, g_x,\n"
        "au_x, b_x or lagrangian_hessian to callables; absent ones use finite differences.");

  m.def("log_barrier", &log_barrier);
  m.def("log_barrier_deriv", &log_barrier_deriv);
  m.def("smoothing_residual", &smoothing_residual, py::arg("theta"), py::arg("w"), py::arg("eps"));
  m.def("planned_stage_count", &planned_stage_count, py::arg("eps0"), py::arg("alpha"), py::arg("tol"));

  py::class_<ContinuationConfig>(m, "ContinuationConfig")
      .def(py::init([](double eps0, double alpha, double tol, Index mesh_points, double mesh_tol, int max_stages,
                       Index node_budget) {
             ContinuationConfig c;
             c.eps0 = eps0;
             c.alpha = alpha;
             c.tol = tol;
             c.mesh_points = mesh_points;
             c.mesh_tol = mesh_tol;
             c.max_stages = max_stages;
             c.solver.max_nodes = node_budget;
             c.check();
             return c;
           }),
           py::arg("eps0") = 0.1, py::arg("alpha") = 0.8, py::arg("tol") = 1e-8, py::arg("mesh_points") = 101,
           py::arg("mesh_tol") = 1e-5, py::arg("max_stages") = 10000, py::arg("node_budget") = 10000)
      .def_readwrite("eps0", &ContinuationConfig::eps0)
      .def_readwrite("alpha", &ContinuationConfig::alpha)
      .def_readwrite("tol", &ContinuationConfig::tol)
      .def_readwrite("mesh_points", &ContinuationConfig::mesh_points)
      .def_readwrite("mesh_tol", &ContinuationConfig::mesh_tol)
      .def_readwrite("max_stages", &ContinuationConfig::max_stages)
      .def_property(
          "node_budget", [](const ContinuationConfig& c) { return c.solver.max_nodes; },
          [](ContinuationConfig& c, Index n) { c.solver.max_nodes = n; })
      .def("stage_tolerance", &ContinuationConfig::stage_tolerance);

  py::class_<StationarityReport>(m, "StationarityReport")
      .def_readonly("adjoint", &StationarityReport::adjoint)
      .def_readonly("hamiltonian", &StationarityReport::hamiltonian)
      .def_readonly("boundary", &StationarityReport::boundary)
      .def_readonly("complementarity_g", &StationarityReport::complementarity_g)
      .def_readonly("complementarity_c", &StationarityReport::complementarity_c)
      .def_readonly("signs_ok", &StationarityReport::signs_ok);

  py::class_<StageDiagnostics>(m, "StageDiagnostics")
      .def_readonly("stage", &StageDiagnostics::stage)
      .def_readonly("eps", &StageDiagnostics::eps)
      .def_readonly("success", &StageDiagnostics::success)
      .def_readonly("retried", &StageDiagnostics::retried)
      .def_readonly("error", &StageDiagnostics::error)
      .def_readonly("cost", &StageDiagnostics::cost)
      .def_readonly("penalized_cost", &StageDiagnostics::penalized_cost)
      .def_readonly("min_slack_g", &StageDiagnostics::min_slack_g)
      .def_readonly("min_slack_c", &StageDiagnostics::min_slack_c)
      .def_readonly("l1_g", &StageDiagnostics::l1_g)
      .def_readonly("l1_c", &StageDiagnostics::l1_c)
      .def_readonly("p_inf", &StageDiagnostics::p_inf)
      .def_readonly("p_jump", &StageDiagnostics::p_jump)
      .def_readonly("pointwise_comp_g", &StageDiagnostics::pointwise_comp_g)
      .def_readonly("pointwise_comp_c", &StageDiagnostics::pointwise_comp_c)
      .def_readonly("stationarity", &StageDiagnostics::stationarity)
      .def_readonly("state_change", &StageDiagnostics::state_change)
      .def_readonly("cost_change", &StageDiagnostics::cost_change)
      .def_readonly("newton_iterations", &StageDiagnostics::newton_iterations)
      .def_readonly("mesh_nodes", &StageDiagnostics::mesh_nodes)
      .def_readonly("wall_time", &StageDiagnostics::wall_time);

  py::class_<TrailReport>(m, "TrailReport")
      .def_readonly("name", &TrailReport::name)
      .def_readonly("values", &TrailReport::values)
      .def_readonly("first_quarter_max", &TrailReport::first_quarter_max)
      .def_readonly("last_quarter_max", &TrailReport::last_quarter_max)
      .def_readonly("bounded", &TrailReport::bounded);

  py::class_<BoundednessReport>(m, "BoundednessReport")
      .def_readonly("enough_stages", &BoundednessReport::enough_stages)
      .def_readonly("l1_g", &BoundednessReport::l1_g)
      .def_readonly("l1_c", &BoundednessReport::l1_c)
      .def_readonly("p_inf", &BoundednessReport::p_inf)
      .def("all_bounded", &BoundednessReport::all_bounded);

  py::class_<ContinuationRun>(m, "ContinuationRun")
      .def_property_readonly("algorithm", [](const ContinuationRun& r) { return to_string(r.formulation); })
      .def_property_readonly("status", [](const ContinuationRun& r) { return to_string(r.status); })
      .def_readonly("stage", &ContinuationRun::stage)
      .def_readonly("eps", &ContinuationRun::eps)
      .def_readonly("stages", &ContinuationRun::stages)
      .def_readonly("failed_stage", &ContinuationRun::failed_stage)
      .def_readonly("failure", &ContinuationRun::failure)
      .def_readonly("wall_time", &ContinuationRun::wall_time)
      .def_readonly("kc_hat", &ContinuationRun::kc_hat)
      .def("converged", &ContinuationRun::converged)
      .def("worst_margin_ratio", &ContinuationRun::worst_margin_ratio)
      .def_property_readonly("mesh", [](const ContinuationRun& r) { return r.solution.t; });

  m.def(
      "run",
      [](const OcpProblem& problem, const std::string& algorithm, const ContinuationConfig& config) {
        return run_continuation(problem, parse_formulation(algorithm), config);
      },
      py::arg("problem"), py::arg("algorithm") = "primal", py::arg("config") = ContinuationConfig{},
      "Geometric eps-continuation from the default guess.");

  m.def(
      "trajectory",
      [](const OcpProblem& problem, const ContinuationRun& run) {
        return trajectory_dict(extract_trajectory(problem, run.formulation, run.eps, run.solution));
      },
      "Node values t, x, p, u, theta, eta of the last solution (arrays are rows x nodes).");

  m.def("boundedness_trail", [](const ContinuationRun& run) { return boundedness_trail(run.stages); });

  m.def(
      "summary_yaml",
      [](const OcpProblem& problem, const ContinuationRun& run, const ContinuationConfig& config) {
        io::RunConfig rc;
        rc.problem = problem.name;
        rc.algorithm = run.formulation;
        rc.continuation = config;
        return io::run_summary_yaml(problem, rc, run);
      },
      py::arg("problem"), py::arg("run"), py::arg("config") = ContinuationConfig{});

  m.def(
      "export_trajectory",
      [](const OcpProblem& problem, const ContinuationRun& run, const std::string& path) {
        io::save_csv(path,
                     io::trajectory_table(problem, extract_trajectory(problem, run.formulation, run.eps, run.solution)));
      },
      py::arg("problem"), py::arg("run"), py::arg("path"));

  m.def(
      "load_trajectory",
      [](const std::string& path) {
        const io::TrajectoryTable t = io::load_csv(path);
        return py::make_tuple(t.header, t.rows);
      },
      "Header list and node-by-column array of an exported trajectory.");

  m.def(
      "run_cli",
      [](const std::vector<std::string>& args) {
        std::ostringstream out, err;
        const int code = cli::run_cli(args, out, err);
        return py::make_tuple(code, out.str(), err.str());
      },
      "Runs the command-line front end; returns (exit code, stdout, stderr).");
}
