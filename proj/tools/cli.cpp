#include "cli.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <optional>
#include <ostream>

#include "ipmocp/io.hpp"
#include "ipmocp/problems.hpp"

namespace ipmocp::cli {

namespace {

struct Flags {
  std::string config;
  std::optional<std::string> problem, algorithm, output_dir;
  std::optional<double> eps0, alpha, tol, mesh_tol;
  std::optional<long> mesh_points, node_budget;
  std::optional<int> max_stages;
  bool trace = false;
};

template <class T, class U>
void override_with(const std::optional<T>& flag, U& target) {
  if (flag) target = static_cast<U>(*flag);
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Interior-point solver for state- and mixed-constrained optimal control"};
  app.name("ipmocp");
  Flags f;
  app.add_option("--config", f.config, "YAML run config; flags override its values");
  app.add_option("--problem", f.problem, "Problem name (" + [] {
    std::string s;
    for (const auto& n : problem_names()) s += (s.empty() ? "" : ", ") + n;
    return s;
  }() + ")");
  app.add_option("--algorithm", f.algorithm, "primal | primal-dual");
  app.add_option("--eps0", f.eps0, "Initial barrier parameter (> 0)");
  app.add_option("--alpha", f.alpha, "Barrier decay rate in (0,1)");
  app.add_option("--tol", f.tol, "Final barrier parameter threshold (> 0)");
  app.add_option("--mesh-points", f.mesh_points, "Nodes of the initial uniform mesh");
  app.add_option("--node-budget", f.node_budget, "Maximum mesh nodes per stage");
  app.add_option("--mesh-tol", f.mesh_tol, "Bound on the continuous residual estimate");
  app.add_option("--max-stages", f.max_stages, "Continuation stage limit");
  app.add_option("--output-dir", f.output_dir, "Directory for the trajectory and summary");
  app.add_flag("--trace", f.trace, "Print one line per continuation stage");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kConverged;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << "\n";
    return kUsage;
  }

  io::RunConfig cfg;
  OcpProblem problem;
  try {
    if (!f.config.empty()) cfg = io::load_run_config(f.config);
    override_with(f.problem, cfg.problem);
    if (f.algorithm) cfg.algorithm = parse_formulation(*f.algorithm);
    override_with(f.eps0, cfg.continuation.eps0);
    override_with(f.alpha, cfg.continuation.alpha);
    override_with(f.tol, cfg.continuation.tol);
    override_with(f.mesh_tol, cfg.continuation.mesh_tol);
    override_with(f.mesh_points, cfg.continuation.mesh_points);
    override_with(f.node_budget, cfg.continuation.solver.max_nodes);
    override_with(f.max_stages, cfg.continuation.max_stages);
    override_with(f.output_dir, cfg.output_dir);
    cfg.trace = cfg.trace || f.trace;
    cfg.continuation.check();
    if (cfg.continuation.tol >= cfg.continuation.eps0) {
      throw ConfigError("degenerate configuration: tol >= eps0 leaves zero continuation stages");
    }
    problem = problem_by_name(cfg.problem);
  } catch (const io::IoError& e) {
    err << "I/O error: " << e.what() << "\n";
    return kIo;
  } catch (const ConfigError& e) {
    err << "usage error: " << e.what() << "\n";
    return kUsage;
  }

  if (cfg.trace) cfg.continuation.trace = &out;
  ContinuationRun run;
  try {
    run = run_continuation(problem, cfg.algorithm, cfg.continuation);
  } catch (const Error& e) {
    err << "solver failure: " << e.what() << "\n";
    return kSolverFailure;
  }

  namespace fs = std::filesystem;
  const fs::path dir(cfg.output_dir);
  try {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw io::IoError("cannot create output directory '" + dir.string() + "': " + ec.message());
    if (run.stage > 0) {
      const Trajectory tr = extract_trajectory(problem, cfg.algorithm, run.eps, run.solution);
      io::save_csv((dir / cfg.trajectory_file).string(), io::trajectory_table(problem, tr));
    }
    io::save_text((dir / cfg.summary_file).string(), io::run_summary_yaml(problem, cfg, run));
  } catch (const io::IoError& e) {
    err << "I/O error: " << e.what() << "\n";
    return kIo;
  }

  if (!run.converged()) {
    err << "solver failure at stage " << run.failed_stage << " (eps = " << run.eps * cfg.continuation.alpha
        << "): " << run.failure << "\n";
    return kSolverFailure;
  }
  out << problem.name << " " << to_string(cfg.algorithm) << ": converged, stages " << run.stage << ", eps "
      << io::format_double(run.eps) << ", cost " << io::format_double(run.stages.back().cost) << ", wall time "
      << run.wall_time << " s\n";
  return kConverged;
}

}  // namespace ipmocp::cli
