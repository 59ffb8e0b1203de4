#include "ipmocp/continuation.hpp"

#include <chrono>
#include <cmath>
#include <limits>
#include <ostream>

namespace ipmocp {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

}  // namespace

void ContinuationConfig::check() const {
  if (!(eps0 > 0.0) || !std::isfinite(eps0)) throw ConfigError("eps0 must be strictly positive");
  if (!(alpha > 0.0 && alpha < 1.0)) {
    throw ConfigError("alpha must lie in the open interval (0,1), got " + std::to_string(alpha));
  }
  if (!(tol > 0.0) || !std::isfinite(tol)) throw ConfigError("tol must be strictly positive");
  if (max_stages < 1) throw ConfigError("max_stages must be positive");
  if (mesh_points < 5) throw ConfigError("mesh_points must be at least 5");
  if (!(stage_tol_cap > 0.0) || !(stage_tol_factor > 0.0)) throw ConfigError("stage tolerances must be positive");
}

double ContinuationConfig::stage_tolerance(double eps) const { return std::min(stage_tol_cap, stage_tol_factor * eps); }

int planned_stage_count(double eps0, double alpha, double tol) {
  int k = 0;
  for (double eps = eps0; eps > tol; eps *= alpha) ++k;
  return k;
}

std::string to_string(RunStatus s) {
  switch (s) {
    case RunStatus::Running: return "running";
    case RunStatus::Converged: return "converged";
    case RunStatus::Failed: return "failed";
    case RunStatus::Degenerate: return "degenerate";
  }
  return "unknown";
}

double ContinuationRun::worst_margin_ratio() const {
  double worst = std::numeric_limits<double>::infinity();
  for (const auto& s : stages) {
    if (!s.success || s.min_slack_c.size() == 0) continue;
    worst = std::min(worst, s.min_slack_c.minCoeff() * kc_hat / s.eps);
  }
  return worst;
}

bvp::MeshSolution solve_stage(const OcpProblem& problem, Formulation formulation, double eps,
                              const bvp::MeshSolution& warm, const ContinuationConfig& config) {
  const bvp::BvpDaeSystem sys = assemble(problem, formulation, eps);
  bvp::SolveOptions opts = config.solver;
  opts.tol = config.stage_tolerance(eps);
  opts.mesh_tol = std::max(config.mesh_tol, opts.tol);
  return bvp::solve(sys, warm, opts);
}

ContinuationRun run_continuation(const OcpProblem& problem, Formulation formulation, const ContinuationConfig& config,
                                 const std::optional<bvp::MeshSolution>& guess) {
  config.check();
  const auto start = Clock::now();
  ContinuationRun run;
  run.formulation = formulation;
  run.eps = config.eps0;
  run.solution = guess ? *guess : default_guess(problem, formulation, config.mesh_points);
  run.kc_hat = std::numeric_limits<double>::quiet_NaN();

  if (config.tol >= config.eps0) {
    run.status = RunStatus::Degenerate;
    run.failure = "tol >= eps0: nothing to solve";
    return run;
  }

  double previous_cost = std::numeric_limits<double>::quiet_NaN();

  while (run.eps > config.tol) {
    if (run.stage >= config.max_stages) {
      run.status = RunStatus::Failed;
      run.failed_stage = run.stage + 1;
      run.failure = "stage limit reached";
      break;
    }
    const double next = run.eps * config.alpha;
    const auto stage_start = Clock::now();
    StageDiagnostics diag;
    diag.stage = run.stage + 1;
    diag.eps = next;

    bvp::MeshSolution sol;
    bool ok = false;
    try {
      sol = solve_stage(problem, formulation, next, run.solution, config);
      ok = true;
    } catch (const Error& e) {
      diag.error = e.what();
    }
    if (!ok && config.retry) {
      // Milder step eps_k * sqrt(alpha), then the scheduled eps_{k+1}.
      diag.retried = true;
      try {
        const bvp::MeshSolution mid =
            solve_stage(problem, formulation, run.eps * std::sqrt(config.alpha), run.solution, config);
        sol = solve_stage(problem, formulation, next, mid, config);
        sol.newton_iterations += mid.newton_iterations;
        ok = true;
        diag.error.clear();
      } catch (const Error& e) {
        diag.error += std::string("; retry: ") + e.what();
      }
    }
    diag.wall_time = seconds_since(stage_start);
    if (!ok) {
      diag.success = false;
      run.stages.push_back(diag);
      run.status = RunStatus::Failed;
      run.failed_stage = diag.stage;
      run.failure = diag.error;
      if (config.trace) *config.trace << "stage k=" << diag.stage << " eps=" << next << " failed: " << diag.error << '\n';
      break;
    }

    diag.success = true;
    diag.newton_iterations = sol.newton_iterations;
    compute_stage_diagnostics(problem, formulation, next, sol, diag);
    diag.state_change = run.stage > 0 ? state_distance(sol, run.solution, problem.nx) : std::numeric_limits<double>::quiet_NaN();
    diag.cost_change = std::abs(diag.cost - previous_cost);
    if (run.stage == 0 && problem.nc > 0) run.kc_hat = next / diag.min_slack_c.minCoeff();

    run.solution = std::move(sol);
    run.eps = next;
    ++run.stage;
    previous_cost = diag.cost;
    if (config.trace) {
      *config.trace << "stage k=" << diag.stage << " eps=" << next << " newton=" << diag.newton_iterations
                    << " nodes=" << diag.mesh_nodes << " cost=" << diag.cost << " time=" << diag.wall_time
                    << (diag.retried ? " retried" : "") << '\n';
    }
    run.stages.push_back(std::move(diag));
  }
  if (run.status == RunStatus::Running) run.status = RunStatus::Converged;
  run.wall_time = seconds_since(start);
  return run;
}

ContinuationRun run_primal(const OcpProblem& problem, const ContinuationConfig& config,
                           const std::optional<bvp::MeshSolution>& guess) {
  return run_continuation(problem, Formulation::Primal, config, guess);
}

ContinuationRun run_primal_dual(const OcpProblem& problem, const ContinuationConfig& config,
                                const std::optional<bvp::MeshSolution>& guess) {
  return run_continuation(problem, Formulation::PrimalDual, config, guess);
}

}  // namespace ipmocp
