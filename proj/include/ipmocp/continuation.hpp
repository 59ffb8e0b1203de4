#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "ipmocp/diagnostics.hpp"

namespace ipmocp {

struct ContinuationConfig {
  double eps0 = 0.1;
  double alpha = 0.8;
  double tol = 1e-8;
  int max_stages = 10000;
  /// Nodes of the uniform mesh of the default guess.
  Index mesh_points = 101;
  /// Per-stage collocation tolerance min(stage_tol_cap, stage_tol_factor * eps).
  double stage_tol_cap = 1e-8;
  double stage_tol_factor = 1e-2;
  /// Bound for the continuous residual estimate that drives mesh refinement.
  /// Much tighter values are unreachable near touch points, where intervals
  /// of length ~1e-9 leave a defect floor of ~1e-7.
  double mesh_tol = 1e-5;
  /// Tolerance, refinement and budget settings; `tol` is set per stage.
  bvp::SolveOptions solver;
  /// On a failed stage, retry through the intermediate eps_k * sqrt(alpha).
  bool retry = true;
  std::ostream* trace = nullptr;

  /// ConfigError unless eps0 > 0, tol > 0 and 0 < alpha < 1.
  void check() const;
  double stage_tolerance(double eps) const;
};

/// Number of products eps0 * alpha^k performed before eps <= tol.
int planned_stage_count(double eps0, double alpha, double tol);

enum class RunStatus { Running, Converged, Failed, Degenerate };
std::string to_string(RunStatus s);

struct ContinuationRun {
  Formulation formulation = Formulation::Primal;
  RunStatus status = RunStatus::Running;
  int stage = 0;                // completed stages
  double eps = 0.0;             // eps of `solution`
  bvp::MeshSolution solution;   // last good solution (the guess before stage 1)
  std::vector<StageDiagnostics> stages;
  int failed_stage = -1;
  std::string failure;
  double wall_time = 0.0;  // seconds, monotonic clock
  /// eps_1 / min(-c) at the first completed stage (NaN without mixed constraints).
  double kc_hat = 0.0;

  bool converged() const { return status == RunStatus::Converged; }
  /// Worst ratio min(-c) * kc_hat / eps over the completed stages (>= 1 means
  /// the calibrated margin held everywhere).
  double worst_margin_ratio() const;
};

/// Solves the barrier system at `eps` warm-started from `warm`, with the
/// stage tolerance of `config`. Solver errors propagate.
bvp::MeshSolution solve_stage(const OcpProblem& problem, Formulation formulation, double eps,
                              const bvp::MeshSolution& warm, const ContinuationConfig& config);

/// Geometric eps-continuation eps_{k+1} = alpha eps_k from the default guess
/// (or `guess`), each stage warm-started from the previous one.
ContinuationRun run_continuation(const OcpProblem& problem, Formulation formulation, const ContinuationConfig& config,
                                 const std::optional<bvp::MeshSolution>& guess = std::nullopt);

ContinuationRun run_primal(const OcpProblem& problem, const ContinuationConfig& config,
                           const std::optional<bvp::MeshSolution>& guess = std::nullopt);
ContinuationRun run_primal_dual(const OcpProblem& problem, const ContinuationConfig& config,
                                const std::optional<bvp::MeshSolution>& guess = std::nullopt);

}  // namespace ipmocp
