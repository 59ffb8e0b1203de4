#pragma once

#include <string>
#include <vector>

#include "ipmocp/ipm_assembly.hpp"

namespace ipmocp {

struct Multipliers {
  Matrix theta, eta;          // nodes
  Matrix theta_mid, eta_mid;  // interval midpoints
};

/// theta_i = -eps / g_i(x), eta_i = -eps / c_i(x, u) at nodes and midpoints.
/// Throws InteriorityError carrying the node index when a point is not interior.
Multipliers reconstruct_multipliers(const OcpProblem& problem, const Trajectory& trajectory, double eps);

/// Defects of the unpenalized first-order system with measure densities
/// theta dt and multipliers eta, lambda.
struct StationarityReport {
  double adjoint = 0.0;      // scaled Simpson defect of p' = -L_x over each interval
  double hamiltonian = 0.0;  // max |L_u| at nodes and midpoints
  double boundary = 0.0;     // max |boundary residual|
  /// max_i |int g_i theta_i dt + eps T| and max_i |int c_i eta_i dt + eps T|
  double complementarity_g = 0.0;
  double complementarity_c = 0.0;
  double min_theta = 0.0;  // +inf without state constraints
  double min_eta = 0.0;    // +inf without mixed constraints
  bool signs_ok = true;
};

StationarityReport stationarity_residual(const OcpProblem& problem, const Trajectory& trajectory,
                                         const Multipliers& multipliers, const Vector& lambda, double eps);

/// Everything recorded for one continuation stage.
struct StageDiagnostics {
  int stage = 0;
  double eps = 0.0;
  bool success = false;
  bool retried = false;
  std::string error;

  double cost = 0.0;            // J
  double penalized_cost = 0.0;  // J_eps
  Vector min_slack_g;           // min over nodes of -g_i
  Vector min_slack_c;           // min over nodes of -c_i
  Vector l1_g;                  // || eps psi'(g_i) ||_L1
  Vector l1_c;                  // || eps psi'(c_i) ||_L1
  double p_inf = 0.0;
  double p_jump = 0.0;  // max over intervals of |p_{i+1} - p_i| / h
  /// max over nodes of |theta g + eps| and |eta c + eps| for the solved
  /// multipliers (primal-dual) or the barrier estimates (primal).
  double pointwise_comp_g = 0.0;
  double pointwise_comp_c = 0.0;
  StationarityReport stationarity;

  /// Change from the previous successful stage (NaN for the first one).
  double state_change = 0.0;  // ||x_k - x_{k-1}||_inf on both meshes
  double cost_change = 0.0;   // |J_k - J_{k-1}|

  int newton_iterations = 0;
  Index mesh_nodes = 0;
  double wall_time = 0.0;  // seconds
  double bvp_residual = 0.0;
};

/// Fills all solution-derived fields of `out` (not stage bookkeeping).
void compute_stage_diagnostics(const OcpProblem& problem, Formulation formulation, double eps,
                               const bvp::MeshSolution& solution, StageDiagnostics& out);

/// Cost J = phi(x(T)) + int l dt and J_eps = J + eps int sum psi dt,
/// Simpson on node/midpoint values.
double trajectory_cost(const OcpProblem& problem, const Trajectory& trajectory);
double penalized_cost(const OcpProblem& problem, const Trajectory& trajectory, double eps);

/// max over nodes of `a` and `b` of |a(t) - b(t)| (both interpolants).
double state_distance(const bvp::MeshSolution& a, const bvp::MeshSolution& b, Index rows);

struct TrailReport {
  std::string name;
  std::vector<double> values;
  double first_quarter_max = 0.0;
  double last_quarter_max = 0.0;
  bool bounded = true;
};

struct BoundednessReport {
  bool enough_stages = false;  // at least three successful stages
  TrailReport l1_g, l1_c, p_inf;
  bool all_bounded() const { return enough_stages && l1_g.bounded && l1_c.bounded && p_inf.bounded; }
};

/// Growth is flagged when the last-quarter maximum exceeds twice the
/// first-quarter maximum.
TrailReport assess_trail(std::string name, std::vector<double> values);

/// Trails of max_i ||eps psi'(g_i)||_L1, max_i ||eps psi'(c_i)||_L1 and
/// ||p||_inf over the successful stages.
BoundednessReport boundedness_trail(const std::vector<StageDiagnostics>& stages);

}  // namespace ipmocp
