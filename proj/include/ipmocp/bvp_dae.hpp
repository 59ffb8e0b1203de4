#pragma once

#include <functional>
#include <iosfwd>
#include <limits>
#include <string>

#include "ipmocp/types.hpp"

namespace ipmocp::bvp {

/// Partial derivatives of (rhs, alg) at one point.
struct PointJacobian {
  Matrix f_y, f_z, f_q;
  Matrix g_y, g_z, g_q;
};

/// Partial derivatives of the boundary residual.
struct BoundaryJacobian {
  Matrix ya, yb, q;
};

/// Semi-explicit index-1 boundary value problem on [0, T]
///
///   y' = rhs(t, y, z, q),   0 = alg(t, y, z, q),   bc(y(0), y(T), q) = 0
///
/// with n_diff differential unknowns y, n_alg algebraic unknowns z and n_par
/// constant parameters q. The boundary map returns n_diff + n_par values.
/// d alg / d z must be invertible along the solution.
struct BvpDaeSystem {
  using PointFn = std::function<void(double t, const Vector& y, const Vector& z, const Vector& q, Vector& rhs,
                                     Vector& alg)>;
  using PointJacobianFn =
      std::function<void(double t, const Vector& y, const Vector& z, const Vector& q, PointJacobian& jac)>;
  using BoundaryFn = std::function<Vector(const Vector& ya, const Vector& yb, const Vector& q)>;
  using BoundaryJacobianFn =
      std::function<void(const Vector& ya, const Vector& yb, const Vector& q, BoundaryJacobian& jac)>;
  /// Slack values that must stay strictly positive (e.g. -g, -c).
  using GuardFn = std::function<Vector(double t, const Vector& y, const Vector& z)>;

  Index n_diff = 0;
  Index n_alg = 0;
  Index n_par = 0;
  double horizon = 1.0;

  PointFn eval;
  PointJacobianFn jacobian;  // optional: central differences otherwise
  BoundaryFn bc;
  BoundaryJacobianFn bc_jacobian;  // optional
  GuardFn guard;                   // optional

  void check() const;
};

/// Discrete solution on a mesh 0 = t_0 < ... < t_N = T.
///
/// y is interpolated by the piecewise cubic Hermite polynomial built from
/// (y, yp) at the nodes (the collocation polynomial once solved); z by the
/// piecewise quadratic through node, midpoint and node values.
struct MeshSolution {
  Vector t;
  Matrix y;      // n_diff x (N+1)
  Matrix yp;     // n_diff x (N+1), derivative at nodes; empty -> linear interpolation
  Matrix z;      // n_alg x (N+1)
  Matrix z_mid;  // n_alg x N
  Vector q;
  double residual_norm = std::numeric_limits<double>::infinity();
  /// Scaled roundoff floor of the residual at the last Jacobian; rows within
  /// it of zero are accepted even when residual_norm exceeds the tolerance.
  double residual_floor = 0.0;
  Vector interval_residual;  // per-interval residual estimate of the last solve

  int newton_iterations = 0;  // accumulated over the mesh passes of the last solve
  int mesh_passes = 0;

  Index nodes() const { return t.size(); }
  Index intervals() const { return t.size() - 1; }
  double horizon() const { return t(t.size() - 1); }

  /// Interval containing time s (last interval for s == T).
  Index locate(double s) const;
  Vector y_at(double s) const;
  Vector yp_at(double s) const;
  Vector z_at(double s) const;

  /// Constant-in-time iterate on the uniform mesh with `nodes` points.
  static MeshSolution constant(double horizon, Index nodes, const Vector& y, const Vector& z, const Vector& q);

  void check(Index n_diff, Index n_alg, Index n_par) const;
};

struct SolveOptions {
  /// Scaled max-norm bound on the discrete collocation residual (per row,
  /// relaxed by the roundoff floor 100 u (|J| |w|)).
  double tol = 1e-8;
  /// Bound on the continuous residual estimate driving mesh refinement;
  /// non-positive means "same as tol".
  double mesh_tol = 0.0;
  Index max_nodes = 10000;
  int max_newton = 50;
  double min_damping = 1e-10;
  double boundary_fraction = 0.99;
  int max_mesh_passes = 40;
  bool refine = true;
  /// Merge runs of adjacent intervals whose extrapolated residual stays below
  /// 10% of the mesh tolerance.
  bool merge = true;
  /// Intervals shorter than this are never split further.
  double min_interval = 1e-13;
  std::ostream* trace = nullptr;

  double effective_mesh_tol() const { return mesh_tol > 0.0 ? mesh_tol : tol; }
};

/// Newton did not converge; carries the best iterate seen.
class NonconvergenceError : public Error {
 public:
  NonconvergenceError(const std::string& what, MeshSolution best) : Error(what), best_(std::move(best)) {}
  const MeshSolution& best() const { return best_; }

 private:
  MeshSolution best_;
};

/// The linear Newton system could not be factorised.
class SingularityError : public Error {
 public:
  SingularityError(const std::string& what, Index location) : Error(what), location_(location) {}
  /// Mesh interval (or -1 if unknown) of the offending column.
  Index location() const { return location_; }

 private:
  Index location_;
};

/// Mesh refinement would exceed the node budget.
class BudgetError : public Error {
 public:
  BudgetError(const std::string& what, double residual, MeshSolution best)
      : Error(what), residual_(residual), best_(std::move(best)) {}
  double residual() const { return residual_; }
  const MeshSolution& best() const { return best_; }

 private:
  double residual_;
  MeshSolution best_;
};

/// No admissible damping factor decreases the residual.
class LineSearchError : public Error {
 public:
  using Error::Error;
};

struct StepResult {
  MeshSolution iterate;
  double damping = 0.0;
  double residual_before = 0.0;  // scaled max norm
  double residual_after = 0.0;
  bool boundary_limited = false;  // damping cut by the fraction-to-boundary rule
};

/// One damped Newton step on the collocation equations.
StepResult newton_step(const BvpDaeSystem& system, const MeshSolution& iterate, const SolveOptions& opts = {});

/// Scaled max-norm of the discrete collocation residual.
double collocation_residual(const BvpDaeSystem& system, const MeshSolution& iterate);

/// Continuous residual estimate per interval (defect of y' = rhs with z
/// solved from alg at interior Lobatto points).
Vector residual_estimate(const BvpDaeSystem& system, const MeshSolution& solution);

/// Splits intervals whose residual exceeds the mesh tolerance, merges pairs
/// far below it, and transfers the solution. Throws BudgetError.
MeshSolution refine_mesh(const BvpDaeSystem& system, const MeshSolution& solution, const SolveOptions& opts = {});

/// Evaluates the interpolants of `solution` on `mesh`; exact at shared nodes.
MeshSolution interpolate_onto(const MeshSolution& solution, const Vector& mesh);

/// Same as above, then makes z consistent with alg (local Newton) at new
/// points, keeping the guard satisfied.
MeshSolution interpolate_onto(const BvpDaeSystem& system, const MeshSolution& solution, const Vector& mesh);

/// Solves the collocation equations with adaptive mesh refinement.
MeshSolution solve(const BvpDaeSystem& system, const MeshSolution& guess, const SolveOptions& opts = {});

}  // namespace ipmocp::bvp
