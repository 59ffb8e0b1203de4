#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "ipmocp/types.hpp"

namespace ipmocp {

using ScalarFn = std::function<double(const Vector& x)>;
using VectorFn = std::function<Vector(const Vector& x)>;
using MatrixFn = std::function<Matrix(const Vector& x)>;
/// Jacobian with respect to x of a matrix-valued map contracted with u,
/// i.e. d/dx [M(x) u].
using ContractionFn = std::function<Matrix(const Vector& x, const Vector& u)>;
/// Hessian with respect to (x, u) of
///   L = l(x,u) + p.f(x,u) + theta.g(x) + eta.c(x,u)
/// holding the weights (p, theta, eta) fixed.
using LagrangianHessianFn = std::function<Matrix(const Vector& x, const Vector& u, const Vector& p,
                                                 const Vector& theta, const Vector& eta)>;

/// Initial-final boundary map h(x(0), x(T)) = 0.
///
/// `fixed_initial` describes h = x(0) - x0; the assembly recognises it and
/// drops the multiplier lambda (p(0) is then free and p(T) = phi'(x(T))).
struct BoundaryConditions {
  enum class Kind { FixedInitial, General };

  Kind kind = Kind::General;
  Index size = 0;
  Vector x0;  // FixedInitial only
  std::function<Vector(const Vector& x0, const Vector& xT)> h;
  std::function<Matrix(const Vector& x0, const Vector& xT)> h_x0;  // optional
  std::function<Matrix(const Vector& x0, const Vector& xT)> h_xT;  // optional

  static BoundaryConditions fixed_initial(Vector x0);
  static BoundaryConditions general(Index size, std::function<Vector(const Vector&, const Vector&)> h,
                                    std::function<Matrix(const Vector&, const Vector&)> h_x0 = {},
                                    std::function<Matrix(const Vector&, const Vector&)> h_xT = {});

  bool is_fixed_initial() const { return kind == Kind::FixedInitial; }
};

/// Axis-aligned sampling box used by derivative validation.
struct SamplingBox {
  double state_lo = -10.0;
  double state_hi = 10.0;
  double control_lo = -1.0;
  double control_hi = 1.0;
};

/// Control-affine optimal control problem
///
///   min  phi(x(T)) + int_0^T l1(x) + l2(x).u dt
///   s.t. x' = f1(x) + f2(x) u,   h(x(0), x(T)) = 0,
///        g(x) <= 0,   c(x,u) = a(x) u + b(x) <= 0.
///
/// Derivative callbacks are optional; missing ones fall back to central
/// finite differences. Instances are immutable once built and may be shared
/// between threads as long as the callbacks are reentrant.
struct OcpProblem {
  std::string name;
  Index nx = 0;
  Index nu = 0;
  Index ng = 0;
  Index nc = 0;
  double horizon = 1.0;

  VectorFn f1;
  MatrixFn f1_x;
  MatrixFn f2;  // nx x nu
  ContractionFn f2u_x;

  ScalarFn l1;
  VectorFn l1_x;  // gradient, nx
  VectorFn l2;    // nu
  MatrixFn l2_x;  // nu x nx

  ScalarFn phi;
  VectorFn phi_x;

  VectorFn g;    // ng
  MatrixFn g_x;  // ng x nx

  MatrixFn a;  // nc x nu
  ContractionFn au_x;
  VectorFn b;    // nc
  MatrixFn b_x;  // nc x nx

  BoundaryConditions bc;
  LagrangianHessianFn lagrangian_hessian;  // optional
  SamplingBox box;

  Index nh() const { return bc.size; }

  /// Throws ConfigError when mandatory callbacks are missing or declared
  /// dimensions are inconsistent.
  void check() const;
};

// --- pointwise evaluation -------------------------------------------------
// All evaluators check dimensions (ConfigError) and finiteness
// (EvaluationError naming the callback). Missing derivatives are replaced
// by central differences with step sqrt(eps_mach) * max(1, |x_j|).

Vector eval_dynamics(const OcpProblem& problem, const Vector& x, const Vector& u);
Vector eval_mixed(const OcpProblem& problem, const Vector& x, const Vector& u);
Vector eval_state_constraints(const OcpProblem& problem, const Vector& x);
double eval_running_cost(const OcpProblem& problem, const Vector& x, const Vector& u);
double eval_terminal_cost(const OcpProblem& problem, const Vector& x);

Matrix dynamics_jacobian_x(const OcpProblem& problem, const Vector& x, const Vector& u);
Matrix control_matrix(const OcpProblem& problem, const Vector& x);  // f2(x)
Matrix mixed_jacobian_x(const OcpProblem& problem, const Vector& x, const Vector& u);
Matrix mixed_control_matrix(const OcpProblem& problem, const Vector& x);  // a(x)
Matrix state_constraint_jacobian(const OcpProblem& problem, const Vector& x);
Vector running_cost_gradient_x(const OcpProblem& problem, const Vector& x, const Vector& u);
Vector terminal_cost_gradient(const OcpProblem& problem, const Vector& x);
Matrix terminal_cost_hessian(const OcpProblem& problem, const Vector& x);

/// Gradient of L = l + p.f + theta.g + eta.c with respect to (x, u),
/// weights held fixed. Returned stacked: first nx entries d/dx, then d/du.
Vector lagrangian_gradient(const OcpProblem& problem, const Vector& x, const Vector& u,
                           const Vector& p, const Vector& theta, const Vector& eta);

/// Hessian of the same L with respect to (x, u); analytic when the problem
/// supplies one, otherwise central differences of lagrangian_gradient.
Matrix lagrangian_hessian(const OcpProblem& problem, const Vector& x, const Vector& u,
                          const Vector& p, const Vector& theta, const Vector& eta);

// --- derivative validation ------------------------------------------------

struct DerivativeCheck {
  std::string name;        // callback whose derivative was checked
  double max_rel_error = 0.0;
  Index worst_row = -1;
  Index worst_col = -1;
  bool flagged = false;
  bool analytic = true;    // false when the callback was absent (nothing to check)
  /// (row, col) entries exceeding the threshold at any sample point.
  std::vector<std::pair<Index, Index>> flagged_entries;
};

struct ValidationReport {
  double threshold = 1e-5;
  std::vector<DerivativeCheck> checks;

  bool all_clear() const;
  const DerivativeCheck* find(const std::string& name) const;
};

struct SamplePoint {
  Vector x;
  Vector u;
};

/// Uniform samples inside problem.box (deterministic for a given seed).
std::vector<SamplePoint> sample_points(const OcpProblem& problem, std::size_t count,
                                       std::uint64_t seed = 42);

/// Compares every supplied analytic derivative against central differences
/// at the given points; relative error is |a - fd| / max(1, |fd|).
ValidationReport validate_derivatives(const OcpProblem& problem,
                                      const std::vector<SamplePoint>& samples,
                                      double threshold = 1e-5);

namespace detail {

/// Central-difference step used throughout.
double fd_step(double component);

/// Central-difference Jacobian of fn at x (rows = fn output size).
Matrix fd_jacobian(const std::function<Vector(const Vector&)>& fn, const Vector& x);

}  // namespace detail

}  // namespace ipmocp
