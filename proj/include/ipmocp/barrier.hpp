#pragma once

#include "ipmocp/ocp_problem.hpp"

namespace ipmocp {

/// psi(w) = -log(-w) for w < 0, +infinity otherwise.
double log_barrier(double w);

/// psi'(w) = -1/w; throws DomainError for w >= 0.
double log_barrier_deriv(double w);

/// psi''(w) = 1/w^2; throws DomainError for w >= 0.
double log_barrier_second(double w);

/// H(x,u,p) = l(x,u) + p.f(x,u).
double pre_hamiltonian(const OcpProblem& problem, const Vector& x, const Vector& u, const Vector& p);

/// Penalized pre-Hamiltonian
///   H^psi = H + eps * (sum_i psi(g_i(x)) + sum_i psi(c_i(x,u)))
/// and its derivatives at one point. Constraint values, their gradients and
/// the barrier weights eps*psi'(.) are computed once on construction.
///
/// Construction requires strict interiority (g < 0, c < 0); otherwise an
/// InteriorityError identifies the first violated constraint.
class BarrierContext {
 public:
  BarrierContext(const OcpProblem& problem, double eps, Vector x, Vector u, Vector p);

  double eps() const { return eps_; }
  const Vector& x() const { return x_; }
  const Vector& u() const { return u_; }
  const Vector& p() const { return p_; }

  const Vector& g() const { return g_; }
  const Vector& c() const { return c_; }
  const Matrix& g_x() const { return g_x_; }
  const Matrix& c_x() const { return c_x_; }
  const Matrix& a() const { return a_; }

  /// eps * psi'(g_i) = -eps / g_i: the state-constraint multiplier estimate.
  const Vector& theta() const { return theta_; }
  /// eps * psi'(c_i) = -eps / c_i: the mixed-constraint multiplier estimate.
  const Vector& eta() const { return eta_; }

  double value() const;
  Vector grad_x() const;
  Vector grad_u() const;
  Matrix hess_uu() const;
  /// Full Hessian of H^psi with respect to (x, u), size (nx+nu)^2.
  Matrix hessian() const;

 private:
  const OcpProblem* problem_;
  double eps_;
  Vector x_, u_, p_;
  Vector g_, c_;
  Matrix g_x_, c_x_, a_;
  Vector theta_, eta_;
  Vector grad_;  // stacked (x, u) gradient
};

double penalized_hamiltonian(const BarrierContext& ctx);
Vector penalized_hamiltonian_grad_x(const BarrierContext& ctx);
Vector penalized_hamiltonian_grad_u(const BarrierContext& ctx);
Matrix penalized_hamiltonian_hess_uu(const BarrierContext& ctx);

}  // namespace ipmocp
