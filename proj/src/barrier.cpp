#include "ipmocp/barrier.hpp"

#include <cmath>
#include <limits>

namespace ipmocp {

double log_barrier(double w) {
  if (w < 0.0) return -std::log(-w);
  return std::numeric_limits<double>::infinity();
}

double log_barrier_deriv(double w) {
  if (!(w < 0.0)) throw DomainError("log_barrier_deriv: argument must be negative, got " + std::to_string(w));
  return -1.0 / w;
}

double log_barrier_second(double w) {
  if (!(w < 0.0)) throw DomainError("log_barrier_second: argument must be negative, got " + std::to_string(w));
  return 1.0 / (w * w);
}

double pre_hamiltonian(const OcpProblem& problem, const Vector& x, const Vector& u, const Vector& p) {
  if (p.size() != problem.nx) throw ConfigError("pre_hamiltonian: adjoint has the wrong size");
  return eval_running_cost(problem, x, u) + p.dot(eval_dynamics(problem, x, u));
}

BarrierContext::BarrierContext(const OcpProblem& problem, double eps, Vector x, Vector u, Vector p)
    : problem_(&problem), eps_(eps), x_(std::move(x)), u_(std::move(u)), p_(std::move(p)) {
  if (!(eps_ >= 0.0) || !std::isfinite(eps_)) throw ConfigError("BarrierContext: eps must be >= 0");
  if (p_.size() != problem.nx) throw ConfigError("BarrierContext: adjoint has the wrong size");

  g_ = eval_state_constraints(problem, x_);
  for (Index i = 0; i < g_.size(); ++i) {
    if (!(g_(i) < 0.0)) {
      throw InteriorityError(InteriorityError::Kind::State, i, -1,
                             "state constraint g[" + std::to_string(i) + "] = " + std::to_string(g_(i)) +
                                 " is not strictly negative");
    }
  }
  c_ = eval_mixed(problem, x_, u_);
  for (Index i = 0; i < c_.size(); ++i) {
    if (!(c_(i) < 0.0)) {
      throw InteriorityError(InteriorityError::Kind::Mixed, i, -1,
                             "mixed constraint c[" + std::to_string(i) + "] = " + std::to_string(c_(i)) +
                                 " is not strictly negative");
    }
  }
  g_x_ = state_constraint_jacobian(problem, x_);
  c_x_ = mixed_jacobian_x(problem, x_, u_);
  a_ = mixed_control_matrix(problem, x_);

  theta_ = (-eps_) * g_.cwiseInverse();
  eta_ = (-eps_) * c_.cwiseInverse();
  grad_ = lagrangian_gradient(problem, x_, u_, p_, theta_, eta_);
}

double BarrierContext::value() const {
  double penalty = 0.0;
  for (Index i = 0; i < g_.size(); ++i) penalty += log_barrier(g_(i));
  for (Index i = 0; i < c_.size(); ++i) penalty += log_barrier(c_(i));
  return pre_hamiltonian(*problem_, x_, u_, p_) + eps_ * penalty;
}

Vector BarrierContext::grad_x() const { return grad_.head(problem_->nx); }

Vector BarrierContext::grad_u() const { return grad_.tail(problem_->nu); }

Matrix BarrierContext::hess_uu() const {
  // H is affine in u, so only the mixed barriers contribute.
  Matrix h = Matrix::Zero(problem_->nu, problem_->nu);
  for (Index i = 0; i < c_.size(); ++i) {
    h.noalias() += eps_ / (c_(i) * c_(i)) * a_.row(i).transpose() * a_.row(i);
  }
  return h;
}

Matrix BarrierContext::hessian() const {
  const Index nx = problem_->nx;
  const Index nu = problem_->nu;
  Matrix h = lagrangian_hessian(*problem_, x_, u_, p_, theta_, eta_);
  // Differentiating the weights eps*psi'(.) adds eps*psi''(.) grad grad^T.
  Vector grad(nx + nu);
  for (Index i = 0; i < g_.size(); ++i) {
    grad.head(nx) = g_x_.row(i).transpose();
    grad.tail(nu).setZero();
    h.noalias() += eps_ / (g_(i) * g_(i)) * grad * grad.transpose();
  }
  for (Index i = 0; i < c_.size(); ++i) {
    grad.head(nx) = c_x_.row(i).transpose();
    grad.tail(nu) = a_.row(i).transpose();
    h.noalias() += eps_ / (c_(i) * c_(i)) * grad * grad.transpose();
  }
  return h;
}

double penalized_hamiltonian(const BarrierContext& ctx) { return ctx.value(); }
Vector penalized_hamiltonian_grad_x(const BarrierContext& ctx) { return ctx.grad_x(); }
Vector penalized_hamiltonian_grad_u(const BarrierContext& ctx) { return ctx.grad_u(); }
Matrix penalized_hamiltonian_hess_uu(const BarrierContext& ctx) { return ctx.hess_uu(); }

}  // namespace ipmocp
