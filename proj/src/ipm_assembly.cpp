#include "ipmocp/ipm_assembly.hpp"

#include <cassert>
#include <cmath>
#include <limits>
#include <memory>

#include "ipmocp/barrier.hpp"

namespace ipmocp {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

void require_eps(double eps, const char* who) {
  if (!(eps > 0.0) || !std::isfinite(eps)) {
    throw ConfigError(std::string(who) + ": eps must be strictly positive, got " + std::to_string(eps));
  }
}

bool negative(const Vector& v) { return (v.array() < 0.0).all(); }

void fill_nan(const Layout& L, Vector& rhs, Vector& alg) {
  rhs = Vector::Constant(L.n_diff(), kNaN);
  alg = Vector::Constant(L.n_alg(), kNaN);
}

// Boundary residual and Jacobian shared by both formulations.
void attach_boundary(const std::shared_ptr<const OcpProblem>& pb, const Layout& L, bvp::BvpDaeSystem& sys) {
  const OcpProblem& problem = *pb;
  const Index nx = problem.nx;
  if (problem.bc.is_fixed_initial()) {
    const Vector x0 = problem.bc.x0;
    sys.bc = [pb, x0, nx](const Vector& ya, const Vector& yb, const Vector&) {
      const OcpProblem& problem = *pb;
      Vector r(2 * nx);
      r.head(nx) = ya.head(nx) - x0;
      r.tail(nx) = yb.tail(nx) - terminal_cost_gradient(problem, yb.head(nx));
      return r;
    };
    sys.bc_jacobian = [pb, nx](const Vector&, const Vector& yb, const Vector&, bvp::BoundaryJacobian& jac) {
      const OcpProblem& problem = *pb;
      jac.ya = Matrix::Zero(2 * nx, 2 * nx);
      jac.yb = Matrix::Zero(2 * nx, 2 * nx);
      jac.q = Matrix::Zero(2 * nx, 0);
      jac.ya.topLeftCorner(nx, nx).setIdentity();
      jac.yb.bottomLeftCorner(nx, nx) = -terminal_cost_hessian(problem, yb.head(nx));
      jac.yb.bottomRightCorner(nx, nx).setIdentity();
    };
    return;
  }
  const Index nh = L.nlambda;
  sys.bc = [pb, nx, nh](const Vector& ya, const Vector& yb, const Vector& lambda) {
    const OcpProblem& problem = *pb;
    const Vector xa = ya.head(nx), xb = yb.head(nx);
    const auto& bc = problem.bc;
    const Matrix ha = bc.h_x0 ? bc.h_x0(xa, xb)
                              : detail::fd_jacobian([&](const Vector& v) { return bc.h(v, xb); }, xa);
    const Matrix hb = bc.h_xT ? bc.h_xT(xa, xb)
                              : detail::fd_jacobian([&](const Vector& v) { return bc.h(xa, v); }, xb);
    Vector r(nh + 2 * nx);
    r.head(nh) = bc.h(xa, xb);
    r.segment(nh, nx) = ya.tail(nx) + ha.transpose() * lambda;
    r.tail(nx) = yb.tail(nx) - terminal_cost_gradient(problem, xb) - hb.transpose() * lambda;
    return r;
  };
}

}  // namespace

std::string to_string(Formulation f) { return f == Formulation::Primal ? "primal" : "primal-dual"; }

Formulation parse_formulation(const std::string& text) {
  if (text == "primal") return Formulation::Primal;
  if (text == "primal-dual") return Formulation::PrimalDual;
  throw ConfigError("unknown algorithm '" + text + "' (expected primal or primal-dual)");
}

Layout make_layout(const OcpProblem& problem, Formulation formulation) {
  problem.check();
  Layout L;
  L.formulation = formulation;
  L.nx = problem.nx;
  L.nu = problem.nu;
  L.ng = problem.ng;
  L.nc = problem.nc;
  L.nlambda = problem.bc.is_fixed_initial() ? 0 : problem.nh();
  return L;
}

double smoothing_residual(double theta, double w, double eps) {
  const double arg = theta * theta + w * w + 2.0 * eps;
  assert(arg > 0.0 || eps == 0.0);
  const double s = std::sqrt(arg);
  const double a = theta - w;
  if (a <= 0.0) return a - s;
  // Same value without the cancellation of a - s when theta >> |w|:
  // (a - s)(a + s) = a^2 - s^2 = -2 (theta w + eps).
  return -2.0 * std::fma(theta, w, eps) / (a + s);
}

SmoothingPartials smoothing_partials(double theta, double w, double eps) {
  const double s = std::sqrt(theta * theta + w * w + 2.0 * eps);
  SmoothingPartials d;
  // 1 - theta/s and -1 - w/s, rewritten where the difference cancels.
  d.d_theta = theta > 0.0 ? (w * w + 2.0 * eps) / (s * (s + theta)) : 1.0 - theta / s;
  d.d_w = w < 0.0 ? -(theta * theta + 2.0 * eps) / (s * (s - w)) : -1.0 - w / s;
  return d;
}

bvp::BvpDaeSystem assemble_primal(const OcpProblem& problem, double eps) {
  require_eps(eps, "assemble_primal");
  const Layout L = make_layout(problem, Formulation::Primal);
  const Index nx = L.nx, nu = L.nu;
  // Systems keep their own copy of the problem.
  const auto pb = std::make_shared<const OcpProblem>(problem);

  bvp::BvpDaeSystem sys;
  sys.n_diff = L.n_diff();
  sys.n_alg = L.n_alg();
  sys.n_par = L.n_par();
  sys.horizon = problem.horizon;

  sys.eval = [pb, L, eps, nx, nu](double, const Vector& y, const Vector& u, const Vector&, Vector& rhs,
                                        Vector& alg) {
    const OcpProblem& problem = *pb;
    const Vector x = y.head(nx), p = y.tail(nx);
    const Vector g = eval_state_constraints(problem, x);
    const Vector c = eval_mixed(problem, x, u);
    if (!negative(g) || !negative(c)) {
      fill_nan(L, rhs, alg);
      return;
    }
    const Vector grad = lagrangian_gradient(problem, x, u, p, (-eps) * g.cwiseInverse(), (-eps) * c.cwiseInverse());
    rhs.resize(2 * nx);
    rhs.head(nx) = eval_dynamics(problem, x, u);
    rhs.tail(nx) = -grad.head(nx);
    alg = grad.tail(nu);
  };

  sys.jacobian = [pb, eps, nx, nu](double, const Vector& y, const Vector& u, const Vector&,
                                         bvp::PointJacobian& jac) {
    const OcpProblem& problem = *pb;
    const Vector x = y.head(nx), p = y.tail(nx);
    const BarrierContext ctx(problem, eps, x, u, p);
    const Matrix H = ctx.hessian();
    const Matrix fx = dynamics_jacobian_x(problem, x, u);
    const Matrix f2 = control_matrix(problem, x);
    jac.f_y = Matrix::Zero(2 * nx, 2 * nx);
    jac.f_y.topLeftCorner(nx, nx) = fx;
    jac.f_y.bottomLeftCorner(nx, nx) = -H.topLeftCorner(nx, nx);
    jac.f_y.bottomRightCorner(nx, nx) = -fx.transpose();
    jac.f_z.resize(2 * nx, nu);
    jac.f_z.topRows(nx) = f2;
    jac.f_z.bottomRows(nx) = -H.topRightCorner(nx, nu);
    jac.g_y.resize(nu, 2 * nx);
    jac.g_y.leftCols(nx) = H.bottomLeftCorner(nu, nx);
    jac.g_y.rightCols(nx) = f2.transpose();
    jac.g_z = H.bottomRightCorner(nu, nu);
    jac.f_q = Matrix::Zero(2 * nx, 0);
    jac.g_q = Matrix::Zero(nu, 0);
  };

  if (problem.ng + problem.nc > 0) {
    sys.guard = [pb, nx](double, const Vector& y, const Vector& u) {
      const OcpProblem& problem = *pb;
      const Vector x = y.head(nx);
      Vector s(problem.ng + problem.nc);
      s << -eval_state_constraints(problem, x), -eval_mixed(problem, x, u);
      return s;
    };
  }
  attach_boundary(pb, L, sys);
  return sys;
}

bvp::BvpDaeSystem assemble_primal_dual(const OcpProblem& problem, double eps) {
  require_eps(eps, "assemble_primal_dual");
  const Layout L = make_layout(problem, Formulation::PrimalDual);
  const Index nx = L.nx, nu = L.nu, ng = L.ng, nc = L.nc;
  const auto pb = std::make_shared<const OcpProblem>(problem);

  bvp::BvpDaeSystem sys;
  sys.n_diff = L.n_diff();
  sys.n_alg = L.n_alg();
  sys.n_par = L.n_par();
  sys.horizon = problem.horizon;

  sys.eval = [pb, eps, nx, nu, ng, nc](double, const Vector& y, const Vector& z, const Vector&, Vector& rhs,
                                             Vector& alg) {
    const OcpProblem& problem = *pb;
    const Vector x = y.head(nx), p = y.tail(nx);
    const Vector u = z.head(nu), th = z.segment(nu, ng), et = z.tail(nc);
    const Vector g = eval_state_constraints(problem, x);
    const Vector c = eval_mixed(problem, x, u);
    const Vector grad = lagrangian_gradient(problem, x, u, p, th, et);
    rhs.resize(2 * nx);
    rhs.head(nx) = eval_dynamics(problem, x, u);
    rhs.tail(nx) = -grad.head(nx);
    alg.resize(nu + ng + nc);
    alg.head(nu) = grad.tail(nu);
    for (Index i = 0; i < ng; ++i) alg(nu + i) = smoothing_residual(th(i), g(i), eps);
    for (Index i = 0; i < nc; ++i) alg(nu + ng + i) = smoothing_residual(et(i), c(i), eps);
  };

  sys.jacobian = [pb, eps, nx, nu, ng, nc](double, const Vector& y, const Vector& z, const Vector&,
                                                 bvp::PointJacobian& jac) {
    const OcpProblem& problem = *pb;
    const Vector x = y.head(nx), p = y.tail(nx);
    const Vector u = z.head(nu), th = z.segment(nu, ng), et = z.tail(nc);
    const Index na = nu + ng + nc;
    const Matrix H = lagrangian_hessian(problem, x, u, p, th, et);
    const Matrix fx = dynamics_jacobian_x(problem, x, u);
    const Matrix f2 = control_matrix(problem, x);
    const Vector g = eval_state_constraints(problem, x);
    const Vector c = eval_mixed(problem, x, u);
    const Matrix gx = state_constraint_jacobian(problem, x);
    const Matrix cx = mixed_jacobian_x(problem, x, u);
    const Matrix a = mixed_control_matrix(problem, x);

    jac.f_y = Matrix::Zero(2 * nx, 2 * nx);
    jac.f_y.topLeftCorner(nx, nx) = fx;
    jac.f_y.bottomLeftCorner(nx, nx) = -H.topLeftCorner(nx, nx);
    jac.f_y.bottomRightCorner(nx, nx) = -fx.transpose();
    jac.f_z = Matrix::Zero(2 * nx, na);
    jac.f_z.topLeftCorner(nx, nu) = f2;
    jac.f_z.block(nx, 0, nx, nu) = -H.topRightCorner(nx, nu);
    jac.f_z.block(nx, nu, nx, ng) = -gx.transpose();
    jac.f_z.block(nx, nu + ng, nx, nc) = -cx.transpose();

    jac.g_y = Matrix::Zero(na, 2 * nx);
    jac.g_z = Matrix::Zero(na, na);
    jac.g_y.topLeftCorner(nu, nx) = H.bottomLeftCorner(nu, nx);
    jac.g_y.topRightCorner(nu, nx) = f2.transpose();
    jac.g_z.topLeftCorner(nu, nu) = H.bottomRightCorner(nu, nu);
    jac.g_z.block(0, nu + ng, nu, nc) = a.transpose();
    for (Index i = 0; i < ng; ++i) {
      const SmoothingPartials d = smoothing_partials(th(i), g(i), eps);
      jac.g_y.block(nu + i, 0, 1, nx) = d.d_w * gx.row(i);
      jac.g_z(nu + i, nu + i) = d.d_theta;
    }
    for (Index i = 0; i < nc; ++i) {
      const SmoothingPartials d = smoothing_partials(et(i), c(i), eps);
      jac.g_y.block(nu + ng + i, 0, 1, nx) = d.d_w * cx.row(i);
      jac.g_z.block(nu + ng + i, 0, 1, nu) = d.d_w * a.row(i);
      jac.g_z(nu + ng + i, nu + ng + i) = d.d_theta;
    }
    jac.f_q = Matrix::Zero(2 * nx, 0);
    jac.g_q = Matrix::Zero(na, 0);
  };

  attach_boundary(pb, L, sys);
  return sys;
}

bvp::BvpDaeSystem assemble(const OcpProblem& problem, Formulation formulation, double eps) {
  return formulation == Formulation::Primal ? assemble_primal(problem, eps) : assemble_primal_dual(problem, eps);
}

bvp::MeshSolution default_guess(const OcpProblem& problem, Formulation formulation, Index mesh_size) {
  const Layout L = make_layout(problem, formulation);
  Vector y = Vector::Zero(L.n_diff());
  if (problem.bc.is_fixed_initial()) y.head(L.nx) = problem.bc.x0;
  return bvp::MeshSolution::constant(problem.horizon, mesh_size, y, Vector::Zero(L.n_alg()),
                                     Vector::Zero(L.n_par()));
}

bvp::MeshSolution primal_to_primal_dual(const OcpProblem& problem, double eps, const bvp::MeshSolution& primal) {
  require_eps(eps, "primal_to_primal_dual");
  const Layout P = make_layout(problem, Formulation::Primal);
  const Layout D = make_layout(problem, Formulation::PrimalDual);
  primal.check(P.n_diff(), P.n_alg(), P.n_par());
  const Index nx = P.nx, nu = P.nu;

  auto lift = [&](const Vector& y, const Vector& u, Index node) {
    const Vector x = y.head(nx);
    const BarrierContext ctx = [&] {
      try {
        return BarrierContext(problem, eps, x, u, Vector::Zero(nx));
      } catch (const InteriorityError& e) {
        throw InteriorityError(e.kind(), e.constraint(), node, e.what());
      }
    }();
    Vector z(D.n_alg());
    z << u, ctx.theta(), ctx.eta();
    return z;
  };

  bvp::MeshSolution out = primal;
  out.z.resize(D.n_alg(), primal.nodes());
  out.z_mid.resize(D.n_alg(), primal.intervals());
  for (Index i = 0; i < primal.nodes(); ++i) out.z.col(i) = lift(primal.y.col(i), primal.z.col(i).head(nu), i);
  for (Index i = 0; i < primal.intervals(); ++i) {
    const double mid = 0.5 * (primal.t(i) + primal.t(i + 1));
    out.z_mid.col(i) = lift(primal.y_at(mid), primal.z_mid.col(i), i);
  }
  return out;
}

Trajectory extract_trajectory(const OcpProblem& problem, Formulation formulation, double eps,
                              const bvp::MeshSolution& sol) {
  const Layout L = make_layout(problem, formulation);
  sol.check(L.n_diff(), L.n_alg(), L.n_par());
  const Index nx = L.nx, nu = L.nu, ng = L.ng, nc = L.nc;
  const Index N = sol.nodes();

  Trajectory tr;
  tr.t = sol.t;
  tr.x = sol.y.topRows(nx);
  tr.p = sol.y.bottomRows(nx);
  tr.u = sol.z.topRows(nu);
  tr.x_mid.resize(nx, N - 1);
  tr.p_mid.resize(nx, N - 1);
  for (Index i = 0; i + 1 < N; ++i) {
    const Vector ym = sol.y_at(0.5 * (sol.t(i) + sol.t(i + 1)));
    tr.x_mid.col(i) = ym.head(nx);
    tr.p_mid.col(i) = ym.tail(nx);
  }
  tr.u_mid = sol.z_mid.topRows(nu);
  tr.lambda = sol.q;

  if (formulation == Formulation::PrimalDual) {
    tr.theta = sol.z.middleRows(nu, ng);
    tr.eta = sol.z.bottomRows(nc);
    tr.theta_mid = sol.z_mid.middleRows(nu, ng);
    tr.eta_mid = sol.z_mid.bottomRows(nc);
    return tr;
  }
  auto estimate = [&](const Matrix& X, const Matrix& U, Matrix& th, Matrix& et) {
    th.resize(ng, X.cols());
    et.resize(nc, X.cols());
    for (Index j = 0; j < X.cols(); ++j) {
      const Vector g = eval_state_constraints(problem, X.col(j));
      const Vector c = eval_mixed(problem, X.col(j), U.col(j));
      for (Index i = 0; i < ng; ++i) th(i, j) = g(i) < 0.0 ? -eps / g(i) : kNaN;
      for (Index i = 0; i < nc; ++i) et(i, j) = c(i) < 0.0 ? -eps / c(i) : kNaN;
    }
  };
  estimate(tr.x, tr.u, tr.theta, tr.eta);
  estimate(tr.x_mid, tr.u_mid, tr.theta_mid, tr.eta_mid);
  return tr;
}

}  // namespace ipmocp
