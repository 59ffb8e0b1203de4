#include "ipmocp/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "ipmocp/barrier.hpp"

namespace ipmocp {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

double barrier_sum(const OcpProblem& problem, const Vector& x, const Vector& u) {
  double s = 0.0;
  const Vector g = eval_state_constraints(problem, x);
  const Vector c = eval_mixed(problem, x, u);
  for (Index i = 0; i < g.size(); ++i) s += log_barrier(g(i));
  for (Index i = 0; i < c.size(); ++i) s += log_barrier(c(i));
  return s;
}

// Composite Simpson over node/midpoint samples.
template <class F>
double simpson(const Trajectory& tr, F&& value) {
  double total = 0.0;
  for (Index i = 0; i + 1 < tr.t.size(); ++i) {
    const double h = tr.t(i + 1) - tr.t(i);
    total += h / 6.0 * (value(tr.x.col(i), tr.u.col(i)) + 4.0 * value(tr.x_mid.col(i), tr.u_mid.col(i)) +
                        value(tr.x.col(i + 1), tr.u.col(i + 1)));
  }
  return total;
}

// Composite trapezoid of each row of `m` over the mesh t.
Vector trapezoid_rows(const Vector& t, const Matrix& m) {
  Vector out = Vector::Zero(m.rows());
  for (Index i = 0; i + 1 < t.size(); ++i) out += 0.5 * (t(i + 1) - t(i)) * (m.col(i) + m.col(i + 1));
  return out;
}

}  // namespace

Multipliers reconstruct_multipliers(const OcpProblem& problem, const Trajectory& tr, double eps) {
  if (!(eps > 0.0)) throw ConfigError("reconstruct_multipliers: eps must be strictly positive");
  Multipliers m;
  auto fill = [&](const Matrix& X, const Matrix& U, Matrix& th, Matrix& et, bool mid) {
    th.resize(problem.ng, X.cols());
    et.resize(problem.nc, X.cols());
    for (Index j = 0; j < X.cols(); ++j) {
      const Vector g = eval_state_constraints(problem, X.col(j));
      const Vector c = eval_mixed(problem, X.col(j), U.col(j));
      const std::string where = (mid ? " at the midpoint of interval " : " at node ") + std::to_string(j);
      for (Index i = 0; i < problem.ng; ++i) {
        if (!(g(i) < 0.0)) {
          throw InteriorityError(InteriorityError::Kind::State, i, j,
                                 "state constraint " + std::to_string(i) + " not interior" + where);
        }
        th(i, j) = -eps / g(i);
      }
      for (Index i = 0; i < problem.nc; ++i) {
        if (!(c(i) < 0.0)) {
          throw InteriorityError(InteriorityError::Kind::Mixed, i, j,
                                 "mixed constraint " + std::to_string(i) + " not interior" + where);
        }
        et(i, j) = -eps / c(i);
      }
    }
  };
  fill(tr.x, tr.u, m.theta, m.eta, false);
  fill(tr.x_mid, tr.u_mid, m.theta_mid, m.eta_mid, true);
  return m;
}

StationarityReport stationarity_residual(const OcpProblem& problem, const Trajectory& tr, const Multipliers& m,
                                         const Vector& lambda, double eps) {
  const Index nx = problem.nx, nu = problem.nu;
  const Index N = tr.t.size();
  StationarityReport rep;

  // Adjoint equation integrated over each interval with the Simpson rule.
  std::vector<Vector> lx_nodes(N);
  for (Index i = 0; i < N; ++i) {
    const Vector grad =
        lagrangian_gradient(problem, tr.x.col(i), tr.u.col(i), tr.p.col(i), m.theta.col(i), m.eta.col(i));
    lx_nodes[i] = grad.head(nx);
    if (nu > 0) rep.hamiltonian = std::max(rep.hamiltonian, grad.tail(nu).cwiseAbs().maxCoeff());
  }
  for (Index i = 0; i + 1 < N; ++i) {
    const Vector grad = lagrangian_gradient(problem, tr.x_mid.col(i), tr.u_mid.col(i), tr.p_mid.col(i),
                                            m.theta_mid.col(i), m.eta_mid.col(i));
    if (nu > 0) rep.hamiltonian = std::max(rep.hamiltonian, grad.tail(nu).cwiseAbs().maxCoeff());
    const double h = tr.t(i + 1) - tr.t(i);
    const Vector& a = lx_nodes[i];
    const Vector& b = lx_nodes[i + 1];
    const Vector mid = grad.head(nx);
    const Vector defect = (tr.p.col(i + 1) - tr.p.col(i)) / h + (a + 4.0 * mid + b) / 6.0;
    const double scale = 1.0 + std::max({a.cwiseAbs().maxCoeff(), b.cwiseAbs().maxCoeff(), mid.cwiseAbs().maxCoeff()});
    rep.adjoint = std::max(rep.adjoint, defect.cwiseAbs().maxCoeff() / scale);
  }

  // Transversality and boundary map.
  const Vector xa = tr.x.col(0), xb = tr.x.col(N - 1);
  const Vector pa = tr.p.col(0), pb = tr.p.col(N - 1);
  Vector bres;
  if (problem.bc.is_fixed_initial()) {
    bres.resize(2 * nx);
    bres << xa - problem.bc.x0, pb - terminal_cost_gradient(problem, xb);
  } else {
    const auto& bc = problem.bc;
    const Matrix ha = bc.h_x0 ? bc.h_x0(xa, xb)
                              : detail::fd_jacobian([&](const Vector& v) { return bc.h(v, xb); }, xa);
    const Matrix hb = bc.h_xT ? bc.h_xT(xa, xb)
                              : detail::fd_jacobian([&](const Vector& v) { return bc.h(xa, v); }, xb);
    bres.resize(bc.size + 2 * nx);
    bres << bc.h(xa, xb), pa + ha.transpose() * lambda, pb - terminal_cost_gradient(problem, xb) - hb.transpose() * lambda;
  }
  rep.boundary = bres.size() > 0 ? bres.cwiseAbs().maxCoeff() : 0.0;

  // Complementarity integrals with measure densities theta dt.
  const double eps_t = eps * problem.horizon;
  Matrix gtheta(problem.ng, N), ceta(problem.nc, N);
  for (Index j = 0; j < N; ++j) {
    gtheta.col(j) = eval_state_constraints(problem, tr.x.col(j)).cwiseProduct(m.theta.col(j));
    ceta.col(j) = eval_mixed(problem, tr.x.col(j), tr.u.col(j)).cwiseProduct(m.eta.col(j));
  }
  const Vector ig = trapezoid_rows(tr.t, gtheta);
  const Vector ic = trapezoid_rows(tr.t, ceta);
  for (Index i = 0; i < ig.size(); ++i) rep.complementarity_g = std::max(rep.complementarity_g, std::abs(ig(i) + eps_t));
  for (Index i = 0; i < ic.size(); ++i) rep.complementarity_c = std::max(rep.complementarity_c, std::abs(ic(i) + eps_t));

  rep.min_theta = m.theta.size() > 0 ? std::min(m.theta.minCoeff(), m.theta_mid.minCoeff()) : kInf;
  rep.min_eta = m.eta.size() > 0 ? std::min(m.eta.minCoeff(), m.eta_mid.minCoeff()) : kInf;
  rep.signs_ok = rep.min_theta > 0.0 && rep.min_eta > 0.0;
  return rep;
}

double trajectory_cost(const OcpProblem& problem, const Trajectory& tr) {
  const double running = simpson(tr, [&](const Vector& x, const Vector& u) { return eval_running_cost(problem, x, u); });
  return eval_terminal_cost(problem, tr.x.col(tr.x.cols() - 1)) + running;
}

double penalized_cost(const OcpProblem& problem, const Trajectory& tr, double eps) {
  const double barrier = simpson(tr, [&](const Vector& x, const Vector& u) { return barrier_sum(problem, x, u); });
  return trajectory_cost(problem, tr) + eps * barrier;
}

double state_distance(const bvp::MeshSolution& a, const bvp::MeshSolution& b, Index rows) {
  double d = 0.0;
  for (Index i = 0; i < a.nodes(); ++i) {
    d = std::max(d, (a.y.col(i).head(rows) - b.y_at(a.t(i)).head(rows)).cwiseAbs().maxCoeff());
  }
  for (Index i = 0; i < b.nodes(); ++i) {
    d = std::max(d, (b.y.col(i).head(rows) - a.y_at(b.t(i)).head(rows)).cwiseAbs().maxCoeff());
  }
  return d;
}

void compute_stage_diagnostics(const OcpProblem& problem, Formulation formulation, double eps,
                               const bvp::MeshSolution& solution, StageDiagnostics& out) {
  const Trajectory tr = extract_trajectory(problem, formulation, eps, solution);
  const Index N = tr.t.size();
  out.eps = eps;
  out.mesh_nodes = N;
  out.bvp_residual = solution.residual_norm;
  out.cost = trajectory_cost(problem, tr);
  out.penalized_cost = penalized_cost(problem, tr, eps);

  Matrix g(problem.ng, N), c(problem.nc, N);
  for (Index j = 0; j < N; ++j) {
    g.col(j) = eval_state_constraints(problem, tr.x.col(j));
    c.col(j) = eval_mixed(problem, tr.x.col(j), tr.u.col(j));
  }
  out.min_slack_g = (-g).rowwise().minCoeff();
  out.min_slack_c = (-c).rowwise().minCoeff();

  out.p_inf = tr.p.cwiseAbs().maxCoeff();
  out.p_jump = 0.0;
  for (Index i = 0; i + 1 < N; ++i) {
    out.p_jump = std::max(out.p_jump, (tr.p.col(i + 1) - tr.p.col(i)).cwiseAbs().maxCoeff() / (tr.t(i + 1) - tr.t(i)));
  }

  auto comp = [&](const Matrix& mult, const Matrix& w) {
    if (mult.size() == 0) return 0.0;
    return (mult.cwiseProduct(w).array() + eps).abs().maxCoeff();
  };
  out.pointwise_comp_g = comp(tr.theta, g);
  out.pointwise_comp_c = comp(tr.eta, c);

  try {
    const Multipliers m = reconstruct_multipliers(problem, tr, eps);
    out.l1_g = trapezoid_rows(tr.t, m.theta.cwiseAbs());
    out.l1_c = trapezoid_rows(tr.t, m.eta.cwiseAbs());
    out.stationarity = stationarity_residual(problem, tr, m, tr.lambda, eps);
  } catch (const InteriorityError&) {
    out.l1_g = Vector::Constant(problem.ng, kInf);
    out.l1_c = Vector::Constant(problem.nc, kInf);
    out.stationarity = StationarityReport{kNaN, kNaN, kNaN, kNaN, kNaN, kNaN, kNaN, false};
  }
}

TrailReport assess_trail(std::string name, std::vector<double> values) {
  TrailReport r;
  r.name = std::move(name);
  r.values = std::move(values);
  const std::size_t n = r.values.size();
  if (n == 0) return r;
  const std::size_t q = std::max<std::size_t>(1, n / 4);
  r.first_quarter_max = *std::max_element(r.values.begin(), r.values.begin() + q);
  r.last_quarter_max = *std::max_element(r.values.end() - q, r.values.end());
  const bool finite = std::all_of(r.values.begin(), r.values.end(), [](double v) { return std::isfinite(v); });
  r.bounded = finite && !(r.last_quarter_max > 2.0 * r.first_quarter_max);
  return r;
}

BoundednessReport boundedness_trail(const std::vector<StageDiagnostics>& stages) {
  std::vector<double> lg, lc, pinf;
  for (const auto& s : stages) {
    if (!s.success) continue;
    lg.push_back(s.l1_g.size() > 0 ? s.l1_g.maxCoeff() : 0.0);
    lc.push_back(s.l1_c.size() > 0 ? s.l1_c.maxCoeff() : 0.0);
    pinf.push_back(s.p_inf);
  }
  BoundednessReport rep;
  rep.enough_stages = pinf.size() >= 3;
  rep.l1_g = assess_trail("l1_state_barrier", std::move(lg));
  rep.l1_c = assess_trail("l1_mixed_barrier", std::move(lc));
  rep.p_inf = assess_trail("adjoint_sup", std::move(pinf));
  return rep;
}

}  // namespace ipmocp
