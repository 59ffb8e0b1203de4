#include "ipmocp/ocp_problem.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <random>
#include <set>

namespace ipmocp {

namespace {

void expect_size(const char* what, Index got, Index expected) {
  if (got != expected) {
    throw ConfigError(std::string(what) + ": expected size " + std::to_string(expected) +
                      ", got " + std::to_string(got));
  }
}

Vector checked(const char* name, Vector v, Index rows) {
  if (v.size() != rows) {
    throw ConfigError(std::string("callback '") + name + "' returned " + std::to_string(v.size()) +
                      " entries, declared " + std::to_string(rows));
  }
  if (!v.allFinite()) {
    throw EvaluationError(name, std::string("callback '") + name + "' returned a non-finite value");
  }
  return v;
}

Matrix checked(const char* name, Matrix m, Index rows, Index cols) {
  if (m.rows() != rows || m.cols() != cols) {
    throw ConfigError(std::string("callback '") + name + "' returned a " + std::to_string(m.rows()) +
                      "x" + std::to_string(m.cols()) + " matrix, declared " + std::to_string(rows) +
                      "x" + std::to_string(cols));
  }
  if (!m.allFinite()) {
    throw EvaluationError(name, std::string("callback '") + name + "' returned a non-finite value");
  }
  return m;
}

double checked(const char* name, double v) {
  if (!std::isfinite(v)) {
    throw EvaluationError(name, std::string("callback '") + name + "' returned a non-finite value");
  }
  return v;
}

void check_point(const OcpProblem& p, const Vector& x) { expect_size("state", x.size(), p.nx); }

void check_point(const OcpProblem& p, const Vector& x, const Vector& u) {
  expect_size("state", x.size(), p.nx);
  expect_size("control", u.size(), p.nu);
}

// Weights of length zero are read as all-zero weights.
Vector weights(const Vector& w, Index n, const char* what) {
  if (w.size() == 0) return Vector::Zero(n);
  expect_size(what, w.size(), n);
  return w;
}

}  // namespace

BoundaryConditions BoundaryConditions::fixed_initial(Vector x0) {
  BoundaryConditions bc;
  bc.kind = Kind::FixedInitial;
  bc.size = x0.size();
  bc.x0 = x0;
  bc.h = [x0](const Vector& a, const Vector&) -> Vector { return a - x0; };
  const Index n = x0.size();
  bc.h_x0 = [n](const Vector&, const Vector&) -> Matrix { return Matrix::Identity(n, n); };
  bc.h_xT = [n](const Vector&, const Vector&) -> Matrix { return Matrix::Zero(n, n); };
  return bc;
}

BoundaryConditions BoundaryConditions::general(
    Index size, std::function<Vector(const Vector&, const Vector&)> h,
    std::function<Matrix(const Vector&, const Vector&)> h_x0,
    std::function<Matrix(const Vector&, const Vector&)> h_xT) {
  BoundaryConditions bc;
  bc.kind = Kind::General;
  bc.size = size;
  bc.h = std::move(h);
  bc.h_x0 = std::move(h_x0);
  bc.h_xT = std::move(h_xT);
  return bc;
}

void OcpProblem::check() const {
  if (nx <= 0) throw ConfigError("problem '" + name + "': nx must be positive");
  if (nu < 0 || ng < 0 || nc < 0) throw ConfigError("problem '" + name + "': negative dimension");
  if (!(horizon > 0.0) || !std::isfinite(horizon)) {
    throw ConfigError("problem '" + name + "': horizon must be strictly positive");
  }
  if (!f1) throw ConfigError("problem '" + name + "': f1 is required");
  if (nu > 0 && !f2) throw ConfigError("problem '" + name + "': f2 is required when nu > 0");
  if (!l1) throw ConfigError("problem '" + name + "': l1 is required");
  if (ng > 0 && !g) throw ConfigError("problem '" + name + "': g is required when ng > 0");
  if (nc > 0 && (!a || !b)) throw ConfigError("problem '" + name + "': a and b are required when nc > 0");
  if (nc > 0 && nu == 0) throw ConfigError("problem '" + name + "': mixed constraints need a control");
  if (!bc.h) throw ConfigError("problem '" + name + "': boundary map h is required");
  if (bc.is_fixed_initial()) expect_size("fixed initial state", bc.x0.size(), nx);
  if (bc.size < 0 || bc.size > 2 * nx) throw ConfigError("problem '" + name + "': bad boundary size");
}

Vector eval_dynamics(const OcpProblem& problem, const Vector& x, const Vector& u) {
  check_point(problem, x, u);
  Vector out = checked("f1", problem.f1(x), problem.nx);
  if (problem.nu > 0) out.noalias() += control_matrix(problem, x) * u;
  return out;
}

Matrix control_matrix(const OcpProblem& problem, const Vector& x) {
  if (problem.nu == 0) return Matrix::Zero(problem.nx, 0);
  return checked("f2", problem.f2(x), problem.nx, problem.nu);
}

Vector eval_mixed(const OcpProblem& problem, const Vector& x, const Vector& u) {
  check_point(problem, x, u);
  if (problem.nc == 0) return Vector::Zero(0);
  return mixed_control_matrix(problem, x) * u + checked("b", problem.b(x), problem.nc);
}

Matrix mixed_control_matrix(const OcpProblem& problem, const Vector& x) {
  if (problem.nc == 0) return Matrix::Zero(0, problem.nu);
  return checked("a", problem.a(x), problem.nc, problem.nu);
}

Vector eval_state_constraints(const OcpProblem& problem, const Vector& x) {
  check_point(problem, x);
  if (problem.ng == 0) return Vector::Zero(0);
  return checked("g", problem.g(x), problem.ng);
}

double eval_running_cost(const OcpProblem& problem, const Vector& x, const Vector& u) {
  check_point(problem, x, u);
  double v = checked("l1", problem.l1(x));
  if (problem.nu > 0 && problem.l2) v += checked("l2", problem.l2(x), problem.nu).dot(u);
  return v;
}

double eval_terminal_cost(const OcpProblem& problem, const Vector& x) {
  check_point(problem, x);
  return problem.phi ? checked("phi", problem.phi(x)) : 0.0;
}

Matrix dynamics_jacobian_x(const OcpProblem& problem, const Vector& x, const Vector& u) {
  check_point(problem, x, u);
  Matrix jac = problem.f1_x
                   ? checked("f1_x", problem.f1_x(x), problem.nx, problem.nx)
                   : detail::fd_jacobian([&](const Vector& v) { return checked("f1", problem.f1(v), problem.nx); }, x);
  if (problem.nu > 0) {
    if (problem.f2u_x) {
      jac += checked("f2u_x", problem.f2u_x(x, u), problem.nx, problem.nx);
    } else {
      jac += detail::fd_jacobian([&](const Vector& v) -> Vector { return control_matrix(problem, v) * u; }, x);
    }
  }
  return jac;
}

Matrix mixed_jacobian_x(const OcpProblem& problem, const Vector& x, const Vector& u) {
  check_point(problem, x, u);
  if (problem.nc == 0) return Matrix::Zero(0, problem.nx);
  Matrix jac = problem.b_x
                   ? checked("b_x", problem.b_x(x), problem.nc, problem.nx)
                   : detail::fd_jacobian([&](const Vector& v) { return checked("b", problem.b(v), problem.nc); }, x);
  if (problem.au_x) {
    jac += checked("au_x", problem.au_x(x, u), problem.nc, problem.nx);
  } else {
    jac += detail::fd_jacobian([&](const Vector& v) -> Vector { return mixed_control_matrix(problem, v) * u; }, x);
  }
  return jac;
}

Matrix state_constraint_jacobian(const OcpProblem& problem, const Vector& x) {
  check_point(problem, x);
  if (problem.ng == 0) return Matrix::Zero(0, problem.nx);
  if (problem.g_x) return checked("g_x", problem.g_x(x), problem.ng, problem.nx);
  return detail::fd_jacobian([&](const Vector& v) { return checked("g", problem.g(v), problem.ng); }, x);
}

Vector running_cost_gradient_x(const OcpProblem& problem, const Vector& x, const Vector& u) {
  check_point(problem, x, u);
  Vector grad;
  if (problem.l1_x) {
    grad = checked("l1_x", problem.l1_x(x), problem.nx);
  } else {
    grad = detail::fd_jacobian([&](const Vector& v) { return Vector::Constant(1, checked("l1", problem.l1(v))); }, x)
               .row(0)
               .transpose();
  }
  if (problem.nu > 0 && problem.l2) {
    if (problem.l2_x) {
      grad.noalias() += checked("l2_x", problem.l2_x(x), problem.nu, problem.nx).transpose() * u;
    } else {
      grad += detail::fd_jacobian([&](const Vector& v) { return checked("l2", problem.l2(v), problem.nu); }, x)
                  .transpose() *
              u;
    }
  }
  return grad;
}

Vector terminal_cost_gradient(const OcpProblem& problem, const Vector& x) {
  check_point(problem, x);
  if (!problem.phi) return Vector::Zero(problem.nx);
  if (problem.phi_x) return checked("phi_x", problem.phi_x(x), problem.nx);
  return detail::fd_jacobian([&](const Vector& v) { return Vector::Constant(1, checked("phi", problem.phi(v))); }, x)
      .row(0)
      .transpose();
}

Matrix terminal_cost_hessian(const OcpProblem& problem, const Vector& x) {
  if (!problem.phi) return Matrix::Zero(problem.nx, problem.nx);
  Matrix hess = detail::fd_jacobian([&](const Vector& v) { return terminal_cost_gradient(problem, v); }, x);
  return 0.5 * (hess + hess.transpose());
}

Vector lagrangian_gradient(const OcpProblem& problem, const Vector& x, const Vector& u, const Vector& p,
                           const Vector& theta, const Vector& eta) {
  check_point(problem, x, u);
  expect_size("adjoint", p.size(), problem.nx);
  const Vector th = weights(theta, problem.ng, "state multiplier");
  const Vector et = weights(eta, problem.nc, "mixed multiplier");

  Vector grad(problem.nx + problem.nu);
  auto gx = grad.head(problem.nx);
  gx = running_cost_gradient_x(problem, x, u);
  gx.noalias() += dynamics_jacobian_x(problem, x, u).transpose() * p;
  if (problem.ng > 0) gx.noalias() += state_constraint_jacobian(problem, x).transpose() * th;
  if (problem.nc > 0) gx.noalias() += mixed_jacobian_x(problem, x, u).transpose() * et;

  if (problem.nu > 0) {
    auto gu = grad.tail(problem.nu);
    gu = problem.l2 ? checked("l2", problem.l2(x), problem.nu) : Vector::Zero(problem.nu);
    gu.noalias() += control_matrix(problem, x).transpose() * p;
    if (problem.nc > 0) gu.noalias() += mixed_control_matrix(problem, x).transpose() * et;
  }
  return grad;
}

Matrix lagrangian_hessian(const OcpProblem& problem, const Vector& x, const Vector& u, const Vector& p,
                          const Vector& theta, const Vector& eta) {
  const Index n = problem.nx + problem.nu;
  if (problem.lagrangian_hessian) {
    const Vector th = weights(theta, problem.ng, "state multiplier");
    const Vector et = weights(eta, problem.nc, "mixed multiplier");
    return checked("lagrangian_hessian", problem.lagrangian_hessian(x, u, p, th, et), n, n);
  }
  Vector xu(n);
  xu << x, u;
  Matrix hess = detail::fd_jacobian(
      [&](const Vector& v) {
        return lagrangian_gradient(problem, v.head(problem.nx), v.tail(problem.nu), p, theta, eta);
      },
      xu);
  return 0.5 * (hess + hess.transpose());
}

// --- validation ------------------------------------------------------------

bool ValidationReport::all_clear() const {
  return std::none_of(checks.begin(), checks.end(), [](const DerivativeCheck& c) { return c.flagged; });
}

const DerivativeCheck* ValidationReport::find(const std::string& name) const {
  for (const auto& c : checks) {
    if (c.name == name) return &c;
  }
  return nullptr;
}

std::vector<SamplePoint> sample_points(const OcpProblem& problem, std::size_t count, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> xs(problem.box.state_lo, problem.box.state_hi);
  std::uniform_real_distribution<double> us(problem.box.control_lo, problem.box.control_hi);
  std::vector<SamplePoint> out;
  out.reserve(count);
  for (std::size_t k = 0; k < count; ++k) {
    SamplePoint s{Vector(problem.nx), Vector(problem.nu)};
    for (Index i = 0; i < problem.nx; ++i) s.x(i) = xs(rng);
    for (Index i = 0; i < problem.nu; ++i) s.u(i) = us(rng);
    out.push_back(std::move(s));
  }
  return out;
}

namespace {

class CheckAccumulator {
 public:
  CheckAccumulator(std::string name, double threshold) : threshold_(threshold) { check_.name = std::move(name); }

  void add(const Matrix& analytic, const Matrix& reference) {
    if (analytic.rows() != reference.rows() || analytic.cols() != reference.cols()) {
      throw ConfigError("derivative '" + check_.name + "' has the wrong shape");
    }
    for (Index i = 0; i < analytic.rows(); ++i) {
      for (Index j = 0; j < analytic.cols(); ++j) {
        const double err = std::abs(analytic(i, j) - reference(i, j)) / std::max(1.0, std::abs(reference(i, j)));
        if (check_.worst_row < 0 || err > check_.max_rel_error) {
          check_.max_rel_error = err;
          check_.worst_row = i;
          check_.worst_col = j;
        }
        if (err > threshold_) flagged_.insert({i, j});
      }
    }
  }

  DerivativeCheck finish() {
    check_.flagged = !flagged_.empty();
    check_.flagged_entries.assign(flagged_.begin(), flagged_.end());
    return check_;
  }

 private:
  double threshold_;
  DerivativeCheck check_;
  std::set<std::pair<Index, Index>> flagged_;
};

}  // namespace

ValidationReport validate_derivatives(const OcpProblem& problem, const std::vector<SamplePoint>& samples,
                                      double threshold) {
  if (samples.empty()) throw ConfigError("validate_derivatives: at least one sample point is required");
  ValidationReport report;
  report.threshold = threshold;

  auto run = [&](const std::string& name, bool present, auto&& analytic, auto&& reference) {
    if (!present) {
      DerivativeCheck c;
      c.name = name;
      c.analytic = false;
      report.checks.push_back(c);
      return;
    }
    CheckAccumulator acc(name, threshold);
    for (const auto& s : samples) acc.add(analytic(s), reference(s));
    report.checks.push_back(acc.finish());
  };

  const OcpProblem& pb = problem;
  run("f1_x", bool(pb.f1_x), [&](const SamplePoint& s) -> Matrix { return pb.f1_x(s.x); },
      [&](const SamplePoint& s) { return detail::fd_jacobian(pb.f1, s.x); });
  if (pb.nu > 0) {
    run("f2u_x", bool(pb.f2u_x), [&](const SamplePoint& s) -> Matrix { return pb.f2u_x(s.x, s.u); },
        [&](const SamplePoint& s) {
          return detail::fd_jacobian([&](const Vector& v) -> Vector { return pb.f2(v) * s.u; }, s.x);
        });
  }
  run("l1_x", bool(pb.l1_x), [&](const SamplePoint& s) -> Matrix { return pb.l1_x(s.x).transpose(); },
      [&](const SamplePoint& s) {
        return detail::fd_jacobian([&](const Vector& v) { return Vector::Constant(1, pb.l1(v)); }, s.x);
      });
  if (pb.nu > 0 && pb.l2) {
    run("l2_x", bool(pb.l2_x), [&](const SamplePoint& s) -> Matrix { return pb.l2_x(s.x); },
        [&](const SamplePoint& s) { return detail::fd_jacobian(pb.l2, s.x); });
  }
  if (pb.phi) {
    run("phi_x", bool(pb.phi_x), [&](const SamplePoint& s) -> Matrix { return pb.phi_x(s.x).transpose(); },
        [&](const SamplePoint& s) {
          return detail::fd_jacobian([&](const Vector& v) { return Vector::Constant(1, pb.phi(v)); }, s.x);
        });
  }
  if (pb.ng > 0) {
    run("g_x", bool(pb.g_x), [&](const SamplePoint& s) -> Matrix { return pb.g_x(s.x); },
        [&](const SamplePoint& s) { return detail::fd_jacobian(pb.g, s.x); });
  }
  if (pb.nc > 0) {
    run("au_x", bool(pb.au_x), [&](const SamplePoint& s) -> Matrix { return pb.au_x(s.x, s.u); },
        [&](const SamplePoint& s) {
          return detail::fd_jacobian([&](const Vector& v) -> Vector { return pb.a(v) * s.u; }, s.x);
        });
    run("b_x", bool(pb.b_x), [&](const SamplePoint& s) -> Matrix { return pb.b_x(s.x); },
        [&](const SamplePoint& s) { return detail::fd_jacobian(pb.b, s.x); });
  }
  if (pb.bc.h_x0 && pb.bc.h_xT) {
    // Boundary map sampled at (x, x) pairs.
    run("h_x0", true, [&](const SamplePoint& s) -> Matrix { return pb.bc.h_x0(s.x, s.x); },
        [&](const SamplePoint& s) {
          return detail::fd_jacobian([&](const Vector& v) { return pb.bc.h(v, s.x); }, s.x);
        });
    run("h_xT", true, [&](const SamplePoint& s) -> Matrix { return pb.bc.h_xT(s.x, s.x); },
        [&](const SamplePoint& s) {
          return detail::fd_jacobian([&](const Vector& v) { return pb.bc.h(s.x, v); }, s.x);
        });
  }
  if (pb.lagrangian_hessian) {
    // Weights fixed per sample so the check is reproducible.
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> w(0.1, 2.0);
    std::vector<std::array<Vector, 3>> wts;
    for (std::size_t k = 0; k < samples.size(); ++k) {
      Vector p(pb.nx), th(pb.ng), et(pb.nc);
      for (Index i = 0; i < pb.nx; ++i) p(i) = w(rng);
      for (Index i = 0; i < pb.ng; ++i) th(i) = w(rng);
      for (Index i = 0; i < pb.nc; ++i) et(i) = w(rng);
      wts.push_back({p, th, et});
    }
    std::size_t idx = 0;
    CheckAccumulator acc("lagrangian_hessian", threshold);
    for (const auto& s : samples) {
      const auto& [p, th, et] = wts[idx++];
      Vector xu(pb.nx + pb.nu);
      xu << s.x, s.u;
      const Matrix ref = detail::fd_jacobian(
          [&](const Vector& v) { return lagrangian_gradient(pb, v.head(pb.nx), v.tail(pb.nu), p, th, et); }, xu);
      acc.add(pb.lagrangian_hessian(s.x, s.u, p, th, et), ref);
    }
    report.checks.push_back(acc.finish());
  }
  return report;
}

namespace detail {

double fd_step(double component) {
  static const double root_eps = std::sqrt(std::numeric_limits<double>::epsilon());
  return root_eps * std::max(1.0, std::abs(component));
}

Matrix fd_jacobian(const std::function<Vector(const Vector&)>& fn, const Vector& x) {
  Matrix jac;
  Vector xp = x;
  Vector xm = x;
  for (Index j = 0; j < x.size(); ++j) {
    const double h = fd_step(x(j));
    xp(j) = x(j) + h;
    xm(j) = x(j) - h;
    const Vector fp = fn(xp);
    const Vector fm = fn(xm);
    if (j == 0) jac.resize(fp.size(), x.size());
    jac.col(j) = (fp - fm) / (xp(j) - xm(j));
    xp(j) = x(j);
    xm(j) = x(j);
  }
  if (x.size() == 0) jac.resize(fn(x).size(), 0);
  return jac;
}

}  // namespace detail

}  // namespace ipmocp
