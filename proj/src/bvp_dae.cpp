#include "ipmocp/bvp_dae.hpp"

#include <Eigen/SparseLU>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <optional>
#include <ostream>
#include <regex>
#include <vector>

namespace ipmocp::bvp {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Interior points of the 5-point Lobatto rule on [-1, 1] are 0 and +-sqrt(3/7);
// the residual vanishes at the nodes and the midpoint, so only these two carry
// information. Weight 49/90 each, normalised to an interval average.
const double kLobattoOffset = 0.5 * std::sqrt(3.0 / 7.0);
constexpr double kLobattoWeight = 49.0 / 180.0;

struct Hermite {
  double h00, h10, h01, h11;     // value weights
  double d00, d10, d01, d11;     // derivative weights (already divided by h where needed)
};

Hermite hermite(double s, double h) {
  const double s2 = s * s;
  const double s3 = s2 * s;
  return {2 * s3 - 3 * s2 + 1,       s3 - 2 * s2 + s,         -2 * s3 + 3 * s2, s3 - s2,
          (6 * s2 - 6 * s) / h,      3 * s2 - 4 * s + 1,      (-6 * s2 + 6 * s) / h, 3 * s2 - 2 * s};
}

void fd_point_jacobian(const BvpDaeSystem& sys, double t, const Vector& y, const Vector& z, const Vector& q,
                       PointJacobian& jac) {
  const Index ny = sys.n_diff, nz = sys.n_alg, nq = sys.n_par;
  jac.f_y.resize(ny, ny);
  jac.f_z.resize(ny, nz);
  jac.f_q.resize(ny, nq);
  jac.g_y.resize(nz, ny);
  jac.g_z.resize(nz, nz);
  jac.g_q.resize(nz, nq);
  Vector fp(ny), gp(nz), fm(ny), gm(nz);
  const double root_eps = std::sqrt(std::numeric_limits<double>::epsilon());
  auto column = [&](Vector& v, Index j, Matrix& fcol, Matrix& gcol, auto&& call) {
    const double orig = v(j);
    const double step = root_eps * std::max(1.0, std::abs(orig));
    v(j) = orig + step;
    const double hi = v(j);
    call(fp, gp);
    v(j) = orig - step;
    const double lo = v(j);
    call(fm, gm);
    v(j) = orig;
    fcol.col(j) = (fp - fm) / (hi - lo);
    gcol.col(j) = (gp - gm) / (hi - lo);
  };
  Vector yy = y, zz = z, qq = q;
  auto call = [&](Vector& f, Vector& g) { sys.eval(t, yy, zz, qq, f, g); };
  for (Index j = 0; j < ny; ++j) column(yy, j, jac.f_y, jac.g_y, call);
  for (Index j = 0; j < nz; ++j) column(zz, j, jac.f_z, jac.g_z, call);
  for (Index j = 0; j < nq; ++j) column(qq, j, jac.f_q, jac.g_q, call);
}

void point_jacobian(const BvpDaeSystem& sys, double t, const Vector& y, const Vector& z, const Vector& q,
                    PointJacobian& jac) {
  if (sys.jacobian) {
    sys.jacobian(t, y, z, q, jac);
  } else {
    fd_point_jacobian(sys, t, y, z, q, jac);
  }
}

void boundary_jacobian(const BvpDaeSystem& sys, const Vector& ya, const Vector& yb, const Vector& q,
                       BoundaryJacobian& jac) {
  if (sys.bc_jacobian) {
    sys.bc_jacobian(ya, yb, q, jac);
    return;
  }
  const double root_eps = std::sqrt(std::numeric_limits<double>::epsilon());
  const Index nb = sys.n_diff + sys.n_par;
  auto fd = [&](Vector& v, Matrix& out, auto&& call) {
    out.resize(nb, v.size());
    for (Index j = 0; j < v.size(); ++j) {
      const double orig = v(j);
      const double step = root_eps * std::max(1.0, std::abs(orig));
      v(j) = orig + step;
      const double hi = v(j);
      const Vector rp = call();
      v(j) = orig - step;
      const double lo = v(j);
      const Vector rm = call();
      v(j) = orig;
      out.col(j) = (rp - rm) / (hi - lo);
    }
  };
  Vector a = ya, b = yb, qq = q;
  auto call = [&]() { return sys.bc(a, b, qq); };
  fd(a, jac.ya, call);
  fd(b, jac.yb, call);
  fd(qq, jac.q, call);
}

bool slack_ok(const Vector& s) {
  for (Index i = 0; i < s.size(); ++i) {
    if (!(s(i) > 0.0) || !std::isfinite(s(i))) return false;
  }
  return true;
}

/// Local Newton solve of alg(t, y, z, q) = 0 for z, keeping the guard
/// satisfied. Returns nothing on failure.
std::optional<Vector> solve_algebraic(const BvpDaeSystem& sys, double t, const Vector& y, const Vector& q,
                                      Vector z, double tau) {
  const Index ny = sys.n_diff;
  if (sys.n_alg == 0) return z;
  Vector f(ny), g(sys.n_alg), ft(ny), gt(sys.n_alg);
  if (sys.guard && !slack_ok(sys.guard(t, y, z))) return std::nullopt;
  sys.eval(t, y, z, q, f, g);
  if (!f.allFinite() || !g.allFinite()) return std::nullopt;
  PointJacobian jac;
  for (int it = 0; it < 40; ++it) {
    const double gnorm = g.lpNorm<Eigen::Infinity>();
    if (gnorm <= 1e-13 * (1.0 + z.lpNorm<Eigen::Infinity>())) return z;
    point_jacobian(sys, t, y, z, q, jac);
    Eigen::PartialPivLU<Matrix> lu(jac.g_z);
    const Vector dz = -lu.solve(g);
    if (!dz.allFinite()) return std::nullopt;
    // A correction below the resolution of z means g is at its roundoff
    // floor, which can exceed any absolute bound when g_z is large.
    if (dz.lpNorm<Eigen::Infinity>() <= 4.0 * std::numeric_limits<double>::epsilon() * (1.0 + z.lpNorm<Eigen::Infinity>())) {
      return z;
    }
    const Vector s0 = sys.guard ? sys.guard(t, y, z) : Vector();
    double alpha = 1.0;
    bool accepted = false;
    for (int ls = 0; ls < 60; ++ls) {
      const Vector zt = z + alpha * dz;
      bool ok = true;
      if (sys.guard) {
        const Vector st = sys.guard(t, y, zt);
        for (Index i = 0; i < st.size() && ok; ++i) ok = std::isfinite(st(i)) && st(i) >= (1.0 - tau) * s0(i);
      }
      if (ok) {
        sys.eval(t, y, zt, q, ft, gt);
        ok = ft.allFinite() && gt.allFinite() &&
             (gt.squaredNorm() <= (1.0 - 1e-4 * alpha) * g.squaredNorm() || alpha < 1e-3);
      }
      if (ok) {
        z = zt;
        f = ft;
        g = gt;
        accepted = true;
        break;
      }
      alpha *= 0.5;
    }
    if (!accepted) return std::nullopt;
    if ((alpha * dz).lpNorm<Eigen::Infinity>() <= 1e-15 * (1.0 + z.lpNorm<Eigen::Infinity>())) break;
  }
  if (g.lpNorm<Eigen::Infinity>() <= 1e-9 * (1.0 + z.lpNorm<Eigen::Infinity>())) return z;
  return std::nullopt;
}

/// Discretised collocation equations on a fixed mesh.
///
/// Unknown layout: for each node i the block (y_i, z_i, zmid_i) (the last node
/// has no midpoint), followed by q. Rows: boundary conditions, then per node
/// alg_i, colloc_i, algmid_i (again without the last two for the last node).
class Collocation {
 public:
  Collocation(const BvpDaeSystem& sys, Vector mesh) : sys_(sys), t_(std::move(mesh)) {
    ny_ = sys.n_diff;
    nz_ = sys.n_alg;
    nq_ = sys.n_par;
    n_ = t_.size() - 1;
    block_ = ny_ + 2 * nz_;
    size_ = n_ * block_ + ny_ + nz_ + nq_;
    nodes_f_.resize(ny_, n_ + 1);
    nodes_g_.resize(nz_, n_ + 1);
    mid_y_.resize(ny_, n_);
    mid_f_.resize(ny_, n_);
    mid_g_.resize(nz_, n_);
  }

  Index size() const { return size_; }
  Index intervals() const { return n_; }
  const Vector& mesh() const { return t_; }

  Index y_off(Index i) const { return i * block_; }
  Index z_off(Index i) const { return i * block_ + ny_; }
  Index zm_off(Index i) const { return i * block_ + ny_ + nz_; }
  Index q_off() const { return n_ * block_ + ny_ + nz_; }

  Index bc_row() const { return 0; }
  Index alg_row(Index i) const { return ny_ + nq_ + i * block_; }
  Index col_row(Index i) const { return alg_row(i) + nz_; }
  Index algm_row(Index i) const { return alg_row(i) + nz_ + ny_; }

  Vector pack(const MeshSolution& s) const {
    Vector w(size_);
    for (Index i = 0; i <= n_; ++i) {
      w.segment(y_off(i), ny_) = s.y.col(i);
      if (nz_ > 0) w.segment(z_off(i), nz_) = s.z.col(i);
      if (i < n_ && nz_ > 0) w.segment(zm_off(i), nz_) = s.z_mid.col(i);
    }
    if (nq_ > 0) w.segment(q_off(), nq_) = s.q;
    return w;
  }

  /// Unpacks w; node derivatives are taken from the last residual evaluation.
  MeshSolution unpack(const Vector& w) const {
    MeshSolution s;
    s.t = t_;
    s.y.resize(ny_, n_ + 1);
    s.z.resize(nz_, n_ + 1);
    s.z_mid.resize(nz_, n_);
    for (Index i = 0; i <= n_; ++i) {
      s.y.col(i) = w.segment(y_off(i), ny_);
      if (nz_ > 0) s.z.col(i) = w.segment(z_off(i), nz_);
      if (i < n_ && nz_ > 0) s.z_mid.col(i) = w.segment(zm_off(i), nz_);
    }
    s.q = w.segment(q_off(), nq_);
    s.yp = nodes_f_;
    return s;
  }

  /// Evaluates the residual; false when some evaluation is non-finite.
  bool residual(const Vector& w, Vector& r, Vector& scale) {
    r.resize(size_);
    scale.setOnes(size_);
    const Vector q = w.segment(q_off(), nq_);
    Vector f(ny_), g(nz_);
    for (Index i = 0; i <= n_; ++i) {
      sys_.eval(t_(i), w.segment(y_off(i), ny_), w.segment(z_off(i), nz_), q, f, g);
      if (!f.allFinite() || !g.allFinite()) return false;
      nodes_f_.col(i) = f;
      nodes_g_.col(i) = g;
      r.segment(alg_row(i), nz_) = g;
    }
    for (Index i = 0; i < n_; ++i) {
      const double h = t_(i + 1) - t_(i);
      const auto yi = w.segment(y_off(i), ny_);
      const auto yj = w.segment(y_off(i + 1), ny_);
      mid_y_.col(i) = 0.5 * (yi + yj) - (h / 8.0) * (nodes_f_.col(i + 1) - nodes_f_.col(i));
      sys_.eval(t_(i) + 0.5 * h, mid_y_.col(i), w.segment(zm_off(i), nz_), q, f, g);
      if (!f.allFinite() || !g.allFinite()) return false;
      mid_f_.col(i) = f;
      mid_g_.col(i) = g;
      r.segment(col_row(i), ny_) =
          (yj - yi) / h - (nodes_f_.col(i) + 4.0 * f + nodes_f_.col(i + 1)) / 6.0;
      r.segment(algm_row(i), nz_) = g;
      for (Index k = 0; k < ny_; ++k) {
        const double typical =
            std::max({std::abs(nodes_f_(k, i)), std::abs(f(k)), std::abs(nodes_f_(k, i + 1))});
        scale(col_row(i) + k) = 1.0 / (1.0 + typical);
      }
    }
    const Vector b = sys_.bc(w.segment(y_off(0), ny_), w.segment(y_off(n_), ny_), q);
    if (b.size() != ny_ + nq_) throw ConfigError("bvp: boundary map returned the wrong number of residuals");
    if (!b.allFinite()) return false;
    r.segment(bc_row(), ny_ + nq_) = b;
    return r.allFinite();
  }

  /// Guard slacks at nodes and midpoints (requires a prior residual() call
  /// for the midpoint states). Empty when no guard.
  Vector slacks(const Vector& w) const {
    if (!sys_.guard) return Vector();
    std::vector<Vector> parts;
    Index total = 0;
    for (Index i = 0; i <= n_; ++i) {
      parts.push_back(sys_.guard(t_(i), w.segment(y_off(i), ny_), w.segment(z_off(i), nz_)));
      total += parts.back().size();
    }
    for (Index i = 0; i < n_; ++i) {
      const double h = t_(i + 1) - t_(i);
      parts.push_back(sys_.guard(t_(i) + 0.5 * h, mid_y_.col(i), w.segment(zm_off(i), nz_)));
      total += parts.back().size();
    }
    Vector s(total);
    Index k = 0;
    for (const auto& p : parts) {
      s.segment(k, p.size()) = p;
      k += p.size();
    }
    return s;
  }

  /// Slacks at nodes only; midpoint states depend on f and are checked
  /// after a residual evaluation.
  Vector node_slacks(const Vector& w) const {
    if (!sys_.guard) return Vector();
    std::vector<Vector> parts;
    Index total = 0;
    for (Index i = 0; i <= n_; ++i) {
      parts.push_back(sys_.guard(t_(i), w.segment(y_off(i), ny_), w.segment(z_off(i), nz_)));
      total += parts.back().size();
    }
    Vector s(total);
    Index k = 0;
    for (const auto& p : parts) {
      s.segment(k, p.size()) = p;
      k += p.size();
    }
    return s;
  }

  /// Assembles the sparse Jacobian at w (residual(w) must have been called).
  void jacobian(const Vector& w, SparseMatrix& jac) {
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(static_cast<std::size_t>(n_) * block_ * (2 * block_ + nq_ + 2));
    const Vector q = w.segment(q_off(), nq_);
    auto put = [&](Index row, Index col, const Matrix& m) {
      for (Index j = 0; j < m.cols(); ++j)
        for (Index i = 0; i < m.rows(); ++i) trip.emplace_back(row + i, col + j, m(i, j));
    };
    std::vector<PointJacobian> node_jac(n_ + 1);
    for (Index i = 0; i <= n_; ++i) {
      point_jacobian(sys_, t_(i), w.segment(y_off(i), ny_), w.segment(z_off(i), nz_), q, node_jac[i]);
      const auto& J = node_jac[i];
      put(alg_row(i), y_off(i), J.g_y);
      put(alg_row(i), z_off(i), J.g_z);
      if (nq_ > 0) put(alg_row(i), q_off(), J.g_q);
    }
    const Matrix eye = Matrix::Identity(ny_, ny_);
    PointJacobian M;
    for (Index i = 0; i < n_; ++i) {
      const double h = t_(i + 1) - t_(i);
      const auto& A = node_jac[i];
      const auto& B = node_jac[i + 1];
      point_jacobian(sys_, t_(i) + 0.5 * h, mid_y_.col(i), w.segment(zm_off(i), nz_), q, M);

      const Matrix ym_yi = 0.5 * eye + (h / 8.0) * A.f_y;
      const Matrix ym_zi = (h / 8.0) * A.f_z;
      const Matrix ym_yj = 0.5 * eye - (h / 8.0) * B.f_y;
      const Matrix ym_zj = -(h / 8.0) * B.f_z;

      const Index cr = col_row(i);
      put(cr, y_off(i), -eye / h - (A.f_y + 4.0 * M.f_y * ym_yi) / 6.0);
      put(cr, y_off(i + 1), eye / h - (B.f_y + 4.0 * M.f_y * ym_yj) / 6.0);
      if (nz_ > 0) {
        put(cr, z_off(i), -(A.f_z + 4.0 * M.f_y * ym_zi) / 6.0);
        put(cr, z_off(i + 1), -(B.f_z + 4.0 * M.f_y * ym_zj) / 6.0);
        put(cr, zm_off(i), -(4.0 / 6.0) * M.f_z);

        const Index ar = algm_row(i);
        put(ar, y_off(i), M.g_y * ym_yi);
        put(ar, y_off(i + 1), M.g_y * ym_yj);
        put(ar, z_off(i), M.g_y * ym_zi);
        put(ar, z_off(i + 1), M.g_y * ym_zj);
        put(ar, zm_off(i), M.g_z);
      }
      if (nq_ > 0) {
        const Matrix ym_q = -(h / 8.0) * (B.f_q - A.f_q);
        put(cr, q_off(), -(A.f_q + 4.0 * (M.f_q + M.f_y * ym_q) + B.f_q) / 6.0);
        if (nz_ > 0) put(algm_row(i), q_off(), M.g_q + M.g_y * ym_q);
      }
    }
    BoundaryJacobian bj;
    boundary_jacobian(sys_, w.segment(y_off(0), ny_), w.segment(y_off(n_), ny_), q, bj);
    put(bc_row(), y_off(0), bj.ya);
    put(bc_row(), y_off(n_), bj.yb);
    if (nq_ > 0) put(bc_row(), q_off(), bj.q);

    jac.resize(size_, size_);
    jac.setFromTriplets(trip.begin(), trip.end());
  }

  /// Maps an unknown index to its mesh interval.
  Index interval_of(Index col) const {
    if (col >= q_off()) return -1;
    return std::min(col / block_, n_ - 1);
  }

  /// Factorises and solves J dx = rhs; throws SingularityError.
  Vector solve_linear(SparseMatrix& jac, const Vector& rhs) {
    if (!pattern_ready_) {
      lu_.analyzePattern(jac);
      pattern_ready_ = true;
    }
    lu_.factorize(jac);
    if (lu_.info() != Eigen::Success) {
      Index location = -1;
      std::smatch m;
      const std::string msg = lu_.lastErrorMessage();
      static const std::regex trailing_number("([0-9]+)\\s*$");
      if (std::regex_search(msg, m, trailing_number)) location = interval_of(std::stol(m[1]));
      throw SingularityError("bvp: singular Newton matrix (" + msg + ")", location);
    }
    Vector dx = lu_.solve(rhs);
    if (!dx.allFinite()) throw SingularityError("bvp: Newton step is not finite", -1);
    return dx;
  }

  /// Solves with the last factorisation.
  Vector resolve(const Vector& rhs) { return lu_.solve(rhs); }

 private:
  const BvpDaeSystem& sys_;
  Vector t_;
  Index ny_, nz_, nq_, n_, block_, size_;
  Matrix nodes_f_, nodes_g_, mid_y_, mid_f_, mid_g_;
  Eigen::SparseLU<SparseMatrix, Eigen::COLAMDOrdering<int>> lu_;
  bool pattern_ready_ = false;
};

double scaled_max(const Vector& r, const Vector& scale) {
  return r.size() == 0 ? 0.0 : r.cwiseProduct(scale).lpNorm<Eigen::Infinity>();
}

struct NewtonState {
  Vector w;
  Vector r;
  Vector scale;
  double norm = kInf;
  // Attainable residual per row, kFloorFactor * u * (|J| |w|); empty until
  // a Jacobian has been formed.
  Vector floor;
};

// Rows whose residual is within roundoff of zero count as converged: with
// eps-sized slacks the evaluation error can exceed any fixed tolerance.
constexpr double kFloorFactor = 100.0;

bool converged(const NewtonState& st, double tol) {
  if (st.norm <= tol) return true;
  if (st.floor.size() != st.r.size()) return false;
  for (Index i = 0; i < st.r.size(); ++i) {
    if (std::abs(st.r(i)) * st.scale(i) > tol + st.floor(i) * st.scale(i)) return false;
  }
  return true;
}

double scaled_floor(const NewtonState& st) {
  return st.floor.size() == st.scale.size() && st.floor.size() > 0 ? st.floor.cwiseProduct(st.scale).maxCoeff()
                                                                    : 0.0;
}

std::string sci(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3e", v);
  return buf;
}

// Scaled RMS norm used by the monotonicity test; weights 1 + |w_i| make it
// insensitive to unknowns that are tiny in absolute terms.
double weighted_norm(const Vector& v, const Vector& w) {
  if (v.size() == 0) return 0.0;
  return std::sqrt((v.array() / (1.0 + w.array().abs())).square().mean());
}

/// Performs one damped step in place; returns (damping, boundary_limited).
///
/// Damping is error oriented: a trial point is accepted when its simplified
/// Newton correction J(w)^{-1} F(trial) is smaller than the ordinary one by
/// the factor 1 - alpha/4 (restricted natural monotonicity). Residual norms
/// are not used because rows on very short intervals carry roundoff far above
/// the tolerance while the corresponding corrections are negligible.
std::pair<double, bool> damped_step(Collocation& col, NewtonState& st, const SolveOptions& opts,
                                    const BvpDaeSystem& sys) {
  SparseMatrix jac;
  col.jacobian(st.w, jac);
  st.floor = Vector::Zero(st.r.size());
  for (Index k = 0; k < jac.outerSize(); ++k) {
    for (SparseMatrix::InnerIterator it(jac, k); it; ++it) {
      st.floor(it.row()) += std::abs(it.value()) * std::abs(st.w(it.col()));
    }
  }
  st.floor *= kFloorFactor * std::numeric_limits<double>::epsilon();
  const Vector dx = col.solve_linear(jac, -st.r);
  const double norm_dx = weighted_norm(dx, st.w);

  const Vector s0 = sys.guard ? col.slacks(st.w) : Vector();
  const double tau = opts.boundary_fraction;

  double alpha = 1.0;
  bool limited = false;
  Vector r, scale;
  int guard_passes = 0;
  while (true) {
    if (alpha < opts.min_damping) {
      throw LineSearchError("bvp: damping fell below " + sci(opts.min_damping) +
                            " without an admissible decrease");
    }
    const Vector trial = st.w + alpha * dx;
    // Fraction-to-boundary rule at nodes first (midpoint states need f).
    if (sys.guard) {
      const Vector sn = col.node_slacks(trial);
      const Vector sn0 = s0.head(sn.size());
      double shrink = 1.0;
      for (Index i = 0; i < sn.size(); ++i) {
        if (!std::isfinite(sn(i)) || sn(i) < (1.0 - tau) * sn0(i)) {
          // Linear model s(a) ~ s0 + a * ds gives the largest admissible step.
          const double drop = sn0(i) - sn(i);
          const double est = std::isfinite(drop) && drop > 0 ? tau * sn0(i) / drop : 0.5;
          shrink = std::min(shrink, est);
        }
      }
      if (shrink < 1.0) {
        alpha *= std::min(0.999 * shrink, 0.999);
        limited = true;
        if (++guard_passes > 200) throw LineSearchError("bvp: fraction-to-boundary backtracking failed");
        continue;
      }
    }
    const bool finite = col.residual(trial, r, scale);
    if (finite && sys.guard) {
      const Vector s = col.slacks(trial);
      bool ok = true;
      for (Index i = 0; i < s.size() && ok; ++i) ok = std::isfinite(s(i)) && s(i) >= (1.0 - tau) * s0(i);
      if (!ok) {
        alpha *= 0.5;
        limited = true;
        continue;
      }
    }
    if (!finite) {
      alpha *= 0.5;
      limited = limited || bool(sys.guard);
      continue;
    }
    const Vector dx_bar = col.resolve(-r);
    if (!dx_bar.allFinite()) {
      alpha *= 0.5;
      continue;
    }
    const double norm_bar = weighted_norm(dx_bar, st.w);
    if (norm_bar <= (1.0 - 0.25 * alpha) * norm_dx || norm_dx == 0.0) {
      st.w = trial;
      st.r = r;
      st.scale = scale;
      st.norm = scaled_max(r, scale);
      return {alpha, limited};
    }
    // Curvature estimate of the correction along the step gives the
    // predicted damping 1/h; at least halve, at most divide by ten.
    const double curvature = 2.0 * weighted_norm(dx_bar - (1.0 - alpha) * dx, st.w) / (alpha * alpha * norm_dx);
    const double predicted = curvature > 0.0 ? 1.0 / curvature : 0.5 * alpha;
    alpha = std::clamp(predicted, 0.1 * alpha, 0.5 * alpha);
  }
}


Vector uniform_mesh(double horizon, Index nodes) {
  return Vector::LinSpaced(nodes, 0.0, horizon);
}

}  // namespace

// --- BvpDaeSystem / MeshSolution -------------------------------------------

void BvpDaeSystem::check() const {
  if (n_diff <= 0) throw ConfigError("bvp: n_diff must be positive");
  if (n_alg < 0 || n_par < 0) throw ConfigError("bvp: negative dimension");
  if (!(horizon > 0.0)) throw ConfigError("bvp: horizon must be positive");
  if (!eval) throw ConfigError("bvp: eval callback is required");
  if (!bc) throw ConfigError("bvp: boundary callback is required");
}

Index MeshSolution::locate(double s) const {
  const Index n = intervals();
  if (s <= t(0)) return 0;
  if (s >= t(n)) return n - 1;
  const double* begin = t.data();
  const double* it = std::upper_bound(begin, begin + t.size(), s);
  return std::clamp<Index>(static_cast<Index>(it - begin) - 1, 0, n - 1);
}

Vector MeshSolution::y_at(double s) const {
  const Index i = locate(s);
  const double h = t(i + 1) - t(i);
  const double u = (s - t(i)) / h;
  if (yp.cols() != y.cols()) return (1.0 - u) * y.col(i) + u * y.col(i + 1);
  const Hermite w = hermite(u, h);
  return w.h00 * y.col(i) + (w.h10 * h) * yp.col(i) + w.h01 * y.col(i + 1) + (w.h11 * h) * yp.col(i + 1);
}

Vector MeshSolution::yp_at(double s) const {
  const Index i = locate(s);
  const double h = t(i + 1) - t(i);
  const double u = (s - t(i)) / h;
  if (yp.cols() != y.cols()) return (y.col(i + 1) - y.col(i)) / h;
  const Hermite w = hermite(u, h);
  return w.d00 * y.col(i) + w.d10 * yp.col(i) + w.d01 * y.col(i + 1) + w.d11 * yp.col(i + 1);
}

Vector MeshSolution::z_at(double s) const {
  if (z.rows() == 0) return Vector(0);
  const Index i = locate(s);
  const double h = t(i + 1) - t(i);
  const double u = (s - t(i)) / h;
  if (u == 0.0) return z.col(i);
  if (u == 1.0) return z.col(i + 1);
  // Lagrange weights sum to one; written as increments so constants are exact.
  const double lm = -4.0 * u * (u - 1.0);
  const double l1 = 2.0 * u * (u - 0.5);
  return z.col(i) + lm * (z_mid.col(i) - z.col(i)) + l1 * (z.col(i + 1) - z.col(i));
}

MeshSolution MeshSolution::constant(double horizon, Index nodes, const Vector& y, const Vector& z, const Vector& q) {
  if (nodes < 5) throw ConfigError("bvp: a mesh needs at least 5 nodes");
  MeshSolution s;
  s.t = uniform_mesh(horizon, nodes);
  s.y = y.replicate(1, nodes);
  s.yp = Matrix::Zero(y.size(), nodes);
  s.z = z.replicate(1, nodes);
  s.z_mid = z.replicate(1, nodes - 1);
  s.q = q;
  return s;
}

void MeshSolution::check(Index n_diff, Index n_alg, Index n_par) const {
  if (t.size() < 5) throw ConfigError("bvp: mesh must have at least 5 nodes");
  for (Index i = 0; i + 1 < t.size(); ++i) {
    if (!(t(i + 1) > t(i))) throw ConfigError("bvp: mesh must be strictly increasing");
  }
  if (t(0) != 0.0) throw ConfigError("bvp: mesh must start at 0");
  const Index n = t.size();
  if (y.rows() != n_diff || y.cols() != n) throw ConfigError("bvp: y has the wrong shape");
  if (z.rows() != n_alg || z.cols() != n) throw ConfigError("bvp: z has the wrong shape");
  if (z_mid.rows() != n_alg || z_mid.cols() != n - 1) throw ConfigError("bvp: z_mid has the wrong shape");
  if (q.size() != n_par) throw ConfigError("bvp: q has the wrong size");
}

// --- operations ---------------------------------------------------------------

double collocation_residual(const BvpDaeSystem& system, const MeshSolution& iterate) {
  system.check();
  iterate.check(system.n_diff, system.n_alg, system.n_par);
  Collocation col(system, iterate.t);
  Vector r, scale;
  if (!col.residual(col.pack(iterate), r, scale)) return kInf;
  return scaled_max(r, scale);
}

StepResult newton_step(const BvpDaeSystem& system, const MeshSolution& iterate, const SolveOptions& opts) {
  system.check();
  iterate.check(system.n_diff, system.n_alg, system.n_par);
  Collocation col(system, iterate.t);
  NewtonState st;
  st.w = col.pack(iterate);
  if (!col.residual(st.w, st.r, st.scale)) throw ConfigError("bvp: residual is not finite at the iterate");
  if (system.guard && !slack_ok(col.slacks(st.w))) throw ConfigError("bvp: iterate violates the guard");
  st.norm = scaled_max(st.r, st.scale);
  StepResult out;
  out.residual_before = st.norm;
  auto [alpha, limited] = damped_step(col, st, opts, system);
  out.damping = alpha;
  out.boundary_limited = limited;
  out.residual_after = st.norm;
  out.iterate = col.unpack(st.w);
  out.iterate.residual_norm = st.norm;
  return out;
}

Vector residual_estimate(const BvpDaeSystem& system, const MeshSolution& sol) {
  const Index n = sol.intervals();
  const Index ny = system.n_diff;
  Vector res(n);
  Vector f(ny), g(system.n_alg);
  for (Index i = 0; i < n; ++i) {
    const double h = sol.t(i + 1) - sol.t(i);
    const double tm = sol.t(i) + 0.5 * h;
    double acc = 0.0;
    for (double sign : {-1.0, 1.0}) {
      const double s = tm + sign * kLobattoOffset * h;
      const Vector y = sol.y_at(s);
      const Vector yp = sol.yp_at(s);
      std::optional<Vector> z = solve_algebraic(system, s, y, sol.q, sol.z_at(s), 0.99);
      if (!z && system.n_alg > 0) {
        // Restart from the nearest collocation point.
        const double u = (s - sol.t(i)) / h;
        const Vector start = u < 0.25 ? Vector(sol.z.col(i)) : u > 0.75 ? Vector(sol.z.col(i + 1)) : Vector(sol.z_mid.col(i));
        z = solve_algebraic(system, s, y, sol.q, start, 0.99);
      }
      if (!z) {
        acc = kInf;
        break;
      }
      system.eval(s, y, *z, sol.q, f, g);
      if (!f.allFinite()) {
        acc = kInf;
        break;
      }
      double r = 0.0;
      for (Index k = 0; k < ny; ++k) r = std::max(r, std::abs(yp(k) - f(k)) / (1.0 + std::abs(f(k))));
      acc += r * r;
    }
    res(i) = std::isfinite(acc) ? std::sqrt(kLobattoWeight * acc) : kInf;
  }
  return res;
}

MeshSolution interpolate_onto(const MeshSolution& sol, const Vector& mesh) {
  const double T = sol.horizon();
  if (mesh.size() < 2 || mesh(0) < 0.0 || mesh(mesh.size() - 1) > T * (1.0 + 1e-14)) {
    throw ConfigError("bvp: new mesh must lie within [0, T]");
  }
  MeshSolution out;
  out.t = mesh;
  const Index m = mesh.size();
  out.y.resize(sol.y.rows(), m);
  out.yp.resize(sol.y.rows(), m);
  out.z.resize(sol.z.rows(), m);
  out.z_mid.resize(sol.z.rows(), m - 1);
  Index j = 0;  // cursor into the old mesh for exact node matches
  for (Index i = 0; i < m; ++i) {
    const double s = mesh(i);
    while (j + 1 < sol.nodes() && sol.t(j) < s) ++j;
    if (sol.t(j) == s) {
      out.y.col(i) = sol.y.col(j);
      out.yp.col(i) = sol.yp.cols() == sol.y.cols() ? Vector(sol.yp.col(j)) : sol.yp_at(s);
      out.z.col(i) = sol.z.col(j);
    } else {
      out.y.col(i) = sol.y_at(s);
      out.yp.col(i) = sol.yp_at(s);
      out.z.col(i) = sol.z_at(s);
    }
    if (i + 1 < m) out.z_mid.col(i) = sol.z_at(0.5 * (mesh(i) + mesh(i + 1)));
  }
  out.q = sol.q;
  return out;
}

MeshSolution interpolate_onto(const BvpDaeSystem& system, const MeshSolution& sol, const Vector& mesh) {
  MeshSolution out = interpolate_onto(sol, mesh);
  if (system.n_alg == 0 && !system.guard) return out;

  auto is_old_node = [&](double s) {
    const double* begin = sol.t.data();
    return std::binary_search(begin, begin + sol.t.size(), s);
  };
  auto is_old_mid = [&](double s, Index& which) {
    which = sol.locate(s);
    return 0.5 * (sol.t(which) + sol.t(which + 1)) == s;
  };
  auto admissible = [&](double s, const Vector& y, const Vector& z) {
    return !system.guard || slack_ok(system.guard(s, y, z));
  };
  // Makes (y, z) at time s consistent and admissible; y may fall back to
  // linear interpolation if the cubic leaves the admissible set.
  auto repair = [&](double s, Vector& y, Vector& z) {
    if (auto zz = solve_algebraic(system, s, y, sol.q, z, 0.99)) {
      z = *zz;
      return;
    }
    const Index k = sol.locate(s);
    const double u = (s - sol.t(k)) / (sol.t(k + 1) - sol.t(k));
    const Vector near_z = u < 0.25 ? Vector(sol.z.col(k)) : u > 0.75 ? Vector(sol.z.col(k + 1)) : Vector(sol.z_mid.col(k));
    if (auto zz = solve_algebraic(system, s, y, sol.q, near_z, 0.99)) {
      z = *zz;
      return;
    }
    if (admissible(s, y, z)) return;
    const Vector y_lin = (1.0 - u) * sol.y.col(k) + u * sol.y.col(k + 1);
    for (const Vector& start : {z, near_z}) {
      if (auto zz = solve_algebraic(system, s, y_lin, sol.q, start, 0.99)) {
        y = y_lin;
        z = *zz;
        return;
      }
    }
    if (admissible(s, y_lin, near_z)) {
      y = y_lin;
      z = near_z;
    }
  };

  for (Index i = 0; i < out.nodes(); ++i) {
    const double s = out.t(i);
    if (is_old_node(s)) continue;
    Vector y = out.y.col(i);
    Vector z = out.z.col(i);
    repair(s, y, z);
    out.y.col(i) = y;
    out.z.col(i) = z;
  }
  for (Index i = 0; i < out.intervals(); ++i) {
    const double s = 0.5 * (out.t(i) + out.t(i + 1));
    Index k;
    if (is_old_mid(s, k)) {
      out.z_mid.col(i) = sol.z_mid.col(k);
      continue;
    }
    // Midpoint state as the collocation formula will compute it is not known
    // yet; the cubic interpolant is the best available proxy.
    Vector y = out.y_at(s);
    Vector z = out.z_mid.col(i);
    repair(s, y, z);
    out.z_mid.col(i) = z;
  }
  return out;
}

// Largest number of intervals joined by one merge.
constexpr Index kMaxMerge = 8;

MeshSolution refine_mesh(const BvpDaeSystem& system, const MeshSolution& sol, const SolveOptions& opts) {
  const double tol = opts.effective_mesh_tol();
  Vector res = sol.interval_residual.size() == sol.intervals() ? sol.interval_residual
                                                                : residual_estimate(system, sol);
  const Index n = sol.intervals();
  std::vector<double> nodes;
  nodes.reserve(static_cast<std::size_t>(3 * n + 1));
  nodes.push_back(sol.t(0));
  Index i = 0;
  while (i < n) {
    const double a = sol.t(i);
    const double b = sol.t(i + 1);
    const double h = b - a;
    if (res(i) > tol) {
      const int pieces = res(i) > 100.0 * tol ? 3 : 2;
      if (h / pieces >= opts.min_interval) {
        for (int k = 1; k < pieces; ++k) nodes.push_back(a + h * k / pieces);
      }
      nodes.push_back(b);
      ++i;
      continue;
    }
    // Merge a run of intervals when the defect of the merged interval,
    // extrapolated with the O(h^3) law, stays below 10% of the tolerance.
    if (opts.merge) {
      Index j = i;
      while (j + 1 < n && j - i + 1 < kMaxMerge) {
        const double span = sol.t(j + 2) - a;
        double predicted = 0.0;
        for (Index k = i; k <= j + 1; ++k) {
          const double ratio = span / (sol.t(k + 1) - sol.t(k));
          predicted = std::max(predicted, res(k) * ratio * ratio * ratio);
        }
        if (!(predicted <= 0.1 * tol)) break;
        ++j;
      }
      if (j > i) {
        nodes.push_back(sol.t(j + 1));
        i = j + 1;
        continue;
      }
    }
    nodes.push_back(b);
    ++i;
  }
  // Keep at least 5 nodes: undo merging if it went too far.
  if (nodes.size() < 5) {
    nodes.assign(sol.t.data(), sol.t.data() + sol.t.size());
  }
  if (static_cast<Index>(nodes.size()) > opts.max_nodes) {
    throw BudgetError("bvp: refinement needs " + std::to_string(nodes.size()) + " nodes, budget is " +
                          std::to_string(opts.max_nodes),
                      res.maxCoeff(), sol);
  }
  Vector mesh = Eigen::Map<const Vector>(nodes.data(), static_cast<Index>(nodes.size()));
  mesh(mesh.size() - 1) = sol.horizon();
  return interpolate_onto(system, sol, mesh);
}

MeshSolution solve(const BvpDaeSystem& system, const MeshSolution& guess, const SolveOptions& opts) {
  system.check();
  guess.check(system.n_diff, system.n_alg, system.n_par);
  if (std::abs(guess.horizon() - system.horizon) > 1e-12 * system.horizon) {
    throw ConfigError("bvp: guess mesh does not cover [0, T]");
  }
  if (guess.nodes() > opts.max_nodes) {
    throw BudgetError("bvp: initial mesh exceeds the node budget", kInf, guess);
  }
  const double mesh_tol = opts.effective_mesh_tol();
  MeshSolution sol = guess;
  int total_iterations = 0;
  MeshSolution best = guess;

  for (int pass = 0; pass < opts.max_mesh_passes; ++pass) {
    Collocation col(system, sol.t);
    NewtonState st;
    st.w = col.pack(sol);
    if (!col.residual(st.w, st.r, st.scale)) {
      throw ConfigError("bvp: residual is not finite at the initial iterate (pass " + std::to_string(pass) + ")");
    }
    if (system.guard && !slack_ok(col.slacks(st.w))) {
      throw ConfigError("bvp: iterate violates the guard (pass " + std::to_string(pass) + ")");
    }
    st.norm = scaled_max(st.r, st.scale);
    int it = 0;
    while (!converged(st, opts.tol)) {
      if (it >= opts.max_newton) {
        MeshSolution b = col.unpack(st.w);
        b.residual_norm = st.norm;
        b.newton_iterations = total_iterations;
        throw NonconvergenceError("bvp: Newton did not converge in " + std::to_string(opts.max_newton) +
                                      " iterations (residual " + sci(st.norm) + ")",
                                  b);
      }
      std::pair<double, bool> step;
      try {
        step = damped_step(col, st, opts, system);
      } catch (const LineSearchError& e) {
        MeshSolution b = col.unpack(st.w);
        b.residual_norm = st.norm;
        b.newton_iterations = total_iterations;
        throw NonconvergenceError(std::string(e.what()) + " (residual " + sci(st.norm) + ", roundoff floor " +
                                      sci(scaled_floor(st)) + ")",
                                  b);
      }
      ++it;
      ++total_iterations;
      if (opts.trace) {
        *opts.trace << "newton pass=" << pass << " nodes=" << col.mesh().size() << " iter=" << it
                    << " residual=" << st.norm << " damping=" << step.first
                    << " boundary_limited=" << (step.second ? 1 : 0) << '\n';
      }
    }
    sol = col.unpack(st.w);
    sol.residual_norm = st.norm;
    sol.residual_floor = scaled_floor(st);
    sol.newton_iterations = total_iterations;
    sol.mesh_passes = pass + 1;
    sol.interval_residual = residual_estimate(system, sol);
    best = sol;
    const double worst = sol.interval_residual.size() ? sol.interval_residual.maxCoeff() : 0.0;
    if (opts.trace) {
      *opts.trace << "mesh pass=" << pass << " nodes=" << sol.nodes() << " max_interval_residual=" << worst
                  << '\n';
    }
    if (!opts.refine || worst <= mesh_tol) return sol;

    // Merging only on the first refinement avoids split/merge cycles.
    SolveOptions pass_opts = opts;
    pass_opts.merge = opts.merge && pass == 0;
    MeshSolution next = refine_mesh(system, sol, pass_opts);
    if (next.nodes() == sol.nodes() && (next.t - sol.t).cwiseAbs().maxCoeff() == 0.0) {
      throw BudgetError("bvp: mesh cannot be refined further (residual " + sci(worst) + ")", worst,
                        sol);
    }
    sol = std::move(next);
  }
  throw BudgetError("bvp: mesh refinement did not meet the tolerance in " + std::to_string(opts.max_mesh_passes) +
                        " passes",
                    best.interval_residual.size() ? best.interval_residual.maxCoeff() : kInf, best);
}

}  // namespace ipmocp::bvp
