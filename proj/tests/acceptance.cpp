// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any
// criterion fails.

#include <Eigen/Cholesky>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "bvp_fixtures.hpp"
#include "ipmocp/barrier.hpp"
#include "ipmocp/continuation.hpp"
#include "ipmocp/problems.hpp"
#include "lq_oracle.hpp"

using namespace ipmocp;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Verdict {
  int id;
  std::string name;
  bool pass;
  std::string detail;
};

std::vector<Verdict> verdicts;

void report(int id, const std::string& name, bool pass, const std::string& detail) {
  verdicts.push_back({id, name, pass, detail});
  std::printf("criterion %d [%s] %s: %s\n", id, pass ? "PASS" : "FAIL", name.c_str(), detail.c_str());
  std::fflush(stdout);
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

// Direct transcription of Robbins: u piecewise constant on N uniform steps.
// The triple integrator is integrated exactly, so x1 at the grid points and
// the cost are affine in u and the barrier problem
//   min J(u) - mu h sum_k [log x1(t_k) + log(1 - u_k^2)]
// is convex; it is solved by damped Newton with mu driven to zero.
struct DirectTranscription {
  int n;
  double h;
  Matrix B;  // x1(t_k), k = 1..n, equals 1 + B u
  Vector d;  // J = T + d'u

  explicit DirectTranscription(int steps, double horizon = 6.0) : n(steps), h(horizon / steps), B(Matrix::Zero(steps, steps)), d(steps) {
    for (int j = 0; j < n; ++j) {
      const double rest = horizon - (j + 1) * h;
      d(j) = std::pow(h, 4) / 24 + std::pow(h, 3) * rest / 6 + h * h * rest * rest / 4 + h * std::pow(rest, 3) / 6;
      for (int k = j; k < n; ++k) {
        const double s = (k - j) * h;
        B(k, j) = std::pow(h, 3) / 6 + h * h * s / 2 + h * s * s / 2;
      }
    }
  }

  double cost(const Vector& u) const { return 6.0 + d.dot(u); }

  bool interior(const Vector& u) const {
    return (Vector::Ones(n) + B * u).minCoeff() > 0.0 && u.cwiseAbs().maxCoeff() < 1.0;
  }

  double merit(const Vector& u, double mu) const {
    const Vector x1 = Vector::Ones(n) + B * u;
    double barrier = 0.0;
    for (int k = 0; k < n; ++k) barrier -= std::log(x1(k)) + std::log(1.0 - u(k) * u(k));
    return cost(u) + mu * h * barrier;
  }

  // Returns the cost at the final barrier weight.
  double solve(double mu_final = 1e-9) const {
    Vector u = Vector::Zero(n);
    for (double mu = 1.0; mu >= mu_final * 0.999; mu *= 0.1) {
      for (int it = 0; it < 200; ++it) {
        const Vector x1 = Vector::Ones(n) + B * u;
        const Vector inv = x1.cwiseInverse();
        const Vector one_m = (Vector::Ones(n) - u.cwiseProduct(u));
        Vector grad = d - mu * h * (B.transpose() * inv);
        grad += mu * h * (2.0 * u.cwiseQuotient(one_m));
        const Matrix scaled = inv.asDiagonal() * B;
        Matrix H = Matrix::Zero(n, n);
        H.selfadjointView<Eigen::Lower>().rankUpdate(scaled.transpose(), mu * h);
        for (int k = 0; k < n; ++k) H(k, k) += mu * h * 2.0 * (1.0 + u(k) * u(k)) / (one_m(k) * one_m(k));
        const Vector step = -H.selfadjointView<Eigen::Lower>().llt().solve(grad);
        const double decrement = -grad.dot(step);
        if (decrement <= 1e-10 * mu * h) break;
        double t = 1.0;
        const double f0 = merit(u, mu);
        while (t > 1e-14) {
          const Vector trial = u + t * step;
          if (interior(trial) && merit(trial, mu) <= f0 - 0.25 * t * decrement) break;
          t *= 0.5;
        }
        u += t * step;
      }
    }
    return cost(u);
  }
};

// Criterion 1
void bvp_oracles() {
  using namespace ipmocp::testing;
  const auto t0 = Clock::now();
  bvp::SolveOptions opts;
  opts.tol = 1e-8;

  const bvp::BvpDaeSystem harmonic = harmonic_system();
  const bvp::MeshSolution hs =
      bvp::solve(harmonic, bvp::MeshSolution::constant(harmonic.horizon, 11, Vector::Zero(2), Vector(0), Vector(0)), opts);
  const double e_harm = max_error(hs, [](double t) { return std::sin(t); });

  const bvp::BvpDaeSystem dae = exp_dae_system();
  const bvp::MeshSolution ds =
      bvp::solve(dae, bvp::MeshSolution::constant(1.0, 6, Vector::Ones(1), Vector::Ones(1), Vector(0)), opts);
  const double e_dae = std::abs(ds.y(0, ds.nodes() - 1) - std::exp(1.0));

  const bvp::BvpDaeSystem growth = growth_rate_system();
  const bvp::MeshSolution gs =
      bvp::solve(growth, bvp::MeshSolution::constant(1.0, 6, Vector::Ones(1), Vector(0), Vector::Ones(1)), opts);
  const double e_q = std::abs(gs.q(0) - 2.0);

  bvp::SolveOptions fixed;
  fixed.tol = 1e-13;
  fixed.refine = false;
  std::vector<double> h, err;
  for (Index n : {8, 16, 32, 64}) {
    const bvp::MeshSolution s =
        bvp::solve(harmonic, bvp::MeshSolution::constant(harmonic.horizon, n + 1, Vector::Zero(2), Vector(0), Vector(0)), fixed);
    h.push_back(harmonic.horizon / n);
    err.push_back(max_error(s, [](double t) { return std::sin(t); }));
  }
  const double order = loglog_slope(h, err);
  const double elapsed = seconds_since(t0);
  const bool pass = e_harm <= 1e-6 && e_dae <= 1e-6 && e_q <= 1e-6 && order >= 3.7 && elapsed < 5.0;
  report(1, "BVP-DAE oracle suite", pass,
         fmt("y''=-y err %.2e, DAE endpoint err %.2e, |q-2| %.2e, order %.3f, time %.3f s", e_harm, e_dae, e_q, order,
             elapsed));
}

// Criterion 2
void lq_cross_check() {
  const ipmocp::testing::LqOracle oracle(ipmocp::testing::lq_example_data());
  ContinuationConfig cfg;
  double ex = 0.0, ep = 0.0;
  for (bool general : {false, true}) {
    const OcpProblem pb = lq_example(general);
    const bvp::MeshSolution sol =
        solve_stage(pb, Formulation::Primal, 0.1, default_guess(pb, Formulation::Primal, cfg.mesh_points), cfg);
    const ipmocp::testing::LqErrors e = oracle.compare(sol);
    ex = std::max(ex, e.x);
    ep = std::max(ep, e.p);
  }
  report(2, "unconstrained LQ vs Riccati", ex <= 1e-6 && ep <= 1e-6,
         fmt("||x err||_inf %.2e, ||p err||_inf %.2e (fixed-initial and general boundary)", ex, ep));
}

// Criterion 9
void algebraic_suite() {
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> expo(-12, 6), unit(0, 1);
  const double u_round = std::numeric_limits<double>::epsilon();

  double psi_defect = 0.0;
  for (int k = 0; k < 1000; ++k) {
    const double w = -std::pow(10.0, expo(rng));
    psi_defect = std::max(psi_defect, std::abs(log_barrier_deriv(w) * w + 1.0));
  }

  double root_defect = 0.0, identity_defect = 0.0;
  bool sign_ok = true;
  for (int k = 0; k < 1000; ++k) {
    const double g = -std::pow(10.0, expo(rng) / 2);
    const double eps = std::pow(10.0, -10 * unit(rng));
    const double theta = -eps / g;
    // theta g = -eps  =>  residual zero.
    root_defect = std::max(root_defect, std::abs(smoothing_residual(theta, g, eps)) / (1.0 + theta + std::abs(g)));
    // residual zero  =>  theta g = -eps: bisection on the residual, which is
    // increasing in theta.
    double lo = 0.0, hi = 1.0;
    while (smoothing_residual(hi, g, eps) < 0.0) hi *= 2.0;
    for (int it = 0; it < 2000 && hi - lo > 0.0; ++it) {
      const double mid = 0.5 * (lo + hi);
      if (mid == lo || mid == hi) break;
      (smoothing_residual(mid, g, eps) < 0.0 ? lo : hi) = mid;
    }
    identity_defect = std::max(identity_defect, std::abs(0.5 * (lo + hi) * g + eps) / eps);
    // Off the root the residual is nonzero with the sign of theta - theta*.
    sign_ok = sign_ok && smoothing_residual(theta * (1 + 1e-6), g, eps) > 0.0 &&
              smoothing_residual(theta * (1 - 1e-6), g, eps) < 0.0;
  }

  const OcpProblem pb = robbins_problem();
  std::uniform_real_distribution<double> box(-2, 2);
  double grad_rel = 0.0;
  for (int k = 0; k < 200; ++k) {
    Vector x(3), u(1), p(3);
    x << 0.05 + 2 * unit(rng), box(rng), box(rng);
    u << 0.98 * (2 * unit(rng) - 1);
    p << box(rng), box(rng), box(rng);
    const double eps = std::pow(10.0, -4 * unit(rng));
    const BarrierContext ctx(pb, eps, x, u, p);
    Vector an(4);
    an << penalized_hamiltonian_grad_x(ctx), penalized_hamiltonian_grad_u(ctx);
    Vector z(4);
    z << x, u;
    for (int j = 0; j < 4; ++j) {
      const double h = 1e-6 * std::max(1.0, std::abs(z(j)));
      Vector zp = z, zm = z;
      zp(j) += h;
      zm(j) -= h;
      const double fp = penalized_hamiltonian(BarrierContext(pb, eps, zp.head(3), zp.tail(1), p));
      const double fm = penalized_hamiltonian(BarrierContext(pb, eps, zm.head(3), zm.tail(1), p));
      const double fd = (fp - fm) / (2 * h);
      grad_rel = std::max(grad_rel, std::abs(fd - an(j)) / std::max(1.0, std::abs(an(j))));
    }
  }
  const bool pass = psi_defect <= 2 * u_round && root_defect <= 1e-12 && identity_defect <= 1e-12 && sign_ok &&
                    grad_rel <= 1e-5;
  report(9, "algebraic property suite", pass,
         fmt("max|psi'(w)w+1| %.1e, smoothing residual at theta=-eps/g %.1e, |theta g+eps|/eps at roots %.1e, "
             "off-root signs %s, Hamiltonian gradient vs FD %.1e",
             psi_defect, root_defect, identity_defect, sign_ok ? "ok" : "wrong", grad_rel));
}

struct RunFacts {
  ContinuationRun run;
  Trajectory final_traj;
};

RunFacts benchmark_run(Formulation form, double alpha, double tol) {
  ContinuationConfig cfg;
  cfg.eps0 = 0.1;
  cfg.alpha = alpha;
  cfg.tol = tol;
  RunFacts f;
  const OcpProblem pb = robbins_problem();
  f.run = run_continuation(pb, form, cfg);
  if (f.run.stage > 0) f.final_traj = extract_trajectory(pb, form, f.run.eps, f.run.solution);
  return f;
}

double min_x1(const Trajectory& tr) { return std::min(tr.x.row(0).minCoeff(), tr.x_mid.row(0).minCoeff()); }

// Smallest (1 - |u|) * kc_hat / eps over the nodes: >= 1 means the margin holds.
double final_margin(const RunFacts& f) {
  const double slack = (Vector::Ones(f.final_traj.u.cols()) - f.final_traj.u.row(0).cwiseAbs().transpose()).minCoeff();
  return slack * f.run.kc_hat / f.run.eps;
}

int sign_changes(const Trajectory& tr) {
  int changes = 0;
  double last = 0.0;
  for (Index j = 0; j < tr.u.cols(); ++j) {
    const double v = tr.u(0, j);
    if (v == 0.0) continue;
    if (last != 0.0 && (v > 0) != (last > 0)) ++changes;
    last = v;
  }
  return changes;
}

// Ratio of the first to the last value over the last `count` stages.
double trail_drop(const std::vector<StageDiagnostics>& stages, double StageDiagnostics::*field, std::size_t count) {
  if (stages.size() < count) return 0.0;
  const double first = stages[stages.size() - count].*field;
  const double last = stages.back().*field;
  return first / last;
}

void robbins_criteria() {
  const OcpProblem pb = robbins_problem();

  const RunFacts primal = benchmark_run(Formulation::Primal, 0.8, 1e-8);
  {
    const bool conv = primal.run.converged() && primal.run.stage == 73;
    const double mx = primal.run.stage > 0 ? min_x1(primal.final_traj) : -1.0;
    const double margin = primal.run.stage > 0 ? final_margin(primal) : 0.0;
    const bool pass = conv && mx > 0.0 && margin >= 1.0 && primal.run.wall_time <= 60.0;
    report(3, "Robbins primal run", pass,
           fmt("status %s, stages %d/73, min x1 %.3e, margin (1-|u|) Kc/eps at final nodes %.4f (Kc-hat %.6f, "
               "worst over stages %.4f), wall time %.2f s",
               to_string(primal.run.status).c_str(), primal.run.stage, mx, margin, primal.run.kc_hat,
               primal.run.worst_margin_ratio(), primal.run.wall_time));
  }

  const RunFacts dual = benchmark_run(Formulation::PrimalDual, 0.5, 1e-9);
  {
    const bool pass = dual.run.converged() && dual.run.stage == 27 && dual.run.wall_time <= primal.run.wall_time;
    report(4, "Robbins primal-dual run", pass,
           fmt("status %s, stages %d/27, wall time %.2f s vs primal %.2f s", to_string(dual.run.status).c_str(),
               dual.run.stage, dual.run.wall_time, primal.run.wall_time));
  }

  // Criterion 5: both methods re-solved at exactly eps = 1e-8 from their final solutions.
  {
    bool ok = primal.run.converged() && dual.run.converged();
    double dx = std::numeric_limits<double>::infinity(), jp = 0.0, jd = 0.0, j_dt = 0.0;
    std::string error;
    if (ok) {
      try {
        ContinuationConfig cfg;
        const double eps = 1e-8;
        const bvp::MeshSolution sp = solve_stage(pb, Formulation::Primal, eps, primal.run.solution, cfg);
        const bvp::MeshSolution sd = solve_stage(pb, Formulation::PrimalDual, eps, dual.run.solution, cfg);
        dx = state_distance(sp, sd, pb.nx);
        jp = trajectory_cost(pb, extract_trajectory(pb, Formulation::Primal, eps, sp));
        jd = trajectory_cost(pb, extract_trajectory(pb, Formulation::PrimalDual, eps, sd));
      } catch (const Error& e) {
        ok = false;
        error = e.what();
      }
    }
    const auto t0 = Clock::now();
    j_dt = DirectTranscription(600).solve();
    const double t_dt = seconds_since(t0);
    const double dj = std::abs(jp - jd);
    const double rel_dt = std::abs(j_dt - jp) / std::abs(jp);
    const bool pass = ok && dx <= 1e-4 && dj <= 1e-5 * (1 + std::abs(jp)) && rel_dt <= 1e-2;
    report(5, "cross-method equivalence at eps = 1e-8", pass,
           fmt("||x_P - x_PD||_inf %.2e, J_P %.8f, J_PD %.8f, |dJ| %.2e, direct transcription (600 steps) J %.6f, "
               "rel diff %.2e (%.2f s)%s",
               dx, jp, jd, dj, j_dt, rel_dt, t_dt, error.empty() ? "" : (", error: " + error).c_str()));
  }

  // Criterion 6 on the primal-dual schedule; the primal trail is printed too.
  {
    const auto& st = dual.run.stages;
    const double drop_x = trail_drop(st, &StageDiagnostics::state_change, 10);
    const double drop_j = trail_drop(st, &StageDiagnostics::cost_change, 10);
    double comp = 0.0, comp_c = 0.0, point = 0.0;
    for (const RunFacts* f : {&primal, &dual}) {
      for (const auto& s : f->run.stages) {
        comp = std::max(comp, s.stationarity.complementarity_g);
        comp_c = std::max(comp_c, s.stationarity.complementarity_c);
        if (f == &dual) point = std::max(point, s.pointwise_comp_g);
      }
    }
    const double p_drop_x = trail_drop(primal.run.stages, &StageDiagnostics::state_change, 10);
    const double p_drop_j = trail_drop(primal.run.stages, &StageDiagnostics::cost_change, 10);
    const bool pass = dual.run.converged() && drop_x >= 10 && drop_j >= 10 && comp <= 1e-12;
    report(6, "convergence trail", pass,
           fmt("primal-dual last-10 drop: state %.1fx, cost %.1fx (primal schedule: %.2fx, %.2fx); "
               "max |int g theta dt + eps T| %.1e (mixed %.1e); solved-theta pointwise |theta g + eps| %.1e",
               drop_x, drop_j, p_drop_x, p_drop_j, comp, comp_c, point));
  }

  // Criterion 7
  {
    const BoundednessReport bp = boundedness_trail(primal.run.stages);
    const BoundednessReport bd = boundedness_trail(dual.run.stages);
    const bool pass = primal.run.converged() && bp.all_bounded() && bd.all_bounded();
    report(7, "boundedness audits", pass,
           fmt("primal: L1 state %.3f -> %.3f, L1 mixed %.3f -> %.3f, |p|_inf %.3f -> %.3f; primal-dual bounded %s",
               bp.l1_g.first_quarter_max, bp.l1_g.last_quarter_max, bp.l1_c.first_quarter_max,
               bp.l1_c.last_quarter_max, bp.p_inf.first_quarter_max, bp.p_inf.last_quarter_max,
               bd.all_bounded() ? "yes" : "no"));
  }

  // Criterion 8
  {
    bool pass = true;
    std::string detail;
    for (const RunFacts* f : {&primal, &dual}) {
      if (f->run.stage == 0) {
        pass = false;
        continue;
      }
      const double umax = f->final_traj.u.maxCoeff(), umin = f->final_traj.u.minCoeff();
      const int changes = sign_changes(f->final_traj);
      pass = pass && umax >= 1 - 1e-2 && umin <= -1 + 1e-2 && changes >= 3;
      detail += fmt("%s%s: max u %.6f, min u %.6f, sign changes %d", detail.empty() ? "" : "; ",
                    to_string(f->run.formulation).c_str(), umax, umin, changes);
    }
    report(8, "Fuller-like control structure", pass, detail);
  }
}

}  // namespace

int main() {
  const auto t0 = Clock::now();
  bvp_oracles();
  lq_cross_check();
  algebraic_suite();
  robbins_criteria();
  int failed = 0;
  for (const auto& v : verdicts) failed += v.pass ? 0 : 1;
  std::printf("acceptance: %zu criteria, %d passed, %d failed (%.1f s)\n", verdicts.size(),
              static_cast<int>(verdicts.size()) - failed, failed, seconds_since(t0));
  return failed == 0 ? 0 : 1;
}
