#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "ipmocp/ocp_problem.hpp"
#include "ipmocp/problems.hpp"

using namespace ipmocp;

namespace {

Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<Index>(v.size()));
  Index i = 0;
  for (double x : v) out(i++) = x;
  return out;
}

// Nonlinear control-affine test problem without analytic derivatives:
// x' = (x2, -sin x1) + (0, cos x1) u, one state and one mixed constraint.
OcpProblem pendulum() {
  OcpProblem pb;
  pb.name = "pendulum";
  pb.nx = 2;
  pb.nu = 1;
  pb.ng = 1;
  pb.nc = 1;
  pb.horizon = 1.0;
  pb.f1 = [](const Vector& x) { return vec({x(1), -std::sin(x(0))}); };
  pb.f2 = [](const Vector& x) {
    Matrix m(2, 1);
    m << 0.0, std::cos(x(0));
    return m;
  };
  pb.l1 = [](const Vector& x) { return x.squaredNorm(); };
  pb.l2 = [](const Vector& x) { return vec({x(0)}); };
  pb.g = [](const Vector& x) { return vec({x(0) * x(0) - 4.0}); };
  pb.a = [](const Vector& x) {
    Matrix m(1, 1);
    m << 1.0 + x(1) * x(1);
    return m;
  };
  pb.b = [](const Vector&) { return vec({-1.0}); };
  pb.bc = BoundaryConditions::fixed_initial(vec({0.1, 0.0}));
  return pb;
}

}  // namespace

TEST(OcpProblem, RobbinsDynamicsAtInitialState) {
  const OcpProblem pb = robbins_problem();
  const Vector f = eval_dynamics(pb, vec({1, 0, 0}), vec({-1}));
  EXPECT_EQ(f, vec({0, 0, -1}));
}

TEST(OcpProblem, ZeroControlGivesDriftExactly) {
  const OcpProblem pb = pendulum();
  const Vector x = vec({0.3, -0.7});
  EXPECT_EQ(eval_dynamics(pb, x, vec({0})), pb.f1(x));
}

TEST(OcpProblem, DynamicsMatchHandEvaluation) {
  const OcpProblem pb = robbins_problem();
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> d(-5, 5);
  for (int k = 0; k < 50; ++k) {
    const Vector x = vec({d(rng), d(rng), d(rng)});
    const double u = d(rng);
    EXPECT_EQ(eval_dynamics(pb, x, vec({u})), vec({x(1), x(2), u}));
  }
}

TEST(OcpProblem, RobbinsMixedConstraints) {
  const OcpProblem pb = robbins_problem();
  const Vector x = vec({1, 0, 0});
  EXPECT_EQ(eval_mixed(pb, x, vec({0})), vec({-1, -1}));
  EXPECT_EQ(eval_mixed(pb, x, vec({1}))(0), 0.0);
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> d(-3, 3);
  for (int k = 0; k < 50; ++k) {
    const double u = d(rng);
    EXPECT_EQ(eval_mixed(pb, x, vec({u})), vec({u - 1.0, -u - 1.0}));
  }
}

TEST(OcpProblem, RobbinsStateConstraintAtStart) {
  EXPECT_EQ(eval_state_constraints(robbins_problem(), vec({1, 0, 0})), vec({-1}));
}

TEST(OcpProblem, AffineInControl) {
  const OcpProblem pb = pendulum();
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> d(-2, 2);
  for (int k = 0; k < 100; ++k) {
    const Vector x = vec({d(rng), d(rng)});
    const Vector u1 = vec({d(rng)}), u2 = vec({d(rng)});
    const double a = 0.5 * (d(rng) + 2.0) / 2.0;
    const Vector mix = a * u1 + (1 - a) * u2;
    const Vector lhs = eval_dynamics(pb, x, mix);
    const Vector rhs = a * eval_dynamics(pb, x, u1) + (1 - a) * eval_dynamics(pb, x, u2);
    EXPECT_LE((lhs - rhs).lpNorm<Eigen::Infinity>(), 1e-14 * (1 + rhs.lpNorm<Eigen::Infinity>()));
    const Vector c = eval_mixed(pb, x, mix);
    const Vector cr = a * eval_mixed(pb, x, u1) + (1 - a) * eval_mixed(pb, x, u2);
    EXPECT_LE((c - cr).lpNorm<Eigen::Infinity>(), 1e-14 * (1 + cr.lpNorm<Eigen::Infinity>()));
  }
}

TEST(OcpProblem, DimensionMismatchIsConfigError) {
  const OcpProblem pb = robbins_problem();
  EXPECT_THROW(eval_dynamics(pb, vec({1, 0}), vec({0})), ConfigError);
  EXPECT_THROW(eval_mixed(pb, vec({1, 0, 0}), vec({0, 0})), ConfigError);
}

TEST(OcpProblem, NonFiniteOutputNamesCallback) {
  OcpProblem pb = pendulum();
  pb.f1 = [](const Vector&) { return vec({std::nan(""), 0.0}); };
  try {
    eval_dynamics(pb, vec({0, 0}), vec({0}));
    FAIL() << "expected EvaluationError";
  } catch (const EvaluationError& e) {
    EXPECT_EQ(e.callback(), "f1");
  }
}

TEST(OcpProblem, WrongCallbackShapeIsConfigError) {
  OcpProblem pb = pendulum();
  pb.b = [](const Vector&) { return vec({-1.0, -1.0}); };
  EXPECT_THROW(eval_mixed(pb, vec({0, 0}), vec({0})), ConfigError);
}

TEST(OcpProblem, CheckRejectsMissingCallbacks) {
  OcpProblem pb = pendulum();
  EXPECT_NO_THROW(pb.check());
  pb.f1 = nullptr;
  EXPECT_THROW(pb.check(), ConfigError);
  pb = pendulum();
  pb.horizon = 0.0;
  EXPECT_THROW(pb.check(), ConfigError);
}

TEST(OcpProblem, FiniteDifferenceFallbackMatchesHandDerivative) {
  const OcpProblem pb = pendulum();
  const Vector x = vec({0.4, -1.3});
  const Vector u = vec({0.7});
  Matrix expected(2, 2);
  expected << 0, 1, -std::cos(x(0)) - std::sin(x(0)) * u(0), 0;
  EXPECT_LE((dynamics_jacobian_x(pb, x, u) - expected).lpNorm<Eigen::Infinity>(), 1e-7);
  Matrix gx(1, 2);
  gx << 2 * x(0), 0;
  EXPECT_LE((state_constraint_jacobian(pb, x) - gx).lpNorm<Eigen::Infinity>(), 1e-7);
  Matrix cx(1, 2);
  cx << 0, 2 * x(1) * u(0);
  EXPECT_LE((mixed_jacobian_x(pb, x, u) - cx).lpNorm<Eigen::Infinity>(), 1e-7);
}

TEST(OcpProblem, FiniteDifferenceStep) {
  const double r = std::sqrt(std::numeric_limits<double>::epsilon());
  EXPECT_DOUBLE_EQ(detail::fd_step(0.5), r);
  EXPECT_DOUBLE_EQ(detail::fd_step(-100.0), 100.0 * r);
}

TEST(OcpProblem, RobbinsDerivativesValidate) {
  const OcpProblem pb = robbins_problem();
  const ValidationReport report = validate_derivatives(pb, sample_points(pb, 25));
  EXPECT_TRUE(report.all_clear());
  ASSERT_NE(report.find("f1_x"), nullptr);
  EXPECT_TRUE(report.find("f1_x")->analytic);
  ASSERT_NE(report.find("lagrangian_hessian"), nullptr);
}

TEST(OcpProblem, CorruptedJacobianEntryIsFlagged) {
  OcpProblem pb = robbins_problem();
  const auto good = pb.f1_x;
  pb.f1_x = [good](const Vector& x) {
    Matrix j = good(x);
    j(0, 1) += 0.1;
    return j;
  };
  const ValidationReport report = validate_derivatives(pb, sample_points(pb, 10));
  EXPECT_FALSE(report.all_clear());
  const DerivativeCheck* c = report.find("f1_x");
  ASSERT_NE(c, nullptr);
  EXPECT_TRUE(c->flagged);
  ASSERT_EQ(c->flagged_entries.size(), 1u);
  EXPECT_EQ(c->flagged_entries[0], std::make_pair(Index{0}, Index{1}));
  EXPECT_NEAR(c->max_rel_error, 0.1, 1e-6);
  EXPECT_FALSE(report.find("g_x")->flagged);
}

TEST(OcpProblem, AbsentDerivativesAreReportedNotChecked) {
  const OcpProblem pb = pendulum();
  const ValidationReport report = validate_derivatives(pb, sample_points(pb, 3));
  EXPECT_TRUE(report.all_clear());
  ASSERT_NE(report.find("f1_x"), nullptr);
  EXPECT_FALSE(report.find("f1_x")->analytic);
}

TEST(OcpProblem, ValidationNeedsSamples) {
  EXPECT_THROW(validate_derivatives(robbins_problem(), {}), ConfigError);
}

TEST(OcpProblem, SamplesStayInBoxAndAreSeeded) {
  const OcpProblem pb = robbins_problem();
  const auto a = sample_points(pb, 20, 5);
  const auto b = sample_points(pb, 20, 5);
  for (std::size_t k = 0; k < a.size(); ++k) {
    EXPECT_EQ(a[k].x, b[k].x);
    EXPECT_LE(a[k].x.cwiseAbs().maxCoeff(), 10.0);
    EXPECT_LE(std::abs(a[k].u(0)), 1.0);
  }
}

TEST(OcpProblem, RobbinsShape) {
  const OcpProblem pb = robbins_problem();
  EXPECT_EQ(pb.nx, 3);
  EXPECT_EQ(pb.nu, 1);
  EXPECT_EQ(pb.ng, 1);
  EXPECT_EQ(pb.nc, 2);
  EXPECT_EQ(pb.horizon, 6.0);
  EXPECT_TRUE(pb.bc.is_fixed_initial());
  EXPECT_EQ(pb.bc.x0, vec({1, 0, 0}));
  EXPECT_EQ(eval_terminal_cost(pb, vec({3, 2, 1})), 0.0);
  EXPECT_EQ(eval_running_cost(pb, vec({0.25, 2, 1}), vec({0.9})), 0.25);
}

TEST(OcpProblem, RobbinsFullBrakingReachesZeroAtCubeRootOfSix) {
  // With u = -1 from the start, x1(t) = 1 - t^3/6; integrate the chain
  // numerically through eval_dynamics and compare.
  const OcpProblem pb = robbins_problem();
  const double t_zero = std::cbrt(6.0);
  Vector x = vec({1, 0, 0});
  const int steps = 2000;
  const double h = t_zero / steps;
  for (int k = 0; k < steps; ++k) {
    const Vector k1 = eval_dynamics(pb, x, vec({-1}));
    const Vector k2 = eval_dynamics(pb, x + 0.5 * h * k1, vec({-1}));
    const Vector k3 = eval_dynamics(pb, x + 0.5 * h * k2, vec({-1}));
    const Vector k4 = eval_dynamics(pb, x + h * k3, vec({-1}));
    x += h / 6 * (k1 + 2 * k2 + 2 * k3 + k4);
  }
  EXPECT_NEAR(x(0), 0.0, 1e-12);
  EXPECT_NEAR(t_zero, 1.8171, 1e-4);
}

TEST(OcpProblem, ProblemRegistry) {
  EXPECT_EQ(problem_by_name("robbins").name, robbins_problem().name);
  EXPECT_NO_THROW(problem_by_name("lq"));
  EXPECT_THROW(problem_by_name("goddard"), ConfigError);
  EXPECT_GE(problem_names().size(), 2u);
}
