#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>

#include "ipmocp/barrier.hpp"
#include "ipmocp/problems.hpp"

using namespace ipmocp;

namespace {

Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<Index>(v.size()));
  Index i = 0;
  for (double x : v) out(i++) = x;
  return out;
}

// Random point strictly inside the Robbins feasible set.
struct InteriorSampler {
  std::mt19937_64 rng{11};
  std::uniform_real_distribution<double> pos{0.05, 3.0};
  std::uniform_real_distribution<double> any{-2.0, 2.0};
  std::uniform_real_distribution<double> ctrl{-0.95, 0.95};

  void draw(Vector& x, Vector& u, Vector& p) {
    x = vec({pos(rng), any(rng), any(rng)});
    u = vec({ctrl(rng)});
    p = vec({any(rng), any(rng), any(rng)});
  }
};

// Hand-written H^psi for Robbins: x1 + p.(x2, x3, u) - eps (log x1 + log(1-u) + log(1+u)).
double robbins_penalized(double eps, const Vector& x, double u, const Vector& p) {
  return x(0) + p(0) * x(1) + p(1) * x(2) + p(2) * u -
         eps * (std::log(x(0)) + std::log(1 - u) + std::log(1 + u));
}

}  // namespace

TEST(LogBarrier, Values) {
  EXPECT_EQ(log_barrier(-1.0), 0.0);
  EXPECT_DOUBLE_EQ(log_barrier(-std::exp(-1.0)), 1.0);
  EXPECT_EQ(log_barrier(0.0), std::numeric_limits<double>::infinity());
  EXPECT_EQ(log_barrier(2.0), std::numeric_limits<double>::infinity());
}

TEST(LogBarrier, Derivatives) {
  EXPECT_DOUBLE_EQ(log_barrier_deriv(-0.5), 2.0);
  EXPECT_DOUBLE_EQ(log_barrier_deriv(-2.0), 0.5);
  EXPECT_DOUBLE_EQ(log_barrier_second(-0.5), 4.0);
  EXPECT_THROW(log_barrier_deriv(0.0), DomainError);
  EXPECT_THROW(log_barrier_deriv(1.0), DomainError);
  EXPECT_THROW(log_barrier_second(0.0), DomainError);
}

TEST(LogBarrier, DerivativeIsPositiveAndIncreasing) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> d(-50.0, -1e-6);
  for (int k = 0; k < 1000; ++k) {
    double a = d(rng), b = d(rng);
    if (a > b) std::swap(a, b);
    if (a == b) continue;
    EXPECT_GT(log_barrier_deriv(a), 0.0);
    EXPECT_LT(log_barrier_deriv(a), log_barrier_deriv(b));
  }
}

TEST(LogBarrier, Convexity) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> d(-20.0, -1e-4);
  std::uniform_real_distribution<double> t(0.0, 1.0);
  for (int k = 0; k < 1000; ++k) {
    const double a = d(rng), b = d(rng), s = t(rng);
    const double lhs = log_barrier(s * a + (1 - s) * b);
    const double rhs = s * log_barrier(a) + (1 - s) * log_barrier(b);
    EXPECT_LE(lhs, rhs + 1e-12 * (1 + std::abs(rhs)));
  }
}

TEST(LogBarrier, ComplementarityIdentity) {
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> e(-12.0, 6.0);
  for (int k = 0; k < 1000; ++k) {
    const double w = -std::pow(10.0, e(rng));
    EXPECT_NEAR(log_barrier_deriv(w) * w, -1.0, 2 * std::numeric_limits<double>::epsilon());
    const double eps = std::pow(10.0, e(rng) / 2);
    EXPECT_NEAR(eps * log_barrier_deriv(w) * w, -eps, 1e-15 * eps);
  }
}

TEST(PreHamiltonian, Examples) {
  const OcpProblem pb = robbins_problem();
  EXPECT_DOUBLE_EQ(pre_hamiltonian(pb, vec({1, 0, 0}), vec({0}), vec({1, 1, 1})), 1.0);
  const Vector x = vec({0.3, 0.2, -0.1});
  EXPECT_DOUBLE_EQ(pre_hamiltonian(pb, x, vec({0.4}), Vector::Zero(3)), eval_running_cost(pb, x, vec({0.4})));
}

TEST(PreHamiltonian, BilinearInControlAndAdjoint) {
  const OcpProblem pb = robbins_problem();
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> d(-2, 2);
  const Vector x = vec({0.7, -0.4, 1.1});
  for (int k = 0; k < 50; ++k) {
    const Vector p1 = vec({d(rng), d(rng), d(rng)}), p2 = vec({d(rng), d(rng), d(rng)});
    const Vector u1 = vec({d(rng)}), u2 = vec({d(rng)});
    const double s = 0.5 * (d(rng) + 2) / 2;
    // Affine in u for fixed p.
    const double hu = pre_hamiltonian(pb, x, s * u1 + (1 - s) * u2, p1);
    EXPECT_NEAR(hu, s * pre_hamiltonian(pb, x, u1, p1) + (1 - s) * pre_hamiltonian(pb, x, u2, p1), 1e-13);
    // H - l is linear in p for fixed u.
    const double l = eval_running_cost(pb, x, u1);
    const double hp = pre_hamiltonian(pb, x, u1, s * p1 + (1 - s) * p2) - l;
    EXPECT_NEAR(hp, s * (pre_hamiltonian(pb, x, u1, p1) - l) + (1 - s) * (pre_hamiltonian(pb, x, u1, p2) - l),
                1e-13);
  }
}

TEST(PenalizedHamiltonian, HandValues) {
  const OcpProblem pb = robbins_problem();
  const BarrierContext ctx(pb, 0.1, vec({1, 0, 0}), vec({0}), Vector::Zero(3));
  EXPECT_DOUBLE_EQ(penalized_hamiltonian(ctx), 1.0);
  EXPECT_DOUBLE_EQ(ctx.theta()(0), 0.1);
  EXPECT_EQ(ctx.eta(), vec({0.1, 0.1}));
  // Symmetric control: the two bound penalties cancel in grad_u.
  EXPECT_DOUBLE_EQ(penalized_hamiltonian_grad_u(ctx)(0), 0.0);

  InteriorSampler s;
  Vector x, u, p;
  for (int k = 0; k < 20; ++k) {
    s.draw(x, u, p);
    const BarrierContext c(pb, 0.03, x, u, p);
    EXPECT_NEAR(c.value(), robbins_penalized(0.03, x, u(0), p), 1e-13 * (1 + std::abs(c.value())));
  }
}

TEST(PenalizedHamiltonian, ZeroEpsIsPreHamiltonian) {
  const OcpProblem pb = robbins_problem();
  const Vector x = vec({0.5, 0.1, -0.3}), u = vec({0.2}), p = vec({0.3, -1, 2});
  const BarrierContext ctx(pb, 0.0, x, u, p);
  EXPECT_DOUBLE_EQ(ctx.value(), pre_hamiltonian(pb, x, u, p));
}

TEST(PenalizedHamiltonian, GradientsMatchFiniteDifferences) {
  const OcpProblem pb = robbins_problem();
  InteriorSampler s;
  Vector x, u, p;
  const double eps = 0.05;
  double worst = 0.0;
  for (int k = 0; k < 100; ++k) {
    s.draw(x, u, p);
    const BarrierContext ctx(pb, eps, x, u, p);
    const Vector gx = penalized_hamiltonian_grad_x(ctx);
    for (Index j = 0; j < 3; ++j) {
      const double h = 1e-6 * std::max(1.0, std::abs(x(j)));
      Vector xp = x, xm = x;
      xp(j) += h;
      xm(j) -= h;
      const double fd = (BarrierContext(pb, eps, xp, u, p).value() - BarrierContext(pb, eps, xm, u, p).value()) /
                        (2 * h);
      worst = std::max(worst, std::abs(gx(j) - fd) / std::max(1.0, std::abs(fd)));
    }
    const double h = 1e-7;
    const double fd_u = (BarrierContext(pb, eps, x, u.array() + h, p).value() -
                         BarrierContext(pb, eps, x, u.array() - h, p).value()) /
                        (2 * h);
    const double gu = penalized_hamiltonian_grad_u(ctx)(0);
    worst = std::max(worst, std::abs(gu - fd_u) / std::max(1.0, std::abs(fd_u)));
  }
  EXPECT_LE(worst, 1e-6);
}

TEST(PenalizedHamiltonian, HessUuClosedForm) {
  const OcpProblem pb = robbins_problem();
  InteriorSampler s;
  Vector x, u, p;
  for (int k = 0; k < 100; ++k) {
    s.draw(x, u, p);
    const double eps = 0.01 + 0.001 * k;
    const BarrierContext ctx(pb, eps, x, u, p);
    const double w = u(0);
    const double expected = eps * (1 / ((w - 1) * (w - 1)) + 1 / ((w + 1) * (w + 1)));
    const Matrix h = penalized_hamiltonian_hess_uu(ctx);
    ASSERT_EQ(h.rows(), 1);
    EXPECT_NEAR(h(0, 0), expected, 1e-13 * expected);
    EXPECT_GT(h(0, 0), 0.0);
  }
}

TEST(PenalizedHamiltonian, FullHessianMatchesFiniteDifferences) {
  const OcpProblem pb = robbins_problem();
  InteriorSampler s;
  Vector x, u, p;
  for (int k = 0; k < 30; ++k) {
    s.draw(x, u, p);
    const double eps = 0.07;
    const Matrix h = BarrierContext(pb, eps, x, u, p).hessian();
    Vector xu(4);
    xu << x, u;
    for (Index j = 0; j < 4; ++j) {
      const double step = 1e-6;
      Vector a = xu, b = xu;
      a(j) += step;
      b(j) -= step;
      auto grad = [&](const Vector& v) {
        const BarrierContext c(pb, eps, v.head(3), v.tail(1), p);
        Vector g(4);
        g << c.grad_x(), c.grad_u();
        return g;
      };
      const Vector col = (grad(a) - grad(b)) / (2 * step);
      for (Index i = 0; i < 4; ++i) {
        EXPECT_NEAR(h(i, j), col(i), 1e-5 * std::max(1.0, std::abs(col(i))));
      }
    }
    EXPECT_LE((h - h.transpose()).lpNorm<Eigen::Infinity>(), 1e-14 * (1 + h.lpNorm<Eigen::Infinity>()));
  }
}

TEST(BarrierContext, RejectsNonInteriorPoints) {
  const OcpProblem pb = robbins_problem();
  try {
    BarrierContext(pb, 0.1, vec({0, 0, 0}), vec({0}), Vector::Zero(3));
    FAIL() << "expected InteriorityError";
  } catch (const InteriorityError& e) {
    EXPECT_EQ(e.kind(), InteriorityError::Kind::State);
    EXPECT_EQ(e.constraint(), 0);
  }
  try {
    BarrierContext(pb, 0.1, vec({1, 0, 0}), vec({-1}), Vector::Zero(3));
    FAIL() << "expected InteriorityError";
  } catch (const InteriorityError& e) {
    EXPECT_EQ(e.kind(), InteriorityError::Kind::Mixed);
    EXPECT_EQ(e.constraint(), 1);
  }
  EXPECT_THROW(BarrierContext(pb, -1.0, vec({1, 0, 0}), vec({0}), Vector::Zero(3)), ConfigError);
}

TEST(BarrierContext, MultiplierIdentity) {
  const OcpProblem pb = robbins_problem();
  InteriorSampler s;
  Vector x, u, p;
  for (int k = 0; k < 100; ++k) {
    s.draw(x, u, p);
    const double eps = std::pow(10.0, -1.0 - 0.08 * k);
    const BarrierContext ctx(pb, eps, x, u, p);
    EXPECT_NEAR(ctx.theta()(0) * ctx.g()(0), -eps, 1e-15 * eps);
    for (Index i = 0; i < 2; ++i) EXPECT_NEAR(ctx.eta()(i) * ctx.c()(i), -eps, 1e-15 * eps);
  }
}
