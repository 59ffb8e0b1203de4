#include "ipmocp/problems.hpp"

namespace ipmocp {

OcpProblem robbins_problem() {
  OcpProblem pb;
  pb.name = "robbins";
  pb.nx = 3;
  pb.nu = 1;
  pb.ng = 1;
  pb.nc = 2;
  pb.horizon = 6.0;

  pb.f1 = [](const Vector& x) -> Vector { return Vector{{x(1), x(2), 0.0}}; };
  pb.f1_x = [](const Vector&) -> Matrix {
    Matrix j = Matrix::Zero(3, 3);
    j(0, 1) = 1.0;
    j(1, 2) = 1.0;
    return j;
  };
  pb.f2 = [](const Vector&) -> Matrix { return Matrix{{0.0}, {0.0}, {1.0}}; };
  pb.f2u_x = [](const Vector&, const Vector&) -> Matrix { return Matrix::Zero(3, 3); };

  pb.l1 = [](const Vector& x) { return x(0); };
  pb.l1_x = [](const Vector&) -> Vector { return Vector{{1.0, 0.0, 0.0}}; };
  pb.l2 = [](const Vector&) -> Vector { return Vector::Zero(1); };
  pb.l2_x = [](const Vector&) -> Matrix { return Matrix::Zero(1, 3); };

  pb.phi = [](const Vector&) { return 0.0; };
  pb.phi_x = [](const Vector&) -> Vector { return Vector::Zero(3); };

  pb.g = [](const Vector& x) -> Vector { return Vector::Constant(1, -x(0)); };
  pb.g_x = [](const Vector&) -> Matrix { return Matrix{{-1.0, 0.0, 0.0}}; };

  pb.a = [](const Vector&) -> Matrix { return Matrix{{1.0}, {-1.0}}; };
  pb.au_x = [](const Vector&, const Vector&) -> Matrix { return Matrix::Zero(2, 3); };
  pb.b = [](const Vector&) -> Vector { return Vector::Constant(2, -1.0); };
  pb.b_x = [](const Vector&) -> Matrix { return Matrix::Zero(2, 3); };

  pb.bc = BoundaryConditions::fixed_initial(Vector{{1.0, 0.0, 0.0}});
  // Every piece is affine in (x, u).
  pb.lagrangian_hessian = [](const Vector&, const Vector&, const Vector&, const Vector&, const Vector&) -> Matrix {
    return Matrix::Zero(4, 4);
  };
  pb.box.state_lo = -10.0;
  pb.box.state_hi = 10.0;
  return pb;
}

OcpProblem lq_problem(const Matrix& A, const Matrix& Q, const Matrix& S, double horizon, const Vector& x0,
                      bool general_bc) {
  const Index n = A.rows();
  if (A.cols() != n || Q.rows() != n || Q.cols() != n || S.rows() != n || S.cols() != n || x0.size() != n) {
    throw ConfigError("lq_problem: inconsistent dimensions");
  }
  OcpProblem pb;
  pb.name = "lq";
  pb.nx = n;
  pb.horizon = horizon;
  pb.f1 = [A](const Vector& x) -> Vector { return A * x; };
  pb.f1_x = [A](const Vector&) -> Matrix { return A; };
  pb.f2 = [n](const Vector&) -> Matrix { return Matrix::Zero(n, 0); };
  pb.f2u_x = [n](const Vector&, const Vector&) -> Matrix { return Matrix::Zero(n, n); };
  pb.l1 = [Q](const Vector& x) { return 0.5 * x.dot(Q * x); };
  pb.l1_x = [Q](const Vector& x) -> Vector { return Q * x; };
  pb.phi = [S](const Vector& x) { return 0.5 * x.dot(S * x); };
  pb.phi_x = [S](const Vector& x) -> Vector { return S * x; };
  pb.lagrangian_hessian = [Q](const Vector&, const Vector&, const Vector&, const Vector&, const Vector&) -> Matrix {
    return Q;
  };
  if (general_bc) {
    pb.bc = BoundaryConditions::general(
        n, [x0](const Vector& a, const Vector&) -> Vector { return a - x0; },
        [n](const Vector&, const Vector&) -> Matrix { return Matrix::Identity(n, n); },
        [n](const Vector&, const Vector&) -> Matrix { return Matrix::Zero(n, n); });
  } else {
    pb.bc = BoundaryConditions::fixed_initial(x0);
  }
  return pb;
}

OcpProblem lq_example(bool general_bc) {
  const Matrix A{{0.0, 1.0}, {-1.0, -0.2}};
  const Matrix Q{{2.0, 0.5}, {0.5, 1.0}};
  const Matrix S{{1.0, 0.0}, {0.0, 0.5}};
  return lq_problem(A, Q, S, 2.0, Vector{{1.0, -0.5}}, general_bc);
}

OcpProblem problem_by_name(const std::string& name) {
  if (name == "robbins") return robbins_problem();
  if (name == "lq") return lq_example();
  std::string known;
  for (const auto& n : problem_names()) known += (known.empty() ? "" : ", ") + n;
  throw ConfigError("unknown problem '" + name + "' (known: " + known + ")");
}

std::vector<std::string> problem_names() { return {"robbins", "lq"}; }

}  // namespace ipmocp
