#pragma once

#include <string>

#include "ipmocp/bvp_dae.hpp"
#include "ipmocp/ocp_problem.hpp"

namespace ipmocp {

enum class Formulation { Primal, PrimalDual };

std::string to_string(Formulation f);
/// Accepts "primal" and "primal-dual"; ConfigError otherwise.
Formulation parse_formulation(const std::string& text);

/// Position of each block of unknowns inside (y, z, q).
///
///   y = (x, p)            z = (u)                primal
///   y = (x, p)            z = (u, theta, eta)    primal-dual
///   q = lambda            (empty for a fixed initial state)
struct Layout {
  Formulation formulation = Formulation::Primal;
  Index nx = 0, nu = 0, ng = 0, nc = 0;
  Index nlambda = 0;

  Index n_diff() const { return 2 * nx; }
  Index n_alg() const { return formulation == Formulation::Primal ? nu : nu + ng + nc; }
  Index n_par() const { return nlambda; }
  Index theta_offset() const { return nu; }
  Index eta_offset() const { return nu + ng; }
};

Layout make_layout(const OcpProblem& problem, Formulation formulation);

/// Penalized stationarity system of the barrier problem at eps > 0:
///   x' = f,  p' = -H^psi_x,  0 = H^psi_u,  boundary conditions with lambda.
/// The guard returns the slacks (-g, -c). Non-interior points evaluate to NaN.
bvp::BvpDaeSystem assemble_primal(const OcpProblem& problem, double eps);

/// Smoothed primal-dual system at eps > 0:
///   x' = f,  p' = -L_x,  0 = L_u,
///   0 = theta - g - sqrt(theta^2 + g^2 + 2 eps),
///   0 = eta   - c - sqrt(eta^2   + c^2 + 2 eps).
/// No guard: iterates may leave the feasible set.
bvp::BvpDaeSystem assemble_primal_dual(const OcpProblem& problem, double eps);

bvp::BvpDaeSystem assemble(const OcpProblem& problem, Formulation formulation, double eps);

/// theta - w - sqrt(theta^2 + w^2 + 2 eps), evaluated without cancellation.
double smoothing_residual(double theta, double w, double eps);

struct SmoothingPartials {
  double d_theta = 0.0;
  double d_w = 0.0;
};
SmoothingPartials smoothing_partials(double theta, double w, double eps);

/// Constant guess: x = fixed initial state (zeros otherwise), p = 0, u = 0,
/// theta = eta = 0, lambda = 0 on a uniform mesh.
bvp::MeshSolution default_guess(const OcpProblem& problem, Formulation formulation, Index mesh_size);

/// Lifts a primal solution to primal-dual unknowns with theta = -eps/g,
/// eta = -eps/c at nodes and midpoints. Throws InteriorityError.
bvp::MeshSolution primal_to_primal_dual(const OcpProblem& problem, double eps, const bvp::MeshSolution& primal);

/// Node and midpoint values of all optimal-control quantities. For a primal
/// solution theta and eta are the barrier estimates -eps/g, -eps/c (NaN where
/// a point is not interior); for primal-dual they are the solved unknowns.
struct Trajectory {
  Vector t;
  Matrix x, p, u, theta, eta;                      // columns = nodes
  Matrix x_mid, p_mid, u_mid, theta_mid, eta_mid;  // columns = intervals
  Vector lambda;
};

Trajectory extract_trajectory(const OcpProblem& problem, Formulation formulation, double eps,
                              const bvp::MeshSolution& solution);

}  // namespace ipmocp
