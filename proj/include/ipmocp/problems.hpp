#pragma once

#include <string>
#include <vector>

#include "ipmocp/ocp_problem.hpp"

namespace ipmocp {

/// Robbins benchmark: min int_0^6 x1 dt, x1''' = u, x(0) = (1,0,0),
/// x1 >= 0, |u| <= 1 (as two mixed constraints), free terminal state.
OcpProblem robbins_problem();

/// Linear-quadratic problem without control or constraints:
///   min 1/2 x(T)'S x(T) + int 1/2 x'Q x dt,  x' = A x,  x(0) = x0.
/// With `general_bc` the initial condition is posed through a general
/// boundary map (multipliers lambda kept as unknowns).
OcpProblem lq_problem(const Matrix& A, const Matrix& Q, const Matrix& S, double horizon, const Vector& x0,
                      bool general_bc = false);

/// The default LQ instance: damped oscillator on [0, 2].
OcpProblem lq_example(bool general_bc = false);

/// Built-in problems by name ("robbins", "lq"); ConfigError otherwise.
OcpProblem problem_by_name(const std::string& name);
std::vector<std::string> problem_names();

}  // namespace ipmocp
