#pragma once

#include "cpnn/algebra/filter_bank.hpp"

#include <vector>

namespace cpnn {

/// ||T'^T T' - I||_F^2 = gram_residual(T)^2.
double penalty_value(const FilterBank& t);
/// Gradient of penalty_value with respect to the taps of t.
FilterBank penalty_gradient(const FilterBank& t);
/// Hessian of penalty_value at t applied to the tap direction v.
FilterBank penalty_hvp(const FilterBank& t, const FilterBank& v);

/// F(T) = ||T - T_target||_F^2 + lambda ||T'^T T' - I||_F^2 (matrix norms).
double projection_objective(const FilterBank& t, const FilterBank& target, double lambda);

struct ProjectionOptions {
  double lambda = 1e4;
  int max_iters = 5000;
  double grad_tol = 1e-10;
  double rho_floor = 1e-12;
};

struct ProjectionResult {
  FilterBank bank;
  int iterations = 0;
  int backtracks = 0;            // halvings needed to keep F non-increasing
  bool converged = false;        // ||grad F|| <= grad_tol
  std::vector<double> objective; // F before the first step and after every step
  double gram_residual = 0.0;
  double distance = 0.0;         // ||T - T_target||_F
};

/// Normalised-gradient descent on F starting from T_target: step grad F / rho
/// with rho = ||Hess F g||, g = grad F / ||grad F||. If a step would increase F
/// it is halved until F does not increase.
ProjectionResult project_filters(const FilterBank& target, const ProjectionOptions& opts = {});

} // namespace cpnn
