#pragma once

#include "robctl/conic.hpp"

namespace robctl::detail {

struct KktResiduals {
  double primal = 0.0;
  double dual = 0.0;
  double gap = 0.0;
  double objective = 0.0;
  double dual_objective = 0.0;
};

/// Relative residuals of a candidate (x, y, s) for the original program.
KktResiduals kkt_residuals(const ConeProgram& p, const Vector& x, const Vector& y, const Vector& s);

ConeSolution solve_admm(const ConeProgram& program, const ConicSettings& settings);
ConeSolution solve_interior_point(const ConeProgram& program, const ConicSettings& settings);

}  // namespace robctl::detail
