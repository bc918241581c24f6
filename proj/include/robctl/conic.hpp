#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "robctl/linalg.hpp"

namespace robctl {

// Cone programs in the standard form
//
//   minimize  c^T x   subject to  A x + s = b,  s in K,
//
// where K is an ordered product of zero, nonnegative, second-order and PSD
// cones. Second-order blocks are laid out as (w_1, ..., w_{n-1}, t) with
// ||w|| <= t. PSD blocks of side n occupy n(n+1)/2 slots holding the lower
// triangle column by column, off-diagonals scaled by sqrt(2) so that the
// Euclidean inner product equals the Frobenius product.

enum class ConeKind { Zero, Nonneg, Soc, Psd };

struct ConeBlock {
  ConeKind kind;
  int dim;  // vector length for zero/nonneg/soc, matrix side for psd

  int length() const { return kind == ConeKind::Psd ? dim * (dim + 1) / 2 : dim; }
};

struct ConeSpec {
  std::vector<ConeBlock> blocks;

  int length() const;
};

const char* to_string(ConeKind kind);

/// Scaled lower-triangle vectorization of a symmetric matrix.
Vector psd_vectorize(const Matrix& sym);
Matrix psd_unvectorize(const Eigen::Ref<const Vector>& v, int n);

/// Closed-form Euclidean projection of (w, t) onto {||w|| <= t}.
void project_soc_inplace(Eigen::Ref<Vector> block);

/// Blockwise Euclidean projection onto K.
Vector project_onto_cones(const Vector& v, const ConeSpec& cones);

/// Projection onto the dual cone K* (the zero cone's dual is the whole space).
Vector project_onto_dual_cones(const Vector& v, const ConeSpec& cones);

struct ConeProgram {
  Vector c;
  Matrix a;
  Vector b;
  ConeSpec cones;

  /// Throws std::invalid_argument when dimensions are inconsistent or a column
  /// of A is identically zero.
  void validate() const;
};

enum class ConeStatus { Optimal, Infeasible, Unbounded, IterationCap };

const char* to_string(ConeStatus status);

enum class ConicAlgorithm {
  /// Homogeneous primal-dual interior point with Nesterov-Todd scaling.
  InteriorPoint,
  /// Operator splitting on the homogeneous self-dual embedding.
  Admm,
};

struct ConicSettings {
  ConicAlgorithm algorithm = ConicAlgorithm::InteriorPoint;
  double eps = 1e-7;            // relative KKT tolerance
  double eps_infeasible = 1e-8; // certificate tolerance
  /// Iteration cap of the splitting method.
  int max_iters = 100000;
  /// Iteration cap of the interior-point method.
  int ipm_max_iters = 100;
  /// Fraction of the distance to the cone boundary taken per interior-point step.
  double ipm_step_fraction = 0.99;
  double relaxation = 1.5;
  int ruiz_passes = 3;
  /// Splitting method: every restart_interval iterations the primal/dual
  /// weighting is rebalanced from the residual ratio and the iteration restarts
  /// from the rescaled current point.
  int restart_interval = 1000;
  int check_interval = 10;
  double scale = 1.0;
  /// When non-empty, the program is written here (write_cone_program format) before solving.
  std::string debug_dump_path;
};

struct ConeSolution {
  ConeStatus status = ConeStatus::IterationCap;
  Vector x;
  Vector y;
  Vector s;
  double primal_residual = 0.0;
  double dual_residual = 0.0;
  double gap = 0.0;
  double objective = 0.0;       // c^T x
  double dual_objective = 0.0;  // -b^T y
  int iterations = 0;
};

/// Solves the program with settings.algorithm.
ConeSolution solve_cone_program(const ConeProgram& program, const ConicSettings& settings = {});

/// Plain-text dump used for cross-checking with external solvers:
///
///   cone_program v1
///   dims <m> <n>
///   cones <count>
///   <kind> <dim>            (one line per block; kind in zero|nonneg|soc|psd)
///   c
///   <n values>
///   b
///   <m values>
///   A
///   <m lines of n values>
void write_cone_program(std::ostream& out, const ConeProgram& program);
ConeProgram read_cone_program(std::istream& in);

}  // namespace robctl
