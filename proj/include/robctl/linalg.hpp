#pragma once

#include <Eigen/Dense>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace robctl {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Raised when a dense kernel cannot produce a trustworthy answer
/// (eigensolver non-convergence, numerically singular system).
class NumericalError : public std::runtime_error {
 public:
  explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

/// Tolerances shared by the dense kernels. Everything is absolute-plus-relative.
struct LinalgSettings {
  /// A system is treated as singular when the reciprocal condition estimate
  /// falls below this value.
  double singular_rcond = 1e-14;
  /// Eigenvalues with |lambda| <= clip_abs + clip_rel * max|lambda| count as zero
  /// in pseudo-inverse and square-root routines.
  double clip_abs = 1e-14;
  double clip_rel = 1e-13;
};

struct SymEig {
  Vector eigenvalues;   // ascending
  Matrix eigenvectors;  // orthonormal columns
};

/// Builds an exactly symmetric matrix from the lower triangle of `m`.
Matrix symmetric_from_lower(const Matrix& m);

/// (m + m^T) / 2 followed by exact mirroring, so the result is bit-symmetric.
Matrix symmetrize(const Matrix& m);

/// Symmetric eigendecomposition (Householder tridiagonalization followed by
/// implicit symmetric QR, capped at 30n sweeps). Only the lower triangle of
/// `m` is read. Throws NumericalError on non-convergence.
SymEig sym_eig(const Matrix& m);

/// Frobenius-nearest positive semidefinite matrix.
Matrix psd_project(const Matrix& m);

/// Symmetric square root of a PSD matrix; negative eigenvalues are clipped.
Matrix psd_sqrt(const Matrix& m);

double max_eigenvalue(const Matrix& sym);
double min_eigenvalue(const Matrix& sym);

/// Solves a x = b with partial-pivoting LU. Throws NumericalError when the
/// reciprocal condition estimate is below settings.singular_rcond.
Vector solve_linear(const Matrix& a, const Vector& b, const LinalgSettings& settings = {});

/// Minimum-norm least-squares solution (complete orthogonal decomposition).
Vector solve_least_squares(const Matrix& a, const Vector& b);

/// Inverse of a symmetric positive definite matrix via Cholesky; throws if the
/// factorization fails.
Matrix spd_inverse(const Matrix& a);

/// Row-major flattening and its inverse, used by the JSON formats.
std::vector<double> to_row_major(const Matrix& m);
Matrix from_row_major(const std::vector<double>& values, Eigen::Index rows, Eigen::Index cols);

}  // namespace robctl
