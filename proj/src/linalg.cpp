#include "robctl/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace robctl {

Matrix symmetric_from_lower(const Matrix& m) {
  if (m.rows() != m.cols()) throw std::invalid_argument("symmetric_from_lower: matrix is not square");
  Matrix out = m;
  for (Eigen::Index j = 0; j < m.cols(); ++j)
    for (Eigen::Index i = 0; i < j; ++i) out(i, j) = m(j, i);
  return out;
}

Matrix symmetrize(const Matrix& m) {
  if (m.rows() != m.cols()) throw std::invalid_argument("symmetrize: matrix is not square");
  Matrix half = 0.5 * (m + m.transpose());
  return symmetric_from_lower(half);
}

SymEig sym_eig(const Matrix& m) {
  if (m.rows() != m.cols()) throw std::invalid_argument("sym_eig: matrix is not square");
  if (m.rows() == 0) return {Vector(0), Matrix(0, 0)};
  Eigen::SelfAdjointEigenSolver<Matrix> solver(m, Eigen::ComputeEigenvectors);
  if (solver.info() != Eigen::Success)
    throw NumericalError("sym_eig: symmetric QR iteration did not converge");
  return {solver.eigenvalues(), solver.eigenvectors()};
}

Matrix psd_project(const Matrix& m) {
  if (m.rows() == 0) return m;
  const SymEig e = sym_eig(m);
  const Vector clipped = e.eigenvalues.cwiseMax(0.0);
  return symmetrize(e.eigenvectors * clipped.asDiagonal() * e.eigenvectors.transpose());
}

Matrix psd_sqrt(const Matrix& m) {
  if (m.rows() == 0) return m;
  const SymEig e = sym_eig(m);
  const Vector root = e.eigenvalues.cwiseMax(0.0).cwiseSqrt();
  return symmetrize(e.eigenvectors * root.asDiagonal() * e.eigenvectors.transpose());
}

double max_eigenvalue(const Matrix& sym) {
  if (sym.rows() == 0) return -std::numeric_limits<double>::infinity();
  return Eigen::SelfAdjointEigenSolver<Matrix>(sym, Eigen::EigenvaluesOnly).eigenvalues().maxCoeff();
}

double min_eigenvalue(const Matrix& sym) {
  if (sym.rows() == 0) return std::numeric_limits<double>::infinity();
  return Eigen::SelfAdjointEigenSolver<Matrix>(sym, Eigen::EigenvaluesOnly).eigenvalues().minCoeff();
}

Vector solve_linear(const Matrix& a, const Vector& b, const LinalgSettings& settings) {
  if (a.rows() != a.cols() || a.rows() != b.size())
    throw std::invalid_argument("solve_linear: dimension mismatch");
  if (a.rows() == 0) return Vector(0);
  Eigen::PartialPivLU<Matrix> lu(a);
  const double rcond = lu.rcond();
  if (!(rcond >= settings.singular_rcond))
    throw NumericalError("solve_linear: matrix is singular to working precision (rcond=" +
                         std::to_string(rcond) + ")");
  return lu.solve(b);
}

Vector solve_least_squares(const Matrix& a, const Vector& b) {
  if (a.rows() != b.size()) throw std::invalid_argument("solve_least_squares: dimension mismatch");
  return a.completeOrthogonalDecomposition().solve(b);
}

Matrix spd_inverse(const Matrix& a) {
  Eigen::LLT<Matrix> llt(a);
  if (llt.info() != Eigen::Success) throw NumericalError("spd_inverse: matrix is not positive definite");
  return symmetrize(llt.solve(Matrix::Identity(a.rows(), a.cols())));
}

std::vector<double> to_row_major(const Matrix& m) {
  std::vector<double> out;
  out.reserve(static_cast<size_t>(m.size()));
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) out.push_back(m(i, j));
  return out;
}

Matrix from_row_major(const std::vector<double>& values, Eigen::Index rows, Eigen::Index cols) {
  if (static_cast<Eigen::Index>(values.size()) != rows * cols)
    throw std::invalid_argument("from_row_major: expected " + std::to_string(rows * cols) +
                                " entries, got " + std::to_string(values.size()));
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = values[static_cast<size_t>(i * cols + j)];
  return m;
}

}  // namespace robctl
