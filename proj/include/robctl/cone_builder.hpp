#pragma once

#include <map>
#include <vector>

#include "robctl/conic.hpp"

namespace robctl {

/// Matrix-valued expression affine in the scalar decision variables of a
/// ConeProgramBuilder: constant + sum_j x_j * coeff_j.
class AffineMatrix {
 public:
  AffineMatrix() = default;
  AffineMatrix(Eigen::Index rows, Eigen::Index cols);
  static AffineMatrix constant(const Matrix& value);

  Eigen::Index rows() const { return constant_.rows(); }
  Eigen::Index cols() const { return constant_.cols(); }
  const Matrix& constant_part() const { return constant_; }
  const std::map<int, Matrix>& terms() const { return terms_; }

  void add_term(int var, const Matrix& coeff);
  AffineMatrix transpose() const;
  Matrix evaluate(const Vector& x) const;

  AffineMatrix& operator+=(const AffineMatrix& other);
  AffineMatrix& operator-=(const AffineMatrix& other);

  friend AffineMatrix operator+(AffineMatrix lhs, const AffineMatrix& rhs) { return lhs += rhs; }
  friend AffineMatrix operator-(AffineMatrix lhs, const AffineMatrix& rhs) { return lhs -= rhs; }
  friend AffineMatrix operator*(double s, const AffineMatrix& e);
  friend AffineMatrix operator*(const Matrix& left, const AffineMatrix& e);
  friend AffineMatrix operator*(const AffineMatrix& e, const Matrix& right);

 private:
  Matrix constant_;
  std::map<int, Matrix> terms_;
};

AffineMatrix operator+(const AffineMatrix& e, const Matrix& m);
AffineMatrix operator-(const AffineMatrix& e, const Matrix& m);

/// Assembles a block matrix from a grid of expressions (rows of equal height).
AffineMatrix block_matrix(const std::vector<std::vector<AffineMatrix>>& grid);

/// 1x1 expression holding the trace.
AffineMatrix trace(const AffineMatrix& e);

/// Collects variables, cone constraints and a linear objective and lowers
/// them to a ConeProgram.
class ConeProgramBuilder {
 public:
  int add_scalar();
  AffineMatrix scalar(int var) const;
  /// Symmetric n x n matrix variable (n(n+1)/2 scalars).
  AffineMatrix add_symmetric(int n);
  /// General rows x cols matrix variable.
  AffineMatrix add_matrix(int rows, int cols);

  /// expr (symmetric) is positive semidefinite.
  void add_psd(const AffineMatrix& expr);
  /// Every entry of expr is nonnegative.
  void add_nonneg(const AffineMatrix& expr);
  /// Every entry of expr is zero.
  void add_zero(const AffineMatrix& expr);
  /// Last entry of the column expression bounds the norm of the others.
  void add_soc(const AffineMatrix& column);

  void minimize(const AffineMatrix& objective_1x1);

  int num_variables() const { return num_vars_; }
  ConeProgram build() const;

 private:
  struct Rows {
    ConeBlock block;
    Vector constant;
    std::map<int, Vector> coeffs;
  };
  void push_rows(ConeBlock block, const AffineMatrix& expr, bool lower_triangle_scaled);

  int num_vars_ = 0;
  std::vector<Rows> rows_;
  Vector objective_;
};

}  // namespace robctl
