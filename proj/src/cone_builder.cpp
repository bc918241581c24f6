#include "robctl/cone_builder.hpp"

#include <cmath>
#include <stdexcept>

namespace robctl {

AffineMatrix::AffineMatrix(Eigen::Index rows, Eigen::Index cols) : constant_(Matrix::Zero(rows, cols)) {}

AffineMatrix AffineMatrix::constant(const Matrix& value) {
  AffineMatrix e(value.rows(), value.cols());
  e.constant_ = value;
  return e;
}

void AffineMatrix::add_term(int var, const Matrix& coeff) {
  if (coeff.rows() != rows() || coeff.cols() != cols()) throw std::invalid_argument("AffineMatrix: term shape");
  auto it = terms_.find(var);
  if (it == terms_.end()) terms_.emplace(var, coeff);
  else it->second += coeff;
}

AffineMatrix AffineMatrix::transpose() const {
  AffineMatrix out = constant(constant_.transpose());
  for (const auto& [var, coeff] : terms_) out.terms_.emplace(var, coeff.transpose());
  return out;
}

Matrix AffineMatrix::evaluate(const Vector& x) const {
  Matrix out = constant_;
  for (const auto& [var, coeff] : terms_) out += x(var) * coeff;
  return out;
}

AffineMatrix& AffineMatrix::operator+=(const AffineMatrix& other) {
  if (other.rows() != rows() || other.cols() != cols()) throw std::invalid_argument("AffineMatrix: shape mismatch in +");
  constant_ += other.constant_;
  for (const auto& [var, coeff] : other.terms_) add_term(var, coeff);
  return *this;
}

AffineMatrix& AffineMatrix::operator-=(const AffineMatrix& other) { return *this += (-1.0) * other; }

AffineMatrix operator*(double s, const AffineMatrix& e) {
  AffineMatrix out = AffineMatrix::constant(s * e.constant_);
  for (const auto& [var, coeff] : e.terms_) out.terms_.emplace(var, s * coeff);
  return out;
}

AffineMatrix operator*(const Matrix& left, const AffineMatrix& e) {
  if (left.cols() != e.rows()) throw std::invalid_argument("AffineMatrix: shape mismatch in left product");
  AffineMatrix out = AffineMatrix::constant(left * e.constant_);
  for (const auto& [var, coeff] : e.terms_) out.terms_.emplace(var, left * coeff);
  return out;
}

AffineMatrix operator*(const AffineMatrix& e, const Matrix& right) {
  if (e.cols() != right.rows()) throw std::invalid_argument("AffineMatrix: shape mismatch in right product");
  AffineMatrix out = AffineMatrix::constant(e.constant_ * right);
  for (const auto& [var, coeff] : e.terms_) out.terms_.emplace(var, coeff * right);
  return out;
}

AffineMatrix operator+(const AffineMatrix& e, const Matrix& m) { return e + AffineMatrix::constant(m); }
AffineMatrix operator-(const AffineMatrix& e, const Matrix& m) { return e - AffineMatrix::constant(m); }

AffineMatrix block_matrix(const std::vector<std::vector<AffineMatrix>>& grid) {
  if (grid.empty() || grid.front().empty()) throw std::invalid_argument("block_matrix: empty grid");
  Eigen::Index total_rows = 0, total_cols = 0;
  for (const auto& row : grid) total_rows += row.front().rows();
  for (const auto& cell : grid.front()) total_cols += cell.cols();
  AffineMatrix out(total_rows, total_cols);
  Eigen::Index r0 = 0;
  for (const auto& row : grid) {
    if (row.size() != grid.front().size()) throw std::invalid_argument("block_matrix: ragged grid");
    Eigen::Index c0 = 0;
    const auto h = row.front().rows();
    for (size_t j = 0; j < row.size(); ++j) {
      const auto& cell = row[j];
      if (cell.rows() != h || cell.cols() != grid.front()[j].cols())
        throw std::invalid_argument("block_matrix: inconsistent block shapes");
      Matrix c = Matrix::Zero(total_rows, total_cols);
      c.block(r0, c0, h, cell.cols()) = cell.constant_part();
      AffineMatrix placed = AffineMatrix::constant(c);
      for (const auto& [var, coeff] : cell.terms()) {
        Matrix t = Matrix::Zero(total_rows, total_cols);
        t.block(r0, c0, h, cell.cols()) = coeff;
        placed.add_term(var, t);
      }
      out += placed;
      c0 += cell.cols();
    }
    r0 += h;
  }
  return out;
}

AffineMatrix trace(const AffineMatrix& e) {
  if (e.rows() != e.cols()) throw std::invalid_argument("trace: expression is not square");
  AffineMatrix out = AffineMatrix::constant(Matrix::Constant(1, 1, e.constant_part().trace()));
  for (const auto& [var, coeff] : e.terms()) out.add_term(var, Matrix::Constant(1, 1, coeff.trace()));
  return out;
}

int ConeProgramBuilder::add_scalar() { return num_vars_++; }

AffineMatrix ConeProgramBuilder::scalar(int var) const {
  AffineMatrix e(1, 1);
  e.add_term(var, Matrix::Ones(1, 1));
  return e;
}

AffineMatrix ConeProgramBuilder::add_symmetric(int n) {
  AffineMatrix e(n, n);
  for (int j = 0; j < n; ++j)
    for (int i = j; i < n; ++i) {
      Matrix basis = Matrix::Zero(n, n);
      basis(i, j) = 1.0;
      basis(j, i) = 1.0;
      e.add_term(add_scalar(), basis);
    }
  return e;
}

AffineMatrix ConeProgramBuilder::add_matrix(int rows, int cols) {
  AffineMatrix e(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) {
      Matrix basis = Matrix::Zero(rows, cols);
      basis(i, j) = 1.0;
      e.add_term(add_scalar(), basis);
    }
  return e;
}

void ConeProgramBuilder::push_rows(ConeBlock block, const AffineMatrix& expr, bool psd) {
  Rows r{block, {}, {}};
  auto flatten = [&](const Matrix& m) -> Vector {
    if (psd) return psd_vectorize(m);
    Vector v(m.size());
    Eigen::Index k = 0;
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      for (Eigen::Index j = 0; j < m.cols(); ++j) v(k++) = m(i, j);
    return v;
  };
  r.constant = flatten(expr.constant_part());
  for (const auto& [var, coeff] : expr.terms()) r.coeffs.emplace(var, flatten(coeff));
  rows_.push_back(std::move(r));
}

void ConeProgramBuilder::add_psd(const AffineMatrix& expr) {
  if (expr.rows() != expr.cols()) throw std::invalid_argument("add_psd: expression is not square");
  auto asym = [](const Matrix& m) { return (m - m.transpose()).cwiseAbs().maxCoeff(); };
  const double scale = 1.0 + expr.constant_part().cwiseAbs().maxCoeff();
  if (asym(expr.constant_part()) > 1e-9 * scale) throw std::invalid_argument("add_psd: expression is not symmetric");
  for (const auto& [var, coeff] : expr.terms())
    if (asym(coeff) > 1e-9 * (1.0 + coeff.cwiseAbs().maxCoeff()))
      throw std::invalid_argument("add_psd: expression is not symmetric");
  push_rows({ConeKind::Psd, static_cast<int>(expr.rows())}, expr, true);
}

void ConeProgramBuilder::add_nonneg(const AffineMatrix& expr) {
  push_rows({ConeKind::Nonneg, static_cast<int>(expr.rows() * expr.cols())}, expr, false);
}

void ConeProgramBuilder::add_zero(const AffineMatrix& expr) {
  push_rows({ConeKind::Zero, static_cast<int>(expr.rows() * expr.cols())}, expr, false);
}

void ConeProgramBuilder::add_soc(const AffineMatrix& column) {
  if (column.cols() != 1) throw std::invalid_argument("add_soc: expression must be a column");
  push_rows({ConeKind::Soc, static_cast<int>(column.rows())}, column, false);
}

void ConeProgramBuilder::minimize(const AffineMatrix& objective) {
  if (objective.rows() != 1 || objective.cols() != 1) throw std::invalid_argument("minimize: objective must be 1x1");
  objective_ = Vector::Zero(num_vars_);
  for (const auto& [var, coeff] : objective.terms()) objective_(var) = coeff(0, 0);
}

ConeProgram ConeProgramBuilder::build() const {
  ConeProgram p;
  Eigen::Index m = 0;
  for (const auto& r : rows_) m += r.constant.size();
  p.a = Matrix::Zero(m, num_vars_);
  p.b = Vector::Zero(m);
  p.c = Vector::Zero(num_vars_);
  if (objective_.size() > 0) p.c.head(objective_.size()) = objective_;
  Eigen::Index offset = 0;
  for (const auto& r : rows_) {
    const auto len = r.constant.size();
    // expr = constant + sum x_j coeff_j = s  =>  s = b - A x with b = constant, A_j = -coeff_j.
    p.b.segment(offset, len) = r.constant;
    for (const auto& [var, coeff] : r.coeffs) p.a.block(offset, var, len, 1) = -coeff;
    p.cones.blocks.push_back(r.block);
    offset += len;
  }
  return p;
}

}  // namespace robctl
