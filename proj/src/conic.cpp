#include "robctl/conic.hpp"

#include "conic_internal.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace robctl {

namespace {

constexpr double kSqrt2 = 1.41421356237309504880;

double safe_norm(const Vector& v) { return v.size() == 0 ? 0.0 : v.norm(); }

}  // namespace

int ConeSpec::length() const {
  int total = 0;
  for (const auto& b : blocks) total += b.length();
  return total;
}

const char* to_string(ConeKind kind) {
  switch (kind) {
    case ConeKind::Zero: return "zero";
    case ConeKind::Nonneg: return "nonneg";
    case ConeKind::Soc: return "soc";
    case ConeKind::Psd: return "psd";
  }
  return "?";
}

const char* to_string(ConeStatus status) {
  switch (status) {
    case ConeStatus::Optimal: return "optimal";
    case ConeStatus::Infeasible: return "infeasible";
    case ConeStatus::Unbounded: return "unbounded";
    case ConeStatus::IterationCap: return "iteration-cap";
  }
  return "?";
}

Vector psd_vectorize(const Matrix& sym) {
  const auto n = sym.rows();
  Vector v(n * (n + 1) / 2);
  Eigen::Index k = 0;
  for (Eigen::Index j = 0; j < n; ++j) {
    v(k++) = sym(j, j);
    for (Eigen::Index i = j + 1; i < n; ++i) v(k++) = kSqrt2 * sym(i, j);
  }
  return v;
}

Matrix psd_unvectorize(const Eigen::Ref<const Vector>& v, int n) {
  if (v.size() != n * (n + 1) / 2) throw std::invalid_argument("psd_unvectorize: wrong length");
  Matrix m(n, n);
  Eigen::Index k = 0;
  for (int j = 0; j < n; ++j) {
    m(j, j) = v(k++);
    for (int i = j + 1; i < n; ++i) {
      const double value = v(k++) / kSqrt2;
      m(i, j) = value;
      m(j, i) = value;
    }
  }
  return m;
}

void project_soc_inplace(Eigen::Ref<Vector> block) {
  const auto n = block.size();
  if (n == 0) return;
  const double t = block(n - 1);
  const double nw = block.head(n - 1).norm();
  if (nw <= t) return;
  if (nw <= -t) {
    block.setZero();
    return;
  }
  const double scale = 0.5 * (nw + t);
  block.head(n - 1) *= scale / nw;
  block(n - 1) = scale;
}

namespace {

void project_block(Eigen::Ref<Vector> seg, const ConeBlock& block, bool dual) {
  switch (block.kind) {
    case ConeKind::Zero:
      if (!dual) seg.setZero();
      break;
    case ConeKind::Nonneg:
      seg = seg.cwiseMax(0.0);
      break;
    case ConeKind::Soc:
      project_soc_inplace(seg);
      break;
    case ConeKind::Psd: {
      if (block.dim == 1) {
        seg(0) = std::max(seg(0), 0.0);
        break;
      }
      const Matrix m = psd_unvectorize(seg, block.dim);
      Eigen::SelfAdjointEigenSolver<Matrix> es(m, Eigen::ComputeEigenvectors);
      if (es.info() != Eigen::Success) throw NumericalError("PSD cone projection: eigensolver failed");
      const Vector lam = es.eigenvalues().cwiseMax(0.0);
      const Matrix p = es.eigenvectors() * lam.asDiagonal() * es.eigenvectors().transpose();
      seg = psd_vectorize(symmetrize(p));
      break;
    }
  }
}

Vector project_impl(const Vector& v, const ConeSpec& cones, bool dual) {
  if (v.size() != cones.length()) throw std::invalid_argument("cone projection: length mismatch");
  Vector out = v;
  Eigen::Index offset = 0;
  for (const auto& block : cones.blocks) {
    const int len = block.length();
    project_block(out.segment(offset, len), block, dual);
    offset += len;
  }
  return out;
}

}  // namespace

Vector project_onto_cones(const Vector& v, const ConeSpec& cones) { return project_impl(v, cones, false); }

Vector project_onto_dual_cones(const Vector& v, const ConeSpec& cones) { return project_impl(v, cones, true); }

void ConeProgram::validate() const {
  const auto m = a.rows();
  const auto n = a.cols();
  if (c.size() != n) throw std::invalid_argument("cone program: c has length " + std::to_string(c.size()) +
                                                 ", expected " + std::to_string(n));
  if (b.size() != m) throw std::invalid_argument("cone program: b has length " + std::to_string(b.size()) +
                                                 ", expected " + std::to_string(m));
  if (cones.length() != m)
    throw std::invalid_argument("cone program: cone lengths sum to " + std::to_string(cones.length()) +
                                ", expected " + std::to_string(m));
  for (const auto& block : cones.blocks)
    if (block.dim <= 0) throw std::invalid_argument("cone program: empty cone block");
  for (Eigen::Index j = 0; j < n; ++j)
    if (a.col(j).cwiseAbs().maxCoeff() == 0.0)
      throw std::invalid_argument("cone program: column " + std::to_string(j) + " of A is zero");
  if (!a.allFinite() || !b.allFinite() || !c.allFinite())
    throw std::invalid_argument("cone program: non-finite data");
}

namespace {

// Problem data after Ruiz equilibration and b/c normalization.
struct ScaledProblem {
  Matrix a;
  Vector b;
  Vector c;
  Vector row_scale;  // D
  Vector col_scale;  // E
  double b_scale = 1.0;
  double c_scale = 1.0;
};

ScaledProblem equilibrate(const ConeProgram& p, const ConicSettings& settings) {
  ScaledProblem sp;
  const auto m = p.a.rows();
  const auto n = p.a.cols();
  sp.a = p.a;
  sp.row_scale = Vector::Ones(m);
  sp.col_scale = Vector::Ones(n);
  for (int pass = 0; pass < settings.ruiz_passes; ++pass) {
    Vector d(m);
    Eigen::Index offset = 0;
    for (const auto& block : p.cones.blocks) {
      const int len = block.length();
      if (block.kind == ConeKind::Zero || block.kind == ConeKind::Nonneg) {
        for (int i = 0; i < len; ++i) {
          const double r = sp.a.row(offset + i).cwiseAbs().maxCoeff();
          d(offset + i) = r > 0.0 ? 1.0 / std::sqrt(r) : 1.0;
        }
      } else {
        // Cone membership of SOC/PSD blocks survives only a common positive factor.
        const double r = sp.a.middleRows(offset, len).cwiseAbs().maxCoeff();
        d.segment(offset, len).setConstant(r > 0.0 ? 1.0 / std::sqrt(r) : 1.0);
      }
      offset += len;
    }
    sp.a = d.asDiagonal() * sp.a;
    Vector e(n);
    for (Eigen::Index j = 0; j < n; ++j) {
      const double r = sp.a.col(j).cwiseAbs().maxCoeff();
      e(j) = r > 0.0 ? 1.0 / std::sqrt(r) : 1.0;
    }
    sp.a = sp.a * e.asDiagonal();
    sp.row_scale.array() *= d.array();
    sp.col_scale.array() *= e.array();
  }
  Vector b = sp.row_scale.asDiagonal() * p.b;
  Vector c = sp.col_scale.asDiagonal() * p.c;
  const double nb = b.size() ? b.cwiseAbs().maxCoeff() : 0.0;
  const double nc = c.size() ? c.cwiseAbs().maxCoeff() : 0.0;
  sp.b_scale = settings.scale / std::max(nb, 1e-4);
  sp.c_scale = settings.scale / std::max(nc, 1e-4);
  sp.b = sp.b_scale * b;
  sp.c = sp.c_scale * c;
  return sp;
}

}  // namespace

namespace detail {

KktResiduals kkt_residuals(const ConeProgram& p, const Vector& x, const Vector& y, const Vector& s) {
  KktResiduals r{};
  r.primal = safe_norm(p.a * x + s - p.b) / (1.0 + safe_norm(p.b));
  r.dual = safe_norm(p.a.transpose() * y + p.c) / (1.0 + safe_norm(p.c));
  r.objective = p.c.dot(x);
  r.dual_objective = -p.b.dot(y);
  r.gap = std::abs(r.objective - r.dual_objective) / (1.0 + std::abs(r.objective) + std::abs(r.dual_objective));
  return r;
}

ConeSolution solve_admm(const ConeProgram& program, const ConicSettings& settings) {
  const auto m = program.a.rows();
  const auto n = program.a.cols();
  const ScaledProblem sp = equilibrate(program, settings);

  // (I + Q) solves reduce to the n x n system (I + A^T A) via block elimination.
  const Matrix normal = Matrix::Identity(n, n) + sp.a.transpose() * sp.a;
  const Eigen::LLT<Matrix> llt(normal);
  if (llt.info() != Eigen::Success) throw NumericalError("cone solver: failed to factor I + A^T A");

  auto solve_m = [&](const Vector& rx, const Vector& ry, Vector& x, Vector& y) {
    x = llt.solve(rx - sp.a.transpose() * ry);
    y = ry + sp.a * x;
  };

  Vector gx, gy;
  solve_m(sp.c, sp.b, gx, gy);
  const double h_g = sp.c.dot(gx) + sp.b.dot(gy);

  // Iterates of the embedding: u = (x, y, tau), v = (r, s, kappa).
  Vector ux = Vector::Zero(n), uy = Vector::Zero(m);
  double utau = 1.0;
  Vector vs = Vector::Zero(m);
  double vkappa = 1.0;
  Vector vx = Vector::Zero(n);

  ConeSolution sol;
  const double alpha = settings.relaxation;

  auto unscale = [&](const Vector& x_s, const Vector& y_s, const Vector& s_s, double tau, Vector& x, Vector& y,
                     Vector& s) {
    x = sp.col_scale.asDiagonal() * (x_s / (tau * sp.b_scale));
    y = sp.row_scale.asDiagonal() * (y_s / (tau * sp.c_scale));
    s = sp.row_scale.cwiseInverse().asDiagonal() * (s_s / (tau * sp.b_scale));
  };

  // Residual-based restart: at the end of each window the iterates jump to
  // the window average when that average has the smaller KKT residual.
  Vector avg_ux = Vector::Zero(n), avg_uy = Vector::Zero(m), avg_vs = Vector::Zero(m), avg_vx = Vector::Zero(n);
  double avg_utau = 0.0, avg_vkappa = 0.0;
  int window = 0;
  auto merit_of = [&](const Vector& x_s, const Vector& y_s, const Vector& s_s, double tau) {
    if (tau <= 0.0) return std::numeric_limits<double>::infinity();
    Vector x, y, s;
    unscale(x_s, y_s, s_s, tau, x, y, s);
    const KktResiduals r = kkt_residuals(program, x, y, s);
    return std::max({r.primal, r.dual, r.gap});
  };

  Vector tx, ty, wx, wy;
  for (int k = 1; k <= settings.max_iters; ++k) {
    wx = ux + vx;
    wy = uy + vs;
    const double wtau = utau + vkappa;
    solve_m(wx, wy, tx, ty);
    const double ttau = (wtau + sp.c.dot(tx) + sp.b.dot(ty)) / (1.0 + h_g);
    tx -= ttau * gx;
    ty -= ttau * gy;

    // Over-relaxation.
    const Vector rx = alpha * tx + (1.0 - alpha) * ux;
    const Vector ry = alpha * ty + (1.0 - alpha) * uy;
    const double rtau = alpha * ttau + (1.0 - alpha) * utau;

    ux = rx - vx;
    uy = project_onto_dual_cones(ry - vs, program.cones);
    utau = std::max(rtau - vkappa, 0.0);

    vx += ux - rx;
    vs += uy - ry;
    vkappa += utau - rtau;

    if (k % settings.check_interval != 0 && k != settings.max_iters) continue;

    sol.iterations = k;
    if (utau > 1e-12 * std::max(1.0, vkappa)) {
      Vector x, y, s;
      unscale(ux, uy, vs, utau, x, y, s);
      const KktResiduals r = kkt_residuals(program, x, y, s);
      sol.x = x;
      sol.y = y;
      sol.s = s;
      sol.primal_residual = r.primal;
      sol.dual_residual = r.dual;
      sol.gap = r.gap;
      sol.objective = r.objective;
      sol.dual_objective = r.dual_objective;
      if (r.primal <= settings.eps && r.dual <= settings.eps && r.gap <= settings.eps) {
        sol.status = ConeStatus::Optimal;
        return sol;
      }
    }
    if (settings.restart_interval > 0) {
      ++window;
      const double w = 1.0 / window;
      avg_ux += w * (ux - avg_ux);
      avg_uy += w * (uy - avg_uy);
      avg_vs += w * (vs - avg_vs);
      avg_vx += w * (vx - avg_vx);
      avg_utau += w * (utau - avg_utau);
      avg_vkappa += w * (vkappa - avg_vkappa);
      if (window * settings.check_interval >= settings.restart_interval) {
        if (merit_of(avg_ux, avg_uy, avg_vs, avg_utau) < merit_of(ux, uy, vs, utau)) {
          ux = avg_ux;
          uy = avg_uy;
          vs = avg_vs;
          vx = avg_vx;
          utau = avg_utau;
          vkappa = avg_vkappa;
        }
        window = 0;
      }
    }

    // Infeasibility certificates on the unnormalized iterates.
    {
      const Vector y = sp.row_scale.asDiagonal() * uy;
      const double by = program.b.dot(y);
      if (by < 0.0) {
        const double res = safe_norm(program.a.transpose() * y) / -by;
        if (res <= settings.eps_infeasible) {
          sol.status = ConeStatus::Infeasible;
          sol.y = y / -by;
          return sol;
        }
      }
      const Vector x = sp.col_scale.asDiagonal() * ux;
      const double cx = program.c.dot(x);
      if (cx < 0.0) {
        const Vector s = sp.row_scale.cwiseInverse().asDiagonal() * vs;
        const double res = safe_norm(program.a * x + s) / -cx;
        if (res <= settings.eps_infeasible) {
          sol.status = ConeStatus::Unbounded;
          sol.x = x / -cx;
          return sol;
        }
      }
    }
  }
  sol.status = ConeStatus::IterationCap;
  return sol;
}

}  // namespace detail

ConeSolution solve_cone_program(const ConeProgram& program, const ConicSettings& settings) {
  program.validate();
  if (!settings.debug_dump_path.empty()) {
    std::ofstream dump(settings.debug_dump_path);
    write_cone_program(dump, program);
  }
  return settings.algorithm == ConicAlgorithm::Admm ? detail::solve_admm(program, settings)
                                                    : detail::solve_interior_point(program, settings);
}

void write_cone_program(std::ostream& out, const ConeProgram& p) {
  p.validate();
  const auto old_precision = out.precision(17);
  out << "cone_program v1\n";
  out << "dims " << p.a.rows() << ' ' << p.a.cols() << '\n';
  out << "cones " << p.cones.blocks.size() << '\n';
  for (const auto& block : p.cones.blocks) out << to_string(block.kind) << ' ' << block.dim << '\n';
  auto write_vec = [&](const Vector& v) {
    for (Eigen::Index i = 0; i < v.size(); ++i) out << (i ? " " : "") << v(i);
    out << '\n';
  };
  out << "c\n";
  write_vec(p.c);
  out << "b\n";
  write_vec(p.b);
  out << "A\n";
  for (Eigen::Index i = 0; i < p.a.rows(); ++i) write_vec(p.a.row(i).transpose());
  out.precision(old_precision);
}

ConeProgram read_cone_program(std::istream& in) {
  auto expect = [&](const std::string& token) {
    std::string got;
    if (!(in >> got) || got != token)
      throw std::invalid_argument("read_cone_program: expected '" + token + "', got '" + got + "'");
  };
  expect("cone_program");
  expect("v1");
  expect("dims");
  long m = 0, n = 0;
  if (!(in >> m >> n) || m < 0 || n < 0) throw std::invalid_argument("read_cone_program: bad dims");
  expect("cones");
  size_t count = 0;
  if (!(in >> count)) throw std::invalid_argument("read_cone_program: bad cone count");
  ConeProgram p;
  for (size_t i = 0; i < count; ++i) {
    std::string kind;
    int dim = 0;
    if (!(in >> kind >> dim)) throw std::invalid_argument("read_cone_program: bad cone line");
    ConeKind k;
    if (kind == "zero") k = ConeKind::Zero;
    else if (kind == "nonneg") k = ConeKind::Nonneg;
    else if (kind == "soc") k = ConeKind::Soc;
    else if (kind == "psd") k = ConeKind::Psd;
    else throw std::invalid_argument("read_cone_program: unknown cone kind '" + kind + "'");
    p.cones.blocks.push_back({k, dim});
  }
  auto read_vec = [&](Eigen::Index len) {
    Vector v(len);
    for (Eigen::Index i = 0; i < len; ++i)
      if (!(in >> v(i))) throw std::invalid_argument("read_cone_program: truncated data");
    return v;
  };
  expect("c");
  p.c = read_vec(n);
  expect("b");
  p.b = read_vec(m);
  expect("A");
  p.a.resize(m, n);
  for (long i = 0; i < m; ++i) p.a.row(i) = read_vec(n).transpose();
  p.validate();
  return p;
}

}  // namespace robctl
