// Homogeneous self-dual primal-dual interior-point method with
// Nesterov-Todd scaling and a Mehrotra predictor-corrector step, for
//
//   minimize c^T x  s.t.  G x + s = h, s in K,   A x = b  (zero-cone rows).
//
// Second-order cone blocks are handled internally with the scalar first
// (t-first) and converted at the block boundary.

#include <algorithm>
#include <cmath>
#include <limits>

#include "conic_internal.hpp"

namespace robctl::detail {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct Block {
  ConeKind kind;
  int dim;
  Eigen::Index offset;  // within the inequality rows
  int len;
};

Vector soc_to_first(const Eigen::Ref<const Vector>& v) {
  const auto n = v.size();
  Vector out(n);
  out(0) = v(n - 1);
  out.tail(n - 1) = v.head(n - 1);
  return out;
}

void soc_to_last(const Vector& first, Eigen::Ref<Vector> out) {
  const auto n = first.size();
  out(n - 1) = first(0);
  out.head(n - 1) = first.tail(n - 1);
}

// Per-block Nesterov-Todd scaling W with W z = W^-T s = lambda.
struct BlockScaling {
  Vector w;            // nonneg: sqrt(s / z)
  double beta = 1.0;   // soc
  Vector wbar;         // soc, t-first, wbar^T J wbar = 1
  Matrix r, rinv;      // psd: W(U) = R^T U R
  Vector eig;          // psd: diagonal of lambda
};

class Cones {
 public:
  explicit Cones(const std::vector<ConeBlock>& blocks) {
    Eigen::Index offset = 0;
    for (const auto& b : blocks) {
      blocks_.push_back({b.kind, b.dim, offset, b.length()});
      offset += b.length();
      degree_ += b.kind == ConeKind::Nonneg ? b.dim : (b.kind == ConeKind::Soc ? 1 : b.dim);
    }
    length_ = offset;
  }

  Eigen::Index length() const { return length_; }
  int degree() const { return degree_; }
  const std::vector<Block>& blocks() const { return blocks_; }

  Vector identity() const {
    Vector e = Vector::Zero(length_);
    for (const auto& b : blocks_) {
      switch (b.kind) {
        case ConeKind::Nonneg: e.segment(b.offset, b.len).setOnes(); break;
        case ConeKind::Soc: e(b.offset + b.len - 1) = 1.0; break;
        case ConeKind::Psd: e.segment(b.offset, b.len) = psd_vectorize(Matrix::Identity(b.dim, b.dim)); break;
        case ConeKind::Zero: break;
      }
    }
    return e;
  }

  // Smallest "eigenvalue" of x in the Jordan-algebra sense.
  double min_eig(const Vector& x) const {
    double out = kInf;
    for (const auto& b : blocks_) {
      const auto seg = x.segment(b.offset, b.len);
      switch (b.kind) {
        case ConeKind::Nonneg: out = std::min(out, seg.minCoeff()); break;
        case ConeKind::Soc: out = std::min(out, seg(b.len - 1) - seg.head(b.len - 1).norm()); break;
        case ConeKind::Psd: out = std::min(out, min_eigenvalue(psd_unvectorize(seg, b.dim))); break;
        case ConeKind::Zero: break;
      }
    }
    return out;
  }

  // Largest alpha with x + alpha dx in the cone (x interior).
  double max_step(const Vector& x, const Vector& dx) const {
    double out = kInf;
    for (const auto& b : blocks_) {
      const auto xs = x.segment(b.offset, b.len);
      const auto ds = dx.segment(b.offset, b.len);
      switch (b.kind) {
        case ConeKind::Nonneg:
          for (int i = 0; i < b.len; ++i)
            if (ds(i) < 0.0) out = std::min(out, -xs(i) / ds(i));
          break;
        case ConeKind::Soc: out = std::min(out, soc_max_step(soc_to_first(xs), soc_to_first(ds))); break;
        case ConeKind::Psd: {
          const Matrix xm = psd_unvectorize(xs, b.dim);
          const Matrix dm = psd_unvectorize(ds, b.dim);
          Eigen::LLT<Matrix> llt(xm);
          if (llt.info() != Eigen::Success) return 0.0;
          const Matrix l = llt.matrixL();
          Matrix t = llt.matrixL().solve(dm);
          t = llt.matrixL().solve(t.transpose()).transpose();
          const double lmin = min_eigenvalue(symmetrize(t));
          if (lmin < 0.0) out = std::min(out, -1.0 / lmin);
          (void)l;
          break;
        }
        case ConeKind::Zero: break;
      }
    }
    return out;
  }

  // NT scaling of interior s, z. Returns false when a block is not interior.
  bool scaling(const Vector& s, const Vector& z, std::vector<BlockScaling>& out, Vector& lambda) const {
    out.assign(blocks_.size(), {});
    lambda.resize(length_);
    for (size_t k = 0; k < blocks_.size(); ++k) {
      const auto& b = blocks_[k];
      auto& sc = out[k];
      const auto ss = s.segment(b.offset, b.len);
      const auto zs = z.segment(b.offset, b.len);
      switch (b.kind) {
        case ConeKind::Nonneg:
          if ((ss.array() <= 0.0).any() || (zs.array() <= 0.0).any()) return false;
          sc.w = (ss.array() / zs.array()).sqrt();
          lambda.segment(b.offset, b.len) = (ss.array() * zs.array()).sqrt();
          break;
        case ConeKind::Soc: {
          const Vector sf = soc_to_first(ss), zf = soc_to_first(zs);
          const double sn2 = sf(0) * sf(0) - sf.tail(b.len - 1).squaredNorm();
          const double zn2 = zf(0) * zf(0) - zf.tail(b.len - 1).squaredNorm();
          if (sf(0) <= 0.0 || zf(0) <= 0.0 || sn2 <= 0.0 || zn2 <= 0.0) return false;
          const double sn = std::sqrt(sn2), zn = std::sqrt(zn2);
          const Vector sbar = sf / sn, zbar = zf / zn;
          const double gamma = std::sqrt(0.5 * (1.0 + sbar.dot(zbar)));
          Vector wbar(b.len);
          wbar(0) = (sbar(0) + zbar(0)) / (2.0 * gamma);
          wbar.tail(b.len - 1) = (sbar.tail(b.len - 1) - zbar.tail(b.len - 1)) / (2.0 * gamma);
          sc.wbar = wbar;
          sc.beta = std::sqrt(sn / zn);
          Vector lam = soc_apply_w(sc, zf);
          soc_to_last(lam, lambda.segment(b.offset, b.len));
          break;
        }
        case ConeKind::Psd: {
          const Matrix sm = psd_unvectorize(ss, b.dim), zm = psd_unvectorize(zs, b.dim);
          Eigen::LLT<Matrix> ls(sm), lz(zm);
          if (ls.info() != Eigen::Success || lz.info() != Eigen::Success) return false;
          const Matrix l1 = ls.matrixL(), l2 = lz.matrixL();
          Eigen::JacobiSVD<Matrix> svd(l2.transpose() * l1, Eigen::ComputeFullU | Eigen::ComputeFullV);
          const Vector sv = svd.singularValues();
          if (sv.minCoeff() <= 0.0) return false;
          sc.eig = sv;
          sc.r = l1 * svd.matrixV() * sv.cwiseSqrt().cwiseInverse().asDiagonal();
          sc.rinv = sv.cwiseSqrt().asDiagonal() * svd.matrixV().transpose() *
                    l1.triangularView<Eigen::Lower>().solve(Matrix::Identity(b.dim, b.dim));
          lambda.segment(b.offset, b.len) = psd_vectorize(Matrix(sv.asDiagonal()));
          break;
        }
        case ConeKind::Zero: break;
      }
    }
    return true;
  }

  enum class Op { W, WT, Winv, WinvT };

  Vector apply(const std::vector<BlockScaling>& scal, Op op, const Vector& v) const {
    Vector out(length_);
    for (size_t k = 0; k < blocks_.size(); ++k) {
      const auto& b = blocks_[k];
      const auto& sc = scal[k];
      const auto seg = v.segment(b.offset, b.len);
      switch (b.kind) {
        case ConeKind::Nonneg:
          if (op == Op::W || op == Op::WT) out.segment(b.offset, b.len) = sc.w.cwiseProduct(seg);
          else out.segment(b.offset, b.len) = seg.cwiseQuotient(sc.w);
          break;
        case ConeKind::Soc: {
          const Vector f = soc_to_first(seg);
          const Vector g = (op == Op::W || op == Op::WT) ? soc_apply_w(sc, f) : soc_apply_winv(sc, f);
          soc_to_last(g, out.segment(b.offset, b.len));
          break;
        }
        case ConeKind::Psd: {
          const Matrix u = psd_unvectorize(seg, b.dim);
          Matrix res;
          switch (op) {
            case Op::W: res = sc.r.transpose() * u * sc.r; break;
            case Op::WT: res = sc.r * u * sc.r.transpose(); break;
            case Op::Winv: res = sc.rinv.transpose() * u * sc.rinv; break;
            case Op::WinvT: res = sc.rinv * u * sc.rinv.transpose(); break;
          }
          out.segment(b.offset, b.len) = psd_vectorize(symmetrize(res));
          break;
        }
        case ConeKind::Zero: break;
      }
    }
    return out;
  }

  // Jordan product u o v.
  Vector product(const Vector& u, const Vector& v) const {
    Vector out(length_);
    for (const auto& b : blocks_) {
      const auto us = u.segment(b.offset, b.len), vs = v.segment(b.offset, b.len);
      switch (b.kind) {
        case ConeKind::Nonneg: out.segment(b.offset, b.len) = us.cwiseProduct(vs); break;
        case ConeKind::Soc: {
          const Vector uf = soc_to_first(us), vf = soc_to_first(vs);
          Vector r(b.len);
          r(0) = uf.dot(vf);
          r.tail(b.len - 1) = uf(0) * vf.tail(b.len - 1) + vf(0) * uf.tail(b.len - 1);
          soc_to_last(r, out.segment(b.offset, b.len));
          break;
        }
        case ConeKind::Psd: {
          const Matrix um = psd_unvectorize(us, b.dim), vm = psd_unvectorize(vs, b.dim);
          out.segment(b.offset, b.len) = psd_vectorize(0.5 * (um * vm + vm * um));
          break;
        }
        case ConeKind::Zero: break;
      }
    }
    return out;
  }

  // Solves lambda o x = d for x, with lambda the current scaled point.
  Vector divide(const std::vector<BlockScaling>& scal, const Vector& lambda, const Vector& d) const {
    Vector out(length_);
    for (size_t k = 0; k < blocks_.size(); ++k) {
      const auto& b = blocks_[k];
      const auto ls = lambda.segment(b.offset, b.len), ds = d.segment(b.offset, b.len);
      switch (b.kind) {
        case ConeKind::Nonneg: out.segment(b.offset, b.len) = ds.cwiseQuotient(ls); break;
        case ConeKind::Soc: {
          const Vector lf = soc_to_first(ls), df = soc_to_first(ds);
          const double det = lf(0) * lf(0) - lf.tail(b.len - 1).squaredNorm();
          Vector r(b.len);
          r(0) = (lf(0) * df(0) - lf.tail(b.len - 1).dot(df.tail(b.len - 1))) / det;
          r.tail(b.len - 1) = (df.tail(b.len - 1) - r(0) * lf.tail(b.len - 1)) / lf(0);
          soc_to_last(r, out.segment(b.offset, b.len));
          break;
        }
        case ConeKind::Psd: {
          const Vector& e = scal[k].eig;
          Matrix dm = psd_unvectorize(ds, b.dim);
          for (int i = 0; i < b.dim; ++i)
            for (int j = 0; j < b.dim; ++j) dm(i, j) *= 2.0 / (e(i) + e(j));
          out.segment(b.offset, b.len) = psd_vectorize(dm);
          break;
        }
        case ConeKind::Zero: break;
      }
    }
    return out;
  }

 private:
  static double soc_max_step(const Vector& x, const Vector& d) {
    // q(alpha) = (x0 + alpha d0)^2 - ||x1 + alpha d1||^2 = a alpha^2 + 2 b alpha + c, c > 0.
    const auto n = x.size();
    const double a = d(0) * d(0) - d.tail(n - 1).squaredNorm();
    const double bb = x(0) * d(0) - x.tail(n - 1).dot(d.tail(n - 1));
    const double c = x(0) * x(0) - x.tail(n - 1).squaredNorm();
    double step = kInf;
    if (d(0) < 0.0) step = -x(0) / d(0);
    if (a == 0.0) {
      if (bb < 0.0) step = std::min(step, -c / (2.0 * bb));
      return step;
    }
    const double disc = bb * bb - a * c;
    if (disc < 0.0) return step;  // no real root: q keeps its sign (a > 0)
    const double sq = std::sqrt(disc);
    // Roots of a t^2 + 2 b t + c; use the cancellation-free pair.
    const double qq = -(bb + std::copysign(sq, bb));
    double r1 = qq / a;
    double r2 = qq != 0.0 ? c / qq : kInf;
    for (double r : {r1, r2})
      if (r > 0.0) step = std::min(step, r);
    return step;
  }

  static Vector soc_apply_w(const BlockScaling& sc, const Vector& u) {
    const auto n = u.size();
    const double w0 = sc.wbar(0);
    const auto w1 = sc.wbar.tail(n - 1);
    const double t = w1.dot(u.tail(n - 1));
    Vector out(n);
    out(0) = w0 * u(0) + t;
    out.tail(n - 1) = u(0) * w1 + u.tail(n - 1) + (t / (1.0 + w0)) * w1;
    return sc.beta * out;
  }

  static Vector soc_apply_winv(const BlockScaling& sc, const Vector& u) {
    const auto n = u.size();
    const double w0 = sc.wbar(0);
    const auto w1 = sc.wbar.tail(n - 1);
    const double t = w1.dot(u.tail(n - 1));
    Vector out(n);
    out(0) = w0 * u(0) - t;
    out.tail(n - 1) = -u(0) * w1 + u.tail(n - 1) + (t / (1.0 + w0)) * w1;
    return out / sc.beta;
  }

  std::vector<Block> blocks_;
  Eigen::Index length_ = 0;
  int degree_ = 0;
};

// Solves  [0 A^T G^T; A 0 0; G 0 -W^T W] [x; y; z] = [bx; by; bz].
class KktSolver {
 public:
  KktSolver(const Matrix& a, const Matrix& g, const Cones& cones) : a_(a), g_(g), cones_(cones) {}

  bool factor(const std::vector<BlockScaling>* scal) {
    scal_ = scal;
    const auto n = g_.cols();
    ghat_.resize(g_.rows(), n);
    for (Eigen::Index j = 0; j < n; ++j) ghat_.col(j) = winvt(g_.col(j));
    // H = [Ghat; A]^T [Ghat; A] = R^T R from a QR factorization, so the
    // normal matrix is never formed.
    Matrix stacked(ghat_.rows() + a_.rows(), n);
    stacked << ghat_, a_;
    Eigen::HouseholderQR<Matrix> qr(stacked);
    r_ = qr.matrixQR().topRows(n).triangularView<Eigen::Upper>();
    const double rmax = r_.diagonal().cwiseAbs().maxCoeff();
    if (!(rmax > 0.0) || !r_.allFinite()) return false;
    for (Eigen::Index i = 0; i < n; ++i)
      if (std::abs(r_(i, i)) < 1e-14 * rmax) r_(i, i) = std::copysign(1e-14 * rmax, r_(i, i) == 0.0 ? 1.0 : r_(i, i));
    if (a_.rows() > 0) {
      // A H^-1 A^T = T^T T with T = R^-T A^T.
      const Matrix t = r_.transpose().triangularView<Eigen::Lower>().solve(a_.transpose());
      schur_.compute(t.transpose() * t);
      if (schur_.info() != Eigen::Success) return false;
    }
    return true;
  }

  void solve(const Vector& bx, const Vector& by, const Vector& bz, Vector& x, Vector& y, Vector& z) const {
    solve_once(bx, by, bz, x, y, z);
    for (int refine = 0; refine < 3; ++refine) {
      Vector rx = bx, ry = by, rz = bz;
      if (a_.rows() > 0) rx -= a_.transpose() * y;
      rx -= g_.transpose() * z;
      if (a_.rows() > 0) ry -= a_ * x;
      rz -= g_ * x - wtw(z);
      const double scale = 1.0 + bx.lpNorm<Eigen::Infinity>() +
                           (by.size() ? by.lpNorm<Eigen::Infinity>() : 0.0) + bz.lpNorm<Eigen::Infinity>();
      const double err = rx.lpNorm<Eigen::Infinity>() + (ry.size() ? ry.lpNorm<Eigen::Infinity>() : 0.0) +
                         rz.lpNorm<Eigen::Infinity>();
      if (err <= 1e-14 * scale) break;
      Vector dx, dy, dz;
      solve_once(rx, ry, rz, dx, dy, dz);
      x += dx;
      y += dy;
      z += dz;
    }
  }

 private:
  Vector winvt(const Vector& v) const {
    return scal_ ? cones_.apply(*scal_, Cones::Op::WinvT, v) : v;
  }
  Vector winv(const Vector& v) const { return scal_ ? cones_.apply(*scal_, Cones::Op::Winv, v) : v; }
  Vector wtw(const Vector& v) const {
    return scal_ ? cones_.apply(*scal_, Cones::Op::WT, cones_.apply(*scal_, Cones::Op::W, v)) : v;
  }

  Vector hsolve(const Vector& v) const {
    const Vector w = r_.transpose().triangularView<Eigen::Lower>().solve(v);
    return r_.triangularView<Eigen::Upper>().solve(w);
  }

  void solve_once(const Vector& bx, const Vector& by, const Vector& bz, Vector& x, Vector& y, Vector& z) const {
    // z = W^-1 W^-T (G x - bz);  (G^T W^-1 W^-T G) x + A^T y = bx + G^T W^-1 W^-T bz.
    const Vector bzhat = winvt(bz);
    Vector r1 = bx + ghat_.transpose() * bzhat;
    if (a_.rows() > 0) {
      const Vector rhs = r1 + a_.transpose() * by;
      const Vector t = hsolve(rhs);
      y = schur_.solve(a_ * t - by);
      x = hsolve(rhs - a_.transpose() * y);
    } else {
      y.resize(0);
      x = hsolve(r1);
    }
    z = winv(ghat_ * x - bzhat);
  }

  const Matrix& a_;
  const Matrix& g_;
  const Cones& cones_;
  const std::vector<BlockScaling>* scal_ = nullptr;
  Matrix ghat_;
  Matrix r_;
  Eigen::LDLT<Matrix> schur_;
};

}  // namespace

ConeSolution solve_interior_point(const ConeProgram& program, const ConicSettings& settings) {
  const auto m = program.a.rows();
  const auto n = program.a.cols();

  // Split rows into equality (zero cone) and conic inequality parts.
  std::vector<Eigen::Index> eq_rows, in_rows;
  std::vector<ConeBlock> in_blocks;
  {
    Eigen::Index offset = 0;
    for (const auto& b : program.cones.blocks) {
      for (int i = 0; i < b.length(); ++i) (b.kind == ConeKind::Zero ? eq_rows : in_rows).push_back(offset + i);
      if (b.kind != ConeKind::Zero) in_blocks.push_back(b);
      offset += b.length();
    }
  }
  const auto p = static_cast<Eigen::Index>(eq_rows.size());
  const auto mi = static_cast<Eigen::Index>(in_rows.size());
  Matrix a(p, n), g(mi, n);
  Vector b(p), h(mi);
  for (Eigen::Index i = 0; i < p; ++i) {
    a.row(i) = program.a.row(eq_rows[i]);
    b(i) = program.b(eq_rows[i]);
  }
  for (Eigen::Index i = 0; i < mi; ++i) {
    g.row(i) = program.a.row(in_rows[i]);
    h(i) = program.b(in_rows[i]);
  }
  const Vector& c = program.c;
  const Cones cones(in_blocks);
  const Vector e = cones.identity();

  auto assemble = [&](const Vector& yv, const Vector& zv, const Vector& sv, Vector& y_full, Vector& s_full) {
    y_full = Vector::Zero(m);
    s_full = Vector::Zero(m);
    for (Eigen::Index i = 0; i < p; ++i) y_full(eq_rows[i]) = yv(i);
    for (Eigen::Index i = 0; i < mi; ++i) {
      y_full(in_rows[i]) = zv(i);
      s_full(in_rows[i]) = sv(i);
    }
  };

  ConeSolution sol;
  KktSolver kkt(a, g, cones);
  if (!kkt.factor(nullptr)) throw NumericalError("interior point: [A; G] does not have full column rank");

  // Starting point.
  Vector x, y, z, s;
  {
    Vector x0, y0, z0;
    kkt.solve(Vector::Zero(n), b, h, x0, y0, z0);
    x = x0;
    s = -z0;
    Vector x1, y1, z1;
    kkt.solve(-c, Vector::Zero(p), Vector::Zero(mi), x1, y1, z1);
    y = y1;
    z = z1;
    if (mi > 0) {
      const double ap = -cones.min_eig(s);
      if (ap >= -1e-8 * std::max(1.0, s.norm())) s += (1.0 + std::max(ap, 0.0)) * e;
      const double ad = -cones.min_eig(z);
      if (ad >= -1e-8 * std::max(1.0, z.norm())) z += (1.0 + std::max(ad, 0.0)) * e;
    }
  }
  double tau = 1.0, kappa = 1.0;
  const int degree = cones.degree();

  std::vector<BlockScaling> scal;
  Vector lambda;
  for (int it = 0; it <= settings.ipm_max_iters; ++it) {
    sol.iterations = it;
    // Convergence on the normalized iterate.
    {
      Vector y_full, s_full;
      assemble(y / tau, z / tau, s / tau, y_full, s_full);
      const Vector xn = x / tau;
      const KktResiduals r = kkt_residuals(program, xn, y_full, s_full);
      sol.x = xn;
      sol.y = y_full;
      sol.s = s_full;
      sol.primal_residual = r.primal;
      sol.dual_residual = r.dual;
      sol.gap = r.gap;
      sol.objective = r.objective;
      sol.dual_objective = r.dual_objective;
      if (r.primal <= settings.eps && r.dual <= settings.eps && r.gap <= settings.eps) {
        sol.status = ConeStatus::Optimal;
        return sol;
      }
      // Certificates on the unnormalized iterate.
      Vector yc, sc_unused;
      assemble(y, z, s, yc, sc_unused);
      const double by = program.b.dot(yc);
      if (by < 0.0 && (program.a.transpose() * yc).norm() / -by <= settings.eps_infeasible) {
        sol.status = ConeStatus::Infeasible;
        sol.y = yc / -by;
        return sol;
      }
      const double cx = c.dot(x);
      if (cx < 0.0) {
        Vector s_full_raw, y_unused;
        assemble(y, z, s, y_unused, s_full_raw);
        if ((program.a * x + s_full_raw).norm() / -cx <= settings.eps_infeasible) {
          sol.status = ConeStatus::Unbounded;
          sol.x = x / -cx;
          return sol;
        }
      }
    }
    if (it == settings.ipm_max_iters) break;

    if (!cones.scaling(s, z, scal, lambda)) break;
    if (!kkt.factor(&scal)) break;

    const Vector rx = (p > 0 ? Vector(a.transpose() * y) : Vector::Zero(n)) + g.transpose() * z + c * tau;
    const Vector ry = (p > 0 ? Vector(-a * x + b * tau) : Vector::Zero(0));
    const Vector rz = s + g * x - h * tau;
    const double rt = kappa + c.dot(x) + b.dot(y) + h.dot(z);
    const double mu = (s.dot(z) + tau * kappa) / (degree + 1);

    Vector x2, y2, z2;
    kkt.solve(-c, b, h, x2, y2, z2);

    Vector dsa, dza;  // scaled affine directions
    double dtau_a = 0.0, dkappa_a = 0.0, sigma = 0.0;
    Vector dx, dy, dz, ds;
    double dtau = 0.0, dkappa = 0.0, step = 0.0;
    bool failed = false;
    for (int pass = 0; pass < 2; ++pass) {
      const bool affine = pass == 0;
      const double f = affine ? 1.0 : 1.0 - sigma;
      Vector dcomp = -cones.product(lambda, lambda);
      double dk = -tau * kappa;
      if (!affine) {
        dcomp -= cones.product(dsa, dza);
        dcomp += sigma * mu * e;
        dk += -dtau_a * dkappa_a + sigma * mu;
      }
      const Vector ldiv = cones.divide(scal, lambda, dcomp);
      const Vector wt_ldiv = cones.apply(scal, Cones::Op::WT, ldiv);
      Vector x1, y1, z1;
      kkt.solve(-f * rx, f * ry, -f * rz - wt_ldiv, x1, y1, z1);
      const double denom = -kappa / tau + c.dot(x2) + b.dot(y2) + h.dot(z2);
      dtau = (-f * rt - dk / tau - c.dot(x1) - b.dot(y1) - h.dot(z1)) / denom;
      dx = x1 + dtau * x2;
      dy = y1 + dtau * y2;
      dz = z1 + dtau * z2;
      ds = wt_ldiv - cones.apply(scal, Cones::Op::WT, cones.apply(scal, Cones::Op::W, dz));
      dkappa = (dk - kappa * dtau) / tau;
      if (!dx.allFinite() || !dz.allFinite() || !ds.allFinite() || !std::isfinite(dtau)) {
        failed = true;
        break;
      }
      double amax = std::min(cones.max_step(s, ds), cones.max_step(z, dz));
      if (dtau < 0.0) amax = std::min(amax, -tau / dtau);
      if (dkappa < 0.0) amax = std::min(amax, -kappa / dkappa);
      if (affine) {
        const double aa = std::min(1.0, amax);
        sigma = std::pow(1.0 - aa, 3.0);
        dsa = cones.apply(scal, Cones::Op::WinvT, ds);
        dza = cones.apply(scal, Cones::Op::W, dz);
        dtau_a = dtau;
        dkappa_a = dkappa;
      } else {
        step = std::min(1.0, settings.ipm_step_fraction * amax);
      }
    }
    if (failed || step <= 1e-12) break;
    x += step * dx;
    y += step * dy;
    z += step * dz;
    s += step * ds;
    tau += step * dtau;
    kappa += step * dkappa;
  }
  sol.status = ConeStatus::IterationCap;
  return sol;
}

}  // namespace robctl::detail
