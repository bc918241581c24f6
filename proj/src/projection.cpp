#include "robctl/projection.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace robctl {

namespace {

Vector project_cone(const Vector& v, DualCone cone) {
  if (cone == DualCone::Nonneg) return v.cwiseMax(0.0);
  const auto n = v.size();
  auto [w, t] = soc_cone_point_projection(v.head(n - 1), v(n - 1));
  Vector out(n);
  out.head(n - 1) = w;
  out(n - 1) = t;
  return out;
}

Matrix cone_jacobian(const Vector& v, DualCone cone) {
  if (cone == DualCone::Nonneg) return (v.array() > 0.0).cast<double>().matrix().asDiagonal();
  return soc_projection_jacobian(v);
}

double cone_violation(const Vector& v, DualCone cone) {
  if (cone == DualCone::Nonneg) return std::max(0.0, -v.minCoeff());
  const auto n = v.size();
  return std::max(0.0, v.head(n - 1).norm() - v(n - 1));
}

}  // namespace

std::pair<Vector, double> soc_cone_point_projection(const Vector& w, double t) {
  const double nw = w.norm();
  if (nw <= t) return {w, t};
  if (nw <= -t) return {Vector::Zero(w.size()), 0.0};
  const double scale = 0.5 * (nw + t);
  return {(scale / nw) * w, scale};
}

Matrix soc_projection_jacobian(const Vector& v) {
  const auto n = v.size();
  const Vector w = v.head(n - 1);
  const double t = v(n - 1);
  const double nw = w.norm();
  if (nw <= t) return Matrix::Identity(n, n);
  if (nw <= -t) return Matrix::Zero(n, n);
  const Vector wb = w / nw;
  Matrix j(n, n);
  j.topLeftCorner(n - 1, n - 1) =
      0.5 * (1.0 + t / nw) * Matrix::Identity(n - 1, n - 1) - 0.5 * (t / nw) * wb * wb.transpose();
  j.topRightCorner(n - 1, 1) = 0.5 * wb;
  j.bottomLeftCorner(1, n - 1) = 0.5 * wb.transpose();
  j(n - 1, n - 1) = 0.5;
  return j;
}

HalfspaceProjection project_halfspace(const Vector& u_hat, const Halfspace& hs) {
  if (hs.eta.size() != u_hat.size()) throw std::invalid_argument("project_halfspace: dimension mismatch");
  if (hs.degenerate()) {
    if (hs.zeta < 0.0) throw std::runtime_error("project_halfspace: empty set (eta = 0, zeta < 0)");
    return {u_hat, false};
  }
  const double r = hs.eta.dot(u_hat) - hs.zeta;
  if (r <= 0.0) return {u_hat, false};
  return {u_hat - (r / hs.eta.squaredNorm()) * hs.eta, true};
}

HalfspaceGradients project_halfspace_backward(const Vector& u_hat, const Halfspace& hs,
                                              const HalfspaceProjection& forward, const Vector& d_u) {
  HalfspaceGradients out;
  if (!forward.active) {
    out.d_u_hat = d_u;
    out.d_eta = Vector::Zero(hs.eta.size());
    return out;
  }
  const double n = hs.eta.squaredNorm();
  const double lambda = (hs.eta.dot(u_hat) - hs.zeta) / n;
  const double eg = hs.eta.dot(d_u) / n;
  out.d_u_hat = d_u - eg * hs.eta;
  out.d_zeta = eg;
  out.d_eta = -eg * u_hat - lambda * d_u + 2.0 * lambda * eg * hs.eta;
  return out;
}

ProjectionResult project_dual(const Vector& y, const Matrix& g, const Vector& h, DualCone cone,
                              const ProjectionSettings& settings) {
  if (g.cols() != y.size() || g.rows() != h.size() || g.rows() == 0)
    throw std::invalid_argument("project_dual: dimension mismatch");
  if (cone == DualCone::Soc && g.rows() < 1) throw std::invalid_argument("project_dual: empty cone");

  ProjectionResult res;
  res.cone = cone;
  res.g = g;
  res.h = h;
  res.y = y;
  const auto m = g.rows();

  const Matrix ggt = g * g.transpose();
  const Vector lin = g * y + h;
  const Vector ev = Eigen::SelfAdjointEigenSolver<Matrix>(ggt, Eigen::EigenvaluesOnly).eigenvalues();
  const double lf = ev.maxCoeff();
  const double mf = std::max(ev.minCoeff(), 0.0);
  res.lipschitz = lf;

  if (!(lf > 0.0)) {
    // G = 0: the constraint is h in F, independent of u.
    if (cone_violation(h, cone) > 0.0) throw std::runtime_error("project_dual: empty constraint set");
    res.u = y;
    res.mu = Vector::Zero(m);
    res.converged = true;
    res.jacobian = Matrix::Zero(m, m);
    return res;
  }

  const bool strongly_convex = mf > settings.strong_convexity_floor;
  const double beta_const = strongly_convex ? (std::sqrt(lf) - std::sqrt(mf)) / (std::sqrt(lf) + std::sqrt(mf)) : 0.0;

  Vector mu = settings.warm_start ? *settings.warm_start : Vector::Zero(m);
  if (mu.size() != m) throw std::invalid_argument("project_dual: warm start has the wrong size");
  Vector mu_prev = mu;
  int k = 0;
  int since_restart = 0;
  for (; k < settings.max_iters; ++k, ++since_restart) {
    const int j = since_restart;
    const double beta = strongly_convex ? beta_const : (j >= 1 ? double(j - 1) / double(j + 2) : 0.0);
    const Vector nu = mu + beta * (mu - mu_prev);
    Vector next = project_cone(nu - (ggt * nu + lin) / lf, cone);
    if (settings.adaptive_restart && beta > 0.0 && (nu - next).dot(next - mu) > 0.0) {
      // Momentum points uphill: drop it and take a plain projected step from mu.
      next = project_cone(mu - (ggt * mu + lin) / lf, cone);
      since_restart = 0;
    }
    mu_prev = mu;
    mu = next;
    if ((mu - mu_prev).norm() <= settings.tol) {
      res.converged = true;
      ++k;
      break;
    }
  }
  res.iterations = k;
  res.mu = mu;
  res.u = y + g.transpose() * mu;
  res.primal_residual = cone_violation(g * res.u + h, cone);
  res.jacobian = cone_jacobian(mu - (ggt * mu + lin) / lf, cone);
  return res;
}

ProjectionGradients project_dual_backward(const ProjectionResult& ctx, const Vector& d_u) {
  if (d_u.size() != ctx.u.size()) throw std::invalid_argument("project_dual_backward: dimension mismatch");
  const auto m = ctx.g.rows();
  ProjectionGradients out;
  out.inexact = !ctx.converged;
  if (!(ctx.lipschitz > 0.0)) {
    out.d_g = Matrix::Zero(m, ctx.g.cols());
    out.d_h = Vector::Zero(m);
    out.d_y = d_u;
    return out;
  }
  const Matrix& mj = ctx.jacobian;
  const double lf = ctx.lipschitz;
  const Vector g_mu = ctx.g * d_u;
  const Matrix j = Matrix::Identity(m, m) - mj + mj * ctx.g * ctx.g.transpose() / lf;
  const Matrix jt = j.transpose();
  Eigen::FullPivLU<Matrix> lu(jt);
  Vector d_mu;
  if (lu.isInvertible() && lu.rcond() > 1e-12) {
    d_mu = -lu.solve(g_mu);
  } else {
    d_mu = -Eigen::CompleteOrthogonalDecomposition<Matrix>(jt).solve(g_mu);
    out.least_squares_fallback = true;
  }
  const Vector v = mj.transpose() * d_mu;
  const Vector gt_mu = ctx.g.transpose() * ctx.mu;
  const Vector gt_v = ctx.g.transpose() * v;
  out.d_g = ctx.mu * d_u.transpose() +
            (v * gt_mu.transpose() + ctx.mu * gt_v.transpose() + v * ctx.y.transpose()) / lf;
  out.d_h = v / lf;
  out.d_y = d_u + gt_v / lf;
  return out;
}

ProjectionResult project_soc_forward(const Vector& y, const SocConstraint& c, const ProjectionSettings& settings) {
  c.validate();
  if (c.actions() != y.size()) throw std::invalid_argument("project_soc_forward: dimension mismatch");
  const auto m = c.a.rows();
  Matrix g(m + 1, y.size());
  g << c.a, c.c.transpose();
  Vector h(m + 1);
  h << c.b, c.d;
  return project_dual(y, g, h, DualCone::Soc, settings);
}

ProjectionGradients project_soc_backward(const ProjectionResult& ctx, const Vector& d_u) {
  return project_dual_backward(ctx, d_u);
}

SocConstraint unstack_soc_gradient(const ProjectionGradients& grads) {
  const auto m = grads.d_g.rows() - 1;
  SocConstraint out;
  out.a = grads.d_g.topRows(m);
  out.c = grads.d_g.row(m).transpose();
  out.b = grads.d_h.head(m);
  out.d = grads.d_h(m);
  return out;
}

ProjectionResult project_polyhedron_forward(const Vector& y, const Polyhedron& p, const ProjectionSettings& settings) {
  if (p.h.cols() != y.size() || p.h.rows() != p.g.size())
    throw std::invalid_argument("project_polyhedron_forward: dimension mismatch");
  return project_dual(y, -p.h, p.g, DualCone::Nonneg, settings);
}

ProjectionGradients project_polyhedron_backward(const ProjectionResult& ctx, const Vector& d_u) {
  return project_dual_backward(ctx, d_u);
}

Polyhedron unstack_polyhedron_gradient(const ProjectionGradients& grads) { return {-grads.d_g, grads.d_h}; }

}  // namespace robctl
