#include "robctl/safesets.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace robctl {

namespace {

void require_state(const Matrix& P, const Vector& x, const char* who) {
  if (x.size() != P.rows()) throw std::invalid_argument(std::string(who) + ": state has the wrong dimension");
  if (!x.allFinite()) throw std::invalid_argument(std::string(who) + ": state is not finite");
}

double quad(const Matrix& m, const Vector& x) { return x.dot(m * x); }

}  // namespace

double SocConstraint::violation(const Vector& u) const { return (a * u + b).norm() - (c.dot(u) + d); }

void SocConstraint::validate() const {
  if (a.rows() != b.size() || a.cols() != c.size())
    throw std::invalid_argument("SocConstraint: inconsistent dimensions");
  if (!a.allFinite() || !b.allFinite() || !c.allFinite() || !std::isfinite(d))
    throw std::invalid_argument("SocConstraint: non-finite data");
}

SocConstraint nldi_safe_set(const RobustCertificate& cert, const NldiSystem& sys, const Vector& x) {
  require_state(cert.P, x, "nldi_safe_set");
  const Vector px = cert.P * x;
  const double gn = (sys.G.transpose() * px).norm();
  SocConstraint out;
  out.a = gn * sys.D;
  out.b = gn * (sys.C * x);
  out.c = -sys.B.transpose() * px;
  out.d = -0.5 * x.dot(2.0 * sys.A.transpose() * px + cert.alpha * px);
  return out;
}

Halfspace nldi0_halfspace(const RobustCertificate& cert, const NldiSystem& sys, const Vector& x) {
  require_state(cert.P, x, "nldi0_halfspace");
  if (!sys.has_zero_d()) throw std::invalid_argument("nldi0_halfspace: system has D != 0");
  const Vector px = cert.P * x;
  Halfspace out;
  out.eta = 2.0 * sys.B.transpose() * px;
  out.zeta = -x.dot(2.0 * sys.A.transpose() * px + cert.alpha * px) -
             2.0 * (sys.G.transpose() * px).norm() * (sys.C * x).norm();
  return out;
}

Polyhedron pldi_polyhedron(const RobustCertificate& cert, const PldiSystem& sys, const Vector& x) {
  require_state(cert.P, x, "pldi_polyhedron");
  const Vector px = cert.P * x;
  Polyhedron out;
  out.h.resize(sys.vertices(), sys.actions());
  out.g.resize(sys.vertices());
  for (int i = 0; i < sys.vertices(); ++i) {
    out.h.row(i) = 2.0 * (sys.B[i].transpose() * px).transpose();
    out.g(i) = -x.dot(cert.alpha * px + 2.0 * sys.A[i].transpose() * px);
  }
  return out;
}

HinfSafeSet hinf_soc(const RobustCertificate& cert, const HinfSystem& sys, const Vector& x) {
  require_state(cert.P, x, "hinf_soc");
  if (!cert.multiplier) throw std::invalid_argument("hinf_soc: certificate has no sigma");
  const double sigma = *cert.multiplier;
  const Vector px = cert.P * x;
  const Matrix pt = sigma * symmetrize(sys.R);
  const Vector q = sys.B.transpose() * px;
  const Vector gpx = sys.G.transpose() * px;
  const double r = 2.0 * x.dot(sys.A.transpose() * px) + cert.alpha * x.dot(px) + sigma * quad(sys.Q, x) +
                   gpx.squaredNorm() / (sigma * sys.gamma * sys.gamma);
  const Eigen::LLT<Matrix> llt(pt);
  if (llt.info() != Eigen::Success) throw std::invalid_argument("hinf_soc: sigma R is not positive definite");
  const Vector center = -llt.solve(q);
  const double qpq = -q.dot(center);
  const double radius = qpq - r;
  if (radius < -1e-9 * (1.0 + std::abs(qpq) + std::abs(r)))
    throw std::runtime_error("hinf_soc: empty ellipsoid (certificate violated at this state, radius " +
                             std::to_string(radius) + ")");
  if (radius <= kDegenerateEllipsoid) return SingletonSet{center};
  SocConstraint out;
  out.a = psd_sqrt(pt / radius);
  out.b = -(out.a * center);
  out.c = Vector::Zero(sys.actions());
  out.d = 1.0;
  return out;
}

namespace {

// d ||G^T P x|| / dx
Vector disturbance_gain_gradient(const Matrix& P, const Matrix& G, const Vector& x) {
  const Vector gpx = G.transpose() * (P * x);
  const double gn = gpx.norm();
  if (gn == 0.0) return Vector::Zero(x.size());
  return P * (G * gpx) / gn;
}

struct HinfTerms {
  double sigma;
  Matrix pt;       // sigma R
  Matrix pt_sqrt;  // S = (sigma R)^1/2
  Eigen::LLT<Matrix> llt;
  Vector q;
  Matrix n;  // r = x^T N x
  double radius;
};

HinfTerms hinf_terms(const RobustCertificate& cert, const HinfSystem& sys, const Vector& x) {
  HinfTerms t;
  t.sigma = cert.multiplier.value();
  t.pt = t.sigma * symmetrize(sys.R);
  t.llt.compute(t.pt);
  t.q = sys.B.transpose() * (cert.P * x);
  const Matrix pa = cert.P * sys.A;
  const Matrix pg = cert.P * sys.G;
  t.n = symmetrize(pa + pa.transpose() + cert.alpha * cert.P + t.sigma * sys.Q +
                   pg * pg.transpose() / (t.sigma * sys.gamma * sys.gamma));
  t.radius = t.q.dot(t.llt.solve(t.q)) - quad(t.n, x);
  return t;
}

}  // namespace

Vector nldi_safe_set_vjp(const RobustCertificate& cert, const NldiSystem& sys, const Vector& x,
                         const SocConstraint& grad) {
  require_state(cert.P, x, "nldi_safe_set_vjp");
  const double gn = (sys.G.transpose() * (cert.P * x)).norm();
  const Vector dgn = disturbance_gain_gradient(cert.P, sys.G, x);
  const Matrix m = 2.0 * cert.P * sys.A + cert.alpha * cert.P;
  Vector dx = (grad.a.cwiseProduct(sys.D).sum() + grad.b.dot(sys.C * x)) * dgn;
  dx += gn * sys.C.transpose() * grad.b;
  dx -= cert.P * (sys.B * grad.c);
  dx -= 0.5 * grad.d * (m + m.transpose()) * x;
  return dx;
}

Vector nldi0_halfspace_vjp(const RobustCertificate& cert, const NldiSystem& sys, const Vector& x,
                           const Vector& d_eta, double d_zeta) {
  require_state(cert.P, x, "nldi0_halfspace_vjp");
  const double gn = (sys.G.transpose() * (cert.P * x)).norm();
  const Vector cx = sys.C * x;
  const double ncx = cx.norm();
  const Matrix m = 2.0 * cert.P * sys.A + cert.alpha * cert.P;
  Vector dzeta = -(m + m.transpose()) * x - 2.0 * ncx * disturbance_gain_gradient(cert.P, sys.G, x);
  if (ncx > 0.0) dzeta -= 2.0 * gn * sys.C.transpose() * cx / ncx;
  return 2.0 * cert.P * (sys.B * d_eta) + d_zeta * dzeta;
}

Vector pldi_polyhedron_vjp(const RobustCertificate& cert, const PldiSystem& sys, const Vector& x,
                           const Polyhedron& grad) {
  require_state(cert.P, x, "pldi_polyhedron_vjp");
  Vector dx = Vector::Zero(x.size());
  for (int i = 0; i < sys.vertices(); ++i) {
    const Matrix m = cert.alpha * cert.P + 2.0 * cert.P * sys.A[i];
    dx += 2.0 * cert.P * (sys.B[i] * grad.h.row(i).transpose());
    dx -= grad.g(i) * (m + m.transpose()) * x;
  }
  return dx;
}

Vector hinf_soc_vjp(const RobustCertificate& cert, const HinfSystem& sys, const Vector& x, const SocConstraint& grad) {
  require_state(cert.P, x, "hinf_soc_vjp");
  const HinfTerms t = hinf_terms(cert, sys, x);
  if (t.radius <= kDegenerateEllipsoid) throw std::invalid_argument("hinf_soc_vjp: ellipsoid is degenerate at x");
  // A = k S, b = k S^-1 q with k = radius^-1/2.
  const Matrix s = psd_sqrt(t.pt);
  const Eigen::LLT<Matrix> s_llt(s);
  const Vector sinv_q = s_llt.solve(t.q);
  const double k = 1.0 / std::sqrt(t.radius);
  const double dk = grad.a.cwiseProduct(s).sum() + grad.b.dot(sinv_q);
  const Vector d_q = k * s_llt.solve(grad.b);
  const Vector grad_radius = 2.0 * cert.P * (sys.B * t.llt.solve(t.q)) - 2.0 * t.n * x;
  return cert.P * (sys.B * d_q) - 0.5 * std::pow(t.radius, -1.5) * dk * grad_radius;
}

Vector hinf_singleton_vjp(const RobustCertificate& cert, const HinfSystem& sys, const Vector& d_u) {
  if (!cert.multiplier) throw std::invalid_argument("hinf_singleton_vjp: certificate has no sigma");
  const Matrix pt = *cert.multiplier * symmetrize(sys.R);
  return -cert.P * (sys.B * pt.llt().solve(d_u));
}

double nldi_worst_case_decrease(const RobustCertificate& cert, const NldiSystem& sys, const Vector& x,
                                const Vector& u) {
  const Vector px = cert.P * x;
  return 2.0 * px.dot(sys.A * x + sys.B * u) +
         2.0 * (sys.G.transpose() * px).norm() * (sys.C * x + sys.D * u).norm() + cert.alpha * x.dot(px);
}

double pldi_worst_case_decrease(const RobustCertificate& cert, const PldiSystem& sys, const Vector& x,
                                const Vector& u) {
  const Vector px = cert.P * x;
  double worst = -std::numeric_limits<double>::infinity();
  for (int i = 0; i < sys.vertices(); ++i) worst = std::max(worst, 2.0 * px.dot(sys.A[i] * x + sys.B[i] * u));
  return worst + cert.alpha * x.dot(px);
}

double hinf_dissipation(const RobustCertificate& cert, const HinfSystem& sys, const Vector& x, const Vector& u,
                        const Vector& w) {
  const double sigma = cert.multiplier.value_or(1.0);
  const Vector xdot = sys.A * x + sys.B * u + sys.G * w;
  return 2.0 * x.dot(cert.P * xdot) + cert.alpha * quad(cert.P, x) +
         sigma * (quad(sys.Q, x) + quad(sys.R, u) - sys.gamma * sys.gamma * w.squaredNorm());
}

Vector hinf_worst_disturbance(const RobustCertificate& cert, const HinfSystem& sys, const Vector& x) {
  const double sigma = cert.multiplier.value_or(1.0);
  return sys.G.transpose() * (cert.P * x) / (sigma * sys.gamma * sys.gamma);
}

}  // namespace robctl
