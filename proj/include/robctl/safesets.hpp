#pragma once

#include <variant>

#include "robctl/synthesis.hpp"

namespace robctl {

/// {u : ||A u + b|| <= c^T u + d}
struct SocConstraint {
  Matrix a;
  Vector b;
  Vector c;
  double d = 0.0;

  int actions() const { return static_cast<int>(c.size()); }
  /// ||A u + b|| - (c^T u + d); the constraint holds when this is <= 0.
  double violation(const Vector& u) const;
  void validate() const;
};

/// {u : eta^T u <= zeta}
struct Halfspace {
  Vector eta;
  double zeta = 0.0;

  /// eta == 0: the set is everything (zeta >= 0) or empty (zeta < 0).
  bool degenerate() const { return eta.isZero(0.0); }
  double violation(const Vector& u) const { return eta.dot(u) - zeta; }
};

/// {u : H u <= g}
struct Polyhedron {
  Matrix h;
  Vector g;

  /// max_i (H u - g)_i
  double violation(const Vector& u) const { return (h * u - g).maxCoeff(); }
};

/// The H-infinity ellipsoid collapsed to its center.
struct SingletonSet {
  Vector u;
};

using HinfSafeSet = std::variant<SocConstraint, SingletonSet>;

/// Division-free form of the NLDI safe set: with g = ||G^T P x||,
///   ||g (C x + D u)|| <= -x^T P B u - x^T (2 P A + alpha P) x / 2.
SocConstraint nldi_safe_set(const RobustCertificate& cert, const NldiSystem& sys, const Vector& x);

/// D = 0 case: eta = 2 B^T P x, zeta = -x^T (2PA + alpha P) x - 2 ||G^T P x|| ||C x||.
Halfspace nldi0_halfspace(const RobustCertificate& cert, const NldiSystem& sys, const Vector& x);

/// One row 2 x^T P B_i u <= -x^T (alpha P + 2 P A_i) x per vertex.
Polyhedron pldi_polyhedron(const RobustCertificate& cert, const PldiSystem& sys, const Vector& x);

/// Threshold on q^T Ptilde^-1 q - r below which the ellipsoid is treated as a point.
inline constexpr double kDegenerateEllipsoid = 1e-10;

/// The ellipsoid u^T (sigma R) u + 2 q^T u + r <= 0 rewritten as ||A u + b|| <= 1,
/// or its center when the ellipsoid is degenerate. Throws std::runtime_error when
/// the ellipsoid is empty (the certificate does not hold at x).
HinfSafeSet hinf_soc(const RobustCertificate& cert, const HinfSystem& sys, const Vector& x);

// Reverse-mode derivatives of the set constructors with respect to the state:
// given dL/d(set parameters), return dL/dx. Where the construction is not
// differentiable (||G^T P x|| = 0, ||C x|| = 0) the zero subgradient is used.
Vector nldi_safe_set_vjp(const RobustCertificate& cert, const NldiSystem& sys, const Vector& x,
                         const SocConstraint& grad);
Vector nldi0_halfspace_vjp(const RobustCertificate& cert, const NldiSystem& sys, const Vector& x,
                           const Vector& d_eta, double d_zeta);
Vector pldi_polyhedron_vjp(const RobustCertificate& cert, const PldiSystem& sys, const Vector& x,
                           const Polyhedron& grad);
/// For the SOC branch `grad` carries (dA, db) (c = 0 and d = 1 are constant);
/// for the singleton branch pass d_u.
Vector hinf_soc_vjp(const RobustCertificate& cert, const HinfSystem& sys, const Vector& x, const SocConstraint& grad);
Vector hinf_singleton_vjp(const RobustCertificate& cert, const HinfSystem& sys, const Vector& d_u);

/// Worst case of dV/dt + alpha V over the admissible disturbances, V = x^T P x.
double nldi_worst_case_decrease(const RobustCertificate& cert, const NldiSystem& sys, const Vector& x,
                                const Vector& u);
double pldi_worst_case_decrease(const RobustCertificate& cert, const PldiSystem& sys, const Vector& x,
                                const Vector& u);

/// The H-infinity dissipation E(x, u, w) = dV/dt + alpha V + sigma (x^T Q x + u^T R u - gamma^2 ||w||^2)
/// with dV/dt along A x + B u + G w.
double hinf_dissipation(const RobustCertificate& cert, const HinfSystem& sys, const Vector& x, const Vector& u,
                        const Vector& w);
/// Maximizer of E over w: G^T P x / (sigma gamma^2).
Vector hinf_worst_disturbance(const RobustCertificate& cert, const HinfSystem& sys, const Vector& x);

}  // namespace robctl
