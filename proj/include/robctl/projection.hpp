#pragma once

#include <optional>
#include <utility>

#include "robctl/safesets.hpp"

namespace robctl {

struct ProjectionSettings {
  /// Stop when successive dual iterates differ by at most tol (Euclidean).
  double tol = 1e-9;
  int max_iters = 20000;
  /// lambda_min(G G^T) at or below this counts as zero (selects the
  /// (k-1)/(k+2) momentum schedule).
  double strong_convexity_floor = 1e-12;
  /// Gradient-based adaptive restart: whenever the momentum step points uphill
  /// the momentum is dropped and its schedule restarts. Off gives the plain
  /// accelerated scheme.
  bool adaptive_restart = true;
  /// Optional starting dual point (warm start); zero otherwise.
  std::optional<Vector> warm_start;
};

/// Three-case Euclidean projection onto {(w, t) : ||w|| <= t}.
std::pair<Vector, double> soc_cone_point_projection(const Vector& w, double t);

/// Generalized Jacobian of the cone projection at v = (w, t) (t last). On the
/// cone boundary the interior branch is used.
Matrix soc_projection_jacobian(const Vector& v);

struct HalfspaceProjection {
  Vector u;
  bool active = false;
};

HalfspaceProjection project_halfspace(const Vector& u_hat, const Halfspace& hs);

struct HalfspaceGradients {
  Vector d_u_hat;
  Vector d_eta;
  double d_zeta = 0.0;
};

HalfspaceGradients project_halfspace_backward(const Vector& u_hat, const Halfspace& hs,
                                              const HalfspaceProjection& forward, const Vector& d_u);

enum class DualCone { Soc, Nonneg };

/// Forward result of the accelerated projected dual gradient method applied to
///   minimize 1/2 ||u - y||^2  s.t.  G u + h in F,
/// plus the context the backward pass needs.
struct ProjectionResult {
  Vector u;
  Vector mu;
  int iterations = 0;
  bool converged = false;
  /// Constraint violation of u (0 when feasible).
  double primal_residual = 0.0;

  DualCone cone = DualCone::Soc;
  Matrix g;  // stacked constraint matrix
  Vector h;
  Vector y;
  double lipschitz = 0.0;
  /// Cone-projection Jacobian at mu - grad f(mu) / L.
  Matrix jacobian;
};

struct ProjectionGradients {
  Matrix d_g;
  Vector d_h;
  Vector d_y;
  /// J was singular and a minimum-norm least-squares solve was used.
  bool least_squares_fallback = false;
  /// The forward pass hit its iteration cap, so the fixed point is inexact.
  bool inexact = false;
};

/// Generic dual scheme over a stacked (G, h).
ProjectionResult project_dual(const Vector& y, const Matrix& g, const Vector& h, DualCone cone,
                              const ProjectionSettings& settings = {});
ProjectionGradients project_dual_backward(const ProjectionResult& ctx, const Vector& d_u);

/// G_s = [A_c; c_c^T], h_s = [b_c; d_c].
ProjectionResult project_soc_forward(const Vector& y, const SocConstraint& c, const ProjectionSettings& settings = {});
ProjectionGradients project_soc_backward(const ProjectionResult& ctx, const Vector& d_u);

/// Splits stacked gradients back into SocConstraint shape.
SocConstraint unstack_soc_gradient(const ProjectionGradients& grads);

/// H u <= g posed as (-H) u + g >= 0.
ProjectionResult project_polyhedron_forward(const Vector& y, const Polyhedron& p,
                                            const ProjectionSettings& settings = {});
ProjectionGradients project_polyhedron_backward(const ProjectionResult& ctx, const Vector& d_u);

/// Splits stacked gradients back into Polyhedron shape.
Polyhedron unstack_polyhedron_gradient(const ProjectionGradients& grads);

}  // namespace robctl
