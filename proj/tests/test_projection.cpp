#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "robctl/projection.hpp"
#include "test_util.hpp"

using namespace robctl;
using namespace robctl::testing;

namespace {

// Nonempty random SOC constraint: d is chosen so that a random point u0 is strictly feasible.
SocConstraint random_soc(int a, int m, std::mt19937_64& rng, Vector* feasible = nullptr) {
  SocConstraint c{normal_matrix(m, a, rng), normal_vector(m, rng), normal_vector(a, rng), 0.0};
  const Vector u0 = normal_vector(a, rng);
  c.d = (c.a * u0 + c.b).norm() - c.c.dot(u0) + uniform(0.1, 1.0, rng);
  if (feasible) *feasible = u0;
  return c;
}

Polyhedron random_polyhedron(int a, int rows, std::mt19937_64& rng) {
  Polyhedron p{normal_matrix(rows, a, rng), Vector()};
  const Vector u0 = normal_vector(a, rng);
  p.g = p.h * u0 + Vector::NullaryExpr(rows, [&] { return uniform(0.1, 1.0, rng); });
  return p;
}

ProjectionSettings tight() {
  ProjectionSettings s;
  s.tol = 1e-14;
  s.max_iters = 500000;
  return s;
}

}  // namespace

TEST(SocPointProjection, ThreeCases) {
  Vector w(2);
  w << 3.0, 4.0;
  auto [pw, pt] = soc_cone_point_projection(w, 0.0);
  EXPECT_NEAR(pw(0), 1.5, 1e-12);
  EXPECT_NEAR(pw(1), 2.0, 1e-12);
  EXPECT_NEAR(pt, 2.5, 1e-12);

  auto [iw, it] = soc_cone_point_projection(w, 6.0);
  EXPECT_EQ(iw, w);
  EXPECT_EQ(it, 6.0);

  auto [zw, zt] = soc_cone_point_projection(w, -5.0);
  EXPECT_TRUE(zw.isZero(0.0));
  EXPECT_EQ(zt, 0.0);
}

TEST(SocPointProjection, MatchesNumericMinimization) {
  // Minimize the distance to (3,4,0) over the boundary parametrized by the radius r:
  // points r (cos th, sin th, 1), with th fixed to the direction of w by symmetry.
  double best = 1e300, best_r = 0.0;
  for (int i = 0; i <= 100000; ++i) {
    const double r = 5.0 * i / 100000.0;
    const double dist = std::pow(r * 0.6 - 3.0, 2) + std::pow(r * 0.8 - 4.0, 2) + r * r;
    if (dist < best) best = dist, best_r = r;
  }
  Vector w(2);
  w << 3.0, 4.0;
  auto [pw, pt] = soc_cone_point_projection(w, 0.0);
  EXPECT_NEAR(pt, best_r, 1e-4);
  EXPECT_NEAR(pw(0), 0.6 * best_r, 1e-4);
}

TEST(SocPointProjection, JacobianMatchesFiniteDifferences) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    const Vector v = normal_vector(4, rng);
    const Matrix j = soc_projection_jacobian(v);
    Matrix fd(4, 4);
    for (int k = 0; k < 4; ++k) {
      Vector vp = v, vm = v;
      vp(k) += 1e-6;
      vm(k) -= 1e-6;
      auto [wp, tp] = soc_cone_point_projection(vp.head(3), vp(3));
      auto [wm, tm] = soc_cone_point_projection(vm.head(3), vm(3));
      Vector dp(4), dm(4);
      dp << wp, tp;
      dm << wm, tm;
      fd.col(k) = (dp - dm) / 2e-6;
    }
    EXPECT_LT(rel_error(j, fd), 1e-6) << "trial " << trial;
  }
}

TEST(Halfspace, InteriorIsUnchanged) {
  Halfspace hs{Vector::Ones(2), 5.0};
  Vector u(2);
  u << 1.0, 2.0;
  auto res = project_halfspace(u, hs);
  EXPECT_FALSE(res.active);
  EXPECT_EQ(res.u, u);
}

TEST(Halfspace, ClosedFormExample) {
  Halfspace hs{Vector::Unit(2, 0), 0.0};
  Vector u(2);
  u << 2.0, 3.0;
  auto res = project_halfspace(u, hs);
  EXPECT_TRUE(res.active);
  EXPECT_NEAR(res.u(0), 0.0, 1e-15);
  EXPECT_NEAR(res.u(1), 3.0, 1e-15);
}

TEST(Halfspace, Degenerate) {
  Halfspace whole{Vector::Zero(3), 0.0};
  const Vector u = Vector::Constant(3, 7.0);
  EXPECT_EQ(project_halfspace(u, whole).u, u);
  Halfspace empty{Vector::Zero(3), -1.0};
  EXPECT_THROW(project_halfspace(u, empty), std::runtime_error);
}

TEST(Halfspace, MatchesConicOracle) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    const int a = uniform_int(1, 6, rng);
    Polyhedron p = random_polyhedron(a, 1, rng);
    Halfspace hs{p.h.row(0).transpose(), p.g(0)};
    const Vector y = 3.0 * normal_vector(a, rng);
    EXPECT_LT((project_halfspace(y, hs).u - oracle::project_polyhedron(y, p)).norm(), 1e-8);
  }
}

TEST(Halfspace, GradientsMatchFiniteDifferences) {
  std::mt19937_64 rng(13);
  int active = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const int a = uniform_int(1, 6, rng);
    Halfspace hs{normal_vector(a, rng), uniform(-1.0, 1.0, rng)};
    const Vector y = 2.0 * normal_vector(a, rng);
    const Vector w = normal_vector(a, rng);
    const auto fwd = project_halfspace(y, hs);
    active += fwd.active;
    const auto grads = project_halfspace_backward(y, hs, fwd, w);

    auto loss_y = [&](const Vector& v) { return w.dot(project_halfspace(v, hs).u); };
    auto loss_eta = [&](const Vector& e) { return w.dot(project_halfspace(y, Halfspace{e, hs.zeta}).u); };
    auto loss_zeta = [&](const Vector& z) { return w.dot(project_halfspace(y, Halfspace{hs.eta, z(0)}).u); };
    EXPECT_LT(rel_error(grads.d_u_hat, central_gradient(loss_y, y)), 1e-5);
    EXPECT_LT(rel_error(grads.d_eta, central_gradient(loss_eta, hs.eta)), 1e-5);
    EXPECT_NEAR(grads.d_zeta, central_gradient(loss_zeta, Vector(Vector::Constant(1, hs.zeta)))(0), 1e-5);
  }
  EXPECT_GT(active, 40);
  EXPECT_LT(active, 160);
}

TEST(SocProjection, FeasiblePointIsFixed) {
  std::mt19937_64 rng(17);
  Vector u0;
  SocConstraint c = random_soc(3, 2, rng, &u0);
  auto res = project_soc_forward(u0, c);
  EXPECT_TRUE(res.converged);
  EXPECT_LT((res.u - u0).norm(), 1e-12);
  EXPECT_TRUE(res.mu.isZero(0.0));
}

TEST(SocProjection, MatchesConicOracle) {
  std::mt19937_64 rng(19);
  double worst = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    const int a = uniform_int(1, 6, rng);
    const int m = uniform_int(1, 5, rng);
    SocConstraint c = random_soc(a, m, rng);
    const Vector y = 3.0 * normal_vector(a, rng);
    auto res = project_soc_forward(y, c);
    EXPECT_LE(c.violation(res.u), 1e-6);
    EXPECT_LT((res.u - y - res.g.transpose() * res.mu).norm(), 1e-8);
    worst = std::max(worst, (res.u - oracle::project_soc(y, c)).norm());
  }
  EXPECT_LT(worst, 1e-5);
}

TEST(SocProjection, HalfspaceSpecialization) {
  std::mt19937_64 rng(23);
  for (int trial = 0; trial < 50; ++trial) {
    const int a = uniform_int(1, 6, rng);
    SocConstraint c{Matrix::Zero(2, a), Vector::Zero(2), normal_vector(a, rng), uniform(-1.0, 1.0, rng)};
    // 0 <= c^T u + d is the halfspace (-c)^T u <= d.
    Halfspace hs{-c.c, c.d};
    const Vector y = 2.0 * normal_vector(a, rng);
    EXPECT_LT((project_soc_forward(y, c).u - project_halfspace(y, hs).u).norm(), 1e-8);
  }
}

TEST(SocProjection, IdempotentAndNonExpansive) {
  std::mt19937_64 rng(29);
  for (int trial = 0; trial < 50; ++trial) {
    const int a = uniform_int(2, 5, rng);
    SocConstraint c = random_soc(a, uniform_int(1, 4, rng), rng);
    const Vector y1 = 3.0 * normal_vector(a, rng), y2 = 3.0 * normal_vector(a, rng);
    const auto p1 = project_soc_forward(y1, c), p2 = project_soc_forward(y2, c);
    EXPECT_LE((p1.u - p2.u).norm(), (y1 - y2).norm() + 1e-8);
    EXPECT_LE((project_soc_forward(p1.u, c).u - p1.u).norm(), 2e-6);
  }
}

TEST(SocProjection, InactiveBackwardIsIdentity) {
  std::mt19937_64 rng(31);
  Vector u0;
  SocConstraint c = random_soc(4, 3, rng, &u0);
  const Vector w = normal_vector(4, rng);
  auto grads = project_soc_backward(project_soc_forward(u0, c), w);
  EXPECT_LT((grads.d_y - w).norm(), 1e-12);
  EXPECT_LT(grads.d_h.norm(), 1e-12);
  EXPECT_LT(grads.d_g.norm(), 1e-12);
}

TEST(SocProjection, GradientsMatchFiniteDifferences) {
  std::mt19937_64 rng(37);
  int checked = 0;
  for (int trial = 0; checked < 60; ++trial) {
    const int a = uniform_int(1, 6, rng);
    const int m = uniform_int(1, 5, rng);
    SocConstraint c = random_soc(a, m, rng);
    const Vector y = 3.0 * normal_vector(a, rng);
    const auto fwd = project_soc_forward(y, c, tight());
    if (fwd.mu.isZero(0.0)) continue;
    ++checked;
    const Vector w = normal_vector(a, rng);
    const auto grads = project_soc_backward(fwd, w);
    EXPECT_FALSE(grads.inexact);

    auto loss_y = [&](const Vector& v) { return w.dot(project_soc_forward(v, c, tight()).u); };
    auto loss_g = [&](const Matrix& g) {
      return w.dot(project_dual(y, g, fwd.h, DualCone::Soc, tight()).u);
    };
    auto loss_h = [&](const Vector& h) {
      return w.dot(project_dual(y, fwd.g, h, DualCone::Soc, tight()).u);
    };
    EXPECT_LT(rel_error(grads.d_y, central_gradient(loss_y, y)), 1e-4) << "trial " << trial;
    EXPECT_LT(rel_error(grads.d_g, central_gradient_matrix(loss_g, fwd.g)), 1e-4) << "trial " << trial;
    EXPECT_LT(rel_error(grads.d_h, central_gradient(loss_h, fwd.h)), 1e-4) << "trial " << trial;
  }
}

TEST(SocProjection, ScalarLossChainRule) {
  std::mt19937_64 rng(41);
  SocConstraint c = random_soc(3, 2, rng);
  const Vector y = 4.0 * normal_vector(3, rng);
  const auto fwd = project_soc_forward(y, c, tight());
  const auto grads = project_soc_backward(fwd, 2.0 * fwd.u);
  auto loss = [&](const Vector& v) { return project_soc_forward(v, c, tight()).u.squaredNorm(); };
  EXPECT_LT(rel_error(grads.d_y, central_gradient(loss, y)), 1e-4);
}

TEST(Polyhedron, SingleRowMatchesHalfspace) {
  std::mt19937_64 rng(43);
  for (int trial = 0; trial < 50; ++trial) {
    const int a = uniform_int(1, 6, rng);
    Polyhedron p = random_polyhedron(a, 1, rng);
    Halfspace hs{p.h.row(0).transpose(), p.g(0)};
    const Vector y = 3.0 * normal_vector(a, rng);
    EXPECT_LT((project_polyhedron_forward(y, p).u - project_halfspace(y, hs).u).norm(), 1e-8);
  }
}

TEST(Polyhedron, MatchesConicOracle) {
  std::mt19937_64 rng(47);
  for (int trial = 0; trial < 100; ++trial) {
    const int a = uniform_int(1, 6, rng);
    Polyhedron p = random_polyhedron(a, 4, rng);
    const Vector y = 3.0 * normal_vector(a, rng);
    auto res = project_polyhedron_forward(y, p);
    EXPECT_LE(p.violation(res.u), 1e-6);
    EXPECT_LT((res.u - oracle::project_polyhedron(y, p)).norm(), 1e-5) << "trial " << trial;
  }
}

TEST(Polyhedron, GradientsMatchFiniteDifferences) {
  std::mt19937_64 rng(53);
  for (int trial = 0; trial < 60; ++trial) {
    const int a = uniform_int(1, 6, rng);
    Polyhedron p = random_polyhedron(a, 4, rng);
    const Vector y = 3.0 * normal_vector(a, rng);
    const auto fwd = project_polyhedron_forward(y, p, tight());
    const Vector w = normal_vector(a, rng);
    const auto grads = project_polyhedron_backward(fwd, w);
    const Polyhedron dp = unstack_polyhedron_gradient(grads);

    auto loss_y = [&](const Vector& v) { return w.dot(project_polyhedron_forward(v, p, tight()).u); };
    auto loss_h = [&](const Matrix& h) {
      return w.dot(project_polyhedron_forward(y, Polyhedron{h, p.g}, tight()).u);
    };
    auto loss_g = [&](const Vector& g) {
      return w.dot(project_polyhedron_forward(y, Polyhedron{p.h, g}, tight()).u);
    };
    EXPECT_LT(rel_error(grads.d_y, central_gradient(loss_y, y)), 1e-4) << "trial " << trial;
    EXPECT_LT(rel_error(dp.h, central_gradient_matrix(loss_h, p.h)), 1e-4) << "trial " << trial;
    EXPECT_LT(rel_error(dp.g, central_gradient(loss_g, p.g)), 1e-4) << "trial " << trial;
  }
}

TEST(SocProjection, PlainScheduleOnStronglyConvexDual) {
  std::mt19937_64 rng(59);
  ProjectionSettings plain;
  plain.adaptive_restart = false;
  for (int trial = 0; trial < 50; ++trial) {
    const int a = uniform_int(3, 6, rng);
    SocConstraint c = random_soc(a, uniform_int(1, a - 1, rng), rng);
    const Vector y = 3.0 * normal_vector(a, rng);
    auto res = project_soc_forward(y, c, plain);
    EXPECT_TRUE(res.converged);
    EXPECT_LT((res.u - oracle::project_soc(y, c)).norm(), 1e-5) << "trial " << trial;
  }
}
