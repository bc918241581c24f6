#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "robctl/policy.hpp"
#include "test_util.hpp"

using namespace robctl;
using namespace robctl::testing;

namespace {

NldiSystem random_nldi(std::mt19937_64& rng, bool zero_d) {
  return {normal_matrix(4, 4, rng), normal_matrix(4, 2, rng), 0.3 * normal_matrix(4, 2, rng),
          0.3 * normal_matrix(2, 4, rng), Matrix((zero_d ? 0.0 : 0.3) * normal_matrix(2, 2, rng))};
}

RobustPolicy nldi_policy(std::uint64_t seed, SafeSetKind kind, bool random_final) {
  std::mt19937_64 rng(seed);
  for (;;) {
    NldiSystem sys = random_nldi(rng, kind == SafeSetKind::Nldi0Halfspace);
    try {
      auto cert = synth_nldi(sys, 0.1, Matrix::Identity(4, 4), Matrix::Identity(2, 2));
      RobustPolicy p{kind, cert.K, cert, sys, Mlp::create({4, 8, 8, 2}, seed, !random_final), {}};
      return p;
    } catch (const SynthesisError&) {
    }
  }
}

RobustPolicy pldi_policy(std::uint64_t seed, bool random_final) {
  std::mt19937_64 rng(seed);
  const Matrix a0 = normal_matrix(4, 4, rng), b0 = normal_matrix(4, 2, rng);
  PldiSystem sys;
  for (int i = 0; i < 3; ++i) {
    sys.A.push_back(a0 + 0.2 * normal_matrix(4, 4, rng));
    sys.B.push_back(b0 + 0.2 * normal_matrix(4, 2, rng));
  }
  auto cert = synth_pldi(sys, 0.1, Matrix::Identity(4, 4), Matrix::Identity(2, 2));
  return {SafeSetKind::PldiPoly, cert.K, cert, sys, Mlp::create({4, 8, 8, 2}, seed, !random_final), {}};
}

RobustPolicy hinf_policy(std::uint64_t seed, bool random_final) {
  std::mt19937_64 rng(seed);
  HinfSystem sys{normal_matrix(4, 4, rng), normal_matrix(4, 2, rng), normal_matrix(4, 2, rng), 10.0,
                 Matrix::Identity(4, 4), Matrix::Identity(2, 2)};
  auto cert = synth_hinf(sys, 0.1);
  return {SafeSetKind::HinfSoc, cert.K, cert, sys, Mlp::create({4, 8, 8, 2}, seed, !random_final), {}};
}

// Scales the network output so that the nominal action usually leaves the safe set.
void amplify(RobustPolicy& p, double gain) {
  p.net.weights.back() *= gain;
  p.net.biases.back() *= gain;
}

std::vector<RobustPolicy> robust_policies(bool random_final) {
  return {nldi_policy(1, SafeSetKind::NldiSoc, random_final), nldi_policy(2, SafeSetKind::Nldi0Halfspace, random_final),
          pldi_policy(3, random_final), hinf_policy(4, random_final)};
}

ProjectionSettings tight() {
  ProjectionSettings s;
  s.tol = 1e-14;
  s.max_iters = 500000;
  return s;
}

}  // namespace

TEST(Mlp, FlattenRoundTrip) {
  Mlp net = Mlp::create({3, 5, 4, 2}, 7, false);
  const Vector flat = net.flatten();
  EXPECT_EQ(flat.size(), 3 * 5 + 5 + 5 * 4 + 4 + 4 * 2 + 2);
  // Layer-major, weights row-major then bias.
  EXPECT_EQ(flat(1), net.weights[0](0, 1));
  EXPECT_EQ(flat(15), net.biases[0](0));
  Mlp other = Mlp::create({3, 5, 4, 2}, 8, false);
  other.unflatten(flat);
  EXPECT_EQ(other.flatten(), flat);
  EXPECT_EQ(other.weights[1], net.weights[1]);
}

TEST(Mlp, ZeroFinalLayerOutputsZero) {
  Mlp net = default_policy_net(5, 3, 1);
  EXPECT_EQ(net.widths, (std::vector<int>{5, 64, 64, 3}));
  EXPECT_TRUE(mlp_forward(net, Vector::Ones(5)).isZero(0.0));
}

TEST(Mlp, SingleLinearLayerGradientIsOuterProduct) {
  Mlp net = Mlp::create({3, 2}, 3, false);
  const Vector x = Vector::LinSpaced(3, -1.0, 1.0);
  MlpTape tape;
  EXPECT_LT((mlp_forward(net, x, &tape) - (net.weights[0] * x + net.biases[0])).norm(), 1e-15);
  Vector g(2);
  g << 0.5, -2.0;
  auto grad = mlp_backward(net, tape, g);
  Mlp shaped = net;
  shaped.unflatten(grad.d_params);
  EXPECT_LT((shaped.weights[0] - g * x.transpose()).norm(), 1e-15);
  EXPECT_LT((shaped.biases[0] - g).norm(), 1e-15);
  EXPECT_LT((grad.d_x - net.weights[0].transpose() * g).norm(), 1e-15);
}

TEST(Mlp, GradientsMatchFiniteDifferences) {
  Mlp net = Mlp::create({4, 16, 16, 3}, 9, false);
  std::mt19937_64 rng(9);
  const Vector x = normal_vector(4, rng), w = normal_vector(3, rng);
  MlpTape tape;
  mlp_forward(net, x, &tape);
  auto grad = mlp_backward(net, tape, w);
  auto loss_p = [&](const Vector& p) {
    Mlp n = net;
    n.unflatten(p);
    return w.dot(mlp_forward(n, x));
  };
  auto loss_x = [&](const Vector& v) { return w.dot(mlp_forward(net, v)); };
  EXPECT_LT(rel_error(grad.d_params, central_gradient(loss_p, net.flatten())), 1e-7);
  EXPECT_LT(rel_error(grad.d_x, central_gradient(loss_x, x)), 1e-7);
}

TEST(Policy, ZeroInitOutputsCertifiedGain) {
  std::mt19937_64 rng(10);
  for (const auto& p : robust_policies(false)) {
    p.validate();
    for (int i = 0; i < 100; ++i) {
      const Vector x = normal_vector(4, rng);
      EXPECT_LT((policy_forward(p, x) - p.K * x).norm(), 1e-6 * (1.0 + x.norm())) << to_string(p.kind);
    }
  }
}

TEST(Policy, NoneKindBypassesProjection) {
  RobustPolicy p = nldi_policy(5, SafeSetKind::None, true);
  p.cert.reset();
  p.validate();
  const Vector x = Vector::LinSpaced(4, -1.0, 2.0);
  EXPECT_EQ(policy_forward(p, x), Vector(p.K * x + mlp_forward(p.net, x)));
}

TEST(Policy, OriginMapsToZero) {
  for (auto p : robust_policies(true)) {
    for (auto& b : p.net.biases) b.setZero();
    EXPECT_LT(policy_forward(p, Vector::Zero(4)).norm(), 1e-12) << to_string(p.kind);
  }
}

TEST(Policy, RobustKindsRequireCertificate) {
  RobustPolicy p = nldi_policy(6, SafeSetKind::NldiSoc, false);
  p.cert.reset();
  EXPECT_THROW(p.validate(), std::invalid_argument);
  RobustPolicy q = nldi_policy(6, SafeSetKind::PldiPoly, false);
  EXPECT_THROW(q.validate(), std::invalid_argument);
}

TEST(Policy, RandomParametersStayCertified) {
  std::mt19937_64 rng(11);
  for (auto p : robust_policies(true)) {
    amplify(p, 20.0);
    const auto& cert = *p.cert;
    for (int i = 0; i < 200; ++i) {
      const Vector x = normal_vector(4, rng);
      const Vector u = policy_forward(p, x);
      const double scale = 1.0 + cert.P.norm() * x.squaredNorm();
      double surrogate = 0.0;
      if (p.kind == SafeSetKind::PldiPoly) {
        surrogate = pldi_worst_case_decrease(cert, std::get<PldiSystem>(p.system), x, u);
      } else if (p.kind == SafeSetKind::HinfSoc) {
        const auto& sys = std::get<HinfSystem>(p.system);
        surrogate = hinf_dissipation(cert, sys, x, u, hinf_worst_disturbance(cert, sys, x));
      } else {
        surrogate = nldi_worst_case_decrease(cert, std::get<NldiSystem>(p.system), x, u);
      }
      EXPECT_LE(surrogate, 1e-6 * scale) << to_string(p.kind);
    }
  }
}

TEST(Policy, GradientsMatchFiniteDifferences) {
  std::mt19937_64 rng(12);
  for (auto p : robust_policies(true)) {
    amplify(p, 50.0);
    p.projection = tight();
    int active = 0;
    for (int i = 0; i < 5; ++i) {
      const Vector x = normal_vector(4, rng), w = normal_vector(2, rng);
      PolicyTape tape;
      policy_forward(p, x, &tape);
      active += (tape.u - tape.u_hat).norm() > 1e-6;
      const auto grad = policy_backward(p, tape, w);
      auto loss_p = [&](const Vector& params) {
        RobustPolicy q = p;
        q.net.unflatten(params);
        return w.dot(policy_forward(q, x));
      };
      auto loss_x = [&](const Vector& v) { return w.dot(policy_forward(p, v)); };
      EXPECT_LT(rel_error(grad.d_params, central_gradient(loss_p, p.net.flatten())), 1e-4) << to_string(p.kind);
      EXPECT_LT(rel_error(grad.d_x, central_gradient(loss_x, x)), 1e-4) << to_string(p.kind);
    }
    EXPECT_GT(active, 0) << to_string(p.kind);
  }
}
