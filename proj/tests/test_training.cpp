#include <gtest/gtest.h>

#include <cmath>

#include "robctl/training.hpp"
#include "test_util.hpp"

using namespace robctl;
using namespace robctl::testing;

namespace {

// x' = a x + b u + g w on R^1 with ||w|| <= |c x|.
EnvInstance scalar_env(double a, double b, double c, double q = 1.0) {
  EnvInstance env;
  env.family = EnvFamily::SyntheticNldi;
  env.system = NldiSystem{Matrix::Constant(1, 1, a), Matrix::Constant(1, 1, b), Matrix::Constant(1, 1, 1.0),
                          Matrix::Constant(1, 1, c), Matrix::Zero(1, 1)};
  env.Q = Matrix::Constant(1, 1, q);
  env.R = Matrix::Constant(1, 1, 1.0);
  env.disturbance = DisturbanceKind::None;
  return env;
}

RobustPolicy linear_policy(const Matrix& k) {
  RobustPolicy p;
  p.K = k;
  p.net = Mlp::create({static_cast<int>(k.cols()), 4, static_cast<int>(k.rows())}, 1, true);
  return p;
}

struct Certified {
  EnvInstance env;
  RobustCertificate robust, lqr;
};

Certified certified(EnvFamily family, std::uint64_t seed) {
  Certified c;
  c.env = family == EnvFamily::SyntheticPldi   ? gen_synthetic_pldi(seed)
          : family == EnvFamily::SyntheticHinf ? gen_synthetic_hinf(seed)
                                               : gen_synthetic_nldi(seed, seed % 2 == 0);
  c.robust = synthesize_for(c.env, 0.1);
  c.lqr = lqr_for(c.env);
  return c;
}

}  // namespace

TEST(Rollout, ZeroDynamicsZeroPolicyCostsNothing) {
  EnvInstance env = scalar_env(0.0, 0.0, 0.0);
  const Trajectory t = rollout(linear_policy(Matrix::Zero(1, 1)), env, Vector::Zero(1));
  EXPECT_EQ(t.cost, 0.0);
  EXPECT_EQ(t.steps, env.horizon);
  EXPECT_FALSE(t.diverged);
}

TEST(Rollout, StableScalarMatchesGeometricSum) {
  EnvInstance env = scalar_env(-1.0, 0.0, 0.0, 2.0);
  const double x0 = 1.5, r = 1.0 - env.dt;
  const double expected = env.dt * 2.0 * x0 * x0 * (1.0 - std::pow(r, 2 * env.horizon)) / (1.0 - r * r);
  const Trajectory t = rollout(linear_policy(Matrix::Zero(1, 1)), env, Vector::Constant(1, x0));
  EXPECT_NEAR(t.cost, expected, 1e-6);
}

TEST(Rollout, DivergenceTruncatesEpisode) {
  EnvInstance env = scalar_env(500.0, 0.0, 0.0);
  const Trajectory t = rollout(linear_policy(Matrix::Zero(1, 1)), env, Vector::Ones(1));
  EXPECT_TRUE(t.diverged);
  EXPECT_LT(t.steps, env.horizon);
  EXPECT_TRUE(diverged(Vector::Constant(1, std::nan(""))));
  EXPECT_TRUE(diverged(Vector::Constant(1, 1001.0)));
  EXPECT_FALSE(diverged(Vector::Constant(1, 999.0)));
}

TEST(Monitor, CertifiedLinearPolicyHasNoFlags) {
  for (EnvFamily f : {EnvFamily::SyntheticNldi, EnvFamily::SyntheticPldi, EnvFamily::SyntheticHinf}) {
    Certified c = certified(f, 1);
    c.env.dt = 1e-3;
    c.env.horizon = 2000;
    const RobustPolicy p = make_policy(Method::RobustLqr, c.env, c.robust, c.lqr, 0);
    for (int ep = 0; ep < 5; ++ep) {
      const Trajectory t = rollout(p, c.env, sample_initial_state(c.env, ep));
      const MonitorReport m = lyapunov_monitor(t, c.robust, c.env);
      EXPECT_EQ(m.violations, 0) << to_string(f);
      for (double s : m.surrogate) EXPECT_LE(s, 1e-6) << to_string(f);
    }
  }
}

TEST(Monitor, AlphaZeroIsMonotoneCheckAndBadActionFlagged) {
  EnvInstance env = scalar_env(-1.0, 1.0, 0.0);
  RobustCertificate cert;
  cert.alpha = 0.0;
  cert.P = Matrix::Identity(1, 1);
  Trajectory t;
  t.x = {Vector::Constant(1, 1.0), Vector::Constant(1, 0.9), Vector::Constant(1, 0.9), Vector::Constant(1, 0.95)};
  t.u = {Vector::Zero(1), Vector::Zero(1), Vector::Zero(1)};
  t.w = {Vector::Zero(1), Vector::Zero(1), Vector::Zero(1)};
  t.steps = 3;
  const MonitorReport m = lyapunov_monitor(t, cert, env);
  EXPECT_EQ(m.violations, 1);
  EXPECT_EQ(m.flagged, std::vector<int>{2});
}

TEST(Policies, MethodsAndKinds) {
  const Certified c = certified(EnvFamily::SyntheticNldi, 0);
  EXPECT_EQ(make_policy(Method::RobustMbp, c.env, c.robust, c.lqr, 0).kind, SafeSetKind::Nldi0Halfspace);
  EXPECT_EQ(make_policy(Method::Lqr, c.env, c.robust, c.lqr, 0).K, c.lqr.K);
  EXPECT_EQ(make_policy(Method::RobustLqr, c.env, c.robust, c.lqr, 0).K, c.robust.K);
  EXPECT_EQ(method_from_string("robust-mbp"), Method::RobustMbp);
  EXPECT_THROW(method_from_string("ppo"), std::invalid_argument);
  EXPECT_EQ(robust_kind_for(gen_synthetic_nldi(0, false)), SafeSetKind::NldiSoc);
  EXPECT_EQ(robust_kind_for(gen_synthetic_pldi(0)), SafeSetKind::PldiPoly);
  EXPECT_EQ(robust_kind_for(gen_synthetic_hinf(0)), SafeSetKind::HinfSoc);
}

TEST(Gradient, MatchesFiniteDifferences) {
  std::mt19937_64 rng(3);
  for (EnvFamily f : {EnvFamily::SyntheticNldi, EnvFamily::SyntheticPldi, EnvFamily::SyntheticHinf}) {
    for (int horizon : {1, 5}) {
      Certified c = certified(f, 2);
      c.env.horizon = horizon;
      for (Method m : {Method::Mbp, Method::RobustMbp}) {
        RobustPolicy p = make_policy(m, c.env, c.robust, c.lqr, 0);
        p.net = Mlp::create({5, 3, 3}, 9, false);
        p.net.unflatten(20.0 * p.net.flatten());  // push actions out of the safe set
        p.projection.tol = 1e-14;
        p.projection.max_iters = 500000;
        const std::vector<Vector> x0s = {normal_vector(5, rng), normal_vector(5, rng)};
        const CostGradient g = rollout_gradient(p, c.env, x0s);
        const Vector theta = p.net.flatten();
        const Vector fd = central_gradient(
            [&](const Vector& th) {
              RobustPolicy q = p;
              q.net.unflatten(th);
              return rollout_gradient(q, c.env, x0s).mean_cost;
            },
            theta, 1e-6);
        EXPECT_LE(rel_error(g.d_params, fd), 1e-4) << to_string(f) << " " << to_string(m) << " T=" << horizon;
      }
    }
  }
}

TEST(Gradient, PhysicalDomainMatchesFiniteDifferences) {
  const EnvInstance env0 = make_cartpole(0, {}, BoundFitSettings{12, {}});
  EnvInstance env = env0;
  env.horizon = 4;
  const RobustCertificate robust = synthesize_for(env, 0.1), lqr = lqr_for(env);
  RobustPolicy p = make_policy(Method::RobustMbp, env, robust, lqr, 0);
  p.net = Mlp::create({4, 3, 1}, 5, false);
  p.projection.tol = 1e-14;
  p.projection.max_iters = 500000;
  const std::vector<Vector> x0s = {sample_initial_state(env, 1), sample_initial_state(env, 2)};
  const CostGradient g = rollout_gradient(p, env, x0s);
  const Vector fd = central_gradient(
      [&](const Vector& th) {
        RobustPolicy q = p;
        q.net.unflatten(th);
        return rollout_gradient(q, env, x0s).mean_cost;
      },
      p.net.flatten(), 1e-6);
  EXPECT_LE(rel_error(g.d_params, fd), 1e-4);
}

TEST(Adversary, ZeroBoundEmitsZero) {
  EnvInstance env = scalar_env(-1.0, 1.0, 0.0);
  env.horizon = 30;
  const RobustPolicy p = linear_policy(Matrix::Constant(1, 1, -1.0));
  const Trajectory t = rollout_adversarial(p, env, Vector::Ones(1), AdversaryConfig{}, 3);
  for (const Vector& w : t.w) EXPECT_EQ(w, Vector::Zero(1));
}

TEST(Adversary, AdmissibleAndStrongerThanRandom) {
  const Certified c = certified(EnvFamily::SyntheticNldi, 4);
  const RobustPolicy p = make_policy(Method::Lqr, c.env, c.robust, c.lqr, 0);
  EvalOptions opts;
  opts.episodes = 20;
  opts.seed = 5;
  opts.keep_trajectories = true;
  const EvalResult orig = evaluate(p, c.env, EvalMode::Original, opts);
  const EvalResult adv = evaluate(p, c.env, EvalMode::Adversarial, opts);
  int wins = 0;
  for (int i = 0; i < opts.episodes; ++i) wins += adv.costs[i] >= orig.costs[i];
  EXPECT_GE(adv.mean_cost, orig.mean_cost);
  EXPECT_GE(wins, 18);
  const NldiSystem& s = c.env.nldi();
  for (const Trajectory& t : adv.trajectories)
    for (int k = 0; k < t.steps; ++k) {
      const double bound = (s.C * t.x[k] + s.D * t.u[k]).norm();
      EXPECT_LE(t.w[k].norm(), bound * (1.0 + 1e-12));
      EXPECT_NEAR(t.w[k].norm(), bound, 1e-12 * (1.0 + bound));
    }
}

TEST(Adversary, RejectsNonNldi) {
  const Certified c = certified(EnvFamily::SyntheticPldi, 0);
  const RobustPolicy p = make_policy(Method::Lqr, c.env, c.robust, c.lqr, 0);
  EXPECT_THROW(rollout_adversarial(p, c.env, Vector::Ones(5), AdversaryConfig{}, 0), std::invalid_argument);
  AdversaryConfig bad;
  bad.horizon = 5;
  EXPECT_THROW(bad.validate(), std::invalid_argument);
}

TEST(Evaluate, DeterministicAndPaired) {
  const Certified c = certified(EnvFamily::SyntheticNldi, 0);
  const RobustPolicy p = make_policy(Method::RobustMbp, c.env, c.robust, c.lqr, 0);
  EvalOptions opts;
  opts.episodes = 4;
  opts.seed = 8;
  const EvalResult a = evaluate(p, c.env, EvalMode::Adversarial, opts);
  const EvalResult b = evaluate(p, c.env, EvalMode::Adversarial, opts);
  EXPECT_EQ(a.costs, b.costs);
  EXPECT_EQ(a.instabilities, 0);
  // Zero-initialized network: robust MBP equals robust LQR on every paired episode.
  const EvalResult r = evaluate(make_policy(Method::RobustLqr, c.env, c.robust, c.lqr, 0), c.env,
                                EvalMode::Original, opts);
  const EvalResult m = evaluate(p, c.env, EvalMode::Original, opts);
  for (int i = 0; i < opts.episodes; ++i) EXPECT_NEAR(r.costs[i], m.costs[i], 1e-9 * (1.0 + r.costs[i]));
}

TEST(Train, ZeroLearningRateKeepsParameters) {
  const Certified c = certified(EnvFamily::SyntheticNldi, 0);
  RobustPolicy p = make_policy(Method::RobustMbp, c.env, c.robust, c.lqr, 0);
  p.net = Mlp::create({5, 64, 64, 3}, 2, false);
  TrainConfig cfg;
  cfg.updates = 3;
  cfg.rollouts = 2;
  cfg.learning_rate = 0.0;
  cfg.eval_episodes = 1;
  cfg.eval_adversarial = false;
  const TrainResult r = train_mbp(p, c.env, cfg);
  EXPECT_EQ(r.policy.net.flatten(), p.net.flatten());
  EXPECT_EQ(r.curve.size(), 1u);
}

TEST(Train, RobustMbpImprovesOnRobustLqrWithoutDivergence) {
  const Certified c = certified(EnvFamily::SyntheticNldi, 0);
  const RobustPolicy p = make_policy(Method::RobustMbp, c.env, c.robust, c.lqr, 0);
  TrainConfig cfg;
  cfg.updates = 30;
  cfg.rollouts = 10;
  cfg.learning_rate = 1e-3;
  cfg.eval_interval = 10;
  cfg.eval_episodes = 5;
  cfg.eval_adversarial = false;
  int calls = 0;
  cfg.on_update = [&](int, const RobustPolicy&) { ++calls; };
  const TrainResult r = train_mbp(p, c.env, cfg);
  EXPECT_EQ(calls, 30);
  ASSERT_EQ(r.curve.size(), 4u);
  EXPECT_EQ(r.training_divergences, 0);
  EXPECT_EQ(r.skipped_updates, 0);
  EvalOptions opts;
  opts.episodes = 20;
  opts.seed = 77;
  const double trained = evaluate(r.policy, c.env, EvalMode::Original, opts).mean_cost;
  const double baseline =
      evaluate(make_policy(Method::RobustLqr, c.env, c.robust, c.lqr, 0), c.env, EvalMode::Original, opts).mean_cost;
  EXPECT_LT(trained, baseline);
  // Every action stays in the safe set.
  for (int i = 0; i < 50; ++i) {
    const Vector x = sample_initial_state(c.env, 500 + i);
    EXPECT_LE(nldi_worst_case_decrease(c.robust, c.env.nldi(), x, policy_forward(r.policy, x)), 1e-6);
  }
}

TEST(Train, GradientClippingRescalesTheStep) {
  const Certified c = certified(EnvFamily::SyntheticNldi, 0);
  RobustPolicy p = make_policy(Method::RobustMbp, c.env, c.robust, c.lqr, 0);
  p.net = Mlp::create({5, 64, 64, 3}, 2, false);
  TrainConfig cfg;
  cfg.updates = 1;
  cfg.rollouts = 2;
  cfg.learning_rate = 1e-6;
  cfg.eval_episodes = 1;
  cfg.eval_adversarial = false;
  const Vector free_step = train_mbp(p, c.env, cfg).policy.net.flatten() - p.net.flatten();
  cfg.max_grad_norm = 1e-3 * free_step.norm() / cfg.learning_rate;
  const TrainResult r = train_mbp(p, c.env, cfg);
  const Vector step = r.policy.net.flatten() - p.net.flatten();
  EXPECT_EQ(r.clipped_updates, 1);
  EXPECT_NEAR(step.norm(), cfg.learning_rate * cfg.max_grad_norm, 1e-12);
  EXPECT_NEAR(step.dot(free_step) / (step.norm() * free_step.norm()), 1.0, 1e-9);
  cfg.max_grad_norm = -1.0;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
}

TEST(Train, ConfigValidation) {
  TrainConfig cfg;
  cfg.rollouts = 0;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
  cfg.rollouts = 1;
  cfg.learning_rate = -1.0;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
}
