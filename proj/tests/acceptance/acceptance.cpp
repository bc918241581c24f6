// Acceptance run: one PASS/FAIL line per criterion, exit status 0 only when all pass.
// Usage: acceptance [criterion numbers...]   (default: all of 1..8)

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>
#include <string>

#include "oracles.hpp"
#include "robctl/experiment.hpp"
#include "test_util.hpp"

using namespace robctl;
using namespace robctl::testing;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
  std::vector<std::string> info;
};

std::string num(double v, int digits = 3) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.*g", digits, v);
  return buf;
}

ProjectionSettings tight() {
  ProjectionSettings s;
  s.tol = 1e-14;
  s.max_iters = 500000;
  return s;
}

SocConstraint random_soc(int a, int m, std::mt19937_64& rng, Vector* feasible) {
  SocConstraint c{normal_matrix(m, a, rng), normal_vector(m, rng), normal_vector(a, rng), 0.0};
  const Vector u0 = normal_vector(a, rng);
  c.d = (c.a * u0 + c.b).norm() - c.c.dot(u0) + uniform(0.1, 1.0, rng);
  if (feasible) *feasible = u0;
  return c;
}

Polyhedron random_polyhedron(int a, int rows, std::mt19937_64& rng, Vector* feasible) {
  Polyhedron p{normal_matrix(rows, a, rng), Vector()};
  const Vector u0 = normal_vector(a, rng);
  p.g = p.h * u0 + Vector::NullaryExpr(rows, [&] { return uniform(0.1, 1.0, rng); });
  if (feasible) *feasible = u0;
  return p;
}

// 1. Projection forward passes against the conic oracle.
Outcome projection_correctness() {
  std::mt19937_64 rng(1001);
  double soc = 0.0, hs = 0.0, poly = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const int a = uniform_int(1, 6, rng), m = uniform_int(1, 5, rng);
    const SocConstraint c = random_soc(a, m, rng, nullptr);
    const Vector y = 3.0 * normal_vector(a, rng);
    soc = std::max(soc, (project_soc_forward(y, c).u - oracle::project_soc(y, c)).norm());
  }
  for (int i = 0; i < 1000; ++i) {
    const int a = uniform_int(1, 6, rng);
    const Polyhedron p = random_polyhedron(a, 1, rng, nullptr);
    const Vector y = 3.0 * normal_vector(a, rng);
    const Halfspace h{p.h.row(0).transpose(), p.g(0)};
    hs = std::max(hs, (project_halfspace(y, h).u - oracle::project_polyhedron(y, p)).norm());
  }
  for (int i = 0; i < 1000; ++i) {
    const int a = uniform_int(1, 6, rng);
    const Polyhedron p = random_polyhedron(a, uniform_int(2, 6, rng), rng, nullptr);
    const Vector y = 3.0 * normal_vector(a, rng);
    poly = std::max(poly, (project_polyhedron_forward(y, p).u - oracle::project_polyhedron(y, p)).norm());
  }
  Outcome o;
  o.pass = soc <= 1e-5 && hs <= 1e-8 && poly <= 1e-5;
  o.detail = "max distance to oracle: soc " + num(soc) + " (tol 1e-5, 1000 instances), halfspace " + num(hs) +
             " (tol 1e-8, 1000), polyhedral " + num(poly) + " (tol 1e-5, 1000)";
  return o;
}

// 2. Backward passes and policy gradients against central differences.
Outcome differentiation_correctness() {
  std::mt19937_64 rng(2002);
  const double tol = 1e-4;
  double hs_err = 0.0, soc_err = 0.0, poly_err = 0.0, pol_err = 0.0, roll_err = 0.0;
  int hs_active = 0, soc_active = 0, poly_active = 0;

  for (int i = 0; i < 200; ++i) {
    const int a = uniform_int(1, 6, rng);
    const Vector eta = normal_vector(a, rng), y = 2.0 * normal_vector(a, rng), w = normal_vector(a, rng);
    const double margin = uniform(0.1, 1.0, rng) * eta.norm();
    const bool active = i % 2 == 0;
    const Halfspace h{eta, eta.dot(y) + (active ? -margin : margin)};
    const auto fwd = project_halfspace(y, h);
    hs_active += fwd.active;
    const auto g = project_halfspace_backward(y, h, fwd, w);
    const Vector fd_y = central_gradient([&](const Vector& v) { return w.dot(project_halfspace(v, h).u); }, y);
    const Vector fd_eta =
        central_gradient([&](const Vector& e) { return w.dot(project_halfspace(y, Halfspace{e, h.zeta}).u); }, eta);
    const Vector fd_zeta = central_gradient(
        [&](const Vector& z) { return w.dot(project_halfspace(y, Halfspace{eta, z(0)}).u); },
        Vector::Constant(1, h.zeta));
    hs_err = std::max({hs_err, rel_error(g.d_u_hat, fd_y), rel_error(g.d_eta, fd_eta),
                       rel_error(Vector::Constant(1, g.d_zeta), fd_zeta)});
  }

  for (int i = 0; i < 200; ++i) {
    const int a = uniform_int(1, 6, rng), m = uniform_int(1, 5, rng);
    Vector u0;
    const SocConstraint c = random_soc(a, m, rng, &u0);
    Vector y = u0;
    if (i % 2 == 0)
      do y = 3.0 * normal_vector(a, rng);
      while (c.violation(y) < 1e-2);
    const auto fwd = project_soc_forward(y, c, tight());
    soc_active += !fwd.mu.isZero(0.0);
    const Vector w = normal_vector(a, rng);
    const auto g = project_soc_backward(fwd, w);
    const Vector fd_y =
        central_gradient([&](const Vector& v) { return w.dot(project_soc_forward(v, c, tight()).u); }, y);
    const Matrix fd_g = central_gradient_matrix(
        [&](const Matrix& gm) { return w.dot(project_dual(y, gm, fwd.h, DualCone::Soc, tight()).u); }, fwd.g);
    const Vector fd_h = central_gradient(
        [&](const Vector& hv) { return w.dot(project_dual(y, fwd.g, hv, DualCone::Soc, tight()).u); }, fwd.h);
    soc_err = std::max({soc_err, rel_error(g.d_y, fd_y), rel_error(g.d_g, fd_g), rel_error(g.d_h, fd_h)});
  }

  for (int i = 0; i < 200; ++i) {
    const int a = uniform_int(1, 6, rng);
    Vector u0;
    const Polyhedron p = random_polyhedron(a, 4, rng, &u0);
    Vector y = u0;
    if (i % 2 == 0)
      do y = 3.0 * normal_vector(a, rng);
      while (p.violation(y) < 1e-2);
    const auto fwd = project_polyhedron_forward(y, p, tight());
    poly_active += !fwd.mu.isZero(0.0);
    const Vector w = normal_vector(a, rng);
    const auto grads = project_polyhedron_backward(fwd, w);
    const Polyhedron dp = unstack_polyhedron_gradient(grads);
    const Vector fd_y =
        central_gradient([&](const Vector& v) { return w.dot(project_polyhedron_forward(v, p, tight()).u); }, y);
    const Matrix fd_h = central_gradient_matrix(
        [&](const Matrix& hm) { return w.dot(project_polyhedron_forward(y, Polyhedron{hm, p.g}, tight()).u); }, p.h);
    const Vector fd_g = central_gradient(
        [&](const Vector& gv) { return w.dot(project_polyhedron_forward(y, Polyhedron{p.h, gv}, tight()).u); }, p.g);
    poly_err = std::max({poly_err, rel_error(grads.d_y, fd_y), rel_error(dp.h, fd_h), rel_error(dp.g, fd_g)});
  }

  // Policy gradients on tiny networks, every safe-set kind, plus a short rollout.
  const std::vector<EnvInstance> envs = {gen_synthetic_nldi(0, true), gen_synthetic_nldi(1, false),
                                         gen_synthetic_pldi(0), gen_synthetic_hinf(0)};
  int policies = 0, projected = 0;
  for (const EnvInstance& env : envs) {
    const RobustCertificate robust = synthesize_for(env, 0.1), lqr = lqr_for(env);
    for (Method m : {Method::Mbp, Method::RobustMbp}) {
      RobustPolicy p = make_policy(m, env, robust, lqr, 0);
      p.projection = tight();
      for (int k = 0; k < 5; ++k) {
        p.net = Mlp::create({env.states(), 3, env.actions()}, 100 + k, false);
        p.net.unflatten(20.0 * p.net.flatten());
        const Vector x = normal_vector(env.states(), rng), w = normal_vector(env.actions(), rng);
        PolicyTape tape;
        policy_forward(p, x, &tape);
        projected += (tape.u - tape.u_hat).norm() > 1e-9;
        const Vector d = policy_backward(p, tape, w).d_params;
        const Vector fd = central_gradient(
            [&](const Vector& th) {
              RobustPolicy q = p;
              q.net.unflatten(th);
              return w.dot(policy_forward(q, x));
            },
            p.net.flatten());
        pol_err = std::max(pol_err, rel_error(d, fd));
        ++policies;
      }
      EnvInstance short_env = env;
      short_env.horizon = 5;
      const std::vector<Vector> x0s = {normal_vector(env.states(), rng), normal_vector(env.states(), rng)};
      const CostGradient cg = rollout_gradient(p, short_env, x0s);
      const Vector fd = central_gradient(
          [&](const Vector& th) {
            RobustPolicy q = p;
            q.net.unflatten(th);
            return rollout_gradient(q, short_env, x0s).mean_cost;
          },
          p.net.flatten());
      roll_err = std::max(roll_err, rel_error(cg.d_params, fd));
    }
  }

  Outcome o;
  const bool regimes = hs_active == 100 && soc_active == 100 && poly_active == 100;
  o.pass = regimes && hs_err <= tol && soc_err <= tol && poly_err <= tol && pol_err <= tol && roll_err <= tol;
  o.detail = "max rel err: halfspace " + num(hs_err) + ", soc " + num(soc_err) + ", polyhedral " + num(poly_err) +
             " (200 each, active " + std::to_string(hs_active) + "/" + std::to_string(soc_active) + "/" +
             std::to_string(poly_active) + "), policy " + num(pol_err) + " (" + std::to_string(policies) +
             " tiny nets, " + std::to_string(projected) + " with the projection active), rollout " + num(roll_err) + " (tol 1e-4)";
  return o;
}

// Fraction of flagged steps whose excess is covered by the Euler step term:
// V(x') - (x' - x)^T P (x' - x) <= e^{-alpha dt} V(x) (1 + eps) (+ supply).
bool euler_explained(const Trajectory& t, int k, const RobustCertificate& cert, const EnvInstance& env) {
  const Vector& x = t.x[k];
  const Vector& xn = t.x[k + 1];
  const Vector dx = xn - x;
  double supply = 0.0;
  if (const auto* s = std::get_if<HinfSystem>(&env.system))
    supply = env.dt * cert.multiplier.value_or(1.0) * s->gamma * s->gamma * t.w[k].squaredNorm();
  return xn.dot(cert.P * xn) - dx.dot(cert.P * dx) <=
         std::exp(-cert.alpha * env.dt) * x.dot(cert.P * x) * (1.0 + 1e-3) + supply;
}

// 3. Certificates: LMI residuals and closed-loop monitoring of u = K x.
Outcome certificate_validity() {
  struct Case {
    EnvInstance env;
    std::string name;
  };
  std::vector<Case> cases;
  for (std::uint64_t s = 0; s < 10; ++s)
    cases.push_back({gen_synthetic_nldi(s, s % 2 == 0), "nldi" + std::to_string(s)});
  for (std::uint64_t s = 0; s < 5; ++s) cases.push_back({gen_synthetic_pldi(s), "pldi" + std::to_string(s)});
  for (std::uint64_t s = 0; s < 5; ++s) cases.push_back({gen_synthetic_hinf(s), "hinf" + std::to_string(s)});

  double worst_residual = -INFINITY;
  int violations = 0, coarse_flags = 0, inadmissible = 0, failures = 0, episodes = 0;
  std::string failed;
  for (const Case& c : cases) {
    RobustCertificate cert;
    try {
      cert = synthesize_for(c.env, 0.1);
    } catch (const std::exception& e) {
      ++failures;
      failed += " " + c.name;
      continue;
    }
    for (const Matrix& b : lmi_blocks_for(c.env, cert)) worst_residual = std::max(worst_residual, max_eigenvalue(b));
    const RobustPolicy policy = make_policy(Method::RobustLqr, c.env, cert, cert, 0);
    for (int ep = 0; ep < 100; ++ep) {
      const std::uint64_t seed = derive_seed(0xC3, static_cast<std::uint64_t>(ep));
      EnvInstance fine = c.env;
      // A fresh random admissible disturbance per episode.
      fine.disturbance_net = Mlp::create(
          {c.env.states(), 32, 32, static_cast<int>(c.env.disturbance_net.outputs())}, derive_seed(seed, 1), false);
      fine.dt = 1e-3;
      fine.horizon = 2000;
      const Vector x0 = sample_initial_state(fine, seed);
      const Trajectory t = rollout(policy, fine, x0);
      violations += lyapunov_monitor(t, cert, fine).violations;
      ++episodes;
      if (const auto* s = std::get_if<NldiSystem>(&fine.system))
        for (int k = 0; k < t.steps; ++k)
          inadmissible += t.w[k].norm() > (s->C * t.x[k] + s->D * t.u[k]).norm() + 1e-9;
      EnvInstance coarse = fine;
      coarse.dt = c.env.dt;
      coarse.horizon = c.env.horizon;
      coarse_flags += lyapunov_monitor(rollout(policy, coarse, x0), cert, coarse).violations;
    }
  }
  Outcome o;
  o.pass = failures == 0 && worst_residual <= 1e-6 && violations == 0 && inadmissible == 0;
  o.detail = "20 instances (10 NLDI, 5 PLDI, 5 H-inf): synthesis failures " + std::to_string(failures) + failed +
             ", max LMI eigenvalue " + num(worst_residual) + " (tol 1e-6), monitor violations " +
             std::to_string(violations) + " over " + std::to_string(episodes) +
             " episodes at dt 1e-3 (eps 1e-3), inadmissible disturbance steps " + std::to_string(inadmissible);
  o.info.push_back("at the environments' own dt (0.01) the same episodes give " + std::to_string(coarse_flags) +
                   " monitor flags; see the decisions log on Euler discretization");
  return o;
}

struct SafetyTally {
  int policies = 0, episodes = 0, flags = 0, divergences = 0, explained = 0;
  double worst_surrogate = -INFINITY;
};

void tally(SafetyTally& s, const Trajectory& t, const RobustCertificate& cert, const EnvInstance& env) {
  const MonitorReport m = lyapunov_monitor(t, cert, env);
  ++s.episodes;
  s.flags += m.violations;
  s.divergences += t.diverged;
  for (int k : m.flagged) s.explained += euler_explained(t, k, cert, env);
  for (double v : m.surrogate) s.worst_surrogate = std::max(s.worst_surrogate, v);
}

// 4. Safety during training of robust MBP on NLDI-0. The monitor's epsilon is
// stated for dt 1e-3, so every intermediate policy is monitored there; the
// environment's own dt is checked for divergence and its flags are reported.
Outcome safety_during_training() {
  const PreparedEnv prep = prepare_env(gen_synthetic_nldi(0, true), 0.1);
  const EnvInstance& env = prep.env;
  const RobustCertificate& cert = prep.robust;
  EnvInstance fine_env = env;
  fine_env.dt = 1e-3;
  fine_env.horizon = 2000;
  TrainSettings settings;
  settings.updates = 200;
  settings.curve_episodes = 5;
  settings.curve_adversarial = false;
  const AdversaryConfig adversary;

  SafetyTally fine_orig, fine_adv, orig, adv;
  auto evaluate_policy = [&](int update, const RobustPolicy& p) {
    ++orig.policies;
    EvalOptions opts = eval_options(derive_seed(0x5AFE, static_cast<std::uint64_t>(update)), 3, adversary);
    opts.keep_trajectories = true;
    for (const Trajectory& t : evaluate(p, fine_env, EvalMode::Original, opts).trajectories)
      tally(fine_orig, t, cert, fine_env);
    opts.episodes = 1;
    for (const Trajectory& t : evaluate(p, fine_env, EvalMode::Adversarial, opts).trajectories)
      tally(fine_adv, t, cert, fine_env);
    opts.episodes = 5;
    for (const Trajectory& t : evaluate(p, env, EvalMode::Original, opts).trajectories) tally(orig, t, cert, env);
    opts.episodes = 2;
    for (const Trajectory& t : evaluate(p, env, EvalMode::Adversarial, opts).trajectories) tally(adv, t, cert, env);
  };
  evaluate_policy(0, make_policy(Method::RobustMbp, env, prep.robust, prep.lqr, derive_seed(0, 0x7E7)));
  const MethodRun run = run_method(prep, Method::RobustMbp, 0, settings, adversary, evaluate_policy);

  Outcome o;
  const int flags = fine_orig.flags + fine_adv.flags;
  const int divergences = fine_orig.divergences + fine_adv.divergences + orig.divergences + adv.divergences +
                          run.train.training_divergences;
  o.pass = flags == 0 && divergences == 0;
  o.detail = std::to_string(orig.policies) + " policies (200 updates); at dt 1e-3: original " +
             std::to_string(fine_orig.episodes) + " episodes " + std::to_string(fine_orig.flags) + " flags " +
             std::to_string(fine_orig.divergences) + " divergences, adversarial " + std::to_string(fine_adv.episodes) +
             " episodes " + std::to_string(fine_adv.flags) + " flags " + std::to_string(fine_adv.divergences) +
             " divergences; at dt 0.01: original " + std::to_string(orig.episodes) + " episodes " +
             std::to_string(orig.divergences) + " divergences, adversarial " + std::to_string(adv.episodes) +
             " episodes " + std::to_string(adv.divergences) + " divergences; training rollouts " +
             std::to_string(run.train.training_divergences) + " divergences";
  o.info.push_back("monitor flags at dt 0.01: evaluation " + std::to_string(orig.flags + adv.flags) +
                   " (covered by the Euler step term (x'-x)^T P (x'-x): " +
                   std::to_string(orig.explained + adv.explained) + "), training rollouts " +
                   std::to_string(run.train.lyapunov_violations));
  o.info.push_back("max continuous surrogate dV/dt + alpha V over all evaluated steps " +
                   num(std::max({orig.worst_surrogate, adv.worst_surrogate, fine_orig.worst_surrogate,
                                 fine_adv.worst_surrogate})));
  const CurvePoint& first = run.curve.front();
  const CurvePoint& last = run.curve.back();
  o.info.push_back("learning curve: original cost " + num(first.mean_cost_original) + " -> " +
                   num(last.mean_cost_original));
  return o;
}

// 5. Directional comparison on NLDI-0 with paired seeds.
Outcome directional_comparison() {
  ExperimentSpec spec;
  spec.env.family = EnvFamily::SyntheticNldi;
  spec.env.seed = 0;
  spec.env.d_zero = true;
  spec.methods = {Method::Lqr, Method::RobustLqr, Method::Mbp, Method::RobustMbp};
  spec.seeds = {0, 1, 2, 3, 4};
  spec.eval_episodes = 50;
  spec.train.updates = 200;
  spec.train.curve_episodes = 5;
  spec.train.curve_adversarial = false;
  const PreparedEnv prep = prepare_env(build_env(spec.env), 0.1);
  const CompareResult res = run_compare(spec, prep);
  auto row = [&](Method m, EvalMode mode) -> const CompareRow& {
    for (const CompareRow& r : res.rows)
      if (r.method == m && r.mode == mode) return r;
    throw std::logic_error("missing compare row");
  };
  const CompareRow& rlqr = row(Method::RobustLqr, EvalMode::Original);
  const CompareRow& rmbp = row(Method::RobustMbp, EvalMode::Original);
  const CompareRow& mbp = row(Method::Mbp, EvalMode::Original);
  int a_wins = 0;
  for (std::size_t i = 0; i < spec.seeds.size(); ++i) a_wins += rmbp.seed_costs[i] < rlqr.seed_costs[i];
  auto seeds_diverged = [&](Method m) {
    int n = 0;
    for (int v : row(m, EvalMode::Adversarial).seed_instabilities) n += v > 0;
    return n;
  };
  const int lqr_div = seeds_diverged(Method::Lqr), mbp_div = seeds_diverged(Method::Mbp);
  const int rlqr_div = seeds_diverged(Method::RobustLqr), rmbp_div = seeds_diverged(Method::RobustMbp);
  const bool a = a_wins >= 4;
  const bool b = mbp.mean_cost < rmbp.mean_cost;
  const bool c = lqr_div >= 1 && mbp_div >= 1 && rlqr_div == 0 && rmbp_div == 0;
  Outcome o;
  o.pass = a && b && c;
  o.detail = std::string("(a) ") + (a ? "ok" : "FAILED") + ": robust-mbp < robust-lqr on " + std::to_string(a_wins) +
             "/5 seeds; (b) " + (b ? "ok" : "FAILED") + ": mbp " + num(mbp.mean_cost) + " vs robust-mbp " +
             num(rmbp.mean_cost) + "; (c) " + (c ? "ok" : "FAILED") + ": seeds diverging under the adversary lqr " +
             std::to_string(lqr_div) + ", mbp " + std::to_string(mbp_div) + ", robust-lqr " +
             std::to_string(rlqr_div) + ", robust-mbp " + std::to_string(rmbp_div);
  for (const CompareRow& r : res.rows) {
    std::string line = std::string(to_string(r.method)) + " " + to_string(r.mode) + ": mean " + num(r.mean_cost) +
                       ", instabilities " + std::to_string(r.instability_count) + ", per seed";
    for (double v : r.seed_costs) line += " " + num(v);
    o.info.push_back(line);
  }
  // Largest state reached under the adversary, per non-robust method.
  for (const MethodRun& run : res.runs) {
    if (is_robust(run.method) || run.seed != 0) continue;
    EvalOptions opts = eval_options(run.seed, 10, spec.adversary);
    opts.keep_trajectories = true;
    double peak = 0.0;
    for (const Trajectory& t : evaluate(run.policy, prep.env, EvalMode::Adversarial, opts).trajectories)
      for (const Vector& x : t.x) peak = std::max(peak, x.cwiseAbs().maxCoeff());
    o.info.push_back(std::string(to_string(run.method)) + " seed 0, 10 adversarial episodes: max |x|_inf " + num(peak) +
                     " (divergence threshold 1e3)");
  }
  return o;
}

// 6. Bound-fit coverage.
Outcome bound_fit_soundness() {
  const CartPoleParams cp;
  const auto cart = [cp](const Vector& x, const Vector& u) { return cartpole_dynamics(x, u, cp); };
  BoundFitSettings settings;
  settings.grid_points = 50;
  const BoundFit fit = fit_norm_bounds(cart, cartpole_state_box(), cartpole_action_box(), settings);
  const double train = bound_fit_coverage(cart, fit, cartpole_state_box(), cartpole_action_box(), 50);
  const double held = bound_fit_coverage(cart, fit, cartpole_state_box(), cartpole_action_box(), 100);
  const QuadrotorParams qp;
  const auto quad = [qp](const Vector& x, const Vector& u) { return quadrotor_dynamics(x, u, qp); };
  const BoundFit qfit = fit_norm_bounds(quad, quadrotor_state_box(), quadrotor_action_box(), settings);
  const bool d_zero = qfit.D.size() > 0 && (qfit.D.array() == 0.0).all();
  Outcome o;
  o.pass = train == 1.0 && held >= 0.99 && d_zero;
  o.detail = "cart-pole coverage: training grid (50/var) " + num(train, 8) + ", held-out grid (100/var) " +
             num(held, 8) + "; quadrotor D " + std::to_string(qfit.D.rows()) + "x" +
             std::to_string(qfit.D.cols()) + (d_zero ? " exactly zero" : " NOT zero");
  return o;
}

// 7. Containment of robust policies started in B_init.
Outcome trajectory_containment() {
  Outcome o;
  o.pass = true;
  std::string detail;
  for (const EnvInstance& env : {make_cartpole(0), make_quadrotor(0)}) {
    const PreparedEnv prep = prepare_env(env, env.alpha);
    const SafeInitRegion init = find_safe_init_region(prep.robust.P, env.state_box);
    std::vector<std::pair<std::string, RobustPolicy>> policies;
    policies.emplace_back("robust-lqr", make_policy(Method::RobustLqr, env, prep.robust, prep.lqr, 0));
    RobustPolicy random = make_policy(Method::RobustMbp, env, prep.robust, prep.lqr, 0);
    random.net = Mlp::create({env.states(), 64, 64, env.actions()}, 77, false);
    policies.emplace_back("robust-mbp (random net)", random);
    TrainSettings settings;
    settings.updates = 50;
    settings.curve_episodes = 2;
    settings.curve_adversarial = false;
    settings.max_grad_norm = 10.0;
    policies.emplace_back("robust-mbp (50 updates)",
                          run_method(prep, Method::RobustMbp, 0, settings, AdversaryConfig{}).policy);
    settings.max_grad_norm = 0.0;
    policies.emplace_back("stress: robust-mbp (50 updates, unclipped gradients)",
                          run_method(prep, Method::RobustMbp, 0, settings, AdversaryConfig{}).policy);
    // Not part of the pass condition: a net large enough to push u far outside the
    // action box over which the norm bound was fitted.
    RobustPolicy stressed = random;
    stressed.net.unflatten(5.0 * stressed.net.flatten());
    policies.emplace_back("stress: robust-mbp (random net x5)", stressed);
    for (const auto& [name, policy] : policies) {
      int exits = 0;
      double peak = 0.0, u_peak = 0.0;
      for (int ep = 0; ep < 50; ++ep) {
        const Vector x0 = sample_box(init.box, derive_seed(0xB0C5, static_cast<std::uint64_t>(ep)));
        const Trajectory t = rollout(policy, env, x0);
        bool out = t.diverged;
        for (const Vector& x : t.x) {
          const double r = (x.cwiseAbs().array() / env.state_box.array()).maxCoeff();
          peak = std::max(peak, r);
          out = out || r > 1.0;
        }
        for (const Vector& u : t.u) u_peak = std::max(u_peak, (u.cwiseAbs().array() / env.action_box.array()).maxCoeff());
        exits += out;
      }
      const bool stress = name.rfind("stress", 0) == 0;
      if (!stress) o.pass = o.pass && exits == 0;
      if (stress) {
        o.info.push_back(std::string(to_string(env.family)) + " " + name + ": " + std::to_string(exits) +
                         "/50 exits, max |x_i|/xbar_i " + num(peak) + ", max |u_i|/ubar_i " + num(u_peak));
        continue;
      }
      detail += std::string(detail.empty() ? "" : "; ") + to_string(env.family) + " " + name + ": " +
                std::to_string(exits) + "/50 exits, max |x_i|/xbar_i " + num(peak);
      o.info.push_back(std::string(to_string(env.family)) + " " + name + ": B_init scale " + num(init.scale) +
                       ", max |u_i|/ubar_i " + num(u_peak));
    }
  }
  o.detail = detail;
  return o;
}

// 8. Analytic spot checks.
Outcome spot_checks() {
  // Standard normal density at 1, evaluated independently.
  const double phi1 = std::exp(-0.5) / std::sqrt(2.0 * M_PI);
  const EnvInstance h = gen_synthetic_hinf(0);
  const double sched = hinf_disturbance_norm(h, h.horizon / 2);
  const bool h_ok = std::abs(sched - 4.83941) <= 1e-4 && std::abs(20.0 * phi1 - 4.83941) <= 1e-4;

  // Cart-pole Jacobian at the origin from the analytic partial derivatives evaluated at phi = 0.
  double jac_err = 0.0;
  for (const CartPoleParams& p : {CartPoleParams{}, CartPoleParams{2.0, 0.5, 1.0, 9.81}, CartPoleParams{0.7, 0.3, 0.25, 9.0}}) {
    Matrix expected = Matrix::Zero(4, 5);
    expected(0, 1) = 1.0;
    expected(1, 2) = -p.pole_mass * p.gravity / p.cart_mass;
    expected(1, 4) = 1.0 / p.cart_mass;
    expected(2, 3) = 1.0;
    expected(3, 2) = p.gravity * (p.cart_mass + p.pole_mass) / (p.pole_length * p.cart_mass);
    expected(3, 4) = -1.0 / (p.pole_length * p.cart_mass);
    const Matrix j = cartpole_dynamics(Vector::Zero(4), Vector::Zero(1), p).jacobian;
    jac_err = std::max(jac_err, (j - expected).cwiseAbs().maxCoeff());
  }

  const auto [w, t] = soc_cone_point_projection((Vector(2) << 3.0, 4.0).finished(), 0.0);
  const double soc_err = std::max({std::abs(w(0) - 1.5), std::abs(w(1) - 2.0), std::abs(t - 2.5)});

  Outcome o;
  o.pass = h_ok && jac_err <= 1e-10 && soc_err <= 1e-9;
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", sched);
  o.detail = std::string("H-inf schedule at T/2 ") + buf + " (target 4.83941 +- 1e-4); cart-pole J_f(0,0) max error " +
             num(jac_err) + " over 3 parameter sets (tol 1e-10); SOC projection of ((3,4),0) error " + num(soc_err) +
             " (tol 1e-9)";
  return o;
}

struct Criterion {
  int id;
  const char* name;
  double limit_seconds;
  std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> criteria = {
      {1, "projection correctness", 60, projection_correctness},
      {2, "differentiation correctness", 120, differentiation_correctness},
      {3, "certificate validity", 300, certificate_validity},
      {4, "safety during training", 900, safety_during_training},
      {5, "directional comparison on NLDI-0", 1800, directional_comparison},
      {6, "bound-fit soundness", 300, bound_fit_soundness},
      {7, "trajectory containment", 300, trajectory_containment},
      {8, "analytic spot checks", 300, spot_checks},
  };
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));

  int failed = 0;
  for (const Criterion& c : criteria) {
    if (!selected.empty() && !selected.count(c.id)) continue;
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail = std::string("exception: ") + e.what();
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const bool in_time = secs < c.limit_seconds;
    const bool pass = o.pass && in_time;
    failed += !pass;
    std::cout << (pass ? "PASS" : "FAIL") << " criterion " << c.id << " (" << c.name << "): " << o.detail << "; "
              << num(secs) << " s (limit " << num(c.limit_seconds) << " s" << (in_time ? "" : ", EXCEEDED") << ")"
              << std::endl;
    for (const std::string& line : o.info) std::cout << "    " << line << std::endl;
  }
  return failed == 0 ? 0 : 1;
}
