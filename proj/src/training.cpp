#include "robctl/training.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>

namespace robctl {

const char* to_string(Method method) {
  switch (method) {
    case Method::Lqr: return "lqr";
    case Method::RobustLqr: return "robust-lqr";
    case Method::Mbp: return "mbp";
    case Method::RobustMbp: return "robust-mbp";
  }
  return "?";
}

Method method_from_string(const std::string& name) {
  for (Method m : {Method::Lqr, Method::RobustLqr, Method::Mbp, Method::RobustMbp})
    if (name == to_string(m)) return m;
  throw std::invalid_argument("unknown method '" + name + "'");
}

const char* to_string(EvalMode mode) { return mode == EvalMode::Original ? "original" : "adversarial"; }

EvalMode eval_mode_from_string(const std::string& name) {
  if (name == "original") return EvalMode::Original;
  if (name == "adversarial") return EvalMode::Adversarial;
  throw std::invalid_argument("unknown evaluation mode '" + name + "'");
}

SafeSetKind robust_kind_for(const EnvInstance& env) {
  if (const auto* s = std::get_if<NldiSystem>(&env.system))
    return s->has_zero_d() ? SafeSetKind::Nldi0Halfspace : SafeSetKind::NldiSoc;
  if (std::holds_alternative<PldiSystem>(env.system)) return SafeSetKind::PldiPoly;
  return SafeSetKind::HinfSoc;
}

RobustCertificate synthesize_for(const EnvInstance& env, double alpha, const SynthesisSettings& settings) {
  if (const auto* s = std::get_if<NldiSystem>(&env.system)) return synth_nldi(*s, alpha, env.Q, env.R, settings);
  if (const auto* s = std::get_if<PldiSystem>(&env.system)) return synth_pldi(*s, alpha, env.Q, env.R, settings);
  return synth_hinf(std::get<HinfSystem>(env.system), alpha, settings);
}

std::vector<Matrix> lmi_blocks_for(const EnvInstance& env, const RobustCertificate& cert) {
  if (const auto* s = std::get_if<NldiSystem>(&env.system)) return nldi_lmi_blocks(*s, cert);
  if (const auto* s = std::get_if<PldiSystem>(&env.system)) return pldi_lmi_blocks(*s, cert);
  return hinf_lmi_blocks(std::get<HinfSystem>(env.system), cert);
}

RobustCertificate lqr_for(const EnvInstance& env, const SynthesisSettings& settings) {
  return std::visit(
      [&](const auto& sys) {
        using T = std::decay_t<decltype(sys)>;
        if constexpr (std::is_same_v<T, PldiSystem>) {
          Matrix a = Matrix::Zero(sys.states(), sys.states()), b = Matrix::Zero(sys.states(), sys.actions());
          for (int i = 0; i < sys.vertices(); ++i) {
            a += sys.A[i] / sys.vertices();
            b += sys.B[i] / sys.vertices();
          }
          return solve_lqr_nonrobust(a, b, env.Q, env.R, settings);
        } else {
          return solve_lqr_nonrobust(sys.A, sys.B, env.Q, env.R, settings);
        }
      },
      env.system);
}

RobustPolicy make_policy(Method method, const EnvInstance& env, const RobustCertificate& robust,
                         const RobustCertificate& lqr, std::uint64_t net_seed) {
  RobustPolicy p;
  p.net = default_policy_net(env.states(), env.actions(), net_seed);
  switch (method) {
    case Method::Lqr:
    case Method::Mbp: p.K = lqr.K; break;
    case Method::RobustLqr: p.K = robust.K; break;
    case Method::RobustMbp:
      p.K = robust.K;
      p.kind = robust_kind_for(env);
      p.cert = robust;
      std::visit([&](const auto& s) { p.system = s; }, env.system);
      break;
  }
  p.validate();
  return p;
}

bool diverged(const Vector& x) { return !x.allFinite() || x.cwiseAbs().maxCoeff() > kDivergenceThreshold; }

namespace {

double stage_cost(const EnvInstance& env, const Vector& x, const Vector& u) {
  return env.dt * (x.dot(env.Q * x) + u.dot(env.R * u));
}

void record_step(Trajectory& traj, const EnvInstance& env, const Vector& u, const Vector& w, const Vector& next) {
  const double c = stage_cost(env, traj.x.back(), u);
  traj.u.push_back(u);
  traj.w.push_back(w);
  traj.stage_cost.push_back(c);
  traj.cost += c;
  traj.x.push_back(next);
  ++traj.steps;
}

Vector unit_direction(const Vector& r) {
  const double n = r.norm();
  return n > 0.0 ? Vector(r / n) : Vector::Zero(r.size());
}

Vector unit_direction_vjp(const Vector& r, const Vector& d_dir) {
  const double n = r.norm();
  if (n == 0.0) return Vector::Zero(r.size());
  const Vector rh = r / n;
  return (d_dir - rh * rh.dot(d_dir)) / n;
}

}  // namespace

Trajectory rollout(const RobustPolicy& policy, const EnvInstance& env, const Vector& x0, RolloutTape* tape) {
  Trajectory traj;
  traj.x.push_back(x0);
  if (tape) {
    tape->policy.clear();
    tape->step.clear();
  }
  for (int t = 0; t < env.horizon; ++t) {
    const Vector& x = traj.x.back();
    if (diverged(x)) {
      traj.diverged = true;
      break;
    }
    PolicyTape ptape;
    StepTape stape;
    const Vector u = policy_forward(policy, x, tape ? &ptape : nullptr);
    if (!u.allFinite()) {
      traj.diverged = true;
      break;
    }
    const Vector next = env_step(env, x, u, t, &stape);
    record_step(traj, env, u, stape.w, next);
    if (tape) {
      tape->policy.push_back(std::move(ptape));
      tape->step.push_back(std::move(stape));
    }
  }
  if (!traj.diverged && diverged(traj.x.back())) traj.diverged = true;
  return traj;
}

CostGradient rollout_gradient(const RobustPolicy& policy, const EnvInstance& env, const std::vector<Vector>& x0s) {
  if (x0s.empty()) throw std::invalid_argument("rollout_gradient: need at least one initial state");
  CostGradient out;
  out.d_params = Vector::Zero(policy.net.parameter_count());
  const double scale = 1.0 / double(x0s.size());
  for (const Vector& x0 : x0s) {
    RolloutTape tape;
    Trajectory traj = rollout(policy, env, x0, &tape);
    out.mean_cost += scale * traj.cost;
    out.divergences += traj.diverged;
    Vector g = Vector::Zero(env.states());  // dL/dx_{t+1}
    for (int t = traj.steps - 1; t >= 0; --t) {
      const StepVjp sv = env_step_vjp(env, tape.step[t], g);
      const Vector& x = traj.x[t];
      const Vector d_u = sv.d_u + 2.0 * env.dt * (env.R * traj.u[t]);
      const PolicyGradient pg = policy_backward(policy, tape.policy[t], d_u);
      out.d_params += scale * pg.d_params;
      g = sv.d_x + pg.d_x + 2.0 * env.dt * (env.Q * x);
    }
    out.trajectories.push_back(std::move(traj));
  }
  out.finite = out.d_params.allFinite() && std::isfinite(out.mean_cost);
  return out;
}

MonitorReport lyapunov_monitor(const Trajectory& traj, const RobustCertificate& cert, const EnvInstance& env,
                               double eps) {
  MonitorReport rep;
  const Matrix& P = cert.P;
  const double decay = std::exp(-cert.alpha * env.dt);
  const HinfSystem* hinf = std::get_if<HinfSystem>(&env.system);
  const double sigma = cert.multiplier.value_or(1.0);
  for (int t = 0; t < traj.steps; ++t) {
    const Vector& x = traj.x[t];
    const Vector& next = traj.x[t + 1];
    const Vector& u = traj.u[t];
    double supply = 0.0;
    if (hinf) {
      supply = env.dt * sigma * hinf->gamma * hinf->gamma * traj.w[t].squaredNorm();
      rep.surrogate.push_back(hinf_dissipation(cert, *hinf, x, u, traj.w[t]));
    } else if (const auto* s = std::get_if<NldiSystem>(&env.system)) {
      rep.surrogate.push_back(nldi_worst_case_decrease(cert, *s, x, u));
    } else {
      rep.surrogate.push_back(pldi_worst_case_decrease(cert, std::get<PldiSystem>(env.system), x, u));
    }
    const double v = x.dot(P * x), vn = next.dot(P * next);
    ++rep.steps;
    if (!std::isfinite(vn) || vn > decay * v * (1.0 + eps) + supply) {
      ++rep.violations;
      rep.flagged.push_back(t);
    }
    if (v > 0.0) rep.worst_ratio = std::max(rep.worst_ratio, (vn - supply) / (decay * v));
  }
  return rep;
}

void AdversaryConfig::validate() const {
  if (replan_interval < 1 || horizon < replan_interval)
    throw std::invalid_argument("AdversaryConfig: need 1 <= replan interval <= horizon");
  if (inner_steps < 0 || !(inner_rate >= 0.0)) throw std::invalid_argument("AdversaryConfig: bad inner loop");
}

namespace {

// Adam on a flat parameter vector.
struct Adam {
  double rate, beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  Vector m, v;
  int t = 0;

  Adam(double r, Eigen::Index n) : rate(r), m(Vector::Zero(n)), v(Vector::Zero(n)) {}

  Vector step(const Vector& grad) {
    ++t;
    m = beta1 * m + (1.0 - beta1) * grad;
    v = beta2 * v + (1.0 - beta2) * grad.cwiseAbs2();
    const double c1 = 1.0 - std::pow(beta1, t), c2 = 1.0 - std::pow(beta2, t);
    return rate * (m / c1).cwiseQuotient(((v / c2).cwiseSqrt().array() + eps).matrix());
  }
};

}  // namespace

namespace {

const NldiSystem& nldi_or_throw(const EnvInstance& env) {
  if (!env.is_nldi()) throw std::invalid_argument("Adversary: defined for NLDI environments only");
  return env.nldi();
}

}  // namespace

Adversary::Adversary(const RobustPolicy& policy, const EnvInstance& env, const AdversaryConfig& config,
                     std::uint64_t seed)
    : policy_(policy), env_(env), sys_(nldi_or_throw(env)), config_(config) {
  config_.validate();
  std::vector<int> widths{env.states()};
  widths.insert(widths.end(), config_.hidden.begin(), config_.hidden.end());
  widths.push_back(sys_.disturbances());
  net_ = Mlp::create(widths, seed, false);
}

Vector Adversary::disturbance(const Vector& x, const Vector& u) const {
  const double bound = (sys_.C * x + sys_.D * u).norm();
  const Vector w = bound * unit_direction(mlp_forward(net_, x));
  if (w.norm() > bound * (1.0 + 1e-12) + 1e-300) throw std::logic_error("Adversary: disturbance left the ball");
  return w;
}

double Adversary::planned_cost(const Vector& x0, Vector* d_params) const {
  struct Frame {
    Vector x, u, raw;
    PolicyTape ptape;
    MlpTape ntape;
    double bound;
  };
  std::vector<Frame> frames;
  double cost = 0.0;
  Vector x = x0;
  const double dt = env_.dt;
  for (int k = 0; k < config_.horizon; ++k) {
    if (diverged(x)) break;
    Frame f;
    f.x = x;
    f.u = policy_forward(policy_, x, d_params ? &f.ptape : nullptr);
    if (!f.u.allFinite()) break;
    f.raw = mlp_forward(net_, x, &f.ntape);
    f.bound = (sys_.C * x + sys_.D * f.u).norm();
    const Vector w = f.bound * unit_direction(f.raw);
    cost += dt * (x.dot(env_.Q * x) + f.u.dot(env_.R * f.u));
    x = nldi_model_step(sys_, dt, x, f.u, w);
    frames.push_back(std::move(f));
  }
  if (!d_params) return cost;
  *d_params = Vector::Zero(net_.parameter_count());
  Vector g = Vector::Zero(x0.size());
  for (auto it = frames.rbegin(); it != frames.rend(); ++it) {
    const Frame& f = *it;
    Vector d_x = g + dt * sys_.A.transpose() * g + 2.0 * dt * (env_.Q * f.x);
    Vector d_u = dt * sys_.B.transpose() * g + 2.0 * dt * (env_.R * f.u);
    const Vector d_w = dt * sys_.G.transpose() * g;
    const Vector dir = unit_direction(f.raw);
    if (f.bound > 0.0) {
      const Vector c = (sys_.C * f.x + sys_.D * f.u) / f.bound;
      const double d_bound = d_w.dot(dir);
      d_x += d_bound * sys_.C.transpose() * c;
      d_u += d_bound * sys_.D.transpose() * c;
    }
    const MlpGradient ng = mlp_backward(net_, f.ntape, unit_direction_vjp(f.raw, f.bound * d_w));
    *d_params += ng.d_params;
    d_x += ng.d_x;
    d_x += policy_backward(policy_, f.ptape, d_u).d_x;
    g = d_x;
  }
  return cost;
}

void Adversary::plan(const Vector& x) {
  if (config_.inner_steps == 0) return;
  Adam adam(config_.inner_rate, net_.parameter_count());
  Vector params = net_.flatten();
  for (int i = 0; i < config_.inner_steps; ++i) {
    Vector grad;
    planned_cost(x, &grad);
    if (!grad.allFinite()) break;
    params += adam.step(grad);  // ascent
    net_.unflatten(params);
  }
}

Trajectory rollout_adversarial(const RobustPolicy& policy, const EnvInstance& env, const Vector& x0,
                               const AdversaryConfig& config, std::uint64_t seed) {
  Adversary adv(policy, env, config, seed);
  const NldiSystem& sys = env.nldi();
  Trajectory traj;
  traj.x.push_back(x0);
  for (int t = 0; t < env.horizon; ++t) {
    const Vector& x = traj.x.back();
    if (diverged(x)) {
      traj.diverged = true;
      break;
    }
    if (t % config.replan_interval == 0) adv.plan(x);
    const Vector u = policy_forward(policy, x);
    if (!u.allFinite()) {
      traj.diverged = true;
      break;
    }
    const Vector w = adv.disturbance(x, u);
    record_step(traj, env, u, w, nldi_model_step(sys, env.dt, x, u, w));
  }
  if (!traj.diverged && diverged(traj.x.back())) traj.diverged = true;
  return traj;
}

EvalResult evaluate(const RobustPolicy& policy, const EnvInstance& env, EvalMode mode, const EvalOptions& options) {
  if (options.episodes < 1) throw std::invalid_argument("evaluate: need at least one episode");
  EvalResult res;
  res.episodes = options.episodes;
  for (int i = 0; i < options.episodes; ++i) {
    const std::uint64_t episode_seed = derive_seed(options.seed, static_cast<std::uint64_t>(i));
    const Vector x0 = options.initial_state ? options.initial_state(episode_seed)
                                            : sample_initial_state(env, episode_seed);
    Trajectory traj = mode == EvalMode::Original
                          ? rollout(policy, env, x0)
                          : rollout_adversarial(policy, env, x0, options.adversary, derive_seed(episode_seed, 7));
    res.costs.push_back(traj.cost);
    res.instabilities += traj.diverged;
    if (options.monitor) res.lyapunov_violations += lyapunov_monitor(traj, *options.monitor, env).violations;
    if (options.keep_trajectories) res.trajectories.push_back(std::move(traj));
  }
  res.mean_cost = std::accumulate(res.costs.begin(), res.costs.end(), 0.0) / double(res.costs.size());
  return res;
}

void TrainConfig::validate() const {
  if (updates < 0 || rollouts < 1 || eval_interval < 1 || eval_episodes < 1)
    throw std::invalid_argument("TrainConfig: counts must be positive");
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate))
    throw std::invalid_argument("TrainConfig: learning rate must be nonnegative");
  if (!(max_grad_norm >= 0.0)) throw std::invalid_argument("TrainConfig: max_grad_norm must be nonnegative");
  adversary.validate();
}

TrainResult train_mbp(RobustPolicy policy, const EnvInstance& env, const TrainConfig& config) {
  config.validate();
  policy.validate();
  TrainResult res;
  const bool adversarial = config.eval_adversarial && env.is_nldi();
  const RobustCertificate* cert = (policy.kind != SafeSetKind::None && policy.cert) ? &*policy.cert : nullptr;

  auto record_curve = [&](int update) {
    EvalOptions opts;
    opts.episodes = config.eval_episodes;
    opts.seed = derive_seed(config.seed, 0xE7A1);
    opts.adversary = config.adversary;
    CurvePoint pt;
    pt.epoch = update;
    const EvalResult orig = evaluate(policy, env, EvalMode::Original, opts);
    pt.mean_cost_original = orig.mean_cost;
    pt.instability_count = orig.instabilities;
    if (adversarial) {
      const EvalResult adv = evaluate(policy, env, EvalMode::Adversarial, opts);
      pt.mean_cost_adversarial = adv.mean_cost;
      pt.instability_count += adv.instabilities;
    } else {
      pt.mean_cost_adversarial = std::nan("");
    }
    res.curve.push_back(pt);
  };

  Vector params = policy.net.flatten();
  Vector velocity = Vector::Zero(params.size());
  Adam adam(config.learning_rate, params.size());
  record_curve(0);
  for (int update = 1; update <= config.updates; ++update) {
    std::vector<Vector> x0s;
    for (int i = 0; i < config.rollouts; ++i)
      x0s.push_back(sample_initial_state(
          env, derive_seed(config.seed, static_cast<std::uint64_t>(update) * 1000003ULL + static_cast<std::uint64_t>(i))));
    CostGradient cg = rollout_gradient(policy, env, x0s);
    res.training_divergences += cg.divergences;
    if (cert)
      for (const Trajectory& traj : cg.trajectories) res.lyapunov_violations += lyapunov_monitor(traj, *cert, env).violations;
    if (!cg.finite) {
      ++res.skipped_updates;
    } else {
      const double norm = cg.d_params.norm();
      if (config.max_grad_norm > 0.0 && norm > config.max_grad_norm) {
        cg.d_params *= config.max_grad_norm / norm;
        ++res.clipped_updates;
      }
      switch (config.optimizer) {
        case Optimizer::GradientDescent: params -= config.learning_rate * cg.d_params; break;
        case Optimizer::Momentum:
          velocity = config.momentum * velocity + cg.d_params;
          params -= config.learning_rate * velocity;
          break;
        case Optimizer::Adam: params -= adam.step(cg.d_params); break;
      }
      policy.net.unflatten(params);
    }
    if (config.on_update) config.on_update(update, policy);
    if (update % config.eval_interval == 0) record_curve(update);
  }
  res.policy = std::move(policy);
  return res;
}

}  // namespace robctl
