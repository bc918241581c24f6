#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "robctl/envs.hpp"

namespace robctl {

enum class Method { Lqr, RobustLqr, Mbp, RobustMbp };

const char* to_string(Method method);
Method method_from_string(const std::string& name);
inline bool is_robust(Method m) { return m == Method::RobustLqr || m == Method::RobustMbp; }
inline bool is_learned(Method m) { return m == Method::Mbp || m == Method::RobustMbp; }

/// Safe-set kind used by robust policies on this environment.
SafeSetKind robust_kind_for(const EnvInstance& env);

/// Robust certificate for the environment's family at rate alpha.
RobustCertificate synthesize_for(const EnvInstance& env, double alpha, const SynthesisSettings& settings = {});
/// LMI blocks of the environment's family evaluated at the certificate.
std::vector<Matrix> lmi_blocks_for(const EnvInstance& env, const RobustCertificate& cert);
/// Non-robust LQR gain for the nominal model (vertex mean for PLDI).
RobustCertificate lqr_for(const EnvInstance& env, const SynthesisSettings& settings = {});

/// lqr / robust-lqr: u = K x with the matching gain. mbp: K_lqr x + net(x).
/// robust-mbp: projection of K x + net(x) onto the safe set of `robust`.
RobustPolicy make_policy(Method method, const EnvInstance& env, const RobustCertificate& robust,
                         const RobustCertificate& lqr, std::uint64_t net_seed);

/// ||x||_inf above this (or any non-finite entry) counts as divergence.
inline constexpr double kDivergenceThreshold = 1e3;

bool diverged(const Vector& x);

struct Trajectory {
  std::vector<Vector> x;  // x_0 .. x_steps
  std::vector<Vector> u;
  std::vector<Vector> w;
  std::vector<double> stage_cost;
  double cost = 0.0;
  bool diverged = false;
  int steps = 0;
};

struct RolloutTape {
  std::vector<PolicyTape> policy;
  std::vector<StepTape> step;
};

/// Original dynamics of the environment with its own disturbance model. Cost is
/// sum_t dt (x_t^T Q x_t + u_t^T R u_t); the episode stops at divergence.
Trajectory rollout(const RobustPolicy& policy, const EnvInstance& env, const Vector& x0, RolloutTape* tape = nullptr);

struct CostGradient {
  double mean_cost = 0.0;
  Vector d_params;
  int divergences = 0;
  bool finite = true;
  std::vector<Trajectory> trajectories;
};

/// Mean episode cost over the initial states and its gradient with respect to
/// the policy network parameters (backpropagation through the rollouts).
CostGradient rollout_gradient(const RobustPolicy& policy, const EnvInstance& env, const std::vector<Vector>& x0s);

struct MonitorReport {
  int violations = 0;
  int steps = 0;
  std::vector<int> flagged;
  /// Model surrogate per step: worst-case dV/dt + alpha V (NLDI, PLDI) or the
  /// dissipation E(x, u, w) (H-infinity).
  std::vector<double> surrogate;
  /// max_t V(x_{t+1}) / (e^{-alpha dt} V(x_t)), 0 when V(x_t) = 0 throughout.
  double worst_ratio = 0.0;
};

/// Flags step t when V(x_{t+1}) > e^{-alpha dt} V(x_t) (1 + eps) + dt sigma gamma^2 ||w_t||^2,
/// the last term only for H-infinity certificates (their supply rate).
MonitorReport lyapunov_monitor(const Trajectory& traj, const RobustCertificate& cert, const EnvInstance& env,
                               double eps = 1e-3);

struct AdversaryConfig {
  int replan_interval = 10;
  int horizon = 40;
  int inner_steps = 20;
  double inner_rate = 1e-2;
  std::vector<int> hidden = {32, 32};

  void validate() const;
};

/// Disturbance network optimized by gradient ascent through the NLDI model and
/// the frozen policy; emits w = ||C x + D u|| r / ||r|| (0 when r = 0).
class Adversary {
 public:
  Adversary(const RobustPolicy& policy, const EnvInstance& env, const AdversaryConfig& config, std::uint64_t seed);

  /// Re-optimizes the network for the horizon starting at x.
  void plan(const Vector& x);
  Vector disturbance(const Vector& x, const Vector& u) const;
  const Mlp& net() const { return net_; }

 private:
  double planned_cost(const Vector& x0, Vector* d_params) const;

  const RobustPolicy& policy_;
  const EnvInstance& env_;
  const NldiSystem& sys_;
  AdversaryConfig config_;
  Mlp net_;
};

/// NLDI-model rollout with the adversary replanning every replan_interval steps.
Trajectory rollout_adversarial(const RobustPolicy& policy, const EnvInstance& env, const Vector& x0,
                               const AdversaryConfig& config, std::uint64_t seed);

enum class EvalMode { Original, Adversarial };

const char* to_string(EvalMode mode);
EvalMode eval_mode_from_string(const std::string& name);

struct EvalOptions {
  int episodes = 50;
  std::uint64_t seed = 0;
  AdversaryConfig adversary{};
  /// Monitor every episode against this certificate when set.
  const RobustCertificate* monitor = nullptr;
  /// Initial state for an episode seed; sample_initial_state when empty.
  std::function<Vector(std::uint64_t)> initial_state;
  bool keep_trajectories = false;
};

struct EvalResult {
  double mean_cost = 0.0;
  int instabilities = 0;
  int episodes = 0;
  int lyapunov_violations = 0;
  std::vector<double> costs;
  std::vector<Trajectory> trajectories;
};

/// Episode i starts from the state drawn with derive_seed(seed, i), so runs
/// with the same seed are paired across policies.
EvalResult evaluate(const RobustPolicy& policy, const EnvInstance& env, EvalMode mode, const EvalOptions& options);

enum class Optimizer { GradientDescent, Momentum, Adam };

struct TrainConfig {
  int updates = 1000;
  int rollouts = 20;
  double learning_rate = 1e-4;
  std::uint64_t seed = 0;
  Optimizer optimizer = Optimizer::GradientDescent;
  double momentum = 0.9;
  /// Rescale the batch gradient to this Euclidean norm when larger; 0 disables.
  double max_grad_norm = 0.0;
  /// Learning-curve point every eval_interval updates (and at update 0).
  int eval_interval = 10;
  int eval_episodes = 50;
  bool eval_adversarial = true;
  AdversaryConfig adversary{};
  /// Called with the update index and the policy after each update.
  std::function<void(int, const RobustPolicy&)> on_update;

  void validate() const;
};

struct CurvePoint {
  int epoch = 0;
  double mean_cost_original = 0.0;
  double mean_cost_adversarial = 0.0;
  int instability_count = 0;
};

struct TrainResult {
  RobustPolicy policy;
  std::vector<CurvePoint> curve;
  int skipped_updates = 0;
  int clipped_updates = 0;
  /// Over every training rollout (robust kinds only).
  int lyapunov_violations = 0;
  int training_divergences = 0;
};

TrainResult train_mbp(RobustPolicy policy, const EnvInstance& env, const TrainConfig& config);

}  // namespace robctl
