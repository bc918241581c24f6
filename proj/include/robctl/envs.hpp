#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <variant>
#include <vector>

#include "robctl/policy.hpp"

namespace robctl {

/// Independent stream seed derived from (seed, stream) by splitmix64 mixing.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

enum class EnvFamily { SyntheticNldi, SyntheticPldi, SyntheticHinf, CartPole, Quadrotor, Microgrid };

const char* to_string(EnvFamily family);
EnvFamily env_family_from_string(const std::string& name);

enum class DisturbanceKind { RandomNetNormBound, HullWeightsNet, AttenuatingL2, None };

const char* to_string(DisturbanceKind kind);

struct CartPoleParams {
  double cart_mass = 1.0;
  double pole_mass = 0.1;
  double pole_length = 0.5;
  double gravity = 9.81;
};

struct QuadrotorParams {
  double mass = 0.486;
  double arm_length = 0.25;
  double inertia = 0.00383;
  double gravity = 9.81;
};

/// Entry-wise quadratic bounds w_i^2 <= xi^T F_i xi on the linearization error,
/// xi = (x, u), and the stacked NLDI matrices built from them.
struct BoundFit {
  std::vector<int> rows;      // nonlinear rows of f, in order
  std::vector<Matrix> f;      // F_i over the full xi = (x, u), PSD after repair
  std::vector<double> scale;  // tau_i >= 1 applied after the PSD projection
  Matrix C, D;
  int grid_points = 0;
  /// Half-widths of the fitting box.
  Vector x_box, u_box;
  /// Fraction of training-grid points covered, per row.
  std::vector<double> train_coverage;
};

using EnvSystem = std::variant<NldiSystem, PldiSystem, HinfSystem>;

struct EnvInstance {
  EnvFamily family = EnvFamily::SyntheticNldi;
  std::uint64_t seed = 0;
  EnvSystem system;
  Matrix Q, R;
  double dt = 0.01;
  int horizon = 200;
  /// Default stability rate for synthesis on this environment.
  double alpha = 0.1;

  DisturbanceKind disturbance = DisturbanceKind::RandomNetNormBound;
  /// Fixed random network shaping the disturbance direction (or the hull weights).
  Mlp disturbance_net;
  double hinf_amplitude = 20.0;
  /// Physical domains: fraction of the remaining bound budget used by the
  /// additional random disturbance on top of the linearization error.
  double extra_disturbance = 0.1;

  CartPoleParams cartpole;
  QuadrotorParams quadrotor;
  /// Physical domains: half-widths of the box on which the bound was fitted (B_NLDI) and of the action box.
  Vector state_box;
  Vector action_box;

  int states() const;
  int actions() const;
  bool is_nldi() const { return std::holds_alternative<NldiSystem>(system); }
  bool is_physical() const { return family == EnvFamily::CartPole || family == EnvFamily::Quadrotor; }
  const NldiSystem& nldi() const { return std::get<NldiSystem>(system); }
  void validate() const;
};

/// s = 5, a = 3, d = k = 2; A, B, G, C, D standard normal (D = 0 when d_zero);
/// Q = Q^1/2^T Q^1/2 + eps I, R likewise, with standard normal square roots.
EnvInstance gen_synthetic_nldi(std::uint64_t seed, bool d_zero);
/// L = 3 vertices A_i = A_0 + spread * E_i (likewise B_i) with A_0, E_i standard
/// normal; s = 5, a = 3; softmax hull weights.
EnvInstance gen_synthetic_pldi(std::uint64_t seed, double vertex_spread = 0.3);
/// s = 5, a = 3, d = 2; disturbance norm 20 phi(2 t / T).
EnvInstance gen_synthetic_hinf(std::uint64_t seed, double gamma = 10.0);

/// Cost matrix regularization added to the Gram products of the random roots.
inline constexpr double kCostRegularization = 1e-3;

/// 20 phi(2 t / T) style attenuating amplitude at step index t.
double hinf_disturbance_norm(const EnvInstance& env, int t);

// Physical dynamics: x' = f(x, u), with analytic Jacobian [df/dx, df/du].
struct DynamicsEval {
  Vector xdot;
  Matrix jacobian;  // s x (s + a)
};

DynamicsEval cartpole_dynamics(const Vector& x, const Vector& u, const CartPoleParams& p);
DynamicsEval quadrotor_dynamics(const Vector& x, const Vector& u, const QuadrotorParams& p);
DynamicsEval physical_dynamics(const EnvInstance& env, const Vector& x, const Vector& u);

struct BoundFitSettings {
  int grid_points = 50;
  ConicSettings conic{};
  /// Fitting box half-widths for the physical constructors; empty selects the domain default.
  Vector x_box, u_box;
};

/// Fits the entry-wise bounds of the linearization error of `dynamics` about the
/// origin over the box |x| <= x_box, |u| <= u_box. Rows whose error is identically
/// zero are skipped; each remaining row must depend on exactly three entries of xi.
BoundFit fit_norm_bounds(const std::function<DynamicsEval(const Vector&, const Vector&)>& dynamics, const Vector& x_box,
                         const Vector& u_box, const BoundFitSettings& settings = {});

/// Fraction of points of a grid with n points per variable (over each row's
/// active variables) where w_i^2 <= xi^T F_i xi + 1e-9; minimum over rows.
double bound_fit_coverage(const std::function<DynamicsEval(const Vector&, const Vector&)>& dynamics,
                          const BoundFit& fit, const Vector& x_box, const Vector& u_box, int grid_points);

/// Linearizes the physical system at the origin and attaches the fitted bound.
EnvInstance make_cartpole(std::uint64_t seed, const CartPoleParams& params = {},
                          const BoundFitSettings& fit_settings = {});
EnvInstance make_quadrotor(std::uint64_t seed, const QuadrotorParams& params = {},
                           const BoundFitSettings& fit_settings = {});
/// Same, reusing a previously computed fit (its box becomes B_NLDI).
EnvInstance make_cartpole(std::uint64_t seed, const CartPoleParams& params, const BoundFit& fit);
EnvInstance make_quadrotor(std::uint64_t seed, const QuadrotorParams& params, const BoundFit& fit);

inline Vector cartpole_state_box() { return (Vector(4) << 1.5, 2.0, 0.2, 1.5).finished(); }
inline Vector cartpole_action_box() { return Vector::Constant(1, 10.0); }
inline Vector quadrotor_state_box() { return (Vector(6) << 1.0, 1.0, 0.15, 0.6, 0.6, 1.3).finished(); }
inline Vector quadrotor_action_box() { return Vector::Constant(2, 1.0); }

/// Microgrid NLDI from given A, B, G: C standard normal from `seed`, D = 0,
/// Q, R diagonal with 1 on the listed performance indices and 0.1 elsewhere.
EnvInstance make_microgrid(const Matrix& A, const Matrix& B, const Matrix& G, int outputs,
                           const std::vector<int>& performance_states, const std::vector<int>& performance_actions,
                           std::uint64_t seed);

Vector sample_initial_state(const EnvInstance& env, std::uint64_t seed);

/// Uniform sample from the box |x_i| <= half_width_i.
Vector sample_box(const Vector& half_width, std::uint64_t seed);

// One step of the original (simulated) dynamics with the environment's own
// disturbance model, forward Euler.
struct StepTape {
  Vector x, u, w;
  int t = 0;
  MlpTape net;
  Vector raw;        // disturbance network output
  double bound = 0;  // ||C x + D u|| (NLDI) or the H-infinity amplitude
  Vector error;      // physical domains: f(x, u) - A x - B u
  DynamicsEval dyn;  // physical domains
  double budget = 0; // physical domains: max(0, bound - ||error||)
};

/// Returns x_{t+1}. `w` in the tape is the NLDI-equivalent disturbance (the
/// linearization error plus the extra term for physical domains), the hull
/// weights for PLDI, or the H-infinity disturbance.
Vector env_step(const EnvInstance& env, const Vector& x, const Vector& u, int t, StepTape* tape = nullptr);

struct StepVjp {
  Vector d_x;
  Vector d_u;
};

StepVjp env_step_vjp(const EnvInstance& env, const StepTape& tape, const Vector& d_next);

/// x + dt (A x + B u + G w) for an NLDI with an externally chosen w.
Vector nldi_model_step(const NldiSystem& sys, double dt, const Vector& x, const Vector& u, const Vector& w);

/// Level set {x^T P x <= c} inside a box and a scaled box inside the level set.
struct SafeInitRegion {
  double level = 0.0;
  double scale = 0.0;
  Vector box;  // scale * outer box half-widths
};

/// c = min of x^T P x over the boundary of the box |x| <= half_width; the
/// inner box is the largest scaled copy whose corners satisfy V <= c.
SafeInitRegion find_safe_init_region(const Matrix& P, const Vector& half_width);

}  // namespace robctl
