#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "robctl/projection.hpp"

namespace robctl {

/// Fully connected network with tanh hidden layers and a linear output layer.
/// Parameters flatten layer by layer, each layer's weights (row-major) then its bias.
struct Mlp {
  std::vector<int> widths;      // input, hidden..., output
  std::vector<Matrix> weights;  // weights[l] is widths[l+1] x widths[l]
  std::vector<Vector> biases;

  /// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) initialization for every weight and bias;
  /// zero_final zeroes the output layer.
  static Mlp create(const std::vector<int>& widths, std::uint64_t seed, bool zero_final = true);

  int inputs() const { return widths.front(); }
  int outputs() const { return widths.back(); }
  int layers() const { return static_cast<int>(weights.size()); }
  Eigen::Index parameter_count() const;
  Vector flatten() const;
  void unflatten(const Vector& params);
  void validate() const;
};

struct MlpTape {
  /// activations[0] is the input, activations[l] the output of layer l (post-tanh for hidden layers).
  std::vector<Vector> activations;
};

Vector mlp_forward(const Mlp& net, const Vector& x, MlpTape* tape = nullptr);

struct MlpGradient {
  Vector d_params;  // flatten() order
  Vector d_x;
};

MlpGradient mlp_backward(const Mlp& net, const MlpTape& tape, const Vector& d_out);

enum class SafeSetKind { NldiSoc, Nldi0Halfspace, PldiPoly, HinfSoc, None };

const char* to_string(SafeSetKind kind);
SafeSetKind safe_set_kind_from_string(const std::string& name);

using PolicySystem = std::variant<std::monostate, NldiSystem, PldiSystem, HinfSystem>;

/// pi(x) = P_C(x)(K x + net(x)); kind None skips the projection.
struct RobustPolicy {
  SafeSetKind kind = SafeSetKind::None;
  Matrix K;
  std::optional<RobustCertificate> cert;
  PolicySystem system;
  Mlp net;
  ProjectionSettings projection;

  int states() const { return static_cast<int>(K.cols()); }
  int actions() const { return static_cast<int>(K.rows()); }
  void validate() const;
};

/// Default network: states -> 64 -> 64 -> actions, final layer zero.
Mlp default_policy_net(int states, int actions, std::uint64_t seed);

struct PolicyTape {
  Vector x;
  Vector u_hat;
  Vector u;
  MlpTape net;
  Halfspace halfspace;
  HalfspaceProjection halfspace_projection;
  ProjectionResult dual;
  bool singleton = false;
  /// The iterative projection hit its cap; the action may be slightly outside C(x).
  bool projection_inexact = false;
};

Vector policy_forward(const RobustPolicy& policy, const Vector& x, PolicyTape* tape = nullptr);

struct PolicyGradient {
  Vector d_params;
  Vector d_x;
  bool least_squares_fallback = false;
  bool inexact = false;
};

PolicyGradient policy_backward(const RobustPolicy& policy, const PolicyTape& tape, const Vector& d_u);

/// Constraint violation of u at x for the policy's safe set (0 for kind None).
double safe_set_violation(const RobustPolicy& policy, const Vector& x, const Vector& u);

}  // namespace robctl
