#include "robctl/policy.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

namespace robctl {

Mlp Mlp::create(const std::vector<int>& widths, std::uint64_t seed, bool zero_final) {
  if (widths.size() < 2) throw std::invalid_argument("Mlp: need at least input and output widths");
  for (int w : widths)
    if (w < 1) throw std::invalid_argument("Mlp: widths must be positive");
  Mlp net;
  net.widths = widths;
  std::mt19937_64 rng(seed);
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(widths[l]));
    std::uniform_real_distribution<double> dist(-bound, bound);
    Matrix w(widths[l + 1], widths[l]);
    Vector b(widths[l + 1]);
    for (Eigen::Index i = 0; i < w.rows(); ++i)
      for (Eigen::Index j = 0; j < w.cols(); ++j) w(i, j) = dist(rng);
    for (Eigen::Index i = 0; i < b.size(); ++i) b(i) = dist(rng);
    net.weights.push_back(w);
    net.biases.push_back(b);
  }
  if (zero_final) {
    net.weights.back().setZero();
    net.biases.back().setZero();
  }
  return net;
}

Eigen::Index Mlp::parameter_count() const {
  Eigen::Index n = 0;
  for (int l = 0; l < layers(); ++l) n += weights[l].size() + biases[l].size();
  return n;
}

Vector Mlp::flatten() const {
  Vector out(parameter_count());
  Eigen::Index k = 0;
  for (int l = 0; l < layers(); ++l) {
    for (Eigen::Index i = 0; i < weights[l].rows(); ++i)
      for (Eigen::Index j = 0; j < weights[l].cols(); ++j) out(k++) = weights[l](i, j);
    out.segment(k, biases[l].size()) = biases[l];
    k += biases[l].size();
  }
  return out;
}

void Mlp::unflatten(const Vector& params) {
  if (params.size() != parameter_count()) throw std::invalid_argument("Mlp::unflatten: wrong parameter count");
  Eigen::Index k = 0;
  for (int l = 0; l < layers(); ++l) {
    for (Eigen::Index i = 0; i < weights[l].rows(); ++i)
      for (Eigen::Index j = 0; j < weights[l].cols(); ++j) weights[l](i, j) = params(k++);
    biases[l] = params.segment(k, biases[l].size());
    k += biases[l].size();
  }
}

void Mlp::validate() const {
  if (widths.size() < 2 || weights.size() + 1 != widths.size() || biases.size() != weights.size())
    throw std::invalid_argument("Mlp: inconsistent layer count");
  for (int l = 0; l < layers(); ++l)
    if (weights[l].rows() != widths[l + 1] || weights[l].cols() != widths[l] || biases[l].size() != widths[l + 1])
      throw std::invalid_argument("Mlp: layer " + std::to_string(l) + " has the wrong shape");
}

Vector mlp_forward(const Mlp& net, const Vector& x, MlpTape* tape) {
  if (x.size() != net.inputs()) throw std::invalid_argument("mlp_forward: input has the wrong dimension");
  if (tape) {
    tape->activations.clear();
    tape->activations.push_back(x);
  }
  Vector a = x;
  for (int l = 0; l < net.layers(); ++l) {
    Vector z = net.weights[l] * a + net.biases[l];
    a = (l + 1 < net.layers()) ? Vector(z.array().tanh()) : z;
    if (tape) tape->activations.push_back(a);
  }
  return a;
}

MlpGradient mlp_backward(const Mlp& net, const MlpTape& tape, const Vector& d_out) {
  if (tape.activations.size() != net.widths.size()) throw std::invalid_argument("mlp_backward: tape mismatch");
  MlpGradient out;
  out.d_params.resize(net.parameter_count());
  // Offsets of each layer's block in the flat vector.
  std::vector<Eigen::Index> offset(net.layers());
  Eigen::Index k = 0;
  for (int l = 0; l < net.layers(); ++l) {
    offset[l] = k;
    k += net.weights[l].size() + net.biases[l].size();
  }
  Vector delta = d_out;  // dL/dz for the current layer
  for (int l = net.layers() - 1; l >= 0; --l) {
    if (l + 1 < net.layers()) {
      const Vector& a = tape.activations[l + 1];
      delta = delta.cwiseProduct((1.0 - a.array().square()).matrix());
    }
    const Vector& in = tape.activations[l];
    Eigen::Index p = offset[l];
    for (Eigen::Index i = 0; i < net.weights[l].rows(); ++i)
      for (Eigen::Index j = 0; j < net.weights[l].cols(); ++j) out.d_params(p++) = delta(i) * in(j);
    out.d_params.segment(p, delta.size()) = delta;
    delta = net.weights[l].transpose() * delta;
  }
  out.d_x = delta;
  return out;
}

const char* to_string(SafeSetKind kind) {
  switch (kind) {
    case SafeSetKind::NldiSoc: return "nldi-soc";
    case SafeSetKind::Nldi0Halfspace: return "nldi0-halfspace";
    case SafeSetKind::PldiPoly: return "pldi-poly";
    case SafeSetKind::HinfSoc: return "hinf-soc";
    case SafeSetKind::None: return "none";
  }
  return "?";
}

SafeSetKind safe_set_kind_from_string(const std::string& name) {
  for (SafeSetKind k : {SafeSetKind::NldiSoc, SafeSetKind::Nldi0Halfspace, SafeSetKind::PldiPoly,
                        SafeSetKind::HinfSoc, SafeSetKind::None})
    if (name == to_string(k)) return k;
  throw std::invalid_argument("unknown safe-set kind '" + name + "'");
}

Mlp default_policy_net(int states, int actions, std::uint64_t seed) {
  return Mlp::create({states, 64, 64, actions}, seed, true);
}

void RobustPolicy::validate() const {
  net.validate();
  if (net.inputs() != states() || net.outputs() != actions())
    throw std::invalid_argument("RobustPolicy: network shape does not match K");
  if (kind == SafeSetKind::None) return;
  if (!cert) throw std::invalid_argument(std::string("RobustPolicy: kind ") + to_string(kind) + " needs a certificate");
  if (cert->P.rows() != states()) throw std::invalid_argument("RobustPolicy: certificate has the wrong dimension");
  const bool ok = (kind == SafeSetKind::NldiSoc || kind == SafeSetKind::Nldi0Halfspace)
                      ? std::holds_alternative<NldiSystem>(system)
                  : kind == SafeSetKind::PldiPoly ? std::holds_alternative<PldiSystem>(system)
                                                  : std::holds_alternative<HinfSystem>(system);
  if (!ok) throw std::invalid_argument(std::string("RobustPolicy: system does not match kind ") + to_string(kind));
}

Vector policy_forward(const RobustPolicy& policy, const Vector& x, PolicyTape* tape) {
  if (x.size() != policy.states()) throw std::invalid_argument("policy_forward: state has the wrong dimension");
  if (!x.allFinite()) throw std::invalid_argument("policy_forward: state is not finite");
  PolicyTape local;
  PolicyTape& t = tape ? *tape : local;
  t = PolicyTape{};
  t.x = x;
  t.u_hat = policy.K * x + mlp_forward(policy.net, x, &t.net);
  const RobustCertificate* cert = policy.cert ? &*policy.cert : nullptr;
  switch (policy.kind) {
    case SafeSetKind::None:
      t.u = t.u_hat;
      break;
    case SafeSetKind::Nldi0Halfspace:
      t.halfspace = nldi0_halfspace(*cert, std::get<NldiSystem>(policy.system), x);
      t.halfspace_projection = project_halfspace(t.u_hat, t.halfspace);
      t.u = t.halfspace_projection.u;
      break;
    case SafeSetKind::NldiSoc:
      t.dual = project_soc_forward(t.u_hat, nldi_safe_set(*cert, std::get<NldiSystem>(policy.system), x),
                                   policy.projection);
      t.u = t.dual.u;
      t.projection_inexact = !t.dual.converged;
      break;
    case SafeSetKind::PldiPoly:
      t.dual = project_polyhedron_forward(t.u_hat, pldi_polyhedron(*cert, std::get<PldiSystem>(policy.system), x),
                                          policy.projection);
      t.u = t.dual.u;
      t.projection_inexact = !t.dual.converged;
      break;
    case SafeSetKind::HinfSoc: {
      const HinfSafeSet set = hinf_soc(*cert, std::get<HinfSystem>(policy.system), x);
      if (const auto* single = std::get_if<SingletonSet>(&set)) {
        t.singleton = true;
        t.u = single->u;
      } else {
        t.dual = project_soc_forward(t.u_hat, std::get<SocConstraint>(set), policy.projection);
        t.u = t.dual.u;
        t.projection_inexact = !t.dual.converged;
      }
      break;
    }
  }
  return t.u;
}

PolicyGradient policy_backward(const RobustPolicy& policy, const PolicyTape& tape, const Vector& d_u) {
  if (d_u.size() != policy.actions()) throw std::invalid_argument("policy_backward: gradient has the wrong dimension");
  PolicyGradient out;
  const RobustCertificate* cert = policy.cert ? &*policy.cert : nullptr;
  Vector d_u_hat;
  Vector d_x_set = Vector::Zero(policy.states());
  switch (policy.kind) {
    case SafeSetKind::None:
      d_u_hat = d_u;
      break;
    case SafeSetKind::Nldi0Halfspace: {
      const auto g = project_halfspace_backward(tape.u_hat, tape.halfspace, tape.halfspace_projection, d_u);
      d_u_hat = g.d_u_hat;
      if (tape.halfspace_projection.active)
        d_x_set = nldi0_halfspace_vjp(*cert, std::get<NldiSystem>(policy.system), tape.x, g.d_eta, g.d_zeta);
      break;
    }
    case SafeSetKind::NldiSoc: {
      const auto g = project_soc_backward(tape.dual, d_u);
      d_u_hat = g.d_y;
      d_x_set = nldi_safe_set_vjp(*cert, std::get<NldiSystem>(policy.system), tape.x, unstack_soc_gradient(g));
      out.least_squares_fallback = g.least_squares_fallback;
      out.inexact = g.inexact;
      break;
    }
    case SafeSetKind::PldiPoly: {
      const auto g = project_polyhedron_backward(tape.dual, d_u);
      d_u_hat = g.d_y;
      d_x_set =
          pldi_polyhedron_vjp(*cert, std::get<PldiSystem>(policy.system), tape.x, unstack_polyhedron_gradient(g));
      out.least_squares_fallback = g.least_squares_fallback;
      out.inexact = g.inexact;
      break;
    }
    case SafeSetKind::HinfSoc: {
      const auto& sys = std::get<HinfSystem>(policy.system);
      if (tape.singleton) {
        // The action does not depend on the nominal action at all.
        d_u_hat = Vector::Zero(policy.actions());
        d_x_set = hinf_singleton_vjp(*cert, sys, d_u);
      } else {
        const auto g = project_soc_backward(tape.dual, d_u);
        d_u_hat = g.d_y;
        d_x_set = hinf_soc_vjp(*cert, sys, tape.x, unstack_soc_gradient(g));
        out.least_squares_fallback = g.least_squares_fallback;
        out.inexact = g.inexact;
      }
      break;
    }
  }
  const MlpGradient ng = mlp_backward(policy.net, tape.net, d_u_hat);
  out.d_params = ng.d_params;
  out.d_x = ng.d_x + policy.K.transpose() * d_u_hat + d_x_set;
  return out;
}

double safe_set_violation(const RobustPolicy& policy, const Vector& x, const Vector& u) {
  const RobustCertificate* cert = policy.cert ? &*policy.cert : nullptr;
  switch (policy.kind) {
    case SafeSetKind::None: return 0.0;
    case SafeSetKind::Nldi0Halfspace:
      return std::max(0.0, nldi0_halfspace(*cert, std::get<NldiSystem>(policy.system), x).violation(u));
    case SafeSetKind::NldiSoc:
      return std::max(0.0, nldi_safe_set(*cert, std::get<NldiSystem>(policy.system), x).violation(u));
    case SafeSetKind::PldiPoly:
      return std::max(0.0, pldi_polyhedron(*cert, std::get<PldiSystem>(policy.system), x).violation(u));
    case SafeSetKind::HinfSoc: {
      const HinfSafeSet set = hinf_soc(*cert, std::get<HinfSystem>(policy.system), x);
      if (const auto* single = std::get_if<SingletonSet>(&set)) return (u - single->u).norm();
      return std::max(0.0, std::get<SocConstraint>(set).violation(u));
    }
  }
  return 0.0;
}

}  // namespace robctl
