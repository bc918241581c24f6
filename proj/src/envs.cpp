#include "robctl/envs.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <stdexcept>
#include <type_traits>

namespace robctl {

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

const char* to_string(EnvFamily family) {
  switch (family) {
    case EnvFamily::SyntheticNldi: return "synthetic-nldi";
    case EnvFamily::SyntheticPldi: return "synthetic-pldi";
    case EnvFamily::SyntheticHinf: return "synthetic-hinf";
    case EnvFamily::CartPole: return "cartpole";
    case EnvFamily::Quadrotor: return "quadrotor";
    case EnvFamily::Microgrid: return "microgrid";
  }
  return "?";
}

EnvFamily env_family_from_string(const std::string& name) {
  for (EnvFamily f : {EnvFamily::SyntheticNldi, EnvFamily::SyntheticPldi, EnvFamily::SyntheticHinf,
                      EnvFamily::CartPole, EnvFamily::Quadrotor, EnvFamily::Microgrid})
    if (name == to_string(f)) return f;
  throw std::invalid_argument("unknown environment family '" + name + "'");
}

const char* to_string(DisturbanceKind kind) {
  switch (kind) {
    case DisturbanceKind::RandomNetNormBound: return "random-net-normbound";
    case DisturbanceKind::HullWeightsNet: return "hull-weights-net";
    case DisturbanceKind::AttenuatingL2: return "attenuating-l2";
    case DisturbanceKind::None: return "none";
  }
  return "?";
}

int EnvInstance::states() const {
  return std::visit([](const auto& s) { return s.states(); }, system);
}

int EnvInstance::actions() const {
  return std::visit([](const auto& s) { return s.actions(); }, system);
}

void EnvInstance::validate() const {
  std::visit([](const auto& s) { s.validate(); }, system);
  const int n = states(), a = actions();
  if (!(dt > 0.0) || !std::isfinite(dt)) throw std::invalid_argument("EnvInstance: dt must be positive");
  if (horizon < 1) throw std::invalid_argument("EnvInstance: horizon must be at least 1");
  if (Q.rows() != n || Q.cols() != n || R.rows() != a || R.cols() != a)
    throw std::invalid_argument("EnvInstance: cost matrices have the wrong shape");
  if (min_eigenvalue(symmetrize(Q)) < -1e-9) throw std::invalid_argument("EnvInstance: Q is not PSD");
  if (min_eigenvalue(symmetrize(R)) <= 0.0) throw std::invalid_argument("EnvInstance: R is not positive definite");
  if (disturbance != DisturbanceKind::None) {
    disturbance_net.validate();
    if (disturbance_net.inputs() != n) throw std::invalid_argument("EnvInstance: disturbance net input mismatch");
  }
  if (is_physical() && !is_nldi()) throw std::invalid_argument("EnvInstance: physical domains are NLDIs");
  if (is_physical() && (state_box.size() != n || action_box.size() != a))
    throw std::invalid_argument("EnvInstance: physical domain needs state and action boxes");
}

namespace {

Matrix normal_matrix(Eigen::Index r, Eigen::Index c, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < r; ++i)
    for (Eigen::Index j = 0; j < c; ++j) m(i, j) = n(rng);
  return m;
}

Matrix gram_cost(Eigen::Index n, std::mt19937_64& rng) {
  const Matrix root = normal_matrix(n, n, rng);
  return symmetrize(root.transpose() * root) + kCostRegularization * Matrix::Identity(n, n);
}

Mlp disturbance_net(int inputs, int outputs, std::uint64_t seed) {
  return Mlp::create({inputs, 32, 32, outputs}, derive_seed(seed, 0xD157), false);
}

constexpr int kStates = 5;
constexpr int kActions = 3;

}  // namespace

EnvInstance gen_synthetic_nldi(std::uint64_t seed, bool d_zero) {
  constexpr int d = 2, k = 2;
  std::mt19937_64 rng(derive_seed(seed, 1));
  NldiSystem sys;
  sys.A = normal_matrix(kStates, kStates, rng);
  sys.B = normal_matrix(kStates, kActions, rng);
  sys.G = normal_matrix(kStates, d, rng);
  sys.C = normal_matrix(k, kStates, rng);
  sys.D = normal_matrix(k, kActions, rng);
  if (d_zero) sys.D.setZero();
  EnvInstance env;
  env.family = EnvFamily::SyntheticNldi;
  env.seed = seed;
  env.Q = gram_cost(kStates, rng);
  env.R = gram_cost(kActions, rng);
  env.system = sys;
  env.disturbance = DisturbanceKind::RandomNetNormBound;
  env.disturbance_net = disturbance_net(kStates, d, seed);
  return env;
}

EnvInstance gen_synthetic_pldi(std::uint64_t seed, double vertex_spread) {
  constexpr int vertices = 3;
  std::mt19937_64 rng(derive_seed(seed, 2));
  const Matrix a0 = normal_matrix(kStates, kStates, rng);
  const Matrix b0 = normal_matrix(kStates, kActions, rng);
  PldiSystem sys;
  for (int i = 0; i < vertices; ++i) {
    sys.A.push_back(a0 + vertex_spread * normal_matrix(kStates, kStates, rng));
    sys.B.push_back(b0 + vertex_spread * normal_matrix(kStates, kActions, rng));
  }
  EnvInstance env;
  env.family = EnvFamily::SyntheticPldi;
  env.seed = seed;
  env.Q = gram_cost(kStates, rng);
  env.R = gram_cost(kActions, rng);
  env.system = sys;
  env.disturbance = DisturbanceKind::HullWeightsNet;
  env.disturbance_net = disturbance_net(kStates, vertices, seed);
  return env;
}

EnvInstance gen_synthetic_hinf(std::uint64_t seed, double gamma) {
  constexpr int d = 2;
  std::mt19937_64 rng(derive_seed(seed, 3));
  HinfSystem sys;
  sys.A = normal_matrix(kStates, kStates, rng);
  sys.B = normal_matrix(kStates, kActions, rng);
  sys.G = normal_matrix(kStates, d, rng);
  sys.gamma = gamma;
  sys.Q = gram_cost(kStates, rng);
  sys.R = gram_cost(kActions, rng);
  EnvInstance env;
  env.family = EnvFamily::SyntheticHinf;
  env.seed = seed;
  env.Q = sys.Q;
  env.R = sys.R;
  env.system = sys;
  env.disturbance = DisturbanceKind::AttenuatingL2;
  env.disturbance_net = disturbance_net(kStates, d, seed);
  return env;
}

double hinf_disturbance_norm(const EnvInstance& env, int t) {
  const double total = env.horizon * env.dt;
  const double z = 2.0 * (t * env.dt) / total;
  return env.hinf_amplitude * std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi);
}

DynamicsEval cartpole_dynamics(const Vector& x, const Vector& u, const CartPoleParams& p) {
  if (x.size() != 4 || u.size() != 1) throw std::invalid_argument("cartpole_dynamics: expects x in R^4, u in R^1");
  const double v = x(1), phi = x(2), om = x(3), f = u(0);
  const double s = std::sin(phi), c = std::cos(phi);
  const double mc = p.cart_mass, mp = p.pole_mass, l = p.pole_length, g = p.gravity;
  const double den = mc + mp * s * s;
  const double dden = 2.0 * mp * s * c;

  const double n1 = f + mp * s * (l * om * om - g * c);
  const double n1_phi = mp * (c * l * om * om - g * std::cos(2.0 * phi));
  const double n2 = (mc + mp) * g * s - f * c - mp * l * om * om * c * s;
  const double n2_phi = (mc + mp) * g * c + f * s - mp * l * om * om * std::cos(2.0 * phi);

  DynamicsEval out;
  out.xdot.resize(4);
  out.xdot << v, n1 / den, om, n2 / (l * den);
  out.jacobian = Matrix::Zero(4, 5);
  out.jacobian(0, 1) = 1.0;
  out.jacobian(1, 2) = (n1_phi * den - n1 * dden) / (den * den);
  out.jacobian(1, 3) = 2.0 * mp * s * l * om / den;
  out.jacobian(1, 4) = 1.0 / den;
  out.jacobian(2, 3) = 1.0;
  out.jacobian(3, 2) = (n2_phi * den - n2 * dden) / (l * den * den);
  out.jacobian(3, 3) = -2.0 * mp * om * c * s / den;
  out.jacobian(3, 4) = -c / (l * den);
  return out;
}

DynamicsEval quadrotor_dynamics(const Vector& x, const Vector& u, const QuadrotorParams& p) {
  if (x.size() != 6 || u.size() != 2) throw std::invalid_argument("quadrotor_dynamics: expects x in R^6, u in R^2");
  const double phi = x(2), vx = x(3), vz = x(4), om = x(5);
  const double s = std::sin(phi), c = std::cos(phi), g = p.gravity;
  DynamicsEval out;
  out.xdot.resize(6);
  out.xdot << vx * c - vz * s, vx * s + vz * c, om, vz * om - g * s,
      -vx * om - g * c + g + (u(0) + u(1)) / p.mass, p.arm_length / p.inertia * (u(0) - u(1));
  Matrix& j = out.jacobian;
  j = Matrix::Zero(6, 8);
  j(0, 2) = -vx * s - vz * c;
  j(0, 3) = c;
  j(0, 4) = -s;
  j(1, 2) = vx * c - vz * s;
  j(1, 3) = s;
  j(1, 4) = c;
  j(2, 5) = 1.0;
  j(3, 2) = -g * c;
  j(3, 4) = om;
  j(3, 5) = vz;
  j(4, 2) = g * s;
  j(4, 3) = -om;
  j(4, 5) = -vx;
  j(4, 6) = 1.0 / p.mass;
  j(4, 7) = 1.0 / p.mass;
  j(5, 6) = p.arm_length / p.inertia;
  j(5, 7) = -p.arm_length / p.inertia;
  return out;
}

DynamicsEval physical_dynamics(const EnvInstance& env, const Vector& x, const Vector& u) {
  switch (env.family) {
    case EnvFamily::CartPole: return cartpole_dynamics(x, u, env.cartpole);
    case EnvFamily::Quadrotor: return quadrotor_dynamics(x, u, env.quadrotor);
    default: throw std::invalid_argument("physical_dynamics: not a physical domain");
  }
}

namespace {

using DynamicsFn = std::function<DynamicsEval(const Vector&, const Vector&)>;

struct RowModel {
  int row;
  std::vector<int> active;  // indices into xi = (x, u)
};

// Linearization error of one row of f, xi given on the row's active variables.
struct ErrorEvaluator {
  const DynamicsFn& dynamics;
  Matrix j0;
  int states, actions;

  double operator()(int row, const std::vector<int>& active, const Vector& local) const {
    Vector xi = Vector::Zero(states + actions);
    for (std::size_t k = 0; k < active.size(); ++k) xi(active[k]) = local(static_cast<Eigen::Index>(k));
    const DynamicsEval e = dynamics(xi.head(states), xi.tail(actions));
    return e.xdot(row) - j0.row(row).dot(xi);
  }
};

// Rows whose Jacobian varies inside the box, with the variables it varies in.
std::vector<RowModel> nonlinear_rows(const DynamicsFn& dynamics, const Matrix& j0, const Vector& x_box,
                                     const Vector& u_box) {
  const int s = static_cast<int>(x_box.size()), a = static_cast<int>(u_box.size());
  Vector box(s + a);
  box << x_box, u_box;
  std::mt19937_64 rng(0x5EED);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  Matrix varies = Matrix::Zero(s, s + a);
  for (int trial = 0; trial < 64; ++trial) {
    Vector xi(s + a);
    for (int i = 0; i < s + a; ++i) xi(i) = box(i) * unit(rng);
    const DynamicsEval e = dynamics(xi.head(s), xi.tail(a));
    varies = varies.cwiseMax((e.jacobian - j0).cwiseAbs());
  }
  std::vector<RowModel> rows;
  for (int i = 0; i < s; ++i) {
    const double tol = 1e-12 * (1.0 + j0.row(i).cwiseAbs().maxCoeff());
    RowModel r{i, {}};
    for (int j = 0; j < s + a; ++j)
      if (varies(i, j) > tol) r.active.push_back(j);
    if (r.active.empty()) continue;
    if (r.active.size() > 4)
      throw std::invalid_argument("fit_norm_bounds: row " + std::to_string(i) + " depends on more than 4 variables");
    rows.push_back(r);
  }
  return rows;
}

// Calls fn(local point) for every point of an n^k grid over [-1, 1]^k scaled by half.
template <typename Fn>
void for_each_grid_point(const Vector& half, int n, Fn&& fn) {
  const auto k = half.size();
  std::vector<int> idx(static_cast<std::size_t>(k), 0);
  Vector p(k);
  while (true) {
    for (Eigen::Index d = 0; d < k; ++d)
      p(d) = half(d) * (-1.0 + 2.0 * idx[static_cast<std::size_t>(d)] / double(n - 1));
    fn(p);
    Eigen::Index d = 0;
    for (; d < k; ++d) {
      if (++idx[static_cast<std::size_t>(d)] < n) break;
      idx[static_cast<std::size_t>(d)] = 0;
    }
    if (d == k) break;
  }
}

// Upper-triangular features: xi_j^2 on the diagonal, 2 xi_j xi_l off it.
Vector quad_features(const Vector& z) {
  const auto k = z.size();
  Vector out(k * (k + 1) / 2);
  Eigen::Index m = 0;
  for (Eigen::Index j = 0; j < k; ++j)
    for (Eigen::Index l = j; l < k; ++l) out(m++) = (j == l ? 1.0 : 2.0) * z(j) * z(l);
  return out;
}

Matrix from_features(const Vector& v, Eigen::Index k) {
  Matrix f(k, k);
  Eigen::Index m = 0;
  for (Eigen::Index j = 0; j < k; ++j)
    for (Eigen::Index l = j; l < k; ++l) f(j, l) = f(l, j) = v(m++);
  return f;
}

constexpr double kCoverageSlack = 1e-9;

}  // namespace

BoundFit fit_norm_bounds(const DynamicsFn& dynamics, const Vector& x_box, const Vector& u_box,
                         const BoundFitSettings& settings) {
  const int s = static_cast<int>(x_box.size()), a = static_cast<int>(u_box.size());
  if (settings.grid_points < 2) throw std::invalid_argument("fit_norm_bounds: need at least 2 grid points");
  if ((x_box.array() <= 0.0).any() || (u_box.array() < 0.0).any())
    throw std::invalid_argument("fit_norm_bounds: the box must contain the origin in its interior");
  const DynamicsEval at0 = dynamics(Vector::Zero(s), Vector::Zero(a));
  if (at0.xdot.norm() > 1e-12) throw std::invalid_argument("fit_norm_bounds: the origin is not an equilibrium");
  const Matrix& j0 = at0.jacobian;
  Vector box(s + a);
  box << x_box, u_box;

  BoundFit fit;
  fit.grid_points = settings.grid_points;
  fit.x_box = x_box;
  fit.u_box = u_box;
  ErrorEvaluator err{dynamics, j0, s, a};
  std::vector<Matrix> roots;
  for (const RowModel& row : nonlinear_rows(dynamics, j0, x_box, u_box)) {
    const auto k = static_cast<Eigen::Index>(row.active.size());
    Vector half(k);
    for (Eigen::Index j = 0; j < k; ++j) half(j) = box(row.active[static_cast<std::size_t>(j)]);
    // Fit in coordinates scaled to the unit box; a zero-width direction stays zero.
    const Vector scale = half.unaryExpr([](double h) { return h > 0.0 ? h : 1.0; });

    std::vector<Vector> feats;
    std::vector<double> w2;
    std::vector<Vector> points;
    for_each_grid_point(half, settings.grid_points, [&](const Vector& p) {
      const double e = err(row.row, row.active, p);
      points.push_back(p);
      feats.push_back(quad_features(p.cwiseQuotient(scale)));
      w2.push_back(e * e);
    });
    const double w2_max = *std::max_element(w2.begin(), w2.end());
    const auto m = static_cast<Eigen::Index>(feats.size());
    const auto nf = k * (k + 1) / 2;

    Matrix ft_scaled = Matrix::Zero(k, k);
    if (w2_max > 0.0) {
      // minimize sum_p xi_p^T F xi_p  s.t.  xi_p^T F xi_p - w_p^2 >= 0 (the slack).
      ConeProgram lp;
      lp.c = Vector::Zero(nf);
      lp.a.resize(m, nf);
      lp.b.resize(m);
      for (Eigen::Index p = 0; p < m; ++p) {
        lp.a.row(p) = -feats[static_cast<std::size_t>(p)].transpose();
        lp.b(p) = -w2[static_cast<std::size_t>(p)] / w2_max;
        lp.c += feats[static_cast<std::size_t>(p)] / double(m);
      }
      lp.cones.blocks.push_back({ConeKind::Nonneg, static_cast<int>(m)});
      const ConeSolution sol = solve_cone_program(lp, settings.conic);
      if (sol.status != ConeStatus::Optimal)
        throw std::runtime_error(std::string("fit_norm_bounds: LP for row ") + std::to_string(row.row) +
                                 " ended with status " + to_string(sol.status));
      ft_scaled = psd_project(from_features(sol.x, k));
      // Solver round-off in directions the error does not excite.
      const double big = ft_scaled.cwiseAbs().maxCoeff();
      ft_scaled = ft_scaled.unaryExpr([big](double v) { return std::abs(v) <= 1e-12 * big ? 0.0 : v; }) * w2_max;
    }

    // Smallest tau >= 1 restoring coverage of the training grid.
    double tau = 1.0;
    for (std::size_t p = 0; p < points.size(); ++p) {
      const Vector z = points[p].cwiseQuotient(scale);
      const double need = w2[p] - kCoverageSlack;
      if (need <= 0.0) continue;
      const double have = z.dot(ft_scaled * z);
      if (!(have > 0.0))
        throw std::runtime_error("fit_norm_bounds: PSD repair lost a direction with nonzero error in row " +
                                 std::to_string(row.row));
      tau = std::max(tau, need / have);
    }
    if (tau > 1.0) tau *= 1.0 + 1e-12;
    const Matrix f_local =
        scale.cwiseInverse().asDiagonal() * (tau * ft_scaled) * scale.cwiseInverse().asDiagonal();

    Matrix f_full = Matrix::Zero(s + a, s + a);
    for (Eigen::Index j = 0; j < k; ++j)
      for (Eigen::Index l = 0; l < k; ++l)
        f_full(row.active[static_cast<std::size_t>(j)], row.active[static_cast<std::size_t>(l)]) = f_local(j, l);

    std::size_t covered = 0;
    for (std::size_t p = 0; p < points.size(); ++p)
      if (w2[p] <= points[p].dot(f_local * points[p]) + kCoverageSlack) ++covered;

    fit.rows.push_back(row.row);
    fit.f.push_back(f_full);
    fit.scale.push_back(tau);
    fit.train_coverage.push_back(double(covered) / double(points.size()));
    roots.push_back(psd_sqrt(f_full));
  }

  std::vector<Eigen::Index> keep;
  Matrix stacked(static_cast<Eigen::Index>(roots.size()) * (s + a), s + a);
  Eigen::Index r = 0;
  for (const Matrix& root : roots) {
    stacked.middleRows(r, s + a) = root;
    r += s + a;
  }
  for (Eigen::Index i = 0; i < stacked.rows(); ++i)
    if (!stacked.row(i).isZero(0.0)) keep.push_back(i);
  Matrix m(static_cast<Eigen::Index>(keep.size()), s + a);
  for (std::size_t i = 0; i < keep.size(); ++i) m.row(static_cast<Eigen::Index>(i)) = stacked.row(keep[i]);
  if (m.rows() == 0) m = Matrix::Zero(1, s + a);
  fit.C = m.leftCols(s);
  fit.D = m.rightCols(a);
  return fit;
}

double bound_fit_coverage(const DynamicsFn& dynamics, const BoundFit& fit, const Vector& x_box, const Vector& u_box,
                          int grid_points) {
  const int s = static_cast<int>(x_box.size()), a = static_cast<int>(u_box.size());
  const Matrix j0 = dynamics(Vector::Zero(s), Vector::Zero(a)).jacobian;
  Vector box(s + a);
  box << x_box, u_box;
  ErrorEvaluator err{dynamics, j0, s, a};
  double worst = 1.0;
  for (const RowModel& row : nonlinear_rows(dynamics, j0, x_box, u_box)) {
    const auto it = std::find(fit.rows.begin(), fit.rows.end(), row.row);
    if (it == fit.rows.end()) return 0.0;
    const Matrix& f = fit.f[static_cast<std::size_t>(it - fit.rows.begin())];
    const auto k = static_cast<Eigen::Index>(row.active.size());
    Vector half(k);
    Matrix f_local(k, k);
    for (Eigen::Index j = 0; j < k; ++j) {
      half(j) = box(row.active[static_cast<std::size_t>(j)]);
      for (Eigen::Index l = 0; l < k; ++l)
        f_local(j, l) = f(row.active[static_cast<std::size_t>(j)], row.active[static_cast<std::size_t>(l)]);
    }
    std::size_t total = 0, covered = 0;
    for_each_grid_point(half, grid_points, [&](const Vector& p) {
      const double e = err(row.row, row.active, p);
      ++total;
      if (e * e <= p.dot(f_local * p) + kCoverageSlack) ++covered;
    });
    worst = std::min(worst, double(covered) / double(total));
  }
  return worst;
}

namespace {

Vector or_default(const Vector& v, const Vector& fallback) { return v.size() > 0 ? v : fallback; }

EnvInstance physical_env(EnvFamily family, std::uint64_t seed, const DynamicsFn& dynamics, const BoundFit& fit,
                         const Vector& x_box, const Vector& u_box) {
  const int s = static_cast<int>(x_box.size()), a = static_cast<int>(u_box.size());
  const Matrix j0 = dynamics(Vector::Zero(s), Vector::Zero(a)).jacobian;
  NldiSystem sys;
  sys.A = j0.leftCols(s);
  sys.B = j0.rightCols(a);
  sys.G = Matrix::Identity(s, s);
  sys.C = fit.C;
  sys.D = fit.D;
  EnvInstance env;
  env.family = family;
  env.seed = seed;
  env.system = sys;
  env.Q = Matrix::Identity(s, s);
  env.R = Matrix::Identity(a, a);
  env.disturbance = DisturbanceKind::RandomNetNormBound;
  env.disturbance_net = disturbance_net(s, s, seed);
  env.state_box = x_box;
  env.action_box = u_box;
  return env;
}

}  // namespace

EnvInstance make_cartpole(std::uint64_t seed, const CartPoleParams& params, const BoundFitSettings& fit_settings) {
  const DynamicsFn dyn = [params](const Vector& x, const Vector& u) { return cartpole_dynamics(x, u, params); };
  return make_cartpole(seed, params,
                       fit_norm_bounds(dyn, or_default(fit_settings.x_box, cartpole_state_box()),
                                       or_default(fit_settings.u_box, cartpole_action_box()), fit_settings));
}

EnvInstance make_cartpole(std::uint64_t seed, const CartPoleParams& params, const BoundFit& fit) {
  const DynamicsFn dyn = [params](const Vector& x, const Vector& u) { return cartpole_dynamics(x, u, params); };
  EnvInstance env = physical_env(EnvFamily::CartPole, seed, dyn, fit, or_default(fit.x_box, cartpole_state_box()),
                                  or_default(fit.u_box, cartpole_action_box()));
  env.cartpole = params;
  env.dt = 0.05;
  return env;
}

EnvInstance make_quadrotor(std::uint64_t seed, const QuadrotorParams& params, const BoundFitSettings& fit_settings) {
  const DynamicsFn dyn = [params](const Vector& x, const Vector& u) { return quadrotor_dynamics(x, u, params); };
  return make_quadrotor(seed, params,
                        fit_norm_bounds(dyn, or_default(fit_settings.x_box, quadrotor_state_box()),
                                        or_default(fit_settings.u_box, quadrotor_action_box()), fit_settings));
}

EnvInstance make_quadrotor(std::uint64_t seed, const QuadrotorParams& params, const BoundFit& fit) {
  const DynamicsFn dyn = [params](const Vector& x, const Vector& u) { return quadrotor_dynamics(x, u, params); };
  EnvInstance env = physical_env(EnvFamily::Quadrotor, seed, dyn, fit, or_default(fit.x_box, quadrotor_state_box()),
                                  or_default(fit.u_box, quadrotor_action_box()));
  env.quadrotor = params;
  env.dt = 0.02;
  env.alpha = 0.01;
  return env;
}

EnvInstance make_microgrid(const Matrix& A, const Matrix& B, const Matrix& G, int outputs,
                           const std::vector<int>& performance_states, const std::vector<int>& performance_actions,
                           std::uint64_t seed) {
  const auto s = A.rows(), a = B.cols();
  if (A.cols() != s || B.rows() != s || G.rows() != s)
    throw std::invalid_argument("make_microgrid: A must be square with B and G sharing its row count");
  if (outputs < 1) throw std::invalid_argument("make_microgrid: need at least one bound output");
  std::mt19937_64 rng(derive_seed(seed, 4));
  NldiSystem sys{A, B, G, normal_matrix(outputs, s, rng), Matrix::Zero(outputs, a)};
  Vector q = Vector::Constant(s, 0.1), r = Vector::Constant(a, 0.1);
  for (int i : performance_states) {
    if (i < 0 || i >= s) throw std::invalid_argument("make_microgrid: performance state index out of range");
    q(i) = 1.0;
  }
  for (int i : performance_actions) {
    if (i < 0 || i >= a) throw std::invalid_argument("make_microgrid: performance action index out of range");
    r(i) = 1.0;
  }
  EnvInstance env;
  env.family = EnvFamily::Microgrid;
  env.seed = seed;
  env.system = sys;
  env.Q = q.asDiagonal();
  env.R = r.asDiagonal();
  env.disturbance = DisturbanceKind::RandomNetNormBound;
  env.disturbance_net = disturbance_net(static_cast<int>(s), static_cast<int>(G.cols()), seed);
  env.validate();
  return env;
}

Vector sample_box(const Vector& half_width, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  Vector x(half_width.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) x(i) = half_width(i) * unit(rng);
  return x;
}

Vector sample_initial_state(const EnvInstance& env, std::uint64_t seed) {
  switch (env.family) {
    case EnvFamily::CartPole: return sample_box((Vector(4) << 1.0, 0.0, 0.1, 0.0).finished(), seed);
    case EnvFamily::Quadrotor: return sample_box((Vector(6) << 1.0, 1.0, 0.05, 0.0, 0.0, 0.0).finished(), seed);
    default: {
      std::mt19937_64 rng(seed);
      std::normal_distribution<double> n(0.0, 1.0);
      Vector x(env.states());
      for (Eigen::Index i = 0; i < x.size(); ++i) x(i) = n(rng);
      return x;
    }
  }
}

namespace {

// r / ||r|| and its VJP; zero direction when r = 0.
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

Vector softmax(const Vector& z) {
  const Vector e = (z.array() - z.maxCoeff()).exp();
  return e / e.sum();
}

}  // namespace

Vector env_step(const EnvInstance& env, const Vector& x, const Vector& u, int t, StepTape* tape) {
  if (x.size() != env.states() || u.size() != env.actions())
    throw std::invalid_argument("env_step: state or action has the wrong dimension");
  StepTape local;
  StepTape& tp = tape ? *tape : local;
  tp.x = x;
  tp.u = u;
  tp.t = t;
  const bool net = env.disturbance != DisturbanceKind::None;
  if (net) tp.raw = mlp_forward(env.disturbance_net, x, &tp.net);

  if (env.is_physical()) {
    const NldiSystem& sys = env.nldi();
    tp.dyn = physical_dynamics(env, x, u);
    tp.error = tp.dyn.xdot - sys.A * x - sys.B * u;
    tp.bound = (sys.C * x + sys.D * u).norm();
    tp.budget = std::max(0.0, tp.bound - tp.error.norm());
    Vector extra = Vector::Zero(x.size());
    if (net) extra = env.extra_disturbance * tp.budget * unit_direction(tp.raw);
    tp.w = tp.error + extra;
    return x + env.dt * (tp.dyn.xdot + extra);
  }

  return std::visit(
      [&](const auto& sys) -> Vector {
        using T = std::decay_t<decltype(sys)>;
        if constexpr (std::is_same_v<T, NldiSystem>) {
          tp.bound = (sys.C * x + sys.D * u).norm();
          tp.w = net ? Vector(tp.bound * unit_direction(tp.raw)) : Vector::Zero(sys.disturbances());
          return x + env.dt * (sys.A * x + sys.B * u + sys.G * tp.w);
        } else if constexpr (std::is_same_v<T, PldiSystem>) {
          tp.w = net ? softmax(tp.raw) : Vector::Constant(sys.vertices(), 1.0 / sys.vertices());
          Vector xdot = Vector::Zero(x.size());
          for (int i = 0; i < sys.vertices(); ++i) xdot += tp.w(i) * (sys.A[i] * x + sys.B[i] * u);
          return x + env.dt * xdot;
        } else {
          tp.bound = hinf_disturbance_norm(env, t);
          tp.w = net ? Vector(tp.bound * unit_direction(tp.raw)) : Vector::Zero(sys.disturbances());
          return x + env.dt * (sys.A * x + sys.B * u + sys.G * tp.w);
        }
      },
      env.system);
}

StepVjp env_step_vjp(const EnvInstance& env, const StepTape& tp, const Vector& g) {
  const double dt = env.dt;
  const bool net = env.disturbance != DisturbanceKind::None;
  StepVjp out;
  out.d_x = g;
  out.d_u = Vector::Zero(tp.u.size());
  Vector d_raw = Vector::Zero(tp.raw.size());

  // d ||C x + D u|| into (d_x, d_u).
  auto bound_vjp = [&](const NldiSystem& sys, double d_bound) {
    if (tp.bound <= 0.0 || d_bound == 0.0) return;
    const Vector c = (sys.C * tp.x + sys.D * tp.u) / tp.bound;
    out.d_x += d_bound * sys.C.transpose() * c;
    out.d_u += d_bound * sys.D.transpose() * c;
  };

  if (env.is_physical()) {
    const NldiSystem& sys = env.nldi();
    const auto s = tp.x.size();
    const Matrix& jac = tp.dyn.jacobian;
    out.d_x += dt * jac.leftCols(s).transpose() * g;
    out.d_u += dt * jac.rightCols(tp.u.size()).transpose() * g;
    if (net && tp.budget > 0.0) {
      const Vector dir = unit_direction(tp.raw);
      const Vector g_extra = dt * env.extra_disturbance * g;
      const double d_budget = g_extra.dot(dir);
      d_raw = unit_direction_vjp(tp.raw, tp.budget * g_extra);
      bound_vjp(sys, d_budget);
      const double en = tp.error.norm();
      if (en > 0.0) {
        // error = f(x, u) - A x - B u
        const Vector de = -d_budget * tp.error / en;
        out.d_x += (jac.leftCols(s) - sys.A).transpose() * de;
        out.d_u += (jac.rightCols(tp.u.size()) - sys.B).transpose() * de;
      }
    }
  } else {
    std::visit(
        [&](const auto& sys) {
          using T = std::decay_t<decltype(sys)>;
          if constexpr (std::is_same_v<T, PldiSystem>) {
            Vector d_w(sys.vertices());
            for (int i = 0; i < sys.vertices(); ++i) {
              out.d_x += dt * tp.w(i) * sys.A[i].transpose() * g;
              out.d_u += dt * tp.w(i) * sys.B[i].transpose() * g;
              d_w(i) = dt * g.dot(sys.A[i] * tp.x + sys.B[i] * tp.u);
            }
            if (net) d_raw = tp.w.cwiseProduct(d_w - Vector::Constant(d_w.size(), tp.w.dot(d_w)));
          } else {
            out.d_x += dt * sys.A.transpose() * g;
            out.d_u += dt * sys.B.transpose() * g;
            if (!net) return;
            const Vector d_w = dt * sys.G.transpose() * g;
            const Vector dir = unit_direction(tp.raw);
            d_raw = unit_direction_vjp(tp.raw, tp.bound * d_w);
            if constexpr (std::is_same_v<T, NldiSystem>) bound_vjp(sys, d_w.dot(dir));
          }
        },
        env.system);
  }
  if (net && d_raw.size() > 0 && !d_raw.isZero(0.0)) out.d_x += mlp_backward(env.disturbance_net, tp.net, d_raw).d_x;
  return out;
}

Vector nldi_model_step(const NldiSystem& sys, double dt, const Vector& x, const Vector& u, const Vector& w) {
  return x + dt * (sys.A * x + sys.B * u + sys.G * w);
}

SafeInitRegion find_safe_init_region(const Matrix& P, const Vector& half_width) {
  const auto n = half_width.size();
  if (P.rows() != n || P.cols() != n) throw std::invalid_argument("find_safe_init_region: dimension mismatch");
  if (n == 0 || (half_width.array() <= 0.0).any() || !half_width.allFinite())
    throw std::invalid_argument("find_safe_init_region: degenerate box");
  const Matrix ps = symmetrize(P);
  if (min_eigenvalue(ps) <= 0.0) throw std::invalid_argument("find_safe_init_region: P is not positive definite");

  std::mt19937_64 rng(0xB0C5);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  double level = std::numeric_limits<double>::infinity();
  // V is even, so the faces x_j = +half_j suffice.
  for (Eigen::Index face = 0; face < n; ++face) {
    for (int start = 0; start < 8; ++start) {
      Vector x(n);
      for (Eigen::Index i = 0; i < n; ++i) x(i) = start == 0 ? 0.0 : half_width(i) * unit(rng);
      x(face) = half_width(face);
      for (int sweep = 0; sweep < 500; ++sweep) {
        double moved = 0.0;
        for (Eigen::Index i = 0; i < n; ++i) {
          if (i == face) continue;
          // argmin over x_i of the quadratic with the rest fixed, clipped to the box.
          const double rest = ps.row(i).dot(x) - ps(i, i) * x(i);
          const double xi = std::clamp(-rest / ps(i, i), -half_width(i), half_width(i));
          moved = std::max(moved, std::abs(xi - x(i)));
          x(i) = xi;
        }
        if (moved <= 1e-15 * (1.0 + half_width.maxCoeff())) break;
      }
      level = std::min(level, x.dot(ps * x));
    }
    for (int sample = 0; sample < 2000; ++sample) {
      Vector x(n);
      for (Eigen::Index i = 0; i < n; ++i) x(i) = half_width(i) * unit(rng);
      x(face) = half_width(face);
      level = std::min(level, x.dot(ps * x));
    }
  }

  double corner_max = 0.0;
  for (std::uint64_t mask = 0; mask < (std::uint64_t{1} << n); ++mask) {
    Vector c(n);
    for (Eigen::Index i = 0; i < n; ++i) c(i) = ((mask >> i) & 1U) ? half_width(i) : -half_width(i);
    corner_max = std::max(corner_max, c.dot(ps * c));
  }
  double lo = 0.0, hi = 1.0;
  for (int it = 0; it < 40; ++it) {
    const double mid = 0.5 * (lo + hi);
    (mid * mid * corner_max <= level ? lo : hi) = mid;
  }
  return {level, lo, lo * half_width};
}

}  // namespace robctl
