#include "robctl/synthesis.hpp"

#include <cmath>
#include <sstream>

#include "robctl/cone_builder.hpp"

namespace robctl {

namespace {

void require(bool ok, const std::string& what) {
  if (!ok) throw std::invalid_argument(what);
}

void require_cost(const Matrix& Q, const Matrix& R, int s, int a) {
  require(Q.rows() == s && Q.cols() == s, "cost matrix Q must be " + std::to_string(s) + "x" + std::to_string(s));
  require(R.rows() == a && R.cols() == a, "cost matrix R must be " + std::to_string(a) + "x" + std::to_string(a));
  require((Q - Q.transpose()).cwiseAbs().maxCoeff() <= 1e-9 * (1.0 + Q.cwiseAbs().maxCoeff()),
          "cost matrix Q must be symmetric");
  require((R - R.transpose()).cwiseAbs().maxCoeff() <= 1e-9 * (1.0 + R.cwiseAbs().maxCoeff()),
          "cost matrix R must be symmetric");
  require(min_eigenvalue(symmetrize(Q)) >= -1e-9 * (1.0 + Q.norm()), "cost matrix Q must be positive semidefinite");
  Eigen::LLT<Matrix> llt(symmetrize(R));
  require(llt.info() == Eigen::Success, "cost matrix R must be positive definite");
}

std::string format_alpha(double alpha) {
  std::ostringstream os;
  os << alpha;
  return os.str();
}

// Shared LQR-epigraph program. The Lyapunov blocks carry an identity term
// (unit initial-state covariance), which fixes the scale of S; without it the
// constraints are positively homogeneous and the objective has no minimizer.
struct LqrProgram {
  ConeProgramBuilder builder;
  AffineMatrix S;
  AffineMatrix Y;
  Matrix q_sqrt;
  Matrix r_sqrt;
  int s = 0;
  int a = 0;
};

LqrProgram make_lqr_program(int s, int a, const Matrix& Q, const Matrix& R, const SynthesisSettings& settings) {
  LqrProgram p;
  p.s = s;
  p.a = a;
  p.S = p.builder.add_symmetric(s);
  p.Y = p.builder.add_matrix(a, s);
  AffineMatrix X = p.builder.add_symmetric(a);
  p.q_sqrt = psd_sqrt(symmetrize(Q));
  p.r_sqrt = psd_sqrt(symmetrize(R));
  p.builder.add_psd(p.S - settings.s_floor * Matrix::Identity(s, s));
  const AffineMatrix ry = p.r_sqrt * p.Y;
  p.builder.add_psd(block_matrix({{X, ry}, {ry.transpose(), p.S}}));
  p.builder.minimize(trace(symmetrize(Q) * p.S) + trace(X));
  return p;
}

// A S + S A^T + B Y + Y^T B^T + alpha S.
AffineMatrix lyapunov_expr(const Matrix& A, const Matrix& B, const AffineMatrix& S, const AffineMatrix& Y,
                           double alpha) {
  const AffineMatrix as = A * S;
  const AffineMatrix by = B * Y;
  return as + as.transpose() + by + by.transpose() + alpha * S;
}

Matrix lyapunov_value(const Matrix& A, const Matrix& B, const Matrix& S, const Matrix& Y, double alpha) {
  const Matrix as = A * S;
  const Matrix by = B * Y;
  return as + as.transpose() + by + by.transpose() + alpha * S;
}

struct Extracted {
  Matrix S;
  Matrix Y;
  Vector raw;
};

Extracted solve_and_extract(const LqrProgram& p, const SynthesisSettings& settings, const std::string& label,
                            const std::string& infeasible_hint) {
  const ConeSolution sol = solve_cone_program(p.builder.build(), settings.conic);
  if (sol.status == ConeStatus::Infeasible || sol.status == ConeStatus::Unbounded)
    throw SynthesisError(SynthesisError::Reason::Infeasible, label + ": no certificate" + infeasible_hint +
                                                                 " (solver returned a dual infeasibility certificate)");
  if (sol.status == ConeStatus::IterationCap)
    throw SynthesisError(SynthesisError::Reason::IterationCap,
                         label + ": solver stopped at the iteration cap after " + std::to_string(sol.iterations) +
                             " iterations (primal residual " + std::to_string(sol.primal_residual) +
                             ", dual residual " + std::to_string(sol.dual_residual) +
                             "); this is not a proof of infeasibility");
  Extracted e;
  e.S = symmetrize(p.S.evaluate(sol.x));
  e.Y = p.Y.evaluate(sol.x);
  e.raw = sol.x;
  return e;
}

RobustCertificate finish(CertificateKind kind, double alpha, const Extracted& e, const LqrProgram& p,
                         std::optional<double> multiplier, const std::string& label) {
  RobustCertificate cert;
  cert.kind = kind;
  cert.alpha = alpha;
  try {
    cert.P = symmetrize(spd_inverse(e.S));
  } catch (const NumericalError&) {
    throw SynthesisError(SynthesisError::Reason::CheckFailed, label + ": returned S is not positive definite");
  }
  cert.K = e.Y * cert.P;
  cert.multiplier = multiplier;
  const Matrix ry = p.r_sqrt * e.Y;
  cert.objective = (symmetrize(p.q_sqrt * p.q_sqrt) * e.S).trace() + (ry * cert.P * ry.transpose()).trace();
  return cert;
}

double blocks_max_eigenvalue(const std::vector<Matrix>& blocks) {
  double worst = -std::numeric_limits<double>::infinity();
  for (const auto& b : blocks) worst = std::max(worst, max_eigenvalue(symmetrize(b)));
  return worst;
}

void check_blocks(RobustCertificate& cert, const std::vector<Matrix>& blocks, const SynthesisSettings& settings,
                  const std::string& label) {
  cert.lmi_max_eigenvalue = blocks_max_eigenvalue(blocks);
  if (!lmi_blocks_hold(blocks, settings.residual_tol))
    throw SynthesisError(SynthesisError::Reason::CheckFailed,
                         label + ": LMI residual check failed (max eigenvalue " +
                             std::to_string(cert.lmi_max_eigenvalue) + ")");
}

Matrix stack_rows(const Matrix& top, const Matrix& bottom) {
  Matrix out(top.rows() + bottom.rows(), top.cols());
  out << top, bottom;
  return out;
}

Matrix assemble(const Matrix& top_left, const Matrix& lower_left, const Matrix& bottom_right) {
  const auto n = top_left.rows();
  const auto m = bottom_right.rows();
  Matrix out(n + m, n + m);
  out.topLeftCorner(n, n) = top_left;
  out.bottomLeftCorner(m, n) = lower_left;
  out.topRightCorner(n, m) = lower_left.transpose();
  out.bottomRightCorner(m, m) = bottom_right;
  return out;
}

}  // namespace

void NldiSystem::validate() const {
  const auto s = A.rows();
  require(s > 0 && A.cols() == s, "NLDI: A must be square and non-empty");
  require(B.rows() == s && B.cols() > 0, "NLDI: B must have as many rows as A");
  require(G.rows() == s, "NLDI: G must have as many rows as A");
  require(C.cols() == s, "NLDI: C must have as many columns as A has rows");
  require(D.rows() == C.rows() && D.cols() == B.cols(), "NLDI: D must be (rows of C) x (columns of B)");
  require(A.allFinite() && B.allFinite() && G.allFinite() && C.allFinite() && D.allFinite(),
          "NLDI: matrices must be finite");
}

void PldiSystem::validate() const {
  require(!A.empty(), "PLDI: at least one vertex is required");
  require(A.size() == B.size(), "PLDI: vertex lists for A and B differ in length");
  const auto s = A.front().rows();
  const auto a = B.front().cols();
  require(s > 0 && a > 0, "PLDI: empty vertex matrices");
  for (size_t i = 0; i < A.size(); ++i) {
    require(A[i].rows() == s && A[i].cols() == s, "PLDI: vertex A matrices must share one square shape");
    require(B[i].rows() == s && B[i].cols() == a, "PLDI: vertex B matrices must share one shape");
    require(A[i].allFinite() && B[i].allFinite(), "PLDI: matrices must be finite");
  }
}

void HinfSystem::validate() const {
  const auto s = A.rows();
  require(s > 0 && A.cols() == s, "H-infinity: A must be square and non-empty");
  require(B.rows() == s && B.cols() > 0, "H-infinity: B must have as many rows as A");
  require(G.rows() == s, "H-infinity: G must have as many rows as A");
  require(gamma > 0.0 && std::isfinite(gamma), "H-infinity: gamma must be positive");
  require_cost(Q, R, static_cast<int>(s), static_cast<int>(B.cols()));
}

const char* to_string(CertificateKind kind) {
  switch (kind) {
    case CertificateKind::Nldi: return "nldi";
    case CertificateKind::Pldi: return "pldi";
    case CertificateKind::Hinf: return "hinf";
    case CertificateKind::Lqr: return "lqr";
  }
  return "?";
}

CertificateKind certificate_kind_from_string(const std::string& name) {
  if (name == "nldi") return CertificateKind::Nldi;
  if (name == "pldi") return CertificateKind::Pldi;
  if (name == "hinf") return CertificateKind::Hinf;
  if (name == "lqr") return CertificateKind::Lqr;
  throw std::invalid_argument("unknown certificate kind '" + name + "'");
}

bool lmi_blocks_hold(const std::vector<Matrix>& blocks, double tol) {
  for (const auto& b : blocks) {
    const Matrix sym = symmetrize(b);
    if (max_eigenvalue(sym) > tol * (1.0 + sym.norm())) return false;
  }
  return true;
}

std::vector<Matrix> nldi_lmi_blocks(const NldiSystem& sys, const RobustCertificate& cert) {
  const Matrix S = symmetrize(spd_inverse(cert.P));
  const Matrix Y = cert.K * S;
  const double mu = cert.multiplier.value_or(1.0);
  const Matrix top = lyapunov_value(sys.A, sys.B, S, Y, cert.alpha) + mu * sys.G * sys.G.transpose();
  const Matrix lower = sys.C * S + sys.D * Y;
  return {assemble(top, lower, -mu * Matrix::Identity(sys.outputs(), sys.outputs()))};
}

std::vector<Matrix> pldi_lmi_blocks(const PldiSystem& sys, const RobustCertificate& cert) {
  const Matrix S = symmetrize(spd_inverse(cert.P));
  const Matrix Y = cert.K * S;
  std::vector<Matrix> blocks;
  for (int i = 0; i < sys.vertices(); ++i) blocks.push_back(lyapunov_value(sys.A[i], sys.B[i], S, Y, cert.alpha));
  return blocks;
}

std::vector<Matrix> hinf_lmi_blocks(const HinfSystem& sys, const RobustCertificate& cert) {
  const Matrix S = symmetrize(spd_inverse(cert.P));
  const Matrix Y = cert.K * S;
  const double sigma = cert.multiplier.value_or(1.0);
  const double mu = 1.0 / sigma;
  const Matrix top =
      lyapunov_value(sys.A, sys.B, S, Y, cert.alpha) + (mu / (sys.gamma * sys.gamma)) * sys.G * sys.G.transpose();
  const Matrix lower = stack_rows(psd_sqrt(symmetrize(sys.Q)) * S, psd_sqrt(symmetrize(sys.R)) * Y);
  const int n = static_cast<int>(lower.rows());
  return {assemble(top, lower, -mu * Matrix::Identity(n, n))};
}

RobustCertificate synth_nldi(const NldiSystem& sys, double alpha, const Matrix& Q, const Matrix& R,
                             const SynthesisSettings& settings) {
  sys.validate();
  require(alpha > 0.0 && std::isfinite(alpha), "synth_nldi: alpha must be positive");
  const int s = sys.states(), a = sys.actions(), k = sys.outputs();
  require_cost(Q, R, s, a);

  LqrProgram p = make_lqr_program(s, a, Q, R, settings);
  const int mu_var = p.builder.add_scalar();
  const AffineMatrix mu = p.builder.scalar(mu_var);
  p.builder.add_nonneg(mu - Matrix::Constant(1, 1, settings.multiplier_floor));

  AffineMatrix top = lyapunov_expr(sys.A, sys.B, p.S, p.Y, alpha) + Matrix::Identity(s, s);
  {
    AffineMatrix gg(s, s);
    gg.add_term(mu_var, sys.G * sys.G.transpose());
    top += gg;
  }
  if (k > 0) {
    const AffineMatrix lower = sys.C * p.S + sys.D * p.Y;
    AffineMatrix corner(k, k);
    corner.add_term(mu_var, -Matrix::Identity(k, k));
    p.builder.add_psd(-1.0 * block_matrix({{top, lower.transpose()}, {lower, corner}}));
  } else {
    p.builder.add_psd(-1.0 * top);
  }

  const std::string label = "synth_nldi";
  Extracted e = solve_and_extract(p, settings, label, " at alpha=" + format_alpha(alpha));
  const double mu_value = std::max(mu.evaluate(e.raw)(0, 0), settings.multiplier_floor);
  RobustCertificate cert = finish(CertificateKind::Nldi, alpha, e, p, mu_value, label);
  check_blocks(cert, nldi_lmi_blocks(sys, cert), settings, label);
  return cert;
}

RobustCertificate synth_pldi(const PldiSystem& sys, double alpha, const Matrix& Q, const Matrix& R,
                             const SynthesisSettings& settings) {
  sys.validate();
  require(alpha > 0.0 && std::isfinite(alpha), "synth_pldi: alpha must be positive");
  const int s = sys.states(), a = sys.actions();
  require_cost(Q, R, s, a);

  LqrProgram p = make_lqr_program(s, a, Q, R, settings);
  for (int i = 0; i < sys.vertices(); ++i)
    p.builder.add_psd(-1.0 * (lyapunov_expr(sys.A[i], sys.B[i], p.S, p.Y, alpha) + Matrix::Identity(s, s)));

  const std::string label = "synth_pldi";
  Extracted e = solve_and_extract(p, settings, label, " at alpha=" + format_alpha(alpha));
  RobustCertificate cert = finish(CertificateKind::Pldi, alpha, e, p, std::nullopt, label);
  check_blocks(cert, pldi_lmi_blocks(sys, cert), settings, label);
  return cert;
}

RobustCertificate synth_hinf(const HinfSystem& sys, double alpha, const SynthesisSettings& settings) {
  sys.validate();
  require(alpha > 0.0 && std::isfinite(alpha), "synth_hinf: alpha must be positive");
  const int s = sys.states(), a = sys.actions();

  LqrProgram p = make_lqr_program(s, a, sys.Q, sys.R, settings);
  const int mu_var = p.builder.add_scalar();
  const AffineMatrix mu = p.builder.scalar(mu_var);
  p.builder.add_nonneg(mu - Matrix::Constant(1, 1, settings.multiplier_floor));

  AffineMatrix top = lyapunov_expr(sys.A, sys.B, p.S, p.Y, alpha) + Matrix::Identity(s, s);
  {
    AffineMatrix gg(s, s);
    gg.add_term(mu_var, sys.G * sys.G.transpose() / (sys.gamma * sys.gamma));
    top += gg;
  }
  const AffineMatrix qs = p.q_sqrt * p.S;
  const AffineMatrix ry = p.r_sqrt * p.Y;
  AffineMatrix corner_s(s, s), corner_a(a, a);
  corner_s.add_term(mu_var, -Matrix::Identity(s, s));
  corner_a.add_term(mu_var, -Matrix::Identity(a, a));
  p.builder.add_psd(-1.0 * block_matrix({{top, qs.transpose(), ry.transpose()},
                                          {qs, corner_s, AffineMatrix(s, a)},
                                          {ry, AffineMatrix(a, s), corner_a}}));

  const std::string label = "synth_hinf";
  Extracted e = solve_and_extract(p, settings, label,
                                  " at gamma=" + format_alpha(sys.gamma) + ", alpha=" + format_alpha(alpha) +
                                      "; try a larger gamma");
  const double mu_value = std::max(mu.evaluate(e.raw)(0, 0), settings.multiplier_floor);
  RobustCertificate cert = finish(CertificateKind::Hinf, alpha, e, p, 1.0 / mu_value, label);
  check_blocks(cert, hinf_lmi_blocks(sys, cert), settings, label);
  return cert;
}

RobustCertificate solve_lqr_nonrobust(const Matrix& A, const Matrix& B, const Matrix& Q, const Matrix& R,
                                      const SynthesisSettings& settings) {
  const auto s = A.rows();
  require(s > 0 && A.cols() == s, "solve_lqr_nonrobust: A must be square");
  require(B.rows() == s && B.cols() > 0, "solve_lqr_nonrobust: B must have as many rows as A");
  const int a = static_cast<int>(B.cols());
  require_cost(Q, R, static_cast<int>(s), a);

  LqrProgram p = make_lqr_program(static_cast<int>(s), a, Q, R, settings);
  p.builder.add_psd(-1.0 * (lyapunov_expr(A, B, p.S, p.Y, 0.0) + Matrix::Identity(s, s)));

  const std::string label = "solve_lqr_nonrobust";
  Extracted e = solve_and_extract(p, settings, label, " ((A, B) may not be stabilizable)");
  RobustCertificate cert = finish(CertificateKind::Lqr, 0.0, e, p, std::nullopt, label);
  PldiSystem single{{A}, {B}};
  check_blocks(cert, pldi_lmi_blocks(single, cert), settings, label);
  return cert;
}

PldiAsNldi pldi_to_nldi(const std::vector<Matrix>& vertices, const Matrix& center, const SynthesisSettings& settings) {
  require(!vertices.empty(), "pldi_to_nldi: at least one vertex is required");
  const auto rows = center.rows();
  const auto cols = center.cols();
  require(rows > 0 && cols > 0, "pldi_to_nldi: empty center matrix");
  double deviation = 0.0;
  for (const auto& v : vertices) {
    require(v.rows() == rows && v.cols() == cols, "pldi_to_nldi: vertex shape differs from the center");
    deviation = std::max(deviation, (v - center).cwiseAbs().maxCoeff());
  }

  PldiAsNldi out;
  out.A = center;
  if (deviation == 0.0) {
    // Nothing to cover: the program's optimum is V = W = 0.
    out.V = Matrix::Zero(cols, cols);
    out.W = Matrix::Zero(rows, rows);
    out.B = out.W;
    out.C = out.V;
    return out;
  }

  ConeProgramBuilder builder;
  const AffineMatrix V = builder.add_symmetric(static_cast<int>(cols));
  const AffineMatrix W = builder.add_symmetric(static_cast<int>(rows));
  builder.add_psd(W);
  for (const auto& v : vertices) {
    const AffineMatrix dev = AffineMatrix::constant(v - center);
    builder.add_psd(block_matrix({{V, dev.transpose()}, {dev, W}}));
  }
  builder.minimize(trace(V) + trace(W));
  const ConeSolution sol = solve_cone_program(builder.build(), settings.conic);
  if (sol.status == ConeStatus::Infeasible || sol.status == ConeStatus::Unbounded)
    throw SynthesisError(SynthesisError::Reason::Infeasible, "pldi_to_nldi: solver reported infeasibility");
  if (sol.status == ConeStatus::IterationCap)
    throw SynthesisError(SynthesisError::Reason::IterationCap, "pldi_to_nldi: solver stopped at the iteration cap");
  out.V = symmetrize(V.evaluate(sol.x));
  out.W = symmetrize(W.evaluate(sol.x));
  out.C = psd_sqrt(out.V);
  out.B = psd_sqrt(out.W);
  out.objective = out.V.trace() + out.W.trace();
  return out;
}

PldiAsNldi pldi_to_nldi(const std::vector<Matrix>& vertices, const SynthesisSettings& settings) {
  require(!vertices.empty(), "pldi_to_nldi: at least one vertex is required");
  Matrix mean = Matrix::Zero(vertices.front().rows(), vertices.front().cols());
  for (const auto& v : vertices) {
    require(v.rows() == mean.rows() && v.cols() == mean.cols(), "pldi_to_nldi: vertex shapes differ");
    mean += v;
  }
  mean /= static_cast<double>(vertices.size());
  return pldi_to_nldi(vertices, mean, settings);
}

}  // namespace robctl
