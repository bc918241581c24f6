#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "robctl/conic.hpp"

namespace robctl {

/// x' = A x + B u + G w with ||w|| <= ||C x + D u||.
struct NldiSystem {
  Matrix A, B, G, C, D;

  int states() const { return static_cast<int>(A.rows()); }
  int actions() const { return static_cast<int>(B.cols()); }
  int disturbances() const { return static_cast<int>(G.cols()); }
  int outputs() const { return static_cast<int>(C.rows()); }
  bool has_zero_d() const { return D.size() == 0 || D.isZero(0.0); }
  void validate() const;
};

/// (A(t), B(t)) ranges over the convex hull of the listed vertices.
struct PldiSystem {
  std::vector<Matrix> A;
  std::vector<Matrix> B;

  int states() const { return A.empty() ? 0 : static_cast<int>(A.front().rows()); }
  int actions() const { return B.empty() ? 0 : static_cast<int>(B.front().cols()); }
  int vertices() const { return static_cast<int>(A.size()); }
  void validate() const;
};

/// x' = A x + B u + G w with w of finite energy; gamma bounds the L2 gain to
/// the LQR output defined by Q and R.
struct HinfSystem {
  Matrix A, B, G;
  double gamma = 1.0;
  Matrix Q, R;

  int states() const { return static_cast<int>(A.rows()); }
  int actions() const { return static_cast<int>(B.cols()); }
  int disturbances() const { return static_cast<int>(G.cols()); }
  void validate() const;
};

enum class CertificateKind { Nldi, Pldi, Hinf, Lqr };

const char* to_string(CertificateKind kind);
CertificateKind certificate_kind_from_string(const std::string& name);

struct RobustCertificate {
  CertificateKind kind = CertificateKind::Nldi;
  double alpha = 0.0;
  Matrix P;
  Matrix K;
  /// mu for NLDI, sigma = 1/mu for H-infinity, empty otherwise.
  std::optional<double> multiplier;
  /// tr(Q S) + tr(R^1/2 Y S^-1 Y^T R^1/2) evaluated at the returned point.
  double objective = 0.0;
  /// Largest eigenvalue over the certificate's LMI blocks (should be <= 0).
  double lmi_max_eigenvalue = 0.0;
};

class SynthesisError : public std::runtime_error {
 public:
  enum class Reason { Infeasible, IterationCap, CheckFailed };
  SynthesisError(Reason reason, const std::string& what) : std::runtime_error(what), reason_(reason) {}
  Reason reason() const { return reason_; }

 private:
  Reason reason_;
};

struct SynthesisSettings {
  ConicSettings conic{};
  /// Lower bounds keeping S and the multiplier strictly positive.
  double s_floor = 1e-6;
  double multiplier_floor = 1e-6;
  /// Accept when lambda_max(block) <= residual_tol * (1 + ||block||_F).
  double residual_tol = 1e-6;
};

RobustCertificate synth_nldi(const NldiSystem& sys, double alpha, const Matrix& Q, const Matrix& R,
                             const SynthesisSettings& settings = {});
RobustCertificate synth_pldi(const PldiSystem& sys, double alpha, const Matrix& Q, const Matrix& R,
                             const SynthesisSettings& settings = {});
RobustCertificate synth_hinf(const HinfSystem& sys, double alpha, const SynthesisSettings& settings = {});

/// LQR-optimal gain for x' = A x + B u without disturbances (the rate-zero,
/// disturbance-free case of the NLDI program). Kind is Lqr.
RobustCertificate solve_lqr_nonrobust(const Matrix& A, const Matrix& B, const Matrix& Q, const Matrix& R,
                                      const SynthesisSettings& settings = {});

/// LMI blocks of each family evaluated at S = P^-1, Y = K P^-1 (in the
/// negative-semidefinite orientation).
std::vector<Matrix> nldi_lmi_blocks(const NldiSystem& sys, const RobustCertificate& cert);
std::vector<Matrix> pldi_lmi_blocks(const PldiSystem& sys, const RobustCertificate& cert);
std::vector<Matrix> hinf_lmi_blocks(const HinfSystem& sys, const RobustCertificate& cert);

/// True when every block satisfies lambda_max <= tol * (1 + ||block||_F).
bool lmi_blocks_hold(const std::vector<Matrix>& blocks, double tol = 1e-6);

/// NLDI over-approximation A + B Delta C, ||Delta|| <= 1, of a vertex list.
struct PldiAsNldi {
  Matrix A, B, C;
  Matrix V, W;  // C^T C and B B^T
  double objective = 0.0;
};

PldiAsNldi pldi_to_nldi(const std::vector<Matrix>& vertices, const Matrix& center,
                        const SynthesisSettings& settings = {});
/// Same with the vertex mean as center.
PldiAsNldi pldi_to_nldi(const std::vector<Matrix>& vertices, const SynthesisSettings& settings = {});

}  // namespace robctl
