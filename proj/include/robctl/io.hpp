#pragma once

#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "robctl/training.hpp"
#include "json.hpp"

namespace robctl {

using Json = nlohmann::ordered_json;

/// Malformed, inconsistent or unreadable configuration (CLI exit code 2).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr int kSchemaVersion = 1;
inline constexpr const char* kEnvSchema = "robctl.env";
inline constexpr const char* kExperimentSchema = "robctl.experiment";
inline constexpr const char* kCertificateSchema = "robctl.certificate";
inline constexpr const char* kBoundFitSchema = "robctl.bound_fit";
inline constexpr const char* kCheckpointSchema = "robctl.checkpoint";

Json read_json(const std::filesystem::path& path);
/// Pretty-printed with a trailing newline; parent directories are created.
void write_json(const std::filesystem::path& path, const Json& j);
void write_text(const std::filesystem::path& path, const std::string& text);

/// {"schema": name, "version": 1}; check_schema throws ConfigError on mismatch.
Json schema_header(const char* name);
void check_schema(const Json& j, const char* name);

/// Locale-independent shortest round-trip representation.
std::string format_double(double v);

Json matrix_to_json(const Matrix& m);  // array of rows
Matrix matrix_from_json(const Json& j, const char* what);

/// {kind, alpha, P (row-major), K (row-major), multiplier} plus shape fields.
Json certificate_to_json(const RobustCertificate& cert);
RobustCertificate certificate_from_json(const Json& j);

Json bound_fit_to_json(const BoundFit& fit);
BoundFit bound_fit_from_json(const Json& j);

struct MicrogridConfig {
  Matrix A, B, G;
  int outputs = 1;
  std::vector<int> performance_states, performance_actions;
};

/// Environment description. Optional fields override the family defaults.
struct EnvConfig {
  EnvFamily family = EnvFamily::SyntheticNldi;
  std::uint64_t seed = 0;
  /// synthetic-nldi only.
  bool d_zero = true;
  std::optional<double> dt, alpha;
  std::optional<int> horizon;
  std::optional<double> vertex_spread;  // synthetic-pldi
  std::optional<double> gamma;          // synthetic-hinf
  CartPoleParams cartpole;
  QuadrotorParams quadrotor;
  std::optional<MicrogridConfig> microgrid;
  /// Physical domains: fitting grid and box; bound_fit_file reuses a saved fit
  /// (relative to the config file).
  int grid_points = 50;
  std::vector<double> x_box, u_box;
  std::string bound_fit_file;
};

Json env_config_to_json(const EnvConfig& cfg);
/// Validates the dimensions declared in "dims" (when present) against the matrices.
EnvConfig env_config_from_json(const Json& j);

/// Builds the instance; relative paths resolve against base_dir.
EnvInstance build_env(const EnvConfig& cfg, const std::filesystem::path& base_dir = {});
EnvInstance microgrid_from_config(const std::filesystem::path& path);

/// {arch, params (flat), K, cert_ref, kind}; the certificate itself lives in
/// the file cert_ref points to.
Json checkpoint_to_json(const RobustPolicy& policy, Method method, const std::string& cert_ref);

struct Checkpoint {
  Method method = Method::RobustMbp;
  SafeSetKind kind = SafeSetKind::None;
  Matrix K;
  Mlp net;
  std::string cert_ref;
};

Checkpoint checkpoint_from_json(const Json& j);
/// Rebuilds the policy against env; robust kinds need the certificate.
RobustPolicy policy_from_checkpoint(const Checkpoint& ck, const EnvInstance& env,
                                    const std::optional<RobustCertificate>& cert);

/// epoch,mean_cost_original,mean_cost_adversarial,instability_count
std::string learning_curve_csv(const std::vector<CurvePoint>& curve);

/// t,x1..,u1..,w1..,V,cost_increment; V is x^T P x when P is non-empty.
std::string trajectory_csv(const Trajectory& traj, const EnvInstance& env, const Matrix& P);

struct SvgSeries {
  std::string label;
  std::vector<double> x, y;
  /// x positions drawn as 'X' markers on the series (e.g. divergence epochs).
  std::vector<double> markers;
};

std::string svg_line_chart(const std::string& title, const std::string& x_label, const std::string& y_label,
                           const std::vector<SvgSeries>& series);

}  // namespace robctl
