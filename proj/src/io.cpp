#include "robctl/io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace robctl {

namespace fs = std::filesystem;

Json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path.string());
  try {
    return Json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

void write_json(const fs::path& path, const Json& j) { write_text(path, j.dump(2) + "\n"); }

Json schema_header(const char* name) {
  Json j;
  j["schema"] = name;
  j["version"] = kSchemaVersion;
  return j;
}

void check_schema(const Json& j, const char* name) {
  if (!j.is_object()) throw ConfigError(std::string(name) + ": expected a JSON object");
  if (!j.contains("schema") || j["schema"] != name)
    throw ConfigError(std::string("expected schema \"") + name + "\"");
  if (!j.contains("version") || j["version"] != kSchemaVersion)
    throw ConfigError(std::string(name) + ": unsupported version (expected " + std::to_string(kSchemaVersion) + ")");
}

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

namespace {

template <class T>
T get(const Json& j, const char* key, const std::string& ctx) {
  if (!j.contains(key)) throw ConfigError(ctx + ": missing \"" + key + "\"");
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError(ctx + ": \"" + key + "\" has the wrong type");
  }
}

template <class T>
T get_or(const Json& j, const char* key, T fallback, const std::string& ctx) {
  return j.contains(key) ? get<T>(j, key, ctx) : fallback;
}

void reject_unknown(const Json& j, const std::set<std::string>& allowed, const std::string& ctx) {
  for (const auto& item : j.items())
    if (!allowed.count(item.key())) throw ConfigError(ctx + ": unknown field \"" + item.key() + "\"");
}

Json flat(const Matrix& m) { return to_row_major(m); }

Matrix unflat(const Json& j, const char* key, Eigen::Index rows, Eigen::Index cols, const std::string& ctx) {
  const auto v = get<std::vector<double>>(j, key, ctx);
  if (static_cast<Eigen::Index>(v.size()) != rows * cols)
    throw ConfigError(ctx + ": \"" + key + "\" has " + std::to_string(v.size()) + " entries, expected " +
                      std::to_string(rows * cols));
  return from_row_major(v, rows, cols);
}

Vector to_vector(const std::vector<double>& v) { return Eigen::Map<const Vector>(v.data(), v.size()); }
std::vector<double> to_std(const Vector& v) { return {v.data(), v.data() + v.size()}; }

}  // namespace

Json matrix_to_json(const Matrix& m) {
  Json rows = Json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) rows.push_back(to_std(m.row(i).transpose()));
  return rows;
}

Matrix matrix_from_json(const Json& j, const char* what) {
  const std::string ctx(what);
  if (!j.is_array() || j.empty()) throw ConfigError(ctx + ": expected a non-empty array of rows");
  std::vector<std::vector<double>> rows;
  try {
    rows = j.get<std::vector<std::vector<double>>>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError(ctx + ": entries must be numbers");
  }
  const std::size_t cols = rows.front().size();
  if (cols == 0) throw ConfigError(ctx + ": empty row");
  Matrix m(rows.size(), cols);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != cols) throw ConfigError(ctx + ": rows have different lengths");
    for (std::size_t k = 0; k < cols; ++k) m(i, k) = rows[i][k];
  }
  if (!m.allFinite()) throw ConfigError(ctx + ": non-finite entry");
  return m;
}

Json certificate_to_json(const RobustCertificate& cert) {
  Json j = schema_header(kCertificateSchema);
  j["kind"] = to_string(cert.kind);
  j["alpha"] = cert.alpha;
  j["states"] = cert.P.rows();
  j["actions"] = cert.K.rows();
  j["P"] = flat(cert.P);
  j["K"] = flat(cert.K);
  j["multiplier"] = cert.multiplier ? Json(*cert.multiplier) : Json(nullptr);
  j["objective"] = cert.objective;
  j["lmi_max_eigenvalue"] = cert.lmi_max_eigenvalue;
  return j;
}

RobustCertificate certificate_from_json(const Json& j) {
  const std::string ctx = "certificate";
  check_schema(j, kCertificateSchema);
  RobustCertificate c;
  try {
    c.kind = certificate_kind_from_string(get<std::string>(j, "kind", ctx));
  } catch (const std::invalid_argument& e) {
    throw ConfigError(ctx + ": " + e.what());
  }
  c.alpha = get<double>(j, "alpha", ctx);
  const auto s = get<int>(j, "states", ctx), a = get<int>(j, "actions", ctx);
  if (s < 1 || a < 1) throw ConfigError(ctx + ": dimensions must be positive");
  c.P = unflat(j, "P", s, s, ctx);
  c.K = unflat(j, "K", a, s, ctx);
  if (j.contains("multiplier") && !j["multiplier"].is_null()) c.multiplier = get<double>(j, "multiplier", ctx);
  c.objective = get_or<double>(j, "objective", 0.0, ctx);
  c.lmi_max_eigenvalue = get_or<double>(j, "lmi_max_eigenvalue", 0.0, ctx);
  return c;
}

Json bound_fit_to_json(const BoundFit& fit) {
  Json j = schema_header(kBoundFitSchema);
  j["grid_points"] = fit.grid_points;
  j["x_box"] = to_std(fit.x_box);
  j["u_box"] = to_std(fit.u_box);
  j["rows"] = fit.rows;
  j["scale"] = fit.scale;
  j["train_coverage"] = fit.train_coverage;
  Json f = Json::array();
  for (const Matrix& m : fit.f) f.push_back(flat(m));
  j["F"] = f;
  j["outputs"] = fit.C.rows();
  j["C"] = flat(fit.C);
  j["D"] = flat(fit.D);
  return j;
}

BoundFit bound_fit_from_json(const Json& j) {
  const std::string ctx = "bound fit";
  check_schema(j, kBoundFitSchema);
  BoundFit fit;
  fit.grid_points = get<int>(j, "grid_points", ctx);
  fit.x_box = to_vector(get<std::vector<double>>(j, "x_box", ctx));
  fit.u_box = to_vector(get<std::vector<double>>(j, "u_box", ctx));
  fit.rows = get<std::vector<int>>(j, "rows", ctx);
  fit.scale = get<std::vector<double>>(j, "scale", ctx);
  fit.train_coverage = get<std::vector<double>>(j, "train_coverage", ctx);
  const auto s = fit.x_box.size(), a = fit.u_box.size(), n = s + a;
  if (s == 0 || a == 0) throw ConfigError(ctx + ": empty box");
  const auto& fs = j.at("F");
  if (!fs.is_array() || fs.size() != fit.rows.size() || fit.scale.size() != fit.rows.size())
    throw ConfigError(ctx + ": rows, scale and F must have the same length");
  for (const Json& f : fs) {
    Json holder{{"F", f}};
    fit.f.push_back(unflat(holder, "F", n, n, ctx));
  }
  const auto outputs = get<Eigen::Index>(j, "outputs", ctx);
  fit.C = unflat(j, "C", outputs, s, ctx);
  fit.D = unflat(j, "D", outputs, a, ctx);
  return fit;
}

namespace {

int family_states(EnvFamily f) {
  switch (f) {
    case EnvFamily::CartPole: return 4;
    case EnvFamily::Quadrotor: return 6;
    default: return 5;
  }
}

int family_actions(EnvFamily f) {
  switch (f) {
    case EnvFamily::CartPole: return 1;
    case EnvFamily::Quadrotor: return 2;
    default: return 3;
  }
}

std::pair<int, int> config_dims(const EnvConfig& cfg) {
  if (cfg.family == EnvFamily::Microgrid)
    return {static_cast<int>(cfg.microgrid->A.rows()), static_cast<int>(cfg.microgrid->B.cols())};
  return {family_states(cfg.family), family_actions(cfg.family)};
}

}  // namespace

Json env_config_to_json(const EnvConfig& cfg) {
  Json j = schema_header(kEnvSchema);
  j["family"] = to_string(cfg.family);
  j["seed"] = cfg.seed;
  const auto [s, a] = config_dims(cfg);
  j["dims"] = {{"states", s}, {"actions", a}};
  if (cfg.dt) j["dt"] = *cfg.dt;
  if (cfg.horizon) j["horizon"] = *cfg.horizon;
  if (cfg.alpha) j["alpha"] = *cfg.alpha;
  switch (cfg.family) {
    case EnvFamily::SyntheticNldi: j["d_zero"] = cfg.d_zero; break;
    case EnvFamily::SyntheticPldi:
      if (cfg.vertex_spread) j["vertex_spread"] = *cfg.vertex_spread;
      break;
    case EnvFamily::SyntheticHinf:
      if (cfg.gamma) j["gamma"] = *cfg.gamma;
      break;
    case EnvFamily::CartPole:
      j["cartpole"] = {{"cart_mass", cfg.cartpole.cart_mass},
                       {"pole_mass", cfg.cartpole.pole_mass},
                       {"pole_length", cfg.cartpole.pole_length},
                       {"gravity", cfg.cartpole.gravity}};
      break;
    case EnvFamily::Quadrotor:
      j["quadrotor"] = {{"mass", cfg.quadrotor.mass},
                        {"arm_length", cfg.quadrotor.arm_length},
                        {"inertia", cfg.quadrotor.inertia},
                        {"gravity", cfg.quadrotor.gravity}};
      break;
    case EnvFamily::Microgrid: {
      const MicrogridConfig& m = *cfg.microgrid;
      j["microgrid"] = {{"A", matrix_to_json(m.A)},
                        {"B", matrix_to_json(m.B)},
                        {"G", matrix_to_json(m.G)},
                        {"outputs", m.outputs},
                        {"performance_states", m.performance_states},
                        {"performance_actions", m.performance_actions}};
      break;
    }
  }
  if (cfg.family == EnvFamily::CartPole || cfg.family == EnvFamily::Quadrotor) {
    Json bf;
    bf["grid_points"] = cfg.grid_points;
    if (!cfg.x_box.empty()) bf["x_box"] = cfg.x_box;
    if (!cfg.u_box.empty()) bf["u_box"] = cfg.u_box;
    if (!cfg.bound_fit_file.empty()) bf["file"] = cfg.bound_fit_file;
    j["bound_fit"] = bf;
  }
  return j;
}

EnvConfig env_config_from_json(const Json& j) {
  const std::string ctx = "environment config";
  check_schema(j, kEnvSchema);
  reject_unknown(j,
                 {"schema", "version", "family", "seed", "dims", "dt", "horizon", "alpha", "d_zero", "vertex_spread",
                  "gamma", "cartpole", "quadrotor", "microgrid", "bound_fit"},
                 ctx);
  EnvConfig cfg;
  try {
    cfg.family = env_family_from_string(get<std::string>(j, "family", ctx));
  } catch (const std::invalid_argument& e) {
    throw ConfigError(ctx + ": " + e.what());
  }
  cfg.seed = get_or<std::uint64_t>(j, "seed", 0, ctx);
  if (j.contains("dt")) cfg.dt = get<double>(j, "dt", ctx);
  if (j.contains("horizon")) cfg.horizon = get<int>(j, "horizon", ctx);
  if (j.contains("alpha")) cfg.alpha = get<double>(j, "alpha", ctx);
  if (cfg.dt && !(*cfg.dt > 0.0)) throw ConfigError(ctx + ": dt must be positive");
  if (cfg.horizon && *cfg.horizon < 1) throw ConfigError(ctx + ": horizon must be positive");
  if (cfg.alpha && !(*cfg.alpha >= 0.0)) throw ConfigError(ctx + ": alpha must be nonnegative");
  cfg.d_zero = get_or<bool>(j, "d_zero", true, ctx);
  if (j.contains("vertex_spread")) cfg.vertex_spread = get<double>(j, "vertex_spread", ctx);
  if (j.contains("gamma")) cfg.gamma = get<double>(j, "gamma", ctx);
  if (j.contains("cartpole")) {
    const Json& p = j["cartpole"];
    const std::string c = ctx + ".cartpole";
    reject_unknown(p, {"cart_mass", "pole_mass", "pole_length", "gravity"}, c);
    cfg.cartpole.cart_mass = get_or(p, "cart_mass", cfg.cartpole.cart_mass, c);
    cfg.cartpole.pole_mass = get_or(p, "pole_mass", cfg.cartpole.pole_mass, c);
    cfg.cartpole.pole_length = get_or(p, "pole_length", cfg.cartpole.pole_length, c);
    cfg.cartpole.gravity = get_or(p, "gravity", cfg.cartpole.gravity, c);
  }
  if (j.contains("quadrotor")) {
    const Json& p = j["quadrotor"];
    const std::string c = ctx + ".quadrotor";
    reject_unknown(p, {"mass", "arm_length", "inertia", "gravity"}, c);
    cfg.quadrotor.mass = get_or(p, "mass", cfg.quadrotor.mass, c);
    cfg.quadrotor.arm_length = get_or(p, "arm_length", cfg.quadrotor.arm_length, c);
    cfg.quadrotor.inertia = get_or(p, "inertia", cfg.quadrotor.inertia, c);
    cfg.quadrotor.gravity = get_or(p, "gravity", cfg.quadrotor.gravity, c);
  }
  if (j.contains("bound_fit")) {
    const Json& b = j["bound_fit"];
    const std::string c = ctx + ".bound_fit";
    reject_unknown(b, {"grid_points", "x_box", "u_box", "file"}, c);
    cfg.grid_points = get_or(b, "grid_points", cfg.grid_points, c);
    cfg.x_box = get_or(b, "x_box", cfg.x_box, c);
    cfg.u_box = get_or(b, "u_box", cfg.u_box, c);
    cfg.bound_fit_file = get_or(b, "file", cfg.bound_fit_file, c);
    if (cfg.grid_points < 2) throw ConfigError(c + ": grid_points must be at least 2");
  }
  if (cfg.family == EnvFamily::Microgrid) {
    if (!j.contains("microgrid")) throw ConfigError(ctx + ": microgrid family needs a \"microgrid\" section");
    const Json& m = j["microgrid"];
    const std::string c = ctx + ".microgrid";
    reject_unknown(m, {"A", "B", "G", "outputs", "performance_states", "performance_actions"}, c);
    MicrogridConfig mg;
    for (const char* key : {"A", "B", "G"})
      if (!m.contains(key)) throw ConfigError(c + ": missing \"" + key + "\"");
    mg.A = matrix_from_json(m["A"], "microgrid.A");
    mg.B = matrix_from_json(m["B"], "microgrid.B");
    mg.G = matrix_from_json(m["G"], "microgrid.G");
    if (mg.A.rows() != mg.A.cols()) throw ConfigError(c + ": A must be square");
    if (mg.B.rows() != mg.A.rows())
      throw ConfigError(c + ": B has " + std::to_string(mg.B.rows()) + " rows but A is " +
                        std::to_string(mg.A.rows()) + "x" + std::to_string(mg.A.cols()));
    if (mg.G.rows() != mg.A.rows()) throw ConfigError(c + ": G must have as many rows as A");
    mg.outputs = get_or(m, "outputs", 1, c);
    if (mg.outputs < 1) throw ConfigError(c + ": outputs must be positive");
    mg.performance_states = get_or(m, "performance_states", std::vector<int>{}, c);
    mg.performance_actions = get_or(m, "performance_actions", std::vector<int>{}, c);
    for (int i : mg.performance_states)
      if (i < 0 || i >= mg.A.rows()) throw ConfigError(c + ": performance state index out of range");
    for (int i : mg.performance_actions)
      if (i < 0 || i >= mg.B.cols()) throw ConfigError(c + ": performance action index out of range");
    cfg.microgrid = mg;
  } else if (j.contains("microgrid")) {
    throw ConfigError(ctx + ": \"microgrid\" section given for family " + to_string(cfg.family));
  }
  const auto [s, a] = config_dims(cfg);
  if (!cfg.x_box.empty() && static_cast<int>(cfg.x_box.size()) != s)
    throw ConfigError(ctx + ": bound_fit.x_box must have " + std::to_string(s) + " entries");
  if (!cfg.u_box.empty() && static_cast<int>(cfg.u_box.size()) != a)
    throw ConfigError(ctx + ": bound_fit.u_box must have " + std::to_string(a) + " entries");
  if (j.contains("dims")) {
    const Json& d = j["dims"];
    if (get<int>(d, "states", ctx + ".dims") != s || get<int>(d, "actions", ctx + ".dims") != a)
      throw ConfigError(ctx + ": dims do not match the family (" + std::to_string(s) + " states, " +
                        std::to_string(a) + " actions)");
  }
  return cfg;
}

EnvInstance build_env(const EnvConfig& cfg, const fs::path& base_dir) {
  EnvInstance env;
  try {
    BoundFitSettings fit;
    fit.grid_points = cfg.grid_points;
    fit.x_box = to_vector(cfg.x_box);
    fit.u_box = to_vector(cfg.u_box);
    std::optional<BoundFit> saved;
    if (!cfg.bound_fit_file.empty()) {
      const fs::path p = fs::path(cfg.bound_fit_file).is_absolute() ? fs::path(cfg.bound_fit_file)
                                                                     : base_dir / cfg.bound_fit_file;
      saved = bound_fit_from_json(read_json(p));
    }
    switch (cfg.family) {
      case EnvFamily::SyntheticNldi: env = gen_synthetic_nldi(cfg.seed, cfg.d_zero); break;
      case EnvFamily::SyntheticPldi: env = gen_synthetic_pldi(cfg.seed, cfg.vertex_spread.value_or(0.3)); break;
      case EnvFamily::SyntheticHinf: env = gen_synthetic_hinf(cfg.seed, cfg.gamma.value_or(10.0)); break;
      case EnvFamily::CartPole:
        env = saved ? make_cartpole(cfg.seed, cfg.cartpole, *saved) : make_cartpole(cfg.seed, cfg.cartpole, fit);
        break;
      case EnvFamily::Quadrotor:
        env = saved ? make_quadrotor(cfg.seed, cfg.quadrotor, *saved) : make_quadrotor(cfg.seed, cfg.quadrotor, fit);
        break;
      case EnvFamily::Microgrid: {
        const MicrogridConfig& m = *cfg.microgrid;
        env = make_microgrid(m.A, m.B, m.G, m.outputs, m.performance_states, m.performance_actions, cfg.seed);
        break;
      }
    }
    if (cfg.dt) env.dt = *cfg.dt;
    if (cfg.horizon) env.horizon = *cfg.horizon;
    if (cfg.alpha) env.alpha = *cfg.alpha;
    env.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("environment: ") + e.what());
  }
  return env;
}

EnvInstance microgrid_from_config(const fs::path& path) {
  const EnvConfig cfg = env_config_from_json(read_json(path));
  if (cfg.family != EnvFamily::Microgrid) throw ConfigError(path.string() + ": family is not microgrid");
  return build_env(cfg, path.parent_path());
}

Json checkpoint_to_json(const RobustPolicy& policy, Method method, const std::string& cert_ref) {
  Json j = schema_header(kCheckpointSchema);
  j["method"] = to_string(method);
  j["kind"] = to_string(policy.kind);
  j["arch"] = {{"widths", policy.net.widths}, {"activation", "relu"}};
  j["K"] = flat(policy.K);
  j["params"] = to_std(policy.net.flatten());
  j["cert_ref"] = cert_ref;
  return j;
}

Checkpoint checkpoint_from_json(const Json& j) {
  const std::string ctx = "checkpoint";
  check_schema(j, kCheckpointSchema);
  Checkpoint ck;
  try {
    ck.method = method_from_string(get<std::string>(j, "method", ctx));
    ck.kind = safe_set_kind_from_string(get<std::string>(j, "kind", ctx));
  } catch (const std::invalid_argument& e) {
    throw ConfigError(ctx + ": " + e.what());
  }
  if (!j.contains("arch")) throw ConfigError(ctx + ": missing \"arch\"");
  const Json& arch = j["arch"];
  if (get_or<std::string>(arch, "activation", "relu", ctx) != "relu")
    throw ConfigError(ctx + ": only relu networks are supported");
  const auto widths = get<std::vector<int>>(arch, "widths", ctx + ".arch");
  try {
    ck.net = Mlp::create(widths, 0, true);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(ctx + ": " + e.what());
  }
  const auto params = get<std::vector<double>>(j, "params", ctx);
  if (static_cast<Eigen::Index>(params.size()) != ck.net.parameter_count())
    throw ConfigError(ctx + ": expected " + std::to_string(ck.net.parameter_count()) + " parameters, found " +
                      std::to_string(params.size()));
  ck.net.unflatten(to_vector(params));
  ck.K = unflat(j, "K", widths.back(), widths.front(), ctx);
  ck.cert_ref = get_or<std::string>(j, "cert_ref", "", ctx);
  return ck;
}

RobustPolicy policy_from_checkpoint(const Checkpoint& ck, const EnvInstance& env,
                                    const std::optional<RobustCertificate>& cert) {
  if (ck.K.cols() != env.states() || ck.K.rows() != env.actions())
    throw ConfigError("checkpoint: policy dimensions do not match the environment");
  RobustPolicy p;
  p.kind = ck.kind;
  p.K = ck.K;
  p.net = ck.net;
  if (p.kind != SafeSetKind::None) {
    if (!cert) throw ConfigError(std::string("checkpoint: safe-set kind ") + to_string(p.kind) + " needs a certificate");
    if (cert->P.rows() != env.states()) throw ConfigError("checkpoint: certificate dimension does not match");
    p.cert = *cert;
    std::visit([&](const auto& s) { p.system = s; }, env.system);
  }
  try {
    p.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("checkpoint: ") + e.what());
  }
  return p;
}

std::string learning_curve_csv(const std::vector<CurvePoint>& curve) {
  std::string out = "epoch,mean_cost_original,mean_cost_adversarial,instability_count\n";
  for (const CurvePoint& p : curve)
    out += std::to_string(p.epoch) + "," + format_double(p.mean_cost_original) + "," +
           format_double(p.mean_cost_adversarial) + "," + std::to_string(p.instability_count) + "\n";
  return out;
}

std::string trajectory_csv(const Trajectory& traj, const EnvInstance& env, const Matrix& P) {
  const int s = env.states(), a = env.actions();
  const int d = traj.w.empty() ? 0 : static_cast<int>(traj.w.front().size());
  std::string out = "t";
  for (int i = 1; i <= s; ++i) out += ",x" + std::to_string(i);
  for (int i = 1; i <= a; ++i) out += ",u" + std::to_string(i);
  for (int i = 1; i <= d; ++i) out += ",w" + std::to_string(i);
  out += ",V,cost_increment\n";
  for (int t = 0; t < traj.steps; ++t) {
    out += format_double(t * env.dt);
    for (int i = 0; i < s; ++i) out += "," + format_double(traj.x[t](i));
    for (int i = 0; i < a; ++i) out += "," + format_double(traj.u[t](i));
    for (int i = 0; i < d; ++i) out += "," + format_double(traj.w[t](i));
    out += "," + (P.size() > 0 ? format_double(traj.x[t].dot(P * traj.x[t])) : std::string());
    out += "," + format_double(traj.stage_cost[t]) + "\n";
  }
  return out;
}

namespace {

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string fixed(double v, int digits = 2) {
  std::ostringstream os;
  os.imbue(std::locale::classic());
  os.setf(std::ios::fixed);
  os.precision(digits);
  os << v;
  return os.str();
}

std::string tick_label(double v) {
  std::ostringstream os;
  os.imbue(std::locale::classic());
  os.precision(4);
  os << v;
  return os.str();
}

}  // namespace

std::string svg_line_chart(const std::string& title, const std::string& x_label, const std::string& y_label,
                           const std::vector<SvgSeries>& series) {
  static const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};
  const double width = 720, height = 440, left = 80, right = 180, top = 40, bottom = 60;
  const double pw = width - left - right, ph = height - top - bottom;

  double xmin = INFINITY, xmax = -INFINITY, ymin = INFINITY, ymax = -INFINITY;
  for (const SvgSeries& s : series) {
    for (std::size_t i = 0; i < s.x.size() && i < s.y.size(); ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
      xmin = std::min(xmin, s.x[i]);
      xmax = std::max(xmax, s.x[i]);
      ymin = std::min(ymin, s.y[i]);
      ymax = std::max(ymax, s.y[i]);
    }
    for (double m : s.markers) {
      xmin = std::min(xmin, m);
      xmax = std::max(xmax, m);
    }
  }
  if (!std::isfinite(xmin)) xmin = 0, xmax = 1;
  if (!std::isfinite(ymin)) ymin = 0, ymax = 1;
  if (xmax == xmin) xmax = xmin + 1;
  if (ymax == ymin) ymax = ymin + 1;
  const double ypad = 0.05 * (ymax - ymin);
  ymin -= ypad;
  ymax += ypad;
  auto px = [&](double x) { return left + (x - xmin) / (xmax - xmin) * pw; };
  auto py = [&](double y) { return top + (ymax - y) / (ymax - ymin) * ph; };

  std::string out;
  out += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + fixed(width, 0) + "\" height=\"" + fixed(height, 0) +
         "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  out += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out += "<text x=\"" + fixed(left + pw / 2) + "\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">" +
         xml_escape(title) + "</text>\n";
  out += "<rect x=\"" + fixed(left) + "\" y=\"" + fixed(top) + "\" width=\"" + fixed(pw) + "\" height=\"" +
         fixed(ph) + "\" fill=\"none\" stroke=\"black\"/>\n";
  for (int k = 0; k <= 4; ++k) {
    const double xv = xmin + k * (xmax - xmin) / 4, yv = ymin + k * (ymax - ymin) / 4;
    out += "<text x=\"" + fixed(px(xv)) + "\" y=\"" + fixed(top + ph + 18) + "\" text-anchor=\"middle\">" +
           tick_label(xv) + "</text>\n";
    out += "<text x=\"" + fixed(left - 6) + "\" y=\"" + fixed(py(yv) + 4) + "\" text-anchor=\"end\">" +
           tick_label(yv) + "</text>\n";
    out += "<line x1=\"" + fixed(left) + "\" y1=\"" + fixed(py(yv)) + "\" x2=\"" + fixed(left + pw) + "\" y2=\"" +
           fixed(py(yv)) + "\" stroke=\"#dddddd\"/>\n";
  }
  out += "<text x=\"" + fixed(left + pw / 2) + "\" y=\"" + fixed(height - 16) + "\" text-anchor=\"middle\">" +
         xml_escape(x_label) + "</text>\n";
  out += "<text transform=\"translate(18," + fixed(top + ph / 2) + ") rotate(-90)\" text-anchor=\"middle\">" +
         xml_escape(y_label) + "</text>\n";

  for (std::size_t k = 0; k < series.size(); ++k) {
    const SvgSeries& s = series[k];
    const std::string color = palette[k % 6];
    std::string pts;
    for (std::size_t i = 0; i < s.x.size() && i < s.y.size(); ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
      pts += (pts.empty() ? "" : " ") + fixed(px(s.x[i])) + "," + fixed(py(s.y[i]));
    }
    if (!pts.empty())
      out += "<polyline fill=\"none\" stroke=\"" + color + "\" stroke-width=\"2\" points=\"" + pts + "\"/>\n";
    for (double m : s.markers) {
      // Anchor the marker on the series value at that x when there is one.
      double y = ymax - ypad;
      for (std::size_t i = 0; i < s.x.size() && i < s.y.size(); ++i)
        if (s.x[i] == m && std::isfinite(s.y[i])) y = s.y[i];
      out += "<text x=\"" + fixed(px(m)) + "\" y=\"" + fixed(py(y) + 5) + "\" text-anchor=\"middle\" fill=\"" +
             color + "\" font-size=\"16\" font-weight=\"bold\">X</text>\n";
    }
    const double ly = top + 16 + 20 * static_cast<double>(k);
    out += "<line x1=\"" + fixed(left + pw + 12) + "\" y1=\"" + fixed(ly) + "\" x2=\"" + fixed(left + pw + 36) +
           "\" y2=\"" + fixed(ly) + "\" stroke=\"" + color + "\" stroke-width=\"2\"/>\n";
    out += "<text x=\"" + fixed(left + pw + 42) + "\" y=\"" + fixed(ly + 4) + "\">" + xml_escape(s.label) +
           "</text>\n";
  }
  out += "</svg>\n";
  return out;
}

}  // namespace robctl
