// robctl: synthesis, bound fitting, training and evaluation from the command line.

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "robctl/experiment.hpp"

using namespace robctl;
namespace fs = std::filesystem;

namespace {

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out = "out";
  std::optional<double> alpha;
  std::string method;
  std::string mode = "both";
  std::optional<int> episodes;
};

Method parse_method(const std::string& s, Method fallback) {
  if (s.empty()) return fallback;
  try {
    return method_from_string(s);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
}

std::vector<EvalMode> parse_modes(const std::string& s) {
  if (s == "both") return {EvalMode::Original, EvalMode::Adversarial};
  try {
    return {eval_mode_from_string(s)};
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
}

void say(const std::string& line) { std::cout << line << "\n"; }

ExperimentSpec load_spec(const Options& o) {
  if (o.config.empty()) throw ConfigError("--config is required");
  ExperimentSpec spec = load_experiment(o.config);
  if (o.alpha) spec.alpha = *o.alpha;
  if (o.episodes) spec.eval_episodes = *o.episodes;
  spec.validate();
  return spec;
}

PreparedEnv prepare(const ExperimentSpec& spec) {
  const EnvInstance env = build_env(spec.env, spec.env_base);
  return prepare_env(env, spec.alpha.value_or(env.alpha));
}

std::string residual_report(const EnvInstance& env, const RobustCertificate& cert) {
  std::string r = "kind " + std::string(to_string(cert.kind)) + "\nalpha " + format_double(cert.alpha) +
                  "\nobjective " + format_double(cert.objective) + "\n";
  if (cert.kind == CertificateKind::Lqr) return r;
  const std::vector<Matrix> blocks = lmi_blocks_for(env, cert);
  double worst = -INFINITY;
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    const double e = max_eigenvalue(blocks[i]);
    worst = std::max(worst, e);
    r += "block " + std::to_string(i) + " lambda_max " + format_double(e) + "\n";
  }
  r += "max_residual " + format_double(worst) + "\nholds " + (lmi_blocks_hold(blocks) ? "true" : "false") + "\n";
  return r;
}

int cmd_synth(const Options& o) {
  if (o.config.empty()) throw ConfigError("--config is required");
  EnvConfig cfg = env_config_from_json(read_json(o.config));
  if (o.seed) cfg.seed = *o.seed;
  const EnvInstance env = build_env(cfg, fs::path(o.config).parent_path());
  const Method m = parse_method(o.method, Method::RobustLqr);
  const RobustCertificate cert = is_robust(m) ? synthesize_for(env, o.alpha.value_or(env.alpha)) : lqr_for(env);
  const fs::path out(o.out);
  write_json(out / "certificate.json", certificate_to_json(cert));
  const std::string report = residual_report(env, cert);
  write_text(out / "residuals.txt", report);
  std::cout << report;
  return 0;
}

int cmd_fit_bounds(const Options& o) {
  if (o.config.empty()) throw ConfigError("--config is required");
  const EnvConfig cfg = env_config_from_json(read_json(o.config));
  std::function<DynamicsEval(const Vector&, const Vector&)> dyn;
  Vector x_box, u_box;
  if (cfg.family == EnvFamily::CartPole) {
    dyn = [p = cfg.cartpole](const Vector& x, const Vector& u) { return cartpole_dynamics(x, u, p); };
    x_box = cartpole_state_box();
    u_box = cartpole_action_box();
  } else if (cfg.family == EnvFamily::Quadrotor) {
    dyn = [p = cfg.quadrotor](const Vector& x, const Vector& u) { return quadrotor_dynamics(x, u, p); };
    x_box = quadrotor_state_box();
    u_box = quadrotor_action_box();
  } else {
    throw ConfigError(std::string("fit-bounds needs a physical family, got ") + to_string(cfg.family));
  }
  if (!cfg.x_box.empty()) x_box = Eigen::Map<const Vector>(cfg.x_box.data(), cfg.x_box.size());
  if (!cfg.u_box.empty()) u_box = Eigen::Map<const Vector>(cfg.u_box.data(), cfg.u_box.size());
  BoundFitSettings settings;
  settings.grid_points = cfg.grid_points;
  const BoundFit fit = fit_norm_bounds(dyn, x_box, u_box, settings);
  const double train = bound_fit_coverage(dyn, fit, x_box, u_box, cfg.grid_points);
  const double held_out = bound_fit_coverage(dyn, fit, x_box, u_box, 2 * cfg.grid_points);
  const fs::path out(o.out);
  write_json(out / "bound_fit.json", bound_fit_to_json(fit));
  std::string report = "row,scale,train_coverage\n";
  for (std::size_t i = 0; i < fit.rows.size(); ++i)
    report += std::to_string(fit.rows[i]) + "," + format_double(fit.scale[i]) + "," +
              format_double(fit.train_coverage[i]) + "\n";
  write_text(out / "bound_fit_rows.csv", report);
  const std::string summary = "train_grid_points " + std::to_string(cfg.grid_points) + "\ntrain_coverage " +
                              format_double(train) + "\nheldout_grid_points " + std::to_string(2 * cfg.grid_points) +
                              "\nheldout_coverage " + format_double(held_out) + "\nC_rows " +
                              std::to_string(fit.C.rows()) + "\nD_zero " +
                              (fit.D.isZero(0.0) ? "true" : "false") + "\n";
  write_text(out / "coverage.txt", summary);
  std::cout << summary;
  return 0;
}

void write_run(const fs::path& dir, const PreparedEnv& prep, const MethodRun& run) {
  const RobustCertificate& cert = is_robust(run.method) ? prep.robust : prep.lqr;
  write_json(dir / "certificate.json", certificate_to_json(cert));
  write_json(dir / "checkpoint.json", checkpoint_to_json(run.policy, run.method, "certificate.json"));
  if (!run.curve.empty()) {
    write_text(dir / "learning_curve.csv", learning_curve_csv(run.curve));
    write_text(dir / "learning_curve.svg",
               learning_curve_svg(std::string("learning curve: ") + to_string(run.method), {run}));
  }
}

int cmd_train(const Options& o) {
  const ExperimentSpec spec = load_spec(o);
  const PreparedEnv prep = prepare(spec);
  const Method m = parse_method(o.method, Method::RobustMbp);
  const std::uint64_t seed = o.seed.value_or(spec.seeds.front());
  const MethodRun run = run_method(prep, m, seed, spec.train, spec.adversary);
  write_run(o.out, prep, run);
  if (!run.curve.empty()) {
    const CurvePoint& last = run.curve.back();
    say("final epoch " + std::to_string(last.epoch) + " original " + format_double(last.mean_cost_original) +
        " adversarial " + format_double(last.mean_cost_adversarial) + " instabilities " +
        std::to_string(last.instability_count));
  }
  say(std::string("wrote ") + (fs::path(o.out) / "checkpoint.json").string());
  return 0;
}

/// Policy from <out>/checkpoint.json, or built directly for non-learned methods.
RobustPolicy load_policy(const Options& o, const PreparedEnv& prep, Method* method, std::optional<RobustCertificate>* cert) {
  const fs::path ck_path = fs::path(o.out) / "checkpoint.json";
  if (!fs::exists(ck_path)) {
    const Method m = parse_method(o.method, Method::RobustLqr);
    if (is_learned(m))
      throw ConfigError("missing checkpoint " + ck_path.string() + " for learned method " + to_string(m) +
                        " (run train with the same --out first)");
    *method = m;
    *cert = is_robust(m) ? prep.robust : prep.lqr;
    return make_policy(m, prep.env, prep.robust, prep.lqr, 0);
  }
  const Checkpoint ck = checkpoint_from_json(read_json(ck_path));
  if (!o.method.empty() && parse_method(o.method, ck.method) != ck.method)
    throw ConfigError(std::string("checkpoint holds method ") + to_string(ck.method) + ", not " + o.method);
  *method = ck.method;
  if (!ck.cert_ref.empty()) {
    const fs::path cp = fs::path(o.out) / ck.cert_ref;
    if (!fs::exists(cp)) throw ConfigError("missing certificate " + cp.string() + " referenced by the checkpoint");
    *cert = certificate_from_json(read_json(cp));
  }
  return policy_from_checkpoint(ck, prep.env, *cert);
}

int cmd_eval(const Options& o) {
  const ExperimentSpec spec = load_spec(o);
  const PreparedEnv prep = prepare(spec);
  Method method = Method::Lqr;
  std::optional<RobustCertificate> cert;
  const RobustPolicy policy = load_policy(o, prep, &method, &cert);
  const std::uint64_t seed = o.seed.value_or(spec.seeds.front());
  std::string table = "method,mode,mean_cost,instability_count,episodes,lyapunov_violations\n";
  for (EvalMode mode : parse_modes(o.mode)) {
    if (mode == EvalMode::Adversarial && !prep.env.is_nldi()) {
      say("skipping adversarial mode: the environment is not an NLDI");
      continue;
    }
    EvalOptions opts = eval_options(seed, spec.eval_episodes, spec.adversary);
    opts.keep_trajectories = true;
    const bool monitor = cert && cert->kind != CertificateKind::Lqr;
    if (monitor) opts.monitor = &*cert;
    const EvalResult r = evaluate(policy, prep.env, mode, opts);
    table += std::string(to_string(method)) + "," + to_string(mode) + "," + format_double(r.mean_cost) + "," +
             std::to_string(r.instabilities) + "," + std::to_string(r.episodes) + "," +
             (monitor ? std::to_string(r.lyapunov_violations) : std::string()) + "\n";
    const Matrix P = cert ? cert->P : Matrix();
    write_text(fs::path(o.out) / (std::string("trajectory_") + to_string(mode) + ".csv"),
               trajectory_csv(r.trajectories.front(), prep.env, P));
    std::vector<SvgSeries> series;
    for (std::size_t i = 0; i < r.trajectories.size() && i < 5; ++i) {
      const Trajectory& t = r.trajectories[i];
      SvgSeries s{"episode " + std::to_string(i), {}, {}, {}};
      for (int k = 0; k <= t.steps; ++k) {
        s.x.push_back(k * prep.env.dt);
        s.y.push_back(t.x[k].norm());
      }
      if (t.diverged) s.markers.push_back(t.steps * prep.env.dt);
      series.push_back(s);
    }
    write_text(fs::path(o.out) / (std::string("state_norm_") + to_string(mode) + ".svg"),
               svg_line_chart(std::string("state norm, ") + to_string(method) + ", " + to_string(mode), "time [s]",
                              "||x||", series));
  }
  write_text(fs::path(o.out) / "eval.csv", table);
  std::cout << table;
  return 0;
}

int cmd_compare(const Options& o) {
  ExperimentSpec spec = load_spec(o);
  if (o.seed) spec.seeds = {*o.seed};
  if (!o.method.empty()) spec.methods = {parse_method(o.method, Method::Lqr)};
  if (o.mode != "both") spec.modes = parse_modes(o.mode);
  const PreparedEnv prep = prepare(spec);
  const CompareResult res = run_compare(spec, prep);
  const fs::path out(o.out);
  for (const MethodRun& run : res.runs)
    write_run(out / "runs" / (std::string(to_string(run.method)) + "_seed" + std::to_string(run.seed)), prep, run);
  write_text(out / "compare.csv", compare_csv(res.rows));
  write_text(out / "compare_seeds.csv", compare_seeds_csv(res.rows, spec.seeds));
  write_text(out / "learning_curves.svg", learning_curve_svg("learning curves", res.runs));
  std::cout << compare_csv(res.rows);
  return 0;
}

int cmd_adversary(const Options& o) {
  const ExperimentSpec spec = load_spec(o);
  const PreparedEnv prep = prepare(spec);
  if (!prep.env.is_nldi()) throw ConfigError("adversary needs an NLDI environment");
  Method method = Method::Lqr;
  std::optional<RobustCertificate> cert;
  const RobustPolicy policy = load_policy(o, prep, &method, &cert);
  const std::uint64_t seed = o.seed.value_or(spec.seeds.front());
  const int episodes = o.episodes.value_or(5);
  EvalOptions opts = eval_options(seed, episodes, spec.adversary);
  opts.keep_trajectories = true;
  const EvalResult orig = evaluate(policy, prep.env, EvalMode::Original, opts);
  const EvalResult adv = evaluate(policy, prep.env, EvalMode::Adversarial, opts);
  std::string table = "episode,cost_original,cost_adversarial,diverged_adversarial,max_abs_state_adversarial\n";
  std::vector<SvgSeries> series;
  for (int i = 0; i < episodes; ++i) {
    const Trajectory& t = adv.trajectories[i];
    double peak = 0.0;
    SvgSeries s{"episode " + std::to_string(i), {}, {}, {}};
    for (int k = 0; k <= t.steps; ++k) {
      peak = std::max(peak, t.x[k].cwiseAbs().maxCoeff());
      s.x.push_back(k * prep.env.dt);
      s.y.push_back(t.x[k].norm());
    }
    if (t.diverged) s.markers.push_back(t.steps * prep.env.dt);
    series.push_back(s);
    table += std::to_string(i) + "," + format_double(orig.costs[i]) + "," + format_double(adv.costs[i]) + "," +
             (t.diverged ? "1" : "0") + "," + format_double(peak) + "\n";
    write_text(fs::path(o.out) / ("adversary_episode" + std::to_string(i) + ".csv"),
               trajectory_csv(t, prep.env, cert ? cert->P : Matrix()));
  }
  write_text(fs::path(o.out) / "adversary.csv", table);
  write_text(fs::path(o.out) / "adversary.svg",
             svg_line_chart(std::string("adversarial rollouts, ") + to_string(method), "time [s]", "||x||", series));
  std::cout << table;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Robust controller synthesis, bound fitting, training and evaluation"};
  app.require_subcommand(1);
  Options o;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config, "environment or experiment JSON")->required();
    sub->add_option("--seed", o.seed, "seed (environment seed for synth, run seed otherwise)");
    sub->add_option("--out", o.out, "output directory")->capture_default_str();
    sub->add_option("--alpha", o.alpha, "stability rate for synthesis");
    sub->add_option("--method", o.method, "lqr, robust-lqr, mbp or robust-mbp");
    sub->add_option("--mode", o.mode, "original, adversarial or both")->capture_default_str();
    sub->add_option("--episodes", o.episodes, "evaluation episodes")->check(CLI::PositiveNumber);
  };
  struct Command {
    const char* name;
    const char* help;
    int (*run)(const Options&);
  };
  const Command commands[] = {
      {"synth", "synthesize a certificate (P, K) and report LMI residuals", cmd_synth},
      {"fit-bounds", "fit the NLDI norm bound of a physical system", cmd_fit_bounds},
      {"train", "train (or build) one method's policy", cmd_train},
      {"eval", "evaluate a policy under original and/or adversarial dynamics", cmd_eval},
      {"compare", "run and evaluate every method and seed of an experiment", cmd_compare},
      {"adversary", "dump adversarial rollouts of a policy", cmd_adversary},
  };
  std::vector<std::pair<CLI::App*, const Command*>> subs;
  for (const Command& c : commands) {
    CLI::App* sub = app.add_subcommand(c.name, c.help);
    add_common(sub);
    subs.emplace_back(sub, &c);
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }
  try {
    for (const auto& [sub, cmd] : subs)
      if (sub->parsed()) return cmd->run(o);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const SynthesisError& e) {
    std::cerr << "synthesis failed: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
