#include "robctl/experiment.hpp"

#include <cmath>
#include <algorithm>
#include <numeric>
#include <set>

namespace robctl {

namespace fs = std::filesystem;

namespace {

const char* optimizer_name(Optimizer o) {
  switch (o) {
    case Optimizer::GradientDescent: return "gd";
    case Optimizer::Momentum: return "momentum";
    case Optimizer::Adam: return "adam";
  }
  return "gd";
}

Optimizer optimizer_from_name(const std::string& s) {
  if (s == "gd") return Optimizer::GradientDescent;
  if (s == "momentum") return Optimizer::Momentum;
  if (s == "adam") return Optimizer::Adam;
  throw ConfigError("unknown optimizer \"" + s + "\" (expected gd, momentum or adam)");
}

template <class T>
T read(const Json& j, const char* key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError(std::string("experiment: \"") + key + "\" has the wrong type");
  }
}

}  // namespace

void ExperimentSpec::validate() const {
  if (methods.empty()) throw ConfigError("experiment: the method list is empty");
  if (modes.empty()) throw ConfigError("experiment: the mode list is empty");
  if (seeds.empty()) throw ConfigError("experiment: no seeds given");
  if (eval_episodes < 1) throw ConfigError("experiment: eval_episodes must be positive");
  if (train.updates < 0 || train.rollouts < 1 || train.eval_interval < 1 || train.curve_episodes < 1)
    throw ConfigError("experiment: training counts must be positive");
  if (!(train.lr_robust >= 0.0) || !(train.lr_nonrobust >= 0.0))
    throw ConfigError("experiment: learning rates must be nonnegative");
  if (!(train.max_grad_norm >= 0.0)) throw ConfigError("experiment: max_grad_norm must be nonnegative");
  if (alpha && !(*alpha >= 0.0)) throw ConfigError("experiment: alpha must be nonnegative");
  try {
    adversary.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("experiment: ") + e.what());
  }
}

Json experiment_to_json(const ExperimentSpec& spec) {
  Json j = schema_header(kExperimentSchema);
  j["env"] = env_config_to_json(spec.env);
  Json methods = Json::array(), modes = Json::array();
  for (Method m : spec.methods) methods.push_back(to_string(m));
  for (EvalMode m : spec.modes) modes.push_back(to_string(m));
  j["methods"] = methods;
  j["modes"] = modes;
  j["seeds"] = spec.seeds;
  if (spec.alpha) j["alpha"] = *spec.alpha;
  j["eval_episodes"] = spec.eval_episodes;
  j["train"] = {{"updates", spec.train.updates},
                {"rollouts", spec.train.rollouts},
                {"lr_robust", spec.train.lr_robust},
                {"lr_nonrobust", spec.train.lr_nonrobust},
                {"optimizer", optimizer_name(spec.train.optimizer)},
                {"max_grad_norm", spec.train.max_grad_norm},
                {"eval_interval", spec.train.eval_interval},
                {"curve_episodes", spec.train.curve_episodes},
                {"curve_adversarial", spec.train.curve_adversarial}};
  j["adversary"] = {{"replan_interval", spec.adversary.replan_interval},
                    {"horizon", spec.adversary.horizon},
                    {"inner_steps", spec.adversary.inner_steps},
                    {"inner_rate", spec.adversary.inner_rate},
                    {"hidden", spec.adversary.hidden}};
  return j;
}

ExperimentSpec experiment_from_json(const Json& j, const fs::path& base_dir) {
  check_schema(j, kExperimentSchema);
  for (const auto& item : j.items()) {
    static const std::set<std::string> allowed = {"schema", "version", "env",   "methods",       "modes",
                                                  "seeds",  "alpha",   "train", "eval_episodes", "adversary"};
    if (!allowed.count(item.key())) throw ConfigError("experiment: unknown field \"" + item.key() + "\"");
  }
  ExperimentSpec spec;
  if (!j.contains("env")) throw ConfigError("experiment: missing \"env\"");
  if (j["env"].is_string()) {
    const fs::path p = base_dir / j["env"].get<std::string>();
    spec.env = env_config_from_json(read_json(p));
    spec.env_base = p.parent_path();
  } else {
    spec.env = env_config_from_json(j["env"]);
    spec.env_base = base_dir;
  }
  try {
    for (const std::string& m : read<std::vector<std::string>>(j, "methods", {}))
      spec.methods.push_back(method_from_string(m));
    if (j.contains("modes")) {
      spec.modes.clear();
      for (const std::string& m : read<std::vector<std::string>>(j, "modes", {}))
        spec.modes.push_back(eval_mode_from_string(m));
    }
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("experiment: ") + e.what());
  }
  spec.seeds = read(j, "seeds", spec.seeds);
  if (j.contains("alpha")) spec.alpha = read<double>(j, "alpha", 0.0);
  spec.eval_episodes = read(j, "eval_episodes", spec.eval_episodes);
  if (j.contains("train")) {
    const Json& t = j["train"];
    spec.train.updates = read(t, "updates", spec.train.updates);
    spec.train.rollouts = read(t, "rollouts", spec.train.rollouts);
    spec.train.lr_robust = read(t, "lr_robust", spec.train.lr_robust);
    spec.train.lr_nonrobust = read(t, "lr_nonrobust", spec.train.lr_nonrobust);
    spec.train.optimizer = optimizer_from_name(read<std::string>(t, "optimizer", "gd"));
    spec.train.max_grad_norm = read(t, "max_grad_norm", spec.train.max_grad_norm);
    spec.train.eval_interval = read(t, "eval_interval", spec.train.eval_interval);
    spec.train.curve_episodes = read(t, "curve_episodes", spec.train.curve_episodes);
    spec.train.curve_adversarial = read(t, "curve_adversarial", spec.train.curve_adversarial);
  }
  if (j.contains("adversary")) {
    const Json& a = j["adversary"];
    spec.adversary.replan_interval = read(a, "replan_interval", spec.adversary.replan_interval);
    spec.adversary.horizon = read(a, "horizon", spec.adversary.horizon);
    spec.adversary.inner_steps = read(a, "inner_steps", spec.adversary.inner_steps);
    spec.adversary.inner_rate = read(a, "inner_rate", spec.adversary.inner_rate);
    spec.adversary.hidden = read(a, "hidden", spec.adversary.hidden);
  }
  spec.validate();
  return spec;
}

ExperimentSpec load_experiment(const fs::path& path) {
  const Json j = read_json(path);
  if (j.is_object() && j.contains("schema") && j["schema"] == kEnvSchema) {
    ExperimentSpec spec;
    spec.env = env_config_from_json(j);
    spec.env_base = path.parent_path();
    spec.methods = {Method::Lqr, Method::RobustLqr, Method::Mbp, Method::RobustMbp};
    return spec;
  }
  return experiment_from_json(j, path.parent_path());
}

PreparedEnv prepare_env(const EnvInstance& env, double alpha) {
  PreparedEnv p;
  p.env = env;
  p.robust = synthesize_for(env, alpha);
  p.lqr = lqr_for(env);
  return p;
}

MethodRun run_method(const PreparedEnv& prepared, Method method, std::uint64_t seed, const TrainSettings& settings,
                     const AdversaryConfig& adversary, const std::function<void(int, const RobustPolicy&)>& on_update) {
  MethodRun run;
  run.method = method;
  run.seed = seed;
  run.policy = make_policy(method, prepared.env, prepared.robust, prepared.lqr, derive_seed(seed, 0x7E7));
  if (!is_learned(method)) return run;
  TrainConfig cfg;
  cfg.updates = settings.updates;
  cfg.rollouts = settings.rollouts;
  cfg.learning_rate = is_robust(method) ? settings.lr_robust : settings.lr_nonrobust;
  cfg.seed = derive_seed(seed, 0x75A1);
  cfg.optimizer = settings.optimizer;
  cfg.max_grad_norm = settings.max_grad_norm;
  cfg.eval_interval = settings.eval_interval;
  cfg.eval_episodes = settings.curve_episodes;
  cfg.eval_adversarial = settings.curve_adversarial;
  cfg.adversary = adversary;
  cfg.on_update = on_update;
  run.train = train_mbp(run.policy, prepared.env, cfg);
  run.policy = run.train.policy;
  run.curve = run.train.curve;
  return run;
}

EvalOptions eval_options(std::uint64_t seed, int episodes, const AdversaryConfig& adversary) {
  EvalOptions opts;
  opts.episodes = episodes;
  opts.seed = derive_seed(seed, 0xE4A1);
  opts.adversary = adversary;
  return opts;
}

CompareResult run_compare(const ExperimentSpec& spec, const PreparedEnv& prepared) {
  spec.validate();
  CompareResult out;
  for (Method m : spec.methods)
    for (std::uint64_t seed : spec.seeds) out.runs.push_back(run_method(prepared, m, seed, spec.train, spec.adversary));
  for (Method m : spec.methods)
    for (EvalMode mode : spec.modes) {
      if (mode == EvalMode::Adversarial && !prepared.env.is_nldi()) continue;
      CompareRow row;
      row.method = m;
      row.mode = mode;
      double total = 0.0;
      for (const MethodRun& run : out.runs) {
        if (run.method != m) continue;
        const EvalResult r = evaluate(run.policy, prepared.env, mode, eval_options(run.seed, spec.eval_episodes, spec.adversary));
        row.seed_costs.push_back(r.mean_cost);
        row.seed_instabilities.push_back(r.instabilities);
        total += std::accumulate(r.costs.begin(), r.costs.end(), 0.0);
        row.instability_count += r.instabilities;
        row.episodes += r.episodes;
      }
      row.mean_cost = total / row.episodes;
      out.rows.push_back(row);
    }
  return out;
}

std::string compare_csv(const std::vector<CompareRow>& rows) {
  std::string s = "method,mode,mean_cost,instability_count,episodes\n";
  for (const CompareRow& r : rows)
    s += std::string(to_string(r.method)) + "," + to_string(r.mode) + "," + format_double(r.mean_cost) + "," +
         std::to_string(r.instability_count) + "," + std::to_string(r.episodes) + "\n";
  return s;
}

std::string compare_seeds_csv(const std::vector<CompareRow>& rows, const std::vector<std::uint64_t>& seeds) {
  std::string s = "method,mode,seed,mean_cost,instability_count\n";
  for (const CompareRow& r : rows)
    for (std::size_t i = 0; i < r.seed_costs.size() && i < seeds.size(); ++i)
      s += std::string(to_string(r.method)) + "," + to_string(r.mode) + "," + std::to_string(seeds[i]) + "," +
           format_double(r.seed_costs[i]) + "," + std::to_string(r.seed_instabilities[i]) + "\n";
  return s;
}

std::string learning_curve_svg(const std::string& title, const std::vector<MethodRun>& runs) {
  std::vector<SvgSeries> series;
  for (const MethodRun& run : runs) {
    if (run.curve.empty()) continue;
    const std::string name = std::string(to_string(run.method)) + " s" + std::to_string(run.seed);
    SvgSeries orig{name + " orig", {}, {}, {}}, adv{name + " adv", {}, {}, {}};
    for (const CurvePoint& p : run.curve) {
      orig.x.push_back(p.epoch);
      orig.y.push_back(p.mean_cost_original);
      adv.x.push_back(p.epoch);
      adv.y.push_back(p.mean_cost_adversarial);
      if (p.instability_count > 0) orig.markers.push_back(p.epoch);
    }
    series.push_back(orig);
    if (std::any_of(adv.y.begin(), adv.y.end(), [](double v) { return std::isfinite(v); })) series.push_back(adv);
  }
  return svg_line_chart(title, "update", "mean episode cost", series);
}

}  // namespace robctl
