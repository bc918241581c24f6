#pragma once

#include <filesystem>
#include <optional>
#include <vector>

#include "robctl/io.hpp"

namespace robctl {

struct TrainSettings {
  int updates = 1000;
  int rollouts = 20;
  double lr_robust = 1e-4;
  double lr_nonrobust = 1e-3;
  Optimizer optimizer = Optimizer::GradientDescent;
  /// 0 leaves gradients unclipped.
  double max_grad_norm = 0.0;
  int eval_interval = 10;
  int curve_episodes = 10;
  bool curve_adversarial = true;
};

/// What to run: one environment, a set of methods and modes, explicit seeds.
struct ExperimentSpec {
  EnvConfig env;
  /// Directory that relative paths inside env resolve against.
  std::filesystem::path env_base;
  std::vector<Method> methods;
  std::vector<EvalMode> modes = {EvalMode::Original, EvalMode::Adversarial};
  std::vector<std::uint64_t> seeds = {0};
  std::optional<double> alpha;
  TrainSettings train;
  int eval_episodes = 50;
  AdversaryConfig adversary;

  void validate() const;
};

Json experiment_to_json(const ExperimentSpec& spec);
/// "env" is either an inline environment config or a path relative to base_dir.
ExperimentSpec experiment_from_json(const Json& j, const std::filesystem::path& base_dir);
/// Either schema: an environment config becomes a spec with default settings.
ExperimentSpec load_experiment(const std::filesystem::path& path);

/// The environment with its robust and non-robust certificates.
struct PreparedEnv {
  EnvInstance env;
  RobustCertificate robust;
  RobustCertificate lqr;
};

PreparedEnv prepare_env(const EnvInstance& env, double alpha);

struct MethodRun {
  Method method = Method::Lqr;
  std::uint64_t seed = 0;
  RobustPolicy policy;
  /// Empty for the non-learned methods.
  std::vector<CurvePoint> curve;
  TrainResult train;
};

/// Builds (and for mbp / robust-mbp trains) the policy of `method` for one seed.
/// `on_update` is forwarded to the trainer.
MethodRun run_method(const PreparedEnv& prepared, Method method, std::uint64_t seed, const TrainSettings& settings,
                     const AdversaryConfig& adversary,
                     const std::function<void(int, const RobustPolicy&)>& on_update = {});

/// Evaluation options for a seed; the same seed gives the same initial states
/// and adversary seeds for every method.
EvalOptions eval_options(std::uint64_t seed, int episodes, const AdversaryConfig& adversary);

struct CompareRow {
  Method method = Method::Lqr;
  EvalMode mode = EvalMode::Original;
  double mean_cost = 0.0;
  int instability_count = 0;
  int episodes = 0;
  /// Per seed, in spec order.
  std::vector<double> seed_costs;
  std::vector<int> seed_instabilities;
};

struct CompareResult {
  std::vector<CompareRow> rows;
  std::vector<MethodRun> runs;
};

/// Runs every (method, seed), then evaluates each (method, mode) over all seeds.
CompareResult run_compare(const ExperimentSpec& spec, const PreparedEnv& prepared);

/// method,mode,mean_cost,instability_count,episodes
std::string compare_csv(const std::vector<CompareRow>& rows);
/// method,mode,seed,mean_cost,instability_count
std::string compare_seeds_csv(const std::vector<CompareRow>& rows, const std::vector<std::uint64_t>& seeds);

/// Learning curves of the learned runs; epochs with instabilities are marked.
std::string learning_curve_svg(const std::string& title, const std::vector<MethodRun>& runs);

}  // namespace robctl
