#pragma once

// Experiment configuration and the pipeline commands behind the CLI:
// gen-pool, train-narf, search, evaluate, sweep.
//
// Output layout under out_dir:
//   pools/{train,eval}/<instance>.pool   candidate pools
//   pools/{train,eval}/stats.csv         reward spread with and without diversity
//   narf/<reward>/<strategy>.json        verifier checkpoints
//   narf/kendall.csv                     per-step rank consistency, per strategy
//   narf/data_scaling.csv                rank consistency vs training-set size
//   curves/<algorithm>_<rewards>.csv     reward vs budget
//   sweep/<algorithm>_ranked.csv         all schedules, sorted by omega
//   sweep/<algorithm>_best.csv           best schedule per pruning-stage count
//   summary.json, report.txt             omega tables

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "ttsnap/metrics.hpp"
#include "ttsnap/pool.hpp"
#include "ttsnap/search.hpp"
#include "ttsnap/verifiers.hpp"

namespace ttsnap {

/// Random mixtures with K means on a ring, jittered per instance.
struct InstanceFamily {
  int dim = 2;
  int components = 8;
  double ring_radius = 4.0;
  double rotation_jitter = 0.2;  // radians, uniform
  double mean_jitter = 0.25;
  double comp_std = 0.4;
  double comp_std_jitter = 0.2;     // relative, uniform
  double weight_concentration = 4.0;  // gamma shape for the mixture weights
};

struct ScheduleConfig {
  int steps = 20;
  double sigma_max = 80.0;
  double sigma_min = 0.002;
  double churn = 0.0;

  NoiseSchedule build() const { return NoiseSchedule::geometric(steps, sigma_max, sigma_min, churn); }
};

struct NarfConfig {
  std::vector<int> hidden{64, 64};
  double learning_rate = 0.005;
  int batch_size = 32;
  double momentum = 0.9;
  int start_step = 15;
  std::vector<std::string> strategies{"curriculum", "separate", "uniform"};
  std::string loss = "mse";  // mse | bt | bt_log
  double temperature = 1.0;
  // The clean-domain model every strategy starts from is fit on fresh
  // mixture draws, not on the distillation pools.
  int pretrain_samples_per_instance = 200;
  int pretrain_epochs = 300;
  double pretrain_learning_rate = 0.002;
  std::vector<int> scale_factors{1, 2, 4, 8};
  bool data_scaling = true;
};

struct SweepGroup {
  std::vector<std::vector<int>> timesteps;
  std::vector<std::vector<double>> retentions;
};

struct ExperimentConfig {
  std::uint64_t seed = 20251019;
  std::string out_dir = "ttsnap_out";
  int repeats = 100;

  InstanceFamily family;
  int train_instances = 20;
  int eval_instances = 20;
  std::vector<RewardSpec> rewards;  // first entry is the primary reward

  ScheduleConfig schedule;
  DiversityConfig diversity{true, 1.2, 0.65};
  int train_samples_per_instance = 16;  // at scale factor 1
  int eval_pool_size = 200;

  NarfConfig narf;
  PruneSchedule ttsnap_schedule{{6}, {0.3}};
  PruneSchedule ttsp_schedule{{6}, {0.3}};
  CostModel cost;
  std::vector<SweepGroup> sweep;

  double budget_min = 200.0;
  double budget_max = 4000.0;
  double budget_step = 190.0;

  static ExperimentConfig defaults();
  std::vector<double> budget_grid() const;
  SearchContext search_context() const { return {schedule.steps, cost}; }
  int train_pool_size() const;
  void validate() const;
};

ExperimentConfig config_from_json_text(const std::string& text);
ExperimentConfig load_config(const std::string& path);
std::string config_to_json_text(const ExperimentConfig& config);

/// Digest of the canonical JSON form, excluding out_dir.
std::uint64_t config_hash(const ExperimentConfig& config);

/// Applies a top-level `key=value` override (value parsed as JSON when possible).
void apply_override(std::string& config_json, const std::string& assignment);

enum class PoolRole { Train, Eval };

std::vector<ProblemInstance> make_instances(const ExperimentConfig& config, PoolRole role);

struct PoolStats {
  std::string instance_id;
  int size = 0;
  double reward_std = 0.0;
  double reward_std_without_diversity = 0.0;
};

struct GenPoolResult {
  std::vector<std::string> files;
  std::vector<PoolStats> stats;
  PoolStats pooled;  // all instances' final rewards together
};

GenPoolResult cmd_gen_pool(const ExperimentConfig& config, PoolRole role);

struct KendallRow {
  int step = 0;
  std::map<std::string, double> by_strategy;  // includes "baseline"
};

struct DataScalingRow {
  int factor = 0;
  int trajectories = 0;
  double mean_kendall = 0.0;
  double noisy_third_kendall = 0.0;
};

struct NarfReport {
  std::vector<KendallRow> kendall;
  std::vector<DataScalingRow> data_scaling;
  std::map<std::string, std::map<int, TrainLog>> logs;  // primary reward, by strategy
  std::vector<std::string> checkpoint_files;

  /// Mean over the noisiest third of trained steps.
  double noisy_third_mean(const std::string& strategy) const;
};

NarfReport cmd_train_narf(const ExperimentConfig& config);

/// Held-out rank consistency: for each step, Kendall tau between the
/// scores of estimates and the clean rewards of finals, averaged over pools.
std::vector<double> kendall_by_step(const std::vector<TrajectoryPool>& pools,
                                    const NoiseAwareVerifier* verifier, const RewardSpec& spec,
                                    int last_step);

/// The noisiest third of steps 0..start_step: steps 0 .. (start_step + 1) / 3 - 1.
int noisy_third_count(int start_step);

enum class Algorithm { BestOfN, PruneWithoutNarf, Ttsnap };
enum class RewardSet { Primary, All };

std::string to_string(Algorithm a);
std::string to_string(RewardSet r);
Algorithm algorithm_from_string(const std::string& s);
RewardSet reward_set_from_string(const std::string& s);

struct SearchOutput {
  CurveSet curves;
  std::vector<std::string> eval_reward_names;
  std::string file;
};

/// Search instances for the eval pools under the given algorithm.
std::vector<SearchInstance> search_instances(const ExperimentConfig& config, Algorithm algorithm,
                                             RewardSet rewards);

PruneSchedule schedule_for(const ExperimentConfig& config, Algorithm algorithm);

SearchOutput cmd_search(const ExperimentConfig& config, Algorithm algorithm, RewardSet rewards);

struct OmegaEntry {
  std::string reward_set;
  std::string eval_reward;
  std::map<std::string, double> integrated_gain;  // by algorithm
  std::map<std::string, double> omega;            // by algorithm, against best-of-N
};

struct EvaluationReport {
  std::vector<OmegaEntry> entries;
  std::uint64_t config_hash = 0;
  std::string summary_file;
  std::string report_file;
};

EvaluationReport cmd_evaluate(const ExperimentConfig& config);

struct SweepReport {
  std::map<std::string, std::vector<SweepEntry>> ranked;  // by algorithm
  std::vector<std::string> files;
};

std::vector<PruneSchedule> expand_sweep(const std::vector<SweepGroup>& groups);

SweepReport cmd_sweep(const ExperimentConfig& config);

/// Reads a curves CSV back into one BudgetCurve per evaluation reward.
std::map<std::string, BudgetCurve> read_curves(const std::string& path);

}  // namespace ttsnap
