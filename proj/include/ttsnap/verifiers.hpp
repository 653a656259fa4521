#pragma once

// Clean-domain rewards, the trainable noise-aware verifier, and the
// self-distillation training procedures (curriculum, separate, uniform
// time-conditioned; MSE or Bradley-Terry losses).

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "ttsnap/dynamics.hpp"
#include "ttsnap/mlp.hpp"

namespace ttsnap {

struct TrajectoryPool;

enum class RewardKind { ModePreference, HighFrequencyComposite };

/// smooth_weight * -|x0 - mean[target_mode]|^2 + rough_weight * prod_i sin(frequency * x0_i).
/// ModePreference carries no rough term.
struct RewardSpec {
  std::string name = "reward";
  RewardKind kind = RewardKind::HighFrequencyComposite;
  int target_mode = 0;
  double smooth_weight = 1.0;
  double rough_weight = 0.0;
  double frequency = 1.0;

  void validate(int components) const;
  bool operator==(const RewardSpec&) const = default;
};

double reward_clean(const RewardSpec& spec, const MixtureModel& mixture, std::span<const double> x0);

struct Normalizer {
  std::vector<double> mean;
  std::vector<double> scale;
  bool operator==(const Normalizer&) const = default;
};

struct NoiseAwareVerifier {
  std::vector<int> layer_sizes;
  std::vector<double> weights;  // initialization, or the single time-conditioned model
  std::map<int, std::vector<double>> per_step_checkpoints;
  std::map<int, Normalizer> normalizers;  // keyed by step; total_steps is the clean domain
  bool time_conditioned = false;
  int total_steps = 0;

  /// Zero-initialized verifier for `dim`-dimensional estimates.
  static NoiseAwareVerifier create(int dim, const std::vector<int>& hidden, bool time_conditioned,
                                   int total_steps);

  int dim() const { return layer_sizes.front() - (time_conditioned ? 1 : 0); }
  Mlp network() const { return Mlp(layer_sizes); }

  /// Standardized estimate, plus step / (M - 1) when time-conditioned.
  std::vector<double> features(std::span<const double> estimate, int step) const;

  /// Parameters serving `step`; throws MissingCheckpoint when absent.
  const std::vector<double>& params_for(int step) const;

  bool operator==(const NoiseAwareVerifier&) const = default;
};

double reward_on_estimate(const NoiseAwareVerifier& verifier, std::span<const double> estimate,
                          int step);

struct DistillRecord {
  Point estimate;
  int step = 0;
  double target = 0.0;
  int trajectory_id = 0;
  int instance_id = 0;
};

struct DistillDataset {
  int dim = 0;
  int total_steps = 0;
  std::vector<DistillRecord> records;

  std::vector<const DistillRecord*> slice(int step) const;
  std::uint64_t hash() const;
  void append(const DistillDataset& other);
};

/// One record per (trajectory, step) for steps start_step..0, each targeting
/// the clean reward of that trajectory's final sample. Trajectory ids are
/// offset by trajectory_offset so several pools can be concatenated.
DistillDataset build_distill_dataset(const TrajectoryPool& pool, const RewardSpec& spec,
                                     int start_step, int instance_id, int trajectory_offset = 0);

/// Per-step mean / standard deviation of the estimates in the dataset.
std::map<int, Normalizer> fit_normalizers(const DistillDataset& dataset);
Normalizer fit_normalizer(std::span<const Point> points);

// ---------------------------------------------------------------------------
// Training

enum class LossKind { Mse, BradleyTerry, BradleyTerryLog };

struct TrainOptions {
  double learning_rate = 1e-2;
  double final_lr_fraction = 0.5;  // linear decay endpoint, relative to learning_rate
  double momentum = 0.9;
  int batch_size = 32;
  int epochs = 1;
  std::uint64_t seed = 0;
  LossKind loss = LossKind::Mse;
  double temperature = 1.0;  // Bradley-Terry lambda
};

struct TrainLog {
  std::vector<double> batch_losses;
  bool operator==(const TrainLog&) const = default;
};

/// A network input with its regression target. Examples sharing a group
/// (instance) can be paired for Bradley-Terry.
struct Example {
  std::vector<double> input;
  double target = 0.0;
  int group = 0;
};

struct PreferencePair {
  std::size_t better = 0;  // index of r+
  std::size_t worse = 0;   // index of r-
};

/// Mean squared error over the examples; adds d(loss)/d(params) into grad when non-empty.
double mse_loss(const Mlp& net, std::span<const double> params, std::span<const Example> examples,
                std::span<double> grad);

/// Mean Bradley-Terry loss over pairs. The plain variant is
/// -exp(l r+) / (exp(l r+) + exp(l r-)); the log variant takes -log of the ratio.
double bradley_terry_loss(const Mlp& net, std::span<const double> params,
                          std::span<const Example> examples, std::span<const PreferencePair> pairs,
                          double temperature, bool log_variant, std::span<double> grad);

/// Pairs within each group from a seeded shuffle; equal targets are skipped.
std::vector<PreferencePair> sample_pairs(std::span<const Example> examples, Rng& rng);

/// SGD with momentum over seeded-shuffled mini-batches; the learning rate
/// decays linearly over all batches of the call.
TrainLog train_mse(const Mlp& net, std::vector<double>& params, std::span<const Example> examples,
                   const TrainOptions& options);

TrainLog train_bradley_terry(const Mlp& net, std::vector<double>& params,
                             std::span<const Example> examples, const TrainOptions& options);

/// Examples for one step slice, encoded with the verifier's features.
std::vector<Example> step_examples(const NoiseAwareVerifier& verifier,
                                   const DistillDataset& dataset, int step);

struct StrategyResult {
  NoiseAwareVerifier verifier;
  std::map<int, TrainLog> logs;  // keyed by step (uniform strategy uses key -1)
};

/// Steps start_step down to 0, one epoch each, each initialized from the
/// previous step's checkpoint (the first from init.weights).
StrategyResult train_curriculum(const NoiseAwareVerifier& init, const DistillDataset& dataset,
                                int start_step, const TrainOptions& options);

/// Same epoch budget as the curriculum, but every step starts from init.weights.
StrategyResult train_separate(const NoiseAwareVerifier& init, const DistillDataset& dataset,
                              int start_step, const TrainOptions& options);

/// Single time-conditioned model. total_epochs counts per-step epochs, so
/// start_step + 1 matches the curriculum's budget; mini-batches are drawn
/// uniformly across steps.
StrategyResult train_uniform_timecond(const NoiseAwareVerifier& init, const DistillDataset& dataset,
                                      int start_step, int total_epochs,
                                      const TrainOptions& options);

/// Regression of the network onto clean rewards of clean samples; the
/// stand-in for a pretrained clean-domain reward model.
TrainLog pretrain_clean(NoiseAwareVerifier& verifier, std::span<const Point> samples,
                        std::span<const double> rewards, const TrainOptions& options);

// ---------------------------------------------------------------------------
// Checkpoint files (JSON)

struct CheckpointMeta {
  std::string strategy;
  std::string loss;
  std::uint64_t seed = 0;
  double learning_rate = 0.0;
  int epochs = 0;
  std::uint64_t dataset_hash = 0;
  std::uint64_t config_hash = 0;
  std::uint64_t master_seed = 0;
};

void save_verifier(const NoiseAwareVerifier& verifier, const CheckpointMeta& meta,
                   const std::string& path);
NoiseAwareVerifier load_verifier(const std::string& path, CheckpointMeta* meta = nullptr);

}  // namespace ttsnap
