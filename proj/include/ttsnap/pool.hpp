#pragma once

// Shared candidate pools: generation (with optional trajectory repulsion for
// diversity), binary persistence, and reward-table precomputation.

#include <cstdint>
#include <string>
#include <vector>

#include "ttsnap/dynamics.hpp"
#include "ttsnap/reward_table.hpp"
#include "ttsnap/verifiers.hpp"

namespace ttsnap {

/// The analog of a prompt: a data distribution plus the rewards judging it.
struct ProblemInstance {
  std::string id;
  MixtureModel mixture;
  RewardSpec reward;
  std::vector<RewardSpec> extra_rewards;

  /// reward followed by extra_rewards.
  std::vector<RewardSpec> all_rewards() const;
  void validate() const;
  bool operator==(const ProblemInstance&) const = default;
};

/// After every denoising step, each candidate whose centered Tweedie
/// estimate has cosine similarity above `threshold` with a lower-seeded
/// candidate's is pushed away from its best match: its latent moves by
/// alpha * (sigma_j - sigma_{j+1}) / sigma_max times their latent difference.
/// The push acts mostly early, where coarse structure is decided. Exact
/// duplicates have no difference to push along and stay together.
struct DiversityConfig {
  bool enabled = false;
  double alpha = 1.2;
  double threshold = 0.65;

  void validate() const;
  bool operator==(const DiversityConfig&) const = default;
};

struct TrajectoryPool {
  ProblemInstance instance;
  std::uint64_t schedule_hash = 0;
  DiversityConfig diversity;
  std::vector<Trajectory> trajectories;

  int size() const { return static_cast<int>(trajectories.size()); }
  int steps() const { return trajectories.empty() ? 0 : trajectories.front().steps; }
  int dim() const { return trajectories.empty() ? 0 : trajectories.front().dim; }
  bool operator==(const TrajectoryPool&) const = default;
};

/// n trajectories with seeds base_seed .. base_seed + n - 1.
TrajectoryPool generate_pool(const ProblemInstance& instance, const NoiseSchedule& schedule, int n,
                             std::uint64_t base_seed, const DiversityConfig& diversity);

/// As above, but with explicit seeds and, when non-empty, explicit initial
/// latents replacing the seeded draws (the seeded rngs still drive SDE noise).
TrajectoryPool generate_pool(const ProblemInstance& instance, const NoiseSchedule& schedule,
                             const std::vector<std::uint64_t>& seeds,
                             const std::vector<Point>& initial_latents,
                             const DiversityConfig& diversity);

/// Extra provenance written into the pool header.
struct PoolProvenance {
  std::uint64_t config_hash = 0;
  std::uint64_t master_seed = 0;
};

inline constexpr std::uint32_t kPoolFormatVersion = 1;

/// Layout: 8-byte magic "TTSPOOL\0", u32 version, u64 header length, JSON
/// header, then n fixed-size little-endian records (seed, latents, estimates).
void save_pool(const TrajectoryPool& pool, const std::string& path,
               const PoolProvenance& provenance = {});

TrajectoryPool load_pool(const std::string& path, PoolProvenance* provenance = nullptr);

/// Loads and checks the pool's schedule digest against `schedule`.
TrajectoryPool load_pool(const std::string& path, const NoiseSchedule& schedule,
                         PoolProvenance* provenance = nullptr);

/// Bytes of one trajectory record for the given M and d.
std::size_t pool_record_bytes(int steps, int dim);

/// Clean reward applied directly to every estimate (steps 0..M-1) and to the final sample.
RewardTable reward_table(const TrajectoryPool& pool, const RewardSpec& spec);

/// Verifier predictions for steps 0..stage_columns-1; final column holds the
/// clean reward under `final_spec`.
RewardTable reward_table(const TrajectoryPool& pool, const NoiseAwareVerifier& verifier,
                         int stage_columns, const RewardSpec& final_spec);

/// Clean rewards of the pool's final samples.
std::vector<double> final_rewards(const TrajectoryPool& pool, const RewardSpec& spec);

}  // namespace ttsnap
