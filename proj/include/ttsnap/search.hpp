#pragma once

// Best-of-N and pruned (TTSnap) search over a shared candidate pool, with
// compute-budget accounting.
//
// A PruneSchedule lists verification timesteps tau_1 < ... < tau_{m-1} in
// [1, M-1], counted as completed denoising steps, and the fraction of
// candidates kept at each. The stage score at tau comes from reward-table
// column tau - 1. The final stage (tau_m = M) always uses the table's final
// column.

#include <cstdint>
#include <vector>

#include "ttsnap/metrics.hpp"
#include "ttsnap/reward_table.hpp"

namespace ttsnap {

struct PruneSchedule {
  std::vector<int> timesteps;
  std::vector<double> retentions;

  bool empty() const { return timesteps.empty(); }
  void validate(int steps) const;
  bool operator==(const PruneSchedule&) const = default;
};

struct CostModel {
  double denoise = 9.927;  // one diffusion forward pass, TFLOPs
  double verify = 1.428;   // VAE decode (1.243) + PickScore/HPS (0.185)
  bool count_final_verification = true;

  void validate() const;
};

struct SearchContext {
  int steps = 20;
  CostModel cost;
};

struct SearchResult {
  int chosen_index = -1;
  double chosen_reward = 0.0;
  double spent_budget = 0.0;
  std::vector<int> survivors_per_stage;  // candidates denoised through each stage
  std::uint64_t rng_seed = 0;
};

/// Per-candidate cost of one full pruned run: the denominator of the
/// candidate-count formula.
double cost_per_candidate(const PruneSchedule& schedule, const SearchContext& ctx);

/// floor(B / cost_per_candidate).
long candidates_for_budget(double budget, const PruneSchedule& schedule, const SearchContext& ctx);

/// N * cost_per_candidate.
double budget_of(long candidates, const PruneSchedule& schedule, const SearchContext& ctx);

/// Budget actually spent when survivors[i] candidates go through stage i.
double realized_budget(const std::vector<int>& survivors, const PruneSchedule& schedule,
                       const SearchContext& ctx);

/// N distinct indices from [0, pool_size), uniformly, seeded.
std::vector<int> draw_subset(int pool_size, int count, std::uint64_t seed);

SearchResult best_of_n(const RewardTable& table, int count, std::uint64_t seed,
                       const SearchContext& ctx);

SearchResult ttsnap_search(const RewardTable& table, const PruneSchedule& schedule, int count,
                           std::uint64_t seed, const SearchContext& ctx);

/// Replaces each column of each table by ranks (1 = worst, ties averaged)
/// and sums across tables.
RewardTable rank_sum_combine(const std::vector<RewardTable>& tables);

/// Exact E[max] of `count` values drawn without replacement from `values`.
double expected_best_of_n(std::vector<double> values, int count);

/// One pool as seen by the search harness: the scores the algorithm acts on,
/// plus the final rewards it is judged by (one vector per evaluation reward).
struct SearchInstance {
  RewardTable table;
  std::vector<std::vector<double>> eval_rewards;
};

/// Mean chosen reward (per evaluation reward) over instances and repeats.
/// Seeds depend on (instance, N, repeat) only, so algorithms evaluated at
/// the same N see the same candidate draws.
std::vector<double> mean_chosen_rewards(const std::vector<SearchInstance>& instances,
                                        const PruneSchedule& schedule, int count, int repeats,
                                        std::uint64_t seed, const SearchContext& ctx);

struct CurveSet {
  std::vector<double> budgets;
  std::vector<long> candidates;
  std::vector<BudgetCurve> curves;  // one per evaluation reward
};

CurveSet budget_curves(const std::vector<SearchInstance>& instances,
                       const PruneSchedule& schedule, const std::vector<double>& budgets,
                       int repeats, std::uint64_t seed, const SearchContext& ctx);

struct SweepEntry {
  int config_id = 0;
  PruneSchedule schedule;
  bool feasible = true;
  std::vector<long> candidates;
  std::vector<double> mean_rewards;
  double omega = 0.0;
};

/// Evaluates every schedule against best-of-N on the same instances and
/// returns entries sorted by omega (descending, config_id breaks ties).
/// Schedules needing more candidates than the pool holds are returned last,
/// marked infeasible.
std::vector<SweepEntry> sweep_schedules(const std::vector<SearchInstance>& instances,
                                        const std::vector<PruneSchedule>& configs,
                                        const std::vector<double>& budgets, int repeats,
                                        std::uint64_t seed, const SearchContext& ctx,
                                        int eval_reward = 0);

}  // namespace ttsnap
