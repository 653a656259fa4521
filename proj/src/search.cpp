#include "ttsnap/search.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "ttsnap/error.hpp"
#include "ttsnap/rng.hpp"

namespace ttsnap {
namespace {

// Guards floor/ceil against products like 0.7 * 10 landing a hair off an integer.
constexpr double kRoundingSlack = 1e-9;

int retained_count(double retention, int current) {
  const int k = static_cast<int>(std::ceil(retention * current - kRoundingSlack));
  return std::clamp(k, 1, current);
}

// Stage boundaries tau_0 = 0, tau_1..tau_{m-1}, tau_m = M.
std::vector<int> stage_bounds(const PruneSchedule& schedule, int steps) {
  std::vector<int> bounds{0};
  bounds.insert(bounds.end(), schedule.timesteps.begin(), schedule.timesteps.end());
  bounds.push_back(steps);
  return bounds;
}

double stage_cost(const std::vector<int>& bounds, std::size_t stage, const SearchContext& ctx) {
  const bool last = stage + 2 == bounds.size();
  const double verify = (last && !ctx.cost.count_final_verification) ? 0.0 : ctx.cost.verify;
  return (bounds[stage + 1] - bounds[stage]) * ctx.cost.denoise + verify;
}

int argmax_final(const RewardTable& table, const std::vector<int>& candidates) {
  int best = candidates.front();
  for (int i : candidates) {
    const double r = table.final_reward(i);
    const double b = table.final_reward(best);
    if (r > b || (r == b && i < best)) best = i;
  }
  return best;
}

std::vector<double> average_ranks(const std::vector<double>& v) {
  std::vector<int> order(v.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return v[a] < v[b]; });
  std::vector<double> ranks(v.size());
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
    const double rank = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = rank;
    i = j + 1;
  }
  return ranks;
}

}  // namespace

void PruneSchedule::validate(int steps) const {
  require(timesteps.size() == retentions.size(),
          "prune schedule: timesteps and retentions differ in length");
  for (std::size_t i = 0; i < timesteps.size(); ++i) {
    require(timesteps[i] >= 1 && timesteps[i] <= steps - 1,
            "prune schedule: timestep outside [1, M-1]");
    if (i > 0) require(timesteps[i] > timesteps[i - 1], "prune schedule: timesteps must increase");
    require(retentions[i] > 0.0 && retentions[i] < 1.0,
            "prune schedule: retention must lie in (0, 1)");
  }
}

void CostModel::validate() const {
  require(denoise > 0.0, "cost model: denoise cost must be positive");
  require(verify >= 0.0, "cost model: verify cost must be nonnegative");
}

double cost_per_candidate(const PruneSchedule& schedule, const SearchContext& ctx) {
  schedule.validate(ctx.steps);
  ctx.cost.validate();
  const auto bounds = stage_bounds(schedule, ctx.steps);
  double total = 0.0;
  double kept = 1.0;
  for (std::size_t i = 0; i + 1 < bounds.size(); ++i) {
    total += kept * stage_cost(bounds, i, ctx);
    if (i < schedule.retentions.size()) kept *= schedule.retentions[i];
  }
  return total;
}

long candidates_for_budget(double budget, const PruneSchedule& schedule, const SearchContext& ctx) {
  require(budget > 0.0, "budget must be positive");
  const double n = budget / cost_per_candidate(schedule, ctx);
  return std::max(0L, static_cast<long>(std::floor(n * (1.0 + kRoundingSlack * 1e-3))));
}

double budget_of(long candidates, const PruneSchedule& schedule, const SearchContext& ctx) {
  require(candidates >= 0, "candidate count must be nonnegative");
  return static_cast<double>(candidates) * cost_per_candidate(schedule, ctx);
}

double realized_budget(const std::vector<int>& survivors, const PruneSchedule& schedule,
                       const SearchContext& ctx) {
  const auto bounds = stage_bounds(schedule, ctx.steps);
  require(survivors.size() + 1 == bounds.size(), "survivor counts do not match the schedule");
  double total = 0.0;
  for (std::size_t i = 0; i < survivors.size(); ++i) total += survivors[i] * stage_cost(bounds, i, ctx);
  return total;
}

std::vector<int> draw_subset(int pool_size, int count, std::uint64_t seed) {
  require(count >= 1, "need at least one candidate");
  if (count > pool_size)
    fail(ErrorKind::InvalidArgument, "requested " + std::to_string(count) +
                                         " candidates from a pool of " + std::to_string(pool_size));
  std::vector<int> idx(pool_size);
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng(seed);
  for (int i = 0; i < count; ++i) {
    std::uniform_int_distribution<int> pick(i, pool_size - 1);
    std::swap(idx[i], idx[pick(rng)]);
  }
  idx.resize(count);
  return idx;
}

SearchResult best_of_n(const RewardTable& table, int count, std::uint64_t seed,
                       const SearchContext& ctx) {
  const auto subset = draw_subset(table.rows, count, seed);
  SearchResult r;
  r.rng_seed = seed;
  r.chosen_index = argmax_final(table, subset);
  r.chosen_reward = table.final_reward(r.chosen_index);
  r.survivors_per_stage = {count};
  r.spent_budget = budget_of(count, PruneSchedule{}, ctx);
  return r;
}

SearchResult ttsnap_search(const RewardTable& table, const PruneSchedule& schedule, int count,
                           std::uint64_t seed, const SearchContext& ctx) {
  schedule.validate(ctx.steps);
  for (int tau : schedule.timesteps)
    if (tau - 1 >= table.stage_columns)
      fail(ErrorKind::MissingCheckpoint,
           "no stage scores for verification timestep " + std::to_string(tau));

  std::vector<int> alive = draw_subset(table.rows, count, seed);
  SearchResult r;
  r.rng_seed = seed;
  r.survivors_per_stage.push_back(count);
  for (std::size_t s = 0; s < schedule.timesteps.size(); ++s) {
    const int column = schedule.timesteps[s] - 1;
    const int keep = retained_count(schedule.retentions[s], static_cast<int>(alive.size()));
    std::partial_sort(alive.begin(), alive.begin() + keep, alive.end(), [&](int a, int b) {
      const double sa = table.stage(a, column);
      const double sb = table.stage(b, column);
      return sa > sb || (sa == sb && a < b);
    });
    alive.resize(keep);
    r.survivors_per_stage.push_back(keep);
  }
  r.chosen_index = argmax_final(table, alive);
  r.chosen_reward = table.final_reward(r.chosen_index);
  r.spent_budget = realized_budget(r.survivors_per_stage, schedule, ctx);
  return r;
}

RewardTable rank_sum_combine(const std::vector<RewardTable>& tables) {
  require(!tables.empty(), "rank_sum_combine needs at least one table");
  const RewardTable& first = tables.front();
  for (const auto& t : tables)
    if (t.rows != first.rows || t.stage_columns != first.stage_columns)
      fail(ErrorKind::ShapeMismatch, "rank_sum_combine: tables differ in shape");
  RewardTable out(first.rows, first.stage_columns);
  for (const auto& t : tables) {
    for (int j = 0; j < t.columns(); ++j) {
      const auto ranks = average_ranks(t.column(j));
      for (int i = 0; i < t.rows; ++i) out.at(i, j) += ranks[i];
    }
  }
  return out;
}

double expected_best_of_n(std::vector<double> values, int count) {
  const int n = static_cast<int>(values.size());
  require(count >= 1 && count <= n, "expected_best_of_n: need 1 <= N <= pool size");
  std::sort(values.begin(), values.end());
  // P(max is the k-th smallest, 1-based) = C(k-1, N-1) / C(n, N).
  // weight(k) for k = N is 1 / C(n, N); weight(k+1) = weight(k) * k / (k - N + 1).
  double weight = 1.0;
  for (int i = 0; i < count; ++i)
    weight *= static_cast<double>(count - i) / static_cast<double>(n - i);
  double expectation = 0.0;
  for (int k = count; k <= n; ++k) {
    expectation += weight * values[k - 1];
    weight *= static_cast<double>(k) / static_cast<double>(k - count + 1);
  }
  return expectation;
}

std::vector<double> mean_chosen_rewards(const std::vector<SearchInstance>& instances,
                                        const PruneSchedule& schedule, int count, int repeats,
                                        std::uint64_t seed, const SearchContext& ctx) {
  require(!instances.empty(), "no search instances");
  require(repeats >= 1, "repeats must be >= 1");
  const std::size_t rewards = instances.front().eval_rewards.size();
  std::vector<double> sums(rewards, 0.0);
  for (std::size_t inst = 0; inst < instances.size(); ++inst) {
    const auto& si = instances[inst];
    require(si.eval_rewards.size() == rewards, "instances disagree on evaluation rewards");
    for (int rep = 0; rep < repeats; ++rep) {
      const std::uint64_t s = derive_seed(
          seed, {seed_tag::kSearch, inst, static_cast<std::uint64_t>(count),
                 static_cast<std::uint64_t>(rep)});
      const SearchResult res = schedule.empty() ? best_of_n(si.table, count, s, ctx)
                                                : ttsnap_search(si.table, schedule, count, s, ctx);
      for (std::size_t e = 0; e < rewards; ++e) sums[e] += si.eval_rewards[e][res.chosen_index];
    }
  }
  const double total = static_cast<double>(instances.size()) * repeats;
  for (double& s : sums) s /= total;
  return sums;
}

CurveSet budget_curves(const std::vector<SearchInstance>& instances,
                       const PruneSchedule& schedule, const std::vector<double>& budgets,
                       int repeats, std::uint64_t seed, const SearchContext& ctx) {
  require(!instances.empty(), "no search instances");
  int pool = instances.front().table.rows;
  for (const auto& si : instances) pool = std::min(pool, si.table.rows);

  CurveSet out;
  out.budgets = budgets;
  const std::size_t rewards = instances.front().eval_rewards.size();
  out.curves.assign(rewards, BudgetCurve{budgets, std::vector<double>(budgets.size())});
  for (std::size_t b = 0; b < budgets.size(); ++b) {
    const long n = candidates_for_budget(budgets[b], schedule, ctx);
    if (n == 0)
      fail(ErrorKind::InvalidArgument,
           "budget " + std::to_string(budgets[b]) +
               " buys no candidate; raise the minimum budget to at least " +
               std::to_string(cost_per_candidate(schedule, ctx)));
    if (n > pool)
      fail(ErrorKind::InvalidArgument, "budget " + std::to_string(budgets[b]) + " needs " +
                                           std::to_string(n) + " candidates but pools hold " +
                                           std::to_string(pool));
    out.candidates.push_back(n);
    const auto means =
        mean_chosen_rewards(instances, schedule, static_cast<int>(n), repeats, seed, ctx);
    for (std::size_t e = 0; e < rewards; ++e) out.curves[e].rewards[b] = means[e];
  }
  return out;
}

std::vector<SweepEntry> sweep_schedules(const std::vector<SearchInstance>& instances,
                                        const std::vector<PruneSchedule>& configs,
                                        const std::vector<double>& budgets, int repeats,
                                        std::uint64_t seed, const SearchContext& ctx,
                                        int eval_reward) {
  require(!configs.empty(), "sweep grid is empty");
  int pool = instances.front().table.rows;
  for (const auto& si : instances) pool = std::min(pool, si.table.rows);

  const CurveSet reference = budget_curves(instances, PruneSchedule{}, budgets, repeats, seed, ctx);
  std::vector<SweepEntry> entries;
  for (std::size_t c = 0; c < configs.size(); ++c) {
    SweepEntry e;
    e.config_id = static_cast<int>(c);
    e.schedule = configs[c];
    for (double b : budgets) {
      const long n = candidates_for_budget(b, configs[c], ctx);
      e.candidates.push_back(n);
      if (n == 0 || n > pool) e.feasible = false;
    }
    if (e.feasible) {
      const CurveSet cs = budget_curves(instances, configs[c], budgets, repeats, seed, ctx);
      e.mean_rewards = cs.curves.at(eval_reward).rewards;
      e.omega = relative_performance(cs.curves.at(eval_reward), reference.curves.at(eval_reward));
    }
    entries.push_back(std::move(e));
  }
  std::stable_sort(entries.begin(), entries.end(), [](const SweepEntry& a, const SweepEntry& b) {
    if (a.feasible != b.feasible) return a.feasible;
    if (!a.feasible) return a.config_id < b.config_id;
    return a.omega > b.omega || (a.omega == b.omega && a.config_id < b.config_id);
  });
  return entries;
}

}  // namespace ttsnap
