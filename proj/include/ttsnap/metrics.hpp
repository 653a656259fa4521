#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace ttsnap {

/// Kendall's tau-a: (C - D) / C(n, 2). Tied pairs count as neither
/// concordant nor discordant and stay in the denominator.
double kendall_tau(std::span<const double> a, std::span<const double> b);

/// C - D over all pairs, via the active SIMD kernel.
std::int64_t concordance_balance(std::span<const double> a, std::span<const double> b);

/// Seed-averaged chosen reward as a function of compute budget.
struct BudgetCurve {
  std::vector<double> budgets;
  std::vector<double> rewards;

  /// Strictly increasing budgets, matching lengths, at least 3 points and
  /// an even number of panels.
  void validate() const;
};

/// Uniform grid from lo to hi (inclusive) with the given spacing.
std::vector<double> uniform_budget_grid(double lo, double hi, double step);

/// reward(B) - reward(B_min). B must lie on the curve's grid.
double gain(const BudgetCurve& curve, double budget);

/// Composite Simpson's rule on a uniform grid with an even panel count.
double simpson(std::span<const double> values, double spacing);

/// Integral of gain over [B_min, B_max] by composite Simpson.
double integrated_gain(const BudgetCurve& curve);

/// (h_tar - h_ref) / h_ref; the curves must share a grid and h_ref != 0.
double relative_performance(const BudgetCurve& target, const BudgetCurve& reference);

struct SummaryStats {
  double mean = 0.0;
  double stddev = 0.0;  // sample standard deviation (n - 1)
};

SummaryStats summarize(std::span<const double> values);

}  // namespace ttsnap
