#include "ttsnap/metrics.hpp"

#include <cmath>

#include "ttsnap/error.hpp"
#include "ttsnap/kernels.hpp"

namespace ttsnap {
namespace {

bool is_uniform(std::span<const double> grid, double& spacing) {
  spacing = (grid.back() - grid.front()) / static_cast<double>(grid.size() - 1);
  const double tol = 1e-9 * std::abs(grid.back() - grid.front());
  for (std::size_t i = 1; i < grid.size(); ++i)
    if (std::abs(grid[i] - grid[i - 1] - spacing) > tol) return false;
  return true;
}

}  // namespace

std::int64_t concordance_balance(std::span<const double> a, std::span<const double> b) {
  const auto& k = kernels::active();
  std::int64_t total = 0;
  for (std::size_t i = 0; i + 1 < a.size(); ++i)
    total += k.concordance_row(a.data(), b.data(), a[i], b[i], i + 1, a.size());
  return total;
}

double kendall_tau(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) fail(ErrorKind::ShapeMismatch, "kendall_tau: length mismatch");
  require(a.size() >= 2, "kendall_tau needs at least two items");
  for (std::size_t i = 0; i < a.size(); ++i)
    if (std::isnan(a[i]) || std::isnan(b[i])) fail(ErrorKind::NonFinite, "kendall_tau: NaN input");
  const double n = static_cast<double>(a.size());
  return static_cast<double>(concordance_balance(a, b)) / (n * (n - 1.0) / 2.0);
}

void BudgetCurve::validate() const {
  if (budgets.size() != rewards.size())
    fail(ErrorKind::ShapeMismatch, "budget curve: budgets and rewards differ in length");
  require(budgets.size() >= 3, "budget curve needs at least 3 points");
  require(budgets.size() % 2 == 1, "budget curve needs an even number of Simpson panels");
  for (std::size_t i = 1; i < budgets.size(); ++i)
    require(budgets[i] > budgets[i - 1], "budgets must be strictly increasing");
}

std::vector<double> uniform_budget_grid(double lo, double hi, double step) {
  require(step > 0.0 && hi > lo, "budget grid needs hi > lo and step > 0");
  const double panels = (hi - lo) / step;
  const long count = std::lround(panels);
  require(std::abs(panels - static_cast<double>(count)) < 1e-9 * panels,
          "budget grid step must divide the range");
  std::vector<double> grid(count + 1);
  for (long i = 0; i <= count; ++i) grid[i] = lo + step * static_cast<double>(i);
  grid.back() = hi;
  return grid;
}

double gain(const BudgetCurve& curve, double budget) {
  curve.validate();
  const double tol = 1e-9 * (curve.budgets.back() - curve.budgets.front());
  for (std::size_t i = 0; i < curve.budgets.size(); ++i)
    if (std::abs(curve.budgets[i] - budget) <= tol) return curve.rewards[i] - curve.rewards[0];
  fail(ErrorKind::OffGrid, "budget " + std::to_string(budget) + " is not on the curve grid");
}

double simpson(std::span<const double> values, double spacing) {
  require(values.size() >= 3 && values.size() % 2 == 1,
          "Simpson's rule needs an odd number of points (even panels)");
  const std::size_t last = values.size() - 1;
  double acc = values[0] + values[last];
  for (std::size_t i = 1; i < last; ++i) acc += (i % 2 == 1 ? 4.0 : 2.0) * values[i];
  return acc * spacing / 3.0;
}

double integrated_gain(const BudgetCurve& curve) {
  curve.validate();
  double spacing = 0.0;
  if (!is_uniform(curve.budgets, spacing))
    fail(ErrorKind::OffGrid, "integrated_gain requires a uniform budget grid");
  std::vector<double> g(curve.rewards.size());
  for (std::size_t i = 0; i < g.size(); ++i) g[i] = curve.rewards[i] - curve.rewards[0];
  return simpson(g, spacing);
}

double relative_performance(const BudgetCurve& target, const BudgetCurve& reference) {
  if (target.budgets.size() != reference.budgets.size())
    fail(ErrorKind::ShapeMismatch, "curves do not share a budget grid");
  const double tol = 1e-9 * (reference.budgets.back() - reference.budgets.front());
  for (std::size_t i = 0; i < target.budgets.size(); ++i)
    if (std::abs(target.budgets[i] - reference.budgets[i]) > tol)
      fail(ErrorKind::ShapeMismatch, "curves do not share a budget grid");
  const double h_ref = integrated_gain(reference);
  if (h_ref == 0.0) fail(ErrorKind::UndefinedRatio, "reference integrated gain is zero");
  const double omega = (integrated_gain(target) - h_ref) / h_ref;
  return omega == 0.0 ? 0.0 : omega;  // no negative zero when h_ref < 0
}

SummaryStats summarize(std::span<const double> values) {
  SummaryStats s;
  if (values.empty()) return s;
  for (double v : values) s.mean += v;
  s.mean /= static_cast<double>(values.size());
  if (values.size() > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - s.mean) * (v - s.mean);
    s.stddev = std::sqrt(ss / static_cast<double>(values.size() - 1));
  }
  return s;
}

}  // namespace ttsnap
