#include <cmath>
#include <random>

#include "doctest.h"
#include "oracles.hpp"
#include "ttsnap/error.hpp"
#include "ttsnap/metrics.hpp"

using namespace ttsnap;

namespace {

ErrorKind kind_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("expected an Error");
  return ErrorKind::InvalidArgument;
}

BudgetCurve curve_of(const std::vector<double>& grid, auto&& f) {
  BudgetCurve c{grid, {}};
  for (double b : grid) c.rewards.push_back(f(b));
  return c;
}

}  // namespace

TEST_CASE("kendall matches brute-force pair counting") {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 1000; ++trial) {
    const int n = 2 + static_cast<int>(rng() % 49);
    // Small integer range forces plenty of ties.
    std::uniform_int_distribution<int> v(0, trial % 2 ? 5 : 1000);
    std::vector<double> a(n), b(n);
    for (int i = 0; i < n; ++i) {
      a[i] = v(rng);
      b[i] = v(rng);
    }
    REQUIRE(kendall_tau(a, b) == oracle::kendall(a, b));
  }
}

TEST_CASE("kendall worked example and extremes") {
  const std::vector<double> a{3, 1, 2}, b{1, 2, 3};
  CHECK(kendall_tau(a, b) == doctest::Approx(-1.0 / 3.0).epsilon(1e-15));
  std::vector<double> up{0.1, 0.5, 2.0, 3.0, 9.0}, down(up.rbegin(), up.rend());
  CHECK(kendall_tau(up, up) == 1.0);
  CHECK(kendall_tau(up, down) == -1.0);
}

TEST_CASE("kendall is invariant under strictly increasing transforms") {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> z;
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> a(30), b(30), ta(30), tb(30);
    for (int i = 0; i < 30; ++i) {
      a[i] = z(rng);
      b[i] = a[i] + z(rng);
      ta[i] = std::exp(a[i]);
      tb[i] = 3.0 * b[i] * b[i] * b[i] - 1.0;
    }
    CHECK(kendall_tau(a, b) == kendall_tau(ta, tb));
    CHECK(kendall_tau(a, b) == kendall_tau(b, a));
  }
}

TEST_CASE("kendall rejects bad input") {
  const std::vector<double> two{1, 2}, three{1, 2, 3}, nan{1, NAN};
  CHECK(kind_of([&] { kendall_tau(two, three); }) == ErrorKind::ShapeMismatch);
  CHECK(kind_of([&] { kendall_tau(nan, two); }) == ErrorKind::NonFinite);
  const std::vector<double> one{1};
  CHECK(kind_of([&] { kendall_tau(one, one); }) == ErrorKind::InvalidArgument);
}

TEST_CASE("budget grid and gain lookup") {
  const auto grid = uniform_budget_grid(200, 4000, 190);
  REQUIRE(grid.size() == 21);
  CHECK(grid.front() == 200);
  CHECK(grid.back() == 4000);
  const auto c = curve_of(grid, [](double b) { return std::sqrt(b); });
  CHECK(gain(c, 200) == 0.0);
  CHECK(gain(c, 4000) == doctest::Approx(std::sqrt(4000.0) - std::sqrt(200.0)));
  CHECK(kind_of([&] { gain(c, 201); }) == ErrorKind::OffGrid);
  CHECK(kind_of([&] { uniform_budget_grid(0, 10, 3); }) == ErrorKind::InvalidArgument);
}

TEST_CASE("simpson integrates cubics exactly") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-2, 2);
  for (int trial = 0; trial < 100; ++trial) {
    const double c0 = u(rng), c1 = u(rng), c2 = u(rng), c3 = u(rng);
    const double lo = 200, step = 190;
    const int panels = 2 * (1 + static_cast<int>(rng() % 10));
    const double hi = lo + panels * step;
    const auto grid = uniform_budget_grid(lo, hi, step);
    // Scaled abscissa keeps the cubic well conditioned.
    auto p = [&](double b) {
      const double x = (b - lo) / (hi - lo);
      return c0 + c1 * x + c2 * x * x + c3 * x * x * x;
    };
    const auto c = curve_of(grid, p);
    const double w = hi - lo;
    const double exact = w * (c1 / 2 + c2 / 3 + c3 / 4);  // integral of p - p(lo)
    CHECK(std::abs(integrated_gain(c) - exact) <= 1e-12 * (1 + std::abs(exact)) * w);
  }
}

TEST_CASE("simpson small example and linearity") {
  const std::vector<double> x2{0, 1, 4};  // x^2 on [0, 2]
  CHECK(simpson(x2, 1.0) == doctest::Approx(8.0 / 3.0).epsilon(1e-15));
  const auto grid = uniform_budget_grid(0, 8, 1);
  const auto f = curve_of(grid, [](double b) { return std::sin(b); });
  const auto g = curve_of(grid, [](double b) { return b * b; });
  const auto fg = curve_of(grid, [](double b) { return 2 * std::sin(b) - 0.5 * b * b; });
  CHECK(integrated_gain(fg) ==
        doctest::Approx(2 * integrated_gain(f) - 0.5 * integrated_gain(g)).epsilon(1e-12));
}

TEST_CASE("integrated gain rejects nonuniform and malformed grids") {
  BudgetCurve bad{{0, 1, 3}, {0, 1, 2}};
  CHECK(kind_of([&] { integrated_gain(bad); }) == ErrorKind::OffGrid);
  BudgetCurve even{{0, 1, 2, 3}, {0, 1, 2, 3}};
  CHECK(kind_of([&] { integrated_gain(even); }) == ErrorKind::InvalidArgument);
  BudgetCurve ragged{{0, 1, 2}, {0, 1}};
  CHECK(kind_of([&] { integrated_gain(ragged); }) == ErrorKind::ShapeMismatch);
}

TEST_CASE("relative performance") {
  const auto grid = uniform_budget_grid(200, 4000, 190);
  const auto ref = curve_of(grid, [](double b) { return std::log(b); });
  const auto twice = curve_of(grid, [](double b) { return 2 * std::log(b) + 5; });
  CHECK(relative_performance(ref, ref) == 0.0);
  CHECK(relative_performance(twice, ref) == doctest::Approx(1.0).epsilon(1e-12));

  // Scale-free: multiplying both curves by a constant leaves omega alone.
  const auto other = curve_of(grid, [](double b) { return std::sqrt(b); });
  const auto ref7 = curve_of(grid, [](double b) { return 7 * std::log(b); });
  const auto other7 = curve_of(grid, [](double b) { return 7 * std::sqrt(b); });
  CHECK(relative_performance(other7, ref7) ==
        doctest::Approx(relative_performance(other, ref)).epsilon(1e-12));

  const auto flat = curve_of(grid, [](double) { return 1.0; });
  CHECK(kind_of([&] { relative_performance(ref, flat); }) == ErrorKind::UndefinedRatio);
  const auto shifted = curve_of(uniform_budget_grid(400, 4200, 190), [](double b) { return b; });
  CHECK(kind_of([&] { relative_performance(shifted, ref); }) == ErrorKind::ShapeMismatch);
}

TEST_CASE("summary statistics") {
  const std::vector<double> v{1, 2, 3, 4};
  const auto s = summarize(v);
  CHECK(s.mean == 2.5);
  CHECK(s.stddev == doctest::Approx(std::sqrt(5.0 / 3.0)));
  CHECK(summarize(std::vector<double>{}).mean == 0.0);
}
