#include <cmath>
#include <random>

#include "doctest.h"
#include "ttsnap/dynamics.hpp"
#include "ttsnap/error.hpp"

using namespace ttsnap;

namespace {

MixtureModel single(Point mean, double s) { return {{1.0}, {std::move(mean)}, {s}}; }

MixtureModel asymmetric2d() {
  return {{0.3, 0.7}, {{-1.5, 0.5}, {2.0, -1.0}}, {0.6, 1.1}};
}

MixtureModel three2d() {
  return {{0.2, 0.5, 0.3}, {{0.0, 3.0}, {2.5, -1.0}, {-2.0, -2.0}}, {0.4, 0.8, 0.3}};
}

double vnorm(const Point& v) {
  double s = 0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

// Exact probability-flow solution for one isotropic Gaussian component.
double exact_flow(double x0, double mu, double s, double sigma_from, double sigma_to) {
  return mu + (x0 - mu) * std::sqrt((s * s + sigma_to * sigma_to) / (s * s + sigma_from * sigma_from));
}

}  // namespace

TEST_CASE("geometric schedule endpoints and shape") {
  const auto s = NoiseSchedule::geometric(20, 80.0, 0.002);
  REQUIRE(s.sigmas.size() == 21);
  CHECK(s.sigmas.front() == doctest::Approx(80.0));
  CHECK(s.sigmas.back() == doctest::Approx(0.002));
  for (int j = 0; j < 20; ++j) CHECK(s.sigmas[j] > s.sigmas[j + 1]);
  CHECK(s.beta == std::vector<double>(20, 0.0));
  const auto churned = NoiseSchedule::geometric(4, 10.0, 0.1, 0.5);
  for (int j = 0; j < 4; ++j) CHECK(churned.beta[j] == doctest::Approx(0.5 / churned.sigmas[j]));
  CHECK(s.hash() != churned.hash());
  CHECK(s.hash() == NoiseSchedule::geometric(20, 80.0, 0.002).hash());

  NoiseSchedule bad = s;
  bad.sigmas[3] = bad.sigmas[2];
  CHECK_THROWS_AS(bad.validate(), Error);
}

TEST_CASE("mixture validation") {
  MixtureModel m = asymmetric2d();
  CHECK_NOTHROW(m.validate());
  m.weights = {0.3, 0.7 + 1e-9};
  CHECK_THROWS_AS(m.validate(), Error);
  m = asymmetric2d();
  m.comp_std[1] = 0.0;
  CHECK_THROWS_AS(m.validate(), Error);
}

TEST_CASE("score of one Gaussian matches the closed form") {
  const auto g = score(single({0.0, 0.0}, 1.0), std::vector<double>{2.0, 0.0}, 1.0);
  CHECK(g[0] == doctest::Approx(-1.0).epsilon(1e-12));
  CHECK(std::abs(g[1]) < 1e-15);
}

TEST_CASE("score vanishes at the center of a symmetric pair") {
  const MixtureModel m{{0.5, 0.5}, {{-2.0, 1.0}, {2.0, -1.0}}, {0.7, 0.7}};
  const auto g = score(m, std::vector<double>{0.0, 0.0}, 0.8);
  CHECK(std::abs(g[0]) < 1e-15);
  CHECK(std::abs(g[1]) < 1e-15);
}

TEST_CASE("score matches central finite differences of the log density") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> coord(-5.0, 5.0), logsig(std::log(0.05), std::log(20.0));
  const MixtureModel m = three2d();
  double worst = 0.0;
  for (int t = 0; t < 1000; ++t) {
    const Point x{coord(rng), coord(rng)};
    const double sigma = std::exp(logsig(rng));
    const auto g = score(m, x, sigma);
    Point fd(2);
    for (int i = 0; i < 2; ++i) {
      const double h = 1e-4 * std::sqrt(m.comp_std[0] * m.comp_std[0] + sigma * sigma);
      Point lo = x, hi = x;
      lo[i] -= h;
      hi[i] += h;
      fd[i] = (log_density(m, hi, sigma) - log_density(m, lo, sigma)) / (2 * h);
    }
    Point diff{fd[0] - g[0], fd[1] - g[1]};
    worst = std::max(worst, vnorm(diff) / vnorm(g));
  }
  CHECK(worst < 1e-5);
}

TEST_CASE("tweedie closed forms and identities") {
  const MixtureModel one = single({0.0, 0.0}, 1.0);
  const auto e = tweedie(one, std::vector<double>{2.0, 0.0}, 1.0);
  CHECK(e[0] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(std::abs(e[1]) < 1e-15);

  const Point x{0.3, -4.0};
  CHECK(tweedie(asymmetric2d(), x, 0.0) == x);

  // One component: the estimate lies on the segment between the mean and x.
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-6.0, 6.0);
  const Point mu{1.0, -2.0};
  const MixtureModel m = single(mu, 0.7);
  for (int t = 0; t < 100; ++t) {
    const Point y{u(rng), u(rng)};
    const double sigma = 0.1 + std::abs(u(rng));
    const auto est = tweedie(m, y, sigma);
    const double lambda = (est[0] - mu[0]) / (y[0] - mu[0]);
    CHECK(lambda >= 0.0);
    CHECK(lambda <= 1.0);
    CHECK(lambda == doctest::Approx(0.49 / (0.49 + sigma * sigma)).epsilon(1e-10));
    CHECK(est[1] - mu[1] == doctest::Approx(lambda * (y[1] - mu[1])).epsilon(1e-10));
  }
}

TEST_CASE("tweedie matches a Monte-Carlo posterior mean") {
  // Self-normalized importance sampling from the prior; the standard error
  // comes from the delta method.
  const MixtureModel m = asymmetric2d();
  const double sigma = 1.3;
  const Point x{0.4, 0.2};
  std::mt19937_64 rng(17);
  const int n = 1000000;
  std::vector<Point> draws(n);
  std::vector<double> w(n);
  double wsum = 0.0;
  Point num(2, 0.0);
  for (int i = 0; i < n; ++i) {
    draws[i] = sample_data(m, rng);
    const double dx = x[0] - draws[i][0], dy = x[1] - draws[i][1];
    w[i] = std::exp(-0.5 * (dx * dx + dy * dy) / (sigma * sigma));
    wsum += w[i];
    num[0] += w[i] * draws[i][0];
    num[1] += w[i] * draws[i][1];
  }
  const auto est = tweedie(m, x, sigma);
  for (int k = 0; k < 2; ++k) {
    const double mc = num[k] / wsum;
    double var = 0.0;
    for (int i = 0; i < n; ++i) var += w[i] * w[i] * (draws[i][k] - mc) * (draws[i][k] - mc);
    const double se = std::sqrt(var) / wsum;
    CHECK(std::abs(est[k] - mc) < 3.0 * se);
  }
}

TEST_CASE("score errors") {
  const MixtureModel m = asymmetric2d();
  CHECK_THROWS_AS(score(m, std::vector<double>{NAN, 0.0}, 1.0), Error);
  try {
    score(m, std::vector<double>{1e200, 0.0}, 0.5);
    FAIL("expected underflow");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Underflow);
    CHECK(std::string(e.what()).find("sigma=0.5") != std::string::npos);
  }
  try {
    score(m, std::vector<double>{INFINITY, 0.0}, 0.5);
    FAIL("expected non-finite error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::NonFinite);
  }
}

TEST_CASE("denoise step") {
  const MixtureModel m = asymmetric2d();
  NoiseSchedule flat;
  flat.steps = 1;
  flat.sigmas = {1.0, 1.0};
  flat.beta = {0.0};
  Rng rng(1);
  const Point x{0.5, 0.5};
  CHECK(denoise_step(m, flat, x, 0, rng) == x);

  const auto sched = NoiseSchedule::geometric(10, 10.0, 0.01);
  Rng a(9), b(9);
  denoise_step(m, sched, x, 3, a);
  CHECK(a() == b());  // the ODE step leaves the rng untouched

  try {
    denoise_step(m, sched, std::vector<double>{NAN, 0.0}, 4, rng);
    FAIL("expected non-finite error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::NonFinite);
    CHECK(std::string(e.what()).find("step 4") != std::string::npos);
  }
}

TEST_CASE("Euler ODE converges at first order to the exact Gaussian flow") {
  const double mu = 0.5, s = 0.8, x0 = 30.0;
  std::vector<double> errors;
  for (int steps : {40, 80, 160, 320}) {
    const auto sched = NoiseSchedule::geometric(steps, 40.0, 0.01);
    const MixtureModel m = single({mu}, s);
    Rng rng(0);
    Point x{x0};
    for (int j = 0; j < steps; ++j) x = denoise_step(m, sched, x, j, rng);
    const double exact = exact_flow(x0, mu, s, sched.sigmas.front(), sched.sigmas.back());
    errors.push_back(std::abs(x[0] - exact));
  }
  for (std::size_t i = 0; i + 1 < errors.size(); ++i) {
    const double ratio = errors[i] / errors[i + 1];
    CHECK(ratio >= 1.7);
    CHECK(ratio <= 2.3);
  }
}

TEST_CASE("SDE and ODE samplers share the data marginal") {
  const double mu = 0.5, s = 0.7;
  const MixtureModel m = single({mu}, s);
  const auto sde = NoiseSchedule::geometric(400, 5.0, 0.002, 0.2);
  const auto ode = NoiseSchedule::geometric(400, 5.0, 0.002);
  const int n = 100000;
  double sum_sde = 0, sq_sde = 0, sum_ode = 0;
  const double start_sd = std::sqrt(s * s + sde.sigmas[0] * sde.sigmas[0]);
  for (int i = 0; i < n; ++i) {
    Rng rng(1000 + i);
    // Start from the exact noisy marginal so only the sampler is under test.
    Point x{mu + start_sd * std::normal_distribution<double>(0.0, 1.0)(rng)};
    Point y = x;
    for (int j = 0; j < sde.steps; ++j) {
      x = denoise_step(m, sde, x, j, rng);
      y = denoise_step(m, ode, y, j, rng);
    }
    sum_sde += x[0];
    sq_sde += x[0] * x[0];
    sum_ode += y[0];
  }
  const double mean_sde = sum_sde / n, mean_ode = sum_ode / n;
  const double sd = std::sqrt(sq_sde / n - mean_sde * mean_sde);
  const double target = std::sqrt(s * s + 0.002 * 0.002);
  CHECK(std::abs(sd - target) < 3.0 * target / std::sqrt(2.0 * n));
  CHECK(std::abs(mean_sde - mu) < 3.0 * target / std::sqrt(n));
  CHECK(std::abs(mean_sde - mean_ode) < 3.0 * std::sqrt(2.0) * target / std::sqrt(n));
}

TEST_CASE("sample_trajectory records latents and estimates") {
  const MixtureModel m = single({1.0, -1.0}, 1.0);
  const auto sched = NoiseSchedule::geometric(20, 80.0, 1e-4);
  const Trajectory a = sample_trajectory(m, sched, 42);
  CHECK(a == sample_trajectory(m, sched, 42));
  CHECK(!(a == sample_trajectory(m, sched, 43)));
  CHECK(a.latents.size() == 21 * 2);
  CHECK(a.estimates.size() == 20 * 2);

  Rng rng(42);
  std::normal_distribution<double> normal(0.0, 1.0);
  CHECK(a.x_init()[0] == 80.0 * normal(rng));

  for (int k = 0; k < 2; ++k) CHECK(std::abs(a.estimate(19)[k] - a.final_sample()[k]) < 1e-6);
  for (int j = 0; j < 20; ++j) {
    const double sig = sched.sigmas[j + 1];
    const double lambda = 1.0 / (1.0 + sig * sig);
    for (int k = 0; k < 2; ++k) {
      const double mu = k == 0 ? 1.0 : -1.0;
      CHECK(a.estimate(j)[k] == doctest::Approx(mu + lambda * (a.latent(j + 1)[k] - mu)).epsilon(1e-12));
    }
  }
}
