#include "ttsnap/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "ttsnap/error.hpp"
#include "ttsnap/hash.hpp"

namespace ttsnap {
namespace {

std::string describe(std::span<const double> x, double sigma) {
  std::ostringstream os;
  os.precision(17);
  os << "x=(";
  for (std::size_t i = 0; i < x.size(); ++i) os << (i ? "," : "") << x[i];
  os << "), sigma=" << sigma;
  return os.str();
}

bool all_finite(std::span<const double> x) {
  return std::all_of(x.begin(), x.end(), [](double v) { return std::isfinite(v); });
}

void check_inputs(const MixtureModel& mixture, std::span<const double> x, double sigma) {
  if (!all_finite(x) || !std::isfinite(sigma))
    fail(ErrorKind::NonFinite, "non-finite input: " + describe(x, sigma));
  require(sigma >= 0.0, "sigma must be nonnegative");
  require(static_cast<int>(x.size()) == mixture.dim(), "point dimension does not match mixture");
}

// Per-component log terms of the smoothed mixture; returns the maximum.
double component_logs(const MixtureModel& mixture, std::span<const double> x, double sigma,
                      std::vector<double>& logs, std::vector<double>& variances) {
  const int k_count = mixture.components();
  const double d = static_cast<double>(x.size());
  logs.resize(k_count);
  variances.resize(k_count);
  double best = -INFINITY;
  for (int k = 0; k < k_count; ++k) {
    const double v = mixture.comp_std[k] * mixture.comp_std[k] + sigma * sigma;
    double sq = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double diff = x[i] - mixture.means[k][i];
      sq += diff * diff;
    }
    variances[k] = v;
    logs[k] = std::log(mixture.weights[k]) - 0.5 * d * std::log(2.0 * std::numbers::pi * v) -
              0.5 * sq / v;
    best = std::max(best, logs[k]);
  }
  if (!std::isfinite(best))
    fail(ErrorKind::Underflow, "all mixture responsibilities underflow at " + describe(x, sigma));
  return best;
}

}  // namespace

NoiseSchedule NoiseSchedule::geometric(int steps, double sigma_max, double sigma_min,
                                       double churn) {
  require(steps >= 1, "schedule needs at least one step");
  require(sigma_max > sigma_min && sigma_min > 0.0, "need sigma_max > sigma_min > 0");
  require(churn >= 0.0, "churn must be nonnegative");
  NoiseSchedule s;
  s.steps = steps;
  s.sigmas.resize(steps + 1);
  const double ratio = std::log(sigma_min / sigma_max);
  for (int j = 0; j <= steps; ++j)
    s.sigmas[j] = sigma_max * std::exp(ratio * static_cast<double>(j) / steps);
  s.sigmas[0] = sigma_max;
  s.sigmas[steps] = sigma_min;
  s.beta.assign(steps, 0.0);
  if (churn > 0.0)
    for (int j = 0; j < steps; ++j) s.beta[j] = churn / s.sigmas[j];
  return s;
}

void NoiseSchedule::validate() const {
  require(steps >= 1, "schedule needs at least one step");
  require(static_cast<int>(sigmas.size()) == steps + 1, "schedule needs M+1 sigmas");
  require(static_cast<int>(beta.size()) == steps, "schedule needs M beta values");
  require(sigmas.back() >= 0.0, "sigma_min must be nonnegative");
  for (int j = 0; j < steps; ++j) {
    require(sigmas[j] > sigmas[j + 1], "sigmas must be strictly decreasing");
    require(beta[j] >= 0.0 && std::isfinite(beta[j]), "beta must be finite and nonnegative");
  }
}

std::uint64_t NoiseSchedule::hash() const {
  Fnv1a h;
  h.bytes("NoiseSchedule/v1");
  h.u64(static_cast<std::uint64_t>(steps));
  h.f64s(sigmas);
  h.f64s(beta);
  return h.digest();
}

void MixtureModel::validate() const {
  const int k = components();
  require(k >= 1, "mixture needs at least one component");
  require(static_cast<int>(means.size()) == k && static_cast<int>(comp_std.size()) == k,
          "mixture field lengths differ");
  double total = 0.0;
  for (int i = 0; i < k; ++i) {
    require(weights[i] > 0.0, "mixture weights must be positive");
    require(comp_std[i] > 0.0, "component std must be positive");
    require(static_cast<int>(means[i].size()) == dim(), "mixture means differ in dimension");
    require(all_finite(means[i]), "mixture means must be finite");
    total += weights[i];
  }
  require(std::abs(total - 1.0) <= 1e-12, "mixture weights must sum to 1");
}

double log_density(const MixtureModel& mixture, std::span<const double> x, double sigma) {
  check_inputs(mixture, x, sigma);
  std::vector<double> logs, variances;
  const double best = component_logs(mixture, x, sigma, logs, variances);
  double acc = 0.0;
  for (double l : logs) acc += std::exp(l - best);
  return best + std::log(acc);
}

Point score(const MixtureModel& mixture, std::span<const double> x, double sigma) {
  check_inputs(mixture, x, sigma);
  std::vector<double> logs, variances;
  const double best = component_logs(mixture, x, sigma, logs, variances);
  double total = 0.0;
  for (double& l : logs) {
    l = std::exp(l - best);
    total += l;
  }
  Point g(x.size(), 0.0);
  for (int k = 0; k < mixture.components(); ++k) {
    const double r = logs[k] / (total * variances[k]);
    for (std::size_t i = 0; i < x.size(); ++i) g[i] += r * (mixture.means[k][i] - x[i]);
  }
  return g;
}

Point tweedie(const MixtureModel& mixture, std::span<const double> x, double sigma) {
  Point g = score(mixture, x, sigma);
  const double s2 = sigma * sigma;
  for (std::size_t i = 0; i < g.size(); ++i) g[i] = x[i] + s2 * g[i];
  return g;
}

Point denoise_step(const MixtureModel& mixture, const NoiseSchedule& schedule,
                   std::span<const double> x, int j, Rng& rng) {
  require(j >= 0 && j < schedule.steps, "step index out of range");
  if (!all_finite(x)) fail(ErrorKind::NonFinite, "non-finite state at step " + std::to_string(j));
  const double sigma = schedule.sigmas[j];
  const double h = sigma - schedule.sigmas[j + 1];
  const double beta = schedule.beta[j];
  const Point g = score(mixture, x, sigma);
  // dx = -sigma' sigma score dt, with sigma(t) = t and dt = -h.
  double drift = h * sigma;
  if (beta > 0.0) drift += beta * sigma * sigma * h;
  Point out(x.begin(), x.end());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += drift * g[i];
  if (beta > 0.0) {
    std::normal_distribution<double> normal(0.0, 1.0);
    const double noise = std::sqrt(2.0 * beta * h) * sigma;
    for (double& v : out) v += noise * normal(rng);
  }
  if (!all_finite(out)) fail(ErrorKind::NonFinite, "non-finite state after step " + std::to_string(j));
  return out;
}

Trajectory sample_trajectory(const MixtureModel& mixture, const NoiseSchedule& schedule,
                             std::uint64_t seed) {
  schedule.validate();
  const int d = mixture.dim();
  const int m = schedule.steps;
  Trajectory t;
  t.seed = seed;
  t.steps = m;
  t.dim = d;
  t.latents.resize(static_cast<std::size_t>(m + 1) * d);
  t.estimates.resize(static_cast<std::size_t>(m) * d);

  Rng rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (int i = 0; i < d; ++i) t.latents[i] = schedule.sigmas[0] * normal(rng);
  for (int j = 0; j < m; ++j) {
    const Point next = denoise_step(mixture, schedule, t.latent(j), j, rng);
    std::copy(next.begin(), next.end(), t.latents.begin() + static_cast<std::ptrdiff_t>(j + 1) * d);
    const Point est = tweedie(mixture, next, schedule.sigmas[j + 1]);
    std::copy(est.begin(), est.end(), t.estimates.begin() + static_cast<std::ptrdiff_t>(j) * d);
  }
  return t;
}

Point sample_data(const MixtureModel& mixture, Rng& rng) {
  std::discrete_distribution<int> pick(mixture.weights.begin(), mixture.weights.end());
  std::normal_distribution<double> normal(0.0, 1.0);
  const int k = pick(rng);
  Point x = mixture.means[k];
  for (double& v : x) v += mixture.comp_std[k] * normal(rng);
  return x;
}

}  // namespace ttsnap
