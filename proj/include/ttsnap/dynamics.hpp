#pragma once

// EDM-parameterized forward/reverse process on Gaussian-mixture data.
//
// Time is indexed by sampler step j = 0..M. Step 0 is the noisiest state
// (sigma_max) and step M the cleanest (sigma_min). estimates[j] is the
// posterior mean after completing step j, i.e. at sigmas[j + 1]. A pruning
// timestep tau (the number of completed steps) therefore reads estimates[tau - 1].

#include <cstdint>
#include <span>
#include <vector>

#include "ttsnap/rng.hpp"

namespace ttsnap {

using Point = std::vector<double>;

struct NoiseSchedule {
  int steps = 0;                // M
  std::vector<double> sigmas;   // M + 1 values, strictly decreasing
  std::vector<double> beta;     // M values, SDE churn; zero gives the ODE sampler

  /// Geometric spacing from sigma_max to sigma_min. churn > 0 sets
  /// beta[j] = churn / sigmas[j], which makes the Langevin part of each
  /// Euler-Maruyama step proportional to the step length.
  static NoiseSchedule geometric(int steps, double sigma_max, double sigma_min, double churn = 0.0);

  void validate() const;
  std::uint64_t hash() const;
};

struct MixtureModel {
  std::vector<double> weights;
  std::vector<Point> means;
  std::vector<double> comp_std;

  int components() const { return static_cast<int>(weights.size()); }
  int dim() const { return means.empty() ? 0 : static_cast<int>(means.front().size()); }
  void validate() const;
  bool operator==(const MixtureModel&) const = default;
};

struct Trajectory {
  std::uint64_t seed = 0;
  int steps = 0;
  int dim = 0;
  std::vector<double> latents;    // (steps + 1) x dim, row-major
  std::vector<double> estimates;  // steps x dim

  std::span<const double> latent(int j) const {
    return {latents.data() + static_cast<std::size_t>(j) * dim, static_cast<std::size_t>(dim)};
  }
  std::span<const double> estimate(int j) const {
    return {estimates.data() + static_cast<std::size_t>(j) * dim, static_cast<std::size_t>(dim)};
  }
  std::span<const double> x_init() const { return latent(0); }
  std::span<const double> final_sample() const { return latent(steps); }

  bool operator==(const Trajectory&) const = default;
};

/// log p(x; sigma) of the mixture convolved with N(0, sigma^2 I).
double log_density(const MixtureModel& mixture, std::span<const double> x, double sigma);

/// Gradient of log_density with respect to x.
Point score(const MixtureModel& mixture, std::span<const double> x, double sigma);

/// Posterior mean E[x0 | x_sigma = x] = x + sigma^2 * score.
Point tweedie(const MixtureModel& mixture, std::span<const double> x, double sigma);

/// Moves x from sigmas[j] to sigmas[j + 1]. Euler for beta[j] == 0 (rng
/// untouched), Euler-Maruyama otherwise.
Point denoise_step(const MixtureModel& mixture, const NoiseSchedule& schedule,
                   std::span<const double> x, int j, Rng& rng);

/// Draws x_init = sigma_max * N(0, I) from an rng seeded with `seed` and
/// integrates all M steps, recording the Tweedie estimate after each.
Trajectory sample_trajectory(const MixtureModel& mixture, const NoiseSchedule& schedule,
                             std::uint64_t seed);

/// Draws one sample from the clean mixture.
Point sample_data(const MixtureModel& mixture, Rng& rng);

}  // namespace ttsnap
