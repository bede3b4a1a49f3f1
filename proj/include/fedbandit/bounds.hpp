#pragma once

#include <cmath>
#include <numbers>

#include "fedbandit/core.hpp"

namespace fedbandit {

/// High-probability bounds on the effective channel noise of one sync round,
/// parameterized by the effective noise std sigma_t.
struct NoiseBounds {
  double gamma_max = 0.0;   // bound on ||N_t||
  double gamma_min = 0.0;   // lower spectral bound, 1 / ||N_t^-1||
  double gamma_n = 0.0;     // bound on ||n_t||
  double kappa = 0.0;       // bound on ||n_t||_{N_t^-1}
  double sigma_t = 0.0;
  double failure_prob_alpha = 0.05;
  double const_C = 1.0;
  double const_c = 1.0;
  int dimension = 1;
  int horizon_n = 1;        // number of sync rounds
  bool gamma_min_clamped = false;
};

struct TheoryParams {
  double nu = std::numbers::e;
  double threshold_D = 0.0;
  double beta_bar = 0.0;
  double regret_bound = 0.0;
};

struct NoiseBoundOptions {
  double alpha = 0.05;
  double C = 1.0;
  double c = 1.0;
  double gamma_floor = 1e-3;
};

/// gamma_max = C sigma sqrt(d) log(1/alpha)
/// gamma_min = (alpha - 2 exp(-C d)) / (2c) * sigma * (sqrt(d) - sqrt(d - 1)), clamped to gamma_floor
/// gamma_n   = sigma (sqrt(d) + sqrt(2 ln(2/alpha)))
/// kappa     = sqrt(2 C gamma_n^2 / gamma_min)
/// sigma = 0 returns all-zero bounds; callers switch to the noise-free
/// regularizer (see error_free_bounds).
inline NoiseBounds compute_noise_bounds(double sigma_t, int d, int n, int num_devices,
                                        const NoiseBoundOptions& opt = {}) {
  require(sigma_t >= 0.0, "compute_noise_bounds: sigma_t must be nonnegative");
  require(opt.alpha > 0.0 && opt.alpha < 1.0, "compute_noise_bounds: alpha must lie in (0, 1)");
  require(d >= 1 && n >= 1 && num_devices >= 1, "compute_noise_bounds: d, n, M must be positive");
  (void)num_devices;  // enters only through the alpha / (2 n M) accuracy level

  NoiseBounds nb;
  nb.sigma_t = sigma_t;
  nb.failure_prob_alpha = opt.alpha;
  nb.const_C = opt.C;
  nb.const_c = opt.c;
  nb.dimension = d;
  nb.horizon_n = n;
  if (sigma_t == 0.0) return nb;

  const double dd = static_cast<double>(d);
  nb.gamma_max = opt.C * sigma_t * std::sqrt(dd) * std::log(1.0 / opt.alpha);
  nb.gamma_min = (opt.alpha - 2.0 * std::exp(-opt.C * dd)) / (2.0 * opt.c) * sigma_t *
                 (std::sqrt(dd) - std::sqrt(dd - 1.0));
  if (nb.gamma_min <= 0.0) {
    // small d or alpha; S_1 = gamma_min I must still be PD
    nb.gamma_min = opt.gamma_floor;
    nb.gamma_min_clamped = true;
  }
  // a clamped gamma_min can exceed the formula's gamma_max
  if (nb.gamma_max < nb.gamma_min) nb.gamma_max = nb.gamma_min;
  nb.gamma_n = sigma_t * (std::sqrt(dd) + std::sqrt(2.0 * std::log(2.0 / opt.alpha)));
  nb.kappa = std::sqrt(2.0 * opt.C * nb.gamma_n * nb.gamma_n / nb.gamma_min);
  return nb;
}

/// Noise-free instantiation: plain ridge regularizer, no noise terms.
inline NoiseBounds error_free_bounds(double lambda_reg, int d, double alpha = 0.05) {
  require(lambda_reg > 0.0, "error_free_bounds: regularizer must be positive");
  NoiseBounds nb;
  nb.gamma_max = lambda_reg;
  nb.gamma_min = lambda_reg;
  nb.failure_prob_alpha = alpha;
  nb.dimension = d;
  return nb;
}

inline double log_base(double x, double nu) { return std::log(x) / std::log(nu); }

/// X = gamma_max / gamma_min + T L^2 / (d gamma_min), the argument shared by
/// the radius, the threshold and the regret bound.
inline double information_ratio(double t, const NoiseBounds& nb, double L) {
  require(nb.gamma_min > 0.0, "information ratio needs gamma_min > 0");
  return nb.gamma_max / nb.gamma_min + t * L * L / (static_cast<double>(nb.dimension) * nb.gamma_min);
}

/// Uniform exploration radius
///   sigma sqrt(2 log(2/alpha) + d log X_t) + S sqrt(gamma_max) + kappa.
inline double beta_bar(double t, const NoiseBounds& nb, double sigma_reward, double S_bound,
                       double L_bound) {
  require(t >= 0.0, "beta_bar: round index must be nonnegative");
  const double d = static_cast<double>(nb.dimension);
  const double inner =
      2.0 * std::log(2.0 / nb.failure_prob_alpha) + d * std::log(information_ratio(t, nb, L_bound));
  return sigma_reward * std::sqrt(inner) + S_bound * std::sqrt(nb.gamma_max) + nb.kappa;
}

/// D = 2 T d / (log_nu X_T + 1).
inline double threshold_D(int T, int d, const NoiseBounds& nb, double L, double nu = std::numbers::e) {
  require(T >= 1 && d >= 1 && nu > 1.0, "threshold_D: need T, d >= 1 and nu > 1");
  NoiseBounds at_d = nb;
  at_d.dimension = d;
  const double x = information_ratio(static_cast<double>(T), at_d, L);
  return 2.0 * T * d / (log_base(x, nu) + 1.0);
}

/// 4 nu beta_T sqrt(2 M T d log_nu X_T + 1).
inline double regret_bound(int T, int M, int d, const NoiseBounds& nb, double beta_T, double L,
                           double nu = std::numbers::e) {
  require(T >= 1 && M >= 1 && d >= 1 && nu > 1.0, "regret_bound: need T, M, d >= 1 and nu > 1");
  NoiseBounds at_d = nb;
  at_d.dimension = d;
  const double x = information_ratio(static_cast<double>(T), at_d, L);
  return 4.0 * nu * beta_T *
         std::sqrt(2.0 * M * static_cast<double>(T) * d * log_base(x, nu) + 1.0);
}

/// Radius at T, threshold and regret bound for one configuration.
inline TheoryParams theory_params(int T, int M, int d, const NoiseBounds& nb, double sigma_reward,
                                  double S_bound, double L, double nu = std::numbers::e) {
  TheoryParams p;
  p.nu = nu;
  p.threshold_D = threshold_D(T, d, nb, L, nu);
  p.beta_bar = beta_bar(static_cast<double>(T), nb, sigma_reward, S_bound, L);
  p.regret_bound = regret_bound(T, M, d, nb, p.beta_bar, L, nu);
  return p;
}

}  // namespace fedbandit
