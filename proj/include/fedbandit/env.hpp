#pragma once

#include <cmath>
#include <cstddef>
#include <random>
#include <string>
#include <vector>

#include "fedbandit/core.hpp"
#include "fedbandit/rng.hpp"

namespace fedbandit {

/// Inner-product window [lo, hi] an action's mean reward must fall into.
struct RewardWindow {
  double lo;
  double hi;
  bool contains(double v) const { return v >= lo && v <= hi; }
};

struct EnvironmentOptions {
  RewardWindow suboptimal{0.5, 0.6};
  RewardWindow optimal{0.7, 0.8};
  double theta_norm = 1.0;   // ||theta*||, must not exceed the S bound of 1
  double action_bound = 1.0; // L
  int max_attempts = 10000;  // per action
};

/// Linear bandit instance shared by every device and round of a trial.
/// Immutable after construction.
struct Environment {
  Vector theta_star;
  std::vector<Vector> actions;
  std::vector<double> means;  // <x, theta*> per action
  std::size_t optimal_index = 0;
  int dimension = 0;

  std::size_t num_actions() const { return actions.size(); }
  const Vector& optimal_action() const { return actions[optimal_index]; }
  double optimal_mean() const { return means[optimal_index]; }
  double gap(std::size_t index) const { return means[optimal_index] - means[index]; }
};

struct RewardSample {
  double value = 0.0;
  int device = 0;
  int round = 0;
};

namespace detail {

inline Vector random_unit_vector(int dimension, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  for (;;) {
    Vector v(dimension);
    for (int i = 0; i < dimension; ++i) v[i] = normal(rng);
    const double n = v.norm();
    if (n > 1e-12) return v / n;
  }
}

// Draws an action whose inner product with theta* is uniform in `window`.
// The component along theta* is fixed by the target; the orthogonal part
// comes from a uniform direction and is shrunk when ||x|| would exceed L.
inline Vector draw_action(const Vector& theta, RewardWindow window, const EnvironmentOptions& opt,
                          Rng& rng) {
  const double theta_norm = theta.norm();
  const Vector dir = theta / theta_norm;
  std::uniform_real_distribution<double> target_dist(window.lo, window.hi);
  for (int attempt = 0; attempt < opt.max_attempts; ++attempt) {
    const double target = target_dist(rng);
    const double along = target / theta_norm;
    if (along > opt.action_bound) continue;
    const Vector u = random_unit_vector(static_cast<int>(theta.size()), rng);
    Vector ortho = u - u.dot(dir) * dir;
    const double ortho_norm = ortho.norm();
    if (ortho_norm < 1e-9) continue;
    const double room = std::sqrt(opt.action_bound * opt.action_bound - along * along);
    if (std::hypot(along, ortho_norm) > opt.action_bound) ortho *= room / ortho_norm;
    Vector x = along * dir + ortho;
    if (x.norm() > opt.action_bound) x *= opt.action_bound / x.norm();
    if (window.contains(x.dot(theta))) return x;
  }
  throw GenerationError("action rejection sampling exhausted " + std::to_string(opt.max_attempts) +
                        " attempts; window [" + std::to_string(window.lo) + ", " +
                        std::to_string(window.hi) + "] infeasible for ||theta*|| = " +
                        std::to_string(theta_norm));
}

}  // namespace detail

/// Builds theta* (uniform direction, norm `theta_norm`) and `num_actions`
/// actions: one optimal action in the optimal window, the rest in the
/// suboptimal window. The optimal action's position is drawn uniformly.
/// Pure function of (dimension, num_actions, seed, options).
inline Environment generate_environment(int dimension, int num_actions, std::uint64_t seed,
                                        const EnvironmentOptions& opt = {}) {
  require(dimension >= 2, "generate_environment: dimension must be >= 2");
  require(num_actions >= 1, "generate_environment: need at least one action");
  require(num_actions <= dimension * dimension, "generate_environment: num_actions must be <= d^2");
  require(opt.theta_norm > 0.0 && opt.theta_norm <= 1.0,
          "generate_environment: theta norm must lie in (0, 1]");

  Rng rng(seed);
  Environment env;
  env.dimension = dimension;
  env.theta_star = opt.theta_norm * detail::random_unit_vector(dimension, rng);
  env.optimal_index =
      std::uniform_int_distribution<std::size_t>(0, static_cast<std::size_t>(num_actions) - 1)(rng);

  env.actions.reserve(num_actions);
  env.means.reserve(num_actions);
  for (int k = 0; k < num_actions; ++k) {
    const bool optimal = static_cast<std::size_t>(k) == env.optimal_index;
    Vector x = detail::draw_action(env.theta_star, optimal ? opt.optimal : opt.suboptimal, opt, rng);
    env.means.push_back(x.dot(env.theta_star));
    env.actions.push_back(std::move(x));
  }
  return env;
}

/// Bernoulli(<action, theta*>) reward.
inline RewardSample sample_reward(const Environment& env, const Vector& action, Rng& rng,
                                  int device = 0, int round = 0) {
  const double mean = action.dot(env.theta_star);
  if (!(mean >= 0.0 && mean <= 1.0))
    throw PreconditionError("sample_reward: mean reward " + std::to_string(mean) +
                            " outside [0, 1]");
  const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  return RewardSample{u < mean ? 1.0 : 0.0, device, round};
}

/// Pseudo-regret <x* - x, theta*> of playing `action`.
inline double instantaneous_regret(const Environment& env, const Vector& action) {
  require(action.size() == env.dimension, "instantaneous_regret: dimension mismatch");
  bool member = false;
  for (const auto& x : env.actions) member = member || x == action;
  require(member, "instantaneous_regret: action is not in the decision set");
  return (env.optimal_action() - action).dot(env.theta_star);
}

}  // namespace fedbandit
