#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "fedbandit/core.hpp"

namespace fedbandit {

/// Globally shared design: Gram matrix S_t and reward vector s_t as
/// received (and post-processed) by the server.
struct SyncState {
  Matrix gram;
  Vector reward_vec;

  static SyncState initial(int dimension, double gamma_min) {
    return SyncState{gamma_min * Matrix::Identity(dimension, dimension),
                     Vector::Zero(dimension)};
  }

  bool operator==(const SyncState& o) const {
    return gram == o.gram && reward_vec == o.reward_vec;
  }
};

/// Device-side protocol state. Holds the last broadcast plus everything
/// observed locally since.
struct DeviceState {
  Matrix local_gram;
  Vector local_reward_vec;
  SyncState sync;
  int rounds_since_sync = 0;

  static DeviceState initial(int dimension, double gamma_min) {
    return DeviceState{Matrix::Zero(dimension, dimension), Vector::Zero(dimension),
                       SyncState::initial(dimension, gamma_min), 0};
  }

  int dimension() const { return static_cast<int>(local_reward_vec.size()); }
};

struct ConfidenceEllipsoid {
  Vector center;
  Matrix shape;
  double radius = 0.0;
};

struct EffectiveDesign {
  Matrix gram;       // V = S + U
  Vector reward_vec; // u~ = s + u
};

struct ActionChoice {
  std::size_t index = 0;
  Vector action;
  double score = 0.0;
};

namespace detail {

inline Eigen::LLT<Matrix> factorize_pd(const Matrix& m, const char* what) {
  Eigen::LLT<Matrix> llt(m);
  if (llt.info() != Eigen::Success)
    throw NumericalError(std::string(what) + ": matrix is not positive definite");
  const Vector diag = llt.matrixLLT().diagonal();
  for (Eigen::Index i = 0; i < diag.size(); ++i)
    if (!(diag[i] > 0.0) || !std::isfinite(diag[i]))
      throw NumericalError(std::string(what) + ": matrix is not positive definite");
  return llt;
}

inline double log_det_pd(const Matrix& m, const char* what) {
  const auto llt = factorize_pd(m, what);
  const Matrix& lower = llt.matrixLLT();
  double s = 0.0;
  for (Eigen::Index i = 0; i < lower.rows(); ++i) s += std::log(lower(i, i));
  return 2.0 * s;
}

}  // namespace detail

inline EffectiveDesign effective_design(const DeviceState& dev) {
  return EffectiveDesign{dev.sync.gram + dev.local_gram, dev.sync.reward_vec + dev.local_reward_vec};
}

/// Solves V theta = u~ by Cholesky. Throws NumericalError if V is not PD,
/// which means the sync state was not post-processed.
inline Vector ridge_estimate(const Matrix& gram, const Vector& reward_vec) {
  require(gram.rows() == gram.cols() && gram.rows() == reward_vec.size(),
          "ridge_estimate: dimension mismatch");
  return detail::factorize_pd(gram, "ridge_estimate").solve(reward_vec);
}

inline ConfidenceEllipsoid confidence_ellipsoid(const DeviceState& dev, double radius) {
  auto design = effective_design(dev);
  Vector center = ridge_estimate(design.gram, design.reward_vec);
  return ConfidenceEllipsoid{std::move(center), std::move(design.gram), radius};
}

/// Scores closer than this (relative) count as tied. Exactly symmetric
/// candidates otherwise get ranked by rounding noise.
inline constexpr double kScoreTieTolerance = 1e-12;

/// UCB rule: argmax_x <center, x> + radius * ||x||_{V^-1}. Lowest index wins ties.
inline ActionChoice select_action(const ConfidenceEllipsoid& ell, std::span<const Vector> actions) {
  require(!actions.empty(), "select_action: empty decision set");
  const auto llt = detail::factorize_pd(ell.shape, "select_action");
  const Eigen::Index d = ell.shape.rows();
  Matrix stacked(d, static_cast<Eigen::Index>(actions.size()));
  for (std::size_t k = 0; k < actions.size(); ++k) stacked.col(static_cast<Eigen::Index>(k)) = actions[k];
  // ||x||_{V^-1}^2 = ||L^-1 x||^2 with V = L L^T
  const Matrix whitened = llt.matrixL().solve(stacked);

  ActionChoice best;
  best.score = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < actions.size(); ++k) {
    const auto col = static_cast<Eigen::Index>(k);
    const double score = ell.center.dot(stacked.col(col)) + ell.radius * whitened.col(col).norm();
    if (k == 0 || score > best.score + kScoreTieTolerance * std::max(1.0, std::abs(best.score))) {
      best.score = score;
      best.index = k;
    }
  }
  best.action = actions[best.index];
  return best;
}

inline void record_observation(DeviceState& dev, const Vector& action, double reward) {
  require(action.size() == dev.dimension(), "record_observation: dimension mismatch");
  dev.local_gram.noalias() += action * action.transpose();
  dev.local_reward_vec += reward * action;
}

/// Event trigger, evaluated before the current observation is recorded:
///   log det(V + x x^T + (gamma_max - gamma_min) I) - log det(S) >= D / dt
/// with D / 0 = +inf, so a device never fires with rounds_since_sync == 0.
inline bool sync_trigger(const DeviceState& dev, const Vector& action, double gamma_max,
                         double gamma_min, double threshold_D) {
  require(gamma_max >= gamma_min && gamma_min > 0.0, "sync_trigger: need gamma_max >= gamma_min > 0");
  require(threshold_D > 0.0, "sync_trigger: threshold must be positive");
  if (dev.rounds_since_sync == 0 || std::isinf(threshold_D)) return false;
  Matrix grown = dev.sync.gram + dev.local_gram;
  grown.noalias() += action * action.transpose();
  grown.diagonal().array() += gamma_max - gamma_min;
  const double gain = detail::log_det_pd(grown, "sync_trigger") -
                      detail::log_det_pd(dev.sync.gram, "sync_trigger (sync gram)");
  return gain >= threshold_D / static_cast<double>(dev.rounds_since_sync);
}

/// Installs a broadcast and clears everything observed since the last one.
inline void apply_sync(DeviceState& dev, const SyncState& broadcast) {
  dev.sync = broadcast;
  dev.local_gram.setZero();
  dev.local_reward_vec.setZero();
  dev.rounds_since_sync = 0;
}

inline void advance_without_sync(DeviceState& dev) { ++dev.rounds_since_sync; }

}  // namespace fedbandit
