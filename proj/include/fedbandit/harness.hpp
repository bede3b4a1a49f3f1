#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <functional>
#include <limits>
#include <mutex>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "fedbandit/bandit.hpp"
#include "fedbandit/bounds.hpp"
#include "fedbandit/channel.hpp"
#include "fedbandit/core.hpp"
#include "fedbandit/env.hpp"
#include "fedbandit/rng.hpp"

namespace fedbandit {

struct BoundParams {
  double alpha = 0.05;
  double C = 1.0;
  double c = 1.0;
  double nu = std::numbers::e;
  double gamma_floor = 1e-3;
  double lambda_reg = 1.0;      // regularizer of the noise-free configuration
  double sigma_reward = 0.5;    // sub-Gaussian constant of [0, 1] rewards
  double S_bound = 1.0;
  double L_bound = 1.0;
  int nominal_sync_rounds = 0;  // n used for a-priori sigma_t; 0 means d
  std::optional<double> sigma_override;
};

enum class PsdPolicy { eigen_floor, fixed_shift };

/// What the configured SNR is relative to.
///   cell_edge: received SNR of a device at distance R with unit fading,
///              sigma_n^2 = P0 G0 (R / k0)^(-2 zeta) / SNR
///   transmit:  sigma_n^2 = P0 / SNR
enum class SnrReference { cell_edge, transmit };

struct Sweep {
  std::string param;                // snr | d | m | t
  std::vector<std::string> values;  // "inf" / "error-free" for the noise-free SNR point
};

struct SimConfig {
  int num_devices_M = 50;
  int horizon_T = 1000;
  int dimension_d = 10;
  int num_actions_K = 20;
  std::optional<double> snr_db = 80.0;  // empty: error-free aggregation
  double p0_dbm = 23.0;
  SnrReference snr_reference = SnrReference::cell_edge;
  ChannelConfig channel{};  // noise_variance is derived from snr_db and p0_dbm
  BoundParams bound_params{};
  std::optional<double> threshold_override;  // +inf disables synchronization
  PsdPolicy psd_policy = PsdPolicy::eigen_floor;
  double psd_epsilon = 1e-6;
  double psd_relative = 1e-10;
  double deep_fade_ratio = 1e-12;
  int trials = 100;
  std::uint64_t base_seed = 1;
  std::optional<Sweep> sweep;

  bool error_free() const { return !snr_db.has_value(); }

  void validate() const {
    require(num_devices_M >= 1 && horizon_T >= 1 && dimension_d >= 2 && num_actions_K >= 1 &&
                trials >= 1,
            "SimConfig: M, T, K, trials must be >= 1 and d >= 2");
    require(num_actions_K <= dimension_d * dimension_d, "SimConfig: K must be <= d^2");
    require(!threshold_override || *threshold_override > 0.0, "SimConfig: threshold must be positive");
  }
};

/// Received power of a cell-edge device with unit small-scale fading.
inline double cell_edge_power(const ChannelConfig& ch) {
  return ch.transmit_power_P0 * std::pow(path_gain(ch, ch.cell_radius_R), 2);
}

/// Channel parameters with the noise variance implied by snr_db (zero for
/// error-free runs).
inline ChannelConfig resolved_channel(const SimConfig& cfg) {
  ChannelConfig ch = cfg.channel;
  ch.transmit_power_P0 = dbm_to_watts(cfg.p0_dbm);
  if (cfg.error_free()) {
    ch.noise_variance = 0.0;
  } else {
    const double reference =
        cfg.snr_reference == SnrReference::transmit ? ch.transmit_power_P0 : cell_edge_power(ch);
    ch.noise_variance = reference / db_to_linear(*cfg.snr_db);
  }
  return ch;
}

/// A-priori effective noise std sigma_n / sqrt(rho_hat), where rho_hat uses the
/// mean squared path gain of the placed devices and a payload-norm proxy
/// L^2 T / n.
inline double nominal_sigma(const ChannelConfig& ch, std::span<const double> distances, int d, int T,
                            int n, double L) {
  double mean_gain = 0.0;
  for (double k : distances) mean_gain += std::pow(path_gain(ch, k), 2);
  mean_gain /= static_cast<double>(distances.size());
  const double payload_norm = L * L * static_cast<double>(T) / static_cast<double>(n);
  const double rho_hat = mean_gain * static_cast<double>(payload_length(d)) * ch.transmit_power_P0 /
                         (payload_norm * payload_norm);
  return std::sqrt(ch.noise_variance / rho_hat);
}

struct TransmissionRecord {
  int round = 0;
  int device = 0;
  double energy = 0.0;  // ||alpha_i p_i||^2
  double budget = 0.0;  // K P0
  bool is_argmin = false;
};

/// Optional observation points inside a trial. Rounds are 1-based.
struct TrialHooks {
  std::function<void(int round, int device, std::size_t action)> on_action;
  std::function<void(const TransmissionRecord&)> on_transmission;
  std::function<void(int round, std::span<const DeviceState> devices, const SyncState& server)> on_sync;
};

struct RegretTrace {
  std::vector<double> cumulative_regret;  // per round, summed over devices
  std::vector<int> sync_rounds;           // 1-based rounds in which a sync fired
  std::vector<double> sigma_t_log;        // realized sqrt(sigma_n^2 / rho_t) per sync
  std::uint64_t trial_seed = 0;
  int deep_fades = 0;
  NoiseBounds noise_bounds;  // what the algorithm ran with
  double threshold = 0.0;
};

/// Parameters a trial's devices use: noise bounds and the trigger threshold.
struct TrialTheory {
  NoiseBounds nb;
  double threshold = 0.0;
};

inline TrialTheory trial_theory(const SimConfig& cfg, const ChannelConfig& ch,
                                std::span<const double> distances) {
  const auto& bp = cfg.bound_params;
  const int d = cfg.dimension_d;
  const int n = bp.nominal_sync_rounds > 0 ? bp.nominal_sync_rounds : d;
  TrialTheory th;
  if (cfg.error_free()) {
    th.nb = error_free_bounds(bp.lambda_reg, d, bp.alpha);
  } else {
    const double sigma = bp.sigma_override
                             ? *bp.sigma_override
                             : nominal_sigma(ch, distances, d, cfg.horizon_T, n, bp.L_bound);
    th.nb = sigma > 0.0 ? compute_noise_bounds(sigma, d, n, cfg.num_devices_M,
                                               {bp.alpha, bp.C, bp.c, bp.gamma_floor})
                        : error_free_bounds(bp.lambda_reg, d, bp.alpha);
  }
  th.threshold = cfg.threshold_override ? *cfg.threshold_override
                                        : threshold_D(cfg.horizon_T, d, th.nb, bp.L_bound, bp.nu);
  return th;
}

namespace detail {

template <typename F>
auto with_context(const std::string& where, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const NumericalError& e) {
    throw NumericalError(where + ": " + e.what());
  } catch (const PreconditionError& e) {
    throw PreconditionError(where + ": " + e.what());
  }
}

inline std::string at(std::size_t trial, int round, int device = -1) {
  std::string s = "trial " + std::to_string(trial) + " round " + std::to_string(round);
  if (device >= 0) s += " device " + std::to_string(device);
  return s;
}

}  // namespace detail

/// One run of the federated protocol. Deterministic in (cfg, trial_index).
inline RegretTrace run_trial(const SimConfig& cfg, std::size_t trial_index, const TrialHooks& hooks = {}) {
  cfg.validate();
  const int M = cfg.num_devices_M;
  const int T = cfg.horizon_T;
  const int d = cfg.dimension_d;
  const auto& bp = cfg.bound_params;

  RegretTrace trace;
  trace.trial_seed = trial_seed(cfg.base_seed, trial_index);
  const Environment env =
      generate_environment(d, cfg.num_actions_K, stream_seed(trace.trial_seed, Stream::environment));
  Rng placement_rng = make_stream(trace.trial_seed, Stream::placement);
  Rng fading_rng = make_stream(trace.trial_seed, Stream::fading);
  Rng noise_rng = make_stream(trace.trial_seed, Stream::channel_noise);
  Rng reward_rng = make_stream(trace.trial_seed, Stream::rewards);

  const ChannelConfig ch = resolved_channel(cfg);
  const std::vector<double> distances = draw_device_distances(ch, M, placement_rng);
  const TrialTheory theory = trial_theory(cfg, ch, distances);
  trace.noise_bounds = theory.nb;
  trace.threshold = theory.threshold;
  const double gamma_max = theory.nb.gamma_max;
  const double gamma_min = theory.nb.gamma_min;

  ShiftPolicy policy = EigenvalueFloor{cfg.psd_epsilon, cfg.psd_relative};
  if (cfg.psd_policy == PsdPolicy::fixed_shift)
    policy = FixedShift{gamma_max, cfg.psd_epsilon, cfg.psd_relative};

  std::vector<DeviceState> devices(M, DeviceState::initial(d, gamma_min));
  SyncState server = SyncState::initial(d, gamma_min);

  trace.cumulative_regret.reserve(T);
  double cumulative = 0.0;
  std::vector<Payload> payloads(M);

  for (int t = 1; t <= T; ++t) {
    const double beta = beta_bar(static_cast<double>(t), theory.nb, bp.sigma_reward, bp.S_bound, bp.L_bound);
    bool fire = false;
    for (int i = 0; i < M; ++i) {
      detail::with_context(detail::at(trial_index, t, i), [&] {
        DeviceState& dev = devices[i];
        const ConfidenceEllipsoid ell = confidence_ellipsoid(dev, beta);
        const ActionChoice choice = select_action(ell, env.actions);
        const RewardSample y = sample_reward(env, choice.action, reward_rng, i, t);
        cumulative += env.gap(choice.index);
        if (hooks.on_action) hooks.on_action(t, i, choice.index);
        if (!fire) fire = sync_trigger(dev, choice.action, gamma_max, gamma_min, theory.threshold);
        record_observation(dev, choice.action, y.value);
      });
    }
    trace.cumulative_regret.push_back(cumulative);

    if (!fire) {
      for (auto& dev : devices) advance_without_sync(dev);
      continue;
    }

    detail::with_context(detail::at(trial_index, t), [&] {
      for (int i = 0; i < M; ++i) payloads[i] = pack(devices[i].local_gram, devices[i].local_reward_vec);
      Payload received;
      if (cfg.error_free()) {
        received = ideal_aggregate(payloads);
        trace.sigma_t_log.push_back(0.0);
      } else {
        ChannelBlock block = make_block(ch, draw_channel(ch, distances, fading_rng), payloads, distances,
                                        cfg.deep_fade_ratio);
        trace.deep_fades += block.deep_fades;
        trace.sigma_t_log.push_back(std::sqrt(block.effective_noise_variance(ch)));
        if (hooks.on_transmission) {
          const double budget = static_cast<double>(payload_length(d)) * ch.transmit_power_P0;
          std::size_t argmin = 0;
          double best = std::numeric_limits<double>::infinity();
          for (int i = 0; i < M; ++i) {
            const double energy = payloads[i].squared_norm();
            if (energy == 0.0) continue;
            const double ratio = std::norm(block.coefficients[i]) * budget / energy;
            if (ratio < best) {
              best = ratio;
              argmin = static_cast<std::size_t>(i);
            }
          }
          for (int i = 0; i < M; ++i)
            hooks.on_transmission({t, i, transmit_energy(block.precoders[i], payloads[i]), budget,
                                   static_cast<std::size_t>(i) == argmin});
        }
        received = aircomp_aggregate(ch, block, payloads, noise_rng);
      }
      const Unpacked sum = unpack(received, d);
      server = server_postprocess(server.gram + sum.gram, server.reward_vec + sum.vec, policy);
      for (auto& dev : devices) apply_sync(dev, server);
      trace.sync_rounds.push_back(t);
      if (hooks.on_sync) hooks.on_sync(t, devices, server);
    });
  }
  return trace;
}

/// Returns cfg with one sweep coordinate overridden.
inline SimConfig apply_sweep_point(SimConfig cfg, const std::string& param, const std::string& value) {
  try {
    if (param == "snr") {
      if (value == "inf" || value == "error-free")
        cfg.snr_db.reset();
      else
        cfg.snr_db = std::stod(value);
    } else if (param == "d") {
      cfg.dimension_d = std::stoi(value);
    } else if (param == "m") {
      cfg.num_devices_M = std::stoi(value);
    } else if (param == "t") {
      cfg.horizon_T = std::stoi(value);
    } else if (param == "k") {
      cfg.num_actions_K = std::stoi(value);
    } else {
      throw PreconditionError("unknown sweep parameter '" + param + "' (expected snr, d, m or t)");
    }
  } catch (const std::logic_error& e) {
    if (dynamic_cast<const PreconditionError*>(&e)) throw;
    throw PreconditionError("bad value '" + value + "' for sweep parameter '" + param + "'");
  }
  cfg.sweep.reset();
  return cfg;
}

struct SweepPointResult {
  std::string param;
  std::string value;
  SimConfig config;
  std::vector<double> mean_cum_regret;
  std::vector<double> stderr_cum_regret;
  std::vector<double> mean_sync_count;
  std::vector<double> final_regrets;  // per trial, ordered by trial index
  std::vector<std::uint64_t> trial_seeds;
  std::vector<std::size_t> sync_counts;
  double max_sigma_t = 0.0;  // largest realized effective noise std across trials
  int deep_fades = 0;
  NoiseBounds matched_bounds;
  TheoryParams theory;

  double final_mean() const { return mean_cum_regret.back(); }
  double final_stderr() const { return stderr_cum_regret.back(); }
};

struct ExperimentResults {
  std::vector<SweepPointResult> points;
};

/// Runs `fn(i)` for i in [0, n) on `threads` workers; `fn` writes to slot i only.
inline void parallel_for(std::size_t n, unsigned threads, const std::function<void(std::size_t)>& fn) {
  threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(n)));
  if (threads == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::thread> pool;
  for (unsigned w = 0; w < threads; ++w)
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(failure_mutex);
          if (!failure) failure = std::current_exception();
        }
      }
    });
  for (auto& th : pool) th.join();
  if (failure) std::rethrow_exception(failure);
}

/// Aggregates `cfg.trials` traces of one configuration. The reduction runs in
/// trial order, so the result does not depend on `threads`.
inline SweepPointResult run_point(const SimConfig& cfg, unsigned threads = 1) {
  cfg.validate();
  std::vector<RegretTrace> traces(cfg.trials);
  parallel_for(traces.size(), threads, [&](std::size_t i) { traces[i] = run_trial(cfg, i); });

  const int T = cfg.horizon_T;
  const double n = static_cast<double>(cfg.trials);
  SweepPointResult r;
  r.config = cfg;
  r.mean_cum_regret.assign(T, 0.0);
  r.stderr_cum_regret.assign(T, 0.0);
  r.mean_sync_count.assign(T, 0.0);

  for (const auto& tr : traces) {
    std::size_t k = 0;
    for (int t = 0; t < T; ++t) {
      r.mean_cum_regret[t] += tr.cumulative_regret[t];
      while (k < tr.sync_rounds.size() && tr.sync_rounds[k] <= t + 1) ++k;
      r.mean_sync_count[t] += static_cast<double>(k);
    }
    r.final_regrets.push_back(tr.cumulative_regret.back());
    r.trial_seeds.push_back(tr.trial_seed);
    r.sync_counts.push_back(tr.sync_rounds.size());
    r.deep_fades += tr.deep_fades;
    for (double s : tr.sigma_t_log) r.max_sigma_t = std::max(r.max_sigma_t, s);
  }
  for (int t = 0; t < T; ++t) {
    r.mean_cum_regret[t] /= n;
    r.mean_sync_count[t] /= n;
  }
  if (cfg.trials > 1) {
    for (int t = 0; t < T; ++t) {
      double ss = 0.0;
      for (const auto& tr : traces) {
        const double dev = tr.cumulative_regret[t] - r.mean_cum_regret[t];
        ss += dev * dev;
      }
      r.stderr_cum_regret[t] = std::sqrt(ss / (n - 1.0)) / std::sqrt(n);
    }
  }

  // Bound evaluated at the largest realized effective noise of this point.
  const auto& bp = cfg.bound_params;
  const int d = cfg.dimension_d;
  const int syncs_floor = static_cast<int>(
      *std::min_element(r.sync_counts.begin(), r.sync_counts.end()));
  const int n_sync = std::max(1, syncs_floor);
  if (cfg.error_free() || r.max_sigma_t == 0.0)
    r.matched_bounds = cfg.error_free() ? error_free_bounds(bp.lambda_reg, d, bp.alpha)
                                        : traces.front().noise_bounds;
  else
    r.matched_bounds = compute_noise_bounds(r.max_sigma_t, d, n_sync, cfg.num_devices_M,
                                            {bp.alpha, bp.C, bp.c, bp.gamma_floor});
  r.theory = theory_params(T, cfg.num_devices_M, d, r.matched_bounds, bp.sigma_reward, bp.S_bound,
                           bp.L_bound, bp.nu);
  return r;
}

/// All sweep points (or the single configured point) of an experiment.
inline ExperimentResults run_experiment(const SimConfig& cfg, unsigned threads = 1) {
  ExperimentResults out;
  if (!cfg.sweep || cfg.sweep->values.empty()) {
    SimConfig single = cfg;
    single.sweep.reset();
    out.points.push_back(run_point(single, threads));
    out.points.back().param = "none";
    out.points.back().value = "";
    return out;
  }
  for (const auto& value : cfg.sweep->values) {
    out.points.push_back(run_point(apply_sweep_point(cfg, cfg.sweep->param, value), threads));
    out.points.back().param = cfg.sweep->param;
    out.points.back().value = value;
  }
  return out;
}

}  // namespace fedbandit
