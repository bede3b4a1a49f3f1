#pragma once

#include <cmath>
#include <complex>
#include <cstddef>
#include <limits>
#include <random>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Eigenvalues>

#include "fedbandit/bandit.hpp"
#include "fedbandit/core.hpp"
#include "fedbandit/rng.hpp"

namespace fedbandit {

using Complex = std::complex<double>;

inline double dbm_to_watts(double dbm) { return std::pow(10.0, (dbm - 30.0) / 10.0); }
inline double db_to_linear(double db) { return std::pow(10.0, db / 10.0); }

/// Uplink parameters. Powers in watts, distances in meters.
struct ChannelConfig {
  double transmit_power_P0 = dbm_to_watts(23.0);
  double noise_variance = dbm_to_watts(23.0) / db_to_linear(80.0);
  double path_loss_G0 = std::pow(10.0, -3.35);
  double path_loss_exponent_zeta = 2.0;
  double reference_distance_k0 = 1.0;
  double cell_radius_R = 500.0;

  /// Noise variance follows from SNR = P0 / sigma_n^2.
  static ChannelConfig from_snr_db(double snr_db, double p0_dbm = 23.0) {
    ChannelConfig cfg;
    cfg.transmit_power_P0 = dbm_to_watts(p0_dbm);
    cfg.noise_variance = cfg.transmit_power_P0 / db_to_linear(snr_db);
    return cfg;
  }

  double snr() const { return transmit_power_P0 / noise_variance; }

  void validate() const {
    require(transmit_power_P0 > 0.0 && noise_variance >= 0.0 && path_loss_G0 > 0.0 &&
                path_loss_exponent_zeta > 0.0 && reference_distance_k0 > 0.0 && cell_radius_R > 0.0,
            "ChannelConfig: fields must be strictly positive");
  }
};

/// Flattened (U, u): upper triangle of U row-major with the diagonal, then u.
struct Payload {
  std::vector<double> slots;

  std::size_t size() const { return slots.size(); }
  double squared_norm() const {
    double s = 0.0;
    for (double v : slots) s += v * v;
    return s;
  }
};

/// K = (d^2 + 3d) / 2.
constexpr std::size_t payload_length(int dimension) {
  const auto d = static_cast<std::size_t>(dimension);
  return (d * d + 3 * d) / 2;
}

inline Payload pack(const Matrix& gram, const Vector& vec) {
  const Eigen::Index d = gram.rows();
  require(gram.cols() == d && vec.size() == d, "pack: dimension mismatch");
  const double scale = std::max(1.0, gram.cwiseAbs().maxCoeff());
  require(((gram - gram.transpose()).cwiseAbs().maxCoeff()) <= 1e-12 * scale,
          "pack: Gram matrix is not symmetric");
  Payload p;
  p.slots.reserve(payload_length(static_cast<int>(d)));
  for (Eigen::Index r = 0; r < d; ++r)
    for (Eigen::Index c = r; c < d; ++c) p.slots.push_back(gram(r, c));
  for (Eigen::Index i = 0; i < d; ++i) p.slots.push_back(vec[i]);
  return p;
}

struct Unpacked {
  Matrix gram;
  Vector vec;
};

/// Inverse of pack. Each off-diagonal slot is mirrored, so noise that hit a
/// slot shows up identically in (r, c) and (c, r).
inline Unpacked unpack(const Payload& p, int dimension) {
  require(dimension >= 1, "unpack: dimension must be positive");
  require(p.size() == payload_length(dimension),
          "unpack: payload has " + std::to_string(p.size()) + " slots, expected " +
              std::to_string(payload_length(dimension)));
  Unpacked out{Matrix(dimension, dimension), Vector(dimension)};
  std::size_t k = 0;
  for (int r = 0; r < dimension; ++r)
    for (int c = r; c < dimension; ++c) {
      out.gram(r, c) = p.slots[k];
      out.gram(c, r) = p.slots[k];
      ++k;
    }
  for (int i = 0; i < dimension; ++i) out.vec[i] = p.slots[k++];
  return out;
}

/// Static device placement: uniform in the disc of radius R.
inline std::vector<double> draw_device_distances(const ChannelConfig& cfg, int num_devices, Rng& rng) {
  require(num_devices >= 1, "draw_device_distances: need at least one device");
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<double> out;
  out.reserve(num_devices);
  while (static_cast<int>(out.size()) < num_devices) {
    const double k = cfg.cell_radius_R * std::sqrt(unit(rng));
    if (k > 0.0) out.push_back(k);
  }
  return out;
}

/// Large-scale amplitude gain sqrt(G0) (k / k0)^-zeta.
inline double path_gain(const ChannelConfig& cfg, double distance) {
  require(distance > 0.0, "path_gain: distance must be positive");
  return std::sqrt(cfg.path_loss_G0) * std::pow(distance / cfg.reference_distance_k0,
                                                -cfg.path_loss_exponent_zeta);
}

/// Standard circularly-symmetric complex Gaussian, E|h|^2 = 1.
inline Complex standard_complex_normal(Rng& rng) {
  std::normal_distribution<double> normal(0.0, std::sqrt(0.5));
  const double re = normal(rng);
  const double im = normal(rng);
  return {re, im};
}

/// Rayleigh block fading on top of path loss; one coefficient per device,
/// constant across the slots of a block.
inline std::vector<Complex> draw_channel(const ChannelConfig& cfg, std::span<const double> distances,
                                         Rng& rng) {
  std::vector<Complex> h;
  h.reserve(distances.size());
  for (double k : distances) {
    require(k > 0.0 && k <= cfg.cell_radius_R, "draw_channel: distance must lie in (0, R]");
    h.push_back(path_gain(cfg, k) * standard_complex_normal(rng));
  }
  return h;
}

/// rho_t = min_i |h_i|^2 K P0 / ||p_i||^2 over devices with nonzero payloads;
/// 1 when every payload is zero.
inline double denoising_factor(const ChannelConfig& cfg, std::span<const Complex> coefficients,
                               std::span<const Payload> payloads) {
  require(coefficients.size() == payloads.size() && !payloads.empty(),
          "denoising_factor: one coefficient per payload required");
  const std::size_t slots = payloads.front().size();
  double rho = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < payloads.size(); ++i) {
    require(payloads[i].size() == slots, "denoising_factor: payload lengths differ");
    const double gain = std::norm(coefficients[i]);
    if (gain == 0.0)
      throw NumericalError("denoising_factor: zero channel coefficient for device " +
                           std::to_string(i) + " (deep fade)");
    const double energy = payloads[i].squared_norm();
    if (energy == 0.0) continue;
    rho = std::min(rho, gain * static_cast<double>(slots) * cfg.transmit_power_P0 / energy);
  }
  return std::isinf(rho) ? 1.0 : rho;
}

/// Channel-inversion precoder sqrt(rho) h^H / |h|^2.
inline Complex inversion_precoder(Complex h, double rho) {
  return std::sqrt(rho) * std::conj(h) / std::norm(h);
}

/// Per-slot-block transmit energy ||alpha p||^2.
inline double transmit_energy(Complex precoder, const Payload& p) {
  return std::norm(precoder) * p.squared_norm();
}

struct ChannelBlock {
  std::vector<Complex> coefficients;
  std::vector<Complex> precoders;
  double denoising_factor = 1.0;
  int deep_fades = 0;  // devices with |h|^2 below the deep-fade floor

  /// Effective per-entry noise variance sigma_n^2 / rho.
  double effective_noise_variance(const ChannelConfig& cfg) const {
    return cfg.noise_variance / denoising_factor;
  }
};

/// Computes rho and the precoders for one sync round. Devices whose |h|^2 is
/// below `deep_fade_ratio` times the mean squared path gain are counted but
/// not truncated.
inline ChannelBlock make_block(const ChannelConfig& cfg, std::vector<Complex> coefficients,
                               std::span<const Payload> payloads, std::span<const double> distances = {},
                               double deep_fade_ratio = 1e-12) {
  ChannelBlock block;
  block.denoising_factor = denoising_factor(cfg, coefficients, payloads);
  double floor = 0.0;
  if (!distances.empty()) {
    double mean_gain = 0.0;
    for (double k : distances) mean_gain += std::pow(path_gain(cfg, k), 2);
    floor = deep_fade_ratio * mean_gain / static_cast<double>(distances.size());
  }
  block.precoders.reserve(coefficients.size());
  for (const Complex& h : coefficients) {
    if (std::norm(h) < floor) ++block.deep_fades;
    block.precoders.push_back(inversion_precoder(h, block.denoising_factor));
  }
  block.coefficients = std::move(coefficients);
  return block;
}

/// Superposition y = sum_i h_i alpha_i p_i + n over the K slots, then y / sqrt(rho),
/// real part. The additive noise has real-part variance sigma_n^2, giving an
/// effective per-slot noise N(0, sigma_n^2 / rho).
inline Payload aircomp_aggregate(const ChannelConfig& cfg, const ChannelBlock& block,
                                 std::span<const Payload> payloads, Rng& rng) {
  require(!payloads.empty() && payloads.size() == block.coefficients.size() &&
              payloads.size() == block.precoders.size(),
          "aircomp_aggregate: block does not match payloads");
  const std::size_t slots = payloads.front().size();
  std::vector<Complex> received(slots, Complex{0.0, 0.0});
  for (std::size_t i = 0; i < payloads.size(); ++i) {
    require(payloads[i].size() == slots, "aircomp_aggregate: payload lengths differ");
    const Complex gain = block.coefficients[i] * block.precoders[i];
    for (std::size_t k = 0; k < slots; ++k) received[k] += gain * payloads[i].slots[k];
  }
  const double sigma_n = std::sqrt(cfg.noise_variance);
  const double scale = 1.0 / std::sqrt(block.denoising_factor);
  Payload out;
  out.slots.resize(slots);
  if (sigma_n > 0.0) {
    std::normal_distribution<double> normal(0.0, sigma_n);
    for (std::size_t k = 0; k < slots; ++k) {
      const double re = normal(rng);
      const double im = normal(rng);
      received[k] += Complex{re, im};
    }
  }
  for (std::size_t k = 0; k < slots; ++k) out.slots[k] = (received[k] * scale).real();
  return out;
}

/// Noise-free aggregation: the exact slot-wise sum.
inline Payload ideal_aggregate(std::span<const Payload> payloads) {
  require(!payloads.empty(), "ideal_aggregate: no payloads");
  Payload out;
  out.slots.assign(payloads.front().size(), 0.0);
  for (const auto& p : payloads) {
    require(p.size() == out.size(), "ideal_aggregate: payload lengths differ");
    for (std::size_t k = 0; k < p.size(); ++k) out.slots[k] += p.slots[k];
  }
  return out;
}

/// Lift the spectrum so the minimum eigenvalue is at least
/// max(epsilon, relative * spectral radius). The relative part caps the
/// condition number so Cholesky stays reliable on very noisy grams.
struct EigenvalueFloor {
  double epsilon = 1e-6;
  double relative = 1e-10;
};

/// Always add shift * I, then fall back to the eigenvalue floor if that was
/// not enough.
struct FixedShift {
  double shift = 0.0;
  double epsilon = 1e-6;
  double relative = 1e-10;
};

using ShiftPolicy = std::variant<EigenvalueFloor, FixedShift>;

namespace detail {

inline void floor_spectrum(Matrix& gram, double epsilon, double relative) {
  if (!gram.allFinite()) throw NumericalError("server_postprocess: non-finite Gram matrix");
  Eigen::SelfAdjointEigenSolver<Matrix> solver(gram, Eigen::EigenvaluesOnly);
  if (solver.info() != Eigen::Success) throw NumericalError("server_postprocess: eigenvalue solver failed");
  const Vector& eig = solver.eigenvalues();
  const double lambda_min = eig.minCoeff();
  const double floor = std::max(epsilon, relative * eig.cwiseAbs().maxCoeff());
  if (lambda_min < floor) gram.diagonal().array() += floor - lambda_min;
}

}  // namespace detail

/// Turns the received (S_prev + aggregate) into a usable, positive definite
/// broadcast. The correction is always a nonnegative multiple of I.
inline SyncState server_postprocess(Matrix raw_gram, Vector raw_vec, const ShiftPolicy& policy = {}) {
  require(raw_gram.rows() == raw_gram.cols() && raw_gram.rows() == raw_vec.size(),
          "server_postprocess: dimension mismatch");
  if (const auto* fixed = std::get_if<FixedShift>(&policy)) {
    require(fixed->shift >= 0.0, "server_postprocess: fixed shift must be nonnegative");
    raw_gram.diagonal().array() += fixed->shift;
    detail::floor_spectrum(raw_gram, fixed->epsilon, fixed->relative);
  } else {
    const auto& floor = std::get<EigenvalueFloor>(policy);
    detail::floor_spectrum(raw_gram, floor.epsilon, floor.relative);
  }
  return SyncState{std::move(raw_gram), std::move(raw_vec)};
}

}  // namespace fedbandit
