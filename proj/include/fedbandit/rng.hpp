#pragma once

#include <cstdint>
#include <random>

namespace fedbandit {

using Rng = std::mt19937_64;

/// SplitMix64 finalizer. Used to derive well-separated stream seeds.
constexpr std::uint64_t mix_seed(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t combine_seed(std::uint64_t seed, std::uint64_t salt) noexcept {
  return mix_seed(seed ^ mix_seed(salt + 0x632BE59BD9B4E019ULL));
}

/// Independent substreams of one trial. Each stream owns a distinct salt so
/// that e.g. changing the number of devices does not perturb reward draws
/// through a shared generator.
enum class Stream : std::uint64_t {
  environment = 1,
  placement = 2,
  fading = 3,
  channel_noise = 4,
  rewards = 5,
};

/// Seed of trial `trial_index` under `base_seed`:
///   trial_seed = combine_seed(base_seed, trial_index)
constexpr std::uint64_t trial_seed(std::uint64_t base_seed, std::uint64_t trial_index) noexcept {
  return combine_seed(base_seed, trial_index);
}

/// Seed of one substream of a trial:
///   stream_seed = combine_seed(trial_seed, stream_id)
constexpr std::uint64_t stream_seed(std::uint64_t trial, Stream stream) noexcept {
  return combine_seed(trial, static_cast<std::uint64_t>(stream));
}

inline Rng make_stream(std::uint64_t trial, Stream stream) {
  return Rng(stream_seed(trial, stream));
}

}  // namespace fedbandit
