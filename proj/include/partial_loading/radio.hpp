#pragma once

// FDMA uplink model: spectral rates, per-user unit upload cost, Rayleigh
// fading draws and the closed-form uplink-time-minimizing bandwidth split.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "partial_loading/errors.hpp"

namespace partial_loading {

struct UserSpec {
  std::uint32_t id = 0;
  double distance_m = 0.0;
  double data_bits = 0.0;
  double tx_psd_w_per_hz = 0.0;
  std::string requested_model;
};

struct ChannelEnv {
  double total_bandwidth_hz = 0.0;
  double noise_psd_w_per_hz = 0.0;
  double path_loss_exponent = 0.0;
};

// Per-user power gain multipliers |h_k|^2, unit mean under Rayleigh fading.
struct FadingRealization {
  std::vector<double> gains;

  static FadingRealization unit(std::size_t n_users) { return {std::vector<double>(n_users, 1.0)}; }
};

struct BandwidthAllocation {
  std::vector<double> shares;  // y_k of each scheduled user, same order as input
  double min_upload_s = 0.0;
};

inline double dbm_per_hz_to_w_per_hz(double dbm_per_hz) { return std::pow(10.0, (dbm_per_hz - 30.0) / 10.0); }

inline void check_user(const UserSpec& user) {
  if (!(user.distance_m > 0.0) || !(user.data_bits > 0.0) || !(user.tx_psd_w_per_hz > 0.0))
    throw InvalidInput("user " + std::to_string(user.id) + ": distance, data size and transmit PSD must be > 0");
}

inline void check_env(const ChannelEnv& env) {
  if (!(env.total_bandwidth_hz > 0.0) || !(env.noise_psd_w_per_hz > 0.0) || !(env.path_loss_exponent > 0.0))
    throw InvalidInput("channel bandwidth, noise PSD and path-loss exponent must be > 0");
}

// bits/s/Hz. gain = 1 gives the deterministic mean-path-loss rate.
inline double spectral_rate(const UserSpec& user, const ChannelEnv& env, double gain) {
  const double snr = gain * user.tx_psd_w_per_hz * std::pow(user.distance_m, -env.path_loss_exponent) /
                     env.noise_psd_w_per_hz;
  return std::log2(1.0 + snr);
}

// Upload seconds under the full bandwidth. +inf marks a user that cannot
// transmit in this realization.
inline double unit_upload_cost(const UserSpec& user, const ChannelEnv& env, double gain) {
  const double rate = spectral_rate(user, env, gain);
  if (!(rate > 0.0)) return std::numeric_limits<double>::infinity();
  return user.data_bits / (env.total_bandwidth_hz * rate);
}

inline bool schedulable(double unit_cost) { return std::isfinite(unit_cost); }

// Shares proportional to unit costs equalize all upload times at the sum of
// the unit costs, which is the minimum achievable maximum.
inline BandwidthAllocation optimal_bandwidth(std::span<const double> unit_costs) {
  BandwidthAllocation alloc;
  alloc.shares.assign(unit_costs.size(), 0.0);
  if (unit_costs.empty()) return alloc;
  double total = 0.0;
  for (double p : unit_costs) {
    if (!schedulable(p) || p < 0.0) throw InvalidInput("cannot allocate bandwidth to a user with zero rate");
    total += p;
  }
  for (std::size_t k = 0; k < unit_costs.size(); ++k) alloc.shares[k] = unit_costs[k] / total;
  alloc.min_upload_s = total;
  return alloc;
}

struct ScheduledUser {
  const UserSpec* user;
  double gain;
};

inline BandwidthAllocation optimal_bandwidth(std::span<const ScheduledUser> scheduled, const ChannelEnv& env) {
  std::vector<double> costs;
  costs.reserve(scheduled.size());
  for (const auto& s : scheduled) costs.push_back(unit_upload_cost(*s.user, env, s.gain));
  return optimal_bandwidth(costs);
}

// Equal split into r sub-channels of B/r each, one per user. Upload time is
// the slowest user's, r * max p_k.
inline BandwidthAllocation equal_bandwidth(std::span<const double> unit_costs, int subchannels) {
  if (subchannels < 1) throw InvalidInput("sub-channel count must be >= 1");
  if (unit_costs.size() > static_cast<std::size_t>(subchannels))
    throw InvalidInput("more users than sub-channels in one batch");
  BandwidthAllocation alloc;
  alloc.shares.assign(unit_costs.size(), 1.0 / subchannels);
  double slowest = 0.0;
  for (double p : unit_costs) slowest = std::max(slowest, p);
  alloc.min_upload_s = unit_costs.empty() ? 0.0 : subchannels * slowest;
  return alloc;
}

// Upload time of a batch for arbitrary shares: the slowest user finishes last.
inline double batch_upload_time(std::span<const double> unit_costs, std::span<const double> shares) {
  double worst = 0.0;
  for (std::size_t k = 0; k < unit_costs.size(); ++k) {
    const double t = shares[k] > 0.0 ? unit_costs[k] / shares[k] : std::numeric_limits<double>::infinity();
    worst = std::max(worst, t);
  }
  return worst;
}

template <class Rng>
FadingRealization sample_fading(Rng& rng, std::size_t n_users) {
  std::exponential_distribution<double> power(1.0);
  FadingRealization out;
  out.gains.reserve(n_users);
  for (std::size_t k = 0; k < n_users; ++k) out.gains.push_back(power(rng));
  return out;
}

inline FadingRealization sample_fading(std::uint64_t seed, std::size_t n_users) {
  std::mt19937_64 rng(seed);
  return sample_fading(rng, n_users);
}

}  // namespace partial_loading
