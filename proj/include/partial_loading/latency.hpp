#pragma once

// Loading, compute and memory models, and the latency of serving the k
// cheapest requesters of one model in consecutive batches.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "partial_loading/errors.hpp"
#include "partial_loading/model_library.hpp"
#include "partial_loading/radio.hpp"

namespace partial_loading {

// Absolute slack on every deadline comparison.
inline constexpr double kDeadlineSlack = 1e-9;

struct HardwareProfile {
  double disk_bw_bytes_per_s = 2e9;
  double disk_fixed_s = 1e-3;
  double pcie_bw_bytes_per_s = 16e9;
  Bytes gpu_mem_bytes = Bytes{8} << 30;
};

inline void check_hardware(const HardwareProfile& hw) {
  if (!(hw.disk_bw_bytes_per_s > 0.0) || !(hw.pcie_bw_bytes_per_s > 0.0) || hw.gpu_mem_bytes == 0 ||
      !(hw.disk_fixed_s >= 0.0))
    throw InvalidInput("hardware bandwidths and GPU memory must be > 0, fixed disk overhead >= 0");
}

enum class LoadingMode { ParameterSharing, IndependentLoading };

inline std::string_view to_string(LoadingMode mode) {
  return mode == LoadingMode::ParameterSharing ? "sharing" : "independent";
}

// How a batch's bandwidth is split: the uplink-time-minimizing proportional
// split, or r equal sub-channels with at most r users per batch.
struct BandwidthPolicy {
  int equal_subchannels = 0;  // 0 selects the optimal split

  static BandwidthPolicy optimal() { return {}; }
  static BandwidthPolicy equal(int r) {
    if (r < 1) throw InvalidInput("sub-channel count must be >= 1");
    return {r};
  }
  bool is_equal() const noexcept { return equal_subchannels > 0; }
  friend bool operator==(const BandwidthPolicy&, const BandwidthPolicy&) = default;
};

// Disk -> host memory (affine: fixed seek overhead plus bandwidth term) then
// host -> GPU over PCIe. Zero bytes costs nothing.
inline double load_time(const HardwareProfile& hw, Bytes bytes) {
  if (bytes == 0) return 0.0;
  const double s = static_cast<double>(bytes);
  return hw.disk_fixed_s + s / hw.disk_bw_bytes_per_s + s / hw.pcie_bw_bytes_per_s;
}

inline double compute_time(const ModelSpec& model, std::size_t batch_size) {
  if (batch_size == 0) return 0.0;
  return model.mu_s * static_cast<double>(batch_size) + model.beta_s;
}

inline Bytes peak_memory(const ModelSpec& model, std::size_t batch_size) {
  return model.weight_bytes + static_cast<Bytes>(batch_size) * model.activation_bytes_per_sample;
}

// Largest batch that fits in GPU memory; throws when even one sample does not.
inline std::size_t max_batch(const ModelSpec& model, const HardwareProfile& hw) {
  if (peak_memory(model, 1) > hw.gpu_mem_bytes)
    throw ModelUnservable("model '" + model.id + "' does not fit in GPU memory with batch size 1");
  if (model.activation_bytes_per_sample == 0) return std::numeric_limits<std::size_t>::max();
  return static_cast<std::size_t>((hw.gpu_mem_bytes - model.weight_bytes) / model.activation_bytes_per_sample);
}

// max_batch, with unservable models mapped to 0.
inline std::size_t max_batch_or_zero(const ModelSpec& model, const HardwareProfile& hw) {
  try {
    return max_batch(model, hw);
  } catch (const ModelUnservable&) {
    return 0;
  }
}

inline std::size_t batch_cap(std::size_t b_max, const BandwidthPolicy& policy) {
  if (policy.is_equal()) return std::min(b_max, static_cast<std::size_t>(policy.equal_subchannels));
  return b_max;
}

// Bytes that must be loaded to switch from `prev` to `next`. The resident
// model never reloads; independent loading ignores sharing otherwise.
inline Bytes load_bytes(const ModelLibrary& lib, LoadingMode mode, std::optional<std::size_t> prev,
                        std::size_t next) {
  if (prev && *prev == next) return 0;
  if (mode == LoadingMode::IndependentLoading) return shared_delta_size(lib, std::nullopt, next);
  return shared_delta_size(lib, prev, next);
}

struct BatchLatency {
  double upload_s = 0.0;
  double load_s = 0.0;
  double compute_s = 0.0;
  double total_s = 0.0;
};

struct BatchPlan {
  std::size_t model = 0;
  std::vector<std::size_t> user_ids;  // ascending unit cost
  std::optional<std::size_t> prev_model;
};

// Latency of one batch: uplink under `policy`, the load delta from the
// previously resident model, then the batched forward pass.
inline BatchLatency batch_latency(const BatchPlan& plan, std::span<const UserSpec> users,
                                  std::span<const double> gains, const ChannelEnv& env,
                                  const HardwareProfile& hw, const ModelLibrary& lib,
                                  LoadingMode mode = LoadingMode::ParameterSharing,
                                  const BandwidthPolicy& policy = BandwidthPolicy::optimal()) {
  if (plan.user_ids.empty()) throw InvalidInput("batch has no users");
  std::vector<double> costs;
  for (auto u : plan.user_ids) {
    if (u >= users.size()) throw UnknownId("user index " + std::to_string(u) + " out of range");
    const double p = unit_upload_cost(users[u], env, gains[u]);
    if (!schedulable(p)) throw InvalidInput("user " + std::to_string(users[u].id) + " has zero rate");
    costs.push_back(p);
  }
  const auto& model = lib.model(plan.model);
  if (plan.user_ids.size() > batch_cap(max_batch(model, hw), policy))
    throw InvalidInput("batch exceeds the maximum batch size of model '" + model.id + "'");
  BatchLatency out;
  out.upload_s = policy.is_equal() ? equal_bandwidth(costs, policy.equal_subchannels).min_upload_s
                                   : optimal_bandwidth(costs).min_upload_s;
  out.load_s = load_time(hw, load_bytes(lib, mode, plan.prev_model, plan.model));
  out.compute_s = compute_time(model, plan.user_ids.size());
  out.total_s = out.upload_s + out.load_s + out.compute_s;
  return out;
}

// Latency of serving the k cheapest requesters of a model back to back:
// ceil(k / cap) batches, all full except the last, the model loaded once
// before the first forward pass. `sorted_costs` is ascending.
//
// Optimal split: each batch uploads in the sum of its unit costs, so the
// uplink term is the sum of the k smallest costs. Equal split: each batch
// uploads in r times its largest cost.
inline double service_latency(std::span<const double> sorted_costs, std::size_t k, std::size_t cap,
                              double load_s, double mu_s, double beta_s,
                              const BandwidthPolicy& policy = BandwidthPolicy::optimal()) {
  if (k == 0) return 0.0;
  if (k > sorted_costs.size()) throw InvalidInput("more users than requesters");
  if (cap == 0) throw ModelUnservable("model cannot hold a single sample");
  const std::size_t batches = (k + cap - 1) / cap;
  double upload = 0.0;
  if (policy.is_equal()) {
    for (std::size_t n = 1; n <= batches; ++n) upload += policy.equal_subchannels * sorted_costs[std::min(n * cap, k) - 1];
  } else {
    for (std::size_t j = 0; j < k; ++j) upload += sorted_costs[j];
  }
  const double compute = mu_s * static_cast<double>(k) + beta_s * static_cast<double>(batches);
  return upload + load_s + compute;
}

// Convenience form resolving the load delta and batch cap from the library.
inline double service_latency(const ModelLibrary& lib, const HardwareProfile& hw, std::optional<std::size_t> prev,
                              std::size_t model, std::size_t k, std::span<const double> sorted_costs,
                              LoadingMode mode = LoadingMode::ParameterSharing,
                              const BandwidthPolicy& policy = BandwidthPolicy::optimal()) {
  if (k == 0) return 0.0;
  const auto& spec = lib.model(model);
  const std::size_t cap = batch_cap(max_batch(spec, hw), policy);
  return service_latency(sorted_costs, k, cap, load_time(hw, load_bytes(lib, mode, prev, model)), spec.mu_s,
                         spec.beta_s, policy);
}

}  // namespace partial_loading
