#pragma once

#include <optional>
#include <vector>

#include "partial_loading/instance.hpp"
#include "partial_loading/latency.hpp"
#include "partial_loading/radio.hpp"

namespace partial_loading {

struct ScheduledBatch {
  std::size_t model = 0;
  std::vector<std::size_t> users;  // user indices into Scenario::users
  std::vector<double> shares;      // bandwidth share of each user, same order
  BatchLatency latency;
};

// Ordered batch sequence with the fading gains it was computed under.
struct Schedule {
  std::vector<ScheduledBatch> batches;
  std::size_t served_count = 0;
  LoadingMode mode = LoadingMode::ParameterSharing;
  BandwidthPolicy bandwidth = BandwidthPolicy::optimal();
  std::vector<double> gains;

  double completion_s() const {
    double t = 0.0;
    for (const auto& b : batches) t += b.latency.total_s;
    return t;
  }
};

struct BatchAssignment {
  std::size_t model = 0;
  std::vector<std::size_t> users;
};

// Attaches bandwidth shares and per-batch latencies to a batch sequence.
inline Schedule assemble_schedule(const ServiceModel& service, const std::vector<BatchAssignment>& sequence) {
  Schedule schedule;
  schedule.mode = service.options().mode;
  schedule.bandwidth = service.options().bandwidth;
  schedule.gains = service.fading().gains;
  std::optional<std::size_t> prev;
  for (const auto& assignment : sequence) {
    if (assignment.users.empty()) continue;
    ScheduledBatch batch;
    batch.model = assignment.model;
    batch.users = assignment.users;
    std::vector<double> costs;
    for (auto u : batch.users) costs.push_back(service.unit_cost(u));
    const auto alloc = schedule.bandwidth.is_equal() ? equal_bandwidth(costs, schedule.bandwidth.equal_subchannels)
                                                     : optimal_bandwidth(costs);
    batch.shares = alloc.shares;
    const auto& spec = service.scenario().library.model(batch.model);
    batch.latency.upload_s = alloc.min_upload_s;
    batch.latency.load_s = service.load_seconds(prev, batch.model);
    batch.latency.compute_s = compute_time(spec, batch.users.size());
    batch.latency.total_s = batch.latency.upload_s + batch.latency.load_s + batch.latency.compute_s;
    schedule.served_count += batch.users.size();
    prev = batch.model;
    schedule.batches.push_back(std::move(batch));
  }
  return schedule;
}

}  // namespace partial_loading
