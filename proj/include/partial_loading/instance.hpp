#pragma once

// A scenario bound to one fading realization: per-model requester queues
// sorted by unit upload cost, batch caps and load times. Every scheduler and
// the oracle evaluate latencies through this view.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <span>
#include <vector>

#include "partial_loading/latency.hpp"
#include "partial_loading/scenario.hpp"

namespace partial_loading {

struct SolveOptions {
  LoadingMode mode = LoadingMode::ParameterSharing;
  BandwidthPolicy bandwidth = BandwidthPolicy::optimal();
};

struct ModelQueue {
  std::vector<std::size_t> users;  // schedulable requesters, ascending unit cost
  std::vector<double> costs;       // their unit costs
  std::size_t cap = 0;             // batch-size cap, 0 when the model is unservable
};

class ServiceModel {
 public:
  ServiceModel(const Scenario& scenario, const FadingRealization& fading, SolveOptions options = {})
      : scenario_(&scenario), fading_(fading), options_(options) {
    validate_scenario(scenario);
    if (fading_.gains.size() != scenario.users.size())
      throw InvalidInput("fading realization has " + std::to_string(fading_.gains.size()) + " gains for " +
                         std::to_string(scenario.users.size()) + " users");
    const auto& lib = scenario.library;
    const std::size_t n_models = lib.model_count();
    requests_ = request_indices(scenario);
    unit_costs_.resize(scenario.users.size());
    for (std::size_t u = 0; u < scenario.users.size(); ++u)
      unit_costs_[u] = unit_upload_cost(scenario.users[u], scenario.env, fading_.gains[u]);

    queues_.resize(n_models);
    for (std::size_t u = 0; u < scenario.users.size(); ++u)
      if (schedulable(unit_costs_[u])) queues_[requests_[u]].users.push_back(u);
    for (std::size_t m = 0; m < n_models; ++m) {
      auto& q = queues_[m];
      std::stable_sort(q.users.begin(), q.users.end(),
                       [&](std::size_t a, std::size_t b) { return unit_costs_[a] < unit_costs_[b]; });
      for (auto u : q.users) q.costs.push_back(unit_costs_[u]);
      q.cap = batch_cap(max_batch_or_zero(lib.model(m), scenario.hw), options_.bandwidth);
    }

    load_s_.assign((n_models + 1) * n_models, 0.0);
    for (std::size_t next = 0; next < n_models; ++next) {
      load_s_[next] = load_time(scenario.hw, load_bytes(lib, options_.mode, std::nullopt, next));
      for (std::size_t prev = 0; prev < n_models; ++prev)
        load_s_[(prev + 1) * n_models + next] = load_time(scenario.hw, load_bytes(lib, options_.mode, prev, next));
    }
  }

  const Scenario& scenario() const noexcept { return *scenario_; }
  const FadingRealization& fading() const noexcept { return fading_; }
  const SolveOptions& options() const noexcept { return options_; }
  std::size_t model_count() const noexcept { return queues_.size(); }
  const ModelQueue& queue(std::size_t model) const { return queues_.at(model); }
  double unit_cost(std::size_t user) const { return unit_costs_.at(user); }
  std::size_t requested_model(std::size_t user) const { return requests_.at(user); }

  double load_seconds(std::optional<std::size_t> prev, std::size_t next) const {
    const std::size_t row = prev ? *prev + 1 : 0;
    return load_s_[row * model_count() + next];
  }

  double service_latency_after_load(double load_s, std::size_t model, std::size_t k) const {
    const auto& q = queues_[model];
    const auto& spec = scenario_->library.model(model);
    return partial_loading::service_latency(q.costs, k, q.cap, load_s, spec.mu_s, spec.beta_s, options_.bandwidth);
  }

  double service_latency(std::optional<std::size_t> prev, std::size_t model, std::size_t k) const {
    return service_latency_after_load(k == 0 ? 0.0 : load_seconds(prev, model), model, k);
  }

  bool fits(double latency_s, int slots) const {
    return latency_s <= slots * scenario_->slot_s + kDeadlineSlack;
  }

  // Fewest whole slots that accommodate latency_s.
  int slots_needed(double latency_s) const {
    if (latency_s <= kDeadlineSlack) return 0;
    int slots = static_cast<int>(std::ceil((latency_s - kDeadlineSlack) / scenario_->slot_s));
    while (slots > 0 && fits(latency_s, slots - 1)) --slots;
    while (!fits(latency_s, slots)) ++slots;
    return slots;
  }

  // Largest k whose service latency after a load of load_s fits in `slots`.
  // Service latency is nondecreasing in k, so binary search applies.
  std::size_t max_served(double load_s, std::size_t model, int slots) const {
    const auto& q = queues_[model];
    if (slots <= 0 || q.cap == 0 || q.users.empty()) return 0;
    std::size_t lo = 0, hi = q.users.size();
    while (lo < hi) {
      const std::size_t mid = lo + (hi - lo + 1) / 2;
      if (fits(service_latency_after_load(load_s, model, mid), slots))
        lo = mid;
      else
        hi = mid - 1;
    }
    return lo;
  }

  std::size_t max_served(std::optional<std::size_t> prev, std::size_t model, int slots) const {
    return max_served(load_seconds(prev, model), model, slots);
  }

  // The k cheapest requesters split into batches, all full except the last.
  std::vector<std::vector<std::size_t>> split_batches(std::size_t model, std::size_t k) const {
    const auto& q = queues_[model];
    std::vector<std::vector<std::size_t>> batches;
    for (std::size_t start = 0; start < k; start += q.cap)
      batches.emplace_back(q.users.begin() + static_cast<std::ptrdiff_t>(start),
                           q.users.begin() + static_cast<std::ptrdiff_t>(std::min(k, start + q.cap)));
    return batches;
  }

 private:
  const Scenario* scenario_;
  FadingRealization fading_;
  SolveOptions options_;
  std::vector<std::size_t> requests_;
  std::vector<double> unit_costs_;
  std::vector<ModelQueue> queues_;
  std::vector<double> load_s_;  // row 0: cold start, row p+1: after model p
};

}  // namespace partial_loading
