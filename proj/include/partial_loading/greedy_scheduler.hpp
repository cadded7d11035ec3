#pragma once

// One-step greedy scheduler for arbitrary libraries: repeatedly load the
// remaining model that serves the most users per slot given the model
// currently resident, then spend those slots on it.

#include <optional>
#include <set>
#include <vector>

#include "partial_loading/errors.hpp"
#include "partial_loading/instance.hpp"
#include "partial_loading/oracle.hpp"
#include "partial_loading/schedule.hpp"

namespace partial_loading {

// Users per slot as an exact fraction served / slots.
struct SlotRate {
  std::size_t served = 0;
  int slots = 0;

  double value() const { return slots == 0 ? 0.0 : static_cast<double>(served) / slots; }
  // a/b < c/d without rounding.
  friend bool operator<(const SlotRate& a, const SlotRate& b) {
    return static_cast<unsigned long long>(a.served) * static_cast<unsigned long long>(b.slots) <
           static_cast<unsigned long long>(b.served) * static_cast<unsigned long long>(a.slots);
  }
  friend bool same_rate(const SlotRate& a, const SlotRate& b) { return !(a < b) && !(b < a); }
};

// Best users-per-slot of `model` after `prev` within exactly `slots` slots.
inline SlotRate rate_value(const ServiceModel& service, std::optional<std::size_t> prev, std::size_t model,
                           int slots) {
  if (slots <= 0) return {};
  return {service.max_served(prev, model, slots), slots};
}

struct GreedyStep {
  std::size_t model = 0;
  SlotRate rate;
};

// The argmax over remaining models and slot counts 1..slots_left. Ties go to
// fewer slots, then the smaller model index. Nothing when no model can serve.
inline std::optional<GreedyStep> best_greedy_step(const ServiceModel& service, std::optional<std::size_t> prev,
                                                  const std::set<std::size_t>& remaining, int slots_left) {
  std::optional<GreedyStep> best;
  for (auto model : remaining) {
    for (int slots = 1; slots <= slots_left; ++slots) {
      const SlotRate r = rate_value(service, prev, model, slots);
      if (r.served == 0) continue;
      const bool better = !best || best->rate < r ||
                          (same_rate(best->rate, r) &&
                           (slots < best->rate.slots || (slots == best->rate.slots && model < best->model)));
      if (better) best = GreedyStep{model, r};
    }
  }
  return best;
}

inline Schedule solve_general(const Scenario& scenario, const FadingRealization& fading, SolveOptions options = {}) {
  ServiceModel service(scenario, fading, options);
  std::set<std::size_t> remaining;
  for (std::size_t m = 0; m < service.model_count(); ++m) remaining.insert(m);
  std::optional<std::size_t> prev;
  int elapsed = 0;
  const int horizon = scenario.horizon_slots;
  std::vector<BatchAssignment> sequence;
  while (elapsed < horizon && !remaining.empty()) {
    const auto step = best_greedy_step(service, prev, remaining, horizon - elapsed);
    if (!step) break;
    for (auto& batch : service.split_batches(step->model, step->rate.served))
      sequence.push_back({step->model, std::move(batch)});
    prev = step->model;
    remaining.erase(step->model);
    elapsed += step->rate.slots;
  }
  auto schedule = assemble_schedule(service, sequence);
  const auto report = validate_schedule(schedule, scenario);
  if (!report.feasible)
    throw InternalInconsistency("greedy schedule fails validation: " + report.violations.front().detail);
  return schedule;
}

}  // namespace partial_loading
