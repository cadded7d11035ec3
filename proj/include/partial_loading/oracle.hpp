#pragma once

// Ground truth: a constraint-by-constraint schedule validator and a
// brute-force search over batch sequences for tiny instances.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <numeric>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "partial_loading/errors.hpp"
#include "partial_loading/instance.hpp"
#include "partial_loading/latency.hpp"
#include "partial_loading/radio.hpp"
#include "partial_loading/scenario.hpp"
#include "partial_loading/schedule.hpp"

namespace partial_loading {

enum class Constraint { Deadline, SingleBatch, Memory, Homogeneity, Bandwidth };

inline std::string_view to_string(Constraint c) {
  switch (c) {
    case Constraint::Deadline: return "deadline";
    case Constraint::SingleBatch: return "single-batch";
    case Constraint::Memory: return "memory";
    case Constraint::Homogeneity: return "homogeneity";
    case Constraint::Bandwidth: return "bandwidth";
  }
  return "?";
}

struct Violation {
  Constraint constraint;
  std::size_t batch;
  std::string detail;
};

struct FeasibilityReport {
  bool feasible = true;
  std::size_t served_count = 0;
  double completion_s = 0.0;
  std::vector<Violation> violations;
};

// Recomputes every batch from the radio and latency formulas, using the
// gains stored in the schedule (unit gains when none are stored).
inline FeasibilityReport validate_schedule(const Schedule& schedule, const Scenario& scenario) {
  validate_scenario(scenario);
  const auto& lib = scenario.library;
  std::vector<double> gains = schedule.gains;
  if (gains.empty()) gains.assign(scenario.users.size(), 1.0);
  if (gains.size() != scenario.users.size()) throw InvalidInput("schedule gains do not match the user count");
  const auto requests = request_indices(scenario);

  FeasibilityReport report;
  auto violate = [&](Constraint c, std::size_t n, std::string detail) {
    report.violations.push_back({c, n, std::move(detail)});
  };

  std::set<std::size_t> seen;
  std::optional<std::size_t> prev;
  double elapsed = 0.0;
  std::size_t scheduled = 0;
  for (std::size_t n = 0; n < schedule.batches.size(); ++n) {
    const auto& batch = schedule.batches[n];
    if (batch.model >= lib.model_count()) throw UnknownId("batch " + std::to_string(n) + " names an unknown model");
    for (auto u : batch.users)
      if (u >= scenario.users.size()) throw UnknownId("batch " + std::to_string(n) + " names an unknown user");
    const auto& model = lib.model(batch.model);

    if (batch.users.empty()) violate(Constraint::Homogeneity, n, "batch schedules no user");
    for (auto u : batch.users) {
      if (requests[u] != batch.model)
        violate(Constraint::Homogeneity, n,
                "user " + std::to_string(scenario.users[u].id) + " requests '" + scenario.users[u].requested_model +
                    "', batch serves '" + model.id + "'");
      if (!seen.insert(u).second)
        violate(Constraint::SingleBatch, n, "user " + std::to_string(scenario.users[u].id) + " scheduled twice");
    }
    if (peak_memory(model, batch.users.size()) > scenario.hw.gpu_mem_bytes)
      violate(Constraint::Memory, n,
              "peak memory " + std::to_string(peak_memory(model, batch.users.size())) + " exceeds GPU memory");

    bool shares_ok = batch.shares.size() == batch.users.size();
    if (!shares_ok) violate(Constraint::Bandwidth, n, "share count does not match user count");
    double share_sum = 0.0;
    std::vector<double> costs, shares;
    for (std::size_t j = 0; shares_ok && j < batch.users.size(); ++j) {
      const double y = batch.shares[j];
      if (!(y > 0.0 && y <= 1.0))
        violate(Constraint::Bandwidth, n, "share " + std::to_string(y) + " outside (0, 1] for a scheduled user");
      share_sum += y;
      costs.push_back(unit_upload_cost(scenario.users[batch.users[j]], scenario.env, gains[batch.users[j]]));
      shares.push_back(y);
    }
    if (share_sum > 1.0 + 1e-12) violate(Constraint::Bandwidth, n, "shares sum to " + std::to_string(share_sum));
    if (schedule.bandwidth.is_equal() &&
        batch.users.size() > static_cast<std::size_t>(schedule.bandwidth.equal_subchannels))
      violate(Constraint::Bandwidth, n, "more users than equal sub-channels");

    const double upload = shares_ok ? batch_upload_time(costs, shares) : std::numeric_limits<double>::infinity();
    const double load = load_time(scenario.hw, load_bytes(lib, schedule.mode, prev, batch.model));
    elapsed += upload + load + compute_time(model, batch.users.size());
    if (!(elapsed <= scenario.deadline_s() + kDeadlineSlack * static_cast<double>(n + 1)))
      violate(Constraint::Deadline, n,
              "batch completes at " + std::to_string(elapsed) + " s, deadline " + std::to_string(scenario.deadline_s()) +
                  " s");
    scheduled += batch.users.size();
    prev = batch.model;
  }
  report.completion_s = elapsed;
  report.feasible = report.violations.empty();
  report.served_count = report.feasible ? scheduled : 0;
  return report;
}

// Users whose batch completes by the deadline when the schedule's shares are
// applied under `gains`. Used when scheduling and evaluation rates differ.
inline std::size_t served_within_deadline(const Schedule& schedule, const Scenario& scenario,
                                          std::span<const double> gains) {
  std::optional<std::size_t> prev;
  double elapsed = 0.0;
  std::size_t served = 0;
  for (std::size_t n = 0; n < schedule.batches.size(); ++n) {
    const auto& batch = schedule.batches[n];
    std::vector<double> costs;
    for (auto u : batch.users) costs.push_back(unit_upload_cost(scenario.users[u], scenario.env, gains[u]));
    elapsed += batch_upload_time(costs, batch.shares) +
               load_time(scenario.hw, load_bytes(scenario.library, schedule.mode, prev, batch.model)) +
               compute_time(scenario.library.model(batch.model), batch.users.size());
    if (!(elapsed <= scenario.deadline_s() + kDeadlineSlack * static_cast<double>(n + 1))) break;
    served += batch.users.size();
    prev = batch.model;
  }
  return served;
}

// Cluster label per model: backbone clusters when the library has that
// structure, otherwise every model on its own.
inline std::vector<std::size_t> cluster_labels(const ModelLibrary& lib) {
  std::vector<std::size_t> labels(lib.model_count());
  std::iota(labels.begin(), labels.end(), std::size_t{0});
  const auto cls = classify_sharing(lib);
  if (cls.kind != SharingKind::BackboneSharing) return labels;
  for (std::size_t c = 0; c < cls.clusters.size(); ++c)
    for (const auto& mem : cls.clusters[c].members) labels[lib.model_index(mem.model_id)] = c;
  return labels;
}

// True when the batches of every label form one consecutive run.
inline bool is_contiguous(const std::vector<std::size_t>& batch_labels) {
  std::set<std::size_t> closed;
  for (std::size_t n = 0; n < batch_labels.size(); ++n) {
    if (closed.count(batch_labels[n])) return false;
    if (n + 1 == batch_labels.size() || batch_labels[n + 1] != batch_labels[n]) closed.insert(batch_labels[n]);
  }
  return true;
}

inline bool is_cluster_contiguous(const Schedule& schedule, const std::vector<std::size_t>& labels) {
  std::vector<std::size_t> seq;
  for (const auto& b : schedule.batches) seq.push_back(labels.at(b.model));
  return is_contiguous(seq);
}

// ---------------------------------------------------------------------------
// Exhaustive search

// SlotAligned: every maximal run of same-model batches occupies a whole
// number of slots (the time-slotted model the DP optimizes). Continuous: only
// the cumulative completion time is compared with the deadline.
enum class TimeGrid { SlotAligned, Continuous };

struct SearchLimits {
  std::size_t max_users = 8;
  std::size_t max_models = 3;
  int max_slots = 30;
};

struct ExhaustiveOptions {
  SearchLimits limits;
  bool pruned = false;
  bool bound = true;  // skip branches that cannot beat the incumbent
  TimeGrid grid = TimeGrid::SlotAligned;
  SolveOptions solve;
};

struct ExhaustiveResult {
  std::size_t optimum = 0;
  Schedule witness;
  bool witness_cluster_contiguous = true;
  std::uint64_t nodes = 0;
};

// Upper bound on the number of batch sequences the search may visit.
inline double exhaustive_size_estimate(std::size_t users, std::size_t models, bool pruned) {
  if (pruned) {
    // Ordered selections of distinct models, each with up to `users` sizes.
    double total = 1.0, perm = 1.0;
    for (std::size_t j = 1; j <= models; ++j) {
      perm *= static_cast<double>(models - j + 1) * static_cast<double>(users);
      total += perm;
    }
    return total;
  }
  // sum_j C(K, j) * ordered-set-partitions(j)
  std::vector<double> fubini(users + 1, 0.0);
  fubini[0] = 1.0;
  for (std::size_t n = 1; n <= users; ++n) {
    double binom = 1.0;
    for (std::size_t k = 1; k <= n; ++k) {
      binom = binom * static_cast<double>(n - k + 1) / static_cast<double>(k);
      fubini[n] += binom * fubini[n - k];
    }
  }
  double total = 0.0, binom = 1.0;
  for (std::size_t j = 0; j <= users; ++j) {
    total += binom * fubini[j];
    binom = binom * static_cast<double>(users - j) / static_cast<double>(j + 1);
  }
  return total;
}

namespace detail {

class ExhaustiveSearch {
 public:
  ExhaustiveSearch(const ServiceModel& service, const ExhaustiveOptions& options, std::vector<std::size_t> labels)
      : service_(service), options_(options), labels_(std::move(labels)) {
    const auto& scenario = service.scenario();
    horizon_ = scenario.horizon_slots;
    deadline_ = scenario.deadline_s();
    request_mask_.assign(service.model_count(), 0);
    for (std::size_t m = 0; m < service.model_count(); ++m)
      for (auto u : service.queue(m).users) request_mask_[m] |= 1u << u;
    for (auto mask : request_mask_) schedulable_mask_ |= mask;
  }

  ExhaustiveResult run() {
    if (options_.pruned)
      search_pruned(0, std::nullopt, 0, 0.0, 0);
    else
      search_unpruned(schedulable_mask_, std::nullopt, 0, 0.0, 0.0, 0);
    ExhaustiveResult result;
    result.optimum = best_served_;
    result.witness = assemble_schedule(service_, best_path_);
    result.witness_cluster_contiguous = best_contiguous_;
    result.nodes = nodes_;
    return result;
  }

 private:
  bool path_contiguous() const {
    std::vector<std::size_t> seq;
    for (const auto& b : path_) seq.push_back(labels_[b.model]);
    return is_contiguous(seq);
  }

  // Keeps the current path if it beats the incumbent.
  void offer(std::size_t served) {
    if (served > best_served_ || (served == best_served_ && !best_contiguous_ && path_contiguous())) {
      best_served_ = served;
      best_path_ = path_;
      best_contiguous_ = path_contiguous();
    }
  }

  bool hopeless(std::size_t served, std::size_t still_available) const {
    if (!options_.bound) return false;
    const std::size_t bound = served + still_available;
    return bound < best_served_ || (bound == best_served_ && best_contiguous_);
  }

  // Slot-aligned bookkeeping: `committed` whole slots for closed runs plus the
  // open run of the previous model lasting `run_s`.
  bool admit(std::optional<std::size_t> prev, std::size_t model, int committed, double run_s, double elapsed,
             double t, int& next_committed, double& next_run, double& next_elapsed) const {
    next_elapsed = elapsed + t;
    if (options_.grid == TimeGrid::Continuous) {
      next_committed = 0;
      next_run = 0.0;
      return next_elapsed <= deadline_ + kDeadlineSlack;
    }
    if (prev && *prev == model) {
      next_committed = committed;
      next_run = run_s + t;
    } else {
      next_committed = committed + (prev ? service_.slots_needed(run_s) : 0);
      next_run = t;
    }
    return next_committed + service_.slots_needed(next_run) <= horizon_;
  }

  void search_unpruned(std::uint32_t remaining, std::optional<std::size_t> prev, int committed, double run_s,
                       double elapsed, std::size_t served) {
    ++nodes_;
    offer(served);
    if (hopeless(served, static_cast<std::size_t>(std::popcount(remaining)))) return;
    const auto policy = service_.options().bandwidth;
    for (std::size_t m = 0; m < service_.model_count(); ++m) {
      const auto& q = service_.queue(m);
      const std::uint32_t avail = remaining & request_mask_[m];
      if (q.cap == 0 || avail == 0) continue;
      const auto& spec = service_.scenario().library.model(m);
      const double load = service_.load_seconds(prev, m);
      for (std::uint32_t subset = avail; subset != 0; subset = (subset - 1) & avail) {
        const auto size = static_cast<std::size_t>(std::popcount(subset));
        if (size > q.cap) continue;
        double upload = 0.0, slowest = 0.0;
        std::vector<std::size_t> users;
        for (std::uint32_t bits = subset; bits != 0; bits &= bits - 1) {
          const auto u = static_cast<std::size_t>(std::countr_zero(bits));
          users.push_back(u);
          upload += service_.unit_cost(u);
          slowest = std::max(slowest, service_.unit_cost(u));
        }
        if (policy.is_equal()) upload = policy.equal_subchannels * slowest;
        const double t = upload + load + compute_time(spec, size);
        int next_committed;
        double next_run, next_elapsed;
        if (!admit(prev, m, committed, run_s, elapsed, t, next_committed, next_run, next_elapsed)) continue;
        path_.push_back({m, std::move(users)});
        search_unpruned(remaining & ~subset, m, next_committed, next_run, next_elapsed, served + size);
        path_.pop_back();
      }
    }
  }

  // Each model appears at most once, serving its k cheapest requesters in
  // full batches except the last.
  void search_pruned(std::uint32_t used_models, std::optional<std::size_t> prev, int committed, double elapsed,
                     std::size_t served) {
    ++nodes_;
    offer(served);
    std::size_t available = 0;
    for (std::size_t m = 0; m < service_.model_count(); ++m)
      if (!(used_models & (1u << m)) && service_.queue(m).cap > 0) available += service_.queue(m).users.size();
    if (hopeless(served, available)) return;
    for (std::size_t m = 0; m < service_.model_count(); ++m) {
      if (used_models & (1u << m)) continue;
      const auto& q = service_.queue(m);
      if (q.cap == 0) continue;
      for (std::size_t k = 1; k <= q.users.size(); ++k) {
        const double t = service_.service_latency(prev, m, k);
        int next_committed;
        double next_run, next_elapsed;
        // Each model forms exactly one run, so the run closes immediately.
        if (!admit(std::nullopt, m, committed, 0.0, elapsed, t, next_committed, next_run, next_elapsed)) break;
        if (options_.grid == TimeGrid::SlotAligned) next_committed += service_.slots_needed(next_run);
        const auto batches = service_.split_batches(m, k);
        for (const auto& b : batches) path_.push_back({m, b});
        search_pruned(used_models | (1u << m), m, next_committed, next_elapsed, served + k);
        path_.resize(path_.size() - batches.size());
      }
    }
  }

  const ServiceModel& service_;
  const ExhaustiveOptions& options_;
  std::vector<std::size_t> labels_;
  int horizon_ = 0;
  double deadline_ = 0.0;
  std::vector<std::uint32_t> request_mask_;
  std::uint32_t schedulable_mask_ = 0;
  std::vector<BatchAssignment> path_;
  std::vector<BatchAssignment> best_path_;
  std::size_t best_served_ = 0;
  bool best_contiguous_ = true;
  std::uint64_t nodes_ = 0;
};

}  // namespace detail

// Maximum served count over all batch sequences. Unpruned mode enumerates
// every assignment of users to ordered batches; pruned mode only sequences of
// distinct models serving sorted prefixes in full-except-last batches. Among
// optimal sequences a cluster-contiguous witness is preferred.
inline ExhaustiveResult exhaustive_search(const Scenario& scenario, const FadingRealization& fading,
                                          const ExhaustiveOptions& options = {}) {
  const std::size_t users = scenario.users.size();
  const std::size_t models = scenario.library.model_count();
  if (users > options.limits.max_users || models > options.limits.max_models ||
      scenario.horizon_slots > options.limits.max_slots || users > 31 || models > 31) {
    const double estimate = exhaustive_size_estimate(users, models, options.pruned);
    char estimate_text[32];
    std::snprintf(estimate_text, sizeof estimate_text, "%.3g", estimate);
    throw SearchRefused("instance (K=" + std::to_string(users) + ", I=" + std::to_string(models) +
                            ", T=" + std::to_string(scenario.horizon_slots) + ") exceeds exhaustive-search limits (K<=" +
                            std::to_string(options.limits.max_users) + ", I<=" + std::to_string(options.limits.max_models) +
                            ", T<=" + std::to_string(options.limits.max_slots) + "); estimated " +
                            estimate_text + " batch sequences",
                        estimate);
  }
  ServiceModel service(scenario, fading, options.solve);
  detail::ExhaustiveSearch search(service, options, cluster_labels(scenario.library));
  auto result = search.run();
  const auto report = validate_schedule(result.witness, scenario);
  if (!report.feasible || report.served_count != result.optimum)
    throw InternalInconsistency("exhaustive witness fails validation: " +
                                (report.violations.empty() ? std::string("count mismatch")
                                                           : report.violations.front().detail));
  return result;
}

}  // namespace partial_loading
