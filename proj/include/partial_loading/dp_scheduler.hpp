#pragma once

// Exact scheduler for backbone-sharing libraries. Clusters are served one
// after another and the models of a cluster in ascending shared-prefix
// length, so no backbone layer is ever reloaded. Three value tables are
// filled bottom-up over integer slot budgets:
//
//   q[î][i][τ]  users model i serves in τ slots when loaded right after î
//   g[i][τ]     users the first i models of a cluster serve in τ slots
//   f[m][τ]     users the first m clusters serve in τ slots
//
// and the schedule is read back from the tables in reverse.

#include <algorithm>
#include <optional>
#include <vector>

#include "partial_loading/errors.hpp"
#include "partial_loading/instance.hpp"
#include "partial_loading/model_library.hpp"
#include "partial_loading/oracle.hpp"
#include "partial_loading/schedule.hpp"

namespace partial_loading {

// Dense table indexed [row][slot].
class SlotTable {
 public:
  SlotTable() = default;
  SlotTable(std::size_t rows, int horizon)
      : rows_(rows), cols_(static_cast<std::size_t>(horizon) + 1), data_(rows_ * cols_, 0) {}

  std::size_t& at(std::size_t row, int slot) { return data_[row * cols_ + static_cast<std::size_t>(slot)]; }
  std::size_t at(std::size_t row, int slot) const { return data_[row * cols_ + static_cast<std::size_t>(slot)]; }
  std::size_t rows() const noexcept { return rows_; }
  int horizon() const noexcept { return static_cast<int>(cols_) - 1; }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<std::size_t> data_;
};

// Models of one cluster in loading order. Position 0 is the "nothing loaded
// yet" sentinel; positions 1..I hold models ascending by shared prefix length.
struct ClusterOrder {
  std::vector<std::size_t> models;      // size I + 1, models[0] unused
  std::vector<std::size_t> prefix_len;  // size I + 1, prefix_len[0] = 0
  std::vector<std::vector<double>> suffix_load_s;  // [i][l]: load of layers l+1..L_i of model i

  std::size_t size() const noexcept { return models.size() - 1; }
};

struct QTable {
  std::size_t models = 0;
  int horizon = 0;
  std::vector<std::size_t> data;

  QTable(std::size_t n, int t) : models(n), horizon(t), data((n + 1) * (n + 1) * (static_cast<std::size_t>(t) + 1), 0) {}
  std::size_t& at(std::size_t prev, std::size_t i, int slots) {
    return data[(prev * (models + 1) + i) * (static_cast<std::size_t>(horizon) + 1) + static_cast<std::size_t>(slots)];
  }
  std::size_t at(std::size_t prev, std::size_t i, int slots) const {
    return data[(prev * (models + 1) + i) * (static_cast<std::size_t>(horizon) + 1) + static_cast<std::size_t>(slots)];
  }
};

struct DpTables {
  std::vector<ClusterOrder> clusters;
  std::vector<SlotTable> g;  // per cluster, rows 0..I_m
  SlotTable f;               // rows 0..M

  std::size_t optimum() const { return f.at(f.rows() - 1, f.horizon()); }
};

// Clusters and loading orders the DP works over. Independent loading treats
// every model as its own cluster with nothing shared.
inline std::vector<ClusterOrder> cluster_orders(const ServiceModel& service) {
  const auto& scenario = service.scenario();
  const auto& lib = scenario.library;
  std::vector<std::vector<std::pair<std::size_t, std::size_t>>> groups;  // (model, prefix)
  if (service.options().mode == LoadingMode::IndependentLoading) {
    for (std::size_t m = 0; m < lib.model_count(); ++m) groups.push_back({{m, 0}});
  } else {
    const auto cls = classify_sharing(lib);
    if (cls.kind != SharingKind::BackboneSharing)
      throw WrongCase("library is not backbone-sharing (" + cls.reason +
                      "); use the greedy scheduler or independent loading");
    for (const auto& c : cls.clusters) {
      auto& group = groups.emplace_back();
      for (const auto& mem : c.members) group.emplace_back(lib.model_index(mem.model_id), mem.shared_prefix_len);
      std::stable_sort(group.begin(), group.end(), [](const auto& a, const auto& b) { return a.second < b.second; });
    }
  }
  std::vector<ClusterOrder> orders;
  for (const auto& group : groups) {
    ClusterOrder order;
    order.models.push_back(0);
    order.prefix_len.push_back(0);
    order.suffix_load_s.emplace_back();
    for (const auto& [model, prefix] : group) {
      order.models.push_back(model);
      order.prefix_len.push_back(prefix);
      const auto sizes = lib.layer_sizes(model);
      std::vector<double> suffix(sizes.size() + 1, 0.0);
      Bytes tail = 0;
      for (std::size_t l = sizes.size(); l-- > 0;) {
        tail += sizes[l];
        suffix[l] = load_time(scenario.hw, tail);
      }
      order.suffix_load_s.push_back(std::move(suffix));
    }
    orders.push_back(std::move(order));
  }
  return orders;
}

// Load seconds of the i-th model of a cluster when the prev-th was resident:
// everything above the previous model's shared prefix.
inline double cluster_load_s(const ClusterOrder& order, std::size_t prev, std::size_t i) {
  return order.suffix_load_s[i][order.prefix_len[prev]];
}

inline QTable build_q(const ServiceModel& service, const ClusterOrder& order) {
  const int horizon = service.scenario().horizon_slots;
  const std::size_t n = order.size();
  QTable q(n, horizon);
  for (std::size_t i = 1; i <= n; ++i)
    for (std::size_t prev = 0; prev < i; ++prev)
      for (int slots = 1; slots <= horizon; ++slots)
        q.at(prev, i, slots) = service.max_served(cluster_load_s(order, prev, i), order.models[i], slots);
  return q;
}

inline SlotTable build_g(const ServiceModel& service, const ClusterOrder& order, const QTable& q) {
  const int horizon = service.scenario().horizon_slots;
  const std::size_t n = order.size();
  SlotTable g(n + 1, horizon);
  for (std::size_t i = 1; i <= n; ++i) {
    for (int budget = 1; budget <= horizon; ++budget) {
      std::size_t best = std::max(q.at(0, i, budget), g.at(i - 1, budget));
      for (std::size_t prev = 1; prev < i; ++prev) {
        for (int own = 1; own < budget; ++own) {
          const int rest = budget - own;
          const std::size_t before = g.at(prev, rest);
          // prev must be the model actually loaded last within `rest`.
          if (before == 0 || before == g.at(prev - 1, rest)) continue;
          best = std::max(best, before + q.at(prev, i, own));
        }
      }
      g.at(i, budget) = best;
    }
  }
  return g;
}

inline SlotTable build_f(const std::vector<SlotTable>& g, int horizon) {
  SlotTable f(g.size() + 1, horizon);
  for (std::size_t m = 1; m <= g.size(); ++m) {
    const std::size_t last = g[m - 1].rows() - 1;
    for (int budget = 1; budget <= horizon; ++budget) {
      std::size_t best = 0;
      for (int own = 0; own <= budget; ++own) best = std::max(best, f.at(m - 1, budget - own) + g[m - 1].at(last, own));
      f.at(m, budget) = best;
    }
  }
  return f;
}

inline DpTables build_tables(const ServiceModel& service) {
  DpTables tables;
  tables.clusters = cluster_orders(service);
  for (const auto& order : tables.clusters) {
    const QTable q = build_q(service, order);  // dropped once g is built
    tables.g.push_back(build_g(service, order, q));
  }
  tables.f = build_f(tables.g, service.scenario().horizon_slots);
  return tables;
}

// Reads the batch sequence back from the tables. Ties go to the smaller slot
// allotment, then to the smaller model position.
inline Schedule reconstruct(const ServiceModel& service, const DpTables& tables) {
  std::vector<BatchAssignment> sequence;  // built back to front
  int budget = tables.f.horizon();
  for (std::size_t m = tables.clusters.size(); m > 0 && budget > 0; --m) {
    const auto& order = tables.clusters[m - 1];
    const auto& g = tables.g[m - 1];
    const std::size_t last = order.size();
    const std::size_t target = tables.f.at(m, budget);
    int cluster_slots = -1;
    for (int own = 0; own <= budget; ++own) {
      if (tables.f.at(m - 1, budget - own) + g.at(last, own) == target) {
        cluster_slots = own;
        break;
      }
    }
    if (cluster_slots < 0) throw InternalInconsistency("no cluster allotment reproduces f");

    std::size_t i = last;
    int slots = cluster_slots;
    while (i > 0 && slots > 0) {
      const std::size_t want = g.at(i, slots);
      // Candidates in tie order: skip model i (0 slots), then a predecessor
      // with growing allotment, then model i alone with every slot.
      std::optional<std::size_t> chosen_prev;
      int chosen_own = -1;
      std::size_t served = 0;
      if (g.at(i - 1, slots) == want) {
        chosen_own = 0;
      } else {
        for (int own = 1; own < slots && chosen_own < 0; ++own) {
          const int rest = slots - own;
          for (std::size_t prev = 1; prev < i; ++prev) {
            const std::size_t before = g.at(prev, rest);
            if (before == 0 || before == g.at(prev - 1, rest)) continue;
            const std::size_t k = service.max_served(cluster_load_s(order, prev, i), order.models[i], own);
            if (before + k == want) {
              chosen_prev = prev;
              chosen_own = own;
              served = k;
              break;
            }
          }
        }
        if (chosen_own < 0) {
          const std::size_t k = service.max_served(cluster_load_s(order, 0, i), order.models[i], slots);
          if (k != want) throw InternalInconsistency("no case of the cluster recursion reproduces g");
          chosen_prev = 0;
          chosen_own = slots;
          served = k;
        }
      }
      if (chosen_own == 0) {
        --i;
        continue;
      }
      auto batches = service.split_batches(order.models[i], served);
      for (auto it = batches.rbegin(); it != batches.rend(); ++it) sequence.push_back({order.models[i], *it});
      slots -= chosen_own;
      i = *chosen_prev;
    }
    budget -= cluster_slots;
  }
  std::reverse(sequence.begin(), sequence.end());
  auto schedule = assemble_schedule(service, sequence);
  if (schedule.served_count != tables.optimum())
    throw InternalInconsistency("reconstructed schedule serves " + std::to_string(schedule.served_count) +
                                " users, tables promise " + std::to_string(tables.optimum()));
  return schedule;
}

struct DpSolution {
  Schedule schedule;
  DpTables tables;
};

inline DpSolution solve_bs_detailed(const Scenario& scenario, const FadingRealization& fading,
                                    SolveOptions options = {}) {
  ServiceModel service(scenario, fading, options);
  DpSolution out;
  out.tables = build_tables(service);
  out.schedule = reconstruct(service, out.tables);
  const auto report = validate_schedule(out.schedule, scenario);
  if (!report.feasible)
    throw InternalInconsistency("DP schedule fails validation: " + report.violations.front().detail);
  return out;
}

// Optimal schedule for a backbone-sharing library (any library under
// independent loading). Throws WrongCase for general libraries with sharing.
inline Schedule solve_bs(const Scenario& scenario, const FadingRealization& fading, SolveOptions options = {}) {
  return solve_bs_detailed(scenario, fading, options).schedule;
}

}  // namespace partial_loading
