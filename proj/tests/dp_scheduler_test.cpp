#include <gtest/gtest.h>

#include <chrono>
#include <functional>
#include <set>

#include "test_support.hpp"

using namespace pl_test;

namespace {

// Best count over ascending subsequences of a cluster's models, each loaded
// after the previously chosen one, with every split of the slot budget.
std::size_t brute_cluster(const ServiceModel& service, const ClusterOrder& order, int budget) {
  std::size_t best = 0;
  std::function<void(std::size_t, std::size_t, int, std::size_t)> go = [&](std::size_t prev, std::size_t from,
                                                                           int left, std::size_t served) {
    best = std::max(best, served);
    for (std::size_t i = from; i <= order.size(); ++i)
      for (int own = 1; own <= left; ++own) {
        const std::size_t k = service.max_served(cluster_load_s(order, prev, i), order.models[i], own);
        if (k == 0) continue;
        go(i, i + 1, left - own, served + k);
      }
  };
  go(0, 1, budget, 0);
  return best;
}

std::size_t brute_all_clusters(const ServiceModel& service, const std::vector<ClusterOrder>& orders, int budget) {
  std::function<std::size_t(std::size_t, int)> go = [&](std::size_t m, int left) -> std::size_t {
    if (m == orders.size()) return 0;
    std::size_t best = 0;
    for (int own = 0; own <= left; ++own)
      best = std::max(best, brute_cluster(service, orders[m], own) + go(m + 1, left - own));
    return best;
  };
  return go(0, budget);
}

std::vector<std::size_t> prefix_of_models(const ModelLibrary& lib) {
  std::vector<std::size_t> prefix(lib.model_count(), 0);
  for (const auto& c : classify_sharing(lib).clusters)
    for (const auto& mem : c.members) prefix[lib.model_index(mem.model_id)] = mem.shared_prefix_len;
  return prefix;
}

}  // namespace

TEST(QTable, WorkedExample) {
  const auto s = worked_example(10);
  const ServiceModel service(s, unit_gains(s));
  const auto orders = cluster_orders(service);
  ASSERT_EQ(orders.size(), 1u);
  const auto q = build_q(service, orders[0]);
  // Cold start: one user needs 4+2+1+2 = 9 ms, both need 13 ms.
  EXPECT_EQ(q.at(0, 1, 1), 1u);
  EXPECT_EQ(q.at(0, 1, 2), 2u);
  EXPECT_EQ(q.at(0, 1, 10), 2u);
  EXPECT_EQ(q.at(0, 1, 0), 0u);
}

TEST(QTable, TightSlotGivesZero) {
  auto s = worked_example(10);
  s.slot_s = 0.005;
  const ServiceModel service(s, unit_gains(s));
  const auto q = build_q(service, cluster_orders(service)[0]);
  EXPECT_EQ(q.at(0, 1, 1), 0u);
  EXPECT_EQ(q.at(0, 1, 2), 1u);
  EXPECT_EQ(q.at(0, 1, 3), 2u);
}

TEST(QTable, MonotoneInSlotsAndMatchesLinearScan) {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const auto s = small_random_scenario(seed);
    const auto f = sample_fading(seed, s.users.size());
    const ServiceModel service(s, f);
    for (const auto& order : cluster_orders(service)) {
      const auto q = build_q(service, order);
      for (std::size_t i = 1; i <= order.size(); ++i)
        for (std::size_t prev = 0; prev < i; ++prev)
          for (int t = 1; t <= s.horizon_slots; ++t) {
            EXPECT_LE(q.at(prev, i, t - 1), q.at(prev, i, t));
            const double load = cluster_load_s(order, prev, i);
            std::size_t k = 0;
            while (k < service.queue(order.models[i]).users.size() &&
                   service.fits(service.service_latency_after_load(load, order.models[i], k + 1), t))
              ++k;
            ASSERT_EQ(q.at(prev, i, t), k);
          }
    }
  }
}

TEST(GTable, SingleModelEqualsColdStartQ) {
  const auto s = worked_example(10);
  const ServiceModel service(s, unit_gains(s));
  const auto order = cluster_orders(service)[0];
  const auto q = build_q(service, order);
  const auto g = build_g(service, order, q);
  for (int t = 0; t <= 10; ++t) EXPECT_EQ(g.at(1, t), q.at(0, 1, t));
}

TEST(GTable, MatchesBruteForceOverAscendingSubsequences) {
  for (std::uint64_t seed = 1; seed <= 150; ++seed) {
    const auto s = generate_tiny_scenario(seed, SharingKind::BackboneSharing);
    const auto f = sample_fading(seed, s.users.size());
    const ServiceModel service(s, f);
    for (const auto& order : cluster_orders(service)) {
      const auto g = build_g(service, order, build_q(service, order));
      for (int t = 0; t <= s.horizon_slots; ++t) {
        ASSERT_EQ(g.at(order.size(), t), brute_cluster(service, order, t)) << "seed " << seed << " slots " << t;
        for (std::size_t i = 1; i <= order.size(); ++i) EXPECT_GE(g.at(i, t), g.at(i - 1, t));
        if (t > 0) {
          EXPECT_GE(g.at(order.size(), t), g.at(order.size(), t - 1));
        }
      }
    }
  }
}

TEST(FTable, BoundariesAndBruteForce) {
  for (std::uint64_t seed = 1; seed <= 100; ++seed) {
    const auto s = generate_tiny_scenario(seed, SharingKind::BackboneSharing);
    const auto fading = sample_fading(seed, s.users.size());
    const ServiceModel service(s, fading);
    const auto tables = build_tables(service);
    for (std::size_t m = 0; m < tables.f.rows(); ++m) EXPECT_EQ(tables.f.at(m, 0), 0u);
    for (int t = 0; t <= s.horizon_slots; ++t) EXPECT_EQ(tables.f.at(0, t), 0u);
    for (int t = 1; t <= s.horizon_slots; ++t) EXPECT_GE(tables.f.at(tables.f.rows() - 1, t), tables.f.at(tables.f.rows() - 1, t - 1));
    EXPECT_EQ(tables.optimum(), brute_all_clusters(service, tables.clusters, s.horizon_slots)) << "seed " << seed;
  }
}

TEST(FTable, SingleClusterCollapsesToG) {
  const auto s = worked_example(10);
  const ServiceModel service(s, unit_gains(s));
  const auto tables = build_tables(service);
  ASSERT_EQ(tables.f.rows(), 2u);
  for (int t = 0; t <= 10; ++t) EXPECT_EQ(tables.f.at(1, t), tables.g[0].at(1, t));
}

TEST(Reconstruct, NothingToServe) {
  auto s = worked_example(10);
  s.users.clear();
  const auto sched = solve_bs(s, FadingRealization::unit(0));
  EXPECT_TRUE(sched.batches.empty());
  EXPECT_EQ(sched.served_count, 0u);
}

TEST(Reconstruct, FiveUsersAtCapTwo) {
  std::vector<UserSpec> users;
  for (std::uint32_t k = 0; k < 5; ++k) users.push_back(user_with_cost(k, "m", 1e-3 * (k + 1)));
  const auto s = make_scenario(single_model_library(), users, linear_hw(6'500'000), 10);
  const auto sched = solve_bs(s, unit_gains(s));
  ASSERT_EQ(sched.batches.size(), 3u);
  EXPECT_EQ(sched.batches[0].users, (std::vector<std::size_t>{0, 1}));
  EXPECT_EQ(sched.batches[1].users, (std::vector<std::size_t>{2, 3}));
  EXPECT_EQ(sched.batches[2].users, (std::vector<std::size_t>{4}));
  EXPECT_EQ(sched.served_count, 5u);
  EXPECT_GT(sched.batches[0].latency.load_s, 0.0);
  EXPECT_EQ(sched.batches[1].latency.load_s, 0.0);
}

TEST(Reconstruct, RandomSchedulesValidateAndMatchTables) {
  for (std::uint64_t seed = 1; seed <= 40; ++seed) {
    const auto s = small_random_scenario(seed);
    const auto fading = sample_fading(seed, s.users.size());
    const auto sol = solve_bs_detailed(s, fading);
    const auto report = validate_schedule(sol.schedule, s);
    EXPECT_TRUE(report.feasible);
    EXPECT_EQ(report.served_count, sol.tables.optimum());
    EXPECT_EQ(sol.schedule.served_count, sol.tables.optimum());
  }
}

TEST(Reconstruct, ClusterContiguousAscendingPrefixWithSuffixLoads) {
  for (std::uint64_t seed = 1; seed <= 40; ++seed) {
    const auto s = small_random_scenario(seed);
    const auto fading = sample_fading(seed, s.users.size());
    const auto sched = solve_bs(s, fading);
    const auto labels = cluster_labels(s.library);
    EXPECT_TRUE(is_cluster_contiguous(sched, labels));
    const auto prefix = prefix_of_models(s.library);
    std::optional<std::size_t> prev;
    std::set<std::size_t> finished;
    for (const auto& b : sched.batches) {
      if (prev && *prev != b.model) {
        finished.insert(*prev);
        EXPECT_FALSE(finished.count(b.model)) << "model served in two runs";
        if (labels[*prev] == labels[b.model]) {
          EXPECT_LE(prefix[*prev], prefix[b.model]);
        }
      }
      const Bytes expected =
          prev == b.model ? 0 : load_bytes(s.library, LoadingMode::ParameterSharing, prev, b.model);
      if (prev && labels[*prev] == labels[b.model] && *prev != b.model) {
        const auto sizes = s.library.layer_sizes(b.model);
        Bytes suffix = 0;
        for (std::size_t l = prefix[*prev]; l < sizes.size(); ++l) suffix += sizes[l];
        EXPECT_EQ(expected, suffix);
      }
      EXPECT_NEAR(b.latency.load_s, load_time(s.hw, expected), 1e-15);
      prev = b.model;
    }
  }
}

TEST(Solve, GeneralLibraryIsWrongCase) {
  const auto s = small_random_scenario(3, SharingKind::General);
  const auto fading = sample_fading(3, s.users.size());
  EXPECT_THROW(solve_bs(s, fading), WrongCase);
  EXPECT_NO_THROW(solve_bs(s, fading, {LoadingMode::IndependentLoading}));
}

TEST(Solve, SharingNeverServesFewerThanIndependent) {
  for (std::uint64_t seed = 1; seed <= 60; ++seed) {
    const auto s = small_random_scenario(seed);
    const auto fading = sample_fading(seed, s.users.size());
    const auto shared = solve_bs(s, fading);
    const auto independent = solve_bs(s, fading, {LoadingMode::IndependentLoading});
    EXPECT_GE(shared.served_count, independent.served_count) << "seed " << seed;
  }
}

TEST(Solve, MoreSlotsNeverServeFewer) {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    auto s = small_random_scenario(seed);
    const auto fading = sample_fading(seed, s.users.size());
    std::size_t last = 0;
    for (int t = 1; t <= 40; t += 3) {
      s.horizon_slots = t;
      const auto n = solve_bs(s, fading).served_count;
      EXPECT_GE(n, last);
      last = n;
    }
  }
}

TEST(Solve, EqualBandwidthValidates) {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const auto s = small_random_scenario(seed);
    const auto fading = sample_fading(seed, s.users.size());
    const auto sched = solve_bs(s, fading, {LoadingMode::ParameterSharing, BandwidthPolicy::equal(5)});
    EXPECT_TRUE(validate_schedule(sched, s).feasible);
    for (const auto& b : sched.batches) EXPECT_LE(b.users.size(), 5u);
    EXPECT_LE(sched.served_count, solve_bs(s, fading).served_count);
  }
}

TEST(Performance, DefaultScaleSolvesUnderASecond) {
  const ScenarioParams params;
  const auto s = generate_scenario(params, 7);
  const auto fading = sample_fading(7, s.users.size());
  const auto start = std::chrono::steady_clock::now();
  const auto sched = solve_bs(s, fading);
  const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  EXPECT_LT(elapsed, 1.0);
  EXPECT_GT(sched.served_count, 0u);
}

TEST(Performance, GrowthInHorizonIsPolynomial) {
  ScenarioParams params;
  params.deadline_s = 0.35;
  const auto s1 = generate_scenario(params, 9);
  params.deadline_s = 1.4;
  const auto s4 = generate_scenario(params, 9);
  const auto fading = sample_fading(9, s1.users.size());
  auto time = [&](const Scenario& s) {
    const auto start = std::chrono::steady_clock::now();
    for (int rep = 0; rep < 3; ++rep) (void)solve_bs(s, fading);
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  };
  // Quadratic in the horizon; 4x horizon stays well below 64x time.
  EXPECT_LT(time(s4), 64.0 * time(s1) + 0.05);
}
