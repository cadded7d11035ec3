#include <gtest/gtest.h>

#include <random>

#include "test_support.hpp"

using namespace pl_test;

TEST(LoadTime, NothingToLoad) { EXPECT_EQ(load_time(HardwareProfile{}, 0), 0.0); }

TEST(LoadTime, HundredMegabytesOnDefaultHardware) {
  EXPECT_NEAR(load_time(HardwareProfile{}, 100'000'000), 0.001 + 0.05 + 0.00625, 1e-15);
}

TEST(LoadTime, Monotone) {
  const HardwareProfile hw;
  Bytes prev = 0;
  for (Bytes b : {Bytes{1}, Bytes{1000}, Bytes{1'000'000}, Bytes{50'000'000}, Bytes{900'000'000}}) {
    EXPECT_LE(load_time(hw, prev), load_time(hw, b));
    prev = b;
  }
}

TEST(ComputeTime, LinearInBatchSize) {
  const auto m = model_of("m", {"a"}, 1, 1e-3, 2e-3, 1);
  EXPECT_NEAR(compute_time(m, 2), 4e-3, 1e-15);
  EXPECT_EQ(compute_time(m, 0), 0.0);
  for (std::size_t b = 1; b < 20; ++b) EXPECT_NEAR(compute_time(m, b + 1) - compute_time(m, b), 1e-3, 1e-15);
}

TEST(Memory, MaxBatchFromPeakMemory) {
  HardwareProfile hw;
  hw.gpu_mem_bytes = 100;
  const auto m = model_of("m", {"a"}, 90, 0, 0, 5);
  EXPECT_EQ(peak_memory(m, 1), 95u);
  EXPECT_EQ(peak_memory(m, 2), 100u);
  EXPECT_EQ(peak_memory(m, 3), 105u);
  EXPECT_EQ(max_batch(m, hw), 2u);
  for (std::size_t b = 1; b < 10; ++b) EXPECT_LT(peak_memory(m, b), peak_memory(m, b + 1));
}

TEST(Memory, UnservableModel) {
  HardwareProfile hw;
  hw.gpu_mem_bytes = 80;
  const auto m = model_of("m", {"a"}, 90, 0, 0, 5);
  EXPECT_THROW(max_batch(m, hw), ModelUnservable);
  EXPECT_EQ(max_batch_or_zero(m, hw), 0u);
}

TEST(Memory, EqualBandwidthCapsBatch) {
  EXPECT_EQ(batch_cap(8, BandwidthPolicy::equal(5)), 5u);
  EXPECT_EQ(batch_cap(3, BandwidthPolicy::equal(5)), 3u);
  EXPECT_EQ(batch_cap(8, BandwidthPolicy::optimal()), 8u);
  EXPECT_THROW(BandwidthPolicy::equal(0), InvalidInput);
}

TEST(BatchLatency, ComponentsOfTheWorkedExample) {
  const auto s = worked_example(10);
  const auto gains = unit_gains(s);
  BatchPlan plan{0, {0, 1}, 0};
  const auto lat = batch_latency(plan, s.users, gains.gains, s.env, s.hw, s.library);
  EXPECT_NEAR(lat.upload_s, 5e-3, 1e-12);
  EXPECT_EQ(lat.load_s, 0.0);
  EXPECT_NEAR(lat.compute_s, 4e-3, 1e-15);
  EXPECT_NEAR(lat.total_s, 9e-3, 1e-12);
  EXPECT_DOUBLE_EQ(lat.total_s, lat.upload_s + lat.load_s + lat.compute_s);
}

TEST(BatchLatency, ColdStartLoadsWholeModel) {
  const auto s = worked_example(10);
  const auto gains = unit_gains(s);
  BatchPlan plan{0, {0}, std::nullopt};
  const auto lat = batch_latency(plan, s.users, gains.gains, s.env, s.hw, s.library);
  EXPECT_NEAR(lat.load_s, 4e-3, 1e-15);
  EXPECT_NEAR(lat.load_s, load_time(s.hw, s.library.model(0).weight_bytes), 0.0);
}

TEST(BatchLatency, RejectsOversizedBatch) {
  auto s = worked_example(10);
  s.users.push_back(user_with_cost(2, "m", 4e-3));
  const auto gains = unit_gains(s);
  BatchPlan plan{0, {0, 1, 2}, std::nullopt};
  EXPECT_THROW(batch_latency(plan, s.users, gains.gains, s.env, s.hw, s.library), InvalidInput);
}

TEST(ServiceLatency, WorkedExamples) {
  const double p[] = {2e-3, 3e-3, 5e-3};
  // Uplink of each batch is the sum of its users' unit costs.
  EXPECT_NEAR(service_latency(p, 2, 2, 4e-3, 1e-3, 2e-3), 5e-3 + 4e-3 + 4e-3, 1e-15);
  EXPECT_NEAR(service_latency(p, 3, 2, 4e-3, 1e-3, 2e-3), 10e-3 + 4e-3 + (4e-3 + 3e-3), 1e-15);
  EXPECT_EQ(service_latency(p, 0, 2, 4e-3, 1e-3, 2e-3), 0.0);
  EXPECT_NEAR(service_latency(p, 1, 2, 4e-3, 1e-3, 2e-3), 9e-3, 1e-15);
}

TEST(ServiceLatency, EqualBandwidthUsesSlowestUserPerBatch) {
  const double p[] = {2e-3, 3e-3, 5e-3};
  // Batches {2,3} and {5} on 2 sub-channels each.
  EXPECT_NEAR(service_latency(p, 3, 2, 4e-3, 1e-3, 2e-3, BandwidthPolicy::equal(2)),
              2 * 3e-3 + 2 * 5e-3 + 4e-3 + 7e-3, 1e-15);
}

TEST(ServiceLatency, LibraryFormResolvesLoadAndCap) {
  const auto s = worked_example(10);
  const double p[] = {2e-3, 3e-3};
  EXPECT_NEAR(service_latency(s.library, s.hw, std::nullopt, 0, 2, p), 13e-3, 1e-12);
  EXPECT_NEAR(service_latency(s.library, s.hw, 0, 0, 2, p), 9e-3, 1e-12);
}

TEST(ServiceLatency, MatchesBatchSequenceSum) {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> cost(1e-4, 5e-3);
  std::uniform_int_distribution<int> users(1, 9), cap(1, 4);
  for (int trial = 0; trial < 1000; ++trial) {
    const int n = users(rng);
    const auto lib = single_model_library();
    const Bytes gpu = 4'000'000 + static_cast<Bytes>(cap(rng)) * 1'000'000;
    std::vector<UserSpec> us;
    std::vector<double> costs;
    for (int k = 0; k < n; ++k) costs.push_back(cost(rng));
    std::sort(costs.begin(), costs.end());
    for (int k = 0; k < n; ++k) us.push_back(user_with_cost(static_cast<std::uint32_t>(k), "m", costs[static_cast<std::size_t>(k)]));
    const auto s = make_scenario(lib, us, linear_hw(gpu), 100);
    const auto gains = unit_gains(s);
    const std::size_t b_max = max_batch(s.library.model(0), s.hw);
    const auto k = static_cast<std::size_t>(std::uniform_int_distribution<int>(0, n)(rng));

    double total = 0.0;
    std::optional<std::size_t> prev;
    for (std::size_t start = 0; start < k; start += b_max) {
      BatchPlan plan{0, {}, prev};
      for (std::size_t u = start; u < std::min(k, start + b_max); ++u) plan.user_ids.push_back(u);
      total += batch_latency(plan, s.users, gains.gains, s.env, s.hw, s.library).total_s;
      prev = 0;
    }
    EXPECT_NEAR(service_latency(s.library, s.hw, std::nullopt, 0, k, costs), total, 1e-12);
  }
}

TEST(ServiceLatency, NondecreasingInUsersAndComputeTermsSum) {
  std::mt19937_64 rng(23);
  std::uniform_real_distribution<double> cost(1e-4, 5e-3);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> p(10);
    for (auto& c : p) c = cost(rng);
    std::sort(p.begin(), p.end());
    const std::size_t cap = 1 + static_cast<std::size_t>(trial % 4);
    double last = 0.0;
    for (std::size_t k = 0; k <= p.size(); ++k) {
      const double v = service_latency(p, k, cap, 3e-3, 1e-3, 2e-3);
      EXPECT_GE(v, last);
      last = v;
      // With zero costs and no load only the compute terms remain.
      const std::vector<double> zeros(p.size(), 0.0);
      const std::size_t batches = (k + cap - 1) / cap;
      EXPECT_NEAR(service_latency(zeros, k, cap, 0.0, 1e-3, 2e-3), 1e-3 * k + 2e-3 * batches, 1e-15);
    }
  }
}

TEST(ServiceLatency, BackboneLoadTermIsSuffix) {
  SynthParams p;
  p.n_models = 9;
  const auto lib = synth_generate(p, 3);
  const HardwareProfile hw;
  for (const auto& c : classify_sharing(lib).clusters)
    for (const auto& from : c.members)
      for (const auto& to : c.members) {
        if (from.model_id == to.model_id || from.shared_prefix_len > to.shared_prefix_len) continue;
        const auto next = lib.model_index(to.model_id);
        const auto sizes = lib.layer_sizes(next);
        Bytes suffix = 0;
        for (std::size_t l = from.shared_prefix_len; l < sizes.size(); ++l) suffix += sizes[l];
        const double p1[] = {0.0};
        const auto& spec = lib.model(next);
        EXPECT_NEAR(service_latency(lib, hw, lib.model_index(from.model_id), next, 1, p1),
                    load_time(hw, suffix) + spec.mu_s + spec.beta_s, 1e-15);
      }
}

TEST(LoadBytes, IndependentLoadingIgnoresSharing) {
  SynthParams p;
  p.n_models = 6;
  const auto lib = synth_generate(p, 4);
  for (std::size_t a = 0; a < lib.model_count(); ++a)
    for (std::size_t b = 0; b < lib.model_count(); ++b) {
      const Bytes ind = load_bytes(lib, LoadingMode::IndependentLoading, a, b);
      const Bytes shr = load_bytes(lib, LoadingMode::ParameterSharing, a, b);
      EXPECT_EQ(ind, a == b ? 0u : lib.model(b).weight_bytes);
      EXPECT_LE(shr, ind);
    }
}
