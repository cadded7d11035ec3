// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any failure.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "partial_loading/partial_loading.hpp"

#ifndef PL_CLI_PATH
#define PL_CLI_PATH "partial-loading"
#endif

using namespace partial_loading;

namespace {

// Pinned tolerances.
constexpr int kTinyInstances = 200;
constexpr double kGreedyGapLimit = 0.10;
constexpr int kAllocatorBatches = 200;
constexpr int kAllocatorDraws = 1000;
constexpr double kEqualTimesRelTol = 1e-9;
constexpr std::size_t kTrendRealizations = 100;
constexpr double kInversionLimit = 0.01;
constexpr double kDpOverIndependent = 0.10;
constexpr double kScaleSolveLimitS = 1.0;
constexpr double kRuntimeRatio = 100.0;

int failures = 0;

void report(int id, const char* name, bool pass, const std::string& detail) {
  std::printf("[%s] criterion %d %s: %s\n", pass ? "PASS" : "FAIL", id, name, detail.c_str());
  std::fflush(stdout);
  if (!pass) ++failures;
}

double now_s() {
  return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch()).count();
}

std::string fmt(const char* format, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, format, args...);
  return buf;
}

std::string seed_list(const std::vector<std::uint64_t>& seeds) {
  std::string out;
  for (std::size_t i = 0; i < seeds.size() && i < 10; ++i) out += (i ? "," : "") + std::to_string(seeds[i]);
  if (seeds.size() > 10) out += ",...";
  return out.empty() ? "none" : out;
}

struct TinyCase {
  Scenario scenario;
  FadingRealization fading;
};

TinyCase tiny_case(std::uint64_t seed, SharingKind kind) {
  auto s = generate_tiny_scenario(seed, kind);
  auto f = sample_fading(mix_seed(seed, 7), s.users.size());
  return {std::move(s), std::move(f)};
}

void dp_optimality(int id, const char* name, LoadingMode mode) {
  std::vector<std::uint64_t> mismatched;
  std::size_t below_continuous = 0;
  for (std::uint64_t seed = 1; seed <= kTinyInstances; ++seed) {
    const auto c = tiny_case(seed, SharingKind::BackboneSharing);
    ExhaustiveOptions ex;
    ex.solve.mode = mode;
    const auto opt = exhaustive_search(c.scenario, c.fading, ex).optimum;
    const auto dp = solve_bs(c.scenario, c.fading, {mode}).served_count;
    if (dp != opt) mismatched.push_back(seed);
    ex.grid = TimeGrid::Continuous;
    if (dp < exhaustive_search(c.scenario, c.fading, ex).optimum) ++below_continuous;
  }
  report(id, name, mismatched.empty(),
         fmt("%zu/%d instances equal the slot-aligned exhaustive optimum; mismatched seeds: %s; "
             "below the continuous-time optimum on %zu",
             kTinyInstances - mismatched.size(), kTinyInstances, seed_list(mismatched).c_str(), below_continuous));
}

void greedy_gap() {
  double gap_sum = 0.0;
  std::size_t gap_count = 0;
  std::vector<std::uint64_t> greedy_ahead;
  double gap_bs = 0.0, gap_general = 0.0;
  for (auto kind : {SharingKind::BackboneSharing, SharingKind::General}) {
    double kind_sum = 0.0;
    std::size_t kind_count = 0;
    for (std::uint64_t seed = 1; seed <= kTinyInstances / 2; ++seed) {
      const auto c = tiny_case(seed, kind);
      const auto opt = exhaustive_search(c.scenario, c.fading).optimum;
      const auto greedy = solve_general(c.scenario, c.fading).served_count;
      if (opt > 0) {
        const double gap = (static_cast<double>(opt) - static_cast<double>(greedy)) / static_cast<double>(opt);
        kind_sum += gap;
        ++kind_count;
      }
      if (kind == SharingKind::BackboneSharing && greedy > solve_bs(c.scenario, c.fading).served_count)
        greedy_ahead.push_back(seed);
    }
    gap_sum += kind_sum;
    gap_count += kind_count;
    (kind == SharingKind::BackboneSharing ? gap_bs : gap_general) = kind_sum / static_cast<double>(kind_count);
  }
  const double mean_gap = gap_sum / static_cast<double>(gap_count);
  report(3, "greedy-gap", mean_gap <= kGreedyGapLimit && greedy_ahead.empty(),
         fmt("mean gap %.2f%% (backbone %.2f%%, general %.2f%%, limit %.0f%%) over %zu instances; "
             "greedy ahead of DP on %zu backbone instances: %s",
             100 * mean_gap, 100 * gap_bs, 100 * gap_general, 100 * kGreedyGapLimit, gap_count, greedy_ahead.size(),
             seed_list(greedy_ahead).c_str()));
}

void allocator_optimality() {
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> cost(1e-6, 1e-2);
  std::uniform_int_distribution<int> size(1, 16);
  std::gamma_distribution<double> gamma(1.0, 1.0);
  std::size_t beaten = 0;
  double worst_spread = 0.0;
  for (int batch = 0; batch < kAllocatorBatches; ++batch) {
    std::vector<double> costs(static_cast<std::size_t>(size(rng)));
    for (auto& c : costs) c = cost(rng);
    const auto alloc = optimal_bandwidth(costs);
    for (std::size_t k = 0; k < costs.size(); ++k)
      worst_spread = std::max(worst_spread, std::abs(costs[k] / alloc.shares[k] - alloc.min_upload_s) / alloc.min_upload_s);
    for (int draw = 0; draw < kAllocatorDraws; ++draw) {
      std::vector<double> y(costs.size());
      double total = 0.0;
      for (auto& v : y) total += (v = gamma(rng));
      for (auto& v : y) v /= total;
      if (batch_upload_time(costs, y) < alloc.min_upload_s * (1.0 - 1e-12)) ++beaten;
    }
  }
  report(4, "allocator-optimality", beaten == 0 && worst_spread <= kEqualTimesRelTol,
         fmt("%d batches x %d random allocations, %zu beat the closed form; worst relative spread of per-user "
             "uplink times %.2e (limit %.0e)",
             kAllocatorBatches, kAllocatorDraws, beaten, worst_spread, kEqualTimesRelTol));
}

void structure_proofs() {
  std::vector<std::uint64_t> pruned_differs, not_contiguous;
  int n = 0;
  for (auto kind : {SharingKind::BackboneSharing, SharingKind::General})
    for (std::uint64_t seed = 1; seed <= kTinyInstances / 2; ++seed, ++n) {
      const auto c = tiny_case(seed, kind);
      ExhaustiveOptions full, pruned;
      pruned.pruned = true;
      const auto a = exhaustive_search(c.scenario, c.fading, full);
      const auto b = exhaustive_search(c.scenario, c.fading, pruned);
      if (a.optimum != b.optimum) pruned_differs.push_back(seed);
      if (!a.witness_cluster_contiguous) not_contiguous.push_back(seed);
    }
  report(5, "structure-proofs", pruned_differs.empty() && not_contiguous.empty(),
         fmt("%d instances; pruned differs from unpruned on %zu (%s); no cluster-contiguous optimal witness on %zu (%s)",
             n, pruned_differs.size(), seed_list(pruned_differs).c_str(), not_contiguous.size(),
             seed_list(not_contiguous).c_str()));
}

struct TrendCheck {
  bool ok = true;
  std::string detail;
};

// Per algorithm: at most one inversion, of at most kInversionLimit.
TrendCheck check_trend(const std::vector<ResultRow>& rows, bool increasing) {
  TrendCheck out;
  std::map<std::string, std::vector<double>> series;
  for (const auto& r : rows) series[std::string(to_string(r.algorithm))].push_back(r.mean_ratio);
  for (const auto& [alg, values] : series) {
    int inversions = 0;
    double worst = 0.0;
    for (std::size_t i = 1; i < values.size(); ++i) {
      const double drop = increasing ? values[i - 1] - values[i] : values[i] - values[i - 1];
      if (drop > 0.0) {
        ++inversions;
        worst = std::max(worst, drop);
      }
    }
    const bool ok = inversions <= 1 && worst <= kInversionLimit;
    out.ok = out.ok && ok;
    out.detail += fmt(" %s[", alg.c_str());
    for (std::size_t i = 0; i < values.size(); ++i) out.detail += fmt(i ? " %.3f" : "%.3f", values[i]);
    out.detail += fmt("]%s", ok ? "" : fmt("(%d inversions, worst %.3f)", inversions, worst).c_str());
  }
  return out;
}

void trends() {
  const double start = now_s();
  struct Sweep {
    SweepAxis axis;
    std::vector<double> values;
    bool increasing;
  };
  const std::vector<Sweep> sweeps{
      {SweepAxis::Bandwidth, {25e6, 50e6, 100e6, 200e6, 300e6, 400e6}, true},
      {SweepAxis::Users, {40, 60, 80, 100, 120}, false},
      {SweepAxis::Deadline, {300, 500, 700, 900, 1100}, true},
      {SweepAxis::SharingRatio, {0.55, 0.65, 0.75, 0.85, 0.9}, true},
  };
  bool ok = true;
  std::string detail;
  double dp_default = 0.0, independent_default = 0.0;
  for (const auto& sw : sweeps) {
    ExperimentGrid g;
    g.axis = sw.axis;
    g.values = sw.values;
    g.algorithms = {Algorithm::Dp, Algorithm::Greedy, Algorithm::Independent};
    g.realizations = kTrendRealizations;
    g.base_seed = 1;
    const auto rows = run_experiment(g);
    const auto t = check_trend(rows, sw.increasing);
    ok = ok && t.ok;
    detail += fmt("; %s%s", std::string(to_string(sw.axis)).c_str(), t.detail.c_str());
    if (sw.axis == SweepAxis::Bandwidth)
      for (const auto& r : rows)
        if (r.axis_value == 200e6) {
          if (r.algorithm == Algorithm::Dp) dp_default = r.mean_ratio;
          if (r.algorithm == Algorithm::Independent) independent_default = r.mean_ratio;
        }
  }
  const double lead = dp_default - independent_default;
  ok = ok && lead >= kDpOverIndependent;
  report(6, "trends", ok,
         fmt("%zu realizations; dp %.3f vs independent %.3f at defaults (lead %.1f pp, need %.0f pp); %.0f s",
             kTrendRealizations, dp_default, independent_default, 100 * lead, 100 * kDpOverIndependent,
             now_s() - start) +
             detail);
}

void ablation() {
  bool ok = true;
  std::string detail;
  for (int r : {5, 10, 20}) {
    ExperimentGrid g;
    g.axis = SweepAxis::Bandwidth;
    g.values = {50e6, 100e6, 200e6, 300e6};
    g.algorithms = {Algorithm::Dp, Algorithm::DpEqualBw, Algorithm::Greedy, Algorithm::GreedyEqualBw};
    g.realizations = kTrendRealizations;
    g.solver.equal_bw_subchannels = r;
    const auto rows = run_experiment(g);
    int behind = 0;
    for (std::size_t i = 0; i < rows.size(); i += 4) {
      // Row order per cell: dp, dp-equal-bw, greedy, greedy-equal-bw.
      if (rows[i].mean_ratio < rows[i + 1].mean_ratio) ++behind;
      if (rows[i + 2].mean_ratio < rows[i + 3].mean_ratio) ++behind;
    }
    ok = ok && behind == 0;
    detail += fmt("; r=%d:", r);
    for (std::size_t i = 0; i < rows.size(); i += 4)
      detail += fmt(" %.0fMHz dp %.3f/%.3f greedy %.3f/%.3f", rows[i].axis_value / 1e6, rows[i].mean_ratio,
                    rows[i + 1].mean_ratio, rows[i + 2].mean_ratio, rows[i + 3].mean_ratio);
  }
  report(7, "equal-bandwidth-ablation", ok, "optimal/equal served ratios" + detail);
}

void scale_and_runtime() {
  ScenarioParams p;
  p.n_users = 100;
  p.deadline_s = 0.9;
  double worst = 0.0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto s = generate_scenario(p, seed);
    const auto f = sample_fading(seed, s.users.size());
    const double t0 = now_s();
    (void)solve_bs(s, f);
    worst = std::max(worst, now_s() - t0);
  }

  double dp_s = 0.0, enum_s = 0.0, bounded_s = 0.0;
  for (std::uint64_t seed = 1; seed <= kTinyInstances; ++seed) {
    const auto c = tiny_case(seed, SharingKind::BackboneSharing);
    double t0 = now_s();
    (void)solve_bs(c.scenario, c.fading);
    dp_s += now_s() - t0;
    ExhaustiveOptions plain;
    plain.bound = false;
    t0 = now_s();
    (void)exhaustive_search(c.scenario, c.fading, plain);
    enum_s += now_s() - t0;
    t0 = now_s();
    (void)exhaustive_search(c.scenario, c.fading);
    bounded_s += now_s() - t0;
  }
  const double ratio = enum_s / dp_s;
  report(8, "scale-and-runtime", worst < kScaleSolveLimitS && ratio >= kRuntimeRatio,
         fmt("3 clusters, 50 models, 100 users, 90 slots: slowest DP solve %.1f ms (limit %.0f ms); tiny suite: "
             "DP %.3f s, full enumeration %.3f s (ratio %.0fx, need %.0fx), branch-and-bound %.3f s (ratio %.1fx)",
             1e3 * worst, 1e3 * kScaleSolveLimitS, dp_s, enum_s, ratio, kRuntimeRatio, bounded_s, bounded_s / dp_s));
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

void determinism(const std::string& cli) {
  const std::string dir = std::filesystem::temp_directory_path().string();
  const std::string a = dir + "/pl_accept_a.csv", b = dir + "/pl_accept_b.csv", c = dir + "/pl_accept_c.csv";
  const std::string args =
      " sweep --axis users --values 20 40 --algorithm dp --algorithm greedy --algorithm independent "
      "--realizations 8 --seed 5 --no-timing";
  const int ra = std::system((cli + args + " --threads 1 -o " + a).c_str());
  const int rb = std::system((cli + args + " --threads 1 -o " + b).c_str());
  const int rc = std::system((cli + args + " --threads 4 -o " + c).c_str());
  const std::string sa = slurp(a), sb = slurp(b), sc = slurp(c);
  const bool ok = ra == 0 && rb == 0 && rc == 0 && !sa.empty() && sa == sb && sa == sc;
  report(9, "determinism", ok,
         fmt("CLI sweep run three times (1, 1 and 4 threads): exit codes %d/%d/%d, %zu bytes, %s", ra, rb, rc,
             sa.size(), sa == sb && sa == sc ? "byte-identical" : "outputs differ"));
  std::remove(a.c_str());
  std::remove(b.c_str());
  std::remove(c.c_str());
}

}  // namespace

int main(int argc, char** argv) {
  const std::string cli = argc > 1 ? argv[1] : PL_CLI_PATH;
  const double start = now_s();
  dp_optimality(1, "dp-optimality", LoadingMode::ParameterSharing);
  dp_optimality(2, "independent-loading-optimality", LoadingMode::IndependentLoading);
  greedy_gap();
  allocator_optimality();
  structure_proofs();
  trends();
  ablation();
  scale_and_runtime();
  determinism(cli);
  std::printf("%d of 9 criteria failed; total %.0f s\n", failures, now_s() - start);
  return failures == 0 ? 0 : 1;
}
