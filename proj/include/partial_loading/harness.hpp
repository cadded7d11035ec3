#pragma once

// Scenario generation and the Monte-Carlo experiment runner.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <map>
#include <mutex>
#include <numeric>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "partial_loading/dp_scheduler.hpp"
#include "partial_loading/errors.hpp"
#include "partial_loading/greedy_scheduler.hpp"
#include "partial_loading/model_library.hpp"
#include "partial_loading/oracle.hpp"
#include "partial_loading/radio.hpp"
#include "partial_loading/scenario.hpp"

namespace partial_loading {

// 128 x 128 x 3 image at 8 bits per channel.
inline constexpr double kDefaultImageBits = 128.0 * 128.0 * 3.0 * 8.0;

struct ScenarioParams {
  std::size_t n_users = 80;
  double bandwidth_hz = 200e6;
  double deadline_s = 0.7;
  double slot_s = 0.01;
  double radius_m = 250.0;
  double tx_psd_w_per_hz = 5e-9;
  double noise_dbm_per_hz = -174.0;
  double path_loss_exponent = 4.0;
  double data_bits = kDefaultImageBits;
  HardwareProfile hw;
  SynthParams library;
  double zipf_exponent = 0.0;  // request popularity; 0 is uniform
  std::optional<std::uint64_t> library_seed;  // defaults to the scenario seed

  int horizon_slots() const { return static_cast<int>(std::lround(deadline_s / slot_s)); }
};

inline void check_params(const ScenarioParams& p) {
  if (!(p.bandwidth_hz > 0.0) || !(p.deadline_s > 0.0) || !(p.slot_s > 0.0) || !(p.radius_m > 0.0) ||
      !(p.tx_psd_w_per_hz > 0.0) || !(p.path_loss_exponent > 0.0) || !(p.data_bits > 0.0) ||
      !(p.zipf_exponent >= 0.0))
    throw InvalidInput("scenario parameters must be positive");
  if (p.horizon_slots() < 1) throw InvalidInput("deadline shorter than one slot");
}

// Mixes seeds into independent streams (splitmix64 finalizer).
inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Users area-uniform over the coverage disk; requests drawn from the
// popularity distribution over models.
inline std::vector<UserSpec> generate_users(const ScenarioParams& params, const ModelLibrary& lib, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<double> weights;
  for (std::size_t m = 0; m < lib.model_count(); ++m)
    weights.push_back(std::pow(static_cast<double>(m + 1), -params.zipf_exponent));
  std::discrete_distribution<std::size_t> pick(weights.begin(), weights.end());
  std::vector<UserSpec> users;
  for (std::size_t k = 0; k < params.n_users; ++k) {
    UserSpec u;
    u.id = static_cast<std::uint32_t>(k);
    u.distance_m = params.radius_m * std::sqrt(1.0 - unit(rng));  // in (0, R]
    u.data_bits = params.data_bits;
    u.tx_psd_w_per_hz = params.tx_psd_w_per_hz;
    u.requested_model = lib.model(pick(rng)).id;
    users.push_back(std::move(u));
  }
  return users;
}

inline Scenario scenario_with_library(const ScenarioParams& params, ModelLibrary library, std::uint64_t user_seed) {
  check_params(params);
  Scenario s;
  s.users = generate_users(params, library, user_seed);
  s.library = std::move(library);
  s.env = {params.bandwidth_hz, dbm_per_hz_to_w_per_hz(params.noise_dbm_per_hz), params.path_loss_exponent};
  s.hw = params.hw;
  s.horizon_slots = params.horizon_slots();
  s.slot_s = params.slot_s;
  validate_scenario(s);
  return s;
}

// Deterministic given the seed.
inline Scenario generate_scenario(const ScenarioParams& params, std::uint64_t seed) {
  check_params(params);
  auto library = synth_generate(params.library, params.library_seed.value_or(mix_seed(seed, 0x11b)));
  return scenario_with_library(params, std::move(library), mix_seed(seed, 0x05e));
}

// Small random instances within exhaustive-search reach: 2-3 models in 1-2
// clusters, 3-8 users, 8-30 slots of 10 ms, caps of 1-4 users per batch.
inline Scenario generate_tiny_scenario(std::uint64_t seed, SharingKind kind) {
  std::mt19937_64 rng(seed);
  auto uniform_int = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };
  auto uniform = [&](double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); };
  constexpr Bytes kMB = 1'000'000;

  HardwareProfile hw;
  hw.gpu_mem_bytes = 200 * kMB;
  auto draw_library = [&]() -> ModelLibrary {
  const int n_models = uniform_int(2, 3);
  const int n_clusters = kind == SharingKind::BackboneSharing ? uniform_int(1, std::min(2, n_models)) : 1;
  std::vector<ParameterBlock> blocks;
  std::vector<ModelSpec> models;
  std::vector<ClusterSpec> clusters;
  std::vector<std::vector<Bytes>> base_layers;
  for (int c = 0; c < n_clusters; ++c) {
    ClusterSpec cluster{"c" + std::to_string(c), {}, {}};
    auto& layers = base_layers.emplace_back();
    for (int l = 0; l < 5; ++l) {
      layers.push_back(static_cast<Bytes>(uniform_int(2, 20)) * kMB);
      cluster.backbone_block_ids.push_back(cluster.id + ".L" + std::to_string(l + 1));
    }
    clusters.push_back(std::move(cluster));
  }
  std::vector<bool> used(static_cast<std::size_t>(n_clusters) * 5, false);
  for (int m = 0; m < n_models; ++m) {
    // Every cluster gets at least one model.
    const int c = m < n_clusters ? m : uniform_int(0, n_clusters - 1);
    auto& cluster = clusters[static_cast<std::size_t>(c)];
    const auto& layers = base_layers[static_cast<std::size_t>(c)];
    ModelSpec spec;
    spec.id = "m" + std::to_string(m);
    spec.mu_s = uniform(1e-3, 5e-3);
    spec.beta_s = uniform(3e-3, 12e-3);
    const std::size_t n_layers = static_cast<std::size_t>(uniform_int(3, 5));
    const std::size_t shared = static_cast<std::size_t>(uniform_int(1, static_cast<int>(n_layers) - 1));
    std::vector<bool> from_base(n_layers, false);
    if (kind == SharingKind::BackboneSharing) {
      for (std::size_t l = 0; l < shared; ++l) from_base[l] = true;
    } else {
      std::vector<std::size_t> pos(n_layers);
      std::iota(pos.begin(), pos.end(), std::size_t{0});
      std::shuffle(pos.begin(), pos.end(), rng);
      for (std::size_t l = 0; l < shared; ++l) from_base[pos[l]] = true;
    }
    for (std::size_t l = 0; l < n_layers; ++l) {
      if (from_base[l]) {
        spec.block_ids.push_back(cluster.backbone_block_ids[l]);
        used[static_cast<std::size_t>(c) * 5 + l] = true;
      } else {
        spec.block_ids.push_back(spec.id + ".L" + std::to_string(l + 1));
        blocks.push_back({spec.block_ids.back(), static_cast<Bytes>(uniform_int(2, 20)) * kMB});
      }
    }
    for (const auto& id : spec.block_ids) {
      auto it = std::find_if(blocks.begin(), blocks.end(), [&](const auto& b) { return b.id == id; });
      spec.weight_bytes += it != blocks.end() ? it->size_bytes : layers[static_cast<std::size_t>(std::stoi(id.substr(id.find(".L") + 2)) - 1)];
    }
    cluster.members.push_back({spec.id, shared});
    models.push_back(std::move(spec));
  }
  for (int c = 0; c < n_clusters; ++c)
    for (std::size_t l = 0; l < 5; ++l)
      if (used[static_cast<std::size_t>(c) * 5 + l])
        blocks.push_back({clusters[static_cast<std::size_t>(c)].backbone_block_ids[l],
                          base_layers[static_cast<std::size_t>(c)][l]});

  for (auto& spec : models) {
    const int target_cap = uniform_int(1, 4);
    spec.activation_bytes_per_sample = (hw.gpu_mem_bytes - spec.weight_bytes) / static_cast<Bytes>(target_cap);
  }
  for (auto& c : clusters) {
    std::size_t longest = 0;
    for (const auto& mem : c.members) longest = std::max(longest, mem.shared_prefix_len);
    c.backbone_block_ids.resize(longest);
  }

  return kind == SharingKind::BackboneSharing
             ? ModelLibrary(std::move(blocks), std::move(models), std::move(clusters), SharingKind::BackboneSharing)
             : ModelLibrary(std::move(blocks), std::move(models), std::nullopt, SharingKind::General);
  };
  // A shuffled general draw can still come out prefix-shaped; redraw until it does not.
  ModelLibrary lib = draw_library();
  while (classify_sharing(lib).kind != kind) lib = draw_library();
  ScenarioParams params;
  params.n_users = static_cast<std::size_t>(uniform_int(3, 8));
  params.bandwidth_hz = 10e6;
  params.slot_s = 0.01;
  params.deadline_s = uniform_int(8, 30) * params.slot_s;
  params.hw = hw;
  return scenario_with_library(params, std::move(lib), rng());
}

// ---------------------------------------------------------------------------
// Experiments

enum class Algorithm { Dp, Greedy, Independent, Exhaustive, DpEqualBw, GreedyEqualBw };

inline std::string_view to_string(Algorithm a) {
  switch (a) {
    case Algorithm::Dp: return "dp";
    case Algorithm::Greedy: return "greedy";
    case Algorithm::Independent: return "independent";
    case Algorithm::Exhaustive: return "exhaustive";
    case Algorithm::DpEqualBw: return "dp-equal-bw";
    case Algorithm::GreedyEqualBw: return "greedy-equal-bw";
  }
  return "?";
}

inline Algorithm parse_algorithm(std::string_view name) {
  for (auto a : {Algorithm::Dp, Algorithm::Greedy, Algorithm::Independent, Algorithm::Exhaustive, Algorithm::DpEqualBw,
                 Algorithm::GreedyEqualBw})
    if (to_string(a) == name) return a;
  throw InvalidInput("unknown algorithm '" + std::string(name) + "'");
}

struct SolverConfig {
  LoadingMode mode = LoadingMode::ParameterSharing;  // for dp/greedy/exhaustive
  int equal_bw_subchannels = 10;
  SearchLimits limits;
};

// Equal-bandwidth variants replace the proportional split with r equal
// sub-channels; "independent" is the DP without sharing.
inline Schedule solve_with(Algorithm algorithm, const Scenario& scenario, const FadingRealization& fading,
                           const SolverConfig& config = {}) {
  SolveOptions opts{config.mode, BandwidthPolicy::optimal()};
  switch (algorithm) {
    case Algorithm::Dp: return solve_bs(scenario, fading, opts);
    case Algorithm::Greedy: return solve_general(scenario, fading, opts);
    case Algorithm::Independent: return solve_bs(scenario, fading, {LoadingMode::IndependentLoading, {}});
    case Algorithm::Exhaustive: {
      ExhaustiveOptions ex;
      ex.limits = config.limits;
      ex.pruned = true;
      ex.solve = opts;
      return exhaustive_search(scenario, fading, ex).witness;
    }
    case Algorithm::DpEqualBw:
      opts.bandwidth = BandwidthPolicy::equal(config.equal_bw_subchannels);
      return solve_bs(scenario, fading, opts);
    case Algorithm::GreedyEqualBw:
      opts.bandwidth = BandwidthPolicy::equal(config.equal_bw_subchannels);
      return solve_general(scenario, fading, opts);
  }
  throw InvalidInput("unhandled algorithm");
}

enum class SweepAxis { Bandwidth, Users, Deadline, SharingRatio, Subchannels };

inline std::string_view to_string(SweepAxis axis) {
  switch (axis) {
    case SweepAxis::Bandwidth: return "bandwidth_hz";
    case SweepAxis::Users: return "users";
    case SweepAxis::Deadline: return "deadline_ms";
    case SweepAxis::SharingRatio: return "sharing_ratio";
    case SweepAxis::Subchannels: return "subchannels";
  }
  return "?";
}

inline SweepAxis parse_axis(std::string_view name) {
  for (auto a : {SweepAxis::Bandwidth, SweepAxis::Users, SweepAxis::Deadline, SweepAxis::SharingRatio,
                 SweepAxis::Subchannels})
    if (to_string(a) == name) return a;
  throw InvalidInput("unknown sweep axis '" + std::string(name) + "'");
}

struct ExperimentGrid {
  SweepAxis axis = SweepAxis::Bandwidth;
  std::vector<double> values{10e6, 50e6, 100e6, 200e6, 300e6, 400e6};
  ScenarioParams defaults;
  std::vector<Algorithm> algorithms{Algorithm::Dp, Algorithm::Greedy, Algorithm::Independent};
  std::size_t realizations = 50;
  std::uint64_t base_seed = 1;
  SolverConfig solver;
  // Schedule on mean-path-loss rates and evaluate on faded rates.
  bool schedule_on_expected_rates = false;
  unsigned threads = 0;  // 0 = hardware concurrency
};

struct ResultRow {
  SweepAxis axis = SweepAxis::Bandwidth;
  double axis_value = 0.0;
  Algorithm algorithm = Algorithm::Dp;
  double mean_ratio = 0.0;
  double stderr_ratio = 0.0;
  double mean_solve_s = 0.0;
  std::size_t realizations = 0;
  std::uint64_t seed = 0;
};

// Parameters and solver settings of one sweep cell.
inline std::pair<ScenarioParams, SolverConfig> cell_config(const ExperimentGrid& grid, double value) {
  ScenarioParams p = grid.defaults;
  SolverConfig solver = grid.solver;
  switch (grid.axis) {
    case SweepAxis::Bandwidth: p.bandwidth_hz = value; break;
    case SweepAxis::Users: p.n_users = static_cast<std::size_t>(std::lround(value)); break;
    case SweepAxis::Deadline: p.deadline_s = value / 1000.0; break;
    case SweepAxis::SharingRatio: p.library.sharing_ratio = value; break;
    case SweepAxis::Subchannels: solver.equal_bw_subchannels = static_cast<int>(std::lround(value)); break;
  }
  return {p, solver};
}

struct CellRealization {
  std::vector<double> ratio;   // per algorithm
  std::vector<double> solve_s;
  std::vector<Schedule> schedules;  // kept for realization 0 only
  std::optional<Scenario> scenario;  // realization 0 only
};

struct ExperimentResult {
  std::vector<ResultRow> rows;
  // Realization-0 witness schedules and their scenarios, in row order.
  std::vector<Schedule> witnesses;
  std::vector<Scenario> scenarios;
};

// Realization r of every cell uses the same user positions, requests and
// fading draws (common random numbers), and the library is fixed per cell
// by the base seed, so differences between cells reflect the swept value.
inline ExperimentResult run_experiment_detailed(const ExperimentGrid& grid) {
  if (grid.realizations < 1) throw InvalidInput("need at least one realization");
  if (grid.values.empty()) throw InvalidInput("sweep has no axis values");
  if (grid.algorithms.empty()) throw InvalidInput("sweep has no algorithms");
  for (double v : grid.values)
    if (!(v > 0.0)) throw InvalidInput("axis values must be positive");

  const std::size_t n_cells = grid.values.size();
  const std::size_t n_algs = grid.algorithms.size();
  std::vector<ScenarioParams> params(n_cells);
  std::vector<SolverConfig> solvers(n_cells);
  std::vector<ModelLibrary> libraries(n_cells);
  for (std::size_t c = 0; c < n_cells; ++c) {
    std::tie(params[c], solvers[c]) = cell_config(grid, grid.values[c]);
    check_params(params[c]);
    try {
      libraries[c] = synth_generate(params[c].library, params[c].library_seed.value_or(grid.base_seed));
    } catch (const InvalidInput& e) {
      std::ostringstream msg;
      msg << "cell " << to_string(grid.axis) << "=" << grid.values[c] << ": " << e.what();
      throw InvalidInput(msg.str());
    }
  }

  std::vector<CellRealization> results(n_cells * grid.realizations);
  std::atomic<std::size_t> next{0};
  std::mutex error_mutex;
  std::optional<std::string> error;
  bool error_is_refusal = false;
  double refused_estimate = 0.0;
  auto worker = [&] {
    for (;;) {
      const std::size_t task = next.fetch_add(1);
      if (task >= results.size()) return;
      const std::size_t cell = task / grid.realizations;
      const std::size_t r = task % grid.realizations;
      try {
        const std::uint64_t stream = mix_seed(grid.base_seed, r);
        const Scenario scenario = scenario_with_library(params[cell], libraries[cell], mix_seed(stream, 1));
        const auto fading = sample_fading(mix_seed(stream, 2), scenario.users.size());
        const auto solve_fading =
            grid.schedule_on_expected_rates ? FadingRealization::unit(scenario.users.size()) : fading;
        auto& out = results[task];
        for (auto algorithm : grid.algorithms) {
          const auto start = std::chrono::steady_clock::now();
          Schedule schedule = solve_with(algorithm, scenario, solve_fading, solvers[cell]);
          const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
          const auto report = validate_schedule(schedule, scenario);
          if (!report.feasible) throw InternalInconsistency("schedule failed validation");
          const std::size_t served = grid.schedule_on_expected_rates
                                         ? served_within_deadline(schedule, scenario, fading.gains)
                                         : report.served_count;
          out.ratio.push_back(scenario.users.empty() ? 0.0
                                                     : static_cast<double>(served) / static_cast<double>(scenario.users.size()));
          out.solve_s.push_back(elapsed);
          if (r == 0) out.schedules.push_back(std::move(schedule));
        }
        if (r == 0) out.scenario = scenario;
      } catch (const Error& e) {
        std::lock_guard lock(error_mutex);
        if (!error) {
          std::ostringstream msg;
          msg << "cell " << to_string(grid.axis) << "=" << grid.values[cell] << ", realization " << r << ": "
              << e.what();
          error = msg.str();
          if (auto* refused = dynamic_cast<const SearchRefused*>(&e)) {
            error_is_refusal = true;
            refused_estimate = refused->estimated_nodes();
          }
        }
        next.store(results.size());
        return;
      }
    }
  };
  unsigned n_threads = grid.threads ? grid.threads : std::max(1u, std::thread::hardware_concurrency());
  n_threads = static_cast<unsigned>(std::min<std::size_t>(n_threads, results.size()));
  std::vector<std::thread> pool;
  for (unsigned t = 1; t < n_threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  if (error) {
    if (error_is_refusal) throw SearchRefused(*error, refused_estimate);
    throw Error(*error);
  }

  ExperimentResult out;
  for (std::size_t c = 0; c < n_cells; ++c) {
    for (std::size_t a = 0; a < n_algs; ++a) {
      double sum = 0.0, time = 0.0;
      for (std::size_t r = 0; r < grid.realizations; ++r) {
        sum += results[c * grid.realizations + r].ratio[a];
        time += results[c * grid.realizations + r].solve_s[a];
      }
      const double n = static_cast<double>(grid.realizations);
      const double mean = sum / n;
      double var = 0.0;
      for (std::size_t r = 0; r < grid.realizations; ++r) {
        const double d = results[c * grid.realizations + r].ratio[a] - mean;
        var += d * d;
      }
      ResultRow row;
      row.axis = grid.axis;
      row.axis_value = grid.values[c];
      row.algorithm = grid.algorithms[a];
      row.mean_ratio = mean;
      row.stderr_ratio = grid.realizations > 1 ? std::sqrt(var / (n - 1.0) / n) : 0.0;
      row.mean_solve_s = time / n;
      row.realizations = grid.realizations;
      row.seed = grid.base_seed;
      out.rows.push_back(row);
      out.witnesses.push_back(results[c * grid.realizations].schedules[a]);
      out.scenarios.push_back(*results[c * grid.realizations].scenario);
    }
  }
  // Stable order: axis value, then algorithm name.
  std::vector<std::size_t> order(out.rows.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
    const auto& a = out.rows[x];
    const auto& b = out.rows[y];
    if (a.axis_value != b.axis_value) return a.axis_value < b.axis_value;
    return to_string(a.algorithm) < to_string(b.algorithm);
  });
  ExperimentResult sorted;
  for (auto i : order) {
    sorted.rows.push_back(out.rows[i]);
    sorted.witnesses.push_back(std::move(out.witnesses[i]));
    sorted.scenarios.push_back(std::move(out.scenarios[i]));
  }
  return sorted;
}

inline std::vector<ResultRow> run_experiment(const ExperimentGrid& grid) { return run_experiment_detailed(grid).rows; }

inline constexpr const char* kCsvHeader = "axis,axis_value,algorithm,mean_ratio,stderr,mean_solve_s,realizations,seed";

inline std::string to_csv(const std::vector<ResultRow>& rows, bool include_timing = true) {
  std::ostringstream out;
  out << kCsvHeader << '\n';
  char buf[256];
  for (const auto& row : rows) {
    std::snprintf(buf, sizeof buf, "%s,%.10g,%s,%.9f,%.9f,", std::string(to_string(row.axis)).c_str(), row.axis_value,
                  std::string(to_string(row.algorithm)).c_str(), row.mean_ratio, row.stderr_ratio);
    out << buf;
    if (include_timing) {
      std::snprintf(buf, sizeof buf, "%.6e", row.mean_solve_s);
      out << buf;
    } else {
      out << "0";
    }
    out << ',' << row.realizations << ',' << row.seed << '\n';
  }
  return out.str();
}

}  // namespace partial_loading
