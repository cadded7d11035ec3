#include <cstdio>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "partial_loading/io.hpp"
#include "partial_loading/partial_loading.hpp"

namespace pl = partial_loading;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInfeasible = 1;
constexpr int kExitBadInput = 2;

struct ParamFlags {
  std::optional<std::string> config;
  std::optional<double> bandwidth_hz;
  std::optional<std::size_t> users;
  std::optional<double> deadline_ms;
  std::optional<double> sharing_ratio;
  std::optional<std::string> kind;
  std::optional<std::size_t> models;
  std::optional<std::size_t> clusters;

  void add(CLI::App* app) {
    app->add_option("--params", config, "JSON scenario parameters (any subset of the defaults)");
    app->add_option("--bandwidth-hz", bandwidth_hz, "total uplink bandwidth B")->check(CLI::PositiveNumber);
    app->add_option("--users", users, "user count K")->check(CLI::PositiveNumber);
    app->add_option("--deadline-ms", deadline_ms, "common deadline")->check(CLI::PositiveNumber);
    app->add_option("--sharing-ratio", sharing_ratio, "mean shared fraction of layers")->check(CLI::Range(0.0, 1.0));
    app->add_option("--kind", kind, "library kind")->check(CLI::IsMember({"backbone", "general"}));
    app->add_option("--models", models, "model count")->check(CLI::PositiveNumber);
    app->add_option("--clusters", clusters, "cluster count")->check(CLI::PositiveNumber);
  }

  pl::ScenarioParams apply(pl::ScenarioParams p) const {
    if (config) p = pl::params_from_json(pl::read_json_file(*config), p);
    if (bandwidth_hz) p.bandwidth_hz = *bandwidth_hz;
    if (users) p.n_users = *users;
    if (deadline_ms) p.deadline_s = *deadline_ms / 1000.0;
    if (sharing_ratio) p.library.sharing_ratio = *sharing_ratio;
    if (kind) p.library.kind = pl::parse_sharing_kind(*kind);
    if (models) p.library.n_models = *models;
    if (clusters) p.library.n_clusters = *clusters;
    return p;
  }
};

pl::LoadingMode parse_mode(const std::string& name) {
  return name == "independent" ? pl::LoadingMode::IndependentLoading : pl::LoadingMode::ParameterSharing;
}

void emit(const std::optional<std::string>& path, const std::string& text) {
  if (path)
    pl::write_text_file(*path, text);
  else
    std::cout << text;
}

void print_schedule(const pl::Schedule& schedule, const pl::Scenario& scenario, std::ostream& out) {
  const std::size_t k = scenario.users.size();
  out << "served " << schedule.served_count << " / " << k << "\n";
  char buf[160];
  std::snprintf(buf, sizeof buf, "served_ratio %.6f\ncompletion_s %.6f\ndeadline_s %.6f\n",
                k ? static_cast<double>(schedule.served_count) / static_cast<double>(k) : 0.0, schedule.completion_s(),
                scenario.deadline_s());
  out << buf << "batches " << schedule.batches.size() << "\n";
  for (std::size_t n = 0; n < schedule.batches.size(); ++n) {
    const auto& b = schedule.batches[n];
    std::snprintf(buf, sizeof buf, "  [%zu] model=%s users=%zu upload_s=%.6f load_s=%.6f compute_s=%.6f total_s=%.6f\n",
                  n, scenario.library.model(b.model).id.c_str(), b.users.size(), b.latency.upload_s, b.latency.load_s,
                  b.latency.compute_s, b.latency.total_s);
    out << buf;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Joint user scheduling and bandwidth allocation for edge inference with parameter-sharing models"};
  app.require_subcommand(1);

  // gen
  auto* gen = app.add_subcommand("gen", "emit a scenario file from parameters and a seed");
  ParamFlags gen_params;
  gen_params.add(gen);
  std::uint64_t gen_seed = 1;
  bool gen_tiny = false;
  bool gen_fading = false;
  std::optional<std::string> gen_output;
  gen->add_option("--seed", gen_seed, "scenario seed");
  gen->add_flag("--tiny", gen_tiny, "small instance within exhaustive-search reach (uses --kind and --seed only)");
  gen->add_flag("--fading", gen_fading, "store a Rayleigh fading draw in the file");
  gen->add_option("--output,-o", gen_output, "scenario file (default stdout)");

  // solve
  auto* solve = app.add_subcommand("solve", "schedule one scenario with one algorithm");
  std::string solve_scenario;
  std::string solve_algorithm = "dp";
  std::string solve_mode = "sharing";
  int solve_subchannels = 10;
  std::optional<std::uint64_t> solve_fading_seed;
  std::optional<std::string> solve_output;
  solve->add_option("scenario", solve_scenario, "scenario file")->required()->check(CLI::ExistingFile);
  solve->add_option("--algorithm", solve_algorithm)
      ->check(CLI::IsMember({"dp", "greedy", "independent", "exhaustive", "dp-equal-bw", "greedy-equal-bw"}));
  solve->add_option("--mode", solve_mode)->check(CLI::IsMember({"sharing", "independent"}));
  solve->add_option("--equal-bw-subchannels", solve_subchannels)->check(CLI::PositiveNumber);
  solve->add_option("--seed", solve_fading_seed, "draw fading with this seed instead of the file's gains");
  solve->add_option("--output,-o", solve_output, "write the schedule as JSON");

  // validate
  auto* validate = app.add_subcommand("validate", "check a schedule file against a scenario");
  std::string val_scenario, val_schedule;
  std::optional<std::string> val_output;
  validate->add_option("scenario", val_scenario)->required()->check(CLI::ExistingFile);
  validate->add_option("schedule", val_schedule)->required()->check(CLI::ExistingFile);
  validate->add_option("--output,-o", val_output, "write the report as JSON");

  // sweep
  auto* sweep = app.add_subcommand("sweep", "Monte-Carlo sweep over one axis, CSV out");
  std::optional<std::string> sweep_config;
  ParamFlags sweep_params;
  sweep_params.add(sweep);
  std::optional<std::string> sweep_axis;
  std::vector<double> sweep_values;
  std::vector<std::string> sweep_algorithms;
  std::optional<std::size_t> sweep_realizations;
  std::optional<std::uint64_t> sweep_seed;
  std::optional<int> sweep_subchannels;
  std::optional<unsigned> sweep_threads;
  std::optional<std::string> sweep_output, sweep_json;
  bool sweep_expected = false;
  bool sweep_no_timing = false;
  sweep->add_option("--config", sweep_config, "grid file")->check(CLI::ExistingFile);
  sweep->add_option("--axis", sweep_axis)
      ->check(CLI::IsMember({"bandwidth_hz", "users", "deadline_ms", "sharing_ratio", "subchannels"}));
  sweep->add_option("--values", sweep_values, "axis values");
  sweep->add_option("--algorithm", sweep_algorithms, "algorithms (repeatable)")
      ->check(CLI::IsMember({"dp", "greedy", "independent", "exhaustive", "dp-equal-bw", "greedy-equal-bw"}));
  sweep->add_option("--realizations", sweep_realizations)->check(CLI::PositiveNumber);
  sweep->add_option("--seed", sweep_seed, "base seed");
  sweep->add_option("--equal-bw-subchannels", sweep_subchannels)->check(CLI::PositiveNumber);
  sweep->add_option("--threads", sweep_threads, "worker threads (0 = all cores)");
  sweep->add_flag("--expected-rates", sweep_expected, "schedule on mean rates, score on faded rates");
  sweep->add_flag("--no-timing", sweep_no_timing, "write 0 in the timing column");
  sweep->add_option("--output,-o", sweep_output, "CSV file (default stdout)");
  sweep->add_option("--json", sweep_json, "also write rows and witness schedules as JSON");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitBadInput;
  }

  try {
    if (*gen) {
      pl::Scenario scenario;
      if (gen_tiny) {
        scenario = pl::generate_tiny_scenario(gen_seed, pl::parse_sharing_kind(gen_params.kind.value_or("backbone")));
      } else {
        scenario = pl::generate_scenario(gen_params.apply({}), gen_seed);
      }
      std::optional<pl::FadingRealization> fading;
      if (gen_fading) fading = pl::sample_fading(pl::mix_seed(gen_seed, 2), scenario.users.size());
      emit(gen_output, pl::scenario_to_json(scenario, fading ? &*fading : nullptr).dump(2) + "\n");
      return kExitOk;
    }

    if (*solve) {
      const auto doc = pl::read_json_file(solve_scenario);
      const auto scenario = pl::scenario_from_json(doc);
      const auto fading = solve_fading_seed ? pl::sample_fading(*solve_fading_seed, scenario.users.size())
                                            : pl::fading_from_json(doc, scenario.users.size());
      pl::SolverConfig config;
      config.mode = parse_mode(solve_mode);
      config.equal_bw_subchannels = solve_subchannels;
      const auto schedule = pl::solve_with(pl::parse_algorithm(solve_algorithm), scenario, fading, config);
      const auto report = pl::validate_schedule(schedule, scenario);
      std::cout << "algorithm " << solve_algorithm << "\n";
      print_schedule(schedule, scenario, std::cout);
      std::cout << "feasible " << (report.feasible ? "yes" : "no") << "\n";
      if (solve_output) pl::write_text_file(*solve_output, pl::schedule_to_json(schedule, scenario).dump(2) + "\n");
      return report.feasible ? kExitOk : kExitInfeasible;
    }

    if (*validate) {
      const auto scenario = pl::scenario_from_json(pl::read_json_file(val_scenario));
      const auto schedule = pl::schedule_from_json(pl::read_json_file(val_schedule), scenario);
      const auto report = pl::validate_schedule(schedule, scenario);
      std::cout << (report.feasible ? "feasible" : "infeasible") << "\n";
      std::cout << "served " << report.served_count << "\n";
      for (const auto& v : report.violations)
        std::cout << "violation " << pl::to_string(v.constraint) << " batch " << v.batch << ": " << v.detail << "\n";
      if (val_output) pl::write_text_file(*val_output, pl::report_to_json(report).dump(2) + "\n");
      return report.feasible ? kExitOk : kExitInfeasible;
    }

    if (*sweep) {
      pl::ExperimentGrid grid;
      if (sweep_config) grid = pl::grid_from_json(pl::read_json_file(*sweep_config));
      grid.defaults = sweep_params.apply(grid.defaults);
      if (sweep_axis) grid.axis = pl::parse_axis(*sweep_axis);
      if (!sweep_values.empty()) grid.values = sweep_values;
      if (!sweep_algorithms.empty()) {
        grid.algorithms.clear();
        for (const auto& a : sweep_algorithms) grid.algorithms.push_back(pl::parse_algorithm(a));
      }
      if (sweep_realizations) grid.realizations = *sweep_realizations;
      if (sweep_seed) grid.base_seed = *sweep_seed;
      if (sweep_subchannels) grid.solver.equal_bw_subchannels = *sweep_subchannels;
      if (sweep_threads) grid.threads = *sweep_threads;
      if (sweep_expected) grid.schedule_on_expected_rates = true;
      const auto result = pl::run_experiment_detailed(grid);
      emit(sweep_output, pl::to_csv(result.rows, !sweep_no_timing));
      if (sweep_json) pl::write_text_file(*sweep_json, pl::results_to_json(result).dump(2) + "\n");
      return kExitOk;
    }
  } catch (const pl::SearchRefused& e) {
    std::cerr << "refused: " << e.what() << " (estimated " << e.estimated_nodes() << " search nodes)\n";
    return kExitInfeasible;
  } catch (const pl::InvalidInput& e) {
    std::cerr << "bad input: " << e.what() << "\n";
    return kExitBadInput;
  } catch (const pl::WrongCase& e) {
    std::cerr << "bad input: " << e.what() << "\n";
    return kExitBadInput;
  } catch (const pl::ModelUnservable& e) {
    std::cerr << "infeasible: " << e.what() << "\n";
    return kExitInfeasible;
  } catch (const pl::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInfeasible;
  }
  return kExitOk;
}
