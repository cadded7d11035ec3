#pragma once

// JSON files for libraries, scenarios, schedules, sweep grids and results.
// Every document carries "format" and "version"; all quantities are SI.

#include <fstream>
#include <sstream>
#include <string>
#include <unordered_map>

#include "json.hpp"
#include "partial_loading/harness.hpp"
#include "partial_loading/oracle.hpp"
#include "partial_loading/scenario.hpp"
#include "partial_loading/schedule.hpp"

namespace partial_loading {

using Json = nlohmann::json;

inline constexpr int kFormatVersion = 1;

namespace io_detail {

inline Json header(const char* format) { return Json{{"format", format}, {"version", kFormatVersion}}; }

inline void check_header(const Json& j, const char* format) {
  if (!j.is_object()) throw InvalidInput(std::string(format) + ": expected a JSON object");
  if (j.value("format", std::string()) != format)
    throw InvalidInput(std::string("expected format '") + format + "', got '" + j.value("format", std::string()) + "'");
  if (j.value("version", 0) != kFormatVersion)
    throw InvalidInput(std::string(format) + ": unsupported version " + j.value("version", Json()).dump());
}

template <class T>
T get(const Json& j, const char* key) {
  if (!j.contains(key)) throw InvalidInput(std::string("missing field '") + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw InvalidInput(std::string("field '") + key + "': " + e.what());
  }
}

template <class T>
void get_opt(const Json& j, const char* key, T& out) {
  if (j.contains(key)) out = get<T>(j, key);
}

}  // namespace io_detail

// ---------------------------------------------------------------------------
// Library

inline Json library_body(const ModelLibrary& lib) {
  Json j;
  j["sharing_kind"] = lib.sharing_kind() == SharingKind::BackboneSharing ? "backbone" : "general";
  j["blocks"] = Json::array();
  for (const auto& b : lib.blocks()) j["blocks"].push_back({{"id", b.id}, {"size_bytes", b.size_bytes}});
  j["models"] = Json::array();
  for (const auto& m : lib.models())
    j["models"].push_back({{"id", m.id},
                           {"block_ids", m.block_ids},
                           {"mu_s", m.mu_s},
                           {"beta_s", m.beta_s},
                           {"weight_bytes", m.weight_bytes},
                           {"activation_bytes_per_sample", m.activation_bytes_per_sample}});
  if (lib.clusters()) {
    j["clusters"] = Json::array();
    for (const auto& c : *lib.clusters()) {
      Json members = Json::array();
      for (const auto& mem : c.members)
        members.push_back({{"model_id", mem.model_id}, {"shared_prefix_len", mem.shared_prefix_len}});
      j["clusters"].push_back({{"id", c.id}, {"backbone_block_ids", c.backbone_block_ids}, {"members", members}});
    }
  }
  return j;
}

inline Json library_to_json(const ModelLibrary& lib) {
  Json j = io_detail::header("partial-loading-library");
  j.update(library_body(lib));
  return j;
}

// weight_bytes may be omitted; it then defaults to the sum of the model's blocks.
inline ModelLibrary library_from_body(const Json& j) {
  using io_detail::get;
  const auto kind_name = j.value("sharing_kind", std::string("backbone"));
  if (kind_name != "backbone" && kind_name != "general")
    throw InvalidInput("sharing_kind must be 'backbone' or 'general'");
  std::vector<ParameterBlock> blocks;
  std::unordered_map<std::string, Bytes> sizes;
  for (const auto& b : get<Json>(j, "blocks")) {
    blocks.push_back({get<std::string>(b, "id"), get<Bytes>(b, "size_bytes")});
    sizes[blocks.back().id] = blocks.back().size_bytes;
  }
  std::vector<ModelSpec> models;
  for (const auto& m : get<Json>(j, "models")) {
    ModelSpec spec;
    spec.id = get<std::string>(m, "id");
    spec.block_ids = get<std::vector<std::string>>(m, "block_ids");
    spec.mu_s = get<double>(m, "mu_s");
    spec.beta_s = get<double>(m, "beta_s");
    spec.activation_bytes_per_sample = get<Bytes>(m, "activation_bytes_per_sample");
    if (m.contains("weight_bytes")) {
      spec.weight_bytes = get<Bytes>(m, "weight_bytes");
    } else {
      for (const auto& id : spec.block_ids) {
        auto it = sizes.find(id);
        if (it == sizes.end()) throw UnknownId("model '" + spec.id + "' references unknown block '" + id + "'");
        spec.weight_bytes += it->second;
      }
    }
    models.push_back(std::move(spec));
  }
  std::optional<std::vector<ClusterSpec>> clusters;
  if (j.contains("clusters")) {
    clusters.emplace();
    for (const auto& c : get<Json>(j, "clusters")) {
      ClusterSpec spec{get<std::string>(c, "id"), get<std::vector<std::string>>(c, "backbone_block_ids"), {}};
      for (const auto& mem : get<Json>(c, "members"))
        spec.members.push_back({get<std::string>(mem, "model_id"), get<std::size_t>(mem, "shared_prefix_len")});
      clusters->push_back(std::move(spec));
    }
  }
  return ModelLibrary(std::move(blocks), std::move(models), std::move(clusters),
                      kind_name == "backbone" ? SharingKind::BackboneSharing : SharingKind::General);
}

inline ModelLibrary library_from_json(const Json& j) {
  io_detail::check_header(j, "partial-loading-library");
  return library_from_body(j);
}

// ---------------------------------------------------------------------------
// Scenario

inline Json hardware_to_json(const HardwareProfile& hw) {
  return {{"disk_bw_bytes_per_s", hw.disk_bw_bytes_per_s},
          {"disk_fixed_s", hw.disk_fixed_s},
          {"pcie_bw_bytes_per_s", hw.pcie_bw_bytes_per_s},
          {"gpu_mem_bytes", hw.gpu_mem_bytes}};
}

inline HardwareProfile hardware_from_json(const Json& j, HardwareProfile hw = {}) {
  io_detail::get_opt(j, "disk_bw_bytes_per_s", hw.disk_bw_bytes_per_s);
  io_detail::get_opt(j, "disk_fixed_s", hw.disk_fixed_s);
  io_detail::get_opt(j, "pcie_bw_bytes_per_s", hw.pcie_bw_bytes_per_s);
  io_detail::get_opt(j, "gpu_mem_bytes", hw.gpu_mem_bytes);
  return hw;
}

inline Json scenario_to_json(const Scenario& s, const FadingRealization* fading = nullptr) {
  Json j = io_detail::header("partial-loading-scenario");
  j["library"] = library_body(s.library);
  j["users"] = Json::array();
  for (const auto& u : s.users)
    j["users"].push_back({{"id", u.id},
                          {"distance_m", u.distance_m},
                          {"data_bits", u.data_bits},
                          {"tx_psd_w_per_hz", u.tx_psd_w_per_hz},
                          {"requested_model", u.requested_model}});
  j["channel"] = {{"bandwidth_hz", s.env.total_bandwidth_hz},
                  {"noise_psd_w_per_hz", s.env.noise_psd_w_per_hz},
                  {"path_loss_exponent", s.env.path_loss_exponent}};
  j["hardware"] = hardware_to_json(s.hw);
  j["horizon_slots"] = s.horizon_slots;
  j["slot_s"] = s.slot_s;
  if (fading) j["fading_gains"] = fading->gains;
  return j;
}

// The channel noise may be given as noise_psd_w_per_hz or noise_dbm_per_hz.
inline Scenario scenario_from_json(const Json& j) {
  using io_detail::get;
  io_detail::check_header(j, "partial-loading-scenario");
  Scenario s;
  s.library = library_from_body(get<Json>(j, "library"));
  for (const auto& u : get<Json>(j, "users")) {
    UserSpec spec;
    spec.id = get<std::uint32_t>(u, "id");
    spec.distance_m = get<double>(u, "distance_m");
    spec.data_bits = get<double>(u, "data_bits");
    spec.tx_psd_w_per_hz = get<double>(u, "tx_psd_w_per_hz");
    spec.requested_model = get<std::string>(u, "requested_model");
    s.users.push_back(std::move(spec));
  }
  const auto channel = get<Json>(j, "channel");
  s.env.total_bandwidth_hz = get<double>(channel, "bandwidth_hz");
  s.env.path_loss_exponent = get<double>(channel, "path_loss_exponent");
  if (channel.contains("noise_psd_w_per_hz"))
    s.env.noise_psd_w_per_hz = get<double>(channel, "noise_psd_w_per_hz");
  else
    s.env.noise_psd_w_per_hz = dbm_per_hz_to_w_per_hz(get<double>(channel, "noise_dbm_per_hz"));
  if (j.contains("hardware")) s.hw = hardware_from_json(j.at("hardware"));
  s.horizon_slots = get<int>(j, "horizon_slots");
  io_detail::get_opt(j, "slot_s", s.slot_s);
  validate_scenario(s);
  return s;
}

// Stored gains, or unit gains when the file has none.
inline FadingRealization fading_from_json(const Json& j, std::size_t n_users) {
  if (!j.contains("fading_gains")) return FadingRealization::unit(n_users);
  FadingRealization f{io_detail::get<std::vector<double>>(j, "fading_gains")};
  if (f.gains.size() != n_users) throw InvalidInput("fading_gains must have one entry per user");
  for (double g : f.gains)
    if (!(g >= 0.0)) throw InvalidInput("fading gains must be >= 0");
  return f;
}

// ---------------------------------------------------------------------------
// Schedule

inline Json schedule_to_json(const Schedule& schedule, const Scenario& scenario) {
  Json j = io_detail::header("partial-loading-schedule");
  j["mode"] = std::string(to_string(schedule.mode));
  j["bandwidth"] = schedule.bandwidth.is_equal()
                       ? Json{{"policy", "equal"}, {"subchannels", schedule.bandwidth.equal_subchannels}}
                       : Json{{"policy", "optimal"}};
  j["served_count"] = schedule.served_count;
  j["completion_s"] = schedule.completion_s();
  j["gains"] = schedule.gains;
  j["batches"] = Json::array();
  for (const auto& b : schedule.batches) {
    Json users = Json::array();
    for (auto u : b.users) users.push_back(scenario.users.at(u).id);
    j["batches"].push_back({{"model", scenario.library.model(b.model).id},
                            {"users", users},
                            {"shares", b.shares},
                            {"latency",
                             {{"upload_s", b.latency.upload_s},
                              {"load_s", b.latency.load_s},
                              {"compute_s", b.latency.compute_s},
                              {"total_s", b.latency.total_s}}}});
  }
  return j;
}

// Batch latencies and shares are read as given; validation recomputes them.
inline Schedule schedule_from_json(const Json& j, const Scenario& scenario) {
  using io_detail::get;
  io_detail::check_header(j, "partial-loading-schedule");
  std::unordered_map<std::uint32_t, std::size_t> user_index;
  for (std::size_t k = 0; k < scenario.users.size(); ++k) user_index[scenario.users[k].id] = k;
  Schedule s;
  const auto mode = j.value("mode", std::string("sharing"));
  if (mode == "sharing")
    s.mode = LoadingMode::ParameterSharing;
  else if (mode == "independent")
    s.mode = LoadingMode::IndependentLoading;
  else
    throw InvalidInput("mode must be 'sharing' or 'independent'");
  if (j.contains("bandwidth")) {
    const auto bw = j.at("bandwidth");
    const auto policy = bw.value("policy", std::string("optimal"));
    if (policy == "equal")
      s.bandwidth = BandwidthPolicy::equal(get<int>(bw, "subchannels"));
    else if (policy != "optimal")
      throw InvalidInput("bandwidth policy must be 'optimal' or 'equal'");
  }
  io_detail::get_opt(j, "gains", s.gains);
  for (const auto& b : get<Json>(j, "batches")) {
    ScheduledBatch batch;
    batch.model = scenario.library.model_index(get<std::string>(b, "model"));
    for (auto id : get<std::vector<std::uint32_t>>(b, "users")) {
      auto it = user_index.find(id);
      if (it == user_index.end()) throw UnknownId("unknown user id " + std::to_string(id));
      batch.users.push_back(it->second);
    }
    io_detail::get_opt(b, "shares", batch.shares);
    if (b.contains("latency")) {
      const auto& lat = b.at("latency");
      io_detail::get_opt(lat, "upload_s", batch.latency.upload_s);
      io_detail::get_opt(lat, "load_s", batch.latency.load_s);
      io_detail::get_opt(lat, "compute_s", batch.latency.compute_s);
      io_detail::get_opt(lat, "total_s", batch.latency.total_s);
    }
    s.served_count += batch.users.size();
    s.batches.push_back(std::move(batch));
  }
  return s;
}

inline Json report_to_json(const FeasibilityReport& report) {
  Json j = io_detail::header("partial-loading-report");
  j["feasible"] = report.feasible;
  j["served_count"] = report.served_count;
  j["completion_s"] = report.completion_s;
  j["violations"] = Json::array();
  for (const auto& v : report.violations)
    j["violations"].push_back(
        {{"constraint", std::string(to_string(v.constraint))}, {"batch", v.batch}, {"detail", v.detail}});
  return j;
}

// ---------------------------------------------------------------------------
// Sweep grids and results

inline SharingKind parse_sharing_kind(const std::string& name) {
  if (name == "backbone") return SharingKind::BackboneSharing;
  if (name == "general") return SharingKind::General;
  throw InvalidInput("sharing kind must be 'backbone' or 'general'");
}

// Every field is optional and overrides the built-in default.
inline ScenarioParams params_from_json(const Json& j, ScenarioParams p = {}) {
  using io_detail::get_opt;
  get_opt(j, "n_users", p.n_users);
  get_opt(j, "bandwidth_hz", p.bandwidth_hz);
  get_opt(j, "deadline_s", p.deadline_s);
  get_opt(j, "slot_s", p.slot_s);
  get_opt(j, "radius_m", p.radius_m);
  get_opt(j, "tx_psd_w_per_hz", p.tx_psd_w_per_hz);
  get_opt(j, "noise_dbm_per_hz", p.noise_dbm_per_hz);
  get_opt(j, "path_loss_exponent", p.path_loss_exponent);
  get_opt(j, "data_bits", p.data_bits);
  get_opt(j, "zipf_exponent", p.zipf_exponent);
  if (j.contains("library_seed")) p.library_seed = io_detail::get<std::uint64_t>(j, "library_seed");
  if (j.contains("hardware")) p.hw = hardware_from_json(j.at("hardware"), p.hw);
  if (j.contains("library")) {
    const auto& lib = j.at("library");
    get_opt(lib, "n_clusters", p.library.n_clusters);
    get_opt(lib, "n_models", p.library.n_models);
    get_opt(lib, "sharing_ratio", p.library.sharing_ratio);
    get_opt(lib, "jitter_layers", p.library.jitter_layers);
    if (lib.contains("kind")) p.library.kind = parse_sharing_kind(io_detail::get<std::string>(lib, "kind"));
    if (lib.contains("profiles")) {
      p.library.profiles.clear();
      for (const auto& prof : lib.at("profiles")) {
        LayerProfile lp;
        lp.name = io_detail::get<std::string>(prof, "name");
        lp.layer_bytes = io_detail::get<std::vector<Bytes>>(prof, "layer_bytes");
        lp.mu_s = io_detail::get<double>(prof, "mu_s");
        lp.beta_s = io_detail::get<double>(prof, "beta_s");
        lp.activation_bytes_per_sample = io_detail::get<Bytes>(prof, "activation_bytes_per_sample");
        p.library.profiles.push_back(std::move(lp));
      }
    }
  }
  return p;
}

inline ExperimentGrid grid_from_json(const Json& j) {
  using io_detail::get;
  using io_detail::get_opt;
  io_detail::check_header(j, "partial-loading-grid");
  ExperimentGrid g;
  g.axis = parse_axis(get<std::string>(j, "axis"));
  g.values = get<std::vector<double>>(j, "values");
  if (j.contains("algorithms")) {
    g.algorithms.clear();
    for (const auto& name : get<std::vector<std::string>>(j, "algorithms")) g.algorithms.push_back(parse_algorithm(name));
  }
  get_opt(j, "realizations", g.realizations);
  get_opt(j, "base_seed", g.base_seed);
  get_opt(j, "threads", g.threads);
  get_opt(j, "schedule_on_expected_rates", g.schedule_on_expected_rates);
  get_opt(j, "equal_bw_subchannels", g.solver.equal_bw_subchannels);
  if (j.contains("defaults")) g.defaults = params_from_json(j.at("defaults"));
  return g;
}

inline Json results_to_json(const ExperimentResult& result, bool with_witnesses = true) {
  Json j = io_detail::header("partial-loading-results");
  j["rows"] = Json::array();
  for (std::size_t i = 0; i < result.rows.size(); ++i) {
    const auto& r = result.rows[i];
    Json row{{"axis", std::string(to_string(r.axis))},
             {"axis_value", r.axis_value},
             {"algorithm", std::string(to_string(r.algorithm))},
             {"mean_ratio", r.mean_ratio},
             {"stderr", r.stderr_ratio},
             {"mean_solve_s", r.mean_solve_s},
             {"realizations", r.realizations},
             {"seed", r.seed}};
    if (with_witnesses && i < result.witnesses.size())
      row["witness"] = schedule_to_json(result.witnesses[i], result.scenarios[i]);
    j["rows"].push_back(std::move(row));
  }
  return j;
}

inline Json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidInput("cannot open '" + path + "'");
  try {
    return Json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw InvalidInput("'" + path + "' is not valid JSON: " + e.what());
  }
}

inline void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw InvalidInput("cannot write '" + path + "'");
  out << text;
}

}  // namespace partial_loading
