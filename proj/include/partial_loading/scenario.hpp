#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "partial_loading/errors.hpp"
#include "partial_loading/latency.hpp"
#include "partial_loading/model_library.hpp"
#include "partial_loading/radio.hpp"

namespace partial_loading {

// One scheduling problem: library, users and their requests, uplink channel,
// server hardware and the common deadline of horizon_slots * slot_s.
struct Scenario {
  ModelLibrary library;
  std::vector<UserSpec> users;
  ChannelEnv env;
  HardwareProfile hw;
  int horizon_slots = 0;
  double slot_s = 0.01;

  double deadline_s() const { return horizon_slots * slot_s; }
};

// Model index requested by each user.
inline std::vector<std::size_t> request_indices(const Scenario& s) {
  std::vector<std::size_t> out;
  out.reserve(s.users.size());
  for (const auto& u : s.users) out.push_back(s.library.model_index(u.requested_model));
  return out;
}

inline void validate_scenario(const Scenario& s) {
  if (s.horizon_slots < 1) throw InvalidInput("horizon must be at least one slot");
  if (!(s.slot_s > 0.0)) throw InvalidInput("slot duration must be > 0");
  check_env(s.env);
  check_hardware(s.hw);
  auto diagnostics = validate_library(s.library);
  if (has_structural_errors(diagnostics))
    throw InvalidInput("library: " + diagnostics.front().subject + ": " + diagnostics.front().detail);
  for (const auto& u : s.users) {
    check_user(u);
    if (!s.library.find_model(u.requested_model))
      throw UnknownId("user " + std::to_string(u.id) + " requests unknown model '" + u.requested_model + "'");
  }
}

}  // namespace partial_loading
