#pragma once

// Parameter-sharing model libraries: data model, validation, detection of the
// clustered backbone-sharing structure, and synthetic library generation.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "partial_loading/errors.hpp"

namespace partial_loading {

using Bytes = std::uint64_t;

struct ParameterBlock {
  std::string id;
  Bytes size_bytes = 0;
};

struct ModelSpec {
  std::string id;
  // Ordered bottom-to-top; position l (1-based) is layer l.
  std::vector<std::string> block_ids;
  double mu_s = 0.0;    // compute seconds per request in a batch
  double beta_s = 0.0;  // fixed compute seconds per batch
  Bytes weight_bytes = 0;
  Bytes activation_bytes_per_sample = 0;
};

struct ClusterMember {
  std::string model_id;
  std::size_t shared_prefix_len = 0;
};

struct ClusterSpec {
  std::string id;
  std::vector<std::string> backbone_block_ids;
  std::vector<ClusterMember> members;
};

enum class SharingKind { BackboneSharing, General };

inline std::string_view to_string(SharingKind kind) {
  return kind == SharingKind::BackboneSharing ? "backbone_sharing" : "general";
}

// Immutable after construction. Ids are resolved once; dangling references
// are kept out of the resolved block sets and reported by validate_library.
class ModelLibrary {
 public:
  ModelLibrary() = default;

  ModelLibrary(std::vector<ParameterBlock> blocks, std::vector<ModelSpec> models,
               std::optional<std::vector<ClusterSpec>> clusters = std::nullopt,
               SharingKind kind = SharingKind::General)
      : blocks_(std::move(blocks)),
        models_(std::move(models)),
        clusters_(std::move(clusters)),
        kind_(kind) {
    for (std::size_t b = 0; b < blocks_.size(); ++b) block_index_.emplace(blocks_[b].id, b);
    for (std::size_t m = 0; m < models_.size(); ++m) model_index_.emplace(models_[m].id, m);
    block_sets_.resize(models_.size());
    for (std::size_t m = 0; m < models_.size(); ++m) {
      auto& set = block_sets_[m];
      for (const auto& id : models_[m].block_ids) {
        if (auto b = find_block(id)) set.push_back(*b);
      }
      std::sort(set.begin(), set.end());
      set.erase(std::unique(set.begin(), set.end()), set.end());
    }
  }

  const std::vector<ParameterBlock>& blocks() const noexcept { return blocks_; }
  const std::vector<ModelSpec>& models() const noexcept { return models_; }
  const std::optional<std::vector<ClusterSpec>>& clusters() const noexcept { return clusters_; }
  SharingKind sharing_kind() const noexcept { return kind_; }
  std::size_t model_count() const noexcept { return models_.size(); }

  std::optional<std::size_t> find_block(std::string_view id) const {
    auto it = block_index_.find(id);
    if (it == block_index_.end()) return std::nullopt;
    return it->second;
  }

  std::optional<std::size_t> find_model(std::string_view id) const {
    auto it = model_index_.find(id);
    if (it == model_index_.end()) return std::nullopt;
    return it->second;
  }

  std::size_t model_index(std::string_view id) const {
    if (auto m = find_model(id)) return *m;
    throw UnknownId("unknown model id '" + std::string(id) + "'");
  }

  const ModelSpec& model(std::size_t index) const { return models_.at(index); }

  // Sorted, de-duplicated indices of the resolved blocks of a model.
  std::span<const std::size_t> block_set(std::size_t model) const { return block_sets_.at(model); }

  Bytes block_size(std::size_t block) const { return blocks_.at(block).size_bytes; }

  // Block sizes of a model in layer order (unresolved ids count as 0 bytes).
  std::vector<Bytes> layer_sizes(std::size_t model) const {
    std::vector<Bytes> sizes;
    for (const auto& id : models_.at(model).block_ids) {
      auto b = find_block(id);
      sizes.push_back(b ? blocks_[*b].size_bytes : 0);
    }
    return sizes;
  }

 private:
  std::vector<ParameterBlock> blocks_;
  std::vector<ModelSpec> models_;
  std::optional<std::vector<ClusterSpec>> clusters_;
  SharingKind kind_ = SharingKind::General;
  std::map<std::string, std::size_t, std::less<>> block_index_;
  std::map<std::string, std::size_t, std::less<>> model_index_;
  std::vector<std::vector<std::size_t>> block_sets_;
};

// ---------------------------------------------------------------------------
// Validation

struct Diagnostic {
  std::string invariant;  // short machine-readable name
  std::string subject;    // offending id
  std::string detail;
  bool structural = true;  // false for cluster/sharing-structure diagnostics
};

inline std::vector<Diagnostic> validate_library(const ModelLibrary& lib) {
  std::vector<Diagnostic> out;
  auto report = [&](std::string inv, std::string subject, std::string detail, bool structural = true) {
    out.push_back({std::move(inv), std::move(subject), std::move(detail), structural});
  };

  std::set<std::string, std::less<>> seen_blocks;
  for (const auto& block : lib.blocks()) {
    if (!seen_blocks.insert(block.id).second)
      report("unique_block_id", block.id, "duplicate block id");
    if (block.size_bytes == 0) report("block_size_positive", block.id, "block size must be > 0");
  }

  std::set<std::string, std::less<>> seen_models;
  for (std::size_t m = 0; m < lib.models().size(); ++m) {
    const auto& model = lib.models()[m];
    if (!seen_models.insert(model.id).second) report("unique_model_id", model.id, "duplicate model id");
    if (model.block_ids.empty()) report("model_blocks_nonempty", model.id, "model has no blocks");
    Bytes total = 0;
    bool dangling = false;
    std::set<std::string, std::less<>> in_model;
    for (const auto& id : model.block_ids) {
      if (!in_model.insert(id).second)
        report("model_block_unique", model.id, "block '" + id + "' listed twice");
      if (auto b = lib.find_block(id)) {
        total += lib.block_size(*b);
      } else {
        dangling = true;
        report("block_resolves", model.id, "dangling block id '" + id + "'");
      }
    }
    if (!dangling && total != model.weight_bytes)
      report("weight_bytes_sum", model.id,
             "weight_bytes " + std::to_string(model.weight_bytes) + " != sum of blocks " +
                 std::to_string(total));
    if (!(model.mu_s >= 0.0)) report("mu_nonnegative", model.id, "mu must be >= 0");
    if (!(model.beta_s >= 0.0)) report("beta_nonnegative", model.id, "beta must be >= 0");
  }

  const auto& clusters = lib.clusters();
  if (!clusters) {
    if (lib.sharing_kind() == SharingKind::BackboneSharing)
      report("bs_requires_clusters", "library", "backbone-sharing library declares no clusters", false);
    return out;
  }

  std::vector<int> membership(lib.model_count(), 0);
  std::map<std::string, std::string, std::less<>> block_owner_cluster;
  for (const auto& cluster : *clusters) {
    for (const auto& member : cluster.members) {
      auto m = lib.find_model(member.model_id);
      if (!m) {
        report("member_resolves", cluster.id, "unknown member model '" + member.model_id + "'", false);
        continue;
      }
      ++membership[*m];
      const auto& blocks = lib.model(*m).block_ids;
      if (member.shared_prefix_len > cluster.backbone_block_ids.size() ||
          member.shared_prefix_len > blocks.size()) {
        report("prefix_len_range", member.model_id,
               "shared prefix length " + std::to_string(member.shared_prefix_len) +
                   " exceeds backbone of cluster '" + cluster.id + "'",
               false);
        continue;
      }
      for (std::size_t l = 0; l < member.shared_prefix_len; ++l) {
        if (blocks[l] != cluster.backbone_block_ids[l]) {
          report("prefix_matches_backbone", member.model_id,
                 "model '" + member.model_id + "' diverges from backbone of cluster '" + cluster.id +
                     "' at layer " + std::to_string(l + 1),
                 false);
          break;
        }
      }
      // Task-specific layers must be private to this model.
      for (std::size_t l = member.shared_prefix_len; l < blocks.size(); ++l) {
        auto b = lib.find_block(blocks[l]);
        if (!b) continue;
        for (std::size_t other = 0; other < lib.model_count(); ++other) {
          if (other == *m) continue;
          auto set = lib.block_set(other);
          if (std::binary_search(set.begin(), set.end(), *b)) {
            report("task_layers_private", member.model_id,
                   "task-specific block '" + blocks[l] + "' also used by model '" + lib.model(other).id + "'",
                   false);
            break;
          }
        }
      }
    }
    std::set<std::string, std::less<>> cluster_blocks(cluster.backbone_block_ids.begin(),
                                                      cluster.backbone_block_ids.end());
    for (const auto& member : cluster.members)
      if (auto m = lib.find_model(member.model_id))
        for (const auto& id : lib.model(*m).block_ids) cluster_blocks.insert(id);
    for (const auto& id : cluster_blocks) {
      auto [it, inserted] = block_owner_cluster.emplace(id, cluster.id);
      if (!inserted && it->second != cluster.id)
        report("clusters_disjoint", cluster.id,
               "block '" + id + "' shared with cluster '" + it->second + "'", false);
    }
  }
  if (lib.sharing_kind() == SharingKind::BackboneSharing) {
    for (std::size_t m = 0; m < lib.model_count(); ++m)
      if (membership[m] != 1)
        report("single_cluster_membership", lib.model(m).id,
               "model belongs to " + std::to_string(membership[m]) + " clusters", false);
  }
  return out;
}

inline bool has_structural_errors(const std::vector<Diagnostic>& diagnostics) {
  return std::any_of(diagnostics.begin(), diagnostics.end(), [](const Diagnostic& d) { return d.structural; });
}

// ---------------------------------------------------------------------------
// Load deltas

// Bytes of `next` that are not resident after `prev` (all of `next` when
// there is no previous model).
inline Bytes shared_delta_size(const ModelLibrary& lib, std::optional<std::size_t> prev, std::size_t next) {
  if (next >= lib.model_count()) throw UnknownId("model index out of range");
  auto next_set = lib.block_set(next);
  if (!prev) {
    Bytes total = 0;
    for (auto b : next_set) total += lib.block_size(b);
    return total;
  }
  if (*prev >= lib.model_count()) throw UnknownId("model index out of range");
  auto prev_set = lib.block_set(*prev);
  Bytes total = 0;
  auto p = prev_set.begin();
  for (auto b : next_set) {
    while (p != prev_set.end() && *p < b) ++p;
    if (p == prev_set.end() || *p != b) total += lib.block_size(b);
  }
  return total;
}

inline Bytes shared_delta_size(const ModelLibrary& lib, std::optional<std::string_view> prev,
                               std::string_view next) {
  std::optional<std::size_t> prev_index;
  if (prev) prev_index = lib.model_index(*prev);
  return shared_delta_size(lib, prev_index, lib.model_index(next));
}

// ---------------------------------------------------------------------------
// Backbone-sharing detection

struct SharingClassification {
  SharingKind kind = SharingKind::General;
  std::vector<ClusterSpec> clusters;  // empty for General
  std::string reason;                 // why General, if so
};

// Union-find over shared-block incidence gives the maximal clusters; each
// cluster must then satisfy the common-backbone prefix condition.
inline SharingClassification classify_sharing(const ModelLibrary& lib) {
  auto diagnostics = validate_library(lib);
  if (has_structural_errors(diagnostics))
    throw InvalidInput("library fails structural validation: " + diagnostics.front().subject + ": " +
                       diagnostics.front().detail);

  const std::size_t n = lib.model_count();
  std::vector<std::size_t> users_of_block(lib.blocks().size(), 0);
  std::vector<std::optional<std::size_t>> first_owner(lib.blocks().size());
  std::vector<std::size_t> parent(n);
  std::iota(parent.begin(), parent.end(), std::size_t{0});
  auto find = [&](std::size_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  for (std::size_t m = 0; m < n; ++m) {
    for (auto b : lib.block_set(m)) {
      ++users_of_block[b];
      if (first_owner[b]) {
        auto a = find(*first_owner[b]), c = find(m);
        if (a != c) parent[std::max(a, c)] = std::min(a, c);
      } else {
        first_owner[b] = m;
      }
    }
  }

  SharingClassification result;
  std::vector<std::size_t> prefix_len(n, 0);
  for (std::size_t m = 0; m < n; ++m) {
    const auto& ids = lib.model(m).block_ids;
    std::size_t l = 0;
    while (l < ids.size() && users_of_block[*lib.find_block(ids[l])] >= 2) ++l;
    for (std::size_t pos = l; pos < ids.size(); ++pos) {
      if (users_of_block[*lib.find_block(ids[pos])] >= 2) {
        result.reason = "model '" + lib.model(m).id + "' shares block '" + ids[pos] + "' at layer " +
                        std::to_string(pos + 1) + " outside its bottom-layer prefix";
        return result;
      }
    }
    prefix_len[m] = l;
  }

  std::map<std::size_t, std::vector<std::size_t>> groups;  // root -> models, ordered by first model
  for (std::size_t m = 0; m < n; ++m) groups[find(m)].push_back(m);

  for (const auto& [root, members] : groups) {
    std::size_t longest = members.front();
    for (auto m : members)
      if (prefix_len[m] > prefix_len[longest]) longest = m;
    const auto& backbone_src = lib.model(longest).block_ids;
    ClusterSpec cluster;
    cluster.id = "cluster" + std::to_string(result.clusters.size());
    cluster.backbone_block_ids.assign(backbone_src.begin(),
                                      backbone_src.begin() + static_cast<std::ptrdiff_t>(prefix_len[longest]));
    for (auto m : members) {
      const auto& ids = lib.model(m).block_ids;
      for (std::size_t l = 0; l < prefix_len[m]; ++l) {
        if (ids[l] != cluster.backbone_block_ids[l]) {
          result.reason = "models '" + lib.model(m).id + "' and '" + lib.model(longest).id +
                          "' share blocks but their bottom layers diverge at layer " + std::to_string(l + 1);
          result.clusters.clear();
          return result;
        }
      }
      cluster.members.push_back({lib.model(m).id, prefix_len[m]});
    }
    result.clusters.push_back(std::move(cluster));
  }
  result.kind = SharingKind::BackboneSharing;
  return result;
}

// ---------------------------------------------------------------------------
// Synthetic libraries

// Per-layer parameter bytes of a base (pre-trained) architecture together with
// the compute and activation constants of models fine-tuned from it.
struct LayerProfile {
  std::string name;
  std::vector<Bytes> layer_bytes;
  double mu_s = 0.0;
  double beta_s = 0.0;
  Bytes activation_bytes_per_sample = 0;
};

// fp32 ResNet-18/34/50 with a 10-class head. Each conv layer carries its
// batch-norm tensors (4 per channel); projection shortcuts are folded into the
// layer that closes their block.
inline LayerProfile resnet_profile(int depth) {
  constexpr Bytes kFloat = 4;
  constexpr Bytes kClasses = 10;
  std::vector<Bytes> params;
  params.push_back(3 * 64 * 49 + 4 * 64);
  const Bytes widths[4] = {64, 128, 256, 512};
  Bytes in = 64;
  LayerProfile profile;
  if (depth == 18 || depth == 34) {
    const int blocks18[4] = {2, 2, 2, 2};
    const int blocks34[4] = {3, 4, 6, 3};
    const int* blocks = depth == 18 ? blocks18 : blocks34;
    for (int s = 0; s < 4; ++s) {
      for (int b = 0; b < blocks[s]; ++b) {
        const Bytes c = widths[s];
        params.push_back(in * c * 9 + 4 * c);
        Bytes second = c * c * 9 + 4 * c;
        if (in != c) second += in * c + 4 * c;
        params.push_back(second);
        in = c;
      }
    }
    params.push_back(512 * kClasses + kClasses);
    profile.name = "resnet" + std::to_string(depth);
    profile.mu_s = depth == 18 ? 0.6e-3 : 1.1e-3;
    profile.beta_s = depth == 18 ? 3.0e-3 : 5.0e-3;
    profile.activation_bytes_per_sample = depth == 18 ? 4'000'000 : 5'000'000;
  } else if (depth == 50) {
    const int blocks[4] = {3, 4, 6, 3};
    for (int s = 0; s < 4; ++s) {
      for (int b = 0; b < blocks[s]; ++b) {
        const Bytes w = widths[s];
        params.push_back(in * w + 4 * w);
        params.push_back(w * w * 9 + 4 * w);
        Bytes third = w * 4 * w + 16 * w;
        if (in != 4 * w) third += in * 4 * w + 16 * w;
        params.push_back(third);
        in = 4 * w;
      }
    }
    params.push_back(2048 * kClasses + kClasses);
    profile.name = "resnet50";
    profile.mu_s = 1.6e-3;
    profile.beta_s = 7.0e-3;
    profile.activation_bytes_per_sample = 8'000'000;
  } else {
    throw InvalidInput("no built-in profile for resnet depth " + std::to_string(depth));
  }
  for (auto p : params) profile.layer_bytes.push_back(p * kFloat);
  return profile;
}

inline std::vector<LayerProfile> default_profiles() {
  return {resnet_profile(18), resnet_profile(34), resnet_profile(50)};
}

struct SynthParams {
  std::size_t n_clusters = 3;  // one base architecture per cluster
  std::size_t n_models = 50;   // spread as evenly as possible over clusters
  std::vector<LayerProfile> profiles = default_profiles();
  double sharing_ratio = 0.85;  // target mean of l_i / L_i
  SharingKind kind = SharingKind::BackboneSharing;
  int jitter_layers = 1;  // +/- uniform jitter on each model's shared-layer count
};

// Mean over models of (shared layers / total layers), measured from cluster
// declarations when present, otherwise from blocks shared with any other model.
inline double realized_sharing_ratio(const ModelLibrary& lib) {
  if (lib.model_count() == 0) return 0.0;
  std::vector<std::size_t> shared(lib.model_count(), 0);
  if (lib.clusters()) {
    for (const auto& c : *lib.clusters())
      for (const auto& mem : c.members) shared[lib.model_index(mem.model_id)] = mem.shared_prefix_len;
  } else {
    std::vector<std::size_t> users(lib.blocks().size(), 0);
    for (std::size_t m = 0; m < lib.model_count(); ++m)
      for (auto b : lib.block_set(m)) ++users[b];
    for (std::size_t m = 0; m < lib.model_count(); ++m)
      for (auto b : lib.block_set(m)) shared[m] += users[b] >= 2 ? 1 : 0;
  }
  double sum = 0.0;
  for (std::size_t m = 0; m < lib.model_count(); ++m)
    sum += static_cast<double>(shared[m]) / static_cast<double>(lib.model(m).block_ids.size());
  return sum / static_cast<double>(lib.model_count());
}

namespace detail {

// Per-model shared-layer counts: the target plus jitter, then nudged one layer
// at a time until the mean ratio is within half a layer of the target.
inline std::vector<long> synth_shared_counts(const SynthParams& params, const std::vector<std::size_t>& layers,
                                             std::mt19937_64& rng) {
  std::vector<long> shared(layers.size());
  std::uniform_int_distribution<int> jitter(-params.jitter_layers, params.jitter_layers);
  double sum = 0.0;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const double target = params.sharing_ratio * static_cast<double>(layers[i]);
    std::bernoulli_distribution round_up(target - std::floor(target));
    const long drawn = static_cast<long>(std::floor(target)) + (round_up(rng) ? 1 : 0) + jitter(rng);
    shared[i] = std::clamp(drawn, 1L, static_cast<long>(layers[i]) - 1);
    sum += static_cast<double>(shared[i]) / static_cast<double>(layers[i]);
  }
  const double n = static_cast<double>(layers.size());
  for (std::size_t guard = 0; guard < 4 * layers.size(); ++guard) {
    const double gap = sum / n - params.sharing_ratio;
    std::optional<std::size_t> pick;
    double step = 0.0;
    for (std::size_t i = 0; i < layers.size(); ++i) {
      const double unit = 1.0 / static_cast<double>(layers[i]);
      const bool movable = gap > 0 ? shared[i] > 1 : shared[i] < static_cast<long>(layers[i]) - 1;
      if (!movable || std::abs(gap) <= 0.5 * unit / n) continue;
      const double r = static_cast<double>(shared[i]) * unit;
      if (!pick || (gap > 0 ? r > step : r < step)) {
        pick = i;
        step = r;
      }
    }
    if (!pick) break;
    const double unit = 1.0 / static_cast<double>(layers[*pick]);
    shared[*pick] += gap > 0 ? -1 : 1;
    sum += gap > 0 ? -unit : unit;
  }
  return shared;
}

inline ModelLibrary synth_draw(const SynthParams& params, std::mt19937_64& rng) {
  std::vector<std::size_t> layer_counts;
  for (std::size_t c = 0; c < params.n_clusters; ++c) {
    const std::size_t count = params.n_models / params.n_clusters + (c < params.n_models % params.n_clusters ? 1 : 0);
    layer_counts.insert(layer_counts.end(), count, params.profiles[c % params.profiles.size()].layer_bytes.size());
  }
  const auto counts = synth_shared_counts(params, layer_counts, rng);
  std::vector<ParameterBlock> blocks;
  std::vector<ModelSpec> models;
  std::vector<ClusterSpec> clusters;

  for (std::size_t c = 0; c < params.n_clusters; ++c) {
    const auto& profile = params.profiles[c % params.profiles.size()];
    const std::size_t layers = profile.layer_bytes.size();
    const std::string base = "c" + std::to_string(c);
    ClusterSpec cluster{base, {}, {}};
    for (std::size_t l = 0; l < layers; ++l) cluster.backbone_block_ids.push_back(base + ".L" + std::to_string(l + 1));

    std::vector<bool> base_block_used(layers, false);
    const std::size_t count = params.n_models / params.n_clusters + (c < params.n_models % params.n_clusters ? 1 : 0);
    const std::size_t first = models.size();
    std::vector<std::vector<bool>> placement(count, std::vector<bool>(layers, false));
    if (params.kind == SharingKind::BackboneSharing) {
      for (std::size_t k = 0; k < count; ++k)
        for (long l = 0; l < counts[first + k]; ++l) placement[k][static_cast<std::size_t>(l)] = true;
    } else {
      // Shared layers sit at random positions of one cluster-wide permutation.
      // Models fill the least-covered positions first, largest count first, so
      // that base layers end up used by two or more models where possible.
      std::vector<std::size_t> positions(layers);
      std::iota(positions.begin(), positions.end(), std::size_t{0});
      std::shuffle(positions.begin(), positions.end(), rng);
      long widest = 0;
      for (std::size_t k = 0; k < count; ++k) widest = std::max(widest, counts[first + k]);
      std::vector<std::size_t> coverage(static_cast<std::size_t>(widest), 0);
      std::vector<std::size_t> order(count);
      std::iota(order.begin(), order.end(), std::size_t{0});
      std::stable_sort(order.begin(), order.end(),
                       [&](std::size_t a, std::size_t b) { return counts[first + a] > counts[first + b]; });
      for (auto k : order) {
        std::vector<std::size_t> slots(coverage.size());
        std::iota(slots.begin(), slots.end(), std::size_t{0});
        std::shuffle(slots.begin(), slots.end(), rng);
        std::stable_sort(slots.begin(), slots.end(),
                         [&](std::size_t a, std::size_t b) { return coverage[a] < coverage[b]; });
        for (long l = 0; l < counts[first + k]; ++l) {
          const std::size_t slot = slots[static_cast<std::size_t>(l)];
          ++coverage[slot];
          placement[k][positions[slot]] = true;
        }
      }
    }
    for (std::size_t k = 0; k < count; ++k) {
      const long shared = counts[models.size()];
      const std::vector<bool>& from_base = placement[k];

      ModelSpec model;
      model.id = "m" + std::to_string(models.size());
      model.mu_s = profile.mu_s;
      model.beta_s = profile.beta_s;
      model.activation_bytes_per_sample = profile.activation_bytes_per_sample;
      for (std::size_t l = 0; l < layers; ++l) {
        if (from_base[l]) {
          model.block_ids.push_back(cluster.backbone_block_ids[l]);
          base_block_used[l] = true;
        } else {
          model.block_ids.push_back(model.id + ".L" + std::to_string(l + 1));
          blocks.push_back({model.block_ids.back(), profile.layer_bytes[l]});
        }
        model.weight_bytes += profile.layer_bytes[l];
      }
      cluster.members.push_back({model.id, static_cast<std::size_t>(shared)});
      models.push_back(std::move(model));
    }
    for (std::size_t l = 0; l < layers; ++l)
      if (base_block_used[l]) blocks.push_back({cluster.backbone_block_ids[l], profile.layer_bytes[l]});
    if (params.kind == SharingKind::BackboneSharing) {
      // Only the layers some member actually uses form the backbone.
      std::size_t used = 0;
      for (const auto& mem : cluster.members) used = std::max(used, mem.shared_prefix_len);
      cluster.backbone_block_ids.resize(used);
      clusters.push_back(std::move(cluster));
    }
  }

  std::sort(blocks.begin(), blocks.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
  ModelLibrary lib = params.kind == SharingKind::BackboneSharing
                         ? ModelLibrary(std::move(blocks), std::move(models), std::move(clusters),
                                        SharingKind::BackboneSharing)
                         : ModelLibrary(std::move(blocks), std::move(models), std::nullopt, SharingKind::General);
  return lib;
}

}  // namespace detail

// Deterministic given the seed. One block per layer. In backbone-sharing mode
// model i reuses the first l_i layers of its cluster's base model; in general
// mode it reuses l_i base layers at uniformly random positions. In both modes
// the remaining layers are fresh blocks of the same size.
inline ModelLibrary synth_generate(const SynthParams& params, std::uint64_t seed) {
  constexpr double kRatioTolerance = 0.05;
  if (!(params.sharing_ratio > 0.0 && params.sharing_ratio < 1.0))
    throw InvalidInput("sharing ratio must lie in (0, 1)");
  if (params.n_clusters == 0 || params.n_models == 0 || params.profiles.empty())
    throw InvalidInput("cluster count, model count and profile list must be positive");
  for (const auto& p : params.profiles) {
    const double layers = static_cast<double>(p.layer_bytes.size());
    if (p.layer_bytes.size() < 2) throw InvalidInput("profile '" + p.name + "' needs at least 2 layers");
    if ((layers - 1.0) / layers < params.sharing_ratio - kRatioTolerance ||
        1.0 / layers > params.sharing_ratio + kRatioTolerance)
      throw InvalidInput("sharing ratio " + std::to_string(params.sharing_ratio) +
                         " is infeasible for profile '" + p.name + "'");
  }

  std::mt19937_64 rng(seed);
  // General mode can leave a base layer with a single user, which does not
  // count as shared; redraw (deterministically) until the ratio is on target.
  constexpr int kAttempts = 64;
  double realized = 0.0;
  for (int attempt = 0; attempt < kAttempts; ++attempt) {
    ModelLibrary lib = detail::synth_draw(params, rng);
    realized = realized_sharing_ratio(lib);
    if (std::abs(realized - params.sharing_ratio) <= kRatioTolerance) return lib;
  }
  throw InvalidInput("sharing ratio " + std::to_string(params.sharing_ratio) +
                     " not achievable with these layer counts (realized " + std::to_string(realized) + ")");
}

}  // namespace partial_loading
