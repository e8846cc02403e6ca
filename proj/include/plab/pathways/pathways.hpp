#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "plab/autodiff/tensor.hpp"
#include "plab/interventions/knockout.hpp"
#include "plab/probing/probe.hpp"
#include "plab/world/world.hpp"

namespace plab::pathways {

using interventions::Mode;

// One evaluated sample as it enters the boundary analysis.
struct BoundaryRecord {
  std::size_t sample_id = 0;
  Mode mode = Mode::kAAnchored;
  int z = 0;
  std::size_t popularity_rank = 1;

  friend bool operator==(const BoundaryRecord&, const BoundaryRecord&) = default;
};

std::vector<BoundaryRecord> boundary_records(std::span<const world::QASample> samples, std::span<const Mode> modes);

struct ModeGroup {
  Mode mode = Mode::kAAnchored;
  std::size_t n = 0;
  std::optional<double> accuracy;  // fraction with z = 0; absent when n = 0
  std::optional<double> mean_popularity_rank;
  std::vector<std::size_t> histogram;  // counts per popularity bin

  friend bool operator==(const ModeGroup&, const ModeGroup&) = default;
};

struct BoundaryReport {
  // Bin b holds ranks in [edges[b], edges[b + 1]).
  std::vector<std::size_t> bin_edges;
  ModeGroup q_anchored;
  ModeGroup a_anchored;
  std::size_t total = 0;

  friend bool operator==(const BoundaryReport&, const BoundaryReport&) = default;
};

// Power-of-two rank bins 1, 2, 4, ... covering max_rank.
std::vector<std::size_t> popularity_bins(std::size_t max_rank);

// Errors: rank outside the bins.
BoundaryReport boundary_stats(std::span<const BoundaryRecord> records, std::span<const std::size_t> bin_edges);

inline constexpr int kPathwayStatsVersion = 1;
// One row per record: sample_id, mode, z, popularity_rank.
std::string pathway_stats_csv(std::span<const BoundaryRecord> records);
std::vector<BoundaryRecord> parse_pathway_stats_csv(const std::string& text);

struct SelfAwarenessConfig {
  probing::ProbeTrainConfig probe;
  std::size_t null_permutations = 20;
  std::uint64_t seed = 0;
};

struct SelfAwarenessResult {
  // Gate: predicts the QAnchored probability from intervention-free features.
  probing::Probe probe;
  double auc = 0.0;                // on the evaluation rows
  std::vector<double> null_aucs;   // train and eval labels both shuffled
  double null_mean = 0.0;
  double null_sd = 0.0;

  // auc > 0.5 + 3 sd of the null.
  bool above_null() const noexcept { return auc > 0.5 + 3.0 * null_sd; }
};

// Label 1 = QAnchored. Errors: a single mode class in either split.
SelfAwarenessResult train_self_awareness_probe(const ad::Tensor& train_features, std::span<const Mode> train_modes,
                                               const ad::Tensor& eval_features, std::span<const Mode> eval_modes,
                                               const probing::ProbeAddress& address, const SelfAwarenessConfig& config);

std::vector<int> mode_labels(std::span<const Mode> modes);

inline constexpr int kSelfAwarenessVersion = 1;
// Rows: kind (observed | null), replicate, auc.
std::string self_awareness_csv(const SelfAwarenessResult& result);
// Restores auc, null_aucs and the null moments; the probe is not part of the table.
SelfAwarenessResult parse_self_awareness_csv(const std::string& text);

}  // namespace plab::pathways
