#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "plab/interventions/stats.hpp"
#include "plab/lm/intervention.hpp"
#include "plab/lm/model.hpp"
#include "plab/probing/probe.hpp"
#include "plab/world/world.hpp"

namespace plab::interventions {

enum class Mode { kQAnchored, kAAnchored };
std::string mode_name(Mode m);
Mode parse_mode(const std::string& s);

// QAnchored iff the thresholded prediction differs before and after.
Mode mode_from(double p_before, double p_after, double threshold);

// Which query rows lose access to the blocked keys.
enum class KnockoutRows {
  kAfterLastExactQuestion,  // every i > last exact-question position
  kAnswerRegion,            // only generated-answer positions
};

struct KnockoutConfig {
  double threshold = 0.5;
  lm::KnockoutMode mode = lm::KnockoutMode::kPostSoftmax;
  KnockoutRows rows = KnockoutRows::kAfterLastExactQuestion;
};

// Edges (l, i, j) for l <= last_layer, chosen rows i, j in `keys` with j <= i.
std::vector<lm::AttentionEdge> knockout_edges(const world::QASample& sample, std::size_t last_layer,
                                              std::span<const std::size_t> keys, KnockoutRows rows);

struct KnockoutRow {
  std::size_t sample_id = 0;
  std::size_t layer = 0;
  double p_before = 0.0;
  double p_after = 0.0;
  double delta_p = 0.0;  // p_after - p_before
  Mode mode = Mode::kAAnchored;
};

// probes[k] must sit at layer k. Rows are ordered by sample, then layer.
std::vector<KnockoutRow> knockout_experiment(const lm::Model& model, std::span<const probing::Probe> probes,
                                             std::span<const world::QASample> samples, const KnockoutConfig& config);

struct RandomKnockoutResult {
  std::vector<KnockoutRow> rows;
  std::vector<std::size_t> skipped;  // samples without non-exact question tokens
};

// Same protocol with keys drawn (seeded per sample) from non-exact question
// positions, |E_Q| of them when available.
RandomKnockoutResult knockout_control_random(const lm::Model& model, std::span<const probing::Probe> probes,
                                             std::span<const world::QASample> samples, const KnockoutConfig& config,
                                             std::uint64_t seed);

// Question-region positions outside the exact question spans.
std::vector<std::size_t> non_exact_question_positions(const world::QASample& sample);

struct LayerSummary {
  std::size_t layer = 0;
  std::size_t n_q = 0;
  std::size_t n_a = 0;
  Interval delta_p_q;  // absent groups leave a zero interval
  Interval delta_p_a;
  double median_abs_delta = 0.0;
};

std::vector<LayerSummary> summarize_knockout(std::span<const KnockoutRow> rows, std::size_t n_layers,
                                             std::size_t resamples, std::uint64_t seed);

// Mode per sample id at one layer; samples without a row stay kAAnchored and
// are reported through `covered`.
std::vector<Mode> modes_at_layer(std::span<const KnockoutRow> rows, std::size_t layer, std::size_t n_samples,
                                 std::vector<bool>* covered = nullptr);

}  // namespace plab::interventions
