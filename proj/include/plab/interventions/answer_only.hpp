#pragma once

#include <span>
#include <vector>

#include "plab/interventions/knockout.hpp"
#include "plab/interventions/stats.hpp"
#include "plab/lm/model.hpp"
#include "plab/probing/probe.hpp"
#include "plab/world/world.hpp"

namespace plab::interventions {

struct AnswerOnlyView {
  std::vector<world::TokenId> tokens;  // the answer region, nothing else
  world::Span exact_answer;            // re-indexed
  std::size_t position_offset = 0;     // absolute position of tokens[0] in the full trace
};

// Errors: empty answer region.
AnswerOnlyView answer_only_view(const world::QASample& sample);

struct AnswerOnlyRow {
  std::size_t sample_id = 0;
  Mode mode = Mode::kAAnchored;
  double p_full = 0.0;
  double p_answer_only = 0.0;
  double neg_delta_p = 0.0;  // p_full - p_answer_only
};

struct AnswerOnlyConfig {
  // Encode the answer at its original absolute positions, so that only the
  // question context is removed. Off: positions restart at 0.
  bool keep_positions = true;
};

std::vector<AnswerOnlyRow> answer_only_experiment(const lm::Model& model, const probing::Probe& probe,
                                                  std::span<const world::QASample> samples,
                                                  std::span<const Mode> modes, const AnswerOnlyConfig& config = {});

struct AnswerOnlySummary {
  Mode mode = Mode::kAAnchored;
  std::size_t n = 0;
  Interval neg_delta_p;
  Interval abs_neg_delta_p;
};

std::vector<AnswerOnlySummary> summarize_answer_only(std::span<const AnswerOnlyRow> rows, std::size_t resamples,
                                                     std::uint64_t seed);

}  // namespace plab::interventions
