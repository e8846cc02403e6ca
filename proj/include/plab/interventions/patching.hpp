#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "plab/interventions/knockout.hpp"
#include "plab/interventions/stats.hpp"
#include "plab/lm/model.hpp"
#include "plab/probing/probe.hpp"
#include "plab/util/rng.hpp"
#include "plab/world/world.hpp"

namespace plab::interventions {

enum class PatchKind { kSubject, kProperty, kBoth };
std::string patch_kind_name(PatchKind k);
PatchKind parse_patch_kind(const std::string& s);

// Donor exact tokens substituted into the context's span(s); later spans are
// re-indexed when lengths differ. kBoth is subject-then-property.
world::QASample apply_patch(const world::QASample& context, const world::QASample& donor, PatchKind kind);

// `count` distinct non-exact question positions, each replaced by a filler
// token different from the original. Length is unchanged.
world::QASample apply_random_patch(const world::QASample& context, std::size_t count,
                                   std::span<const world::TokenId> fillers, Rng& rng);

// Number of context tokens an exact patch of `kind` replaces.
std::size_t patch_width(const world::QASample& context, PatchKind kind);

struct PatchRow {
  std::size_t sample_id = 0;
  std::size_t donor_id = 0;
  PatchKind kind = PatchKind::kSubject;
  Mode mode = Mode::kAAnchored;
  double p_before = 0.0;
  double p_exact = 0.0;
  double p_random = 0.0;
  bool flip_exact = false;
  bool flip_random = false;
};

struct PatchConfig {
  double threshold = 0.5;
};

// Contexts must be factual. Donors come from `donor_pool` (other samples whose
// patched spans differ), one uniform draw per context, seeded per context.
// `modes` is indexed by sample id. Errors: non-factual context, no eligible
// donor, patched sequence longer than the model context.
std::vector<PatchRow> patch_experiment(const lm::Model& model, const probing::Probe& probe,
                                       std::span<const world::QASample> contexts,
                                       std::span<const world::QASample> donor_pool, std::span<const Mode> modes,
                                       PatchKind kind, std::span<const world::TokenId> fillers, std::uint64_t seed,
                                       const PatchConfig& config = {});

struct FlipSummary {
  Mode mode = Mode::kAAnchored;
  std::size_t n = 0;
  Interval exact;   // flip rate
  Interval random;  // control flip rate
};

std::vector<FlipSummary> summarize_flips(std::span<const PatchRow> rows, std::size_t resamples, std::uint64_t seed);

}  // namespace plab::interventions
