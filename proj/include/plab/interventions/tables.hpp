#pragma once

#include <span>
#include <string>
#include <vector>

#include "plab/interventions/answer_only.hpp"
#include "plab/interventions/knockout.hpp"
#include "plab/interventions/patching.hpp"
#include "plab/interventions/saliency.hpp"
#include "plab/interventions/stats.hpp"

// CSV tables consumed by the figure scripts. Every table starts with a
// "# schema=<name> version=<v>" line; bump the version on any column change.
namespace plab::interventions {

// knockout / knockout_random: sample_id, layer, p_before, p_after, delta_p, mode
inline constexpr int kKnockoutVersion = 1;
std::string knockout_csv(std::span<const KnockoutRow> rows, const std::string& schema = "knockout");
std::vector<KnockoutRow> parse_knockout_csv(const std::string& text, const std::string& schema = "knockout");

// patch: sample_id, donor_id, kind, mode, p_before, p_exact, p_random, flip_exact, flip_random
inline constexpr int kPatchVersion = 1;
std::string patch_csv(std::span<const PatchRow> rows);
std::vector<PatchRow> parse_patch_csv(const std::string& text);

// answer_only: sample_id, mode, p_full, p_answer_only, neg_delta_p
inline constexpr int kAnswerOnlyVersion = 1;
std::string answer_only_csv(std::span<const AnswerOnlyRow> rows);
std::vector<AnswerOnlyRow> parse_answer_only_csv(const std::string& text);

// saliency: sample_id, z, eq_to_ea, eq_to_all
inline constexpr int kSaliencyVersion = 1;
struct SaliencyRow {
  std::size_t sample_id = 0;
  int z = 0;
  double eq_to_ea = 0.0;
  double eq_to_all = 0.0;
};
std::string saliency_csv(std::span<const SaliencyRow> rows);

// kde: series, bandwidth, fallback, x, density
inline constexpr int kKdeVersion = 1;
struct NamedCurve {
  std::string series;
  KdeCurve curve;
};
std::string kde_csv(std::span<const NamedCurve> curves);

}  // namespace plab::interventions
