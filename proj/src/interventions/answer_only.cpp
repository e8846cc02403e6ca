#include "plab/interventions/answer_only.hpp"

#include <cmath>

#include "plab/util/error.hpp"
#include "plab/util/io.hpp"
#include "plab/util/rng.hpp"

namespace plab::interventions {

AnswerOnlyView answer_only_view(const world::QASample& s) {
  if (s.answer_region.end < s.answer_region.start || s.answer_region.end >= s.tokens.size()) {
    throw DataError("answer-only: sample " + std::to_string(s.id) + " has an empty answer region");
  }
  AnswerOnlyView v;
  v.tokens.assign(s.tokens.begin() + static_cast<std::ptrdiff_t>(s.answer_region.start),
                  s.tokens.begin() + static_cast<std::ptrdiff_t>(s.answer_region.end) + 1);
  v.exact_answer = {s.exact_answer.start - s.answer_region.start, s.exact_answer.end - s.answer_region.start};
  v.position_offset = s.answer_region.start;
  return v;
}

std::vector<AnswerOnlyRow> answer_only_experiment(const lm::Model& model, const probing::Probe& probe,
                                                  std::span<const world::QASample> samples,
                                                  std::span<const Mode> modes, const AnswerOnlyConfig& config) {
  std::vector<AnswerOnlyRow> rows(samples.size());
  parallel_for(samples.size(), [&](std::size_t n) {
    const auto& s = samples[n];
    PLAB_REQUIRE(s.id < modes.size(), "answer-only: no mode for sample");
    const auto view = answer_only_view(s);
    auto& r = rows[n];
    r.sample_id = s.id;
    r.mode = modes[s.id];
    r.p_full = probing::score_sequence(model, probe, s.tokens, s.exact_answer);
    r.p_answer_only = probing::score_sequence(model, probe, view.tokens, view.exact_answer, lm::InterventionSpec::none(),
                                              config.keep_positions ? view.position_offset : 0);
    r.neg_delta_p = r.p_full - r.p_answer_only;
  });
  return rows;
}

std::vector<AnswerOnlySummary> summarize_answer_only(std::span<const AnswerOnlyRow> rows, std::size_t resamples,
                                                     std::uint64_t seed) {
  std::vector<AnswerOnlySummary> out;
  for (Mode m : {Mode::kQAnchored, Mode::kAAnchored}) {
    std::vector<double> v, a;
    for (const auto& r : rows) {
      if (r.mode != m) continue;
      v.push_back(r.neg_delta_p);
      a.push_back(std::abs(r.neg_delta_p));
    }
    AnswerOnlySummary s;
    s.mode = m;
    s.n = v.size();
    if (!v.empty()) {
      const std::uint64_t salt = m == Mode::kQAnchored ? 0 : 2;
      s.neg_delta_p = bootstrap_mean(v, resamples, Rng::mix(seed, salt));
      s.abs_neg_delta_p = bootstrap_mean(a, resamples, Rng::mix(seed, salt + 1));
    }
    out.push_back(s);
  }
  return out;
}

}  // namespace plab::interventions
