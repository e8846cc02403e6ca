#include "plab/interventions/knockout.hpp"

#include <algorithm>
#include <cmath>

#include "plab/lm/forward.hpp"
#include "plab/util/error.hpp"
#include "plab/util/io.hpp"
#include "plab/util/rng.hpp"

namespace plab::interventions {

std::string mode_name(Mode m) { return m == Mode::kQAnchored ? "QAnchored" : "AAnchored"; }

Mode parse_mode(const std::string& s) {
  if (s == "QAnchored") return Mode::kQAnchored;
  if (s == "AAnchored") return Mode::kAAnchored;
  throw DataError("unknown mode '" + s + "'");
}

Mode mode_from(double p_before, double p_after, double threshold) {
  return (p_before >= threshold) != (p_after >= threshold) ? Mode::kQAnchored : Mode::kAAnchored;
}

std::vector<lm::AttentionEdge> knockout_edges(const world::QASample& sample, std::size_t last_layer,
                                              std::span<const std::size_t> keys, KnockoutRows rows) {
  if (keys.empty()) return {};
  std::size_t first_row = 0;
  if (rows == KnockoutRows::kAnswerRegion) {
    first_row = sample.answer_region.start;
  } else {
    const auto eq = sample.exact_question_positions();
    if (eq.empty()) throw DataError("knockout: sample " + std::to_string(sample.id) + " has no exact question tokens");
    first_row = eq.back() + 1;
  }
  std::vector<lm::AttentionEdge> edges;
  for (std::size_t l = 0; l <= last_layer; ++l)
    for (std::size_t i = first_row; i < sample.tokens.size(); ++i)
      for (std::size_t j : keys)
        if (j <= i) edges.push_back({l, i, j});
  return edges;
}

namespace {

std::vector<KnockoutRow> run_keys(const lm::Model& model, std::span<const probing::Probe> probes,
                                  const world::QASample& s, std::span<const std::size_t> keys,
                                  const KnockoutConfig& config) {
  const auto base = lm::forward(model, s.tokens);
  std::vector<KnockoutRow> out;
  for (std::size_t k = 0; k < probes.size(); ++k) {
    const auto& probe = probes[k];
    PLAB_REQUIRE(probe.address.layer == k, "knockout: probes[k] must sit at layer k");
    KnockoutRow r;
    r.sample_id = s.id;
    r.layer = k;
    r.p_before = probe.predict(probing::extract(base, probe.address, s.exact_answer));
    const auto spec = lm::InterventionSpec::knockout(knockout_edges(s, k, keys, config.rows), config.mode);
    r.p_after = probing::score_sequence(model, probe, s.tokens, s.exact_answer, spec);
    r.delta_p = r.p_after - r.p_before;
    r.mode = mode_from(r.p_before, r.p_after, config.threshold);
    out.push_back(r);
  }
  return out;
}

std::vector<KnockoutRow> flatten(std::vector<std::vector<KnockoutRow>>& per_sample) {
  std::vector<KnockoutRow> out;
  for (auto& v : per_sample) out.insert(out.end(), v.begin(), v.end());
  return out;
}

}  // namespace

std::vector<KnockoutRow> knockout_experiment(const lm::Model& model, std::span<const probing::Probe> probes,
                                             std::span<const world::QASample> samples, const KnockoutConfig& config) {
  std::vector<std::vector<KnockoutRow>> per(samples.size());
  parallel_for(samples.size(), [&](std::size_t n) {
    const auto eq = samples[n].exact_question_positions();
    if (eq.empty()) throw DataError("knockout: sample " + std::to_string(samples[n].id) + " has no exact question tokens");
    per[n] = run_keys(model, probes, samples[n], eq, config);
  });
  return flatten(per);
}

std::vector<std::size_t> non_exact_question_positions(const world::QASample& s) {
  std::vector<std::size_t> out;
  for (std::size_t p = s.question.start; p <= s.question.end; ++p)
    if (!s.subject.contains(p) && !s.property.contains(p)) out.push_back(p);
  return out;
}

RandomKnockoutResult knockout_control_random(const lm::Model& model, std::span<const probing::Probe> probes,
                                             std::span<const world::QASample> samples, const KnockoutConfig& config,
                                             std::uint64_t seed) {
  std::vector<std::vector<KnockoutRow>> per(samples.size());
  std::vector<char> skipped(samples.size(), 0);
  parallel_for(samples.size(), [&](std::size_t n) {
    const auto& s = samples[n];
    auto pool = non_exact_question_positions(s);
    if (pool.empty()) {
      skipped[n] = 1;
      return;
    }
    Rng rng(Rng::mix(seed, s.id));
    rng.shuffle(pool);
    pool.resize(std::min(pool.size(), s.exact_question_positions().size()));
    std::sort(pool.begin(), pool.end());
    per[n] = run_keys(model, probes, s, pool, config);
  });
  RandomKnockoutResult res;
  res.rows = flatten(per);
  for (std::size_t n = 0; n < samples.size(); ++n) {
    if (skipped[n]) {
      res.skipped.push_back(samples[n].id);
      warn("random knockout: sample " + std::to_string(samples[n].id) + " has no non-exact question tokens, skipped");
    }
  }
  return res;
}

std::vector<LayerSummary> summarize_knockout(std::span<const KnockoutRow> rows, std::size_t n_layers,
                                             std::size_t resamples, std::uint64_t seed) {
  std::vector<LayerSummary> out(n_layers);
  for (std::size_t l = 0; l < n_layers; ++l) {
    std::vector<double> q, a, all_abs;
    for (const auto& r : rows) {
      if (r.layer != l) continue;
      (r.mode == Mode::kQAnchored ? q : a).push_back(r.delta_p);
      all_abs.push_back(std::abs(r.delta_p));
    }
    auto& s = out[l];
    s.layer = l;
    s.n_q = q.size();
    s.n_a = a.size();
    if (!q.empty()) s.delta_p_q = bootstrap_mean(q, resamples, Rng::mix(seed, 2 * l));
    if (!a.empty()) s.delta_p_a = bootstrap_mean(a, resamples, Rng::mix(seed, 2 * l + 1));
    if (!all_abs.empty()) s.median_abs_delta = median(all_abs);
  }
  return out;
}

std::vector<Mode> modes_at_layer(std::span<const KnockoutRow> rows, std::size_t layer, std::size_t n_samples,
                                 std::vector<bool>* covered) {
  std::vector<Mode> modes(n_samples, Mode::kAAnchored);
  if (covered) covered->assign(n_samples, false);
  for (const auto& r : rows) {
    if (r.layer != layer) continue;
    PLAB_REQUIRE(r.sample_id < n_samples, "modes_at_layer: sample id out of range");
    modes[r.sample_id] = r.mode;
    if (covered) (*covered)[r.sample_id] = true;
  }
  return modes;
}

}  // namespace plab::interventions
