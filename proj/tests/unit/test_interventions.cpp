#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "fixtures.hpp"
#include "plab/interventions/answer_only.hpp"
#include "plab/interventions/knockout.hpp"
#include "plab/interventions/patching.hpp"
#include "plab/interventions/saliency.hpp"
#include "plab/interventions/stats.hpp"
#include "plab/interventions/tables.hpp"
#include "plab/lm/forward.hpp"
#include "plab/util/error.hpp"

using namespace plab;
using namespace plab::interventions;
using plab::testing::make_fixture;

namespace {

probing::Probe random_probe(std::size_t layer, std::size_t d, std::uint64_t seed, double scale = 3.0) {
  Rng rng(seed);
  probing::Probe p;
  p.address = {layer, probing::Site::kMlpOut, probing::Selector::kLastExactAnswer};
  for (std::size_t k = 0; k < d; ++k) p.w.push_back(scale * rng.normal());
  p.b = 0.1;
  return p;
}

std::vector<probing::Probe> probes_by_layer(std::size_t layers, std::size_t d) {
  std::vector<probing::Probe> out;
  for (std::size_t l = 0; l < layers; ++l) out.push_back(random_probe(l, d, 100 + l));
  return out;
}

double probe_bce(const lm::Model& m, const probing::Probe& p, const world::QASample& s, const lm::ForwardOptions& o) {
  const auto tr = lm::forward(m, s.tokens, lm::InterventionSpec::none(), o);
  const double q = p.predict(probing::extract(tr, p.address, s.exact_answer));
  return s.z == 1 ? -std::log(q) : -std::log(1.0 - q);
}

}  // namespace

TEST_CASE("mode rule") {
  CHECK(mode_from(0.8, 0.2, 0.5) == Mode::kQAnchored);
  CHECK(mode_from(0.3, 0.3, 0.5) == Mode::kAAnchored);
  CHECK(mode_from(0.6, 0.51, 0.5) == Mode::kAAnchored);
  CHECK(mode_from(0.4, 0.6, 0.5) == Mode::kQAnchored);
  CHECK(parse_mode(mode_name(Mode::kQAnchored)) == Mode::kQAnchored);
  CHECK_THROWS_AS(parse_mode("sideways"), DataError);
}

TEST_CASE("saliency is zero for a probe with zero weights") {
  auto fx = make_fixture(2);
  probing::Probe p = random_probe(1, 8, 1);
  std::fill(p.w.begin(), p.w.end(), 0.0);
  p.b = 0.0;
  const auto rec = saliency(fx.model, p, fx.samples[0]);
  REQUIRE(rec.layers.size() == 2);
  for (const auto& s : rec.layers)
    for (double v : s.data()) CHECK(v == 0.0);
  CHECK(rec.eq_to_ea == 0.0);
  CHECK(rec.eq_to_all == 0.0);
}

TEST_CASE("saliency matches a finite-difference oracle and is non-negative") {
  auto fx = make_fixture(3);
  const auto& s = fx.samples[1];
  const auto p = random_probe(1, 8, 2);
  const auto rec = saliency(fx.model, p, s);
  const auto base = lm::forward(fx.model, s.tokens);
  const std::size_t T = s.tokens.size();
  const double h = 1e-5;
  Rng rng(3);
  double worst = 0.0;
  for (int probe_i = 0; probe_i < 20; ++probe_i) {
    const std::size_t l = rng.below(2), i = rng.below(T), j = rng.below(i + 1);
    double expect = 0.0;
    for (std::size_t head = 0; head < 2; ++head) {
      lm::ForwardOptions o;
      o.perturb = lm::AttentionPerturbation{l, head, i, j, h};
      const double up = probe_bce(fx.model, p, s, o);
      o.perturb->delta = -h;
      const double down = probe_bce(fx.model, p, s, o);
      expect += std::abs(base.attn[l][head].at(i, j) * (up - down) / (2 * h)) / 2.0;
    }
    const double got = rec.layers[l].at(i, j);
    worst = std::max(worst, std::abs(got - expect) / std::max({got, expect, 1e-8}));
  }
  CHECK(worst < 1e-4);
  for (const auto& m : rec.layers)
    for (double v : m.data()) CHECK(v >= 0.0);
}

TEST_CASE("saliency aggregates are span sums averaged over layers") {
  auto fx = make_fixture(2);
  const auto& s = fx.samples[0];
  const auto rec = saliency(fx.model, random_probe(1, 8, 4), s);
  const auto eq = s.exact_question_positions();
  double to_ea = 0.0, to_all = 0.0;
  for (const auto& m : rec.layers) {
    for (std::size_t j : eq) {
      for (std::size_t i = 0; i < s.tokens.size(); ++i) {
        to_all += m.at(i, j);
        if (s.exact_answer.contains(i)) to_ea += m.at(i, j);
      }
    }
  }
  CHECK(rec.eq_to_ea == doctest::Approx(to_ea / 2.0).epsilon(1e-12));
  CHECK(rec.eq_to_all == doctest::Approx(to_all / 2.0).epsilon(1e-12));
}

TEST_CASE("kde integrates to one, is symmetric for two equal points and scales affinely") {
  const std::vector<double> v{0.1, 0.4, 0.45, 0.9, 1.3, 0.2, 0.7};
  const auto c = kde(v);
  REQUIRE(c.x.size() == 256);
  double integral = 0.0;
  for (std::size_t k = 1; k < c.x.size(); ++k) integral += 0.5 * (c.density[k] + c.density[k - 1]) * (c.x[k] - c.x[k - 1]);
  CHECK(std::abs(integral - 1.0) < 0.01);
  CHECK(c.x.front() == doctest::Approx(0.1 - 3 * c.bandwidth));
  CHECK(c.x.back() == doctest::Approx(1.3 + 3 * c.bandwidth));

  const auto flat = kde(std::vector<double>{2.0, 2.0});
  CHECK(flat.fallback);
  CHECK(flat.bandwidth == 1e-3);
  const auto peak = std::max_element(flat.density.begin(), flat.density.end()) - flat.density.begin();
  CHECK(flat.x[static_cast<std::size_t>(peak)] == doctest::Approx(2.0).epsilon(1e-3));
  for (std::size_t k = 0; k < 128; ++k) CHECK(flat.density[k] == doctest::Approx(flat.density[255 - k]));

  std::vector<double> doubled;
  for (double x : v) doubled.push_back(2 * x);
  const auto c2 = kde(doubled);
  const auto m1 = std::max_element(c.density.begin(), c.density.end()) - c.density.begin();
  const auto m2 = std::max_element(c2.density.begin(), c2.density.end()) - c2.density.begin();
  CHECK(m1 == m2);
  CHECK(c2.x[static_cast<std::size_t>(m2)] == doctest::Approx(2 * c.x[static_cast<std::size_t>(m1)]));
  CHECK(c2.bandwidth == doctest::Approx(2 * c.bandwidth));
  CHECK_THROWS_AS(kde(std::vector<double>{1.0}), ContractError);
}

TEST_CASE("silverman bandwidth on a known sample") {
  // n = 5, sd = sqrt(2.5), IQR = 2 -> min(1.5811, 1.4925) = 1.4925
  const std::vector<double> v{1, 2, 3, 4, 5};
  CHECK(silverman_bandwidth(v) == doctest::Approx(0.9 * (2.0 / 1.34) * std::pow(5.0, -0.2)).epsilon(1e-12));
}

TEST_CASE("bootstrap intervals are seeded and bracket the estimate") {
  const std::vector<double> v{1, 2, 3, 4, 5, 6, 7, 8};
  const auto a = bootstrap_mean(v, 1000, 9), b = bootstrap_mean(v, 1000, 9);
  CHECK(a.estimate == 4.5);
  CHECK(a.lo == b.lo);
  CHECK(a.hi == b.hi);
  CHECK((a.lo < 4.5 && a.hi > 4.5));
  const auto d = bootstrap_mean_diff(std::vector<double>{10, 11, 12}, v, 1000, 1);
  CHECK(d.estimate == doctest::Approx(11 - 4.5));
  CHECK(d.excludes_zero());
  CHECK(quantile_sorted(std::vector<double>{0, 10}, 0.25) == 2.5);
}

TEST_CASE("knockout edges cover rows after the last exact question token") {
  auto fx = make_fixture(1);
  const auto& s = fx.samples[0];
  const auto eq = s.exact_question_positions();
  const auto edges = knockout_edges(s, 1, eq, KnockoutRows::kAfterLastExactQuestion);
  const std::size_t rows = s.tokens.size() - (eq.back() + 1);
  CHECK(edges.size() == 2 * rows * eq.size());
  for (const auto& e : edges) {
    CHECK(e.query > eq.back());
    CHECK(std::find(eq.begin(), eq.end(), e.key) != eq.end());
  }
  const auto ans = knockout_edges(s, 0, eq, KnockoutRows::kAnswerRegion);
  CHECK(ans.size() == s.answer_region.length() * eq.size());
  CHECK(knockout_edges(s, 0, {}, KnockoutRows::kAnswerRegion).empty());
}

TEST_CASE("knockout modes partition the samples at every layer and are reproducible") {
  auto fx = make_fixture(18);
  const auto probes = probes_by_layer(2, 8);
  const auto rows = knockout_experiment(fx.model, probes, fx.samples, {});
  REQUIRE(rows.size() == 36);
  for (std::size_t l = 0; l < 2; ++l) {
    std::vector<bool> covered;
    const auto modes = modes_at_layer(rows, l, fx.samples.size(), &covered);
    const auto q = std::count(modes.begin(), modes.end(), Mode::kQAnchored);
    const auto a = std::count(modes.begin(), modes.end(), Mode::kAAnchored);
    CHECK(static_cast<std::size_t>(q + a) == fx.samples.size());
    CHECK(std::all_of(covered.begin(), covered.end(), [](bool c) { return c; }));
  }
  for (const auto& r : rows) {
    CHECK(r.delta_p == r.p_after - r.p_before);
    CHECK(r.mode == mode_from(r.p_before, r.p_after, 0.5));
    const auto& s = fx.samples[r.sample_id];
    CHECK(r.p_before == probing::score_sequence(fx.model, probes[r.layer], s.tokens, s.exact_answer));
  }
  const auto again = knockout_experiment(fx.model, probes, fx.samples, {});
  for (std::size_t k = 0; k < rows.size(); ++k) {
    CHECK(again[k].p_after == rows[k].p_after);
    CHECK(again[k].mode == rows[k].mode);
  }
}

TEST_CASE("random knockout control is seeded and skips samples without spare question tokens") {
  auto fx = make_fixture(6);
  const auto probes = probes_by_layer(2, 8);
  const auto a = knockout_control_random(fx.model, probes, fx.samples, {}, 5);
  const auto b = knockout_control_random(fx.model, probes, fx.samples, {}, 5);
  REQUIRE(a.rows.size() == b.rows.size());
  for (std::size_t k = 0; k < a.rows.size(); ++k) CHECK(a.rows[k].p_after == b.rows[k].p_after);
  CHECK(a.skipped.empty());

  auto s = fx.samples[0];
  s.question = s.subject.start < s.property.start ? world::Span{s.subject.start, s.property.end}
                                                  : world::Span{s.property.start, s.subject.end};
  std::vector<world::QASample> one{s};
  if (non_exact_question_positions(s).empty()) {
    const auto r = knockout_control_random(fx.model, probes, one, {}, 5);
    CHECK(r.rows.empty());
    CHECK(r.skipped == std::vector<std::size_t>{s.id});
  }
}

TEST_CASE("self-patching leaves the sequence unchanged") {
  auto fx = make_fixture(4);
  for (auto kind : {PatchKind::kSubject, PatchKind::kProperty, PatchKind::kBoth}) {
    const auto p = apply_patch(fx.samples[1], fx.samples[1], kind);
    CHECK(p.tokens == fx.samples[1].tokens);
    CHECK(p.exact_answer == fx.samples[1].exact_answer);
  }
}

TEST_CASE("property: both-patching equals subject then property from the same donor") {
  auto fx = make_fixture(24);
  for (std::size_t c = 0; c < fx.samples.size(); ++c) {
    for (std::size_t d = 0; d < fx.samples.size(); d += 5) {
      const auto both = apply_patch(fx.samples[c], fx.samples[d], PatchKind::kBoth);
      const auto seq = apply_patch(apply_patch(fx.samples[c], fx.samples[d], PatchKind::kSubject), fx.samples[d],
                                   PatchKind::kProperty);
      CHECK(both.tokens == seq.tokens);
      CHECK(both.subject == seq.subject);
      CHECK(both.property == seq.property);
      CHECK(both.exact_answer == seq.exact_answer);
      CHECK_NOTHROW(world::check_sample(both));
    }
  }
}

TEST_CASE("patching re-indexes spans when lengths differ") {
  auto fx = make_fixture(24);
  // Find a one-token property context and a two-token property donor.
  const world::QASample* ctx = nullptr;
  const world::QASample* donor = nullptr;
  for (const auto& s : fx.samples) {
    if (s.property.length() == 1 && !ctx) ctx = &s;
    if (s.property.length() == 2 && !donor) donor = &s;
  }
  REQUIRE(ctx);
  REQUIRE(donor);
  const auto p = apply_patch(*ctx, *donor, PatchKind::kProperty);
  CHECK(p.tokens.size() == ctx->tokens.size() + 1);
  CHECK(p.exact_answer.start == ctx->exact_answer.start + 1);
  CHECK(p.tokens[p.exact_answer.start] == ctx->tokens[ctx->exact_answer.start]);
  CHECK(p.property.length() == 2);
  CHECK(std::equal(p.tokens.begin() + static_cast<long>(p.property.start),
                   p.tokens.begin() + static_cast<long>(p.property.end) + 1,
                   donor->tokens.begin() + static_cast<long>(donor->property.start)));
}

TEST_CASE("random patch replaces distinct non-exact question tokens") {
  auto fx = make_fixture(2);
  const auto& s = fx.samples[0];
  Rng rng(8);
  const auto p = apply_random_patch(s, 2, fx.world.filler_tokens, rng);
  CHECK(p.tokens.size() == s.tokens.size());
  std::size_t changed = 0;
  for (std::size_t i = 0; i < s.tokens.size(); ++i) {
    if (p.tokens[i] == s.tokens[i]) continue;
    ++changed;
    const auto ne = non_exact_question_positions(s);
    CHECK(std::find(ne.begin(), ne.end(), i) != ne.end());
  }
  CHECK(changed == 2);
  CHECK(patch_width(s, PatchKind::kBoth) == s.subject.length() + s.property.length());
}

TEST_CASE("patch experiment requires factual contexts and yields rates in range") {
  auto fx = make_fixture(24);
  std::vector<world::QASample> factual;
  for (const auto& s : fx.samples)
    if (s.z == 0) factual.push_back(s);
  const auto probe = random_probe(1, 8, 6);
  std::vector<Mode> modes(fx.samples.size(), Mode::kAAnchored);
  for (std::size_t i = 0; i < modes.size(); i += 2) modes[i] = Mode::kQAnchored;
  const auto rows = patch_experiment(fx.model, probe, factual, fx.samples, modes, PatchKind::kSubject,
                                     fx.world.filler_tokens, 3);
  CHECK(rows.size() == factual.size());
  for (const auto& r : rows) {
    CHECK(r.donor_id != r.sample_id);
    CHECK(r.flip_exact == ((r.p_before >= 0.5) != (r.p_exact >= 0.5)));
    CHECK(r.mode == modes[r.sample_id]);
  }
  for (const auto& f : summarize_flips(rows, 200, 1)) {
    CHECK((f.exact.estimate >= 0.0 && f.exact.estimate <= 1.0));
    CHECK((f.random.estimate >= 0.0 && f.random.estimate <= 1.0));
  }
  const auto again = patch_experiment(fx.model, probe, factual, fx.samples, modes, PatchKind::kSubject,
                                      fx.world.filler_tokens, 3);
  for (std::size_t k = 0; k < rows.size(); ++k) CHECK(again[k].donor_id == rows[k].donor_id);

  std::vector<world::QASample> wrong{fx.samples[0]};
  REQUIRE(wrong[0].z == 1);
  CHECK_THROWS_AS(patch_experiment(fx.model, probe, wrong, fx.samples, modes, PatchKind::kSubject,
                                   fx.world.filler_tokens, 3),
                  DataError);
  std::vector<world::QASample> lonely{factual[0]};
  CHECK_THROWS_AS(patch_experiment(fx.model, probe, lonely, lonely, modes, PatchKind::kSubject,
                                   fx.world.filler_tokens, 3),
                  DataError);
}

TEST_CASE("answer-only view keeps the answer tokens and re-indexes the exact answer") {
  auto fx = make_fixture(3);
  const auto& s = fx.samples[1];
  const auto v = answer_only_view(s);
  CHECK(v.tokens == std::vector<world::TokenId>(s.tokens.begin() + static_cast<long>(s.answer_region.start),
                                                s.tokens.end()));
  CHECK(v.position_offset == s.answer_region.start);
  CHECK(v.exact_answer.length() == s.exact_answer.length());
  CHECK(v.tokens[v.exact_answer.start] == s.tokens[s.exact_answer.start]);
}

TEST_CASE("answer-only experiment reports p_full minus p_answer_only") {
  auto fx = make_fixture(9);
  const auto probe = random_probe(1, 8, 7);
  std::vector<Mode> modes(fx.samples.size(), Mode::kQAnchored);
  for (bool keep : {true, false}) {
    const auto rows = answer_only_experiment(fx.model, probe, fx.samples, modes, {keep});
    REQUIRE(rows.size() == 9);
    for (const auto& r : rows) {
      const auto& s = fx.samples[r.sample_id];
      const auto v = answer_only_view(s);
      CHECK(r.p_full == probing::score_sequence(fx.model, probe, s.tokens, s.exact_answer));
      CHECK(r.p_answer_only ==
            probing::score_sequence(fx.model, probe, v.tokens, v.exact_answer, lm::InterventionSpec::none(),
                                    keep ? v.position_offset : 0));
      CHECK(r.neg_delta_p == r.p_full - r.p_answer_only);
    }
  }
}

TEST_CASE("tables round trip") {
  std::vector<KnockoutRow> ko{{3, 1, 0.25, 0.75, 0.5, Mode::kQAnchored}, {4, 0, 0.1, 0.1, 0.0, Mode::kAAnchored}};
  const auto text = knockout_csv(ko);
  CHECK(text.rfind("# schema=knockout version=1\nsample_id,layer,p_before,p_after,delta_p,mode\n", 0) == 0);
  const auto back = parse_knockout_csv(text);
  REQUIRE(back.size() == 2);
  CHECK(back[0].p_after == 0.75);
  CHECK(back[0].mode == Mode::kQAnchored);
  CHECK_THROWS_AS(parse_knockout_csv(text, "knockout_random"), DataError);
  CHECK(parse_knockout_csv(knockout_csv(ko, "knockout_random"), "knockout_random").size() == 2);

  std::vector<PatchRow> pr{{1, 2, PatchKind::kBoth, Mode::kAAnchored, 0.1 + 0.2, 0.7, 0.4, true, false}};
  const auto pb = parse_patch_csv(patch_csv(pr));
  REQUIRE(pb.size() == 1);
  CHECK(pb[0].p_before == 0.1 + 0.2);
  CHECK(pb[0].kind == PatchKind::kBoth);
  CHECK(pb[0].flip_exact);
  CHECK_FALSE(pb[0].flip_random);

  std::vector<AnswerOnlyRow> ao{{5, Mode::kQAnchored, 0.9, 0.2, 0.9 - 0.2}};
  const auto ab = parse_answer_only_csv(answer_only_csv(ao));
  CHECK(ab[0].neg_delta_p == 0.9 - 0.2);
}
