#include "plab/interventions/patching.hpp"

#include <algorithm>

#include "plab/util/error.hpp"
#include "plab/util/io.hpp"

namespace plab::interventions {

std::string patch_kind_name(PatchKind k) {
  switch (k) {
    case PatchKind::kSubject: return "subject";
    case PatchKind::kProperty: return "property";
    case PatchKind::kBoth: return "both";
  }
  return "?";
}

PatchKind parse_patch_kind(const std::string& s) {
  if (s == "subject") return PatchKind::kSubject;
  if (s == "property") return PatchKind::kProperty;
  if (s == "both") return PatchKind::kBoth;
  throw ContractError("unknown patch kind '" + s + "'");
}

namespace {

std::vector<world::TokenId> span_tokens(const world::QASample& s, const world::Span& sp) {
  return {s.tokens.begin() + static_cast<std::ptrdiff_t>(sp.start), s.tokens.begin() + static_cast<std::ptrdiff_t>(sp.end) + 1};
}

// Replaces `target` (which must be one of the sample's spans) and shifts the
// rest of the layout.
void replace_span(world::QASample& s, world::Span& target, const std::vector<world::TokenId>& with) {
  PLAB_REQUIRE(!with.empty(), "patch: empty replacement");
  const world::Span old = target;
  const auto delta = static_cast<std::ptrdiff_t>(with.size()) - static_cast<std::ptrdiff_t>(old.length());
  s.tokens.erase(s.tokens.begin() + static_cast<std::ptrdiff_t>(old.start),
                 s.tokens.begin() + static_cast<std::ptrdiff_t>(old.end) + 1);
  s.tokens.insert(s.tokens.begin() + static_cast<std::ptrdiff_t>(old.start), with.begin(), with.end());
  auto shift = [&](world::Span& sp) {
    if (&sp == &target) return;
    if (sp.start > old.end) sp.start = static_cast<std::size_t>(static_cast<std::ptrdiff_t>(sp.start) + delta);
    if (sp.end >= old.end) sp.end = static_cast<std::size_t>(static_cast<std::ptrdiff_t>(sp.end) + delta);
  };
  shift(s.subject);
  shift(s.property);
  shift(s.question);
  shift(s.answer_region);
  shift(s.exact_answer);
  target.end = old.start + with.size() - 1;
}

bool differs(const world::QASample& a, const world::QASample& b, PatchKind kind) {
  const bool subj = span_tokens(a, a.subject) != span_tokens(b, b.subject);
  const bool prop = span_tokens(a, a.property) != span_tokens(b, b.property);
  switch (kind) {
    case PatchKind::kSubject: return subj;
    case PatchKind::kProperty: return prop;
    case PatchKind::kBoth: return subj && prop;
  }
  return false;
}

}  // namespace

world::QASample apply_patch(const world::QASample& context, const world::QASample& donor, PatchKind kind) {
  world::QASample out = context;
  if (kind == PatchKind::kSubject || kind == PatchKind::kBoth) replace_span(out, out.subject, span_tokens(donor, donor.subject));
  if (kind == PatchKind::kProperty || kind == PatchKind::kBoth) {
    replace_span(out, out.property, span_tokens(donor, donor.property));
  }
  return out;
}

std::size_t patch_width(const world::QASample& context, PatchKind kind) {
  switch (kind) {
    case PatchKind::kSubject: return context.subject.length();
    case PatchKind::kProperty: return context.property.length();
    case PatchKind::kBoth: return context.subject.length() + context.property.length();
  }
  return 0;
}

world::QASample apply_random_patch(const world::QASample& context, std::size_t count,
                                   std::span<const world::TokenId> fillers, Rng& rng) {
  PLAB_REQUIRE(fillers.size() >= 2, "random patch: need at least two filler tokens");
  auto pool = non_exact_question_positions(context);
  if (pool.empty()) throw DataError("random patch: sample " + std::to_string(context.id) + " has no non-exact question tokens");
  rng.shuffle(pool);
  pool.resize(std::min(count, pool.size()));
  world::QASample out = context;
  for (std::size_t p : pool) {
    world::TokenId t = out.tokens[p];
    while (t == out.tokens[p]) t = fillers[rng.below(fillers.size())];
    out.tokens[p] = t;
  }
  return out;
}

std::vector<PatchRow> patch_experiment(const lm::Model& model, const probing::Probe& probe,
                                       std::span<const world::QASample> contexts,
                                       std::span<const world::QASample> donor_pool, std::span<const Mode> modes,
                                       PatchKind kind, std::span<const world::TokenId> fillers, std::uint64_t seed,
                                       const PatchConfig& config) {
  std::vector<PatchRow> rows(contexts.size());
  parallel_for(contexts.size(), [&](std::size_t n) {
    const auto& ctx = contexts[n];
    if (ctx.z != 0) throw DataError("patch: context " + std::to_string(ctx.id) + " is not factual");
    PLAB_REQUIRE(ctx.id < modes.size(), "patch: no mode for context");
    std::vector<std::size_t> eligible;
    for (std::size_t d = 0; d < donor_pool.size(); ++d)
      if (donor_pool[d].id != ctx.id && differs(ctx, donor_pool[d], kind)) eligible.push_back(d);
    if (eligible.empty()) throw DataError("patch: no eligible donor for sample " + std::to_string(ctx.id));

    Rng rng(Rng::mix(seed, ctx.id * 3 + static_cast<std::uint64_t>(kind)));
    const auto& donor = donor_pool[eligible[rng.below(eligible.size())]];
    const auto patched = apply_patch(ctx, donor, kind);
    if (patched.tokens.size() > model.config().max_seq_len) throw DataError("patch: patched sequence exceeds max_seq_len");
    const auto control = apply_random_patch(ctx, patch_width(ctx, kind), fillers, rng);

    PatchRow& r = rows[n];
    r.sample_id = ctx.id;
    r.donor_id = donor.id;
    r.kind = kind;
    r.mode = modes[ctx.id];
    r.p_before = probing::score_sequence(model, probe, ctx.tokens, ctx.exact_answer);
    r.p_exact = probing::score_sequence(model, probe, patched.tokens, patched.exact_answer);
    r.p_random = probing::score_sequence(model, probe, control.tokens, control.exact_answer);
    r.flip_exact = (r.p_before >= config.threshold) != (r.p_exact >= config.threshold);
    r.flip_random = (r.p_before >= config.threshold) != (r.p_random >= config.threshold);
  });
  return rows;
}

std::vector<FlipSummary> summarize_flips(std::span<const PatchRow> rows, std::size_t resamples, std::uint64_t seed) {
  std::vector<FlipSummary> out;
  for (Mode m : {Mode::kQAnchored, Mode::kAAnchored}) {
    std::vector<double> ex, rnd;
    for (const auto& r : rows) {
      if (r.mode != m) continue;
      ex.push_back(r.flip_exact ? 1.0 : 0.0);
      rnd.push_back(r.flip_random ? 1.0 : 0.0);
    }
    FlipSummary s;
    s.mode = m;
    s.n = ex.size();
    if (!ex.empty()) {
      const std::uint64_t salt = m == Mode::kQAnchored ? 0 : 2;
      s.exact = bootstrap_mean(ex, resamples, Rng::mix(seed, salt));
      s.random = bootstrap_mean(rnd, resamples, Rng::mix(seed, salt + 1));
    }
    out.push_back(s);
  }
  return out;
}

}  // namespace plab::interventions
