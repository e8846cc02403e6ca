#include "plab/lm/generate.hpp"

#include <cmath>

#include "plab/lm/forward.hpp"
#include "plab/util/error.hpp"

namespace plab::lm {

GenerationRecord generate(const Model& model, std::span<const std::int32_t> prompt, std::size_t max_new,
                          std::int32_t stop_token) {
  PLAB_REQUIRE(!prompt.empty(), "generate: prompt must be non-empty");
  if (prompt.size() > model.config().max_seq_len) {
    throw ContractError("generate: prompt of length " + std::to_string(prompt.size()) + " exceeds max_seq_len");
  }
  GenerationRecord rec;
  rec.prompt.assign(prompt.begin(), prompt.end());
  std::vector<std::int32_t> ctx = rec.prompt;
  for (std::size_t step = 0; step < max_new; ++step) {
    const ForwardTrace tr = forward(model, ctx);
    const auto last = tr.logits.row(ctx.size() - 1);
    std::size_t best = 0;
    for (std::size_t v = 1; v < last.size(); ++v) {
      if (last[v] > last[best]) best = v;  // strict: ties keep the lower id
    }
    double mx = last[best];
    double z = 0.0;
    for (double x : last) z += std::exp(x - mx);
    rec.generated.push_back(static_cast<std::int32_t>(best));
    rec.chosen_logits.push_back(last[best]);
    rec.chosen_probs.push_back(1.0 / z);
    ctx.push_back(static_cast<std::int32_t>(best));
    if (static_cast<std::int32_t>(best) == stop_token) break;
    if (ctx.size() >= model.config().max_seq_len) break;
  }
  return rec;
}

}  // namespace plab::lm
