#include <optional>

#include "plab/util/io.hpp"
#include "plab/world/world.hpp"

namespace plab::world {

std::vector<QASample> generate_samples(const lm::Model& model, const World& world, GenerationStats* stats) {
  std::vector<std::optional<QASample>> slots(world.facts.size());
  parallel_for(world.facts.size(), [&](std::size_t k) {
    const Fact& f = world.facts[k];
    const QAPrompt prompt = render_qa(world, f, f.eval_template);
    const std::size_t room = model.config().max_seq_len - prompt.tokens.size();
    const auto gen = lm::generate(model, prompt.tokens, room, world.stop);
    slots[k] = label_generation(world, f, prompt, gen);
    if (slots[k]) slots[k]->template_id = f.eval_template;
  });
  std::vector<QASample> out;
  std::size_t excluded = 0;
  for (auto& s : slots) {
    if (!s) {
      ++excluded;
      continue;
    }
    s->id = out.size();
    out.push_back(std::move(*s));
  }
  if (stats) *stats = {world.facts.size(), excluded};
  return out;
}

}  // namespace plab::world
