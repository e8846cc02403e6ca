#pragma once

#include <string>
#include <vector>

#include "plab/lm/model.hpp"
#include "plab/util/rng.hpp"
#include "plab/world/world.hpp"

namespace plab::testing {

// A few dozen facts, a small untrained model over their vocabulary, and
// samples whose answers are scripted rather than generated.
struct Fixture {
  world::World world;
  lm::Model model;
  std::vector<world::QASample> samples;
};

inline world::QASample scripted_sample(const world::World& w, const world::Fact& f, bool correct, std::size_t id) {
  const auto& pool = w.relations[f.relation].pool;
  const std::string object = correct ? pool[f.object] : pool[(f.object + 1) % pool.size()];
  lm::GenerationRecord g;
  for (const std::string t : {"it", "is", object.c_str(), "."}) {
    g.generated.push_back(w.vocab.id(t));
    g.chosen_logits.push_back(1.0 + static_cast<double>(id % 7));
    g.chosen_probs.push_back(0.1 + 0.1 * static_cast<double>(id % 8));
  }
  auto s = *world::label_generation(w, f, world::render_qa(w, f, f.eval_template), g);
  s.id = id;
  return s;
}

inline Fixture make_fixture(std::size_t n_samples = 24, std::size_t layers = 2, std::uint64_t seed = 21) {
  world::WorldConfig wc;
  wc.n_entities = 30;
  wc.n_relations = 3;
  wc.pool_size = 5;
  wc.seed = seed;
  Fixture fx{world::build_world(wc), {}, {}};
  lm::ModelConfig mc;
  mc.n_layers = layers;
  mc.n_heads = 2;
  mc.d_model = 8;
  mc.d_ff = 16;
  mc.vocab_size = fx.world.vocab.size();
  mc.max_seq_len = 24;
  mc.seed = seed;
  fx.model = lm::Model(mc);
  for (std::size_t i = 0; i < n_samples && i < fx.world.facts.size(); ++i) {
    fx.samples.push_back(scripted_sample(fx.world, fx.world.facts[i], i % 3 != 0, i));
  }
  return fx;
}

}  // namespace plab::testing
