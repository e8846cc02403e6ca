#include <doctest.h>

#include <algorithm>
#include <set>

#include "plab/util/error.hpp"
#include "plab/world/world.hpp"

using namespace plab;
using namespace plab::world;

namespace {

WorldConfig small_world(std::uint64_t seed = 5) {
  WorldConfig c;
  c.n_entities = 40;
  c.n_relations = 3;
  c.pool_size = 6;
  c.max_exposure = 20;
  c.seed = seed;
  return c;
}

lm::GenerationRecord record(const World& w, const std::vector<std::string>& words) {
  lm::GenerationRecord g;
  for (const auto& t : words) {
    g.generated.push_back(w.vocab.id(t));
    g.chosen_logits.push_back(static_cast<double>(g.generated.size()));
    g.chosen_probs.push_back(0.5);
  }
  return g;
}

const Fact& fact_with_relation(const World& w, std::size_t r) {
  return *std::find_if(w.facts.begin(), w.facts.end(), [&](const Fact& f) { return f.relation == r; });
}

}  // namespace

TEST_CASE("exposure follows the Zipf law and is maximal at rank one") {
  CHECK(exposure_for_rank(40, 1.1, 1) == 40);
  CHECK(exposure_for_rank(40, 1.1, 2) == 19);  // round(40 * 2^-1.1) = round(18.66)
  for (std::size_t r = 1; r < 200; ++r) CHECK(exposure_for_rank(40, 1.1, r) >= exposure_for_rank(40, 1.1, r + 1));
  CHECK(exposure_for_rank(40, 1.1, 10000) == 0);

  const World w = build_world(small_world());
  const auto top = std::max_element(w.facts.begin(), w.facts.end(),
                                    [](const Fact& a, const Fact& b) { return a.exposure < b.exposure; });
  CHECK(top->popularity_rank == 1);
}

TEST_CASE("zipf exponent zero gives flat exposure") {
  auto c = small_world();
  c.zipf_s = 0.0;
  const World w = build_world(c);
  for (const auto& f : w.facts) CHECK(f.exposure == 20);
}

TEST_CASE("world building is deterministic and every entity has a fact") {
  const World a = build_world(small_world()), b = build_world(small_world());
  REQUIRE(a.facts.size() == b.facts.size());
  for (std::size_t i = 0; i < a.facts.size(); ++i) {
    CHECK(a.facts[i].subject == b.facts[i].subject);
    CHECK(a.facts[i].object == b.facts[i].object);
    CHECK(a.facts[i].split == b.facts[i].split);
  }
  std::set<std::size_t> subjects;
  std::set<std::pair<std::size_t, std::size_t>> pairs;
  for (const auto& f : a.facts) {
    subjects.insert(f.subject);
    CHECK(pairs.insert({f.subject, f.relation}).second);
    CHECK(f.popularity_rank >= 1);
  }
  CHECK(subjects.size() == 40);
}

TEST_CASE("degenerate world sizes are rejected") {
  auto c = small_world();
  c.n_entities = 1;
  CHECK_THROWS_AS(build_world(c), ContractError);
  c = small_world();
  c.n_relations = 0;
  CHECK_THROWS_AS(build_world(c), ContractError);
  c = small_world();
  c.fact_prob = 1.5;
  CHECK_THROWS_AS(build_world(c), ContractError);
}

TEST_CASE("capital-style question spans cover the relation and the entity") {
  const World w = build_world(small_world());
  const Fact& f = fact_with_relation(w, 0);
  const auto q = render_qa(w, f, 0);  // what is the {P} of {S} ?
  REQUIRE(q.property.length() == 1);
  REQUIRE(q.subject.length() == 1);
  CHECK(w.vocab.token(q.tokens[q.property.start]) == "capital");
  CHECK(w.vocab.token(q.tokens[q.subject.start]) == w.entity_token(f.subject));
  CHECK(w.vocab.token(q.tokens[q.question.start]) == "what");
  CHECK(w.vocab.token(q.tokens[q.question.end]) == "?");
  CHECK(w.vocab.token(q.tokens.back()) == ":");
}

TEST_CASE("multi-token properties get multi-token spans that re-locate exactly") {
  const World w = build_world(small_world());
  const Fact& f = fact_with_relation(w, 1);  // birth place
  for (std::size_t t = 0; t < kNumTemplates; ++t) {
    const auto q = render_qa(w, f, t);
    CHECK(q.property.length() == 2);
    const auto prop = w.property_tokens(f);
    CHECK(std::equal(prop.begin(), prop.end(), q.tokens.begin() + static_cast<long>(q.property.start)));
    CHECK(q.tokens[q.subject.start] == w.subject_tokens(f)[0]);
  }
  CHECK_THROWS_AS(render_qa(w, f, kNumTemplates), ContractError);
}

TEST_CASE("labeling: gold answer is factual, any other token hallucinated") {
  const World w = build_world(small_world());
  const Fact& f = fact_with_relation(w, 0);
  const auto q = render_qa(w, f, f.eval_template);
  const std::string gold = w.vocab.token(w.object_tokens(f)[0]);
  const std::string other = w.relations[0].pool[(f.object + 1) % w.relations[0].pool.size()];

  const auto right = label_generation(w, f, q, record(w, {"it", "is", gold, "."}));
  REQUIRE(right.has_value());
  CHECK(right->z == 0);
  CHECK(right->exact_answer == Span{q.tokens.size() + 2, q.tokens.size() + 2});
  CHECK(right->answer_region == Span{q.tokens.size(), q.tokens.size() + 3});
  CHECK(right->answer_logits == std::vector<double>{3.0});
  CHECK_NOTHROW(check_sample(*right));

  const auto wrong = label_generation(w, f, q, record(w, {"it", "is", other, "."}));
  REQUIRE(wrong.has_value());
  CHECK(wrong->z == 1);

  const auto longer = label_generation(w, f, q, record(w, {"it", "is", gold, gold, "."}));
  REQUIRE(longer.has_value());
  CHECK(longer->z == 1);
}

TEST_CASE("malformed generations are excluded, not labeled") {
  const World w = build_world(small_world());
  const Fact& f = w.facts[0];
  const auto q = render_qa(w, f, 0);
  CHECK_FALSE(label_generation(w, f, q, record(w, {"it", "is", "."})).has_value());
  CHECK_FALSE(label_generation(w, f, q, record(w, {"is", "it", "e1", "."})).has_value());
  CHECK_FALSE(label_generation(w, f, q, record(w, {"it", "is", "e1", "e2"})).has_value());
  CHECK_FALSE(label_generation(w, f, q, record(w, {"it", "is", "e1", "wrong", "."})).has_value());
}

TEST_CASE("span checks reject overlapping or misplaced spans") {
  const World w = build_world(small_world());
  const Fact& f = w.facts[0];
  const auto q = render_qa(w, f, 0);
  auto s = *label_generation(w, f, q, record(w, {"it", "is", "e1", "."}));
  auto bad = s;
  bad.subject = bad.property;
  CHECK_THROWS_AS(check_sample(bad), DataError);
  bad = s;
  bad.exact_answer = {s.tokens.size(), s.tokens.size()};
  CHECK_THROWS_AS(check_sample(bad), DataError);
  bad = s;
  bad.exact_answer = s.subject;
  CHECK_THROWS_AS(check_sample(bad), DataError);
}

TEST_CASE("corpus repeats each fact by exposure plus corrections and never uses the evaluation template") {
  auto c = small_world();
  c.correction_ratio = 0.25;
  const World w = build_world(c);
  const auto corpus = build_corpus(w);
  std::size_t expected = 0;
  for (const auto& f : w.facts) expected += f.exposure + f.exposure / 4;
  CHECK(corpus.size() == expected);

  std::set<std::vector<TokenId>> prompts;
  for (const auto& seq : corpus) {
    const auto colon = std::find(seq.begin() + 3, seq.end(), w.vocab.id("a"));
    prompts.insert(std::vector<TokenId>(seq.begin(), colon + 2));
  }
  for (const auto& f : w.facts) CHECK(prompts.count(render_qa(w, f, f.eval_template).tokens) == 0);
}

TEST_CASE("corrections state a wrong object followed by the marker") {
  auto c = small_world();
  c.correction_ratio = 1.0;
  const World w = build_world(c);
  std::size_t marked = 0;
  for (const auto& seq : build_corpus(w)) {
    if (seq[seq.size() - 3] != w.wrong) continue;
    ++marked;
    CHECK(seq[seq.size() - 2] == w.stop);
    CHECK(seq.back() == w.eos);
  }
  CHECK(marked > 0);
}

TEST_CASE("corpus hash is content-sensitive") {
  const World w = build_world(small_world());
  auto corpus = build_corpus(w);
  const auto h = corpus_hash(corpus);
  CHECK(h == corpus_hash(build_corpus(build_world(small_world()))));
  corpus[0][1] += 1;
  CHECK(h != corpus_hash(corpus));
}

TEST_CASE("samples survive the JSON-lines round trip and relabel consistently") {
  const World w = build_world(small_world());
  std::vector<QASample> samples;
  for (std::size_t i = 0; i < 3; ++i) {
    const Fact& f = w.facts[i];
    auto s = *label_generation(w, f, render_qa(w, f, f.eval_template),
                               record(w, {"it", "is", w.vocab.token(w.object_tokens(f)[0]), "."}));
    s.id = i;
    samples.push_back(s);
  }
  samples[2].tokens[samples[2].exact_answer.start] = w.vocab.id("e0");
  samples[2].z = relabel(samples[2]);

  const auto text = samples_to_jsonl(w, samples);
  CHECK(text.find("\"schema_version\":1") != std::string::npos);
  const auto back = samples_from_jsonl(text);
  REQUIRE(back.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(back[i].tokens == samples[i].tokens);
    CHECK(back[i].exact_answer == samples[i].exact_answer);
    CHECK(back[i].subject == samples[i].subject);
    CHECK(back[i].z == samples[i].z);
    CHECK(relabel(back[i]) == back[i].z);
    CHECK(back[i].answer_probs == samples[i].answer_probs);
  }
  CHECK(back[2].z == 1);
}

TEST_CASE("malformed sample files are data errors") {
  CHECK_THROWS_AS(samples_from_jsonl("{\"schema_version\": 99}\n"), DataError);
  CHECK_THROWS_AS(samples_from_jsonl("not json\n"), DataError);
}

TEST_CASE("exact question positions list subject then property, ascending") {
  QASample s;
  s.subject = {7, 7};
  s.property = {3, 4};
  CHECK(s.exact_question_positions() == std::vector<std::size_t>{3, 4, 7});
}
