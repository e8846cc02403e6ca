#include "plab/world/world.hpp"

#include <algorithm>
#include <cmath>
#include <json.hpp>
#include <sstream>

#include "plab/util/error.hpp"
#include "plab/util/hash.hpp"
#include "plab/util/rng.hpp"

namespace plab::world {

namespace {

using nlohmann::json;

const std::vector<std::vector<std::string>> kPropertyNames = {
    {"capital"},     {"birth", "place"}, {"official", "language"}, {"currency"},
    {"head", "coach"}, {"founding", "year"}, {"home", "city"},       {"main", "export"},
};

// Slot markers inside question templates.
constexpr const char* kS = "{S}";
constexpr const char* kP = "{P}";

const std::vector<std::vector<std::string>> kTemplates = {
    {"what", "is", "the", kP, "of", kS, "?"},
    {"which", kP, "does", kS, "have", "?"},
    {"name", "the", kP, "of", kS, "?"},
    {kS, "has", "what", kP, "?"},
};

const std::vector<std::string> kFrame = {"<bos>", "<eos>", "q", ":", "a", "it", "is", ".", "?", "wrong"};
const std::vector<std::string> kTemplateWords = {"what", "the", "of", "which", "does", "have", "name", "has"};

std::vector<std::string> property_name(std::size_t r) {
  if (r < kPropertyNames.size()) return kPropertyNames[r];
  return {"property" + std::to_string(r)};
}

}  // namespace

TokenId Vocab::add(const std::string& token) {
  auto it = index_.find(token);
  if (it != index_.end()) return it->second;
  const auto id = static_cast<TokenId>(tokens_.size());
  tokens_.push_back(token);
  index_.emplace(token, id);
  return id;
}

TokenId Vocab::id(const std::string& token) const {
  auto it = index_.find(token);
  if (it == index_.end()) throw DataError("unknown token '" + token + "'");
  return it->second;
}

std::string World::entity_token(std::size_t e) const { return "e" + std::to_string(e); }

std::vector<TokenId> World::subject_tokens(const Fact& f) const { return {vocab.id(entity_token(f.subject))}; }

std::vector<TokenId> World::property_tokens(const Fact& f) const {
  std::vector<TokenId> out;
  for (const auto& t : relations.at(f.relation).property) out.push_back(vocab.id(t));
  return out;
}

std::vector<TokenId> World::object_tokens(const Fact& f) const {
  return {vocab.id(relations.at(f.relation).pool.at(f.object))};
}

std::size_t exposure_for_rank(double max_exposure, double zipf_s, std::size_t rank) {
  PLAB_REQUIRE(rank >= 1, "exposure_for_rank: rank must be >= 1");
  return static_cast<std::size_t>(std::llround(max_exposure * std::pow(static_cast<double>(rank), -zipf_s)));
}

World build_world(const WorldConfig& config) {
  if (config.n_entities < 2) throw ContractError("build_world: n_entities must be >= 2");
  if (config.n_relations < 1) throw ContractError("build_world: n_relations must be >= 1");
  if (config.pool_size < 1) throw ContractError("build_world: pool_size must be >= 1");
  if (!(config.zipf_s >= 0.0)) throw ContractError("build_world: zipf_s must be >= 0");
  if (!(config.fact_prob > 0.0 && config.fact_prob <= 1.0)) throw ContractError("build_world: fact_prob must be in (0, 1]");
  if (!(config.test_fraction >= 0.0 && config.test_fraction <= 1.0)) {
    throw ContractError("build_world: test_fraction must be in [0, 1]");
  }
  if (!(config.max_exposure >= 0.0)) throw ContractError("build_world: max_exposure must be >= 0");

  World w;
  w.config = config;
  Rng rng(Rng::mix(config.seed, 0x571d));

  for (const auto& t : kFrame) w.vocab.add(t);
  for (const auto& t : kTemplateWords) w.vocab.add(t);
  w.bos = w.vocab.id("<bos>");
  w.eos = w.vocab.id("<eos>");
  w.stop = w.vocab.id(".");
  w.wrong = w.vocab.id("wrong");
  for (const auto& t : kTemplateWords) w.filler_tokens.push_back(w.vocab.id(t));
  w.filler_tokens.push_back(w.vocab.id("?"));

  for (std::size_t r = 0; r < config.n_relations; ++r) {
    Relation rel;
    rel.property = property_name(r);
    for (const auto& t : rel.property) w.vocab.add(t);
    w.relations.push_back(std::move(rel));
  }
  for (std::size_t e = 0; e < config.n_entities; ++e) w.vocab.add(w.entity_token(e));
  for (std::size_t r = 0; r < config.n_relations; ++r) {
    for (std::size_t k = 0; k < config.pool_size; ++k) {
      const std::string tok = "o" + std::to_string(r) + "_" + std::to_string(k);
      w.relations[r].pool.push_back(tok);
      w.vocab.add(tok);
    }
  }

  std::vector<std::size_t> perm(config.n_entities);
  for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = i;
  rng.shuffle(perm);
  w.entity_rank.resize(config.n_entities);
  for (std::size_t i = 0; i < perm.size(); ++i) w.entity_rank[perm[i]] = i + 1;

  for (std::size_t e = 0; e < config.n_entities; ++e) {
    std::vector<std::size_t> rels;
    for (std::size_t r = 0; r < config.n_relations; ++r) {
      if (rng.bernoulli(config.fact_prob)) rels.push_back(r);
    }
    if (rels.empty()) rels.push_back(rng.below(config.n_relations));
    for (std::size_t r : rels) {
      Fact f;
      f.id = w.facts.size();
      f.subject = e;
      f.relation = r;
      f.object = rng.below(config.pool_size);
      f.popularity_rank = w.entity_rank[e];
      f.exposure = exposure_for_rank(config.max_exposure, config.zipf_s, f.popularity_rank);
      f.eval_template = rng.below(kNumTemplates);
      w.facts.push_back(f);
    }
  }

  std::vector<std::size_t> order(w.facts.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  rng.shuffle(order);
  const auto n_test = static_cast<std::size_t>(std::llround(config.test_fraction * static_cast<double>(order.size())));
  for (std::size_t k = 0; k < order.size(); ++k) w.facts[order[k]].split = k < n_test ? Split::kTest : Split::kTrain;
  return w;
}

QAPrompt render_qa(const World& world, const Fact& fact, std::size_t template_id) {
  if (template_id >= kTemplates.size()) throw ContractError("render_qa: unknown template " + std::to_string(template_id));
  const auto subject = world.subject_tokens(fact);
  const auto property = world.property_tokens(fact);

  QAPrompt out;
  out.tokens = {world.bos, world.vocab.id("q"), world.vocab.id(":")};
  out.question.start = out.tokens.size();
  bool saw_s = false;
  bool saw_p = false;
  for (const auto& word : kTemplates[template_id]) {
    if (word == kS) {
      out.subject = {out.tokens.size(), out.tokens.size() + subject.size() - 1};
      out.tokens.insert(out.tokens.end(), subject.begin(), subject.end());
      saw_s = true;
    } else if (word == kP) {
      out.property = {out.tokens.size(), out.tokens.size() + property.size() - 1};
      out.tokens.insert(out.tokens.end(), property.begin(), property.end());
      saw_p = true;
    } else {
      out.tokens.push_back(world.vocab.id(word));
    }
  }
  if (!saw_s || !saw_p) throw ContractError("render_qa: template lacks a subject or property slot");
  out.question.end = out.tokens.size() - 1;
  out.tokens.push_back(world.vocab.id("a"));
  out.tokens.push_back(world.vocab.id(":"));
  return out;
}

std::vector<TokenId> render_training_sequence(const World& world, const Fact& fact, std::size_t template_id) {
  auto seq = render_qa(world, fact, template_id).tokens;
  seq.push_back(world.vocab.id("it"));
  seq.push_back(world.vocab.id("is"));
  for (TokenId t : world.object_tokens(fact)) seq.push_back(t);
  seq.push_back(world.vocab.id("."));
  seq.push_back(world.eos);
  return seq;
}

std::vector<std::vector<TokenId>> build_corpus(const World& world) {
  Rng rng(Rng::mix(world.config.seed, 0xc0de));
  std::vector<std::vector<TokenId>> corpus;
  for (const auto& f : world.facts) {
    for (std::size_t c = 0; c < f.exposure; ++c) {
      const std::size_t t = (f.eval_template + 1 + c % (kNumTemplates - 1)) % kNumTemplates;
      corpus.push_back(render_training_sequence(world, f, t));
    }
    const std::size_t pool = world.relations[f.relation].pool.size();
    const auto n_wrong = static_cast<std::size_t>(std::floor(world.config.correction_ratio * static_cast<double>(f.exposure)));
    if (pool < 2) continue;
    for (std::size_t c = 0; c < n_wrong; ++c) {
      const std::size_t t = (f.eval_template + 1 + c % (kNumTemplates - 1)) % kNumTemplates;
      Fact wrong = f;
      wrong.object = (f.object + 1 + rng.below(pool - 1)) % pool;
      auto seq = render_training_sequence(world, wrong, t);
      seq.insert(seq.end() - 2, world.wrong);
      corpus.push_back(std::move(seq));
    }
  }
  return corpus;
}

std::vector<std::size_t> QASample::exact_question_positions() const {
  std::vector<std::size_t> out;
  for (std::size_t p = subject.start; p <= subject.end; ++p) out.push_back(p);
  for (std::size_t p = property.start; p <= property.end; ++p) out.push_back(p);
  std::sort(out.begin(), out.end());
  return out;
}

std::optional<QASample> label_generation(const World& world, const Fact& fact, const QAPrompt& prompt,
                                         const lm::GenerationRecord& generation) {
  PLAB_REQUIRE(!generation.generated.empty(), "label_generation: empty generation");
  const auto& g = generation.generated;
  const TokenId it = world.vocab.id("it");
  const TokenId is = world.vocab.id("is");
  // it is X+ .
  if (g.size() < 4 || g[0] != it || g[1] != is || g.back() != world.stop) return std::nullopt;
  const std::size_t dot_at = g.size() - 1;
  for (std::size_t k = 2; k < dot_at; ++k) {
    if (g[k] == world.eos || g[k] == world.bos || g[k] == world.wrong) return std::nullopt;
  }

  QASample s;
  s.fact_id = fact.id;
  s.tokens = prompt.tokens;
  s.subject = prompt.subject;
  s.property = prompt.property;
  s.question = prompt.question;
  const std::size_t base = s.tokens.size();
  s.tokens.insert(s.tokens.end(), g.begin(), g.end());
  s.answer_region = {base, s.tokens.size() - 1};
  s.exact_answer = {base + 2, base + dot_at - 1};
  s.gold = world.object_tokens(fact);
  s.popularity_rank = fact.popularity_rank;
  s.split = fact.split;
  for (std::size_t k = 2; k < dot_at; ++k) {
    s.answer_logits.push_back(generation.chosen_logits.at(k));
    s.answer_probs.push_back(generation.chosen_probs.at(k));
  }
  s.z = relabel(s);
  return s;
}

int relabel(const QASample& s) {
  if (s.exact_answer.length() != s.gold.size()) return 1;
  for (std::size_t k = 0; k < s.gold.size(); ++k) {
    if (s.tokens.at(s.exact_answer.start + k) != s.gold[k]) return 1;
  }
  return 0;
}

void check_sample(const QASample& s) {
  const std::size_t T = s.tokens.size();
  auto in_bounds = [&](const Span& sp) { return sp.start <= sp.end && sp.end < T; };
  if (!in_bounds(s.subject) || !in_bounds(s.property) || !in_bounds(s.exact_answer) || !in_bounds(s.question) ||
      !in_bounds(s.answer_region)) {
    throw DataError("sample " + std::to_string(s.id) + ": span out of bounds");
  }
  auto overlap = [](const Span& a, const Span& b) { return a.start <= b.end && b.start <= a.end; };
  if (overlap(s.subject, s.property) || overlap(s.subject, s.exact_answer) || overlap(s.property, s.exact_answer)) {
    throw DataError("sample " + std::to_string(s.id) + ": spans overlap");
  }
  auto inside = [](const Span& inner, const Span& outer) { return inner.start >= outer.start && inner.end <= outer.end; };
  if (!inside(s.subject, s.question) || !inside(s.property, s.question)) {
    throw DataError("sample " + std::to_string(s.id) + ": question span outside the question region");
  }
  if (!inside(s.exact_answer, s.answer_region) || s.exact_answer == s.answer_region) {
    throw DataError("sample " + std::to_string(s.id) + ": exact answer must be a proper part of the answer region");
  }
}

std::uint64_t corpus_hash(const std::vector<std::vector<TokenId>>& corpus) {
  Fnv1a h;
  for (const auto& seq : corpus) {
    h.update_u64(seq.size());
    for (TokenId t : seq) h.update_u64(static_cast<std::uint64_t>(static_cast<std::uint32_t>(t)));
  }
  return h.digest();
}

namespace {

json span_json(const Span& s) { return json::array({s.start, s.end}); }
Span span_from(const json& j) { return {j.at(0).get<std::size_t>(), j.at(1).get<std::size_t>()}; }

}  // namespace

std::string samples_to_jsonl(const World& world, const std::vector<QASample>& samples) {
  std::ostringstream out;
  for (const auto& s : samples) {
    json j;
    j["schema_version"] = kQaSchemaVersion;
    j["id"] = s.id;
    j["fact_id"] = s.fact_id;
    j["template_id"] = s.template_id;
    std::string text;
    for (std::size_t k = 0; k < s.tokens.size(); ++k) text += (k ? " " : "") + world.vocab.token(s.tokens[k]);
    j["text"] = text;
    j["token_ids"] = s.tokens;
    j["exact_subject"] = span_json(s.subject);
    j["exact_property"] = span_json(s.property);
    j["question_region"] = span_json(s.question);
    j["answer_region"] = span_json(s.answer_region);
    j["exact_answer"] = span_json(s.exact_answer);
    j["gold_ids"] = s.gold;
    j["z"] = s.z;
    j["popularity_rank"] = s.popularity_rank;
    j["split"] = s.split == Split::kTest ? "test" : "train";
    j["answer_logits"] = s.answer_logits;
    j["answer_probs"] = s.answer_probs;
    out << j.dump() << '\n';
  }
  return out.str();
}

std::vector<QASample> samples_from_jsonl(const std::string& text) {
  std::vector<QASample> out;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      const json j = json::parse(line);
      if (j.at("schema_version").get<int>() != kQaSchemaVersion) {
        throw DataError("unsupported schema_version");
      }
      QASample s;
      s.id = j.at("id");
      s.fact_id = j.at("fact_id");
      s.template_id = j.at("template_id");
      s.tokens = j.at("token_ids").get<std::vector<TokenId>>();
      s.subject = span_from(j.at("exact_subject"));
      s.property = span_from(j.at("exact_property"));
      s.question = span_from(j.at("question_region"));
      s.answer_region = span_from(j.at("answer_region"));
      s.exact_answer = span_from(j.at("exact_answer"));
      s.gold = j.at("gold_ids").get<std::vector<TokenId>>();
      s.z = j.at("z");
      s.popularity_rank = j.at("popularity_rank");
      s.split = j.at("split") == "test" ? Split::kTest : Split::kTrain;
      s.answer_logits = j.at("answer_logits").get<std::vector<double>>();
      s.answer_probs = j.at("answer_probs").get<std::vector<double>>();
      out.push_back(std::move(s));
    } catch (const json::exception& e) {
      throw DataError("qa jsonl line " + std::to_string(lineno) + ": " + e.what());
    } catch (const DataError& e) {
      throw DataError("qa jsonl line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

std::string facts_to_jsonl(const World& world) {
  std::ostringstream out;
  for (const auto& f : world.facts) {
    json j;
    j["schema_version"] = kQaSchemaVersion;
    j["id"] = f.id;
    j["subject"] = world.entity_token(f.subject);
    std::string prop;
    for (const auto& t : world.relations[f.relation].property) prop += (prop.empty() ? "" : " ") + t;
    j["relation"] = prop;
    j["object"] = world.relations[f.relation].pool[f.object];
    j["popularity_rank"] = f.popularity_rank;
    j["exposure"] = f.exposure;
    j["eval_template"] = f.eval_template;
    j["split"] = f.split == Split::kTest ? "test" : "train";
    out << j.dump() << '\n';
  }
  return out.str();
}

}  // namespace plab::world
