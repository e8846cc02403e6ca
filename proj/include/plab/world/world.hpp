#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "plab/lm/generate.hpp"

namespace plab::world {

using TokenId = std::int32_t;

// Inclusive token range [start, end].
struct Span {
  std::size_t start = 0;
  std::size_t end = 0;

  std::size_t length() const noexcept { return end - start + 1; }
  bool contains(std::size_t p) const noexcept { return p >= start && p <= end; }
  friend bool operator==(const Span&, const Span&) = default;
};

class Vocab {
 public:
  TokenId add(const std::string& token);
  TokenId id(const std::string& token) const;  // throws DataError when unknown
  bool has(const std::string& token) const { return index_.count(token) != 0; }
  const std::string& token(TokenId id) const { return tokens_.at(static_cast<std::size_t>(id)); }
  std::size_t size() const noexcept { return tokens_.size(); }
  const std::vector<std::string>& tokens() const noexcept { return tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> index_;
};

struct WorldConfig {
  std::size_t n_entities = 500;
  std::size_t n_relations = 5;
  double zipf_s = 1.1;
  std::size_t pool_size = 10;       // objects per relation
  double fact_prob = 0.5;           // chance an (entity, relation) pair exists
  double max_exposure = 80.0;       // corpus copies of a rank-1 fact
  double test_fraction = 0.5;
  // Corrected wrong-answer sequences per corpus copy of a fact.
  double correction_ratio = 0.25;
  std::uint64_t seed = 0;

  friend bool operator==(const WorldConfig&, const WorldConfig&) = default;
};

struct Relation {
  std::vector<std::string> property;  // multi-token property name
  std::vector<std::string> pool;      // object tokens
};

enum class Split { kTrain, kTest };

struct Fact {
  std::size_t id = 0;
  std::size_t subject = 0;   // entity index
  std::size_t relation = 0;
  std::size_t object = 0;    // index into the relation's pool
  std::size_t popularity_rank = 1;  // 1 = most popular
  std::size_t exposure = 0;         // copies in the LM corpus
  std::size_t eval_template = 0;    // never used for this fact in the corpus
  Split split = Split::kTrain;
};

inline constexpr std::size_t kNumTemplates = 4;

struct World {
  WorldConfig config;
  std::vector<Relation> relations;
  std::vector<std::size_t> entity_rank;  // entity -> popularity rank (1-based)
  std::vector<Fact> facts;
  Vocab vocab;

  // Template and punctuation words that never fill a slot.
  std::vector<TokenId> filler_tokens;

  TokenId bos = 0, eos = 0;
  TokenId stop = 0;   // ends an answer; generation halts here
  TokenId wrong = 0;  // marks a corrected wrong answer in the corpus
  std::string entity_token(std::size_t e) const;
  std::vector<TokenId> subject_tokens(const Fact& f) const;
  std::vector<TokenId> property_tokens(const Fact& f) const;
  std::vector<TokenId> object_tokens(const Fact& f) const;
};

// Errors: n_entities < 2, n_relations < 1, pool_size < 1, zipf_s < 0,
// probabilities outside [0, 1].
World build_world(const WorldConfig& config);

// Corpus copies for a fact at `rank`: round(max_exposure * rank^-s).
std::size_t exposure_for_rank(double max_exposure, double zipf_s, std::size_t rank);

// Prompt and question-side spans for one fact under one template. Layout:
//   <bos> q : <question ...> a :
struct QAPrompt {
  std::vector<TokenId> tokens;
  Span subject;
  Span property;
  Span question;  // first question word through "?"
};

QAPrompt render_qa(const World& world, const Fact& fact, std::size_t template_id);

// Full training sequence: prompt followed by "it is <object> . <eos>".
std::vector<TokenId> render_training_sequence(const World& world, const Fact& fact, std::size_t template_id);

// LM corpus: each fact appears `exposure` times, cycling through every
// template except its evaluation template. In addition,
// floor(correction_ratio * exposure) copies state a wrong object followed by
// "wrong" ("it is Y wrong . <eos>").
std::vector<std::vector<TokenId>> build_corpus(const World& world);

struct QASample {
  std::size_t id = 0;
  std::size_t fact_id = 0;
  std::size_t template_id = 0;
  std::vector<TokenId> tokens;  // prompt + generated answer through the stop token
  Span subject;
  Span property;
  Span question;
  Span answer_region;  // generated tokens
  Span exact_answer;
  std::vector<TokenId> gold;
  int z = 0;  // 1 = hallucinated
  std::size_t popularity_rank = 1;
  Split split = Split::kTrain;
  // Chosen-token logits and probabilities at the exact-answer steps.
  std::vector<double> answer_logits;
  std::vector<double> answer_probs;

  // Exact question tokens (subject then property positions), ascending.
  std::vector<std::size_t> exact_question_positions() const;
};

// Answer grammar: "it is <one or more tokens> .". Returns nullopt for a
// malformed generation (excluded, not labeled).
std::optional<QASample> label_generation(const World& world, const Fact& fact, const QAPrompt& prompt,
                                         const lm::GenerationRecord& generation);

struct GenerationStats {
  std::size_t attempted = 0;
  std::size_t excluded = 0;  // malformed generations
};

// Greedy answers for every fact under its evaluation template. Sample ids are
// assigned in fact order after exclusions.
std::vector<QASample> generate_samples(const lm::Model& model, const World& world, GenerationStats* stats = nullptr);

// Recomputes z from the stored tokens.
int relabel(const QASample& sample);

// Throws DataError when spans overlap, leave the sequence, or sit in the
// wrong region.
void check_sample(const QASample& sample);

std::uint64_t corpus_hash(const std::vector<std::vector<TokenId>>& corpus);

// JSON-lines I/O. Each record carries "schema_version".
inline constexpr int kQaSchemaVersion = 1;
std::string samples_to_jsonl(const World& world, const std::vector<QASample>& samples);
std::vector<QASample> samples_from_jsonl(const std::string& text);
std::string facts_to_jsonl(const World& world);

}  // namespace plab::world
