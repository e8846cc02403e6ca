#include "plab/runs/config.hpp"

#include <fmt/format.h>

#include <charconv>
#include <json.hpp>
#include <sstream>

#include "plab/util/error.hpp"
#include "plab/util/hash.hpp"
#include "plab/util/io.hpp"
#include "plab/util/rng.hpp"

namespace plab::runs {

namespace {

// Calls f(key, field) for every configurable field, in a fixed order.
template <typename Config, typename F>
void visit_fields(Config& c, F&& f) {
  f("seed", c.seed);
  f("run_id", c.run_id);
  f("world.n_entities", c.world.n_entities);
  f("world.n_relations", c.world.n_relations);
  f("world.zipf_s", c.world.zipf_s);
  f("world.pool_size", c.world.pool_size);
  f("world.fact_prob", c.world.fact_prob);
  f("world.max_exposure", c.world.max_exposure);
  f("world.test_fraction", c.world.test_fraction);
  f("world.correction_ratio", c.world.correction_ratio);
  f("model.n_layers", c.model.n_layers);
  f("model.n_heads", c.model.n_heads);
  f("model.d_model", c.model.d_model);
  f("model.d_ff", c.model.d_ff);
  f("model.max_seq_len", c.model.max_seq_len);
  f("train.steps", c.train.steps);
  f("train.lr", c.train.lr);
  f("train.batch_size", c.train.batch_size);
  f("train.beta1", c.train.beta1);
  f("train.beta2", c.train.beta2);
  f("train.grad_clip", c.train.grad_clip);
  f("probe.iterations", c.probe.iterations);
  f("probe.lr", c.probe.lr);
  f("probe.l2", c.probe.l2);
  f("probe.validation_fraction", c.validation_fraction);
  f("probe.site", c.site);
  f("probe.selector", c.selector);
  f("experiments.threshold", c.threshold);
  f("experiments.knockout_mode", c.knockout_mode);
  f("experiments.knockout_rows", c.knockout_rows);
  f("experiments.answer_only_keep_positions", c.answer_only_keep_positions);
  f("stats.bootstrap_resamples", c.bootstrap_resamples);
  f("stats.kde_grid", c.kde_grid);
  f("pathways.null_permutations", c.null_permutations);
  f("detection.pr_epochs", c.pr_epochs);
  f("detection.pr_lr", c.pr_lr);
  f("detection.pr_batch_size", c.pr_batch_size);
  f("detection.pr_init_alpha", c.pr_init_alpha);
  f("detection.pr_granularity", c.pr_granularity);
}

nlohmann::json* json_slot(nlohmann::json& root, const std::string& key, bool create) {
  nlohmann::json* node = &root;
  std::size_t start = 0;
  for (;;) {
    const auto dot = key.find('.', start);
    const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (!create && !node->contains(part)) return nullptr;
    node = &(*node)[part];
    if (dot == std::string::npos) return node;
    start = dot + 1;
  }
}

template <typename T>
void assign_from_string(const std::string& key, const std::string& value, T& field) {
  auto bad = [&] { return ContractError("config: bad value '" + value + "' for " + key); };
  if constexpr (std::is_same_v<T, std::string>) {
    field = value;
  } else if constexpr (std::is_same_v<T, bool>) {
    if (value == "true" || value == "1") field = true;
    else if (value == "false" || value == "0") field = false;
    else throw bad();
  } else if constexpr (std::is_same_v<T, double>) {
    std::size_t used = 0;
    try {
      field = std::stod(value, &used);
    } catch (const std::exception&) {
      throw bad();
    }
    if (used != value.size()) throw bad();
  } else {
    T v{};
    const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
    if (ec != std::errc() || ptr != value.data() + value.size()) throw bad();
    field = v;
  }
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

std::string RunConfig::effective_run_id() const { return run_id.empty() ? "seed-" + std::to_string(seed) : run_id; }

probing::ProbeAddress RunConfig::address(std::size_t layer) const {
  return {layer, probing::parse_site(site), probing::parse_selector(selector)};
}

interventions::KnockoutConfig RunConfig::knockout() const {
  interventions::KnockoutConfig k;
  k.threshold = threshold;
  if (knockout_mode == "post_softmax") k.mode = lm::KnockoutMode::kPostSoftmax;
  else if (knockout_mode == "pre_softmax") k.mode = lm::KnockoutMode::kPreSoftmax;
  else throw ContractError("config: unknown knockout_mode '" + knockout_mode + "'");
  if (knockout_rows == "after_last_exact_question") k.rows = interventions::KnockoutRows::kAfterLastExactQuestion;
  else if (knockout_rows == "answer_region") k.rows = interventions::KnockoutRows::kAnswerRegion;
  else throw ContractError("config: unknown knockout_rows '" + knockout_rows + "'");
  return k;
}

detection::PRTrainConfig RunConfig::pr() const {
  detection::PRTrainConfig p;
  p.epochs = pr_epochs;
  p.lr = pr_lr;
  p.batch_size = pr_batch_size;
  p.init_alpha = pr_init_alpha;
  if (pr_granularity == "head") p.granularity = lm::ReweightGranularity::kHead;
  else if (pr_granularity == "layer") p.granularity = lm::ReweightGranularity::kLayer;
  else throw ContractError("config: unknown pr_granularity '" + pr_granularity + "'");
  p.seed = Rng::mix(seed, 41);
  return p;
}

lm::ModelConfig RunConfig::model_config(std::size_t vocab_size) const {
  lm::ModelConfig m = model;
  m.vocab_size = vocab_size;
  m.seed = Rng::mix(seed, 2);
  return m;
}

world::WorldConfig RunConfig::world_config() const {
  world::WorldConfig w = world;
  w.seed = Rng::mix(seed, 1);
  return w;
}

lm::TrainConfig RunConfig::train_config() const {
  lm::TrainConfig t = train;
  t.seed = Rng::mix(seed, 3);
  return t;
}

void RunConfig::validate() const {
  for (char ch : effective_run_id()) {
    PLAB_REQUIRE(std::isalnum(static_cast<unsigned char>(ch)) || ch == '-' || ch == '_' || ch == '.',
                 "config: run_id may only hold [A-Za-z0-9._-]");
  }
  (void)address(0);
  (void)knockout();
  (void)pr();
  PLAB_REQUIRE(validation_fraction > 0.0 && validation_fraction < 1.0, "config: validation_fraction must be in (0, 1)");
  PLAB_REQUIRE(threshold > 0.0 && threshold < 1.0, "config: threshold must be in (0, 1)");
  PLAB_REQUIRE(train.steps >= 1 && train.batch_size >= 1, "config: train.steps and train.batch_size must be >= 1");
  PLAB_REQUIRE(bootstrap_resamples >= 1 && kde_grid >= 2, "config: stats sizes too small");
  PLAB_REQUIRE(pr_batch_size >= 1 && pr_init_alpha >= 0.0, "config: bad PR settings");
  lm::ModelConfig m = model;
  m.vocab_size = 1;
  m.validate();
}

std::string config_to_json(const RunConfig& config) {
  nlohmann::json root = nlohmann::json::object();
  visit_fields(config, [&](const std::string& key, const auto& field) { *json_slot(root, key, true) = field; });
  return root.dump(2) + "\n";
}

RunConfig config_from_json(const std::string& text) {
  nlohmann::json root;
  try {
    root = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("config: invalid JSON: ") + e.what());
  }
  RunConfig c;
  std::size_t seen = 0;
  visit_fields(c, [&](const std::string& key, auto& field) {
    const nlohmann::json* slot = json_slot(root, key, false);
    if (slot == nullptr) return;
    ++seen;
    try {
      field = slot->get<std::decay_t<decltype(field)>>();
    } catch (const nlohmann::json::exception&) {
      throw ContractError("config: bad value for " + key);
    }
  });
  if (root.flatten().size() != seen) throw ContractError("config: unknown keys in JSON config");
  c.validate();
  return c;
}

RunConfig config_from_key_values(const std::string& text) {
  RunConfig c;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ContractError("config line " + std::to_string(lineno) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (value.size() >= 2 && value.front() == '"' && value.back() == '"') value = value.substr(1, value.size() - 2);
    bool found = false;
    visit_fields(c, [&](const std::string& k, auto& field) {
      if (k != key) return;
      assign_from_string(key, value, field);
      found = true;
    });
    if (!found) throw ContractError("config line " + std::to_string(lineno) + ": unknown key '" + key + "'");
  }
  c.validate();
  return c;
}

std::string config_to_key_values(const RunConfig& config) {
  std::string out;
  visit_fields(config, [&](const std::string& key, const auto& field) {
    using T = std::decay_t<decltype(field)>;
    if constexpr (std::is_same_v<T, std::string>) out += fmt::format("{} = \"{}\"\n", key, field);
    else if constexpr (std::is_same_v<T, bool>) out += fmt::format("{} = {}\n", key, field ? "true" : "false");
    else out += fmt::format("{} = {}\n", key, field);
  });
  return out;
}

RunConfig load_config(const std::filesystem::path& path) {
  const std::string text = read_file(path);
  const auto first = text.find_first_not_of(" \t\r\n");
  if (first != std::string::npos && text[first] == '{') return config_from_json(text);
  return config_from_key_values(text);
}

std::string config_hash(const RunConfig& config) { return hash_hex(config_to_json(config)); }

}  // namespace plab::runs
