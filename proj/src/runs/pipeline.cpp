#include "plab/runs/pipeline.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <json.hpp>
#include <set>

#include "plab/detection/detection.hpp"
#include "plab/interventions/answer_only.hpp"
#include "plab/interventions/knockout.hpp"
#include "plab/interventions/patching.hpp"
#include "plab/interventions/saliency.hpp"
#include "plab/interventions/tables.hpp"
#include "plab/lm/checkpoint.hpp"
#include "plab/lm/train.hpp"
#include "plab/pathways/pathways.hpp"
#include "plab/util/csv.hpp"
#include "plab/util/error.hpp"
#include "plab/util/hash.hpp"
#include "plab/util/io.hpp"
#include "plab/util/rng.hpp"

namespace plab::runs {

namespace fs = std::filesystem;
using interventions::Mode;
using nlohmann::json;

namespace {

constexpr const char* kManifest = "manifest.json";
constexpr const char* kCheckpoint = "model.ckpt";
constexpr const char* kSamples = "samples.jsonl";
constexpr const char* kProbes = "probes.json";
constexpr const char* kGate = "gate.json";

const std::vector<std::pair<Stage, const char*>>& stage_table() {
  static const std::vector<std::pair<Stage, const char*>> t = {
      {Stage::kWorld, "world"},       {Stage::kTrainLm, "train-lm"},     {Stage::kGenerate, "generate"},
      {Stage::kProbe, "probe"},       {Stage::kSaliency, "saliency"},    {Stage::kKnockout, "knockout"},
      {Stage::kPatch, "patch"},       {Stage::kAnswerOnly, "answer-only"}, {Stage::kPathways, "pathways"},
      {Stage::kDetect, "detect"},     {Stage::kReport, "report"}};
  return t;
}

std::string acts_path(const probing::ProbeAddress& a) { return "acts/" + a.key() + ".bin"; }

std::vector<probing::ProbeAddress> probe_grid(std::size_t n_layers) {
  std::vector<probing::ProbeAddress> out;
  for (std::size_t l = 0; l < n_layers; ++l)
    for (auto site : {probing::Site::kAttnOut, probing::Site::kMlpOut})
      for (auto sel : {probing::Selector::kFinalToken, probing::Selector::kBeforeExactAnswer,
                       probing::Selector::kLastExactAnswer})
        out.push_back({l, site, sel});
  return out;
}

}  // namespace

std::string stage_name(Stage s) {
  for (const auto& [st, name] : stage_table())
    if (st == s) return name;
  return "?";
}

Stage parse_stage(const std::string& name) {
  for (const auto& [st, n] : stage_table())
    if (n == name) return st;
  throw ContractError("unknown stage '" + name + "'");
}

std::vector<Stage> all_stages() {
  std::vector<Stage> out;
  for (const auto& [st, name] : stage_table()) out.push_back(st);
  return out;
}

std::vector<Stage> stage_dependencies(Stage s) {
  switch (s) {
    case Stage::kWorld: return {};
    case Stage::kTrainLm: return {Stage::kWorld};
    case Stage::kGenerate: return {Stage::kTrainLm};
    case Stage::kProbe: return {Stage::kGenerate};
    case Stage::kSaliency: return {Stage::kProbe};
    case Stage::kKnockout: return {Stage::kProbe};
    case Stage::kPatch: return {Stage::kKnockout};
    case Stage::kAnswerOnly: return {Stage::kKnockout};
    case Stage::kPathways: return {Stage::kKnockout};
    case Stage::kDetect: return {Stage::kPathways};
    case Stage::kReport:
      return {Stage::kSaliency, Stage::kPatch, Stage::kAnswerOnly, Stage::kPathways, Stage::kDetect};
  }
  return {};
}

std::vector<std::string> metric_tables() {
  return {"probe_grid.csv", "saliency.csv",      "kde.csv",            "knockout.csv",      "knockout_random.csv",
          "patch.csv",      "answer_only.csv",   "pathway_stats.csv",  "self_awareness.csv", "detection_auc.csv"};
}

std::string manifest_to_json(const RunManifest& m) {
  json j;
  j["tool_version"] = m.tool_version;
  j["config_hash"] = m.config_hash;
  j["seed"] = m.seed;
  j["corpus_hash"] = m.corpus_hash;
  j["checkpoint"] = m.checkpoint;
  j["stages"] = json::object();
  for (const auto& [name, rec] : m.stages) {
    json arts = json::array();
    for (const auto& a : rec.artifacts) arts.push_back({{"path", a.path}, {"hash", a.hash}});
    j["stages"][name] = {{"status", "done"}, {"artifacts", arts}};
  }
  j["metrics"] = m.metrics;
  return j.dump(2) + "\n";
}

RunManifest manifest_from_json(const std::string& text) {
  RunManifest m;
  try {
    const json j = json::parse(text);
    m.tool_version = j.at("tool_version");
    m.config_hash = j.at("config_hash");
    m.seed = j.at("seed");
    m.corpus_hash = j.at("corpus_hash");
    m.checkpoint = j.at("checkpoint");
    for (const auto& [name, rec] : j.at("stages").items()) {
      StageRecord r;
      for (const auto& a : rec.at("artifacts")) r.artifacts.push_back({a.at("path"), a.at("hash")});
      m.stages[name] = r;
    }
    m.metrics = j.at("metrics").get<std::map<std::string, double>>();
  } catch (const json::exception& e) {
    throw DataError(std::string("manifest: ") + e.what());
  }
  return m;
}

struct Runner::State {
  std::optional<world::World> world;
  std::optional<lm::Model> model;
  std::optional<std::vector<world::QASample>> samples;
  std::optional<std::vector<probing::Probe>> probes;  // configured site/selector, one per layer
  std::size_t l_star = 0;
  std::optional<std::vector<Mode>> modes;  // at l*, by sample id
};

Runner::Runner(RunConfig config, RunOptions options)
    : config_(std::move(config)), options_(std::move(options)), state_(std::make_unique<State>()) {
  config_.validate();
  dir_ = options_.out_dir / config_.effective_run_id();
  fs::create_directories(dir_);
  const std::string hash = config_hash(config_);
  if (fs::exists(dir_ / kManifest)) {
    RunManifest old = manifest_from_json(read_file(dir_ / kManifest));
    if (old.config_hash != hash) {
      throw PipelineError("run directory " + dir_.string() + " was produced by config " + old.config_hash +
                          ", current config is " + hash + "; refusing to mix stale artifacts (use a new --out-dir or run_id)");
    }
    manifest_ = std::move(old);
  } else {
    manifest_.config_hash = hash;
    manifest_.seed = config_.seed;
  }
  write("config.json", config_to_json(config_));
  save_manifest();
}

Runner::~Runner() = default;

void Runner::write(const std::string& rel, const std::string& contents) const { write_file_atomic(dir_ / rel, contents); }

void Runner::save_manifest() const { write_file_atomic(dir_ / kManifest, manifest_to_json(manifest_)); }

bool Runner::stage_intact(Stage stage) const {
  const auto it = manifest_.stages.find(stage_name(stage));
  if (it == manifest_.stages.end()) return false;
  for (const auto& a : it->second.artifacts) {
    if (!fs::exists(dir_ / a.path) || hash_file(dir_ / a.path) != a.hash) return false;
  }
  return true;
}

void Runner::require_dependencies(Stage stage) const {
  for (Stage dep : stage_dependencies(stage)) {
    if (!manifest_.stages.count(stage_name(dep))) {
      throw PipelineError("stage '" + stage_name(stage) + "' requires stage '" + stage_name(dep) + "', which has not run");
    }
    if (!stage_intact(dep)) {
      throw PipelineError("stage '" + stage_name(stage) + "': artifacts of stage '" + stage_name(dep) +
                          "' are missing or modified; re-run it (or use --resume)");
    }
  }
}

void Runner::record(Stage stage, const std::vector<std::string>& paths) {
  StageRecord rec;
  for (const auto& p : paths) rec.artifacts.push_back({p, hash_file(dir_ / p)});
  const std::string name = stage_name(stage);
  const auto old = manifest_.stages.find(name);
  const bool changed = old == manifest_.stages.end() || !(old->second == rec);
  manifest_.stages[name] = rec;
  if (changed) {
    // Everything downstream was computed from the previous outputs.
    std::set<Stage> stale{stage};
    for (Stage s : all_stages()) {
      for (Stage d : stage_dependencies(s)) {
        if (stale.count(d)) {
          stale.insert(s);
          break;
        }
      }
    }
    stale.erase(stage);
    for (Stage s : stale) manifest_.stages.erase(stage_name(s));
  }
  save_manifest();
}

void Runner::run(Stage stage) {
  require_dependencies(stage);
  if (options_.resume && stage_intact(stage)) {
    info("skip " + stage_name(stage) + " (resumed)");
    return;
  }
  info("stage " + stage_name(stage) + " [" + config_.effective_run_id() + "]");
  execute(stage);
}

void Runner::run_all() {
  for (Stage s : all_stages()) run(s);
}

void Runner::execute(Stage stage) {
  switch (stage) {
    case Stage::kWorld: return stage_world();
    case Stage::kTrainLm: return stage_train_lm();
    case Stage::kGenerate: return stage_generate();
    case Stage::kProbe: return stage_probe();
    case Stage::kSaliency: return stage_saliency();
    case Stage::kKnockout: return stage_knockout();
    case Stage::kPatch: return stage_patch();
    case Stage::kAnswerOnly: return stage_answer_only();
    case Stage::kPathways: return stage_pathways();
    case Stage::kDetect: return stage_detect();
    case Stage::kReport: return stage_report();
  }
}

// ---- lazy state -----------------------------------------------------------

namespace {

std::vector<std::size_t> rows_of(std::span<const world::QASample> samples, world::Split split) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < samples.size(); ++i)
    if (samples[i].split == split) out.push_back(i);
  return out;
}

std::vector<world::QASample> select(std::span<const world::QASample> samples, std::span<const std::size_t> rows) {
  std::vector<world::QASample> out;
  for (auto r : rows) out.push_back(samples[r]);
  return out;
}

std::vector<int> labels(std::span<const world::QASample> samples, std::span<const std::size_t> rows) {
  std::vector<int> y;
  for (auto r : rows) y.push_back(samples[r].z);
  return y;
}

}  // namespace

#define PLAB_STATE_WORLD()                                                                                        \
  [&]() -> const world::World& {                                                                                 \
    if (!state_->world) {                                                                                        \
      state_->world = world::build_world(config_.world_config());                                               \
      const std::string h = fmt::format("{:016x}", world::corpus_hash(world::build_corpus(*state_->world)));     \
      if (!manifest_.corpus_hash.empty() && manifest_.corpus_hash != h) {                                        \
        throw PipelineError("corpus hash " + h + " differs from manifest " + manifest_.corpus_hash + "; stale run"); \
      }                                                                                                          \
    }                                                                                                            \
    return *state_->world;                                                                                       \
  }()

#define PLAB_STATE_MODEL()                                                                  \
  [&]() -> const lm::Model& {                                                               \
    if (!state_->model) {                                                                   \
      auto ck = lm::load_checkpoint(dir_ / kCheckpoint);                                    \
      if (ck.meta.corpus_hash != manifest_.corpus_hash) {                                                 \
        throw PipelineError("checkpoint was trained on a different corpus; stale run");     \
      }                                                                                     \
      state_->model = std::move(ck.model);                                                  \
    }                                                                                       \
    return *state_->model;                                                                  \
  }()

#define PLAB_STATE_SAMPLES()                                                                      \
  [&]() -> const std::vector<world::QASample>& {                                                  \
    if (!state_->samples) state_->samples = world::samples_from_jsonl(read_file(dir_ / kSamples)); \
    return *state_->samples;                                                                      \
  }()

#define PLAB_STATE_PROBES()                                                        \
  [&]() -> const std::vector<probing::Probe>& {                                    \
    if (!state_->probes) {                                                         \
      const json j = json::parse(read_file(dir_ / kProbes));                       \
      state_->l_star = j.at("l_star");                                             \
      std::vector<probing::Probe> ps;                                              \
      for (const auto& p : j.at("probes")) ps.push_back(probing::probe_from_json(p.dump())); \
      state_->probes = std::move(ps);                                              \
    }                                                                              \
    return *state_->probes;                                                        \
  }()

#define PLAB_STATE_MODES()                                                                                     \
  [&]() -> const std::vector<Mode>& {                                                                         \
    if (!state_->modes) {                                                                                     \
      PLAB_STATE_PROBES();                                                                                    \
      const auto rows = interventions::parse_knockout_csv(read_file(dir_ / "knockout.csv"));                  \
      std::vector<bool> covered;                                                                              \
      state_->modes = interventions::modes_at_layer(rows, state_->l_star, PLAB_STATE_SAMPLES().size(), &covered); \
      if (std::find(covered.begin(), covered.end(), false) != covered.end()) {                                \
        throw DataError("knockout.csv lacks a mode label at l* for some samples");                            \
      }                                                                                                       \
    }                                                                                                         \
    return *state_->modes;                                                                                    \
  }()

// ---- stages ---------------------------------------------------------------

void Runner::stage_world() {
  state_->world.reset();
  const auto w = world::build_world(config_.world_config());
  const auto corpus = world::build_corpus(w);
  manifest_.corpus_hash = fmt::format("{:016x}", world::corpus_hash(corpus));
  json summary = {{"facts", w.facts.size()},
                  {"vocab_size", w.vocab.size()},
                  {"corpus_sequences", corpus.size()},
                  {"corpus_hash", manifest_.corpus_hash},
                  {"vocab", w.vocab.tokens()}};
  write("world.json", summary.dump(2) + "\n");
  write("facts.jsonl", world::facts_to_jsonl(w));
  state_->world = w;
  record(Stage::kWorld, {"world.json", "facts.jsonl"});
}

void Runner::stage_train_lm() {
  const auto& w = PLAB_STATE_WORLD();
  const auto corpus = world::build_corpus(w);
  lm::Model model(config_.model_config(w.vocab.size()));
  const auto cfg = config_.train_config();
  const std::size_t every = std::max<std::size_t>(1, cfg.steps / 10);
  const auto result = lm::train_lm(model, corpus, cfg, [&](std::size_t step, double loss) {
    if ((step + 1) % every == 0) info(fmt::format("  step {}/{} loss {:.4f}", step + 1, cfg.steps, loss));
  });
  CsvWriter loss("train_loss", 1, {"step", "loss"});
  for (std::size_t k = 0; k < result.loss_curve.size(); ++k) {
    loss.cell(k).cell(result.loss_curve[k]);
    loss.end_row();
  }
  write("train_loss.csv", loss.str());
  lm::CheckpointMeta meta;
  meta.seed = config_.seed;
  meta.corpus_hash = fmt::format("{:016x}", world::corpus_hash(corpus));
  lm::save_checkpoint(dir_ / kCheckpoint, model, meta);
  manifest_.checkpoint = kCheckpoint;
  state_->model = std::move(model);
  record(Stage::kTrainLm, {kCheckpoint, "train_loss.csv"});
}

void Runner::stage_generate() {
  const auto& w = PLAB_STATE_WORLD();
  const auto& model = PLAB_STATE_MODEL();
  world::GenerationStats stats;
  auto samples = world::generate_samples(model, w, &stats);
  for (const auto& s : samples) world::check_sample(s);
  std::size_t correct = 0;
  for (const auto& s : samples) correct += s.z == 0 ? 1 : 0;
  const double acc = samples.empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(samples.size());
  info(fmt::format("  {} samples ({} excluded), accuracy {:.3f}", samples.size(), stats.excluded, acc));
  write(kSamples, world::samples_to_jsonl(w, samples));
  json g = {{"attempted", stats.attempted}, {"excluded", stats.excluded}, {"samples", samples.size()}, {"accuracy", acc}};
  write("generation.json", g.dump(2) + "\n");
  state_->samples = std::move(samples);
  record(Stage::kGenerate, {kSamples, "generation.json"});
}

void Runner::stage_probe() {
  const auto& model = PLAB_STATE_MODEL();
  const auto& samples = PLAB_STATE_SAMPLES();
  const auto grid = probe_grid(model.config().n_layers);
  const auto features = probing::extract_features(model, samples, grid);

  std::vector<std::size_t> ids(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) ids[i] = samples[i].id;
  std::vector<std::string> artifacts;
  for (std::size_t a = 0; a < grid.size(); ++a) {
    probing::write_activations(dir_ / acts_path(grid[a]), grid[a], features[a], ids);
    artifacts.push_back(acts_path(grid[a]));
  }

  const auto train_rows = rows_of(samples, world::Split::kTrain);
  const auto test_rows = rows_of(samples, world::Split::kTest);
  auto shuffled = train_rows;
  Rng rng(Rng::mix(config_.seed, 10));
  rng.shuffle(shuffled);
  const auto n_val = static_cast<std::size_t>(std::ceil(config_.validation_fraction * static_cast<double>(shuffled.size())));
  std::vector<std::size_t> val_rows(shuffled.begin(), shuffled.begin() + static_cast<std::ptrdiff_t>(n_val));
  std::vector<std::size_t> fit_rows(shuffled.begin() + static_cast<std::ptrdiff_t>(n_val), shuffled.end());
  std::sort(val_rows.begin(), val_rows.end());
  std::sort(fit_rows.begin(), fit_rows.end());

  probing::ProbeTrainConfig pcfg = config_.probe;
  pcfg.seed = Rng::mix(config_.seed, 11);
  const auto y_fit = labels(samples, fit_rows), y_val = labels(samples, val_rows);
  const auto y_train = labels(samples, train_rows), y_test = labels(samples, test_rows);

  CsvWriter table("probe_grid", 1, {"layer", "site", "selector", "val_auc", "test_auc"});
  const auto wanted = config_.address(0);
  std::vector<double> val_aucs;
  std::vector<probing::Probe> chosen;
  std::vector<double> chosen_test;
  for (std::size_t a = 0; a < grid.size(); ++a) {
    const auto fit = probing::train_probe(probing::take_rows(features[a], fit_rows), y_fit, pcfg, grid[a]);
    const double val = probing::auc(probing::predict_all(fit, probing::take_rows(features[a], val_rows)), y_val);
    const auto full = probing::train_probe(probing::take_rows(features[a], train_rows), y_train, pcfg, grid[a]);
    const double test = probing::auc(probing::predict_all(full, probing::take_rows(features[a], test_rows)), y_test);
    table.cell(grid[a].layer).cell(probing::site_name(grid[a].site)).cell(probing::selector_name(grid[a].selector));
    table.cell(val).cell(test);
    table.end_row();
    if (grid[a].site == wanted.site && grid[a].selector == wanted.selector) {
      val_aucs.push_back(val);
      chosen.push_back(full);
      chosen_test.push_back(test);
    }
  }
  write("probe_grid.csv", table.str());
  state_->l_star = probing::select_best_layer(val_aucs);
  info(fmt::format("  l* = {} (validation AUC {:.3f}, test AUC {:.3f})", state_->l_star, val_aucs[state_->l_star],
                   chosen_test[state_->l_star]));
  json j;
  j["l_star"] = state_->l_star;
  j["site"] = config_.site;
  j["selector"] = config_.selector;
  j["validation_auc"] = val_aucs;
  j["test_auc"] = chosen_test;
  j["probes"] = json::array();
  for (const auto& p : chosen) j["probes"].push_back(json::parse(probing::probe_to_json(p)));
  write(kProbes, j.dump() + "\n");
  state_->probes = std::move(chosen);
  state_->modes.reset();
  artifacts.push_back("probe_grid.csv");
  artifacts.push_back(kProbes);
  record(Stage::kProbe, artifacts);
}

void Runner::stage_saliency() {
  const auto& model = PLAB_STATE_MODEL();
  const auto& samples = PLAB_STATE_SAMPLES();
  const auto& probes = PLAB_STATE_PROBES();
  const auto test = select(samples, rows_of(samples, world::Split::kTest));
  std::vector<interventions::SaliencyRow> rows(test.size());
  parallel_for(test.size(), [&](std::size_t i) {
    const auto rec = interventions::saliency(model, probes[state_->l_star], test[i]);
    rows[i] = {rec.sample_id, test[i].z, rec.eq_to_ea, rec.eq_to_all};
  });
  std::vector<double> ea, all;
  for (const auto& r : rows) {
    ea.push_back(r.eq_to_ea);
    all.push_back(r.eq_to_all);
  }
  std::vector<interventions::NamedCurve> curves{{"eq_to_ea", interventions::kde(ea, std::nullopt, config_.kde_grid)},
                                                {"eq_to_all", interventions::kde(all, std::nullopt, config_.kde_grid)}};
  write("saliency.csv", interventions::saliency_csv(rows));
  write("kde.csv", interventions::kde_csv(curves));
  record(Stage::kSaliency, {"saliency.csv", "kde.csv"});
}

void Runner::stage_knockout() {
  const auto& model = PLAB_STATE_MODEL();
  const auto& samples = PLAB_STATE_SAMPLES();
  const auto& probes = PLAB_STATE_PROBES();
  const auto cfg = config_.knockout();
  const auto rows = interventions::knockout_experiment(model, probes, samples, cfg);
  const auto random = interventions::knockout_control_random(model, probes, samples, cfg, Rng::mix(config_.seed, 20));
  write("knockout.csv", interventions::knockout_csv(rows));
  write("knockout_random.csv", interventions::knockout_csv(random.rows, "knockout_random"));
  state_->modes.reset();
  record(Stage::kKnockout, {"knockout.csv", "knockout_random.csv"});
}

void Runner::stage_patch() {
  const auto& model = PLAB_STATE_MODEL();
  const auto& samples = PLAB_STATE_SAMPLES();
  const auto& probes = PLAB_STATE_PROBES();
  const auto& modes = PLAB_STATE_MODES();
  const auto& w = PLAB_STATE_WORLD();
  const auto test = select(samples, rows_of(samples, world::Split::kTest));
  std::vector<world::QASample> contexts;
  for (const auto& s : test)
    if (s.z == 0) contexts.push_back(s);
  interventions::PatchConfig pcfg;
  pcfg.threshold = config_.threshold;
  std::vector<interventions::PatchRow> rows;
  for (auto kind : {interventions::PatchKind::kSubject, interventions::PatchKind::kProperty,
                    interventions::PatchKind::kBoth}) {
    auto part = interventions::patch_experiment(model, probes[state_->l_star], contexts, test, modes, kind,
                                                w.filler_tokens, Rng::mix(config_.seed, 30), pcfg);
    rows.insert(rows.end(), part.begin(), part.end());
  }
  write("patch.csv", interventions::patch_csv(rows));
  record(Stage::kPatch, {"patch.csv"});
}

void Runner::stage_answer_only() {
  const auto& model = PLAB_STATE_MODEL();
  const auto& samples = PLAB_STATE_SAMPLES();
  const auto& probes = PLAB_STATE_PROBES();
  const auto& modes = PLAB_STATE_MODES();
  const auto test = select(samples, rows_of(samples, world::Split::kTest));
  interventions::AnswerOnlyConfig acfg;
  acfg.keep_positions = config_.answer_only_keep_positions;
  const auto rows = interventions::answer_only_experiment(model, probes[state_->l_star], test, modes, acfg);
  write("answer_only.csv", interventions::answer_only_csv(rows));
  record(Stage::kAnswerOnly, {"answer_only.csv"});
}

void Runner::stage_pathways() {
  const auto& samples = PLAB_STATE_SAMPLES();
  const auto& probes = PLAB_STATE_PROBES();
  const auto& modes = PLAB_STATE_MODES();
  const auto train_rows = rows_of(samples, world::Split::kTrain);
  const auto test_rows = rows_of(samples, world::Split::kTest);
  const auto test = select(samples, test_rows);
  write("pathway_stats.csv", pathways::pathway_stats_csv(pathways::boundary_records(test, modes)));

  const auto addr = probes[state_->l_star].address;
  const auto acts = probing::read_activations(dir_ / acts_path(addr));
  std::vector<Mode> m_train, m_test;
  for (auto r : train_rows) m_train.push_back(modes[samples[r].id]);
  for (auto r : test_rows) m_test.push_back(modes[samples[r].id]);
  pathways::SelfAwarenessConfig scfg;
  scfg.probe = config_.probe;
  scfg.null_permutations = config_.null_permutations;
  scfg.seed = Rng::mix(config_.seed, 40);
  const auto sa = pathways::train_self_awareness_probe(probing::take_rows(acts.features, train_rows), m_train,
                                                       probing::take_rows(acts.features, test_rows), m_test, addr, scfg);
  info(fmt::format("  self-awareness AUC {:.3f} (null sd {:.3f})", sa.auc, sa.null_sd));
  write("self_awareness.csv", pathways::self_awareness_csv(sa));
  write(kGate, probing::probe_to_json(sa.probe) + "\n");
  record(Stage::kPathways, {"pathway_stats.csv", "self_awareness.csv", kGate});
}

void Runner::stage_detect() {
  const auto& model = PLAB_STATE_MODEL();
  const auto& samples = PLAB_STATE_SAMPLES();
  const auto& probes = PLAB_STATE_PROBES();
  const auto& modes = PLAB_STATE_MODES();
  const auto& baseline = probes[state_->l_star];
  const auto gate = probing::probe_from_json(read_file(dir_ / kGate));
  const auto acts = probing::read_activations(dir_ / acts_path(baseline.address));
  const auto train_rows = rows_of(samples, world::Split::kTrain);
  const auto test_rows = rows_of(samples, world::Split::kTest);
  const auto x_train = probing::take_rows(acts.features, train_rows);
  const auto x_test = probing::take_rows(acts.features, test_rows);
  const auto z_train = labels(samples, train_rows), z_test = labels(samples, test_rows);
  std::vector<Mode> m_train;
  for (auto r : train_rows) m_train.push_back(modes[samples[r].id]);
  std::vector<std::size_t> test_ids;
  for (auto r : test_rows) test_ids.push_back(samples[r].id);
  const auto test = select(samples, test_rows);
  const auto train = select(samples, train_rows);

  std::vector<detection::AucRow> rows;
  auto add = [&](const std::string& method, const std::vector<double>& scores) {
    rows.push_back({method, config_.seed, probing::auc(scores, z_test)});
  };
  for (const auto& b : detection::confidence_baselines(test)) add(b.method, b.scores);
  add("probe_baseline", probing::predict_all(baseline, x_test));

  probing::ProbeTrainConfig pcfg = config_.probe;
  const auto mop = detection::train_mop(x_train, z_train, m_train, gate, pcfg);
  add("mop", detection::mop_scores(mop, x_test));
  add("mop_random_gate", detection::mop_random_gate_scores(mop, x_test, test_ids, Rng::mix(config_.seed, 50)));
  const auto vanilla = detection::train_mop_vanilla_experts(x_train, z_train, m_train, gate, pcfg, Rng::mix(config_.seed, 51));
  add("mop_vanilla_experts", detection::mop_scores(vanilla, x_test));

  const auto pr = detection::pr_train(model, baseline, gate, train, config_.pr());
  add("pr", detection::pr_scores(model, pr.model, test));
  for (const auto& r : rows) info(fmt::format("  {:<20} AUC {:.4f}", r.method, r.auc));

  json pj = {{"alpha_q", pr.model.alpha_q()}, {"alpha_a", pr.model.alpha_a()}, {"epoch_loss", pr.epoch_loss},
             {"aborted", pr.aborted}, {"probe", json::parse(probing::probe_to_json(pr.model.probe))}};
  write("pr.json", pj.dump() + "\n");
  write("detection_auc.csv", detection::detection_auc_csv(rows));
  record(Stage::kDetect, {"detection_auc.csv", "pr.json"});
}

void Runner::stage_report() {
  const auto& samples = PLAB_STATE_SAMPLES();
  PLAB_STATE_PROBES();
  const std::size_t resamples = config_.bootstrap_resamples;
  const std::uint64_t seed = Rng::mix(config_.seed, 60);
  std::map<std::string, double> m;

  const json gen = json::parse(read_file(dir_ / "generation.json"));
  m["samples"] = gen.at("samples");
  m["excluded"] = gen.at("excluded");
  m["accuracy"] = gen.at("accuracy");
  const json pj = json::parse(read_file(dir_ / kProbes));
  m["l_star"] = static_cast<double>(state_->l_star);
  m["probe_test_auc"] = pj.at("test_auc").at(state_->l_star);

  std::set<std::size_t> test_ids;
  for (const auto& s : samples)
    if (s.split == world::Split::kTest) test_ids.insert(s.id);
  auto on_test = [&](std::vector<interventions::KnockoutRow> rows) {
    std::erase_if(rows, [&](const auto& r) { return !test_ids.count(r.sample_id); });
    return rows;
  };
  const auto ko = on_test(interventions::parse_knockout_csv(read_file(dir_ / "knockout.csv")));
  const auto ko_rand =
      on_test(interventions::parse_knockout_csv(read_file(dir_ / "knockout_random.csv"), "knockout_random"));
  const std::size_t n_layers = pj.at("probes").size();
  const auto sum = interventions::summarize_knockout(ko, n_layers, resamples, seed);
  const auto sum_rand = interventions::summarize_knockout(ko_rand, n_layers, resamples, seed);
  for (std::size_t l = 0; l < n_layers; ++l) {
    const std::string p = fmt::format("knockout.L{}.", l);
    m[p + "n_q"] = static_cast<double>(sum[l].n_q);
    m[p + "n_a"] = static_cast<double>(sum[l].n_a);
    m[p + "delta_p_q"] = sum[l].delta_p_q.estimate;
    m[p + "delta_p_a"] = sum[l].delta_p_a.estimate;
    m[p + "median_abs_delta"] = sum[l].median_abs_delta;
    m[p + "median_abs_delta_random"] = sum_rand[l].median_abs_delta;
  }

  const auto patch = interventions::parse_patch_csv(read_file(dir_ / "patch.csv"));
  for (const auto& f : interventions::summarize_flips(patch, resamples, seed)) {
    const std::string p = "patch." + interventions::mode_name(f.mode) + ".";
    m[p + "n"] = static_cast<double>(f.n);
    m[p + "flip_exact"] = f.exact.estimate;
    m[p + "flip_random"] = f.random.estimate;
  }

  const auto ao = interventions::parse_answer_only_csv(read_file(dir_ / "answer_only.csv"));
  for (const auto& s : interventions::summarize_answer_only(ao, resamples, seed)) {
    const std::string p = "answer_only." + interventions::mode_name(s.mode) + ".";
    m[p + "n"] = static_cast<double>(s.n);
    m[p + "abs_neg_delta_p"] = s.abs_neg_delta_p.estimate;
  }

  const auto records = pathways::parse_pathway_stats_csv(read_file(dir_ / "pathway_stats.csv"));
  std::size_t max_rank = 1;
  for (const auto& r : records) max_rank = std::max(max_rank, r.popularity_rank);
  const auto report = pathways::boundary_stats(records, pathways::popularity_bins(max_rank));
  for (const auto* g : {&report.q_anchored, &report.a_anchored}) {
    const std::string p = "boundary." + interventions::mode_name(g->mode) + ".";
    m[p + "n"] = static_cast<double>(g->n);
    if (g->accuracy) m[p + "accuracy"] = *g->accuracy;
    if (g->mean_popularity_rank) m[p + "mean_popularity_rank"] = *g->mean_popularity_rank;
  }

  const auto sa = pathways::parse_self_awareness_csv(read_file(dir_ / "self_awareness.csv"));
  m["self_awareness.auc"] = sa.auc;
  m["self_awareness.null_mean"] = sa.null_mean;
  m["self_awareness.null_sd"] = sa.null_sd;

  for (const auto& r : detection::parse_detection_auc_csv(read_file(dir_ / "detection_auc.csv"))) {
    m["detection." + r.method] = r.auc;
  }

  manifest_.metrics = m;
  write("report.json", json(m).dump(2) + "\n");
  record(Stage::kReport, {"report.json"});
}

}  // namespace plab::runs
