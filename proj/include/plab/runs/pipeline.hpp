#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "plab/runs/config.hpp"

namespace plab::runs {

inline constexpr const char* kToolVersion = "0.1.0";

enum class Stage { kWorld, kTrainLm, kGenerate, kProbe, kSaliency, kKnockout, kPatch, kAnswerOnly, kPathways, kDetect, kReport };

std::string stage_name(Stage s);
// Errors: unknown name.
Stage parse_stage(const std::string& name);
// Execution order of `all`.
std::vector<Stage> all_stages();
std::vector<Stage> stage_dependencies(Stage s);

struct Artifact {
  std::string path;  // relative to the run directory
  std::string hash;

  friend bool operator==(const Artifact&, const Artifact&) = default;
};

struct StageRecord {
  std::vector<Artifact> artifacts;

  friend bool operator==(const StageRecord&, const StageRecord&) = default;
};

// Written after every stage; lists only fully written artifacts.
struct RunManifest {
  std::string tool_version = kToolVersion;
  std::string config_hash;
  std::uint64_t seed = 0;
  std::string corpus_hash;
  std::string checkpoint;
  std::map<std::string, StageRecord> stages;  // completed stages only
  std::map<std::string, double> metrics;

  friend bool operator==(const RunManifest&, const RunManifest&) = default;
};

std::string manifest_to_json(const RunManifest& m);
RunManifest manifest_from_json(const std::string& text);

struct RunOptions {
  std::filesystem::path out_dir = "runs";
  // Skip completed stages whose artifacts still match their recorded hashes.
  bool resume = false;
};

// Metric CSVs compared for end-to-end determinism.
std::vector<std::string> metric_tables();

class Runner {
 public:
  // Errors: PipelineError when the run directory holds a manifest written
  // under a different config hash.
  Runner(RunConfig config, RunOptions options);
  ~Runner();
  Runner(const Runner&) = delete;
  Runner& operator=(const Runner&) = delete;

  const std::filesystem::path& run_dir() const noexcept { return dir_; }
  const RunManifest& manifest() const noexcept { return manifest_; }
  const RunConfig& config() const noexcept { return config_; }

  // Errors: PipelineError for unmet dependencies or upstream artifacts that
  // are missing or no longer match the manifest.
  void run(Stage stage);
  // Every stage in order; with resume, completed and intact stages are skipped.
  void run_all();

  // True when the stage is recorded and every artifact matches its hash.
  bool stage_intact(Stage stage) const;

 private:
  struct State;

  void require_dependencies(Stage stage) const;
  void execute(Stage stage);
  void record(Stage stage, const std::vector<std::string>& paths);
  void save_manifest() const;
  void write(const std::string& rel, const std::string& contents) const;

  void stage_world();
  void stage_train_lm();
  void stage_generate();
  void stage_probe();
  void stage_saliency();
  void stage_knockout();
  void stage_patch();
  void stage_answer_only();
  void stage_pathways();
  void stage_detect();
  void stage_report();

  RunConfig config_;
  RunOptions options_;
  std::filesystem::path dir_;
  RunManifest manifest_;
  std::unique_ptr<State> state_;
};

}  // namespace plab::runs
