#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "plab/detection/detection.hpp"
#include "plab/interventions/answer_only.hpp"
#include "plab/interventions/knockout.hpp"
#include "plab/lm/model.hpp"
#include "plab/lm/train.hpp"
#include "plab/pathways/pathways.hpp"
#include "plab/probing/probe.hpp"
#include "plab/world/world.hpp"

namespace plab::runs {

struct RunConfig {
  std::uint64_t seed = 7;
  std::string run_id;  // empty: "seed-<seed>"

  // Component seeds are derived from `seed`; their own seed fields are ignored.
  world::WorldConfig world;
  lm::ModelConfig model;  // vocab_size is filled in from the world
  lm::TrainConfig train{.steps = 6000};

  probing::ProbeTrainConfig probe;
  double validation_fraction = 0.25;  // of the train split, for choosing l*
  std::string site = "mlp_out";
  std::string selector = "last_exact_answer";

  double threshold = 0.5;
  std::string knockout_mode = "post_softmax";  // post_softmax | pre_softmax
  std::string knockout_rows = "after_last_exact_question";  // | answer_region
  bool answer_only_keep_positions = true;

  std::size_t bootstrap_resamples = 1000;
  std::size_t kde_grid = 256;
  std::size_t null_permutations = 20;

  std::size_t pr_epochs = 10;
  double pr_lr = 1e-2;
  std::size_t pr_batch_size = 512;
  double pr_init_alpha = 0.1;
  std::string pr_granularity = "head";  // head | layer

  std::string effective_run_id() const;
  probing::ProbeAddress address(std::size_t layer) const;
  interventions::KnockoutConfig knockout() const;
  detection::PRTrainConfig pr() const;
  lm::ModelConfig model_config(std::size_t vocab_size) const;
  world::WorldConfig world_config() const;
  lm::TrainConfig train_config() const;

  // Throws ContractError for out-of-range values and unknown names.
  void validate() const;

  friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

// Canonical JSON with sorted keys; the config hash is taken over this text.
std::string config_to_json(const RunConfig& config);
RunConfig config_from_json(const std::string& text);

// "section.key = value" lines; '#' starts a comment. Unknown keys are errors.
RunConfig config_from_key_values(const std::string& text);
std::string config_to_key_values(const RunConfig& config);

// JSON when the first non-space character is '{', key=value otherwise.
RunConfig load_config(const std::filesystem::path& path);

std::string config_hash(const RunConfig& config);

}  // namespace plab::runs
