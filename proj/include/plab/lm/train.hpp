#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "plab/lm/model.hpp"

namespace plab::lm {

struct TrainConfig {
  std::size_t steps = 200;
  double lr = 3e-3;
  std::size_t batch_size = 16;
  double beta1 = 0.9;
  double beta2 = 0.999;
  // Global gradient-norm clip; <= 0 disables.
  double grad_clip = 1.0;
  std::uint64_t seed = 0;

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

struct TrainResult {
  std::vector<double> loss_curve;  // mean batch loss per step
};

using Sequence = std::vector<std::int32_t>;

// Next-token cross-entropy over every position of each sequence, optimized
// with Adam. Batches are drawn uniformly with replacement from `corpus`.
// Sequence k starts at absolute position position_offsets[k] (0 when the
// span is empty). Throws PipelineError if the loss becomes non-finite.
TrainResult train_lm(Model& model, const std::vector<Sequence>& corpus, const TrainConfig& config,
                     const std::function<void(std::size_t, double)>& on_step = {},
                     std::span<const std::size_t> position_offsets = {});

}  // namespace plab::lm
