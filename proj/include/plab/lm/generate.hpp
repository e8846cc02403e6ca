#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "plab/lm/model.hpp"

namespace plab::lm {

struct GenerationRecord {
  std::vector<std::int32_t> prompt;
  std::vector<std::int32_t> generated;  // includes the stop token when emitted
  std::vector<double> chosen_logits;    // L_j[t_j] per generated token
  std::vector<double> chosen_probs;     // softmax(L_j)[t_j] per generated token
};

// Greedy decoding; argmax ties resolve to the lowest token id. Stops after
// emitting stop_token, after max_new tokens, or when the context is full.
GenerationRecord generate(const Model& model, std::span<const std::int32_t> prompt, std::size_t max_new,
                          std::int32_t stop_token);

}  // namespace plab::lm
