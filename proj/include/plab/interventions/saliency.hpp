#pragma once

#include <vector>

#include "plab/autodiff/tensor.hpp"
#include "plab/lm/model.hpp"
#include "plab/probing/probe.hpp"
#include "plab/world/world.hpp"

namespace plab::interventions {

// S^l(i, j) = |A^l(i, j) * dL/dA^l(i, j)|, averaged over heads, for layers
// 0..probe layer. L is the probe's BCE against the sample label.
struct SaliencyRecord {
  std::size_t sample_id = 0;
  std::vector<ad::Tensor> layers;  // T x T
  // Per-layer sums over (i in E_A, j in E_Q) and (any i, j in E_Q), averaged
  // over the layers present.
  double eq_to_ea = 0.0;
  double eq_to_all = 0.0;
};

SaliencyRecord saliency(const lm::Model& model, const probing::Probe& probe, const world::QASample& sample);

}  // namespace plab::interventions
