#pragma once

#include <span>
#include <vector>

#include "plab/autodiff/tensor.hpp"

namespace plab::ad {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Adaptive-moment optimizer over a fixed list of parameter tensors.
class Adam {
 public:
  Adam(AdamConfig config, std::span<Tensor* const> params);

  // grads[k] pairs with the k-th parameter given at construction.
  void step(std::span<const Tensor> grads);
  std::size_t steps_taken() const noexcept { return t_; }
  const AdamConfig& config() const noexcept { return config_; }

 private:
  AdamConfig config_;
  std::vector<Tensor*> params_;
  std::vector<Tensor> m_, v_;
  std::size_t t_ = 0;
};

}  // namespace plab::ad
