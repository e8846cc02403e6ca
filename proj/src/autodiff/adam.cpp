#include "plab/autodiff/adam.hpp"

#include <cmath>

#include "plab/util/error.hpp"

namespace plab::ad {

Adam::Adam(AdamConfig config, std::span<Tensor* const> params) : config_(config), params_(params.begin(), params.end()) {
  for (Tensor* p : params_) {
    m_.emplace_back(p->shape(), 0.0);
    v_.emplace_back(p->shape(), 0.0);
  }
}

void Adam::step(std::span<const Tensor> grads) {
  PLAB_REQUIRE(grads.size() == params_.size(), "adam: gradient count mismatch");
  ++t_;
  const double b1 = config_.beta1, b2 = config_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  for (std::size_t k = 0; k < params_.size(); ++k) {
    auto p = params_[k]->data();
    auto g = grads[k].data();
    auto m = m_[k].data();
    auto v = v_[k].data();
    PLAB_REQUIRE(g.size() == p.size(), "adam: gradient shape mismatch");
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = b1 * m[i] + (1.0 - b1) * g[i];
      v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
      p[i] -= config_.lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + config_.eps);
    }
  }
}

}  // namespace plab::ad
