#include "plab/interventions/saliency.hpp"

#include <cmath>

#include "plab/autodiff/ops.hpp"
#include "plab/lm/forward.hpp"
#include "plab/util/error.hpp"

namespace plab::interventions {

SaliencyRecord saliency(const lm::Model& model, const probing::Probe& probe, const world::QASample& sample) {
  const std::size_t k = probe.address.layer;
  PLAB_REQUIRE(k < model.config().n_layers, "saliency: probe layer out of range");
  world::check_sample(sample);

  lm::ForwardOptions opts;
  opts.capture_grad = true;
  opts.last_layer = k;
  const auto trace = lm::forward(model, sample.tokens, lm::InterventionSpec::none(), opts);
  ad::Tape& tape = *trace.tape;

  const std::size_t pos = probing::selector_position(probe.address.selector, trace.length(), sample.exact_answer);
  const ad::Var site = probe.address.site == probing::Site::kMlpOut ? trace.graph.mlp_out[k] : trace.graph.attn_out[k];
  const ad::Var h = ad::row(site, pos);
  const ad::Var w = tape.constant(ad::Tensor::vector(probe.w));
  const ad::Var logit = ad::add_scalar(ad::dot(w, h), tape.constant(ad::Tensor::scalar(probe.b)));
  const ad::Var loss = ad::bce_with_logits(logit, static_cast<double>(sample.z));
  const auto grads = lm::grad_wrt_attention(trace, loss);

  const std::size_t T = trace.length();
  const std::size_t H = model.config().n_heads;
  const auto eq = sample.exact_question_positions();
  SaliencyRecord rec;
  rec.sample_id = sample.id;
  for (std::size_t l = 0; l <= k; ++l) {
    ad::Tensor s({T, T});
    for (std::size_t hd = 0; hd < H; ++hd) {
      const auto& a = trace.attn[l][hd];
      for (std::size_t i = 0; i < T; ++i)
        for (std::size_t j = 0; j <= i; ++j) s.at(i, j) += std::abs(a.at(i, j) * grads[l][(hd * T + i) * T + j]);
    }
    for (auto& v : s.data()) v /= static_cast<double>(H);

    double to_ea = 0.0;
    double to_all = 0.0;
    for (std::size_t j : eq) {
      for (std::size_t i = 0; i < T; ++i) to_all += s.at(i, j);
      for (std::size_t i = sample.exact_answer.start; i <= sample.exact_answer.end; ++i) to_ea += s.at(i, j);
    }
    rec.eq_to_ea += to_ea;
    rec.eq_to_all += to_all;
    rec.layers.push_back(std::move(s));
  }
  rec.eq_to_ea /= static_cast<double>(k + 1);
  rec.eq_to_all /= static_cast<double>(k + 1);
  return rec;
}

}  // namespace plab::interventions
