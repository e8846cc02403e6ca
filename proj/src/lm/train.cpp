#include "plab/lm/train.hpp"

#include <cmath>
#include <sstream>

#include "plab/autodiff/adam.hpp"
#include "plab/autodiff/ops.hpp"
#include "plab/lm/forward.hpp"
#include "plab/util/error.hpp"
#include "plab/util/rng.hpp"

namespace plab::lm {

TrainResult train_lm(Model& model, const std::vector<Sequence>& corpus, const TrainConfig& config,
                     const std::function<void(std::size_t, double)>& on_step,
                     std::span<const std::size_t> position_offsets) {
  PLAB_REQUIRE(!corpus.empty(), "train_lm: corpus is empty");
  PLAB_REQUIRE(position_offsets.empty() || position_offsets.size() == corpus.size(),
               "train_lm: one position offset per sequence");
  PLAB_REQUIRE(config.batch_size >= 1, "train_lm: batch_size must be >= 1");
  for (std::size_t k = 0; k < corpus.size(); ++k) {
    const std::size_t off = position_offsets.empty() ? 0 : position_offsets[k];
    PLAB_REQUIRE(corpus[k].size() >= 2, "train_lm: every sequence needs at least two tokens");
    PLAB_REQUIRE(off + corpus[k].size() - 1 <= model.config().max_seq_len,
                 "train_lm: sequence longer than max_seq_len + 1");
  }

  auto named = model.parameters();
  std::vector<ad::Tensor*> params;
  for (auto& p : named) params.push_back(p.tensor);
  ad::Adam adam({config.lr, config.beta1, config.beta2, 1e-8}, params);
  Rng rng(config.seed);

  TrainResult result;
  result.loss_curve.reserve(config.steps);
  std::vector<ad::Tensor> grads;
  for (auto* p : params) grads.emplace_back(p->shape(), 0.0);

  ForwardOptions opts;
  opts.params_require_grad = true;
  const double inv_b = 1.0 / static_cast<double>(config.batch_size);

  for (std::size_t step = 0; step < config.steps; ++step) {
    for (auto& g : grads) g.fill(0.0);
    double batch_loss = 0.0;
    for (std::size_t b = 0; b < config.batch_size; ++b) {
      const std::size_t pick = rng.below(corpus.size());
      const Sequence& seq = corpus[pick];
      opts.position_offset = position_offsets.empty() ? 0 : position_offsets[pick];
      std::span<const std::int32_t> inputs(seq.data(), seq.size() - 1);
      std::span<const std::int32_t> targets(seq.data() + 1, seq.size() - 1);
      ad::Tape tape(true);
      ForwardGraph g = build_forward(tape, model, inputs, InterventionSpec::none(), opts);
      ad::Var loss = ad::cross_entropy(g.logits, targets);
      batch_loss += loss.value().item();
      const ad::GradientMap gm = tape.backward(loss);
      for (std::size_t k = 0; k < params.size(); ++k) {
        if (!gm.reached(g.params[k])) continue;
        const ad::Tensor gk = gm[g.params[k]];
        auto dst = grads[k].data();
        for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += gk[i] * inv_b;
      }
    }
    batch_loss *= inv_b;
    if (!std::isfinite(batch_loss)) {
      std::ostringstream msg;
      msg << "train_lm: loss became non-finite at step " << step;
      if (!result.loss_curve.empty()) msg << " (last finite loss " << result.loss_curve.back() << ")";
      throw PipelineError(msg.str());
    }
    if (config.grad_clip > 0.0) {
      double sq = 0.0;
      for (const auto& g : grads)
        for (double v : g.data()) sq += v * v;
      const double norm = std::sqrt(sq);
      if (norm > config.grad_clip) {
        const double c = config.grad_clip / norm;
        for (auto& g : grads)
          for (auto& v : g.data()) v *= c;
      }
    }
    adam.step(grads);
    result.loss_curve.push_back(batch_loss);
    if (on_step) on_step(step, batch_loss);
  }
  return result;
}

}  // namespace plab::lm
