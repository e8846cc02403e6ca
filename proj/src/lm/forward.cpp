#include "plab/lm/forward.hpp"

#include <algorithm>
#include <cmath>

#include "plab/autodiff/ops.hpp"
#include "plab/util/error.hpp"

namespace plab::lm {

namespace {

void check_tokens(const ModelConfig& cfg, std::span<const std::int32_t> tokens) {
  PLAB_REQUIRE(!tokens.empty(), "forward: empty token sequence");
  if (tokens.size() > cfg.max_seq_len) {
    throw ContractError("forward: sequence length " + std::to_string(tokens.size()) + " exceeds max_seq_len " +
                        std::to_string(cfg.max_seq_len));
  }
  for (auto t : tokens) {
    if (t < 0 || static_cast<std::size_t>(t) >= cfg.vocab_size) {
      throw ContractError("forward: token id " + std::to_string(t) + " is out of vocabulary");
    }
  }
}

}  // namespace

ForwardGraph build_forward(ad::Tape& tape, const Model& model, std::span<const std::int32_t> tokens,
                           const InterventionSpec& intervention, const ForwardOptions& options,
                           std::span<const ad::Var> reweight_scales) {
  const ModelConfig& cfg = model.config();
  check_tokens(cfg, tokens);
  const std::size_t T = tokens.size();
  if (options.position_offset + T > cfg.max_seq_len) {
    throw ContractError("forward: position offset " + std::to_string(options.position_offset) + " + length " +
                        std::to_string(T) + " exceeds max_seq_len");
  }
  intervention.validate(cfg, T);

  const std::size_t n_layers = options.last_layer ? std::min(*options.last_layer + 1, cfg.n_layers) : cfg.n_layers;
  const std::size_t H = cfg.n_heads, hd = cfg.head_dim(), d = cfg.d_model;
  const bool train = options.params_require_grad;

  ForwardGraph g;
  for (const auto& p : model.parameters()) g.params.push_back(tape.borrow(*p.tensor, train));
  std::size_t pi = 0;
  auto next_param = [&] { return g.params[pi++]; };

  // Per-layer edge masks (row-major T x T).
  std::vector<std::vector<std::uint8_t>> post_mask(cfg.n_layers), pre_mask(cfg.n_layers);
  const auto kind = intervention.kind();
  if (kind == InterventionSpec::Kind::kKnockout) {
    const auto& ko = intervention.knockout_params();
    auto& masks = ko.mode == KnockoutMode::kPostSoftmax ? post_mask : pre_mask;
    for (const auto& e : ko.edges) {
      auto& m = masks[e.layer];
      if (m.empty()) m.assign(T * T, 0);
      m[e.query * T + e.key] = 1;
    }
  }
  std::vector<std::uint8_t> reweight_edges;
  const Reweight* rw = nullptr;
  if (kind == InterventionSpec::Kind::kReweight) {
    rw = &intervention.reweight_params();
    reweight_edges.assign(T * T, 0);
    for (auto i : rw->answer_positions) {
      for (auto j : rw->question_positions) {
        if (j <= i) reweight_edges[i * T + j] = 1;
      }
    }
    if (!reweight_scales.empty()) {
      const std::size_t per_layer = rw->granularity == ReweightGranularity::kHead ? H : 1;
      PLAB_REQUIRE(reweight_scales.size() == (rw->last_layer + 1) * per_layer, "build_forward: reweight scale count mismatch");
    }
  }

  std::vector<std::int32_t> positions(T);
  for (std::size_t t = 0; t < T; ++t) positions[t] = static_cast<std::int32_t>(options.position_offset + t);
  ad::Var tok_emb = next_param();
  ad::Var pos_emb = next_param();
  ad::Var x = ad::add(ad::embedding(tok_emb, tokens), ad::embedding(pos_emb, positions));
  const double inv_sqrt_hd = 1.0 / std::sqrt(static_cast<double>(hd));

  g.attn.resize(n_layers);
  for (std::size_t l = 0; l < cfg.n_layers; ++l) {
    ad::Var ln1_g = next_param(), ln1_b = next_param();
    ad::Var w_qkv = next_param(), b_qkv = next_param();
    ad::Var w_o = next_param(), b_o = next_param();
    ad::Var ln2_g = next_param(), ln2_b = next_param();
    ad::Var w_fc = next_param(), b_fc = next_param();
    ad::Var w_proj = next_param(), b_proj = next_param();
    if (l >= n_layers) continue;

    ad::Var h = ad::layer_norm(x, ln1_g, ln1_b);
    ad::Var qkv = ad::add_bias(ad::matmul(h, w_qkv), b_qkv);
    std::vector<ad::Var> heads;
    heads.reserve(H);
    for (std::size_t hh = 0; hh < H; ++hh) {
      ad::Var q = ad::slice_cols(qkv, hh * hd, hd);
      ad::Var k = ad::slice_cols(qkv, d + hh * hd, hd);
      ad::Var v = ad::slice_cols(qkv, 2 * d + hh * hd, hd);
      ad::Var scores = ad::scale(ad::matmul_nt(q, k), inv_sqrt_hd);
      ad::Var a = ad::causal_softmax(scores, pre_mask[l]);
      if (!post_mask[l].empty()) a = ad::zero_entries(a, post_mask[l]);
      if (rw != nullptr && l <= rw->last_layer) {
        ad::Var s = reweight_scales.empty() ? tape.constant(ad::Tensor::scalar(rw->scale(l, hh, H)))
                                            : reweight_scales[rw->slot(l, hh, H)];
        a = ad::scale_entries(a, s, reweight_edges);
      }
      if (options.perturb && options.perturb->layer == l && options.perturb->head == hh) {
        const auto& p = *options.perturb;
        PLAB_REQUIRE(p.query < T && p.key < T, "perturbation out of range");
        a = ad::perturb_entry(a, p.query * T + p.key, p.delta);
      }
      if (options.capture_grad) a = tape.watch(a);
      g.attn[l].push_back(a);
      heads.push_back(ad::matmul(a, v));
    }
    ad::Var att = ad::add_bias(ad::matmul(ad::concat_cols(heads), w_o), b_o);
    g.attn_out.push_back(att);
    x = ad::add(x, att);
    ad::Var h2 = ad::layer_norm(x, ln2_g, ln2_b);
    ad::Var hidden = ad::gelu(ad::add_bias(ad::matmul(h2, w_fc), b_fc));
    ad::Var mlp = ad::add_bias(ad::matmul(hidden, w_proj), b_proj);
    g.mlp_out.push_back(mlp);
    x = ad::add(x, mlp);
  }
  ad::Var lnf_g = next_param(), lnf_b = next_param();
  ad::Var w_unembed = next_param();
  if (n_layers == cfg.n_layers) {
    g.logits = ad::matmul(ad::layer_norm(x, lnf_g, lnf_b), w_unembed);
  }
  return g;
}

ForwardTrace forward(const Model& model, std::span<const std::int32_t> tokens, const InterventionSpec& intervention,
                     const ForwardOptions& options) {
  auto tape = std::make_shared<ad::Tape>(options.capture_grad);
  ForwardGraph g = build_forward(*tape, model, tokens, intervention, options);

  ForwardTrace trace;
  trace.tokens.assign(tokens.begin(), tokens.end());
  trace.intervention = intervention;
  trace.attn.resize(g.attn.size());
  for (std::size_t l = 0; l < g.attn.size(); ++l) {
    for (const auto& a : g.attn[l]) trace.attn[l].push_back(a.value());
  }
  for (const auto& v : g.attn_out) trace.attn_out.push_back(v.value());
  for (const auto& v : g.mlp_out) trace.mlp_out.push_back(v.value());
  if (g.logits.valid()) trace.logits = g.logits.value();
  if (options.capture_grad) {
    trace.tape = std::move(tape);
    trace.graph = std::move(g);
  }
  return trace;
}

std::vector<ad::Tensor> grad_wrt_attention(const ForwardTrace& trace, ad::Var loss) {
  if (!trace.has_tape()) throw ContractError("no tape: trace was recorded without gradient capture");
  if (loss.tape != trace.tape.get()) throw ContractError("grad_wrt_attention: loss is not on the trace's tape");
  const ad::GradientMap grads = trace.tape->backward(loss);
  const std::size_t T = trace.length();
  std::vector<ad::Tensor> out;
  for (const auto& layer : trace.graph.attn) {
    ad::Tensor t({layer.size(), T, T}, 0.0);
    for (std::size_t h = 0; h < layer.size(); ++h) {
      const ad::Tensor gh = grads[layer[h]];
      std::copy(gh.data().begin(), gh.data().end(), t.data().begin() + static_cast<std::ptrdiff_t>(h * T * T));
    }
    out.push_back(std::move(t));
  }
  return out;
}

}  // namespace plab::lm
