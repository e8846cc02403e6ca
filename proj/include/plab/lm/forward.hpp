#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "plab/autodiff/tape.hpp"
#include "plab/lm/intervention.hpp"
#include "plab/lm/model.hpp"

namespace plab::lm {

// Adds `delta` to one post-softmax attention weight. Used by finite-difference
// oracles; never set in production paths.
struct AttentionPerturbation {
  std::size_t layer = 0;
  std::size_t head = 0;
  std::size_t query = 0;
  std::size_t key = 0;
  double delta = 0.0;
};

struct ForwardOptions {
  // Record backward rules so gradients can be taken through the trace.
  bool capture_grad = false;
  // Model parameters become gradient leaves (LM training).
  bool params_require_grad = false;
  // Stop after this layer; logits are then not computed.
  std::optional<std::size_t> last_layer;
  std::optional<AttentionPerturbation> perturb;
  // Token t sits at absolute position position_offset + t.
  std::size_t position_offset = 0;
};

// Tape variables of one forward pass.
struct ForwardGraph {
  std::vector<std::vector<ad::Var>> attn;  // [layer][head], post-softmax weights actually used
  std::vector<ad::Var> attn_out;           // [layer], T x d attention sublayer output
  std::vector<ad::Var> mlp_out;            // [layer], T x d MLP sublayer output
  ad::Var logits;                          // T x V, invalid when stopped early
  std::vector<ad::Var> params;             // Model::parameters() order
};

// Builds the forward graph on a caller-owned tape. When `reweight_scales` is
// non-empty and the intervention is a reweight, the per-slot scale s is read
// from those tape scalars instead of being computed from `intervention`, so that
// gradients can flow into adapter parameters.
ForwardGraph build_forward(ad::Tape& tape, const Model& model, std::span<const std::int32_t> tokens,
                           const InterventionSpec& intervention, const ForwardOptions& options,
                           std::span<const ad::Var> reweight_scales = {});

struct ForwardTrace {
  std::vector<std::int32_t> tokens;
  std::vector<std::vector<ad::Tensor>> attn;  // [layer][head] T x T
  std::vector<ad::Tensor> attn_out;           // [layer] T x d
  std::vector<ad::Tensor> mlp_out;            // [layer] T x d
  ad::Tensor logits;                          // T x V (empty when stopped early)
  InterventionSpec intervention;

  // Present only when recorded with capture_grad.
  std::shared_ptr<ad::Tape> tape;
  ForwardGraph graph;

  std::size_t length() const noexcept { return tokens.size(); }
  std::size_t n_layers() const noexcept { return attn.size(); }
  bool has_tape() const noexcept { return tape != nullptr && tape->recording(); }
  // Vector of `site` output at (layer, position).
  std::span<const double> attn_out_at(std::size_t layer, std::size_t pos) const { return attn_out.at(layer).row(pos); }
  std::span<const double> mlp_out_at(std::size_t layer, std::size_t pos) const { return mlp_out.at(layer).row(pos); }
};

// Errors: empty sequence, position_offset + length > max_seq_len, out-of-vocab token,
// intervention out of range or of conflicting kind.
ForwardTrace forward(const Model& model, std::span<const std::int32_t> tokens,
                     const InterventionSpec& intervention = InterventionSpec::none(),
                     const ForwardOptions& options = {});

// dLoss/dA for every layer, as (heads, T, T) tensors. `loss` must be a scalar
// recorded on trace.tape. Throws ContractError("no tape") for traces recorded
// without gradient capture.
std::vector<ad::Tensor> grad_wrt_attention(const ForwardTrace& trace, ad::Var loss);

}  // namespace plab::lm
