#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "plab/autodiff/tensor.hpp"

namespace plab::lm {

struct ModelConfig {
  std::size_t n_layers = 4;
  std::size_t n_heads = 4;
  std::size_t d_model = 64;
  std::size_t d_ff = 256;
  std::size_t vocab_size = 0;
  std::size_t max_seq_len = 24;
  std::uint64_t seed = 0;

  std::size_t head_dim() const { return d_model / n_heads; }
  // Throws ContractError when sizes are zero or d_model % n_heads != 0.
  void validate() const;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

struct LayerParams {
  ad::Tensor ln1_g, ln1_b;
  ad::Tensor w_qkv, b_qkv;  // d x 3d, 3d
  ad::Tensor w_o, b_o;      // d x d, d
  ad::Tensor ln2_g, ln2_b;
  ad::Tensor w_fc, b_fc;      // d x ff, ff
  ad::Tensor w_proj, b_proj;  // ff x d, d
};

// Pre-LN decoder-only transformer with learned absolute positions and an
// untied unembedding.
class Model {
 public:
  Model() = default;
  // Random init (N(0, 0.02), residual projections scaled by 1/sqrt(2L)).
  explicit Model(ModelConfig config);

  const ModelConfig& config() const noexcept { return config_; }

  ad::Tensor tok_emb;  // V x d
  ad::Tensor pos_emb;  // S x d
  std::vector<LayerParams> layers;
  ad::Tensor lnf_g, lnf_b;
  ad::Tensor w_unembed;  // d x V

  struct NamedParam {
    std::string name;
    ad::Tensor* tensor;
  };
  struct NamedConstParam {
    std::string name;
    const ad::Tensor* tensor;
  };
  // Stable order; the checkpoint layout and optimizer state follow it.
  std::vector<NamedParam> parameters();
  std::vector<NamedConstParam> parameters() const;
  std::size_t parameter_count() const;

 private:
  ModelConfig config_;
};

}  // namespace plab::lm
