#include "plab/lm/model.hpp"

#include <cmath>

#include "plab/util/error.hpp"
#include "plab/util/rng.hpp"

namespace plab::lm {

void ModelConfig::validate() const {
  PLAB_REQUIRE(n_layers >= 1 && n_heads >= 1 && d_model >= 1 && d_ff >= 1 && vocab_size >= 1 && max_seq_len >= 1,
               "model config: all sizes must be >= 1");
  PLAB_REQUIRE(d_model % n_heads == 0, "model config: d_model must be divisible by n_heads");
}

namespace {
ad::Tensor normal(Rng& rng, ad::Shape shape, double stddev) {
  ad::Tensor t(std::move(shape));
  for (auto& v : t.data()) v = stddev * rng.normal();
  return t;
}
}  // namespace

Model::Model(ModelConfig config) : config_(config) {
  config_.validate();
  Rng rng(config_.seed);
  const std::size_t d = config_.d_model, ff = config_.d_ff, V = config_.vocab_size;
  const double std0 = 0.02;
  const double std_res = std0 / std::sqrt(2.0 * static_cast<double>(config_.n_layers));
  tok_emb = normal(rng, {V, d}, std0);
  pos_emb = normal(rng, {config_.max_seq_len, d}, std0);
  layers.resize(config_.n_layers);
  for (auto& L : layers) {
    L.ln1_g = ad::Tensor({d}, 1.0);
    L.ln1_b = ad::Tensor({d}, 0.0);
    L.w_qkv = normal(rng, {d, 3 * d}, std0);
    L.b_qkv = ad::Tensor({3 * d}, 0.0);
    L.w_o = normal(rng, {d, d}, std_res);
    L.b_o = ad::Tensor({d}, 0.0);
    L.ln2_g = ad::Tensor({d}, 1.0);
    L.ln2_b = ad::Tensor({d}, 0.0);
    L.w_fc = normal(rng, {d, ff}, std0);
    L.b_fc = ad::Tensor({ff}, 0.0);
    L.w_proj = normal(rng, {ff, d}, std_res);
    L.b_proj = ad::Tensor({d}, 0.0);
  }
  lnf_g = ad::Tensor({d}, 1.0);
  lnf_b = ad::Tensor({d}, 0.0);
  w_unembed = normal(rng, {d, V}, std0);
}

std::vector<Model::NamedParam> Model::parameters() {
  std::vector<NamedParam> out{{"tok_emb", &tok_emb}, {"pos_emb", &pos_emb}};
  for (std::size_t l = 0; l < layers.size(); ++l) {
    auto& L = layers[l];
    const std::string p = "layer" + std::to_string(l) + ".";
    out.push_back({p + "ln1_g", &L.ln1_g});
    out.push_back({p + "ln1_b", &L.ln1_b});
    out.push_back({p + "w_qkv", &L.w_qkv});
    out.push_back({p + "b_qkv", &L.b_qkv});
    out.push_back({p + "w_o", &L.w_o});
    out.push_back({p + "b_o", &L.b_o});
    out.push_back({p + "ln2_g", &L.ln2_g});
    out.push_back({p + "ln2_b", &L.ln2_b});
    out.push_back({p + "w_fc", &L.w_fc});
    out.push_back({p + "b_fc", &L.b_fc});
    out.push_back({p + "w_proj", &L.w_proj});
    out.push_back({p + "b_proj", &L.b_proj});
  }
  out.push_back({"lnf_g", &lnf_g});
  out.push_back({"lnf_b", &lnf_b});
  out.push_back({"w_unembed", &w_unembed});
  return out;
}

std::vector<Model::NamedConstParam> Model::parameters() const {
  std::vector<NamedConstParam> out;
  for (auto& p : const_cast<Model*>(this)->parameters()) out.push_back({p.name, p.tensor});
  return out;
}

std::size_t Model::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : parameters()) n += p.tensor->size();
  return n;
}

}  // namespace plab::lm
