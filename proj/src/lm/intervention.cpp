#include "plab/lm/intervention.hpp"

#include "plab/lm/model.hpp"
#include "plab/util/error.hpp"

namespace plab::lm {

double Reweight::scale(std::size_t layer, std::size_t head, std::size_t n_heads) const {
  const std::size_t k = slot(layer, head, n_heads);
  return pi_q * alpha_q.at(k) - (1.0 - pi_q) * alpha_a.at(k);
}

InterventionSpec InterventionSpec::knockout(std::vector<AttentionEdge> edges, KnockoutMode mode) {
  InterventionSpec s;
  s.state_ = Knockout{std::move(edges), mode};
  return s;
}

InterventionSpec InterventionSpec::reweight(Reweight params) {
  InterventionSpec s;
  s.state_ = std::move(params);
  return s;
}

InterventionSpec::Kind InterventionSpec::kind() const noexcept {
  switch (state_.index()) {
    case 1: return Kind::kKnockout;
    case 2: return Kind::kReweight;
    default: return Kind::kNone;
  }
}

std::string InterventionSpec::kind_name() const {
  switch (kind()) {
    case Kind::kKnockout: return "knockout";
    case Kind::kReweight: return "reweight";
    default: return "none";
  }
}

const Knockout& InterventionSpec::knockout_params() const {
  if (const auto* k = std::get_if<Knockout>(&state_)) return *k;
  throw ContractError("intervention is not a knockout (kind: " + kind_name() + ")");
}

const Reweight& InterventionSpec::reweight_params() const {
  if (const auto* r = std::get_if<Reweight>(&state_)) return *r;
  throw ContractError("intervention is not a reweight (kind: " + kind_name() + ")");
}

void InterventionSpec::add_knockout_edge(const AttentionEdge& edge) {
  if (kind() == Kind::kReweight) throw ContractError("intervention kind conflict: cannot add knockout edges to a reweight spec");
  if (kind() == Kind::kNone) state_ = Knockout{};
  std::get<Knockout>(state_).edges.push_back(edge);
}

void InterventionSpec::set_reweight(Reweight params) {
  if (kind() == Kind::kKnockout) throw ContractError("intervention kind conflict: cannot set reweight on a knockout spec");
  state_ = std::move(params);
}

void InterventionSpec::validate(const ModelConfig& config, std::size_t seq_len) const {
  if (const auto* k = std::get_if<Knockout>(&state_)) {
    for (const auto& e : k->edges) {
      if (e.layer >= config.n_layers || e.query >= seq_len || e.key >= seq_len) {
        throw ContractError("knockout edge (" + std::to_string(e.layer) + ", " + std::to_string(e.query) + ", " +
                            std::to_string(e.key) + ") out of range");
      }
      if (e.key > e.query) throw ContractError("knockout edge violates causality (key > query)");
    }
  } else if (const auto* r = std::get_if<Reweight>(&state_)) {
    PLAB_REQUIRE(r->last_layer < config.n_layers, "reweight: last_layer out of range");
    const std::size_t per_layer = r->granularity == ReweightGranularity::kHead ? config.n_heads : 1;
    const std::size_t need = (r->last_layer + 1) * per_layer;
    PLAB_REQUIRE(r->alpha_q.size() == need && r->alpha_a.size() == need, "reweight: alpha vector has wrong length");
    for (std::size_t i = 0; i < need; ++i) {
      // Zero is admitted as the identity adapter; negative values never are.
      PLAB_REQUIRE(r->alpha_q[i] >= 0.0 && r->alpha_a[i] >= 0.0, "reweight: alpha must be non-negative");
    }
    PLAB_REQUIRE(r->pi_q >= 0.0 && r->pi_q <= 1.0, "reweight: pi_q must lie in [0, 1]");
    for (auto p : r->answer_positions) PLAB_REQUIRE(p < seq_len, "reweight: answer position out of range");
    for (auto p : r->question_positions) PLAB_REQUIRE(p < seq_len, "reweight: question position out of range");
  }
}

}  // namespace plab::lm
