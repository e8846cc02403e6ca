#pragma once

#include <cstddef>
#include <string>
#include <variant>
#include <vector>

namespace plab::lm {

struct ModelConfig;

struct AttentionEdge {
  std::size_t layer = 0;
  std::size_t query = 0;
  std::size_t key = 0;

  friend bool operator==(const AttentionEdge&, const AttentionEdge&) = default;
};

enum class KnockoutMode {
  kPostSoftmax,  // zero the weight, row is not renormalized (default)
  kPreSoftmax,   // mask the score to -inf before softmax
};

enum class ReweightGranularity { kHead, kLayer };

struct Knockout {
  std::vector<AttentionEdge> edges;
  KnockoutMode mode = KnockoutMode::kPostSoftmax;
};

// Detection-time rescaling of answer -> question attention edges:
//   A~(i, j) = (1 + s) A(i, j) for i in answer_positions, j in question_positions,
//   s = pi_q * alpha_q - (1 - pi_q) * alpha_a, for every layer <= last_layer.
// Rows are not renormalized.
struct Reweight {
  std::size_t last_layer = 0;
  ReweightGranularity granularity = ReweightGranularity::kHead;
  // (last_layer + 1) * heads entries for kHead, (last_layer + 1) for kLayer,
  // indexed [layer * heads + head] / [layer].
  std::vector<double> alpha_q;
  std::vector<double> alpha_a;
  double pi_q = 0.5;
  std::vector<std::size_t> answer_positions;
  std::vector<std::size_t> question_positions;

  std::size_t slot(std::size_t layer, std::size_t head, std::size_t n_heads) const {
    return granularity == ReweightGranularity::kHead ? layer * n_heads + head : layer;
  }
  double scale(std::size_t layer, std::size_t head, std::size_t n_heads) const;
};

// Exactly one intervention kind is active at a time.
class InterventionSpec {
 public:
  enum class Kind { kNone, kKnockout, kReweight };

  InterventionSpec() = default;
  static InterventionSpec none() { return {}; }
  static InterventionSpec knockout(std::vector<AttentionEdge> edges, KnockoutMode mode = KnockoutMode::kPostSoftmax);
  static InterventionSpec reweight(Reweight params);

  Kind kind() const noexcept;
  std::string kind_name() const;

  const Knockout& knockout_params() const;
  const Reweight& reweight_params() const;

  // Throw ContractError when the other kind is already set.
  void add_knockout_edge(const AttentionEdge& edge);
  void set_reweight(Reweight params);

  // Bounds, causality (key <= query) and positivity checks for a sequence of
  // length seq_len.
  void validate(const ModelConfig& config, std::size_t seq_len) const;

 private:
  std::variant<std::monostate, Knockout, Reweight> state_;
};

}  // namespace plab::lm
