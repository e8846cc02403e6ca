#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "plab/autodiff/tensor.hpp"
#include "plab/lm/forward.hpp"
#include "plab/world/world.hpp"

namespace plab::probing {

enum class Site { kAttnOut, kMlpOut };
enum class Selector { kFinalToken, kBeforeExactAnswer, kLastExactAnswer };

std::string site_name(Site s);
std::string selector_name(Selector s);
Site parse_site(const std::string& s);
Selector parse_selector(const std::string& s);

struct ProbeAddress {
  std::size_t layer = 0;
  Site site = Site::kMlpOut;
  Selector selector = Selector::kLastExactAnswer;

  std::string key() const;  // "L2.mlp_out.last_exact_answer"
  friend bool operator==(const ProbeAddress&, const ProbeAddress&) = default;
};

// final_token -> T-1; before_exact_answer -> start-1; last_exact_answer -> end.
std::size_t selector_position(Selector selector, std::size_t length, const world::Span& exact_answer);

std::vector<double> extract(const lm::ForwardTrace& trace, const ProbeAddress& address, const world::Span& exact_answer);

struct ProbeTrainConfig {
  std::size_t iterations = 500;
  double lr = 0.1;
  double l2 = 1e-4;
  std::uint64_t seed = 0;

  friend bool operator==(const ProbeTrainConfig&, const ProbeTrainConfig&) = default;
};

// p(z = 1 | h) = sigmoid(w . h + b), in the raw activation space.
struct Probe {
  ProbeAddress address;
  std::vector<double> w;
  double b = 0.0;
  ProbeTrainConfig meta;

  double logit(std::span<const double> h) const;
  double predict(std::span<const double> h) const;
};

double sigmoid(double x);

// Single-line JSON record of a probe.
std::string probe_to_json(const Probe& probe);
// Errors: DataError for malformed records.
Probe probe_from_json(const std::string& text);

// Rows of `features` are samples. Full-batch gradient descent on the
// L2-regularized mean BCE over per-feature standardized inputs; the
// standardization is folded back into (w, b).
// Errors: single-class labels, non-finite features, shape mismatch.
Probe train_probe(const ad::Tensor& features, std::span<const int> labels, const ProbeTrainConfig& config,
                  const ProbeAddress& address = {});

std::vector<double> predict_all(const Probe& probe, const ad::Tensor& features);

// Mann-Whitney AUC with average ranks for ties. Errors: single class.
double auc(std::span<const double> scores, std::span<const int> labels);

// Argmax; ties go to the lowest index. Errors: empty input.
std::size_t select_best_layer(std::span<const double> validation_aucs);

// Activation cache file: one JSON header line, then n*d little-endian doubles.
void write_activations(const std::filesystem::path& path, const ProbeAddress& address, const ad::Tensor& features,
                       std::span<const std::size_t> sample_ids);
struct ActivationFile {
  ProbeAddress address;
  ad::Tensor features;
  std::vector<std::size_t> sample_ids;
};
ActivationFile read_activations(const std::filesystem::path& path);

// Features for every address over `samples`, one intervention-free forward
// per sample. Result is indexed like `addresses`.
std::vector<ad::Tensor> extract_features(const lm::Model& model, std::span<const world::QASample> samples,
                                         std::span<const ProbeAddress> addresses);

// Probe output on one sequence; the forward pass stops at the probe layer.
double score_sequence(const lm::Model& model, const Probe& probe, std::span<const std::int32_t> tokens,
                      const world::Span& exact_answer,
                      const lm::InterventionSpec& intervention = lm::InterventionSpec::none(),
                      std::size_t position_offset = 0);

// Rows of `features` selected by `rows`.
ad::Tensor take_rows(const ad::Tensor& features, std::span<const std::size_t> rows);

}  // namespace plab::probing
