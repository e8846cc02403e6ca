#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "plab/autodiff/tensor.hpp"
#include "plab/interventions/knockout.hpp"
#include "plab/lm/intervention.hpp"
#include "plab/lm/model.hpp"
#include "plab/probing/probe.hpp"
#include "plab/world/world.hpp"

namespace plab::detection {

using interventions::Mode;

// Confidence statistics over the exact-answer generation steps.
struct ConfidenceStats {
  double logits_mean = 0.0, logits_max = 0.0, logits_min = 0.0;
  double scores_mean = 0.0, scores_max = 0.0, scores_min = 0.0;
};

// Errors: empty or mismatched inputs.
ConfidenceStats confidence_stats(std::span<const double> chosen_logits, std::span<const double> chosen_probs);

struct NamedScores {
  std::string method;
  std::vector<double> scores;  // higher = more likely hallucinated
};

// The six logit/score baselines, oriented as negated confidence.
std::vector<NamedScores> confidence_baselines(std::span<const world::QASample> samples);

// p = pi_q * p_q + (1 - pi_q) * p_a
double mop_combine(double pi_q, double p_q, double p_a);

struct MoPModel {
  probing::Probe gate;  // QAnchored probability
  probing::Probe expert_q;
  probing::Probe expert_a;
};

double mop_predict(std::span<const double> h, const MoPModel& mop);
std::vector<double> mop_scores(const MoPModel& mop, const ad::Tensor& features);

// Experts trained on the QAnchored / AAnchored rows of the training set.
// Errors: a partition that is empty or holds a single hallucination class.
MoPModel train_mop(const ad::Tensor& features, std::span<const int> z, std::span<const Mode> modes,
                   const probing::Probe& gate, const probing::ProbeTrainConfig& config);

// Ablation: experts trained on a seeded random partition with the same sizes
// as the pathway partitions. Gate unchanged.
MoPModel train_mop_vanilla_experts(const ad::Tensor& features, std::span<const int> z, std::span<const Mode> modes,
                                   const probing::Probe& gate, const probing::ProbeTrainConfig& config,
                                   std::uint64_t seed);

// Ablation: hard routing by a seeded Bernoulli(0.5) draw per sample id.
std::vector<double> mop_random_gate_scores(const MoPModel& mop, const ad::Tensor& features,
                                           std::span<const std::size_t> sample_ids, std::uint64_t seed);

// Pathway reweighting adapter: alpha = exp(theta) per (layer <= last_layer,
// head) slot, or per layer.
struct PRModel {
  std::size_t last_layer = 0;
  std::size_t n_heads = 1;
  lm::ReweightGranularity granularity = lm::ReweightGranularity::kHead;
  std::vector<double> theta_q;
  std::vector<double> theta_a;
  probing::Probe probe;  // reads the reweighted state at last_layer
  probing::Probe gate;   // reads the unmodified state

  std::vector<double> alpha_q() const;
  std::vector<double> alpha_a() const;
  std::size_t slots() const noexcept { return theta_q.size(); }
};

// alpha = init_alpha in every slot; init_alpha = 0 yields the identity
// adapter (theta = -inf), which stays fixed under training.
PRModel make_pr_model(const lm::ModelConfig& config, const probing::Probe& baseline, const probing::Probe& gate,
                      lm::ReweightGranularity granularity, double init_alpha);

// Reweight spec for one sample: answer rows are the exact-answer positions,
// question keys the exact-question positions. Errors: missing spans.
lm::Reweight pr_reweight(const PRModel& pr, const world::QASample& sample, double pi_q);

// Gate on the unmodified trace, then the probe on the reweighted trace.
double pr_predict(const lm::Model& model, const PRModel& pr, const world::QASample& sample);
std::vector<double> pr_scores(const lm::Model& model, const PRModel& pr, std::span<const world::QASample> samples);

struct PRTrainConfig {
  std::size_t epochs = 10;
  double lr = 1e-2;
  double beta1 = 0.9;
  double beta2 = 0.999;
  std::size_t batch_size = 512;  // the full set when smaller
  double init_alpha = 0.1;
  lm::ReweightGranularity granularity = lm::ReweightGranularity::kHead;
  std::uint64_t seed = 0;
};

struct PRTrainResult {
  PRModel model;
  std::vector<double> epoch_loss;  // mean BCE over each epoch's batches
  bool aborted = false;            // non-finite loss; model is the last good state
};

// LM parameters stay frozen; theta and the probe are trained jointly by
// backpropagating the BCE through the reweighted forward pass.
PRTrainResult pr_train(const lm::Model& model, const probing::Probe& baseline, const probing::Probe& gate,
                       std::span<const world::QASample> train, const PRTrainConfig& config);

struct AucRow {
  std::string method;
  std::uint64_t seed = 0;
  double auc = 0.0;
};

inline constexpr int kDetectionAucVersion = 1;
std::string detection_auc_csv(std::span<const AucRow> rows);
std::vector<AucRow> parse_detection_auc_csv(const std::string& text);

}  // namespace plab::detection
