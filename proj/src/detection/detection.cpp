#include "plab/detection/detection.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "plab/autodiff/adam.hpp"
#include "plab/autodiff/ops.hpp"
#include "plab/lm/forward.hpp"
#include "plab/util/csv.hpp"
#include "plab/util/error.hpp"
#include "plab/util/io.hpp"
#include "plab/util/rng.hpp"

namespace plab::detection {

ConfidenceStats confidence_stats(std::span<const double> chosen_logits, std::span<const double> chosen_probs) {
  if (chosen_logits.empty()) throw DataError("confidence_stats: empty exact-answer region");
  PLAB_REQUIRE(chosen_logits.size() == chosen_probs.size(), "confidence_stats: logits/probs length mismatch");
  const double m = static_cast<double>(chosen_logits.size());
  ConfidenceStats c;
  c.logits_mean = std::accumulate(chosen_logits.begin(), chosen_logits.end(), 0.0) / m;
  c.logits_max = *std::max_element(chosen_logits.begin(), chosen_logits.end());
  c.logits_min = *std::min_element(chosen_logits.begin(), chosen_logits.end());
  c.scores_mean = std::accumulate(chosen_probs.begin(), chosen_probs.end(), 0.0) / m;
  c.scores_max = *std::max_element(chosen_probs.begin(), chosen_probs.end());
  c.scores_min = *std::min_element(chosen_probs.begin(), chosen_probs.end());
  return c;
}

std::vector<NamedScores> confidence_baselines(std::span<const world::QASample> samples) {
  std::vector<NamedScores> out{{"logits_mean", {}}, {"logits_max", {}}, {"logits_min", {}},
                               {"scores_mean", {}}, {"scores_max", {}}, {"scores_min", {}}};
  for (const auto& s : samples) {
    const auto c = confidence_stats(s.answer_logits, s.answer_probs);
    const double v[6] = {c.logits_mean, c.logits_max, c.logits_min, c.scores_mean, c.scores_max, c.scores_min};
    for (std::size_t k = 0; k < 6; ++k) out[k].scores.push_back(-v[k]);
  }
  return out;
}

// std::lerp is exact at pi_q in {0, 1} and when both experts agree.
double mop_combine(double pi_q, double p_q, double p_a) { return std::lerp(p_a, p_q, pi_q); }

double mop_predict(std::span<const double> h, const MoPModel& mop) {
  return mop_combine(mop.gate.predict(h), mop.expert_q.predict(h), mop.expert_a.predict(h));
}

std::vector<double> mop_scores(const MoPModel& mop, const ad::Tensor& features) {
  std::vector<double> out(features.rows());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = mop_predict(features.row(i), mop);
  return out;
}

namespace {

probing::Probe train_partition(const ad::Tensor& features, std::span<const int> z, std::span<const std::size_t> rows,
                               const probing::ProbeTrainConfig& config, const probing::ProbeAddress& address,
                               const char* what) {
  if (rows.empty()) throw DataError(std::string("mop: empty ") + what + " partition");
  std::vector<int> y;
  for (auto r : rows) y.push_back(z[r]);
  try {
    return probing::train_probe(probing::take_rows(features, rows), y, config, address);
  } catch (const DataError& e) {
    throw DataError(std::string("mop: ") + what + " partition: " + e.what());
  }
}

}  // namespace

MoPModel train_mop(const ad::Tensor& features, std::span<const int> z, std::span<const Mode> modes,
                   const probing::Probe& gate, const probing::ProbeTrainConfig& config) {
  PLAB_REQUIRE(z.size() == features.rows() && modes.size() == features.rows(), "train_mop: row count mismatch");
  std::vector<std::size_t> q_rows, a_rows;
  for (std::size_t i = 0; i < modes.size(); ++i) (modes[i] == Mode::kQAnchored ? q_rows : a_rows).push_back(i);
  MoPModel m;
  m.gate = gate;
  m.expert_q = train_partition(features, z, q_rows, config, gate.address, "QAnchored");
  m.expert_a = train_partition(features, z, a_rows, config, gate.address, "AAnchored");
  return m;
}

MoPModel train_mop_vanilla_experts(const ad::Tensor& features, std::span<const int> z, std::span<const Mode> modes,
                                   const probing::Probe& gate, const probing::ProbeTrainConfig& config,
                                   std::uint64_t seed) {
  PLAB_REQUIRE(z.size() == features.rows() && modes.size() == features.rows(), "train_mop: row count mismatch");
  const auto n_q = static_cast<std::size_t>(std::count(modes.begin(), modes.end(), Mode::kQAnchored));
  std::vector<std::size_t> order(modes.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  rng.shuffle(order);
  std::vector<std::size_t> first(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_q));
  std::vector<std::size_t> second(order.begin() + static_cast<std::ptrdiff_t>(n_q), order.end());
  std::sort(first.begin(), first.end());
  std::sort(second.begin(), second.end());
  MoPModel m;
  m.gate = gate;
  m.expert_q = train_partition(features, z, first, config, gate.address, "vanilla first");
  m.expert_a = train_partition(features, z, second, config, gate.address, "vanilla second");
  return m;
}

std::vector<double> mop_random_gate_scores(const MoPModel& mop, const ad::Tensor& features,
                                           std::span<const std::size_t> sample_ids, std::uint64_t seed) {
  PLAB_REQUIRE(sample_ids.size() == features.rows(), "mop_random_gate_scores: id count mismatch");
  std::vector<double> out(features.rows());
  for (std::size_t i = 0; i < out.size(); ++i) {
    Rng rng(Rng::mix(seed, sample_ids[i]));
    const double pi = rng.bernoulli(0.5) ? 1.0 : 0.0;
    out[i] = mop_combine(pi, mop.expert_q.predict(features.row(i)), mop.expert_a.predict(features.row(i)));
  }
  return out;
}

std::vector<double> PRModel::alpha_q() const {
  std::vector<double> a(theta_q.size());
  for (std::size_t k = 0; k < a.size(); ++k) a[k] = std::exp(theta_q[k]);
  return a;
}

std::vector<double> PRModel::alpha_a() const {
  std::vector<double> a(theta_a.size());
  for (std::size_t k = 0; k < a.size(); ++k) a[k] = std::exp(theta_a[k]);
  return a;
}

PRModel make_pr_model(const lm::ModelConfig& config, const probing::Probe& baseline, const probing::Probe& gate,
                      lm::ReweightGranularity granularity, double init_alpha) {
  PLAB_REQUIRE(init_alpha >= 0.0 && std::isfinite(init_alpha), "make_pr_model: init_alpha must be finite and >= 0");
  PLAB_REQUIRE(baseline.address == gate.address, "make_pr_model: probe and gate must share an address");
  PLAB_REQUIRE(baseline.address.layer < config.n_layers, "make_pr_model: probe layer out of range");
  PRModel pr;
  pr.last_layer = baseline.address.layer;
  pr.n_heads = config.n_heads;
  pr.granularity = granularity;
  const std::size_t per_layer = granularity == lm::ReweightGranularity::kHead ? config.n_heads : 1;
  const double theta = init_alpha == 0.0 ? -std::numeric_limits<double>::infinity() : std::log(init_alpha);
  pr.theta_q.assign((pr.last_layer + 1) * per_layer, theta);
  pr.theta_a = pr.theta_q;
  pr.probe = baseline;
  pr.gate = gate;
  return pr;
}

lm::Reweight pr_reweight(const PRModel& pr, const world::QASample& sample, double pi_q) {
  lm::Reweight r;
  r.last_layer = pr.last_layer;
  r.granularity = pr.granularity;
  r.alpha_q = pr.alpha_q();
  r.alpha_a = pr.alpha_a();
  r.pi_q = pi_q;
  for (std::size_t p = sample.exact_answer.start; p <= sample.exact_answer.end; ++p) r.answer_positions.push_back(p);
  r.question_positions = sample.exact_question_positions();
  if (r.answer_positions.empty() || r.question_positions.empty()) {
    throw DataError("pr: sample " + std::to_string(sample.id) + " lacks exact answer or question spans");
  }
  return r;
}

namespace {

double gate_pi(const lm::Model& model, const PRModel& pr, const world::QASample& sample) {
  lm::ForwardOptions opts;
  opts.last_layer = pr.last_layer;
  const auto trace = lm::forward(model, sample.tokens, lm::InterventionSpec::none(), opts);
  return pr.gate.predict(probing::extract(trace, pr.gate.address, sample.exact_answer));
}

}  // namespace

double pr_predict(const lm::Model& model, const PRModel& pr, const world::QASample& sample) {
  const double pi = gate_pi(model, pr, sample);
  return probing::score_sequence(model, pr.probe, sample.tokens, sample.exact_answer,
                                 lm::InterventionSpec::reweight(pr_reweight(pr, sample, pi)));
}

std::vector<double> pr_scores(const lm::Model& model, const PRModel& pr, std::span<const world::QASample> samples) {
  std::vector<double> out(samples.size());
  parallel_for(samples.size(), [&](std::size_t i) { out[i] = pr_predict(model, pr, samples[i]); });
  return out;
}

namespace {

struct SampleGrad {
  double loss = 0.0;
  std::vector<double> g_theta_q, g_theta_a, g_w;
  double g_b = 0.0;
};

SampleGrad pr_sample_grad(const lm::Model& model, const PRModel& pr, const world::QASample& sample, double pi) {
  ad::Tape tape(true);
  const std::size_t S = pr.slots();
  ad::Var tq = tape.leaf(ad::Tensor::vector(pr.theta_q).set_requires_grad());
  ad::Var ta = tape.leaf(ad::Tensor::vector(pr.theta_a).set_requires_grad());
  ad::Var w = tape.leaf(ad::Tensor::vector(pr.probe.w).set_requires_grad());
  ad::Var b = tape.leaf(ad::Tensor::scalar(pr.probe.b).set_requires_grad());
  ad::Var aq = ad::exp(tq), aa = ad::exp(ta);
  std::vector<ad::Var> scales;
  scales.reserve(S);
  for (std::size_t k = 0; k < S; ++k) {
    scales.push_back(ad::sub(ad::scale(ad::element(aq, k), pi), ad::scale(ad::element(aa, k), 1.0 - pi)));
  }
  lm::ForwardOptions opts;
  opts.last_layer = pr.last_layer;
  const auto spec = lm::InterventionSpec::reweight(pr_reweight(pr, sample, pi));
  const auto g = lm::build_forward(tape, model, sample.tokens, spec, opts, scales);
  const auto& addr = pr.probe.address;
  const std::size_t pos = probing::selector_position(addr.selector, sample.tokens.size(), sample.exact_answer);
  ad::Var site = addr.site == probing::Site::kMlpOut ? g.mlp_out[addr.layer] : g.attn_out[addr.layer];
  ad::Var logit = ad::add(ad::dot(w, ad::row(site, pos)), b);
  ad::Var loss = ad::bce_with_logits(logit, static_cast<double>(sample.z));
  const auto gm = tape.backward(loss);

  SampleGrad out;
  out.loss = loss.value().data()[0];
  auto copy = [](const ad::Tensor& t) { return std::vector<double>(t.data().begin(), t.data().end()); };
  out.g_theta_q = copy(gm[tq]);
  out.g_theta_a = copy(gm[ta]);
  out.g_w = copy(gm[w]);
  out.g_b = gm[b].data()[0];
  return out;
}

}  // namespace

PRTrainResult pr_train(const lm::Model& model, const probing::Probe& baseline, const probing::Probe& gate,
                       std::span<const world::QASample> train, const PRTrainConfig& config) {
  PLAB_REQUIRE(config.batch_size >= 1, "pr_train: batch_size must be >= 1");
  PRTrainResult result;
  result.model = make_pr_model(model.config(), baseline, gate, config.granularity, config.init_alpha);
  PRModel& pr = result.model;
  if (train.empty() || config.epochs == 0) return result;

  // The gate reads the unmodified trace, so pi is fixed per sample. The same
  // trace gives the probe-site features used for the probe's coordinates.
  const std::size_t n = train.size(), d = pr.probe.w.size();
  std::vector<double> pis(n);
  ad::Tensor feats({n, d});
  parallel_for(n, [&](std::size_t i) {
    lm::ForwardOptions opts;
    opts.last_layer = pr.last_layer;
    const auto trace = lm::forward(model, train[i].tokens, lm::InterventionSpec::none(), opts);
    pis[i] = pr.gate.predict(probing::extract(trace, pr.gate.address, train[i].exact_answer));
    const auto h = probing::extract(trace, pr.probe.address, train[i].exact_answer);
    std::copy(h.begin(), h.end(), feats.row(i).begin());
  });

  // Adam runs on the probe in standardized coordinates, the scale the
  // baseline probe was fit in: u = w * sd, c = b + w . mu.
  std::vector<double> mu(d, 0.0), sd(d, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < d; ++k) mu[k] += feats.at(i, k) / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < d; ++k) sd[k] += (feats.at(i, k) - mu[k]) * (feats.at(i, k) - mu[k]);
  for (auto& v : sd) {
    v = std::sqrt(v / static_cast<double>(n));
    if (v < 1e-12) v = 1.0;
  }
  ad::Tensor tq = ad::Tensor::vector(pr.theta_q), ta = ad::Tensor::vector(pr.theta_a);
  ad::Tensor u({d}), c = ad::Tensor::scalar(pr.probe.b);
  for (std::size_t k = 0; k < d; ++k) {
    u.data()[k] = pr.probe.w[k] * sd[k];
    c.data()[0] += pr.probe.w[k] * mu[k];
  }
  ad::Tensor* params[] = {&tq, &ta, &u, &c};
  ad::Adam adam({config.lr, config.beta1, config.beta2, 1e-8}, params);
  auto sync = [&](PRModel& m) {
    m.theta_q.assign(tq.data().begin(), tq.data().end());
    m.theta_a.assign(ta.data().begin(), ta.data().end());
    m.probe.b = c.data()[0];
    for (std::size_t k = 0; k < d; ++k) {
      m.probe.w[k] = u.data()[k] / sd[k];
      m.probe.b -= u.data()[k] * mu[k] / sd[k];
    }
  };

  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  const std::size_t batch = std::min(config.batch_size, train.size());
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    Rng rng(Rng::mix(config.seed, epoch));
    rng.shuffle(order);
    double epoch_loss = 0.0;
    std::size_t n_batches = 0;
    for (std::size_t start = 0; start < order.size(); start += batch) {
      const std::size_t end = std::min(start + batch, order.size());
      std::vector<SampleGrad> grads(end - start);
      parallel_for(grads.size(), [&](std::size_t k) {
        const std::size_t i = order[start + k];
        grads[k] = pr_sample_grad(model, pr, train[i], pis[i]);
      });
      ad::Tensor gq(tq.shape(), 0.0), ga(ta.shape(), 0.0), gu(u.shape(), 0.0), gc(c.shape(), 0.0);
      double loss = 0.0;
      const double inv = 1.0 / static_cast<double>(grads.size());
      for (const auto& g : grads) {
        loss += g.loss * inv;
        for (std::size_t k = 0; k < g.g_theta_q.size(); ++k) gq.data()[k] += g.g_theta_q[k] * inv;
        for (std::size_t k = 0; k < g.g_theta_a.size(); ++k) ga.data()[k] += g.g_theta_a[k] * inv;
        for (std::size_t k = 0; k < d; ++k) gu.data()[k] += (g.g_w[k] - g.g_b * mu[k]) / sd[k] * inv;
        gc.data()[0] += g.g_b * inv;
      }
      if (!std::isfinite(loss)) {
        warn("pr_train: non-finite loss in epoch " + std::to_string(epoch) + "; keeping the last good state");
        result.aborted = true;
        return result;
      }
      const ad::Tensor step[] = {gq, ga, gu, gc};
      adam.step(step);
      sync(pr);
      epoch_loss += loss;
      ++n_batches;
    }
    result.epoch_loss.push_back(epoch_loss / static_cast<double>(n_batches));
  }
  return result;
}

std::string detection_auc_csv(std::span<const AucRow> rows) {
  CsvWriter w("detection_auc", kDetectionAucVersion, {"method", "seed", "auc"});
  for (const auto& r : rows) {
    w.cell(r.method).cell(r.seed).cell(r.auc);
    w.end_row();
  }
  return w.str();
}

std::vector<AucRow> parse_detection_auc_csv(const std::string& text) {
  const CsvTable t = parse_csv(text);
  if (t.schema != "detection_auc" || t.version != kDetectionAucVersion) {
    throw DataError("detection_auc: unexpected schema " + t.schema + " v" + std::to_string(t.version));
  }
  const auto c_m = t.column("method"), c_s = t.column("seed"), c_a = t.column("auc");
  std::vector<AucRow> out;
  for (const auto& row : t.rows) out.push_back({row[c_m], std::stoull(row[c_s]), std::stod(row[c_a])});
  return out;
}

}  // namespace plab::detection
