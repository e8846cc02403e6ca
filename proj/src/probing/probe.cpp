#include "plab/probing/probe.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <json.hpp>
#include <numeric>

#include "plab/util/error.hpp"
#include "plab/util/io.hpp"

namespace plab::probing {

std::string site_name(Site s) { return s == Site::kAttnOut ? "attn_out" : "mlp_out"; }

std::string selector_name(Selector s) {
  switch (s) {
    case Selector::kFinalToken: return "final_token";
    case Selector::kBeforeExactAnswer: return "before_exact_answer";
    case Selector::kLastExactAnswer: return "last_exact_answer";
  }
  return "?";
}

Site parse_site(const std::string& s) {
  if (s == "attn_out") return Site::kAttnOut;
  if (s == "mlp_out") return Site::kMlpOut;
  throw ContractError("unknown activation site '" + s + "'");
}

Selector parse_selector(const std::string& s) {
  if (s == "final_token") return Selector::kFinalToken;
  if (s == "before_exact_answer") return Selector::kBeforeExactAnswer;
  if (s == "last_exact_answer") return Selector::kLastExactAnswer;
  throw ContractError("unknown token selector '" + s + "'");
}

std::string ProbeAddress::key() const {
  return "L" + std::to_string(layer) + "." + site_name(site) + "." + selector_name(selector);
}

std::size_t selector_position(Selector selector, std::size_t length, const world::Span& exact_answer) {
  std::size_t pos = 0;
  switch (selector) {
    case Selector::kFinalToken:
      PLAB_REQUIRE(length >= 1, "selector: empty trace");
      pos = length - 1;
      break;
    case Selector::kBeforeExactAnswer:
      if (exact_answer.start == 0) throw ContractError("selector before_exact_answer: answer span starts at 0");
      pos = exact_answer.start - 1;
      break;
    case Selector::kLastExactAnswer:
      pos = exact_answer.end;
      break;
  }
  if (pos >= length) throw ContractError("selector position " + std::to_string(pos) + " out of range");
  return pos;
}

std::vector<double> extract(const lm::ForwardTrace& trace, const ProbeAddress& address, const world::Span& exact_answer) {
  PLAB_REQUIRE(address.layer < trace.n_layers(), "extract: layer out of range for trace");
  const std::size_t pos = selector_position(address.selector, trace.length(), exact_answer);
  const auto v = address.site == Site::kMlpOut ? trace.mlp_out_at(address.layer, pos) : trace.attn_out_at(address.layer, pos);
  return {v.begin(), v.end()};
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double Probe::logit(std::span<const double> h) const {
  PLAB_REQUIRE(h.size() == w.size(), "probe: feature dimension mismatch");
  double s = b;
  for (std::size_t k = 0; k < w.size(); ++k) s += w[k] * h[k];
  return s;
}

double Probe::predict(std::span<const double> h) const { return sigmoid(logit(h)); }

std::string probe_to_json(const Probe& probe) {
  const nlohmann::json j = {{"layer", probe.address.layer},
                            {"site", site_name(probe.address.site)},
                            {"selector", selector_name(probe.address.selector)},
                            {"w", probe.w},
                            {"b", probe.b},
                            {"iterations", probe.meta.iterations},
                            {"lr", probe.meta.lr},
                            {"l2", probe.meta.l2}};
  return j.dump();
}

Probe probe_from_json(const std::string& text) {
  try {
    const auto j = nlohmann::json::parse(text);
    Probe p;
    p.address = {j.at("layer").get<std::size_t>(), parse_site(j.at("site")), parse_selector(j.at("selector"))};
    p.w = j.at("w").get<std::vector<double>>();
    p.b = j.at("b");
    p.meta.iterations = j.at("iterations");
    p.meta.lr = j.at("lr");
    p.meta.l2 = j.at("l2");
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed probe record: ") + e.what());
  }
}

Probe train_probe(const ad::Tensor& features, std::span<const int> labels, const ProbeTrainConfig& config,
                  const ProbeAddress& address) {
  PLAB_REQUIRE(features.rank() == 2, "train_probe: features must be n x d");
  const std::size_t n = features.rows();
  const std::size_t d = features.cols();
  PLAB_REQUIRE(labels.size() == n, "train_probe: label count mismatch");
  if (!features.all_finite()) throw DataError("train_probe: non-finite features");
  std::size_t pos = 0;
  for (int y : labels) {
    PLAB_REQUIRE(y == 0 || y == 1, "train_probe: labels must be 0/1");
    pos += static_cast<std::size_t>(y);
  }
  if (pos == 0 || pos == n) throw DataError("train_probe: labels contain a single class");

  std::vector<double> mu(d, 0.0), sd(d, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < d; ++k) mu[k] += features.at(i, k);
  for (auto& m : mu) m /= static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < d; ++k) sd[k] += (features.at(i, k) - mu[k]) * (features.at(i, k) - mu[k]);
  for (auto& s : sd) {
    s = std::sqrt(s / static_cast<double>(n));
    if (s < 1e-12) s = 1.0;
  }
  std::vector<double> x(n * d);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < d; ++k) x[i * d + k] = (features.at(i, k) - mu[k]) / sd[k];

  std::vector<double> w(d, 0.0), gw(d);
  double b = 0.0;
  const double inv_n = 1.0 / static_cast<double>(n);
  for (std::size_t it = 0; it < config.iterations; ++it) {
    std::fill(gw.begin(), gw.end(), 0.0);
    double gb = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double s = b;
      for (std::size_t k = 0; k < d; ++k) s += w[k] * x[i * d + k];
      const double r = sigmoid(s) - labels[i];
      gb += r;
      for (std::size_t k = 0; k < d; ++k) gw[k] += r * x[i * d + k];
    }
    for (std::size_t k = 0; k < d; ++k) w[k] -= config.lr * (gw[k] * inv_n + config.l2 * w[k]);
    b -= config.lr * gb * inv_n;
  }

  Probe p;
  p.address = address;
  p.meta = config;
  p.w.resize(d);
  p.b = b;
  for (std::size_t k = 0; k < d; ++k) {
    p.w[k] = w[k] / sd[k];
    p.b -= w[k] * mu[k] / sd[k];
  }
  return p;
}

std::vector<double> predict_all(const Probe& probe, const ad::Tensor& features) {
  std::vector<double> out(features.rows());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = probe.predict(features.row(i));
  return out;
}

double auc(std::span<const double> scores, std::span<const int> labels) {
  PLAB_REQUIRE(scores.size() == labels.size(), "auc: size mismatch");
  const std::size_t n = scores.size();
  std::size_t n1 = 0;
  for (int y : labels) n1 += y == 1 ? 1 : 0;
  const std::size_t n0 = n - n1;
  if (n1 == 0 || n0 == 0) throw DataError("auc: undefined for a single class");

  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  double rank_sum = 0.0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && scores[idx[j + 1]] == scores[idx[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + 1 + j + 1);
    for (std::size_t k = i; k <= j; ++k)
      if (labels[idx[k]] == 1) rank_sum += avg;
    i = j + 1;
  }
  const double u = rank_sum - 0.5 * static_cast<double>(n1) * static_cast<double>(n1 + 1);
  return u / (static_cast<double>(n1) * static_cast<double>(n0));
}

std::size_t select_best_layer(std::span<const double> validation_aucs) {
  if (validation_aucs.empty()) throw DataError("select_best_layer: no candidate layers");
  std::size_t best = 0;
  for (std::size_t l = 1; l < validation_aucs.size(); ++l)
    if (validation_aucs[l] > validation_aucs[best]) best = l;
  return best;
}

void write_activations(const std::filesystem::path& path, const ProbeAddress& address, const ad::Tensor& features,
                       std::span<const std::size_t> sample_ids) {
  PLAB_REQUIRE(features.rank() == 2 && features.rows() == sample_ids.size(), "write_activations: shape mismatch");
  nlohmann::json h;
  h["layer"] = address.layer;
  h["site"] = site_name(address.site);
  h["selector"] = selector_name(address.selector);
  h["n"] = features.rows();
  h["d"] = features.cols();
  h["sample_ids"] = std::vector<std::size_t>(sample_ids.begin(), sample_ids.end());
  std::string out = h.dump() + "\n";
  out.reserve(out.size() + features.size() * 8);
  for (double v : features.data()) {
    const auto bits = std::bit_cast<std::uint64_t>(v);
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
  }
  write_file_atomic(path, out);
}

ActivationFile read_activations(const std::filesystem::path& path) {
  const std::string in = read_file(path);
  const auto nl = in.find('\n');
  if (nl == std::string::npos) throw DataError("activation file without header: " + path.string());
  const auto h = nlohmann::json::parse(in.substr(0, nl));
  ActivationFile f;
  f.address = {h.at("layer").get<std::size_t>(), parse_site(h.at("site")), parse_selector(h.at("selector"))};
  const std::size_t n = h.at("n");
  const std::size_t d = h.at("d");
  f.sample_ids = h.at("sample_ids").get<std::vector<std::size_t>>();
  if (in.size() - nl - 1 != n * d * 8) throw DataError("activation file payload size mismatch: " + path.string());
  f.features = ad::Tensor({n, d});
  std::size_t pos = nl + 1;
  for (auto& v : f.features.data()) {
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(in[pos + i])) << (8 * i);
    v = std::bit_cast<double>(bits);
    pos += 8;
  }
  return f;
}

std::vector<ad::Tensor> extract_features(const lm::Model& model, std::span<const world::QASample> samples,
                                         std::span<const ProbeAddress> addresses) {
  const std::size_t d = model.config().d_model;
  std::vector<ad::Tensor> out;
  for (std::size_t a = 0; a < addresses.size(); ++a) out.emplace_back(ad::Shape{samples.size(), d});
  parallel_for(samples.size(), [&](std::size_t i) {
    const auto trace = lm::forward(model, samples[i].tokens);
    for (std::size_t a = 0; a < addresses.size(); ++a) {
      const auto h = extract(trace, addresses[a], samples[i].exact_answer);
      std::copy(h.begin(), h.end(), out[a].row(i).begin());
    }
  });
  return out;
}

double score_sequence(const lm::Model& model, const Probe& probe, std::span<const std::int32_t> tokens,
                      const world::Span& exact_answer, const lm::InterventionSpec& intervention,
                      std::size_t position_offset) {
  lm::ForwardOptions opts;
  opts.last_layer = probe.address.layer;
  opts.position_offset = position_offset;
  const auto trace = lm::forward(model, tokens, intervention, opts);
  return probe.predict(extract(trace, probe.address, exact_answer));
}

ad::Tensor take_rows(const ad::Tensor& features, std::span<const std::size_t> rows) {
  ad::Tensor out({rows.size(), features.cols()});
  for (std::size_t i = 0; i < rows.size(); ++i) {
    PLAB_REQUIRE(rows[i] < features.rows(), "take_rows: row " + std::to_string(rows[i]) + " out of range");
    const auto src = features.row(rows[i]);
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  return out;
}

}  // namespace plab::probing
