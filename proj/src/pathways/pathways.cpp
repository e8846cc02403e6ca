#include "plab/pathways/pathways.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "plab/util/csv.hpp"
#include "plab/util/error.hpp"
#include "plab/util/rng.hpp"

namespace plab::pathways {

std::vector<BoundaryRecord> boundary_records(std::span<const world::QASample> samples, std::span<const Mode> modes) {
  std::vector<BoundaryRecord> out;
  out.reserve(samples.size());
  for (const auto& s : samples) {
    PLAB_REQUIRE(s.id < modes.size(), "boundary_records: no mode for sample " + std::to_string(s.id));
    out.push_back({s.id, modes[s.id], s.z, s.popularity_rank});
  }
  return out;
}

std::vector<std::size_t> popularity_bins(std::size_t max_rank) {
  PLAB_REQUIRE(max_rank >= 1, "popularity_bins: max_rank must be >= 1");
  std::vector<std::size_t> edges{1};
  while (edges.back() <= max_rank) edges.push_back(edges.back() * 2);
  return edges;
}

namespace {

ModeGroup summarize_group(Mode mode, std::span<const BoundaryRecord> records, std::span<const std::size_t> edges) {
  ModeGroup g;
  g.mode = mode;
  g.histogram.assign(edges.size() - 1, 0);
  std::size_t correct = 0;
  double rank_sum = 0.0;
  for (const auto& r : records) {
    if (r.mode != mode) continue;
    ++g.n;
    correct += r.z == 0 ? 1 : 0;
    rank_sum += static_cast<double>(r.popularity_rank);
    const auto it = std::upper_bound(edges.begin(), edges.end(), r.popularity_rank);
    if (it == edges.begin() || it == edges.end()) {
      throw DataError("boundary_stats: rank " + std::to_string(r.popularity_rank) + " outside the popularity bins");
    }
    ++g.histogram[static_cast<std::size_t>(it - edges.begin()) - 1];
  }
  if (g.n > 0) {
    g.accuracy = static_cast<double>(correct) / static_cast<double>(g.n);
    g.mean_popularity_rank = rank_sum / static_cast<double>(g.n);
  }
  return g;
}

}  // namespace

BoundaryReport boundary_stats(std::span<const BoundaryRecord> records, std::span<const std::size_t> bin_edges) {
  PLAB_REQUIRE(bin_edges.size() >= 2, "boundary_stats: need at least one bin");
  PLAB_REQUIRE(std::is_sorted(bin_edges.begin(), bin_edges.end()), "boundary_stats: bin edges must ascend");
  BoundaryReport r;
  r.bin_edges.assign(bin_edges.begin(), bin_edges.end());
  r.q_anchored = summarize_group(Mode::kQAnchored, records, bin_edges);
  r.a_anchored = summarize_group(Mode::kAAnchored, records, bin_edges);
  r.total = records.size();
  return r;
}

std::string pathway_stats_csv(std::span<const BoundaryRecord> records) {
  CsvWriter w("pathway_stats", kPathwayStatsVersion, {"sample_id", "mode", "z", "popularity_rank"});
  for (const auto& r : records) {
    w.cell(r.sample_id).cell(interventions::mode_name(r.mode)).cell(r.z).cell(r.popularity_rank);
    w.end_row();
  }
  return w.str();
}

std::vector<BoundaryRecord> parse_pathway_stats_csv(const std::string& text) {
  const CsvTable t = parse_csv(text);
  if (t.schema != "pathway_stats" || t.version != kPathwayStatsVersion) {
    throw DataError("pathway_stats: unexpected schema " + t.schema + " v" + std::to_string(t.version));
  }
  const auto c_id = t.column("sample_id"), c_mode = t.column("mode"), c_z = t.column("z"),
             c_rank = t.column("popularity_rank");
  std::vector<BoundaryRecord> out;
  for (const auto& row : t.rows) {
    out.push_back({std::stoull(row[c_id]), interventions::parse_mode(row[c_mode]), std::stoi(row[c_z]),
                   std::stoull(row[c_rank])});
  }
  return out;
}

void set_null_moments(SelfAwarenessResult& r);

std::vector<int> mode_labels(std::span<const Mode> modes) {
  std::vector<int> y(modes.size());
  for (std::size_t i = 0; i < modes.size(); ++i) y[i] = modes[i] == Mode::kQAnchored ? 1 : 0;
  return y;
}

SelfAwarenessResult train_self_awareness_probe(const ad::Tensor& train_features, std::span<const Mode> train_modes,
                                               const ad::Tensor& eval_features, std::span<const Mode> eval_modes,
                                               const probing::ProbeAddress& address, const SelfAwarenessConfig& config) {
  const auto y_train = mode_labels(train_modes);
  const auto y_eval = mode_labels(eval_modes);
  SelfAwarenessResult r;
  r.probe = probing::train_probe(train_features, y_train, config.probe, address);
  r.auc = probing::auc(probing::predict_all(r.probe, eval_features), y_eval);

  // Both label vectors are permuted, so no feature-label association survives.
  for (std::size_t k = 0; k < config.null_permutations; ++k) {
    auto shuffled_train = y_train;
    auto shuffled_eval = y_eval;
    Rng rng(Rng::mix(config.seed, k));
    rng.shuffle(shuffled_train);
    rng.shuffle(shuffled_eval);
    const auto p = probing::train_probe(train_features, shuffled_train, config.probe, address);
    r.null_aucs.push_back(probing::auc(probing::predict_all(p, eval_features), shuffled_eval));
  }
  set_null_moments(r);
  return r;
}

void set_null_moments(SelfAwarenessResult& r) {
  if (!r.null_aucs.empty()) {
    const double n = static_cast<double>(r.null_aucs.size());
    r.null_mean = std::accumulate(r.null_aucs.begin(), r.null_aucs.end(), 0.0) / n;
    double ss = 0.0;
    for (double a : r.null_aucs) ss += (a - r.null_mean) * (a - r.null_mean);
    r.null_sd = r.null_aucs.size() > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;
  }
}

std::string self_awareness_csv(const SelfAwarenessResult& result) {
  CsvWriter w("self_awareness", kSelfAwarenessVersion, {"kind", "replicate", "auc"});
  w.cell("observed").cell(0).cell(result.auc);
  w.end_row();
  for (std::size_t k = 0; k < result.null_aucs.size(); ++k) {
    w.cell("null").cell(k).cell(result.null_aucs[k]);
    w.end_row();
  }
  return w.str();
}

SelfAwarenessResult parse_self_awareness_csv(const std::string& text) {
  const CsvTable t = parse_csv(text);
  if (t.schema != "self_awareness" || t.version != kSelfAwarenessVersion) {
    throw DataError("self_awareness: unexpected schema " + t.schema + " v" + std::to_string(t.version));
  }
  const auto c_k = t.column("kind"), c_a = t.column("auc");
  SelfAwarenessResult r;
  for (const auto& row : t.rows) {
    if (row[c_k] == "observed") r.auc = std::stod(row[c_a]);
    else if (row[c_k] == "null") r.null_aucs.push_back(std::stod(row[c_a]));
    else throw DataError("self_awareness: unknown row kind '" + row[c_k] + "'");
  }
  set_null_moments(r);
  return r;
}

}  // namespace plab::pathways
