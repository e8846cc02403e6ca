#include "plab/interventions/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "plab/util/error.hpp"
#include "plab/util/io.hpp"
#include "plab/util/rng.hpp"

namespace plab::interventions {

double mean(std::span<const double> v) {
  PLAB_REQUIRE(!v.empty(), "mean of empty set");
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double quantile_sorted(std::span<const double> sorted, double q) {
  PLAB_REQUIRE(!sorted.empty(), "quantile of empty set");
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

double median(std::span<const double> v) {
  std::vector<double> s(v.begin(), v.end());
  std::sort(s.begin(), s.end());
  return quantile_sorted(s, 0.5);
}

double silverman_bandwidth(std::span<const double> values) {
  PLAB_REQUIRE(values.size() >= 2, "silverman_bandwidth: need at least two values");
  const double m = mean(values);
  double ss = 0.0;
  for (double x : values) ss += (x - m) * (x - m);
  const double sd = std::sqrt(ss / static_cast<double>(values.size() - 1));
  std::vector<double> s(values.begin(), values.end());
  std::sort(s.begin(), s.end());
  const double iqr = quantile_sorted(s, 0.75) - quantile_sorted(s, 0.25);
  const double spread = iqr > 0.0 ? std::min(sd, iqr / 1.34) : sd;
  return 0.9 * spread * std::pow(static_cast<double>(values.size()), -0.2);
}

KdeCurve kde(std::span<const double> values, std::optional<double> bandwidth, std::size_t grid_points) {
  if (values.size() < 2) throw ContractError("kde: need at least two values");
  PLAB_REQUIRE(grid_points >= 2, "kde: need at least two grid points");
  KdeCurve c;
  if (bandwidth) {
    PLAB_REQUIRE(*bandwidth > 0.0, "kde: bandwidth must be positive");
    c.bandwidth = *bandwidth;
  } else {
    c.bandwidth = silverman_bandwidth(values);
    if (!(c.bandwidth > 0.0)) {
      warn("kde: zero-variance input, falling back to bandwidth 1e-3");
      c.bandwidth = 1e-3;
      c.fallback = true;
    }
  }
  const auto [mn, mx] = std::minmax_element(values.begin(), values.end());
  const double lo = *mn - 3.0 * c.bandwidth;
  const double hi = *mx + 3.0 * c.bandwidth;
  const double norm = 1.0 / (static_cast<double>(values.size()) * c.bandwidth * std::sqrt(2.0 * std::numbers::pi));
  c.x.resize(grid_points);
  c.density.resize(grid_points);
  for (std::size_t g = 0; g < grid_points; ++g) {
    const double x = lo + (hi - lo) * static_cast<double>(g) / static_cast<double>(grid_points - 1);
    double d = 0.0;
    for (double v : values) {
      const double u = (x - v) / c.bandwidth;
      d += std::exp(-0.5 * u * u);
    }
    c.x[g] = x;
    c.density[g] = d * norm;
  }
  return c;
}

namespace {

double resample_mean(std::span<const double> v, Rng& rng) {
  double s = 0.0;
  for (std::size_t k = 0; k < v.size(); ++k) s += v[rng.below(v.size())];
  return s / static_cast<double>(v.size());
}

Interval percentile(std::vector<double>& stats, double estimate, double level) {
  std::sort(stats.begin(), stats.end());
  const double tail = 0.5 * (1.0 - level);
  return {estimate, quantile_sorted(stats, tail), quantile_sorted(stats, 1.0 - tail)};
}

}  // namespace

Interval bootstrap_mean(std::span<const double> values, std::size_t resamples, std::uint64_t seed, double level) {
  PLAB_REQUIRE(!values.empty(), "bootstrap_mean: empty sample");
  PLAB_REQUIRE(resamples >= 1, "bootstrap_mean: need resamples");
  Rng rng(seed);
  std::vector<double> stats(resamples);
  for (auto& s : stats) s = resample_mean(values, rng);
  return percentile(stats, mean(values), level);
}

Interval bootstrap_mean_diff(std::span<const double> a, std::span<const double> b, std::size_t resamples,
                             std::uint64_t seed, double level) {
  PLAB_REQUIRE(!a.empty() && !b.empty(), "bootstrap_mean_diff: empty group");
  PLAB_REQUIRE(resamples >= 1, "bootstrap_mean_diff: need resamples");
  Rng rng(seed);
  std::vector<double> stats(resamples);
  for (auto& s : stats) {
    const double ma = resample_mean(a, rng);
    s = ma - resample_mean(b, rng);
  }
  return percentile(stats, mean(a) - mean(b), level);
}

}  // namespace plab::interventions
