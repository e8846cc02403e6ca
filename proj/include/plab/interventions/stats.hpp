#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace plab::interventions {

struct KdeCurve {
  double bandwidth = 0.0;
  bool fallback = false;  // Silverman bandwidth degenerated to 0
  std::vector<double> x;
  std::vector<double> density;
};

// 0.9 * min(sd, IQR / 1.34) * n^(-1/5); sd alone when the IQR is 0.
double silverman_bandwidth(std::span<const double> values);

// Gaussian-kernel density on `grid_points` evenly spaced points over
// [min - 3 bw, max + 3 bw]. Zero spread falls back to bw = 1e-3 with a warning.
// Errors: fewer than two values.
KdeCurve kde(std::span<const double> values, std::optional<double> bandwidth = std::nullopt,
             std::size_t grid_points = 256);

struct Interval {
  double estimate = 0.0;
  double lo = 0.0;
  double hi = 0.0;

  bool excludes_zero() const noexcept { return lo > 0.0 || hi < 0.0; }
};

// Linear-interpolated quantile of sorted data, q in [0, 1].
double quantile_sorted(std::span<const double> sorted, double q);

// Percentile bootstrap of the mean.
Interval bootstrap_mean(std::span<const double> values, std::size_t resamples, std::uint64_t seed, double level = 0.95);

// Percentile bootstrap of mean(a) - mean(b), resampling each group independently.
Interval bootstrap_mean_diff(std::span<const double> a, std::span<const double> b, std::size_t resamples,
                             std::uint64_t seed, double level = 0.95);

double mean(std::span<const double> v);
double median(std::span<const double> v);

}  // namespace plab::interventions
