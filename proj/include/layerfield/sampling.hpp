#pragma once

#include <algorithm>
#include <vector>

#include "layerfield/common.hpp"
#include "layerfield/rng.hpp"

namespace lf {

// One uniform draw per equal sub-interval of [t_near, t_far]; ascending.
inline std::vector<double> stratified_samples(double t_near, double t_far, int n, Rng& rng) {
  require(n > 0 && t_near < t_far, "stratified_samples: bad interval or count");
  std::vector<double> out(static_cast<size_t>(n), 0.0);
  const double step = (t_far - t_near) / double(n);
  for (int i = 0; i < n; ++i) out[size_t(i)] = t_near + (double(i) + rng.uniform()) * step;
  return out;
}

// Inverse-CDF draws from the piecewise-constant distribution proportional to
// the coarse weights over the equal sub-intervals of [t_near, t_far];
// ascending. All-zero weights fall back to stratified sampling.
inline std::vector<double> importance_samples(double t_near, double t_far,
                                              const std::vector<double>& weights, int n,
                                              Rng& rng) {
  require(n > 0 && t_near < t_far, "importance_samples: bad interval or count");
  double total = 0;
  for (double w : weights) {
    require(w >= 0, "importance_samples: negative weight");
    total += w;
  }
  if (total <= 0) return stratified_samples(t_near, t_far, n, rng);

  const int bins = int(weights.size());
  std::vector<double> cdf(size_t(bins) + 1, 0.0);
  for (int i = 0; i < bins; ++i) cdf[size_t(i) + 1] = cdf[size_t(i)] + weights[size_t(i)] / total;
  cdf.back() = 1.0;

  const double bin_w = (t_far - t_near) / double(bins);
  std::vector<double> out(static_cast<size_t>(n), 0.0);
  for (int i = 0; i < n; ++i) {
    const double u = (double(i) + rng.uniform()) / double(n);  // stratified uniforms
    const auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
    int b = int(std::distance(cdf.begin(), it)) - 1;
    b = std::clamp(b, 0, bins - 1);
    const double lo = cdf[size_t(b)], hi = cdf[size_t(b) + 1];
    const double frac = hi > lo ? (u - lo) / (hi - lo) : 0.5;
    out[size_t(i)] = t_near + (double(b) + frac) * bin_w;
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace lf
