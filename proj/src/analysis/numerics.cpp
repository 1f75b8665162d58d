#include "tomcoord/analysis/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace tomcoord::analysis {

double lambert_w0(double x) {
  constexpr double kBranch = -1.0 / std::numbers::e;
  if (std::isnan(x) || x < kBranch - 1e-15) {
    throw DomainError("lambert_w0: argument below -1/e");
  }
  if (x <= kBranch) return -1.0;
  if (x == 0.0) return 0.0;

  double w;
  if (x >= 0.0) {
    w = std::log1p(x);
  } else {
    // Series about the branch point.
    const double p = std::sqrt(2.0 * (std::numbers::e * x + 1.0));
    w = -1.0 + p - p * p / 3.0 + 11.0 / 72.0 * p * p * p;
  }
  for (int it = 0; it < 50; ++it) {
    const double ew = std::exp(w);
    const double f = w * ew - x;
    const double wp1 = w + 1.0;
    if (wp1 == 0.0) break;
    const double denom = ew * wp1 - (w + 2.0) * f / (2.0 * wp1);
    const double step = f / denom;
    w -= step;
    if (std::abs(step) <= 1e-15 * (1.0 + std::abs(w))) break;
  }
  return std::max(w, -1.0);
}

double kl_divergence(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) throw std::invalid_argument("kl: size mismatch");
  double kl = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] <= 0.0) continue;
    if (q[i] <= 0.0) return std::numeric_limits<double>::infinity();
    kl += p[i] * std::log(p[i] / q[i]);
  }
  // Rounding can push a zero divergence slightly negative.
  return std::max(kl, 0.0);
}

double total_variation(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) throw std::invalid_argument("tv: size mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) s += std::abs(p[i] - q[i]);
  return 0.5 * s;
}

double mean(std::span<const double> xs) {
  if (xs.empty()) return 0.0;
  double s = 0.0;
  for (double x : xs) s += x;
  return s / static_cast<double>(xs.size());
}

double quantile(std::vector<double> xs, double q) {
  if (xs.empty()) return 0.0;
  std::sort(xs.begin(), xs.end());
  const double pos = q * static_cast<double>(xs.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, xs.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return xs[lo] + frac * (xs[hi] - xs[lo]);
}

namespace {

Interval percentile_interval(double centre, std::vector<double> stats,
                             double level) {
  const double tail = 0.5 * (1.0 - level);
  return {centre, quantile(stats, tail), quantile(std::move(stats), 1.0 - tail)};
}

}  // namespace

Interval bootstrap_mean_ci(std::span<const double> xs, Rng& rng,
                           std::size_t resamples, double level) {
  const double m = mean(xs);
  if (xs.size() < 2) return {m, m, m};
  std::vector<double> stats(resamples);
  for (auto& s : stats) {
    double acc = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) acc += xs[uniform_index(rng, xs.size())];
    s = acc / static_cast<double>(xs.size());
  }
  return percentile_interval(m, std::move(stats), level);
}

Interval bootstrap_paired_diff_ci(std::span<const double> a,
                                  std::span<const double> b, Rng& rng,
                                  std::size_t resamples, double level) {
  if (a.size() != b.size()) throw std::invalid_argument("paired bootstrap: size mismatch");
  std::vector<double> d(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) d[i] = a[i] - b[i];
  return bootstrap_mean_ci(d, rng, resamples, level);
}

TestResult welch_test(std::span<const double> a, std::span<const double> b) {
  auto var = [](std::span<const double> xs, double m) {
    if (xs.size() < 2) return 0.0;
    double s = 0.0;
    for (double x : xs) s += (x - m) * (x - m);
    return s / static_cast<double>(xs.size() - 1);
  };
  const double ma = mean(a), mb = mean(b);
  const double se = std::sqrt(var(a, ma) / static_cast<double>(a.size()) +
                              var(b, mb) / static_cast<double>(b.size()));
  TestResult r;
  if (se == 0.0) {
    r.statistic = 0.0;
    r.p_value = ma == mb ? 1.0 : 0.0;
    return r;
  }
  r.statistic = (ma - mb) / se;
  r.p_value = std::erfc(std::abs(r.statistic) / std::numbers::sqrt2);
  return r;
}

}  // namespace tomcoord::analysis
