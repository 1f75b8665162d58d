#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

#include "tomcoord/util/random.hpp"

namespace tomcoord::analysis {

class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// Principal branch W0 of the Lambert function, x >= -1/e.
double lambert_w0(double x);

// KL(p || q) in nats. Terms with p_i = 0 contribute nothing; q_i = 0 with
// p_i > 0 gives +inf.
double kl_divergence(std::span<const double> p, std::span<const double> q);
// Total variation distance, half the L1 distance.
double total_variation(std::span<const double> p, std::span<const double> q);

double mean(std::span<const double> xs);

struct Interval {
  double mean = 0.0;
  double lo = 0.0;
  double hi = 0.0;
  double half_width() const { return 0.5 * (hi - lo); }
};

// Percentile bootstrap CI of the mean.
Interval bootstrap_mean_ci(std::span<const double> xs, Rng& rng,
                           std::size_t resamples = 1000, double level = 0.95);

// Percentile bootstrap CI of mean(a) - mean(b) for paired samples.
Interval bootstrap_paired_diff_ci(std::span<const double> a,
                                  std::span<const double> b, Rng& rng,
                                  std::size_t resamples = 1000,
                                  double level = 0.95);

struct TestResult {
  double statistic = 0.0;
  double p_value = 1.0;  // two-sided
};

// Welch two-sample test with the normal approximation (large samples).
TestResult welch_test(std::span<const double> a, std::span<const double> b);

// Quantile by linear interpolation between order statistics.
double quantile(std::vector<double> xs, double q);

}  // namespace tomcoord::analysis
