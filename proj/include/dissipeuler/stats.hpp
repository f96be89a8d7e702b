#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace dissipeuler {

// Neumaier compensated summation; order-dependent only at the last bit.
class CompensatedSum {
 public:
  void add(double x);
  double value() const { return sum_ + compensation_; }

 private:
  double sum_ = 0.0;
  double compensation_ = 0.0;
};

double compensated_sum(std::span<const double> xs);

struct Estimate {
  double mean = 0.0;
  double std_error = 0.0;
  double half_width = 0.0;  // half width of the two-sided confidence interval
  std::size_t samples = 0;

  double lower() const { return mean - half_width; }
  double upper() const { return mean + half_width; }
  bool contains(double x) const { return lower() <= x && x <= upper(); }
};

// Sample mean with a normal-approximation interval at the given confidence.
Estimate estimate_mean(std::span<const double> xs, double confidence = 0.95);

double normal_quantile(double p);
double sample_variance(std::span<const double> xs);
double sample_skewness(std::span<const double> xs);
double sample_excess_kurtosis(std::span<const double> xs);

// Least-squares slope of log(err) against log(h).
double observed_order(std::span<const double> h, std::span<const double> err);

}  // namespace dissipeuler
