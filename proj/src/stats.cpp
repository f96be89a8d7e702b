#include "dissipeuler/stats.hpp"

#include <boost/math/distributions/normal.hpp>
#include <cmath>
#include <stdexcept>

namespace dissipeuler {

void CompensatedSum::add(double x) {
  const double t = sum_ + x;
  if (std::abs(sum_) >= std::abs(x))
    compensation_ += (sum_ - t) + x;
  else
    compensation_ += (x - t) + sum_;
  sum_ = t;
}

double compensated_sum(std::span<const double> xs) {
  CompensatedSum s;
  for (double x : xs) s.add(x);
  return s.value();
}

double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) throw std::invalid_argument("normal_quantile: p must lie in (0, 1)");
  return boost::math::quantile(boost::math::normal_distribution<double>(), p);
}

Estimate estimate_mean(std::span<const double> xs, double confidence) {
  if (xs.empty()) throw std::invalid_argument("estimate_mean: no samples");
  Estimate e;
  e.samples = xs.size();
  e.mean = compensated_sum(xs) / static_cast<double>(xs.size());
  if (xs.size() > 1) {
    e.std_error = std::sqrt(sample_variance(xs) / static_cast<double>(xs.size()));
    e.half_width = normal_quantile(0.5 + 0.5 * confidence) * e.std_error;
  }
  return e;
}

double sample_variance(std::span<const double> xs) {
  if (xs.size() < 2) return 0.0;
  const double mean = compensated_sum(xs) / static_cast<double>(xs.size());
  CompensatedSum s;
  for (double x : xs) s.add((x - mean) * (x - mean));
  return s.value() / static_cast<double>(xs.size() - 1);
}

namespace {

double central_moment(std::span<const double> xs, int order, double mean) {
  CompensatedSum s;
  for (double x : xs) s.add(std::pow(x - mean, order));
  return s.value() / static_cast<double>(xs.size());
}

}  // namespace

double sample_skewness(std::span<const double> xs) {
  const double mean = compensated_sum(xs) / static_cast<double>(xs.size());
  const double m2 = central_moment(xs, 2, mean);
  return central_moment(xs, 3, mean) / std::pow(m2, 1.5);
}

double sample_excess_kurtosis(std::span<const double> xs) {
  const double mean = compensated_sum(xs) / static_cast<double>(xs.size());
  const double m2 = central_moment(xs, 2, mean);
  return central_moment(xs, 4, mean) / (m2 * m2) - 3.0;
}

double observed_order(std::span<const double> h, std::span<const double> err) {
  if (h.size() != err.size() || h.size() < 2) throw std::invalid_argument("observed_order: need matching sizes >= 2");
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  const double n = static_cast<double>(h.size());
  for (std::size_t i = 0; i < h.size(); ++i) {
    const double x = std::log(h[i]);
    const double y = std::log(err[i]);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

}  // namespace dissipeuler
