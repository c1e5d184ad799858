#pragma once

#include <span>
#include <vector>

namespace cashbench {

double normal_cdf(double x);
// Inverse standard normal CDF, accurate to ~1e-14 (rational approximation
// plus one Newton refinement).
double normal_quantile(double p);

// Regularized incomplete beta I_x(a, b).
double incomplete_beta(double a, double b, double x);

// Distribution tails used for inference.
double f_cdf(double x, double d1, double d2);
double f_sf(double x, double d1, double d2);
double student_t_sf_two_sided(double t, double df);

// Type-7 (linear interpolation) quantile of unsorted data, q in [0,1].
double quantile_type7(std::span<const double> values, double q);

double weighted_mean(std::span<const double> x, std::span<const double> w);
double weighted_var(std::span<const double> x, std::span<const double> w);

// Compensated (Kahan) summation; order-stable accumulator.
class KahanSum {
 public:
  void add(double x);
  double value() const { return sum_; }

 private:
  double sum_ = 0.0;
  double carry_ = 0.0;
};

}  // namespace cashbench
