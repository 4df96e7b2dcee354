#pragma once

#include <cmath>
#include <string>
#include <vector>

#include <boost/math/distributions/students_t.hpp>

#include "kcforge/error.hpp"

namespace kcforge {

struct ComparisonResult {
  double t_statistic = 0.0;
  int degrees_of_freedom = 0;
  double p_value = 1.0;
  double mean_a = 0.0;
  double mean_b = 0.0;
};

namespace detail {

inline double mean(const std::vector<double>& values) {
  double sum = 0.0;
  for (const double v : values) {
    sum += v;
  }
  return sum / static_cast<double>(values.size());
}

inline double sum_sq_dev(const std::vector<double>& values, double mu) {
  double ss = 0.0;
  for (const double v : values) {
    ss += (v - mu) * (v - mu);
  }
  return ss;
}

}  // namespace detail

// Pooled-variance (Student) two-sample t test, two-sided p value via the
// t-distribution CDF. df = |a| + |b| - 2. t is signed as mean(a) - mean(b).
inline ComparisonResult two_sample_t_test(const std::vector<double>& a,
                                          const std::vector<double>& b) {
  if (a.size() < 2 || b.size() < 2) {
    throw ValidationError("two_sample_t_test: both samples need >= 2 values");
  }
  ComparisonResult result;
  result.mean_a = detail::mean(a);
  result.mean_b = detail::mean(b);
  result.degrees_of_freedom = static_cast<int>(a.size() + b.size()) - 2;
  const double pooled_variance =
      (detail::sum_sq_dev(a, result.mean_a) +
       detail::sum_sq_dev(b, result.mean_b)) /
      static_cast<double>(result.degrees_of_freedom);
  if (pooled_variance == 0.0) {
    if (result.mean_a == result.mean_b) {
      result.t_statistic = 0.0;
      result.p_value = 1.0;
      return result;
    }
    throw DomainError(
        "two_sample_t_test: zero pooled variance with unequal means leaves "
        "the statistic undefined");
  }
  const double standard_error =
      std::sqrt(pooled_variance * (1.0 / static_cast<double>(a.size()) +
                                   1.0 / static_cast<double>(b.size())));
  result.t_statistic = (result.mean_a - result.mean_b) / standard_error;
  const boost::math::students_t distribution(result.degrees_of_freedom);
  result.p_value = 2.0 * boost::math::cdf(boost::math::complement(
                             distribution, std::abs(result.t_statistic)));
  return result;
}

}  // namespace kcforge
