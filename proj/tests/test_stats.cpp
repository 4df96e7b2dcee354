#include <catch2/catch_amalgamated.hpp>

#include "kcforge/stats.hpp"

using namespace kcforge;

TEST_CASE("t test reproduces the hand-computed case") {
  // a=[1,2,3], b=[4,5,6]: pooled variance 1, SE = sqrt(2/3),
  // t = -3/sqrt(2/3) = -3.674234614174767, df = 4
  const ComparisonResult result = two_sample_t_test({1, 2, 3}, {4, 5, 6});
  CHECK_THAT(result.t_statistic,
             Catch::Matchers::WithinAbs(-3.674234614174767, 1e-9));
  CHECK(result.degrees_of_freedom == 4);
  CHECK(result.mean_a == 2.0);
  CHECK(result.mean_b == 5.0);
  // two-sided p for |t|=3.6742, df=4 sits near 0.021
  CHECK(result.p_value > 0.020);
  CHECK(result.p_value < 0.023);
}

TEST_CASE("identical samples give t = 0 and p = 1") {
  const ComparisonResult result =
      two_sample_t_test({0.4, 0.4, 0.4}, {0.4, 0.4, 0.4});
  CHECK(result.t_statistic == 0.0);
  CHECK(result.p_value == 1.0);
}

TEST_CASE("zero variance with unequal means is undefined") {
  CHECK_THROWS_AS(two_sample_t_test({1, 1, 1}, {2, 2, 2}), DomainError);
}

TEST_CASE("p recovers the 0.05 critical value at t=2.101, df=18") {
  // choose samples of size 10 each whose t statistic is exactly 2.101:
  // means 0 and -d, both variances 1 -> t = d / sqrt(2/10)
  const double d = 2.101 * std::sqrt(2.0 / 10.0);
  std::vector<double> a, b;
  // nine symmetric points plus a balancing one give mean 0, variance 1
  const std::vector<double> base = {-1.5, -1.0, -0.5, -0.25, 0.0,
                                    0.25, 0.5,  1.0,  1.5};
  for (double x : base) {
    a.push_back(x);
    b.push_back(x - d);
  }
  a.push_back(0.0);
  b.push_back(-d);
  // rescale both to unit sample variance so the pooled variance is 1
  double var = 0.0;
  for (double x : a) {
    var += x * x;
  }
  var /= static_cast<double>(a.size() - 1);
  const double scale = 1.0 / std::sqrt(var);
  for (auto& x : a) {
    x *= scale;
  }
  for (std::size_t i = 0; i < b.size(); ++i) {
    b[i] = a[i] - d;
  }
  const ComparisonResult result = two_sample_t_test(a, b);
  CHECK(result.degrees_of_freedom == 18);
  CHECK_THAT(result.t_statistic, Catch::Matchers::WithinAbs(2.101, 1e-9));
  CHECK_THAT(result.p_value, Catch::Matchers::WithinAbs(0.05, 1e-3));
}

TEST_CASE("swapping the samples negates t and keeps p") {
  const std::vector<double> a = {0.42, 0.44, 0.40, 0.43};
  const std::vector<double> b = {0.45, 0.47, 0.46, 0.44};
  const ComparisonResult ab = two_sample_t_test(a, b);
  const ComparisonResult ba = two_sample_t_test(b, a);
  CHECK(ab.t_statistic == -ba.t_statistic);
  CHECK(ab.p_value == ba.p_value);
  CHECK(ab.degrees_of_freedom == ba.degrees_of_freedom);
}

TEST_CASE("p decreases strictly as |t| grows at fixed df") {
  // push the two samples further apart while keeping their variances fixed
  double last_p = 1.1;
  double last_t = 0.0;
  for (double shift = 0.1; shift < 3.0; shift += 0.3) {
    std::vector<double> a = {0.0, 0.5, 1.0, 1.5, 2.0};
    std::vector<double> b;
    for (double x : a) {
      b.push_back(x + shift);
    }
    const ComparisonResult result = two_sample_t_test(a, b);
    CHECK(std::abs(result.t_statistic) > std::abs(last_t));
    CHECK(result.p_value < last_p);
    last_p = result.p_value;
    last_t = result.t_statistic;
  }
}

TEST_CASE("samples smaller than two are rejected") {
  CHECK_THROWS_AS(two_sample_t_test({1.0}, {1.0, 2.0}), ValidationError);
  CHECK_THROWS_AS(two_sample_t_test({1.0, 2.0}, {}), ValidationError);
}
