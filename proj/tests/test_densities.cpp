#include <cmath>
#include <numbers>

#include <gtest/gtest.h>

#include "cwm/cwm.hpp"
#include "support.hpp"

using namespace cwm;

namespace {

// Regularized lower incomplete gamma by its power series; adequate for the
// moderate arguments used here.
long double series_gamma_p(long double a, long double x) {
  long double term = 1.0L / a, sum = term;
  for (int k = 1; k < 2000; ++k) {
    term *= x / (a + k);
    sum += term;
    if (term < sum * 1e-21L) break;
  }
  return sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

double bisect_chi_sq_quantile(double p, int dof) {
  long double lo = 0.0L, hi = 200.0L;
  for (int i = 0; i < 200; ++i) {
    const long double mid = 0.5L * (lo + hi);
    (series_gamma_p(0.5L * dof, 0.5L * mid) < p ? lo : hi) = mid;
  }
  return static_cast<double>(0.5L * (lo + hi));
}

Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<Index>(v.size()));
  Index i = 0;
  for (double x : v) out(i++) = x;
  return out;
}

} // namespace

TEST(Mahalanobis, IdentityIsSquaredNorm) {
  EXPECT_DOUBLE_EQ(mahalanobis_sq(vec({1, 1}), GaussianParams(vec({0, 0}), Matrix::Identity(2, 2))), 2.0);
}

TEST(Mahalanobis, ZeroAtCenter) {
  Rng rng(1);
  const Matrix s = test::random_spd(3, rng);
  const Vector mu = test::random_vector(3, rng);
  EXPECT_NEAR(mahalanobis_sq(mu, GaussianParams(mu, s)), 0.0, 1e-15);
}

TEST(Mahalanobis, DiagonalByHand) {
  Matrix s(2, 2);
  s << 2, 0, 0, 1;
  EXPECT_NEAR(mahalanobis_sq(vec({1, 0}), GaussianParams(vec({0, 0}), s)), 0.5, 1e-15);
}

TEST(Mahalanobis, RejectsIndefiniteMatrix) {
  Matrix s(2, 2);
  s << 1, 2, 2, 1;
  EXPECT_THROW(GaussianParams(vec({0, 0}), s), Error);
}

TEST(GaussianLogpdf, StandardNormalMode) {
  EXPECT_NEAR(gaussian_logpdf(vec({0}), GaussianParams(vec({0}), Matrix::Identity(1, 1))), -0.918938533204673, 1e-12);
  EXPECT_NEAR(gaussian_logpdf(vec({0, 0}), GaussianParams(vec({0, 0}), Matrix::Identity(2, 2))), -1.8378770664093453, 1e-12);
}

TEST(GaussianLogpdf, MatchesLongDoubleFormula) {
  EXPECT_NEAR(gaussian_logpdf(vec({1}), GaussianParams(vec({0}), Matrix::Constant(1, 1, 4.0))),
              static_cast<double>(test::ref_gaussian_logpdf(vec({1}), vec({0}), Matrix::Constant(1, 1, 4.0))), 1e-13);
  Rng rng(2);
  for (int t = 0; t < 50; ++t) {
    const Index q = 1 + static_cast<Index>(rng.below(4));
    const Matrix s = test::random_spd(q, rng);
    const Vector mu = test::random_vector(q, rng), z = test::random_vector(q, rng, 2.0);
    EXPECT_NEAR(gaussian_logpdf(z, GaussianParams(mu, s)), static_cast<double>(test::ref_gaussian_logpdf(z, mu, s)), 1e-11);
  }
}

TEST(StudentLogpdf, CauchyMode) {
  EXPECT_NEAR(student_logpdf(vec({0}), StudentParams(vec({0}), Matrix::Identity(1, 1), 1.0)), -std::log(std::numbers::pi), 1e-12);
}

TEST(StudentLogpdf, MatchesLongDoubleFormula) {
  EXPECT_NEAR(student_logpdf(vec({2}), StudentParams(vec({0}), Matrix::Identity(1, 1), 5.0)),
              static_cast<double>(test::ref_student_logpdf(vec({2}), vec({0}), Matrix::Identity(1, 1), 5.0L)), 1e-12);
  Rng rng(3);
  for (int t = 0; t < 50; ++t) {
    const Index q = 1 + static_cast<Index>(rng.below(4));
    const Matrix s = test::random_spd(q, rng);
    const Vector mu = test::random_vector(q, rng), z = test::random_vector(q, rng, 2.0);
    const double nu = rng.uniform(0.6, 40.0);
    EXPECT_NEAR(student_logpdf(z, StudentParams(mu, s, nu)), static_cast<double>(test::ref_student_logpdf(z, mu, s, nu)), 1e-10);
  }
}

TEST(StudentLogpdf, GaussianLimit) {
  Rng rng(4);
  for (int t = 0; t < 20; ++t) {
    const Matrix s = test::random_spd(2, rng);
    const Vector mu = test::random_vector(2, rng);
    const Vector z = mu + test::random_vector(2, rng, 0.7);
    // The exact gap grows like δ²/ν, so points stay within a few scale units.
    EXPECT_LT(std::abs(student_logpdf(z, StudentParams(mu, s, 1e6)) - gaussian_logpdf(z, GaussianParams(mu, s))), 1e-4);
    EXPECT_NEAR(student_logpdf(z, StudentParams(mu, s, 1e6)), static_cast<double>(test::ref_student_logpdf(z, mu, s, 1e6L)), 1e-9);
  }
}

TEST(StudentLogpdf, RejectsNonPositiveDof) {
  EXPECT_THROW(StudentParams(vec({0}), Matrix::Identity(1, 1), 0.0), Error);
}

TEST(LogGamma, KnownValues) {
  EXPECT_NEAR(log_gamma(1.0), 0.0, 1e-14);
  EXPECT_NEAR(log_gamma(0.5), 0.5723649429247001, 1e-13);
  EXPECT_NEAR(log_gamma(10.0), std::log(362880.0), 1e-12);
  EXPECT_THROW(log_gamma(0.0), Error);
}

TEST(Digamma, RecurrenceAndValue) {
  EXPECT_NEAR(digamma(1.0), -0.5772156649015329, 1e-13);
  for (double x : {0.3, 1.7, 12.5}) EXPECT_NEAR(digamma(x + 1.0) - digamma(x), 1.0 / x, 1e-12);
}

TEST(ChiSquared, QuantileAgainstIndependentBisection) {
  EXPECT_NEAR(chi_sq_quantile(0.95, 2), 5.991464547107979, 1e-9);
  EXPECT_NEAR(chi_sq_quantile(0.95, 2), bisect_chi_sq_quantile(0.95, 2), 1e-9);
  EXPECT_NEAR(chi_sq_quantile(0.5, 1), 0.45493642311957283, 1e-9);
  EXPECT_NEAR(chi_sq_quantile(0.5, 1), bisect_chi_sq_quantile(0.5, 1), 1e-9);
  for (int dof : {1, 2, 3, 5, 8}) {
    for (double p : {0.01, 0.5, 0.9, 0.99}) EXPECT_NEAR(chi_sq_quantile(p, dof), bisect_chi_sq_quantile(p, dof), 1e-7);
  }
}

TEST(ChiSquared, RoundTrip) {
  for (int dof = 1; dof <= 10; ++dof) {
    for (double p = 0.01; p < 1.0; p += 0.049) EXPECT_LT(std::abs(chi_sq_cdf(chi_sq_quantile(p, dof), dof) - p), 1e-8);
  }
  EXPECT_THROW(chi_sq_quantile(1.0, 2), Error);
}

TEST(ChiSquared, UpperQuantileTail) {
  for (int dof : {1, 2, 3}) EXPECT_NEAR(chi_sq_upper_quantile(0.05, dof), chi_sq_quantile(0.95, dof), 1e-9);
  // Two dof: upper tail is exp(-x/2), so the quantile is -2 ln alpha even far below epsilon.
  EXPECT_NEAR(chi_sq_upper_quantile(1e-300, 2), -2.0 * std::log(1e-300), 1e-9);
}

TEST(ChiSquared, TwoDofClosedForm) {
  for (double x : {0.1, 1.0, 4.0, 9.0}) EXPECT_NEAR(chi_sq_cdf(x, 2), 1.0 - std::exp(-0.5 * x), 1e-14);
}
