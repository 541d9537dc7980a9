#pragma once

#include <cmath>
#include <numbers>
#include <utility>

#include "cwm/error.hpp"
#include "cwm/linalg.hpp"
#include "cwm/special.hpp"

namespace cwm {

/// Multivariate normal N_q(mean, covariance). The covariance is factorized on
/// construction, which also validates it.
class GaussianParams {
public:
  GaussianParams(Vector mean, const Matrix& covariance) : mean_(std::move(mean)), factor_(covariance) {
    require(mean_.size() == factor_.dim(), ErrorCode::dimension_mismatch, "GaussianParams: mean and covariance dimensions differ");
    require(mean_.allFinite(), ErrorCode::invalid_argument, "GaussianParams: non-finite mean");
  }

  Index dim() const { return mean_.size(); }
  const Vector& mean() const { return mean_; }
  const Matrix& covariance() const { return factor_.matrix(); }
  const Cholesky& factor() const { return factor_; }

private:
  Vector mean_;
  Cholesky factor_;
};

/// Multivariate Student-t t_q(location, scale, dof).
class StudentParams {
public:
  StudentParams(Vector location, const Matrix& scale, double dof)
      : location_(std::move(location)), factor_(scale), dof_(dof) {
    require(location_.size() == factor_.dim(), ErrorCode::dimension_mismatch, "StudentParams: location and scale dimensions differ");
    require(location_.allFinite(), ErrorCode::invalid_argument, "StudentParams: non-finite location");
    require(dof_ > 0.0 && std::isfinite(dof_), ErrorCode::invalid_argument, "StudentParams: dof must be positive");
  }

  Index dim() const { return location_.size(); }
  const Vector& location() const { return location_; }
  const Matrix& scale() const { return factor_.matrix(); }
  const Cholesky& factor() const { return factor_; }
  double dof() const { return dof_; }

private:
  Vector location_;
  Cholesky factor_;
  double dof_;
};

/// Affine predictor x -> slope'x + intercept.
struct LinearMap {
  Vector slope;
  double intercept = 0.0;

  Index dim() const { return slope.size(); }

  double operator()(const Vector& x) const {
    require(x.size() == slope.size(), ErrorCode::dimension_mismatch, "LinearMap: dimension mismatch");
    return slope.dot(x) + intercept;
  }
};

inline double mahalanobis_sq(const Vector& z, const Vector& center, const Cholesky& factor) {
  require(z.size() == center.size() && z.size() == factor.dim(), ErrorCode::dimension_mismatch,
          "mahalanobis_sq: dimension mismatch");
  return factor.quad_form(z - center);
}

inline double mahalanobis_sq(const Vector& z, const GaussianParams& p) { return mahalanobis_sq(z, p.mean(), p.factor()); }

inline double mahalanobis_sq(const Vector& z, const StudentParams& p) {
  return mahalanobis_sq(z, p.location(), p.factor());
}

inline constexpr double kLogTwoPi = 1.8378770664093454835606594728112;

/// Log-density of N_q given a precomputed squared Mahalanobis distance.
inline double gaussian_log_kernel(double delta, double log_det, Index q) {
  return -0.5 * (static_cast<double>(q) * kLogTwoPi + log_det + delta);
}

/// Log-density of t_q given a precomputed squared Mahalanobis distance.
///
/// Uses ν^{ν/2} / (ν+δ)^{(ν+q)/2} = ν^{-q/2} (1+δ/ν)^{-(ν+q)/2} so that very
/// large dof stays accurate.
inline double student_log_kernel(double delta, double log_det, Index q, double dof) {
  const double qd = static_cast<double>(q);
  return log_gamma(0.5 * (dof + qd)) - log_gamma(0.5 * dof) - 0.5 * qd * std::log(dof * std::numbers::pi) -
         0.5 * log_det - 0.5 * (dof + qd) * std::log1p(delta / dof);
}

inline double gaussian_logpdf(const Vector& z, const GaussianParams& p) {
  return gaussian_log_kernel(mahalanobis_sq(z, p), p.factor().log_det(), p.dim());
}

inline double student_logpdf(const Vector& z, const StudentParams& p) {
  return student_log_kernel(mahalanobis_sq(z, p), p.factor().log_det(), p.dim(), p.dof());
}

/// Univariate N(mean, variance) log-density.
inline double gaussian_logpdf_1d(double y, double mean, double variance) {
  require(variance > 0.0, ErrorCode::invalid_argument, "gaussian_logpdf_1d: variance must be positive");
  const double r = y - mean;
  return gaussian_log_kernel(r * r / variance, std::log(variance), 1);
}

/// Univariate t(location, scale², dof) log-density.
inline double student_logpdf_1d(double y, double location, double scale_sq, double dof) {
  require(scale_sq > 0.0, ErrorCode::invalid_argument, "student_logpdf_1d: scale must be positive");
  require(dof > 0.0, ErrorCode::invalid_argument, "student_logpdf_1d: dof must be positive");
  const double r = y - location;
  return student_log_kernel(r * r / scale_sq, std::log(scale_sq), 1, dof);
}

} // namespace cwm
