#pragma once

#include <boost/math/special_functions/digamma.hpp>
#include <boost/math/special_functions/gamma.hpp>

#include <cmath>
#include <string>

#include "cwm/error.hpp"

namespace cwm {

// Special functions are backed by Boost.Math. Unlike std::lgamma, the Boost
// implementations do not write the global signgam, so they are safe to call
// from concurrent fits.

/// ln Γ(x) for x > 0.
inline double log_gamma(double x) {
  require(x > 0.0 && std::isfinite(x), ErrorCode::invalid_argument, "log_gamma: argument must be positive and finite");
  return boost::math::lgamma(x);
}

inline double digamma(double x) {
  require(x > 0.0 && std::isfinite(x), ErrorCode::invalid_argument, "digamma: argument must be positive and finite");
  return boost::math::digamma(x);
}

/// P(X <= x) for X ~ chi-squared(dof).
inline double chi_sq_cdf(double x, int dof) {
  require(dof >= 1, ErrorCode::invalid_argument, "chi_sq_cdf: dof must be >= 1");
  if (x <= 0.0) return 0.0;
  return boost::math::gamma_p(0.5 * dof, 0.5 * x);
}

/// Quantile of order p of the chi-squared distribution with `dof` degrees of freedom.
inline double chi_sq_quantile(double p, int dof) {
  require(p > 0.0 && p < 1.0, ErrorCode::invalid_argument, "chi_sq_quantile: p must lie in (0,1)");
  require(dof >= 1, ErrorCode::invalid_argument, "chi_sq_quantile: dof must be >= 1");
  return 2.0 * boost::math::gamma_p_inv(0.5 * dof, p);
}

/// Point exceeded with probability `alpha`; stays accurate when alpha is far
/// below machine epsilon, where 1 - alpha would round to 1.
inline double chi_sq_upper_quantile(double alpha, int dof) {
  require(alpha > 0.0 && alpha < 1.0, ErrorCode::invalid_argument, "chi_sq_upper_quantile: alpha must lie in (0,1)");
  require(dof >= 1, ErrorCode::invalid_argument, "chi_sq_upper_quantile: dof must be >= 1");
  return 2.0 * boost::math::gamma_q_inv(0.5 * dof, alpha);
}

} // namespace cwm
