#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>

#include "cwm/error.hpp"

namespace cwm {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using Index = Eigen::Index;

/// Lower-triangular factorization A = L L' of a symmetric positive-definite matrix.
///
/// A pivot smaller than 1e-12 times the largest diagonal entry is treated as a
/// failure, so this doubles as the positive-definiteness test for every
/// covariance and scale matrix in the library.
class Cholesky {
public:
  static constexpr double kPivotTolerance = 1e-12;

  explicit Cholesky(const Matrix& a) {
    auto f = try_factor(a);
    if (!f) fail(ErrorCode::not_positive_definite, "matrix is not symmetric positive-definite");
    *this = std::move(*f);
  }

  static std::optional<Cholesky> try_factor(const Matrix& a) {
    if (a.rows() != a.cols() || a.rows() == 0) return std::nullopt;
    if (!a.allFinite()) return std::nullopt;
    const Index n = a.rows();
    const double scale = a.cwiseAbs().maxCoeff();
    if ((a - a.transpose()).cwiseAbs().maxCoeff() > 1e-10 * std::max(scale, 1.0)) return std::nullopt;

    Matrix sym = 0.5 * (a + a.transpose());
    const double max_diag = sym.diagonal().maxCoeff();
    if (!(max_diag > 0.0)) return std::nullopt;

    Matrix l = Matrix::Zero(n, n);
    for (Index j = 0; j < n; ++j) {
      double pivot = sym(j, j) - l.row(j).head(j).squaredNorm();
      if (!(pivot > kPivotTolerance * max_diag)) return std::nullopt;
      const double ljj = std::sqrt(pivot);
      l(j, j) = ljj;
      for (Index i = j + 1; i < n; ++i) {
        l(i, j) = (sym(i, j) - l.row(i).head(j).dot(l.row(j).head(j))) / ljj;
      }
    }
    Cholesky out;
    out.matrix_ = std::move(sym);
    out.lower_ = std::move(l);
    out.log_det_ = 2.0 * out.lower_.diagonal().array().log().sum();
    return out;
  }

  Index dim() const { return matrix_.rows(); }
  const Matrix& matrix() const { return matrix_; }
  const Matrix& lower() const { return lower_; }
  double log_det() const { return log_det_; }

  /// r' A^{-1} r by forward substitution.
  double quad_form(const Vector& r) const {
    if (r.size() != dim()) fail(ErrorCode::dimension_mismatch, "quad_form: dimension mismatch");
    return lower_.triangularView<Eigen::Lower>().solve(r).squaredNorm();
  }

  Vector solve(const Vector& b) const {
    if (b.size() != dim()) fail(ErrorCode::dimension_mismatch, "solve: dimension mismatch");
    Vector t = lower_.triangularView<Eigen::Lower>().solve(b);
    return lower_.transpose().triangularView<Eigen::Upper>().solve(t);
  }

  Matrix solve(const Matrix& b) const {
    if (b.rows() != dim()) fail(ErrorCode::dimension_mismatch, "solve: dimension mismatch");
    Matrix t = lower_.triangularView<Eigen::Lower>().solve(b);
    return lower_.transpose().triangularView<Eigen::Upper>().solve(t);
  }

  Matrix inverse() const { return solve(Matrix::Identity(dim(), dim()).eval()); }

private:
  Cholesky() = default;

  Matrix matrix_;
  Matrix lower_;
  double log_det_ = 0.0;
};

inline bool approx_equal(const Matrix& a, const Matrix& b, double tol) {
  return a.rows() == b.rows() && a.cols() == b.cols() && (a - b).cwiseAbs().maxCoeff() <= tol;
}

/// Numerically stable log(sum(exp(v))).
inline double log_sum_exp(const Vector& v) {
  const double m = v.maxCoeff();
  if (!std::isfinite(m)) return m;
  return m + std::log((v.array() - m).exp().sum());
}

} // namespace cwm
