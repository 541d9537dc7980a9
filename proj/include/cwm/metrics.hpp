#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "cwm/em.hpp"
#include "cwm/error.hpp"
#include "cwm/linalg.hpp"
#include "cwm/model.hpp"

namespace cwm {

/// det(W) / det(T) on z = (x, y), with W the pooled within-group scatter and
/// T the total scatter. Rows labeled kNoise are excluded.
inline double wilks_lambda(const Dataset& data, const std::vector<int>& labels) {
  require(static_cast<Index>(labels.size()) == data.size(), ErrorCode::dimension_mismatch, "wilks_lambda: label count differs");
  const Index d = data.dim();
  std::vector<Index> rows;
  int groups = 0;
  for (Index n = 0; n < data.size(); ++n) {
    const int l = labels[static_cast<size_t>(n)];
    if (l == kNoise) continue;
    require(l >= 0, ErrorCode::invalid_argument, "wilks_lambda: invalid label");
    rows.push_back(n);
    groups = std::max(groups, l + 1);
  }
  Matrix z(static_cast<Index>(rows.size()), d + 1);
  for (Index i = 0; i < z.rows(); ++i) {
    z.row(i).head(d) = data.x.row(rows[static_cast<size_t>(i)]);
    z(i, d) = data.y(rows[static_cast<size_t>(i)]);
  }
  const Matrix centered = z.rowwise() - z.colwise().mean();
  const Matrix t = centered.transpose() * centered;
  Matrix w = Matrix::Zero(d + 1, d + 1);
  for (int g = 0; g < groups; ++g) {
    std::vector<Index> members;
    for (Index i = 0; i < z.rows(); ++i) {
      if (labels[static_cast<size_t>(rows[static_cast<size_t>(i)])] == g) members.push_back(i);
    }
    if (members.empty()) continue;
    Matrix zg(static_cast<Index>(members.size()), d + 1);
    for (Index i = 0; i < zg.rows(); ++i) zg.row(i) = z.row(members[static_cast<size_t>(i)]);
    const Matrix cg = zg.rowwise() - zg.colwise().mean();
    w += cg.transpose() * cg;
  }
  auto ft = Cholesky::try_factor(t);
  require(ft.has_value(), ErrorCode::degenerate_fit, "wilks_lambda: total scatter is singular");
  auto fw = Cholesky::try_factor(w);
  if (!fw) return 0.0;
  return std::clamp(std::exp(fw->log_det() - ft->log_det()), 0.0, 1.0);
}

/// Root-mean-square gap between y and the posterior-weighted local linear predictions.
inline double iwf(const Dataset& data, const CwmModel& model) {
  double ss = 0.0;
  for (Index n = 0; n < data.size(); ++n) {
    const Vector x = data.row(n);
    const Vector p = posterior(model, x, data.y(n));
    double pred = 0.0;
    for (Index g = 0; g < model.groups(); ++g) pred += p(g) * model.component(g).y_conditional.map(x);
    ss += (data.y(n) - pred) * (data.y(n) - pred);
  }
  return std::sqrt(ss / static_cast<double>(data.size()));
}

struct Misclassification {
  double eta = 0.0;
  /// permutation[k] is the true class matched to predicted class k.
  std::vector<int> permutation;
  /// Rows are true classes, columns aligned predicted classes; a trailing
  /// row and column hold noise when either labeling contains it.
  Eigen::MatrixXi confusion;
  bool has_noise = false;
};

/// Error rate minimized over relabelings of the predicted groups. Noise is a
/// fixed class that only matches noise. Ties keep the lexicographically first
/// permutation, so the identity wins when it is optimal.
inline Misclassification misclassification(const std::vector<int>& truth, const std::vector<int>& predicted, int groups) {
  require(truth.size() == predicted.size(), ErrorCode::dimension_mismatch, "misclassification: length mismatch");
  require(!truth.empty(), ErrorCode::invalid_argument, "misclassification: empty labels");
  int k = groups;
  bool noise = false;
  for (size_t i = 0; i < truth.size(); ++i) {
    for (int l : {truth[i], predicted[i]}) {
      require(l >= kNoise, ErrorCode::invalid_argument, "misclassification: invalid label");
      if (l == kNoise) noise = true;
      else k = std::max(k, l + 1);
    }
  }
  require(k <= 8, ErrorCode::invalid_argument, "misclassification: more than 8 groups");
  const int size = k + (noise ? 1 : 0);
  auto slot = [k](int l) { return l == kNoise ? k : l; };
  Eigen::MatrixXi raw = Eigen::MatrixXi::Zero(size, size);
  for (size_t i = 0; i < truth.size(); ++i) ++raw(slot(truth[i]), slot(predicted[i]));

  std::vector<int> perm(static_cast<size_t>(k));
  std::iota(perm.begin(), perm.end(), 0);
  std::vector<int> best = perm;
  int best_hits = -1;
  do {
    int hits = noise ? raw(k, k) : 0;
    for (int p = 0; p < k; ++p) hits += raw(perm[static_cast<size_t>(p)], p);
    if (hits > best_hits) {
      best_hits = hits;
      best = perm;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));

  Misclassification out;
  out.permutation = best;
  out.has_noise = noise;
  out.confusion = Eigen::MatrixXi::Zero(size, size);
  for (int t = 0; t < size; ++t) {
    for (int p = 0; p < size; ++p) {
      const int col = p == k ? k : best[static_cast<size_t>(p)];
      out.confusion(t, col) = raw(t, p);
    }
  }
  out.eta = 1.0 - static_cast<double>(best_hits) / static_cast<double>(truth.size());
  return out;
}

/// Free-parameter count of a fitted model.
inline Index parameter_count(Variant variant, Index groups, Index d, bool dof_estimated, bool equal_weights) {
  const Index cov = d * (d + 1) / 2;
  Index per = 0;
  switch (variant) {
  case Variant::gaussian_cwm: per = d + cov + d + 2; break;
  case Variant::t_cwm: per = d + cov + d + 2 + (dof_estimated ? 2 : 0); break;
  case Variant::fmg: per = (d + 1) * (d + 4) / 2; break;
  case Variant::fmt: per = (d + 1) * (d + 4) / 2 + (dof_estimated ? 1 : 0); break;
  case Variant::fmr:
  case Variant::fmrc: per = d + 2; break;
  }
  Index total = groups * per;
  if (variant == Variant::fmrc) total += (groups - 1) * (d + 1);
  else if (!equal_weights) total += groups - 1;
  return total;
}

inline Index parameter_count(const FitResult& fit) {
  return parameter_count(fit.config.variant, fit.config.groups, fit.model.dim(), fit.config.dof.estimated(), fit.config.equal_weights);
}

/// -2 loglik + k ln N, smaller is better. FMR/FMRC use the conditional likelihood.
inline double bic(const FitResult& fit, Index n) {
  require(n >= 1, ErrorCode::invalid_argument, "bic: N must be positive");
  return -2.0 * fit.loglik() + static_cast<double>(parameter_count(fit)) * std::log(static_cast<double>(n));
}

/// Maximized log-likelihood of a single Gaussian on the rows of x.
inline double gaussian_x_loglik(const Dataset& data) {
  const Matrix centered = data.x.rowwise() - data.x.colwise().mean();
  const double n = static_cast<double>(data.size());
  const Matrix cov = centered.transpose() * centered / n;
  const Cholesky f(cov);
  return -0.5 * n * (static_cast<double>(data.dim()) * (kLogTwoPi + 1.0) + f.log_det());
}

/// BIC on the joint (x, y) scale. FMR and FMRC do not model x, so they are
/// completed with one Gaussian x-law shared by all groups, which is the CWM
/// they are nested in. Other variants return `bic` unchanged.
inline double bic_joint_scale(const FitResult& fit, const Dataset& data) {
  const Variant v = fit.config.variant;
  if (v != Variant::fmr && v != Variant::fmrc) return bic(fit, data.size());
  const Index d = data.dim();
  const double ll = fit.loglik() + gaussian_x_loglik(data);
  const Index k = parameter_count(fit) + d + d * (d + 1) / 2;
  return -2.0 * ll + static_cast<double>(k) * std::log(static_cast<double>(data.size()));
}

struct MetricsReport {
  double wilks_lambda = 1.0;
  double iwf = 0.0;
  std::optional<double> misclassification_rate;
  double bic = 0.0;
  double bic_joint_scale = 0.0;
  std::optional<Eigen::MatrixXi> confusion;
  std::vector<int> permutation_used;
  std::vector<int> predicted;
};

/// All evaluation quantities for a fit on `data`; η and the confusion matrix
/// only when `data` carries labels.
inline MetricsReport evaluate(const Dataset& data, const FitResult& fit) {
  MetricsReport r;
  r.predicted = classify(fit.model, data);
  r.wilks_lambda = wilks_lambda(data, r.predicted);
  r.iwf = iwf(data, fit.model);
  r.bic = bic(fit, data.size());
  r.bic_joint_scale = bic_joint_scale(fit, data);
  if (data.labels) {
    const auto m = misclassification(*data.labels, r.predicted, static_cast<int>(fit.model.groups()));
    r.misclassification_rate = m.eta;
    r.confusion = m.confusion;
    r.permutation_used = m.permutation;
  }
  return r;
}

} // namespace cwm
