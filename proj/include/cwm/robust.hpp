#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "cwm/em.hpp"
#include "cwm/error.hpp"
#include "cwm/linalg.hpp"
#include "cwm/metrics.hpp"
#include "cwm/model.hpp"
#include "cwm/special.hpp"

namespace cwm {

/// Space in which the outlier rule measures distances.
enum class RuleSpace { joint, x_only };

struct RobustConfig {
  double alpha = 0.05;
  Variant refit_variant = Variant::t_cwm;
  /// Shared by the detector (always t_cwm) and the refit; `variant` is overridden.
  FitConfig fit_config;
  RuleSpace space = RuleSpace::joint;
  /// Re-test retained rows against the refit in step 3.
  bool recheck = true;

  void validate() const {
    require(alpha > 0.0 && alpha < 1.0, ErrorCode::invalid_argument, "robust: alpha must lie in (0, 1)");
    require(refit_variant == Variant::gaussian_cwm || refit_variant == Variant::t_cwm, ErrorCode::invalid_argument,
            "robust: refit variant must be gaussian_cwm or t_cwm");
    fit_config.validate();
  }
};

struct RobustResult {
  /// Rows flagged on the full-data fit, ascending.
  std::vector<Index> outlier_indices;
  /// Retained rows flagged again under the trimmed refit, ascending.
  std::vector<Index> recheck_indices;
  FitResult detector_fit;
  FitResult trimmed_fit;
  std::vector<int> final_labels;
  std::optional<Misclassification> confusion;
  std::vector<std::string> warnings;
};

namespace detail {

/// Scale matrix in covariance form; t scales with ν <= 2 are returned as-is.
inline Matrix covariance_form(const Matrix& scale, std::optional<double> dof, std::vector<std::string>* warnings) {
  if (!dof || std::isinf(*dof)) return scale;
  if (*dof > 2.0) return scale * (*dof / (*dof - 2.0));
  if (warnings) warnings->push_back("dof <= 2: scale used without covariance conversion");
  return scale;
}

struct RuleGroup {
  Vector center;
  Cholesky factor;
};

inline std::vector<RuleGroup> rule_groups(const CwmModel& model, RuleSpace space, std::vector<std::string>* warnings) {
  require(has_marginal(model.variant()), ErrorCode::invalid_argument, "outlier rule needs a model with x-marginals");
  std::vector<RuleGroup> out;
  for (const auto& c : model.components()) {
    const Marginal& m = *c.x_marginal;
    const Vector& mu = marginal_center(m);
    const std::optional<double> nu = marginal_dof(m);
    if (space == RuleSpace::x_only) {
      out.push_back({mu, Cholesky(covariance_form(marginal_factor(m).matrix(), nu, warnings))});
      continue;
    }
    Matrix joint;
    if (model.variant() == Variant::fmt) {
      // The stored pieces recompose the joint scale exactly; convert it once.
      joint = compose_joint(mu, marginal_factor(m).matrix(), c.y_conditional.map, c.y_conditional.noise_var).second;
      joint = covariance_form(joint, nu, warnings);
    } else {
      const Matrix cx = covariance_form(marginal_factor(m).matrix(), nu, warnings);
      const double s = covariance_form(Matrix::Constant(1, 1, c.y_conditional.noise_var), c.y_conditional.dof, warnings)(0, 0);
      joint = compose_joint(mu, cx, c.y_conditional.map, s).second;
    }
    Vector center(mu.size() + 1);
    center.head(mu.size()) = mu;
    center(mu.size()) = c.y_conditional.map(mu);
    out.push_back({center, Cholesky(joint)});
  }
  return out;
}

inline std::vector<std::string> dedupe(std::vector<std::string> v) {
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end()), v.end());
  return v;
}

} // namespace detail

/// Rows whose squared Mahalanobis distance to their hard-assigned group
/// exceeds the (1 - alpha) chi-squared quantile with q = d + 1 (joint) or d.
inline std::vector<Index> detect_outliers(const Dataset& data, const CwmModel& model, double alpha, RuleSpace space = RuleSpace::joint,
                                          std::vector<std::string>* warnings = nullptr) {
  require(alpha > 0.0 && alpha < 1.0, ErrorCode::invalid_argument, "detect_outliers: alpha must lie in (0, 1)");
  const Index d = data.dim();
  const Index q = space == RuleSpace::joint ? d + 1 : d;
  const double threshold = chi_sq_upper_quantile(alpha, static_cast<int>(q));
  const auto groups = detail::rule_groups(model, space, warnings);
  const std::vector<int> hard = classify(model, data);
  std::vector<Index> flagged;
  Vector z(q);
  for (Index n = 0; n < data.size(); ++n) {
    z.head(d) = data.x.row(n).transpose();
    if (space == RuleSpace::joint) z(d) = data.y(n);
    const auto& g = groups[static_cast<size_t>(hard[static_cast<size_t>(n)])];
    if (g.factor.quad_form(z - g.center) > threshold) flagged.push_back(n);
  }
  return flagged;
}

/// Steps 2 and 3 given a detector fit on the full data: refit on the rows
/// the rule keeps, then label every row with its refit group or kNoise.
inline RobustResult robust_refit(const Dataset& data, FitResult detector, const RobustConfig& config) {
  config.validate();
  const Index G = config.fit_config.groups, d = data.dim();
  std::vector<std::string> warnings;
  std::vector<Index> outliers = detect_outliers(data, detector.model, config.alpha, config.space, &warnings);

  const Index kept_rows = data.size() - static_cast<Index>(outliers.size());
  require(kept_rows >= G * (d + 2), ErrorCode::degenerate_fit,
          "robust_fit: " + std::to_string(kept_rows) + " rows left after trimming, need at least " + std::to_string(G * (d + 2)));
  const Dataset trimmed = data.without(outliers);
  FitConfig refit_cfg = config.fit_config;
  refit_cfg.variant = config.refit_variant;
  if (refit_cfg.init == InitKind::given_labels) {
    std::vector<int> kept;
    size_t next = 0;
    for (Index n = 0; n < data.size(); ++n) {
      if (next < outliers.size() && outliers[next] == n) ++next;
      else kept.push_back(refit_cfg.given_labels.at(static_cast<size_t>(n)));
    }
    refit_cfg.given_labels = std::move(kept);
  }
  FitResult refit = fit(trimmed, refit_cfg);

  std::vector<int> labels = classify(refit.model, data);
  for (Index n : outliers) labels[static_cast<size_t>(n)] = kNoise;
  std::vector<Index> recheck;
  if (config.recheck) {
    for (Index n : detect_outliers(data, refit.model, config.alpha, config.space, &warnings)) {
      if (labels[static_cast<size_t>(n)] != kNoise) {
        labels[static_cast<size_t>(n)] = kNoise;
        recheck.push_back(n);
      }
    }
  }

  std::optional<Misclassification> confusion;
  if (data.labels) confusion = misclassification(*data.labels, labels, static_cast<int>(G));
  return RobustResult{std::move(outliers), std::move(recheck), std::move(detector), std::move(refit),
                      std::move(labels),   std::move(confusion), detail::dedupe(std::move(warnings))};
}

/// Full-data t-CWM fit used as the outlier detector.
inline FitResult fit_detector(const Dataset& data, const RobustConfig& config) {
  config.validate();
  FitConfig cfg = config.fit_config;
  cfg.variant = Variant::t_cwm;
  return fit(data, cfg);
}

/// Detect with a t-CWM on all rows, refit on the retained rows, then label
/// every row with its refit group or kNoise. Retained rows that violate the
/// rule under the refit also become noise.
inline RobustResult robust_fit(const Dataset& data, const RobustConfig& config) {
  return robust_refit(data, fit_detector(data, config), config);
}

} // namespace cwm
