#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <string_view>
#include <type_traits>
#include <utility>
#include <variant>
#include <vector>

#include "cwm/densities.hpp"
#include "cwm/error.hpp"
#include "cwm/linalg.hpp"

namespace cwm {

/// Label value marking a row as noise. Group labels are 0-based internally and
/// 1-based in every external file format.
inline constexpr int kNoise = -1;

/// N observations of (x in R^d, y in R), optionally with true labels.
struct Dataset {
  Matrix x;
  Vector y;
  std::optional<std::vector<int>> labels;

  Dataset() = default;

  Dataset(Matrix x_in, Vector y_in, std::optional<std::vector<int>> labels_in = std::nullopt)
      : x(std::move(x_in)), y(std::move(y_in)), labels(std::move(labels_in)) {
    validate();
  }

  Index size() const { return y.size(); }
  Index dim() const { return x.cols(); }
  Vector row(Index n) const { return x.row(n).transpose(); }

  void validate() const {
    require(y.size() >= 1, ErrorCode::data_error, "dataset is empty");
    require(x.rows() == y.size(), ErrorCode::data_error, "dataset: x and y row counts differ");
    require(x.cols() >= 1, ErrorCode::data_error, "dataset: at least one predictor column is required");
    require(x.allFinite() && y.allFinite(), ErrorCode::data_error, "dataset contains non-finite values");
    if (labels) {
      require(static_cast<Index>(labels->size()) == y.size(), ErrorCode::data_error, "dataset: label count differs from row count");
      for (int l : *labels) require(l >= kNoise, ErrorCode::data_error, "dataset: invalid label");
    }
  }

  /// Rows whose index is not listed in `drop` (sorted or not).
  Dataset without(const std::vector<Index>& drop) const {
    std::vector<char> removed(static_cast<size_t>(size()), 0);
    for (Index i : drop) removed.at(static_cast<size_t>(i)) = 1;
    const Index kept = size() - static_cast<Index>(std::count(removed.begin(), removed.end(), 1));
    Matrix xs(kept, dim());
    Vector ys(kept);
    std::vector<int> ls;
    Index k = 0;
    for (Index n = 0; n < size(); ++n) {
      if (removed[static_cast<size_t>(n)]) continue;
      xs.row(k) = x.row(n);
      ys(k) = y(n);
      if (labels) ls.push_back((*labels)[static_cast<size_t>(n)]);
      ++k;
    }
    std::optional<std::vector<int>> out_labels;
    if (labels) out_labels = std::move(ls);
    return Dataset(std::move(xs), std::move(ys), std::move(out_labels));
  }
};

enum class Variant { gaussian_cwm, t_cwm, fmg, fmt, fmr, fmrc };

inline std::string_view to_string(Variant v) {
  switch (v) {
  case Variant::gaussian_cwm: return "gaussian_cwm";
  case Variant::t_cwm: return "t_cwm";
  case Variant::fmg: return "fmg";
  case Variant::fmt: return "fmt";
  case Variant::fmr: return "fmr";
  case Variant::fmrc: return "fmrc";
  }
  return "unknown";
}

inline Variant parse_variant(std::string_view s) {
  for (Variant v : {Variant::gaussian_cwm, Variant::t_cwm, Variant::fmg, Variant::fmt, Variant::fmr, Variant::fmrc}) {
    if (s == to_string(v)) return v;
  }
  fail(ErrorCode::invalid_argument, "unknown model variant: " + std::string(s));
}

/// Variants whose components carry an x-marginal.
inline bool has_marginal(Variant v) { return v != Variant::fmr && v != Variant::fmrc; }

/// Variants built from Student-t laws.
inline bool is_student(Variant v) { return v == Variant::t_cwm || v == Variant::fmt; }

using Marginal = std::variant<GaussianParams, StudentParams>;

/// Linear conditional law of y given x. Gaussian when `dof` is empty, Student-t otherwise.
struct Conditional {
  LinearMap map;
  double noise_var = 1.0;
  std::optional<double> dof;
};

struct Component {
  double weight = 1.0;
  std::optional<Marginal> x_marginal;
  Conditional y_conditional;
};

/// Multinomial-logistic gating coefficients for one component.
struct Gate {
  Vector w;
  double w0 = 0.0;
};

inline const Vector& marginal_center(const Marginal& m) {
  return std::visit([](const auto& p) -> const Vector& {
    if constexpr (std::is_same_v<std::decay_t<decltype(p)>, GaussianParams>) return p.mean();
    else return p.location();
  }, m);
}

inline const Cholesky& marginal_factor(const Marginal& m) {
  return std::visit([](const auto& p) -> const Cholesky& { return p.factor(); }, m);
}

inline std::optional<double> marginal_dof(const Marginal& m) {
  if (const auto* s = std::get_if<StudentParams>(&m)) return s->dof();
  return std::nullopt;
}

/// A fitted or hand-specified member of the cluster-weighted family.
///
/// Every variant is stored in the same component form: an optional x-marginal,
/// a linear conditional for y and a weight. FMG components are kept in their
/// equivalent linear-Gaussian CWM form. FMT components are kept in the
/// marginal/conditional form of the joint t law, where the conditional dof is
/// ν+d and the stored noise variance is the unscaled Σ_{2|1}; evaluation
/// applies the x-dependent factor (ν+δ(x))/(ν+d).
class CwmModel {
public:
  CwmModel(Variant variant, std::vector<Component> components, std::optional<std::vector<Gate>> gating = std::nullopt)
      : variant_(variant), components_(std::move(components)), gating_(std::move(gating)) {
    validate();
  }

  Variant variant() const { return variant_; }
  Index groups() const { return static_cast<Index>(components_.size()); }
  Index dim() const { return components_.front().y_conditional.map.dim(); }
  const std::vector<Component>& components() const { return components_; }
  const Component& component(Index g) const { return components_.at(static_cast<size_t>(g)); }
  const std::optional<std::vector<Gate>>& gating() const { return gating_; }

private:
  void validate() const {
    require(!components_.empty(), ErrorCode::invalid_argument, "model must have at least one component");
    const Index d = components_.front().y_conditional.map.dim();
    require(d >= 1, ErrorCode::invalid_argument, "model: predictor dimension must be >= 1");
    double total = 0.0;
    for (const auto& c : components_) {
      require(c.weight > 0.0 && c.weight <= 1.0 + 1e-12, ErrorCode::invalid_argument, "model: weights must lie in (0,1]");
      total += c.weight;
      const auto& cond = c.y_conditional;
      require(cond.map.dim() == d, ErrorCode::dimension_mismatch, "model: components disagree on predictor dimension");
      require(cond.noise_var > 0.0 && std::isfinite(cond.noise_var), ErrorCode::invalid_argument, "model: noise variance must be positive");
      require(std::isfinite(cond.map.intercept) && cond.map.slope.allFinite(), ErrorCode::invalid_argument, "model: non-finite regression coefficients");
      if (cond.dof) require(*cond.dof > 0.0, ErrorCode::invalid_argument, "model: conditional dof must be positive");

      const bool student_y = cond.dof.has_value();
      switch (variant_) {
      case Variant::gaussian_cwm:
      case Variant::fmg:
        require(c.x_marginal && std::holds_alternative<GaussianParams>(*c.x_marginal) && !student_y,
                ErrorCode::invalid_argument, "model: Gaussian variants need Gaussian marginal and conditional laws");
        break;
      case Variant::t_cwm:
        require(c.x_marginal && std::holds_alternative<StudentParams>(*c.x_marginal) && student_y,
                ErrorCode::invalid_argument, "model: t_cwm needs Student-t marginal and conditional laws");
        break;
      case Variant::fmt:
        require(c.x_marginal && std::holds_alternative<StudentParams>(*c.x_marginal) && student_y,
                ErrorCode::invalid_argument, "model: fmt needs Student-t marginal and conditional laws");
        require(std::abs(*cond.dof - (std::get<StudentParams>(*c.x_marginal).dof() + static_cast<double>(d))) < 1e-9,
                ErrorCode::invalid_argument, "model: fmt conditional dof must equal marginal dof + d");
        break;
      case Variant::fmr:
      case Variant::fmrc:
        require(!c.x_marginal && !student_y, ErrorCode::invalid_argument, "model: regression mixtures carry no x-marginal");
        break;
      }
      if (c.x_marginal) {
        require(marginal_center(*c.x_marginal).size() == d, ErrorCode::dimension_mismatch, "model: marginal dimension differs from d");
      }
    }
    require(std::abs(total - 1.0) <= 1e-12 * static_cast<double>(components_.size()) + 1e-12, ErrorCode::invalid_argument,
            "model: weights must sum to 1");
    require(gating_.has_value() == (variant_ == Variant::fmrc), ErrorCode::invalid_argument, "model: gating present iff variant is fmrc");
    if (gating_) {
      require(gating_->size() == components_.size(), ErrorCode::invalid_argument, "model: one gate per component");
      for (const auto& gate : *gating_) {
        require(gate.w.size() == d && gate.w.allFinite() && std::isfinite(gate.w0), ErrorCode::invalid_argument, "model: invalid gate");
      }
      require(gating_->front().w.isZero(0.0) && gating_->front().w0 == 0.0, ErrorCode::invalid_argument,
              "model: the first gate is the zero baseline");
    }
  }

  Variant variant_;
  std::vector<Component> components_;
  std::optional<std::vector<Gate>> gating_;
};

/// Log multinomial-logistic gating probabilities log p(Ω_g | x).
inline Vector gating_log_probs(const std::vector<Gate>& gates, const Vector& x) {
  Vector s(static_cast<Index>(gates.size()));
  for (size_t g = 0; g < gates.size(); ++g) s(static_cast<Index>(g)) = gates[g].w.dot(x) + gates[g].w0;
  return s.array() - log_sum_exp(s);
}

inline double marginal_logpdf(const Marginal& m, const Vector& x) {
  return std::visit([&](const auto& p) {
    if constexpr (std::is_same_v<std::decay_t<decltype(p)>, GaussianParams>) return gaussian_logpdf(x, p);
    else return student_logpdf(x, p);
  }, m);
}

/// log p(y | x, Ω_g) for component g under the model's variant.
inline double conditional_logpdf(const CwmModel& model, Index g, const Vector& x, double y) {
  const Component& c = model.component(g);
  const Conditional& cond = c.y_conditional;
  const double mean = cond.map(x);
  if (!cond.dof) return gaussian_logpdf_1d(y, mean, cond.noise_var);
  double scale = cond.noise_var;
  if (model.variant() == Variant::fmt) {
    const auto& m = std::get<StudentParams>(*c.x_marginal);
    scale *= (m.dof() + mahalanobis_sq(x, m)) / (m.dof() + static_cast<double>(x.size()));
  }
  return student_logpdf_1d(y, mean, scale, *cond.dof);
}

/// Per-component log terms whose log-sum-exp is the model's log-density:
/// log π_g + log p(x|Ω_g) + log p(y|x,Ω_g) for joint variants, log π_g +
/// log p(y|x,Ω_g) for FMR and log p(Ω_g|x) + log p(y|x,Ω_g) for FMRC.
inline Vector component_log_terms(const CwmModel& model, const Vector& x, double y) {
  require(x.size() == model.dim(), ErrorCode::dimension_mismatch, "model evaluation: dimension mismatch");
  const Index G = model.groups();
  Vector t(G);
  Vector gate_log;
  if (model.variant() == Variant::fmrc) gate_log = gating_log_probs(*model.gating(), x);
  for (Index g = 0; g < G; ++g) {
    const Component& c = model.component(g);
    double v = conditional_logpdf(model, g, x, y);
    if (model.variant() == Variant::fmrc) {
      v += gate_log(g);
    } else {
      v += std::log(c.weight);
      if (c.x_marginal) v += marginal_logpdf(*c.x_marginal, x);
    }
    t(g) = v;
  }
  return t;
}

/// Joint log-density log p(x,y); the conditional log f(y|x) for FMR and FMRC.
inline double joint_logpdf(const CwmModel& model, const Vector& x, double y) {
  return log_sum_exp(component_log_terms(model, x, y));
}

inline Vector softmax(const Vector& log_terms) {
  Vector p = (log_terms.array() - log_sum_exp(log_terms)).exp();
  return p / p.sum();
}

/// Posterior probabilities p(Ω_g | x, y).
inline Vector posterior(const CwmModel& model, const Vector& x, double y) {
  return softmax(component_log_terms(model, x, y));
}

/// Index of the largest entry; ties go to the lowest index.
inline int argmax_lowest(const Vector& v) {
  Index best = 0;
  for (Index g = 1; g < v.size(); ++g) {
    if (v(g) > v(best)) best = g;
  }
  return static_cast<int>(best);
}

/// Maximum-posterior group (0-based) for every row.
inline std::vector<int> classify(const CwmModel& model, const Dataset& data) {
  std::vector<int> out(static_cast<size_t>(data.size()));
  for (Index n = 0; n < data.size(); ++n) {
    out[static_cast<size_t>(n)] = argmax_lowest(posterior(model, data.row(n), data.y(n)));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Nesting maps between the CWM family and classical mixtures.

/// Rewrites a (d+1)-variate Gaussian component of an FMG as the equivalent
/// linear-Gaussian CWM component (x-marginal times linear conditional).
inline Component fmg_to_cwm(const GaussianParams& joint, double weight) {
  const Index q = joint.dim();
  require(q >= 2, ErrorCode::invalid_argument, "fmg_to_cwm: joint dimension must be at least 2");
  const Index d = q - 1;
  const Matrix& s = joint.covariance();
  const Matrix sxx = s.topLeftCorner(d, d);
  const Vector sxy = s.topRightCorner(d, 1);
  const Cholesky fxx(sxx);
  const Vector slope = fxx.solve(sxy);
  const Vector mx = joint.mean().head(d);
  const double my = joint.mean()(d);

  Component c;
  c.weight = weight;
  c.x_marginal = GaussianParams(mx, sxx);
  c.y_conditional.map = LinearMap{slope, my - slope.dot(mx)};
  c.y_conditional.noise_var = s(d, d) - sxy.dot(slope);
  require(c.y_conditional.noise_var > 0.0, ErrorCode::not_positive_definite, "fmg_to_cwm: non-positive conditional variance");
  return c;
}

/// Mean and covariance of z = (x, y) implied by an x-marginal with center m
/// and matrix c plus the linear conditional with variance s (the reverse of
/// fmg_to_cwm).
inline std::pair<Vector, Matrix> compose_joint(const Vector& m, const Matrix& c, const LinearMap& map, double s) {
  const Index d = m.size();
  Vector mean(d + 1);
  mean.head(d) = m;
  mean(d) = map(m);
  Matrix cov(d + 1, d + 1);
  const Vector cb = c * map.slope;
  cov.topLeftCorner(d, d) = c;
  cov.topRightCorner(d, 1) = cb;
  cov.bottomLeftCorner(1, d) = cb.transpose();
  cov(d, d) = s + map.slope.dot(cb);
  return {mean, cov};
}

/// Joint Gaussian of a linear-Gaussian CWM component.
inline GaussianParams cwm_to_fmg(const Component& c) {
  require(c.x_marginal && std::holds_alternative<GaussianParams>(*c.x_marginal) && !c.y_conditional.dof,
          ErrorCode::invalid_argument, "cwm_to_fmg: component is not linear Gaussian");
  const auto& m = std::get<GaussianParams>(*c.x_marginal);
  auto [mean, cov] = compose_joint(m.mean(), m.covariance(), c.y_conditional.map, c.y_conditional.noise_var);
  return GaussianParams(std::move(mean), cov);
}

/// Marginal/conditional split of a multivariate t law z = (z1, z2).
struct TDecomposition {
  StudentParams marginal;   ///< t_{q1}(μ1, Σ11, ν)
  Matrix regression;        ///< Σ21 Σ11^{-1}, (q-q1) x q1
  Vector location2;         ///< μ2
  Matrix conditional_base;  ///< Σ_{2|1} = Σ22 - Σ21 Σ11^{-1} Σ12

  double conditional_dof() const { return marginal.dof() + static_cast<double>(marginal.dim()); }

  /// Law of z2 given z1: t(μ_{2|1}(z1), Σ_{2|1} (ν+δ(z1))/(ν+q1), ν+q1).
  StudentParams conditional(const Vector& z1) const {
    const double nu = marginal.dof();
    const double q1 = static_cast<double>(marginal.dim());
    const double delta = mahalanobis_sq(z1, marginal);
    Vector loc = location2 + regression * (z1 - marginal.location());
    return StudentParams(std::move(loc), conditional_base * ((nu + delta) / (nu + q1)), nu + q1);
  }
};

inline TDecomposition t_conditional_decompose(const StudentParams& joint, Index q1) {
  const Index q = joint.dim();
  require(q1 >= 1 && q1 < q, ErrorCode::invalid_argument, "t_conditional_decompose: split must satisfy 1 <= q1 < q");
  const Index q2 = q - q1;
  const Matrix& s = joint.scale();
  const Matrix s11 = s.topLeftCorner(q1, q1);
  const Matrix s12 = s.topRightCorner(q1, q2);
  const Cholesky f11(s11);
  Matrix regression = f11.solve(s12).transpose();
  Matrix base = s.bottomRightCorner(q2, q2) - regression * s12;
  base = 0.5 * (base + base.transpose()).eval();
  return TDecomposition{StudentParams(joint.location().head(q1), s11, joint.dof()), std::move(regression),
                        joint.location().tail(q2), std::move(base)};
}

/// FMT component in the library's component form (see CwmModel).
inline Component fmt_to_component(const StudentParams& joint, double weight) {
  const Index d = joint.dim() - 1;
  TDecomposition dec = t_conditional_decompose(joint, d);
  Component c;
  c.weight = weight;
  const Vector slope = dec.regression.row(0).transpose();
  c.y_conditional.map = LinearMap{slope, dec.location2(0) - slope.dot(dec.marginal.location())};
  c.y_conditional.noise_var = dec.conditional_base(0, 0);
  c.y_conditional.dof = dec.conditional_dof();
  c.x_marginal = std::move(dec.marginal);
  return c;
}

inline bool marginals_equal(const Marginal& a, const Marginal& b, double tol) {
  if (a.index() != b.index()) return false;
  if (!approx_equal(marginal_center(a), marginal_center(b), tol)) return false;
  if (!approx_equal(marginal_factor(a).matrix(), marginal_factor(b).matrix(), tol)) return false;
  const auto da = marginal_dof(a), db = marginal_dof(b);
  return !da || std::abs(*da - *db) <= tol;
}

inline constexpr double kNestingTolerance = 1e-10;

/// True when every x-marginal coincides, so the CWM factors as p(x) f(y|x)
/// with f an FMR.
inline bool check_fmr_reduction(const CwmModel& model) {
  require(model.variant() == Variant::gaussian_cwm, ErrorCode::invalid_argument, "check_fmr_reduction: requires gaussian_cwm");
  const auto& first = *model.component(0).x_marginal;
  for (const auto& c : model.components()) {
    if (!marginals_equal(first, *c.x_marginal, kNestingTolerance)) return false;
  }
  return true;
}

/// Drops the x-marginals, keeping weights and conditionals.
inline CwmModel strip_to_fmr(const CwmModel& model) {
  std::vector<Component> comps;
  for (const auto& c : model.components()) comps.push_back(Component{c.weight, std::nullopt, c.y_conditional});
  return CwmModel(Variant::fmr, std::move(comps));
}

/// Gating coefficients that reproduce p(Ω_g|x) of a common-covariance,
/// equal-weight Gaussian CWM, with component 1 as the zero baseline.
inline std::vector<Gate> cwm_to_fmrc_gating(const CwmModel& model) {
  require(model.variant() == Variant::gaussian_cwm, ErrorCode::invalid_argument, "cwm_to_fmrc_gating: requires gaussian_cwm");
  const auto& base = std::get<GaussianParams>(*model.component(0).x_marginal);
  const double w = model.component(0).weight;
  for (const auto& c : model.components()) {
    const auto& m = std::get<GaussianParams>(*c.x_marginal);
    require(approx_equal(m.covariance(), base.covariance(), kNestingTolerance), ErrorCode::invalid_argument,
            "cwm_to_fmrc_gating: covariance matrices differ across components");
    require(std::abs(c.weight - w) <= 1e-12, ErrorCode::invalid_argument, "cwm_to_fmrc_gating: mixing weights differ");
  }
  std::vector<Gate> gates;
  const Vector& mu1 = base.mean();
  for (const auto& c : model.components()) {
    const Vector& mu = std::get<GaussianParams>(*c.x_marginal).mean();
    Vector w_g = base.factor().solve(Vector(mu - mu1));
    const double w_g0 = -0.5 * (mu + mu1).dot(w_g);
    gates.push_back(Gate{std::move(w_g), w_g0});
  }
  gates.front().w.setZero();
  gates.front().w0 = 0.0;
  return gates;
}

inline CwmModel to_fmrc(const CwmModel& model) {
  auto gates = cwm_to_fmrc_gating(model);
  std::vector<Component> comps;
  for (const auto& c : model.components()) comps.push_back(Component{c.weight, std::nullopt, c.y_conditional});
  return CwmModel(Variant::fmrc, std::move(comps), std::move(gates));
}

/// True when all conditionals share (b, b0, σ²), i.e. FMR/FMRC collapse to one line.
inline bool check_degenerate_conditional(const CwmModel& model) {
  const auto& first = model.component(0).y_conditional;
  for (const auto& c : model.components()) {
    const auto& k = c.y_conditional;
    if (!approx_equal(k.map.slope, first.map.slope, kNestingTolerance)) return false;
    if (std::abs(k.map.intercept - first.map.intercept) > kNestingTolerance) return false;
    if (std::abs(k.noise_var - first.noise_var) > kNestingTolerance) return false;
    if (k.dof.has_value() != first.dof.has_value()) return false;
    if (k.dof && std::abs(*k.dof - *first.dof) > kNestingTolerance) return false;
  }
  return true;
}

} // namespace cwm
