#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "cwm/densities.hpp"
#include "cwm/error.hpp"
#include "cwm/linalg.hpp"
#include "cwm/model.hpp"
#include "cwm/rng.hpp"
#include "cwm/special.hpp"

namespace cwm {

enum class InitKind { kmeans, random_partition, given_labels };

inline std::string_view to_string(InitKind k) {
  switch (k) {
  case InitKind::kmeans: return "kmeans";
  case InitKind::random_partition: return "random_partition";
  case InitKind::given_labels: return "given_labels";
  }
  return "unknown";
}

inline InitKind parse_init(std::string_view s) {
  for (InitKind k : {InitKind::kmeans, InitKind::random_partition, InitKind::given_labels}) {
    if (s == to_string(k)) return k;
  }
  fail(ErrorCode::invalid_argument, "unknown init strategy: " + std::string(s));
}

/// Degrees-of-freedom handling for Student-t laws: a fixed value, or
/// estimation by a conditional-maximization step.
struct DofMode {
  std::optional<double> fixed_value;

  static DofMode estimate() { return {}; }
  static DofMode fixed(double nu) {
    require(nu > 0.0 && std::isfinite(nu), ErrorCode::invalid_argument, "fixed dof must be positive");
    return DofMode{nu};
  }
  bool estimated() const { return !fixed_value.has_value(); }
};

struct FitConfig {
  Index groups = 2;
  Variant variant = Variant::gaussian_cwm;
  int max_iter = 500;
  double rel_tol = 1e-8;
  int n_starts = 10;
  InitKind init = InitKind::kmeans;
  DofMode dof = DofMode::estimate();
  std::uint64_t seed = 0;
  /// 0-based partition used when init == given_labels.
  std::vector<int> given_labels;
  /// Keep π_g fixed at 1/G instead of estimating it.
  bool equal_weights = false;
  /// Starting dof for estimated Student-t laws.
  double initial_dof = 10.0;

  void validate() const {
    require(groups >= 1, ErrorCode::invalid_argument, "groups must be >= 1");
    require(max_iter >= 1, ErrorCode::invalid_argument, "max_iter must be >= 1");
    require(rel_tol > 0.0, ErrorCode::invalid_argument, "rel_tol must be positive");
    require(n_starts >= 1, ErrorCode::invalid_argument, "n_starts must be >= 1");
    require(initial_dof > 0.0, ErrorCode::invalid_argument, "initial_dof must be positive");
  }
};

struct FitResult {
  CwmModel model;
  std::vector<double> loglik_trace;
  Matrix responsibilities;
  bool converged = false;
  int n_iter = 0;
  int start_index = 0;
  int failed_starts = 0;
  FitConfig config;

  /// Final observed-data log-likelihood (conditional for FMR/FMRC).
  double loglik() const { return loglik_trace.back(); }
};

/// Sum over rows of the model's log-density.
inline double log_likelihood(const CwmModel& model, const Dataset& data) {
  double total = 0.0;
  for (Index n = 0; n < data.size(); ++n) total += joint_logpdf(model, data.row(n), data.y(n));
  return total;
}

// ---------------------------------------------------------------------------
// Degrees-of-freedom update

inline constexpr double kDofLower = 0.5;
inline constexpr double kDofUpper = 200.0;

/// Weighted E-step summaries for one Student-t law.
struct DofStats {
  double weight_sum = 0.0;          ///< Σ_n r_n
  double sum_elog_u_minus_u = 0.0;  ///< Σ_n r_n (E[ln U_n] - E[U_n])
};

struct DofEstimate {
  double dof = kDofUpper;
  bool at_boundary = false;
};

/// Solves -ψ(ν/2) + ln(ν/2) + 1 + Σ r (E ln U - E U) / Σ r = 0 by bisection on
/// [0.5, 200]. The left side decreases in ν, so when it keeps one sign over
/// the bracket the corresponding end point is the constrained maximizer.
inline DofEstimate estimate_dof(const DofStats& stats) {
  require(stats.weight_sum > 0.0 && std::isfinite(stats.sum_elog_u_minus_u), ErrorCode::invalid_argument,
          "estimate_dof: invalid statistics");
  const double c = 1.0 + stats.sum_elog_u_minus_u / stats.weight_sum;
  auto score = [c](double nu) { return -digamma(0.5 * nu) + std::log(0.5 * nu) + c; };
  double lo = kDofLower, hi = kDofUpper;
  if (score(lo) <= 0.0) return {lo, true};
  if (score(hi) >= 0.0) return {hi, true};
  for (int i = 0; i < 200 && hi - lo > 1e-10 * hi; ++i) {
    const double mid = 0.5 * (lo + hi);
    (score(mid) > 0.0 ? lo : hi) = mid;
  }
  return {0.5 * (lo + hi), false};
}

namespace detail {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

struct DegenerateStart {
  std::string reason;
};

/// Working parameters of one component during EM. For FMG/FMT `center` and
/// `factor` describe the joint law of z = (x, y); otherwise the x-marginal.
struct Work {
  double weight = 1.0;
  Vector center;
  std::optional<Cholesky> factor;
  double dof = kInf;
  Vector beta;  ///< (intercept, slope...)
  double noise_var = 1.0;
  double ydof = kInf;
};

struct State {
  std::vector<Work> comps;
  Matrix gates;  ///< G x (d+1), row 0 fixed at zero; FMRC only
};

/// Arrays shared by every start.
struct Prepared {
  Matrix design;  ///< N x (d+1): [1, x]
  Matrix joint;   ///< N x (d+1): [x, y]
  Vector y;
  double var_floor = 1e-12;
};

inline Prepared prepare(const Dataset& data) {
  const Index n = data.size(), d = data.dim();
  Prepared p;
  p.design.resize(n, d + 1);
  p.design.col(0).setOnes();
  p.design.rightCols(d) = data.x;
  p.joint.resize(n, d + 1);
  p.joint.leftCols(d) = data.x;
  p.joint.col(d) = data.y;
  p.y = data.y;
  const double mean = data.y.mean();
  const double var = (data.y.array() - mean).square().mean();
  p.var_floor = std::max(1e-10 * var, 1e-12);
  return p;
}

inline Vector batch_mahalanobis(const Matrix& pts, const Vector& center, const Cholesky& factor) {
  Matrix diff = (pts.rowwise() - center.transpose()).transpose();
  factor.lower().triangularView<Eigen::Lower>().solveInPlace(diff);
  return diff.colwise().squaredNorm().transpose();
}

inline Eigen::ArrayXd gaussian_kernel(const Vector& delta, double log_det, Index q) {
  return -0.5 * (static_cast<double>(q) * kLogTwoPi + log_det + delta.array());
}

inline Eigen::ArrayXd student_kernel(const Vector& delta, double log_det, Index q, double dof) {
  const double qd = static_cast<double>(q);
  const double c = log_gamma(0.5 * (dof + qd)) - log_gamma(0.5 * dof) - 0.5 * qd * std::log(dof * std::numbers::pi) - 0.5 * log_det;
  return c - 0.5 * (dof + qd) * (delta.array() / dof).log1p();
}

inline Matrix gate_log_probs(const Matrix& design, const Matrix& gates) {
  Matrix s = design * gates.transpose();
  for (Index n = 0; n < s.rows(); ++n) {
    const double m = s.row(n).maxCoeff();
    const double lse = m + std::log((s.row(n).array() - m).exp().sum());
    s.row(n).array() -= lse;
  }
  return s;
}

struct EStep {
  Matrix log_terms;
  Matrix delta;     ///< marginal (or joint) squared Mahalanobis distances
  Matrix resid_sq;  ///< standardized squared conditional residuals
  Matrix resp;
  double loglik = 0.0;
};

inline EStep expectation(Variant variant, const Prepared& p, const State& st) {
  const Index n = p.y.size(), G = static_cast<Index>(st.comps.size());
  const Index d = p.design.cols() - 1;
  EStep e;
  e.log_terms.resize(n, G);
  e.delta.setZero(n, G);
  e.resid_sq.setZero(n, G);
  Matrix gate_log;
  if (variant == Variant::fmrc) gate_log = gate_log_probs(p.design, st.gates);

  for (Index g = 0; g < G; ++g) {
    const Work& w = st.comps[static_cast<size_t>(g)];
    Eigen::ArrayXd lt = Eigen::ArrayXd::Zero(n);
    const bool joint = variant == Variant::fmg || variant == Variant::fmt;
    if (has_marginal(variant)) {
      const Matrix& pts = joint ? p.joint : static_cast<const Matrix&>(p.design.rightCols(d));
      e.delta.col(g) = batch_mahalanobis(pts, w.center, *w.factor);
      const Index q = joint ? d + 1 : d;
      lt += std::isinf(w.dof) ? gaussian_kernel(e.delta.col(g), w.factor->log_det(), q)
                              : student_kernel(e.delta.col(g), w.factor->log_det(), q, w.dof);
    }
    if (!joint) {
      const Vector resid = p.y - p.design * w.beta;
      e.resid_sq.col(g) = resid.array().square() / w.noise_var;
      lt += std::isinf(w.ydof) ? gaussian_kernel(e.resid_sq.col(g), std::log(w.noise_var), 1)
                               : student_kernel(e.resid_sq.col(g), std::log(w.noise_var), 1, w.ydof);
    }
    if (variant == Variant::fmrc) lt += gate_log.col(g).array();
    else lt += std::log(w.weight);
    e.log_terms.col(g) = lt.matrix();
  }

  e.resp.resize(n, G);
  double total = 0.0;
  for (Index i = 0; i < n; ++i) {
    const double m = e.log_terms.row(i).maxCoeff();
    Eigen::RowVectorXd ex = (e.log_terms.row(i).array() - m).exp();
    const double s = ex.sum();
    total += m + std::log(s);
    e.resp.row(i) = ex / s;
  }
  e.loglik = total;
  return e;
}

inline std::optional<Cholesky> factor_with_ridge(Matrix s) {
  double ridge = 1e-8 * s.trace() / static_cast<double>(s.rows());
  if (!(ridge > 0.0) || !std::isfinite(ridge)) ridge = 1e-8;
  if (auto f = Cholesky::try_factor(s)) return f;
  for (int attempt = 0; attempt < 3; ++attempt) {
    s.diagonal().array() += ridge;
    if (auto f = Cholesky::try_factor(s)) return f;
    ridge *= 10.0;
  }
  return std::nullopt;
}

/// Weighted least squares of y on [1, x], solved on centered predictors.
inline std::optional<Vector> weighted_ls(const Matrix& design, const Vector& y, const Vector& w) {
  const Index d = design.cols() - 1;
  const double wsum = w.sum();
  const Vector xbar = (design.rightCols(d).transpose() * w) / wsum;
  const double ybar = w.dot(y) / wsum;
  Vector beta(d + 1);
  if (d > 0) {
    const Matrix xc = design.rightCols(d).rowwise() - xbar.transpose();
    const Matrix a = xc.transpose() * w.asDiagonal() * xc;
    const Vector b = xc.transpose() * (w.array() * (y.array() - ybar)).matrix();
    auto f = Cholesky::try_factor(a);
    if (!f) return std::nullopt;
    beta.tail(d) = f->solve(b);
  }
  beta(0) = ybar - beta.tail(d).dot(xbar);
  if (!beta.allFinite()) return std::nullopt;
  return beta;
}

/// Newton ascent with a ridge-damped Hessian and step halving on the
/// expected complete-data gating objective Σ_n Σ_g r_ng log p_g(x_n).
inline void update_gating(const Matrix& design, const Matrix& resp, Matrix& gates, int max_steps = 25) {
  const Index n = design.rows(), G = resp.cols(), k = design.cols();
  if (G < 2) return;
  auto objective = [&](const Matrix& b) { return (resp.array() * gate_log_probs(design, b).array()).sum(); };
  double current = objective(gates);
  const Index dim = (G - 1) * k;
  for (int step = 0; step < max_steps; ++step) {
    const Matrix probs = gate_log_probs(design, gates).array().exp().matrix();
    Vector grad(dim);
    Matrix hess = Matrix::Zero(dim, dim);
    for (Index g = 1; g < G; ++g) {
      grad.segment((g - 1) * k, k) = design.transpose() * (resp.col(g) - probs.col(g));
      for (Index h = 1; h < G; ++h) {
        Vector wgt = -probs.col(g).cwiseProduct(probs.col(h));
        if (g == h) wgt += probs.col(g);
        hess.block((g - 1) * k, (h - 1) * k, k, k) = design.transpose() * wgt.asDiagonal() * design;
      }
    }
    if (grad.cwiseAbs().maxCoeff() < 1e-9 * static_cast<double>(n)) break;
    hess.diagonal().array() += 1e-6;
    const Vector delta = hess.ldlt().solve(grad);
    if (!delta.allFinite()) break;
    double t = 1.0;
    bool accepted = false;
    for (int halving = 0; halving < 30; ++halving, t *= 0.5) {
      Matrix trial = gates;
      for (Index g = 1; g < G; ++g) trial.row(g) += t * delta.segment((g - 1) * k, k).transpose();
      const double value = objective(trial);
      if (std::isfinite(value) && value >= current) {
        accepted = value > current;
        gates = std::move(trial);
        current = value;
        break;
      }
    }
    if (!accepted) break;
  }
}

struct LatentWeights {
  const Matrix* u = nullptr;  ///< marginal/joint scale weights, N x G
  const Matrix* w = nullptr;  ///< conditional scale weights, N x G
};

/// One M-step (or CM sequence for Student-t variants) from responsibilities.
/// `estep` is null for the initial step from a hard partition, which uses
/// unit latent weights and keeps the starting dof.
inline State maximization(Variant variant, const FitConfig& cfg, const Prepared& p, const Matrix& resp, const State& prev,
                          const EStep* estep) {
  const Index n = p.y.size(), G = resp.cols();
  const Index d = p.design.cols() - 1;
  const bool joint = variant == Variant::fmg || variant == Variant::fmt;
  const bool student = is_student(variant);
  State st;
  st.comps.resize(static_cast<size_t>(G));

  for (Index g = 0; g < G; ++g) {
    const Work& old = prev.comps[static_cast<size_t>(g)];
    Work& w = st.comps[static_cast<size_t>(g)];
    const Vector r = resp.col(g);
    const double ng = r.sum();
    if (!(ng >= static_cast<double>(d + 2))) throw DegenerateStart{"component mass below d+2"};
    w.weight = cfg.equal_weights ? 1.0 / static_cast<double>(G) : ng / static_cast<double>(n);
    w.dof = old.dof;
    w.ydof = old.ydof;

    if (has_marginal(variant)) {
      const Index q = joint ? d + 1 : d;
      const Matrix& pts = joint ? p.joint : static_cast<const Matrix&>(p.design.rightCols(d));
      Vector u = Vector::Ones(n);
      if (student && estep) u = ((old.dof + static_cast<double>(q)) / (old.dof + estep->delta.col(g).array())).matrix();
      const Vector ru = r.cwiseProduct(u);
      w.center = pts.transpose() * ru / ru.sum();
      const Matrix centered = pts.rowwise() - w.center.transpose();
      Matrix cov = centered.transpose() * ru.asDiagonal() * centered / ng;
      w.factor = factor_with_ridge(std::move(cov));
      if (!w.factor) throw DegenerateStart{"covariance factorization failed"};
      if (student && estep && cfg.dof.estimated()) {
        const double a = 0.5 * (old.dof + static_cast<double>(q));
        const double corr = digamma(a) - std::log(a);
        const double s = (r.array() * (u.array().log() + corr - u.array())).sum();
        w.dof = estimate_dof(DofStats{ng, s}).dof;
      }
    }

    if (!joint) {
      Vector wy = Vector::Ones(n);
      if (variant == Variant::t_cwm && estep) wy = ((old.ydof + 1.0) / (old.ydof + estep->resid_sq.col(g).array())).matrix();
      const Vector rw = r.cwiseProduct(wy);
      auto beta = weighted_ls(p.design, p.y, rw);
      if (!beta) throw DegenerateStart{"singular weighted design"};
      w.beta = *beta;
      const Vector resid = p.y - p.design * w.beta;
      w.noise_var = std::max(rw.dot(resid.cwiseAbs2()) / ng, p.var_floor);
      if (variant == Variant::t_cwm && estep && cfg.dof.estimated()) {
        const double a = 0.5 * (old.ydof + 1.0);
        const double corr = digamma(a) - std::log(a);
        const double s = (r.array() * (wy.array().log() + corr - wy.array())).sum();
        w.ydof = estimate_dof(DofStats{ng, s}).dof;
      }
    }
  }

  if (variant == Variant::fmrc) {
    st.gates = prev.gates;
    update_gating(p.design, resp, st.gates);
  }
  return st;
}

inline State initial_state(Variant variant, const FitConfig& cfg, const Prepared& p, const Matrix& resp) {
  const Index G = resp.cols(), d = p.design.cols() - 1;
  State seed;
  seed.comps.resize(static_cast<size_t>(G));
  const double nu0 = cfg.dof.fixed_value.value_or(cfg.initial_dof);
  for (auto& w : seed.comps) {
    if (is_student(variant)) {
      w.dof = nu0;
      if (variant == Variant::t_cwm) w.ydof = nu0;
    }
  }
  if (variant == Variant::fmrc) seed.gates = Matrix::Zero(G, d + 1);
  return maximization(variant, cfg, p, resp, seed, nullptr);
}

inline CwmModel to_model(Variant variant, const Prepared& p, const State& st) {
  const Index d = p.design.cols() - 1;
  std::vector<Component> comps;
  for (const Work& w : st.comps) {
    switch (variant) {
    case Variant::fmg:
      comps.push_back(fmg_to_cwm(GaussianParams(w.center, w.factor->matrix()), w.weight));
      continue;
    case Variant::fmt:
      comps.push_back(fmt_to_component(StudentParams(w.center, w.factor->matrix(), w.dof), w.weight));
      continue;
    default: break;
    }
    Component c;
    c.weight = w.weight;
    c.y_conditional.map = LinearMap{w.beta.tail(d), w.beta(0)};
    c.y_conditional.noise_var = w.noise_var;
    if (variant == Variant::gaussian_cwm) c.x_marginal = GaussianParams(w.center, w.factor->matrix());
    if (variant == Variant::t_cwm) {
      c.x_marginal = StudentParams(w.center, w.factor->matrix(), w.dof);
      c.y_conditional.dof = w.ydof;
    }
    comps.push_back(std::move(c));
  }
  if (variant == Variant::fmrc) {
    const Matrix probs = gate_log_probs(p.design, st.gates).array().exp().matrix();
    const Vector mean = probs.colwise().mean().transpose();
    std::vector<Gate> gates;
    for (Index g = 0; g < st.gates.rows(); ++g) {
      comps[static_cast<size_t>(g)].weight = mean(g) / mean.sum();
      gates.push_back(Gate{st.gates.row(g).tail(d).transpose(), st.gates(g, 0)});
    }
    return CwmModel(variant, std::move(comps), std::move(gates));
  }
  // Normalize away rounding so the weights sum to one to machine precision.
  double total = 0.0;
  for (const auto& c : comps) total += c.weight;
  for (auto& c : comps) c.weight /= total;
  return CwmModel(variant, std::move(comps));
}

inline Matrix one_hot(const std::vector<int>& labels, Index G) {
  Matrix r = Matrix::Zero(static_cast<Index>(labels.size()), G);
  for (size_t i = 0; i < labels.size(); ++i) r(static_cast<Index>(i), labels[i]) = 1.0;
  return r;
}

/// Columns rescaled to zero mean and unit variance.
inline Matrix standardize(const Matrix& m) {
  Matrix out = m;
  for (Index j = 0; j < m.cols(); ++j) {
    const double mean = m.col(j).mean();
    const double sd = std::sqrt((m.col(j).array() - mean).square().mean());
    out.col(j) = (m.col(j).array() - mean) / (sd > 0.0 ? sd : 1.0);
  }
  return out;
}

/// k-means++ seeding followed by at most `iterations` Lloyd steps. Returns
/// nothing if a cluster ends up empty.
inline std::optional<std::vector<int>> kmeans_once(const Matrix& pts, Index G, Rng& rng, int iterations) {
  const Index n = pts.rows();
  Matrix centers(G, pts.cols());
  centers.row(0) = pts.row(static_cast<Index>(rng.below(static_cast<std::uint64_t>(n))));
  Vector dist = (pts.rowwise() - centers.row(0)).rowwise().squaredNorm();
  for (Index k = 1; k < G; ++k) {
    const double total = dist.sum();
    Index pick = n - 1;
    if (total > 0.0) {
      double target = rng.uniform() * total;
      for (Index i = 0; i < n; ++i) {
        target -= dist(i);
        if (target < 0.0) {
          pick = i;
          break;
        }
      }
    } else {
      pick = static_cast<Index>(rng.below(static_cast<std::uint64_t>(n)));
    }
    centers.row(k) = pts.row(pick);
    dist = dist.cwiseMin((pts.rowwise() - centers.row(k)).rowwise().squaredNorm());
  }

  std::vector<int> assign(static_cast<size_t>(n), -1);
  for (int it = 0; it < iterations; ++it) {
    bool changed = false;
    for (Index i = 0; i < n; ++i) {
      Index best = 0;
      double bd = (pts.row(i) - centers.row(0)).squaredNorm();
      for (Index k = 1; k < G; ++k) {
        const double dk = (pts.row(i) - centers.row(k)).squaredNorm();
        if (dk < bd) {
          bd = dk;
          best = k;
        }
      }
      if (assign[static_cast<size_t>(i)] != static_cast<int>(best)) {
        assign[static_cast<size_t>(i)] = static_cast<int>(best);
        changed = true;
      }
    }
    Matrix sums = Matrix::Zero(G, pts.cols());
    Vector counts = Vector::Zero(G);
    for (Index i = 0; i < n; ++i) {
      sums.row(assign[static_cast<size_t>(i)]) += pts.row(i);
      counts(assign[static_cast<size_t>(i)]) += 1.0;
    }
    if ((counts.array() == 0.0).any()) return std::nullopt;
    for (Index k = 0; k < G; ++k) centers.row(k) = sums.row(k) / counts(k);
    if (!changed) break;
  }
  return assign;
}

} // namespace detail

/// Hard initial partition converted to 0/1 responsibilities.
inline Matrix initialize(const Dataset& data, const FitConfig& config, Rng& rng) {
  const Index n = data.size(), G = config.groups;
  require(n > G, ErrorCode::invalid_argument, "initialize: need more rows than groups");
  constexpr int kMaxAttempts = 50;
  switch (config.init) {
  case InitKind::given_labels: {
    require(static_cast<Index>(config.given_labels.size()) == n, ErrorCode::invalid_argument,
            "initialize: given_labels length differs from row count");
    for (int l : config.given_labels) {
      require(l >= 0 && l < G, ErrorCode::invalid_argument, "initialize: given_labels must lie in [0, G)");
    }
    return detail::one_hot(config.given_labels, G);
  }
  case InitKind::random_partition: {
    for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
      std::vector<int> labels(static_cast<size_t>(n));
      std::vector<Index> counts(static_cast<size_t>(G), 0);
      for (auto& l : labels) {
        l = static_cast<int>(rng.below(static_cast<std::uint64_t>(G)));
        ++counts[static_cast<size_t>(l)];
      }
      if (std::find(counts.begin(), counts.end(), 0) == counts.end()) return detail::one_hot(labels, G);
    }
    break;
  }
  case InitKind::kmeans: {
    Matrix pts(n, data.dim() + 1);
    pts.leftCols(data.dim()) = data.x;
    pts.col(data.dim()) = data.y;
    pts = detail::standardize(pts);
    for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
      if (auto labels = detail::kmeans_once(pts, G, rng, 20)) return detail::one_hot(*labels, G);
    }
    break;
  }
  }
  fail(ErrorCode::degenerate_fit, "initialize: could not draw a partition without empty groups");
}

/// Maximum-likelihood fit by EM (ECM for Student-t variants) with multiple starts.
///
/// The result is the start with the largest final log-likelihood; ties go to
/// the lowest start index. Starts that degenerate are skipped and counted.
inline FitResult fit(const Dataset& data, const FitConfig& config) {
  config.validate();
  data.validate();
  const Index G = config.groups;
  require(data.size() > G, ErrorCode::invalid_argument, "fit: need more rows than groups");
  const detail::Prepared prep = detail::prepare(data);
  const int starts = config.init == InitKind::given_labels ? 1 : config.n_starts;

  std::optional<FitResult> best;
  int failed = 0;
  std::string last_reason;
  for (int s = 0; s < starts; ++s) {
    Rng rng = Rng::stream(config.seed, static_cast<std::uint64_t>(s));
    try {
      const Matrix r0 = initialize(data, config, rng);
      detail::State st = detail::initial_state(config.variant, config, prep, r0);
      std::vector<double> trace;
      bool converged = false;
      int iter = 0;
      detail::EStep e = detail::expectation(config.variant, prep, st);
      trace.push_back(e.loglik);
      while (iter < config.max_iter) {
        detail::State next = detail::maximization(config.variant, config, prep, e.resp, st, &e);
        detail::EStep e_next = detail::expectation(config.variant, prep, next);
        ++iter;
        if (!std::isfinite(e_next.loglik)) throw detail::DegenerateStart{"non-finite log-likelihood"};
        st = std::move(next);
        e = std::move(e_next);
        const double prev = trace.back();
        trace.push_back(e.loglik);
        if (std::abs(e.loglik - prev) / (1.0 + std::abs(e.loglik)) < config.rel_tol) {
          converged = true;
          break;
        }
      }
      if (!best || e.loglik > best->loglik()) {
        best = FitResult{detail::to_model(config.variant, prep, st), std::move(trace), std::move(e.resp), converged, iter, s, 0, config};
      }
    } catch (const detail::DegenerateStart& d) {
      ++failed;
      last_reason = d.reason;
    } catch (const Error& err) {
      if (err.code() != ErrorCode::degenerate_fit && err.code() != ErrorCode::not_positive_definite) throw;
      ++failed;
      last_reason = err.what();
    }
  }
  if (!best) fail(ErrorCode::degenerate_fit, "fit: every start degenerated (" + last_reason + ")");
  best->failed_starts = failed;
  return std::move(*best);
}

} // namespace cwm
