#pragma once

#include <cmath>
#include <vector>

#include "cwm/cwm.hpp"

namespace cwm::test {

/// Random symmetric positive-definite matrix with eigenvalues in [lo, hi].
inline Matrix random_spd(Index d, Rng& rng, double lo = 0.5, double hi = 3.0) {
  Matrix a(d, d);
  for (Index i = 0; i < d; ++i)
    for (Index j = 0; j < d; ++j) a(i, j) = rng.normal();
  const Eigen::HouseholderQR<Matrix> qr(a);
  const Matrix q = qr.householderQ();
  Vector ev(d);
  for (Index i = 0; i < d; ++i) ev(i) = rng.uniform(lo, hi);
  return q * ev.asDiagonal() * q.transpose();
}

inline Vector random_vector(Index d, Rng& rng, double scale = 1.0) {
  Vector v(d);
  for (Index i = 0; i < d; ++i) v(i) = scale * rng.normal();
  return v;
}

inline Component gaussian_component(Index d, Rng& rng, double weight) {
  Component c;
  c.weight = weight;
  c.x_marginal = GaussianParams(random_vector(d, rng, 2.0), random_spd(d, rng));
  c.y_conditional.map = LinearMap{random_vector(d, rng), rng.normal()};
  c.y_conditional.noise_var = rng.uniform(0.3, 2.0);
  return c;
}

inline Component student_component(Index d, Rng& rng, double weight) {
  Component c;
  c.weight = weight;
  c.x_marginal = StudentParams(random_vector(d, rng, 2.0), random_spd(d, rng), rng.uniform(2.0, 15.0));
  c.y_conditional.map = LinearMap{random_vector(d, rng), rng.normal()};
  c.y_conditional.noise_var = rng.uniform(0.3, 2.0);
  c.y_conditional.dof = rng.uniform(2.0, 15.0);
  return c;
}

inline std::vector<double> random_weights(Index G, Rng& rng) {
  std::vector<double> w(static_cast<size_t>(G));
  double s = 0.0;
  for (auto& v : w) s += (v = rng.uniform(0.2, 1.0));
  for (auto& v : w) v /= s;
  return w;
}

inline CwmModel random_gaussian_cwm(Index G, Index d, Rng& rng) {
  const auto w = random_weights(G, rng);
  std::vector<Component> comps;
  for (Index g = 0; g < G; ++g) comps.push_back(gaussian_component(d, rng, w[static_cast<size_t>(g)]));
  return CwmModel(Variant::gaussian_cwm, std::move(comps));
}

inline CwmModel random_t_cwm(Index G, Index d, Rng& rng) {
  const auto w = random_weights(G, rng);
  std::vector<Component> comps;
  for (Index g = 0; g < G; ++g) comps.push_back(student_component(d, rng, w[static_cast<size_t>(g)]));
  return CwmModel(Variant::t_cwm, std::move(comps));
}

/// Gaussian log density written out term by term in long double.
inline long double ref_gaussian_logpdf(const Vector& z, const Vector& mu, const Matrix& cov) {
  const Index q = z.size();
  const Matrix inv = cov.inverse();
  long double quad = 0.0L;
  for (Index i = 0; i < q; ++i)
    for (Index j = 0; j < q; ++j)
      quad += static_cast<long double>(z(i) - mu(i)) * static_cast<long double>(inv(i, j)) * static_cast<long double>(z(j) - mu(j));
  const long double two_pi = 2.0L * 3.141592653589793238462643383279502884L;
  return -0.5L * static_cast<long double>(q) * std::log(two_pi) - 0.5L * std::log(static_cast<long double>(cov.determinant())) - 0.5L * quad;
}

/// Student-t log density from the textbook formula in long double.
inline long double ref_student_logpdf(const Vector& z, const Vector& mu, const Matrix& scale, long double nu) {
  const long double q = static_cast<long double>(z.size());
  const Matrix inv = scale.inverse();
  long double quad = 0.0L;
  for (Index i = 0; i < z.size(); ++i)
    for (Index j = 0; j < z.size(); ++j)
      quad += static_cast<long double>(z(i) - mu(i)) * static_cast<long double>(inv(i, j)) * static_cast<long double>(z(j) - mu(j));
  const long double pi = 3.141592653589793238462643383279502884L;
  return std::lgamma((nu + q) / 2.0L) - std::lgamma(nu / 2.0L) - 0.5L * q * std::log(nu * pi) -
         0.5L * std::log(static_cast<long double>(scale.determinant())) - 0.5L * (nu + q) * std::log1p(quad / nu);
}

/// Sample from a Gaussian CWM; labels are the drawn components.
inline Dataset sample_cwm(const CwmModel& model, Index n, Rng& rng) {
  const Index d = model.dim();
  Matrix x(n, d);
  Vector y(n);
  std::vector<int> labels(static_cast<size_t>(n));
  for (Index i = 0; i < n; ++i) {
    double u = rng.uniform();
    Index g = 0;
    while (g + 1 < model.groups() && (u -= model.component(g).weight) > 0.0) ++g;
    const Component& c = model.component(g);
    const Vector xi = detail::draw_marginal(*c.x_marginal, rng);
    x.row(i) = xi.transpose();
    double e = rng.normal();
    if (c.y_conditional.dof) e /= std::sqrt(rng.chi_squared(*c.y_conditional.dof) / *c.y_conditional.dof);
    y(i) = c.y_conditional.map(xi) + std::sqrt(c.y_conditional.noise_var) * e;
    labels[static_cast<size_t>(i)] = static_cast<int>(g);
  }
  return Dataset(std::move(x), std::move(y), std::move(labels));
}

/// Generating model of a scenario's regular groups, weights proportional to n.
inline CwmModel scenario_model(const ScenarioSpec& spec) {
  double total = 0.0;
  for (const auto& g : spec.groups) total += static_cast<double>(g.n);
  bool student = false;
  for (const auto& g : spec.groups) student = student || marginal_dof(g.x_law).has_value();
  std::vector<Component> comps;
  for (const auto& g : spec.groups) {
    Component c;
    c.weight = static_cast<double>(g.n) / total;
    c.x_marginal = g.x_law;
    c.y_conditional.map = LinearMap{g.slope, g.intercept};
    c.y_conditional.noise_var = g.noise_sd * g.noise_sd;
    comps.push_back(std::move(c));
  }
  return CwmModel(student ? Variant::t_cwm : Variant::gaussian_cwm, std::move(comps));
}

} // namespace cwm::test
