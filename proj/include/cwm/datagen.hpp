#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "cwm/densities.hpp"
#include "cwm/error.hpp"
#include "cwm/linalg.hpp"
#include "cwm/model.hpp"
#include "cwm/rng.hpp"

namespace cwm {

/// One simulated group: x from `x_law`, y = slope'x + intercept + N(0, noise_sd²).
/// `noise_sd` is a standard deviation, not a variance.
struct GroupSpec {
  Index n = 0;
  Marginal x_law;
  Vector slope;
  double intercept = 0.0;
  double noise_sd = 1.0;
};

/// Uniform background noise over a box in (x, y) space; the last interval is y.
struct NoiseSpec {
  Index count = 0;
  std::vector<std::pair<double, double>> box;
};

struct ScenarioSpec {
  std::vector<GroupSpec> groups;
  std::optional<NoiseSpec> noise;
  std::uint64_t seed = 0;

  Index dim() const { return groups.front().slope.size(); }

  Index total() const {
    Index n = noise ? noise->count : 0;
    for (const auto& g : groups) n += g.n;
    return n;
  }

  void validate() const {
    require(!groups.empty(), ErrorCode::invalid_argument, "scenario: no groups");
    const Index d = dim();
    require(d >= 1, ErrorCode::invalid_argument, "scenario: slope must have at least one entry");
    for (const auto& g : groups) {
      require(g.n >= 1, ErrorCode::invalid_argument, "scenario: group size must be >= 1");
      require(g.slope.size() == d, ErrorCode::dimension_mismatch, "scenario: slope dimensions differ");
      require(marginal_center(g.x_law).size() == d, ErrorCode::dimension_mismatch, "scenario: x law dimension differs from slope");
      require(g.noise_sd > 0.0 && std::isfinite(g.noise_sd), ErrorCode::invalid_argument, "scenario: noise_sd must be positive");
    }
    if (noise) {
      require(noise->count >= 0, ErrorCode::invalid_argument, "scenario: negative noise count");
      require(static_cast<Index>(noise->box.size()) == d + 1, ErrorCode::dimension_mismatch, "scenario: noise box needs d+1 intervals");
      for (const auto& [lo, hi] : noise->box) {
        require(lo < hi, ErrorCode::invalid_argument, "scenario: empty noise interval");
      }
    }
  }
};

namespace detail {

inline Vector draw_marginal(const Marginal& law, Rng& rng) {
  const Cholesky& f = marginal_factor(law);
  Vector z(f.dim());
  for (Index i = 0; i < z.size(); ++i) z(i) = rng.normal();
  Vector v = f.lower() * z;
  if (auto nu = marginal_dof(law)) v /= std::sqrt(rng.chi_squared(*nu) / *nu);
  return marginal_center(law) + v;
}

} // namespace detail

/// Draws groups in order, then noise, then shuffles rows with the same stream.
inline Dataset generate(const ScenarioSpec& spec) {
  spec.validate();
  const Index d = spec.dim(), total = spec.total();
  Rng rng(spec.seed);
  Matrix x(total, d);
  Vector y(total);
  std::vector<int> labels;
  labels.reserve(static_cast<size_t>(total));
  Index row = 0;
  for (size_t g = 0; g < spec.groups.size(); ++g) {
    const GroupSpec& gs = spec.groups[g];
    for (Index i = 0; i < gs.n; ++i, ++row) {
      const Vector xi = detail::draw_marginal(gs.x_law, rng);
      x.row(row) = xi.transpose();
      y(row) = gs.slope.dot(xi) + gs.intercept + gs.noise_sd * rng.normal();
      labels.push_back(static_cast<int>(g));
    }
  }
  if (spec.noise) {
    for (Index i = 0; i < spec.noise->count; ++i, ++row) {
      for (Index j = 0; j < d; ++j) x(row, j) = rng.uniform(spec.noise->box[static_cast<size_t>(j)].first, spec.noise->box[static_cast<size_t>(j)].second);
      y(row) = rng.uniform(spec.noise->box.back().first, spec.noise->box.back().second);
      labels.push_back(kNoise);
    }
  }
  for (Index i = total - 1; i > 0; --i) {
    const auto j = static_cast<Index>(rng.below(static_cast<std::uint64_t>(i + 1)));
    if (j == i) continue;
    x.row(i).swap(x.row(j));
    std::swap(y(i), y(j));
    std::swap(labels[static_cast<size_t>(i)], labels[static_cast<size_t>(j)]);
  }
  return Dataset(std::move(x), std::move(y), std::move(labels));
}

namespace detail {

inline GroupSpec line_group(Index n, double mu, double sd, double intercept, double slope, double noise_sd) {
  return GroupSpec{n, GaussianParams(Vector::Constant(1, mu), Matrix::Constant(1, 1, sd * sd)), Vector::Constant(1, slope), intercept,
                   noise_sd};
}

inline NoiseSpec line_noise(Index count) { return NoiseSpec{count, {{-5.0, 30.0}, {-50.0, 130.0}}}; }

} // namespace detail

inline const std::vector<std::string>& builtin_scenario_names() {
  static const std::vector<std::string> names{"ex1", "ex2", "ex3", "ex4_s2", "ex4_s4", "ex5_s2", "ex5_s4", "ex6_s2", "ex6_s4"};
  return names;
}

/// Simulation designs. x standard deviations
/// and noise standard deviations are given as σ, not σ².
inline ScenarioSpec builtin_scenario(std::string_view name, std::uint64_t seed = 0) {
  using detail::line_group;
  ScenarioSpec s;
  s.seed = seed;
  if (name == "ex1") {
    s.groups = {line_group(100, 10.0, 2.0, 2.0, 6.0, 2.0), line_group(200, -10.0, 2.0, 4.0, -6.0, 2.0)};
  } else if (name == "ex2") {
    s.groups = {line_group(100, 5.0, 1.0, 40.0, 6.0, 2.0), line_group(200, 10.0, 2.0, 40.0, -1.5, 1.0),
                line_group(150, 20.0, 3.0, 150.0, 7.0, 2.0)};
  } else if (name == "ex3") {
    s.groups = {line_group(100, 5.0, 2.0, 2.0, 6.0, 2.0), line_group(200, 20.0, 1.0, 2.0, 6.0, 1.0),
                line_group(150, 40.0, 2.0, 2.0, 6.0, 2.0)};
  } else if (name == "ex4_s2" || name == "ex4_s4") {
    const double sd = name == "ex4_s2" ? 2.0 : 4.0;
    s.groups = {line_group(100, 5.0, sd, 40.0, 6.0, sd), line_group(100, 10.0, sd, 40.0, -1.5, sd),
                line_group(100, 20.0, sd, 150.0, -7.0, sd)};
    s.noise = detail::line_noise(50);
  } else if (name == "ex5_s2" || name == "ex5_s4") {
    const double sd = name == "ex5_s2" ? 2.0 : 4.0;
    s.groups = {line_group(50, 5.0, sd, 2.0, 6.0, sd), line_group(50, 10.0, sd, 2.0, -1.5, sd), line_group(50, 40.0, sd, 2.0, -7.0, sd)};
    s.noise = detail::line_noise(25);
  } else if (name == "ex6_s2" || name == "ex6_s4") {
    const double sd = name == "ex6_s2" ? 2.0 : 4.0;
    Matrix c1(2, 2), c2(2, 2);
    c1 << sd * sd, -0.1, -0.1, sd * sd;
    c2 << sd * sd, 0.1, 0.1, sd * sd;
    s.groups = {GroupSpec{150, GaussianParams(Eigen::Vector2d(5.0, 20.0), c1), Eigen::Vector2d(6.0, 1.2), 0.0, sd},
                GroupSpec{150, GaussianParams(Eigen::Vector2d(2.0, 4.0), c2), Eigen::Vector2d(-1.5, 3.0), 0.0, sd}};
    s.noise = NoiseSpec{50, {{-5.0, 40.0}, {-5.0, 40.0}, {-20.0, 170.0}}};
  } else {
    fail(ErrorCode::invalid_argument, "unknown scenario: " + std::string(name));
  }
  return s;
}

/// Copy of `data` with the second predictor of the 25th row shifted by `constant`.
inline Dataset crab_perturb(const Dataset& data, double constant) {
  require(data.size() >= 25 && data.dim() >= 2, ErrorCode::invalid_argument, "crab_perturb: need at least 25 rows and 2 predictors");
  Dataset out = data;
  out.x(24, 1) += constant;
  return out;
}

} // namespace cwm
