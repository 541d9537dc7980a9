#include <cmath>
#include <string>

#include <gtest/gtest.h>

#include "cwm/cwm.hpp"
#include "support.hpp"

using namespace cwm;

namespace {

Vector scalar(double v) { return Vector::Constant(1, v); }

Component line_component(double weight, double mu, double var, double b, double b0, double s2) {
  Component c;
  c.weight = weight;
  c.x_marginal = GaussianParams(scalar(mu), Matrix::Constant(1, 1, var));
  c.y_conditional.map = LinearMap{scalar(b), b0};
  c.y_conditional.noise_var = s2;
  return c;
}

CwmModel symmetric_model() {
  return CwmModel(Variant::gaussian_cwm, {line_component(0.5, -3.0, 2.0, 1.0, 0.0, 1.0), line_component(0.5, 3.0, 2.0, 1.0, 0.0, 1.0)});
}

CwmModel heteroscedastic_model() {
  return CwmModel(Variant::gaussian_cwm, {line_component(0.4, -2.0, 1.5, 2.0, 1.0, 1.0), line_component(0.6, 2.5, 4.0, -1.0, 3.0, 2.5)});
}

struct TPart {
  double w, mu, var, nu, b, b0, s2, zeta;
};

CwmModel t_model(const TPart& a, const TPart& b) {
  auto comp = [](const TPart& p) {
    Component c;
    c.weight = p.w;
    c.x_marginal = StudentParams(scalar(p.mu), Matrix::Constant(1, 1, p.var), p.nu);
    c.y_conditional.map = LinearMap{scalar(p.b), p.b0};
    c.y_conditional.noise_var = p.s2;
    c.y_conditional.dof = p.zeta;
    return c;
  };
  return CwmModel(Variant::t_cwm, {comp(a), comp(b)});
}

// Expanded quadric of two linear-Gaussian components with d = 1, written
// from the densities rather than from the library.
double quadric_residual(const CwmModel& m, double x, double y) {
  double r = 0.0;
  for (int g = 0; g < 2; ++g) {
    const auto& c = m.component(g);
    const auto& p = std::get<GaussianParams>(*c.x_marginal);
    const double mu = p.mean()(0), v = p.covariance()(0, 0), s2 = c.y_conditional.noise_var;
    const double e = y - c.y_conditional.map.slope(0) * x - c.y_conditional.map.intercept;
    const double term = std::log(c.weight) - 0.5 * std::log(v) - 0.5 * (x - mu) * (x - mu) / v - 0.5 * std::log(s2) - 0.5 * e * e / s2;
    r += g == 1 ? term : -term;
  }
  return r;
}

// t decision equation for d = 1. `corrected` adds the ν^{ν/2} and ζ^{ζ/2}
// normalizing factors, which cancel only when the two groups share dofs.
double t_residual(const TPart& p0, const TPart& p1, double x, double y, bool corrected) {
  auto lg = [](double v) { return std::lgamma(v); };
  const double d = 1.0;
  double c = lg((p1.zeta + 1) / 2) + lg(p0.zeta / 2) - lg((p0.zeta + 1) / 2) - lg(p1.zeta / 2) + lg((p1.nu + d) / 2) + lg(p0.nu / 2) -
             lg((p0.nu + d) / 2) - lg(p1.nu / 2);
  if (corrected) c += 0.5 * (p1.nu * std::log(p1.nu) - p0.nu * std::log(p0.nu) + p1.zeta * std::log(p1.zeta) - p0.zeta * std::log(p0.zeta));
  const double s0 = std::sqrt(p0.s2), s1 = std::sqrt(p1.s2);
  const double e0 = (y - p0.b * x - p0.b0) / s0, e1 = (y - p1.b * x - p1.b0) / s1;
  const double d0 = (x - p0.mu) * (x - p0.mu) / p0.var, d1 = (x - p1.mu) * (x - p1.mu) / p1.var;
  return c + std::log(s0 / s1) + (p0.zeta + 1) / 2 * std::log(p0.zeta + e0 * e0) - (p1.zeta + 1) / 2 * std::log(p1.zeta + e1 * e1) +
         0.5 * std::log(p0.var / p1.var) + (p0.nu + d) / 2 * std::log(p0.nu + d0) - (p1.nu + d) / 2 * std::log(p1.nu + d1) +
         std::log(p1.w / p0.w);
}

// Largest residual over the contour, in units of the local gradient, i.e.
// the distance to the exact zero set to first order.
template <class F>
double max_contour_distance(const SurfaceGrid& g, F residual) {
  const double h = 1e-6;
  double worst = 0.0;
  for (const auto& line : g.contour) {
    for (const auto& p : line) {
      const double r = residual(p.x, p.y);
      const double gx = (residual(p.x + h, p.y) - residual(p.x - h, p.y)) / (2 * h);
      const double gy = (residual(p.x, p.y + h) - residual(p.x, p.y - h)) / (2 * h);
      worst = std::max(worst, std::abs(r) / std::hypot(gx, gy));
    }
  }
  return worst;
}

} // namespace

TEST(DecisionValue, IdenticalComponentsAreZero) {
  const CwmModel m(Variant::gaussian_cwm, {line_component(0.5, 1, 2, 3, 4, 5), line_component(0.5, 1, 2, 3, 4, 5)});
  Rng rng(41);
  for (int i = 0; i < 50; ++i) EXPECT_EQ(decision_value(m, scalar(rng.normal()), rng.normal()), 0.0);
}

TEST(DecisionValue, PosteriorLogit) {
  Rng rng(42);
  for (int t = 0; t < 10; ++t) {
    const CwmModel m = t % 2 ? test::random_t_cwm(2, 2, rng) : test::random_gaussian_cwm(2, 2, rng);
    for (int i = 0; i < 1000; ++i) {
      const Vector x = test::random_vector(2, rng, 2.0);
      const double y = 2.0 * rng.normal();
      const Vector lt = component_log_terms(m, x, y);
      const double dv = decision_value(m, x, y);
      EXPECT_LT(std::abs(dv - (lt(1) - lt(0))), 1e-10);
      const Vector p = posterior(m, x, y);
      if (p(0) > 1e-12 && p(1) > 1e-12) {
        EXPECT_LT(std::abs(dv - std::log(p(1) / p(0))), 1e-8);
      }
      EXPECT_EQ(dv > 0.0, argmax_lowest(p) == 1) << dv;
    }
  }
}

TEST(DecisionValue, HalfPosteriorOnTheSurface) {
  Rng rng(43);
  const CwmModel m = test::random_gaussian_cwm(2, 1, rng);
  int found = 0;
  for (int i = 0; i < 200; ++i) {
    const double x = 2.0 * rng.normal();
    // The zero set in y can have two branches; scan for a bracket first.
    double lo = -50.0, hi = lo;
    while (hi < 50.0 && (decision_value(m, scalar(x), lo) > 0.0) == (decision_value(m, scalar(x), hi) > 0.0)) lo = hi, hi += 0.5;
    if (hi >= 50.0) continue;
    const bool up = decision_value(m, scalar(x), hi) > 0.0;
    for (int k = 0; k < 200; ++k) {
      const double mid = 0.5 * (lo + hi);
      ((decision_value(m, scalar(x), mid) > 0.0) == up ? hi : lo) = mid;
    }
    const double y = 0.5 * (lo + hi);
    if (std::abs(decision_value(m, scalar(x), y)) < 1e-6) {
      ++found;
      EXPECT_LT(std::abs(posterior(m, scalar(x), y)(1) - 0.5), 1e-6);
    }
  }
  EXPECT_GT(found, 0);
}

TEST(DecisionValue, SwapNegates) {
  Rng rng(44);
  const CwmModel m = test::random_gaussian_cwm(2, 2, rng);
  const CwmModel s(Variant::gaussian_cwm, {m.component(1), m.component(0)});
  for (int i = 0; i < 50; ++i) {
    const Vector x = test::random_vector(2, rng);
    const double y = rng.normal();
    EXPECT_NEAR(decision_value(m, x, y), -decision_value(s, x, y), 1e-12);
  }
  EXPECT_THROW(decision_value(test::random_gaussian_cwm(3, 1, rng), scalar(0), 0), Error);
}

TEST(Contour, SymmetricHomoscedasticIsVerticalLine) {
  const CwmModel m = symmetric_model();
  EXPECT_EQ(classify_surface(m), SurfaceKind::hyperplane);
  const SurfaceGrid g = extract_contour(m, SurfaceWindow{-10, 10, -10, 10, 0, std::nullopt}, 101);
  ASSERT_EQ(g.contour.size(), 1u);
  const double cell = 20.0 / 100.0;
  for (const auto& p : g.contour[0]) EXPECT_LT(std::abs(p.x), cell);
  EXPECT_EQ(g.contour[0].size(), 101u);
}

TEST(Contour, QuadricResidual) {
  const CwmModel m = heteroscedastic_model();
  EXPECT_EQ(classify_surface(m), SurfaceKind::quadric);
  const SurfaceGrid g = extract_contour(m, SurfaceWindow{-8, 8, -20, 20, 0, std::nullopt}, 256);
  ASSERT_FALSE(g.empty());
  for (const auto& line : g.contour)
    for (const auto& p : line) EXPECT_NEAR(quadric_residual(m, p.x, p.y), decision_value(m, scalar(p.x), p.y), 1e-10);
  const double cell = std::hypot(16.0, 40.0) / 255.0;
  EXPECT_LT(max_contour_distance(g, [&](double x, double y) { return quadric_residual(m, x, y); }), cell);
}

TEST(Contour, StudentResidualCorrectedConstant) {
  const TPart a{0.45, -2.0, 1.5, 4.0, 2.0, 1.0, 1.0, 6.0}, b{0.55, 2.0, 3.0, 9.0, -1.0, 3.0, 2.0, 3.0};
  const CwmModel m = t_model(a, b);
  EXPECT_EQ(classify_surface(m), SurfaceKind::transcendental);
  const SurfaceGrid g = extract_contour(m, SurfaceWindow{-8, 8, -20, 20, 0, std::nullopt}, 256);
  ASSERT_FALSE(g.empty());
  const double cell = std::hypot(16.0, 40.0) / 255.0;
  EXPECT_LT(max_contour_distance(g, [&](double x, double y) { return t_residual(a, b, x, y, true); }), cell);
  // With unequal dofs the literal constant is off by a fixed amount.
  const Point2 p = g.contour[0][0];
  EXPECT_GT(std::abs(t_residual(a, b, p.x, p.y, false)), 0.1);
}

TEST(Contour, StudentResidualEqualDofs) {
  const TPart a{0.45, -2.0, 1.5, 5.0, 2.0, 1.0, 1.0, 7.0}, b{0.55, 2.0, 3.0, 5.0, -1.0, 3.0, 2.0, 7.0};
  const CwmModel m = t_model(a, b);
  const SurfaceGrid g = extract_contour(m, SurfaceWindow{-8, 8, -20, 20, 0, std::nullopt}, 256);
  ASSERT_FALSE(g.empty());
  const double cell = std::hypot(16.0, 40.0) / 255.0;
  EXPECT_LT(max_contour_distance(g, [&](double x, double y) { return t_residual(a, b, x, y, false); }), cell);
}

TEST(Contour, EmptyWindow) {
  const SurfaceGrid g = extract_contour(symmetric_model(), SurfaceWindow{5, 10, -10, 10, 0, std::nullopt}, 64);
  EXPECT_TRUE(g.empty());
  EXPECT_EQ(contour_csv(g), "x,y,segment_id\n");
}

TEST(Contour, MultivariateSlice) {
  Rng rng(45);
  const CwmModel m = test::random_gaussian_cwm(2, 2, rng);
  SurfaceWindow w{-6, 6, -15, 15, 1, Vector::Constant(2, 0.5)};
  const SurfaceGrid g = extract_contour(m, w, 128);
  for (const auto& line : g.contour) {
    for (const auto& p : line) {
      Vector x = Vector::Constant(2, 0.5);
      x(1) = p.x;
      // Linear interpolation error is bounded by the variation within a cell.
      EXPECT_LT(std::abs(decision_value(m, x, p.y)), 5.0);
    }
  }
  w.base = Vector::Zero(3);
  EXPECT_THROW(extract_contour(m, w, 16), Error);
}

TEST(ClassifySurface, Kinds) {
  CwmModel m = symmetric_model();
  EXPECT_EQ(classify_surface(m), SurfaceKind::hyperplane);
  EXPECT_EQ(classify_surface(to_fmrc(m)), SurfaceKind::hyperplane);
  const CwmModel slopes(Variant::gaussian_cwm, {line_component(0.5, -3, 2, 1, 0, 1), line_component(0.5, 3, 2, 2, 0, 1)});
  EXPECT_EQ(classify_surface(slopes), SurfaceKind::quadric);
  Rng rng(46);
  EXPECT_EQ(classify_surface(test::random_t_cwm(2, 1, rng)), SurfaceKind::transcendental);
}

TEST(Export, CsvAndSvg) {
  const SurfaceGrid g = extract_contour(symmetric_model(), SurfaceWindow{-10, 10, -10, 10, 0, std::nullopt}, 33);
  const std::string csv = contour_csv(g);
  EXPECT_EQ(csv.rfind("x,y,segment_id\n", 0), 0u);
  EXPECT_EQ(static_cast<size_t>(std::count(csv.begin(), csv.end(), '\n')), 1 + g.contour[0].size());
  const std::string svg = contour_svg(g, {{0, 0}, {1, 1}}, {0, kNoise});
  size_t count = 0;
  for (size_t pos = 0; (pos = svg.find("<polyline", pos)) != std::string::npos; ++pos) ++count;
  EXPECT_EQ(count, 1u);
  EXPECT_NE(svg.find("<circle"), std::string::npos);
  EXPECT_NE(svg.find("</svg>"), std::string::npos);
}
