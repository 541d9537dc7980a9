#include <cmath>
#include <numeric>

#include <gtest/gtest.h>

#include "cwm/cwm.hpp"
#include "support.hpp"

using namespace cwm;

namespace {

// Λ = |W| / |T| computed from explicit scatter sums.
double direct_wilks(const Dataset& data, const std::vector<int>& labels, int G) {
  const Index q = data.dim() + 1;
  Matrix z(data.size(), q);
  z << data.x, data.y;
  const Vector mean = z.colwise().mean().transpose();
  Matrix t = Matrix::Zero(q, q), w = Matrix::Zero(q, q);
  for (int g = 0; g < G; ++g) {
    Vector mg = Vector::Zero(q);
    double ng = 0.0;
    for (Index n = 0; n < z.rows(); ++n)
      if (labels[static_cast<size_t>(n)] == g) mg += z.row(n).transpose(), ng += 1.0;
    mg /= ng;
    for (Index n = 0; n < z.rows(); ++n)
      if (labels[static_cast<size_t>(n)] == g) w += (z.row(n).transpose() - mg) * (z.row(n).transpose() - mg).transpose();
  }
  for (Index n = 0; n < z.rows(); ++n) t += (z.row(n).transpose() - mean) * (z.row(n).transpose() - mean).transpose();
  return w.determinant() / t.determinant();
}

} // namespace

TEST(Wilks, OneGroupIsOne) {
  const Dataset data = generate(builtin_scenario("ex2", 1));
  EXPECT_NEAR(wilks_lambda(data, std::vector<int>(static_cast<size_t>(data.size()), 0)), 1.0, 1e-12);
}

TEST(Wilks, SeparationDrivesToZero) {
  Rng rng(31);
  double previous = 1.0;
  for (double shift : {1.0, 10.0, 100.0, 1000.0}) {
    Matrix x(100, 1);
    Vector y(100);
    std::vector<int> labels(100);
    for (Index i = 0; i < 100; ++i) {
      labels[static_cast<size_t>(i)] = static_cast<int>(i % 2);
      x(i, 0) = rng.normal() + (i % 2) * shift;
      y(i) = rng.normal() + (i % 2) * shift;
    }
    const double l = wilks_lambda(Dataset(x, y), labels);
    EXPECT_LT(l, previous);
    previous = l;
  }
  EXPECT_LT(previous, 1e-4);
}

TEST(Wilks, MatchesDirectDeterminants) {
  const Dataset data = generate(builtin_scenario("ex6_s2", 3));
  std::vector<int> labels = *data.labels;
  for (auto& l : labels) l = l == kNoise ? 0 : l;
  EXPECT_NEAR(wilks_lambda(data, labels), direct_wilks(data, labels, 2), 1e-10);
}

TEST(Wilks, InvariantUnderAffineMaps) {
  Rng rng(32);
  const Dataset data = generate(builtin_scenario("ex2", 5));
  const double base = wilks_lambda(data, *data.labels);
  for (int t = 0; t < 10; ++t) {
    // Random rotation and scaling of (x, y) plus a translation.
    Matrix a = test::random_spd(2, rng) * Eigen::HouseholderQR<Matrix>(Matrix::Random(2, 2)).householderQ();
    Matrix z(data.size(), 2);
    z << data.x, data.y;
    z = (z * a.transpose()).rowwise() + test::random_vector(2, rng, 10.0).transpose();
    EXPECT_NEAR(wilks_lambda(Dataset(z.col(0), z.col(1)), *data.labels), base, 1e-9);
  }
}

TEST(Wilks, NoiseRowsExcluded) {
  const Dataset data = generate(builtin_scenario("ex4_s2", 1));
  std::vector<int> kept;
  std::vector<Index> noise;
  for (Index n = 0; n < data.size(); ++n) {
    const int l = (*data.labels)[static_cast<size_t>(n)];
    if (l == kNoise) noise.push_back(n);
    else kept.push_back(l);
  }
  EXPECT_NEAR(wilks_lambda(data, *data.labels), wilks_lambda(data.without(noise), kept), 1e-12);
}

TEST(Iwf, ZeroOnTheLine) {
  Matrix x(30, 1);
  for (Index i = 0; i < 30; ++i) x(i, 0) = static_cast<double>(i) / 3.0;
  const Vector y = (2.0 - 1.5 * x.col(0).array()).matrix();
  Component c;
  c.x_marginal = GaussianParams(Vector::Constant(1, 5.0), Matrix::Constant(1, 1, 8.0));
  c.y_conditional.map = LinearMap{Vector::Constant(1, -1.5), 2.0};
  EXPECT_NEAR(iwf(Dataset(x, y), CwmModel(Variant::gaussian_cwm, {c})), 0.0, 1e-12);
  Component d = c;
  d.x_marginal = GaussianParams(Vector::Constant(1, -5.0), Matrix::Constant(1, 1, 1.0));
  c.weight = d.weight = 0.5;
  EXPECT_NEAR(iwf(Dataset(x, y), CwmModel(Variant::gaussian_cwm, {c, d})), 0.0, 1e-12);
}

TEST(Iwf, DirectFormula) {
  Rng rng(33);
  const CwmModel m = test::random_gaussian_cwm(3, 2, rng);
  const Dataset data = test::sample_cwm(m, 100, rng);
  double ss = 0.0;
  for (Index n = 0; n < data.size(); ++n) {
    Vector terms(3);
    for (Index g = 0; g < 3; ++g) {
      const auto& c = m.component(g);
      const auto& gp = std::get<GaussianParams>(*c.x_marginal);
      const double r = data.y(n) - c.y_conditional.map(data.row(n));
      terms(g) = std::log(c.weight) + static_cast<double>(test::ref_gaussian_logpdf(data.row(n), gp.mean(), gp.covariance())) -
                 0.5 * std::log(2.0 * M_PI * c.y_conditional.noise_var) - 0.5 * r * r / c.y_conditional.noise_var;
    }
    const Vector p = (terms.array() - terms.maxCoeff()).exp();
    double pred = 0.0;
    for (Index g = 0; g < 3; ++g) pred += p(g) / p.sum() * m.component(g).y_conditional.map(data.row(n));
    ss += (data.y(n) - pred) * (data.y(n) - pred);
  }
  EXPECT_NEAR(iwf(data, m), std::sqrt(ss / 100.0), 1e-10);
}

TEST(Misclassification, IdentityAndSwap) {
  const std::vector<int> truth{0, 0, 1, 1, 1, 2};
  const auto same = misclassification(truth, truth, 3);
  EXPECT_EQ(same.eta, 0.0);
  EXPECT_EQ(same.permutation, (std::vector<int>{0, 1, 2}));
  const auto swapped = misclassification(truth, {1, 1, 0, 0, 0, 2}, 3);
  EXPECT_EQ(swapped.eta, 0.0);
  EXPECT_EQ(swapped.permutation, (std::vector<int>{1, 0, 2}));
}

TEST(Misclassification, RobustTableCounts) {
  // Rows: true 1, 2, 3, outlier. Columns: estimated 1, 2, 3, outlier.
  const int counts[4][4] = {{98, 0, 0, 2}, {0, 97, 0, 3}, {0, 0, 100, 0}, {1, 0, 15, 34}};
  std::vector<int> truth, pred;
  auto label = [](int k) { return k == 3 ? kNoise : k; };
  for (int t = 0; t < 4; ++t)
    for (int p = 0; p < 4; ++p)
      for (int i = 0; i < counts[t][p]; ++i) truth.push_back(label(t)), pred.push_back(label(p));
  // Relabel predictions so alignment has to undo it.
  for (auto& p : pred) p = p == 0 ? 2 : p == 2 ? 0 : p;
  const auto m = misclassification(truth, pred, 3);
  EXPECT_EQ(truth.size(), 350u);
  EXPECT_NEAR(m.eta, 21.0 / 350.0, 1e-15);
  ASSERT_TRUE(m.has_noise);
  for (int t = 0; t < 4; ++t)
    for (int p = 0; p < 4; ++p) EXPECT_EQ(m.confusion(t, p), counts[t][p]);
}

TEST(Misclassification, NoiseOnlyMatchesNoise) {
  const auto m = misclassification({kNoise, kNoise, 0}, {0, 0, kNoise}, 1);
  EXPECT_NEAR(m.eta, 1.0, 1e-15);
}

TEST(ParameterCount, Contract) {
  EXPECT_EQ(parameter_count(Variant::gaussian_cwm, 1, 1, false, false), 5);
  EXPECT_EQ(parameter_count(Variant::fmr, 1, 1, false, false), 3);
  // d = 2, G = 3: 2 + 3 + 2 + 2 per group, plus 2 weights.
  EXPECT_EQ(parameter_count(Variant::gaussian_cwm, 3, 2, false, false), 29);
  EXPECT_EQ(parameter_count(Variant::t_cwm, 3, 2, true, false), 35);
  EXPECT_EQ(parameter_count(Variant::fmg, 2, 1, false, false), 11);
  EXPECT_EQ(parameter_count(Variant::fmrc, 3, 1, false, false), 9 + 4);
  EXPECT_EQ(parameter_count(Variant::gaussian_cwm, 2, 1, false, true), 10);
}

TEST(Bic, HandRecount) {
  Rng rng(34);
  const Dataset data = test::sample_cwm(test::random_gaussian_cwm(2, 1, rng), 150, rng);
  FitConfig c;
  c.seed = 2;
  const FitResult cwm = fit(data, c);
  c.variant = Variant::fmr;
  const FitResult fmr = fit(data, c);
  const double ln = std::log(150.0);
  const double by_hand_cwm = -2.0 * log_likelihood(cwm.model, data) + 11.0 * ln;
  const double by_hand_fmr = -2.0 * log_likelihood(fmr.model, data) + 7.0 * ln;
  EXPECT_NEAR(bic(cwm, 150), by_hand_cwm, 1e-6);
  EXPECT_NEAR(bic(fmr, 150), by_hand_fmr, 1e-6);

  // Joint scale: FMR plus one Gaussian law for x (2 more parameters).
  const Vector xs = data.x.col(0);
  const double v = (xs.array() - xs.mean()).square().mean();
  double lx = 0.0;
  for (Index n = 0; n < 150; ++n) lx += gaussian_logpdf_1d(xs(n), xs.mean(), v);
  const double joint_fmr = -2.0 * (log_likelihood(fmr.model, data) + lx) + 9.0 * ln;
  EXPECT_NEAR(bic_joint_scale(fmr, data), joint_fmr, 1e-6);
  EXPECT_EQ(bic_joint_scale(cwm, data) < bic_joint_scale(fmr, data), by_hand_cwm < joint_fmr);
}

TEST(Evaluate, UnlabeledHasNoRate) {
  const Dataset labeled = generate(builtin_scenario("ex1", 2));
  const Dataset data(labeled.x, labeled.y);
  FitConfig c;
  const MetricsReport r = evaluate(data, fit(data, c));
  EXPECT_FALSE(r.misclassification_rate.has_value());
  EXPECT_GT(r.wilks_lambda, 0.0);
}
