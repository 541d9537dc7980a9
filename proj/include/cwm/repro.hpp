#pragma once

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <string>
#include <vector>

#include "cwm/datagen.hpp"
#include "cwm/em.hpp"
#include "cwm/metrics.hpp"
#include "cwm/robust.hpp"

// Seeded drivers for the simulation studies. Seed s generates the data and
// seeds every fit on it.

namespace cwm::repro {

inline double median(std::vector<double> v) {
  require(!v.empty(), ErrorCode::invalid_argument, "median of empty sample");
  std::sort(v.begin(), v.end());
  const size_t m = v.size() / 2;
  return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

/// Comparator fit for FMR/FMRC: one random-partition start, the usual
/// default of mixture-of-regression software.
inline FitConfig comparator_config(Variant v, Index groups, std::uint64_t seed) {
  FitConfig c;
  c.variant = v;
  c.groups = groups;
  c.seed = seed;
  c.init = InitKind::random_partition;
  c.n_starts = 1;
  return c;
}

inline FitConfig cwm_config(Variant v, Index groups, std::uint64_t seed) {
  FitConfig c;
  c.variant = v;
  c.groups = groups;
  c.seed = seed;
  return c;
}

struct ClassicRun {
  std::uint64_t seed = 0;
  double cwm_eta = 0.0, cwm_lambda = 0.0, cwm_iwf = 0.0;
  double fmr_eta = 0.0, fmr_lambda = 0.0, fmr_iwf = 0.0;
  double fmrc_eta = 0.0;
  /// FMRC with the default multi-start k-means protocol, for reference.
  double fmrc_multistart_eta = 0.0;
  double seconds = 0.0;
};

/// Gaussian CWM against FMR and FMRC on a noise-free scenario.
inline ClassicRun run_classic(const std::string& scenario, Index groups, std::uint64_t seed) {
  const auto t0 = std::chrono::steady_clock::now();
  const Dataset data = generate(builtin_scenario(scenario, seed));
  ClassicRun r;
  r.seed = seed;
  const auto cwm = evaluate(data, fit(data, cwm_config(Variant::gaussian_cwm, groups, seed)));
  r.cwm_eta = *cwm.misclassification_rate;
  r.cwm_lambda = cwm.wilks_lambda;
  r.cwm_iwf = cwm.iwf;
  const auto fmr = evaluate(data, fit(data, comparator_config(Variant::fmr, groups, seed)));
  r.fmr_eta = *fmr.misclassification_rate;
  r.fmr_lambda = fmr.wilks_lambda;
  r.fmr_iwf = fmr.iwf;
  r.fmrc_eta = *evaluate(data, fit(data, comparator_config(Variant::fmrc, groups, seed))).misclassification_rate;
  r.fmrc_multistart_eta = *evaluate(data, fit(data, cwm_config(Variant::fmrc, groups, seed))).misclassification_rate;
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return r;
}

struct RobustRun {
  std::uint64_t seed = 0;
  double tg_eta = 0.0, tt_eta = 0.0;
  double seconds = 0.0;
};

/// Both robust strategies on one seeded dataset, sharing the detector fit.
inline RobustRun run_robust(const std::string& scenario, Index groups, std::uint64_t seed, double alpha = 0.05) {
  const auto t0 = std::chrono::steady_clock::now();
  const Dataset data = generate(builtin_scenario(scenario, seed));
  RobustConfig cfg;
  cfg.alpha = alpha;
  cfg.fit_config = cwm_config(Variant::t_cwm, groups, seed);
  const FitResult detector = fit_detector(data, cfg);
  RobustRun r;
  r.seed = seed;
  cfg.refit_variant = Variant::gaussian_cwm;
  r.tg_eta = robust_refit(data, detector, cfg).confusion->eta;
  cfg.refit_variant = Variant::t_cwm;
  r.tt_eta = robust_refit(data, detector, cfg).confusion->eta;
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return r;
}

/// Reference misclassification rates (percent) of the robust strategies.
struct RobustReference {
  const char* scenario;
  Index groups;
  double tg;
  double tt;
};

inline const std::vector<RobustReference>& robust_references() {
  static const std::vector<RobustReference> refs{
      {"ex4_s2", 3, 6.00, 5.71}, {"ex4_s4", 3, 4.29, 5.71}, {"ex5_s2", 3, 4.00, 5.14},
      {"ex5_s4", 3, 40.00, 8.00}, {"ex6_s2", 2, 2.00, 2.29}, {"ex6_s4", 2, 6.57, 7.43},
  };
  return refs;
}

struct CrabRun {
  double constant = 0.0;
  double t_cwm_eta = 0.0;
  double fmt_eta = 0.0;
};

/// Random-partition multi-start. k-means on the crab measurements splits by
/// overall size rather than sex, so all its starts share one basin.
inline FitConfig crab_config(Variant v, std::uint64_t seed) {
  FitConfig c = cwm_config(v, 2, seed);
  c.init = InitKind::random_partition;
  c.n_starts = 20;
  return c;
}

/// t-CWM and FMT error rates on the crab data with the 25th row perturbed.
inline std::vector<CrabRun> run_crab(const Dataset& crabs, const std::vector<double>& constants, std::uint64_t seed) {
  std::vector<CrabRun> out;
  for (double c : constants) {
    const Dataset d = crab_perturb(crabs, c);
    CrabRun r;
    r.constant = c;
    r.t_cwm_eta = *evaluate(d, fit(d, crab_config(Variant::t_cwm, seed))).misclassification_rate;
    r.fmt_eta = *evaluate(d, fit(d, crab_config(Variant::fmt, seed))).misclassification_rate;
    out.push_back(r);
  }
  return out;
}

struct BicRun {
  std::uint64_t seed = 0;
  double cwm = 0.0;
  double fmr = 0.0;
};

/// BIC of Gaussian CWM and FMR on data whose groups differ in their x-laws.
/// FMR is scored on the joint scale so both criteria use the same likelihood.
inline BicRun run_bic(std::uint64_t seed) {
  const Dataset data = generate(builtin_scenario("ex1", seed));
  BicRun r;
  r.seed = seed;
  r.cwm = bic_joint_scale(fit(data, cwm_config(Variant::gaussian_cwm, 2, seed)), data);
  r.fmr = bic_joint_scale(fit(data, cwm_config(Variant::fmr, 2, seed)), data);
  return r;
}

} // namespace cwm::repro
