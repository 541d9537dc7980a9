#include <chrono>
#include <cmath>
#include <cstdio>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "cwm/cwm.hpp"
#include "cwm/repro.hpp"

namespace {

using namespace cwm;

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitData = 3;
constexpr int kExitDegenerate = 4;

int exit_code_for(ErrorCode code) {
  switch (code) {
  case ErrorCode::invalid_argument: return kExitUsage;
  case ErrorCode::dimension_mismatch:
  case ErrorCode::data_error:
  case ErrorCode::io_error: return kExitData;
  case ErrorCode::degenerate_fit:
  case ErrorCode::not_positive_definite: return kExitDegenerate;
  }
  return kExitData;
}

struct FitFlags {
  std::optional<std::string> config_path;
  std::optional<std::string> variant;
  std::optional<long> groups;
  std::optional<std::uint64_t> seed;
  std::optional<int> starts;
  std::optional<std::string> dof;
  std::optional<std::string> init;
  std::optional<int> max_iter;
  bool equal_weights = false;

  void attach(CLI::App* app) {
    app->add_option("--config", config_path, "JSON file with FitConfig fields");
    app->add_option("--groups,-G", groups, "number of groups");
    app->add_option("--seed", seed, "master seed");
    app->add_option("--starts", starts, "number of EM starts");
    app->add_option("--dof", dof, "fixed dof value or 'estimate'");
    app->add_option("--init", init, "kmeans | random_partition");
    app->add_option("--max-iter", max_iter, "EM iteration cap");
    app->add_flag("--equal-weights", equal_weights, "fix mixing weights at 1/G");
  }

  FitConfig build() const {
    FitConfig c;
    if (config_path) c = config_from_json(Json::parse(read_text(*config_path)), c);
    if (variant) c.variant = parse_variant(*variant);
    if (groups) c.groups = *groups;
    if (seed) c.seed = *seed;
    if (starts) c.n_starts = *starts;
    if (max_iter) c.max_iter = *max_iter;
    if (init) {
      c.init = parse_init(*init);
      require(c.init != InitKind::given_labels || !c.given_labels.empty(), ErrorCode::invalid_argument,
              "--init given_labels needs labels in the --config file");
    }
    if (dof) c.dof = *dof == "estimate" ? DofMode::estimate() : DofMode::fixed(std::stod(*dof));
    if (equal_weights) c.equal_weights = true;
    c.validate();
    return c;
  }
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

void write_json(const std::string& path, const Json& j) { write_text(path, j.dump(2) + "\n"); }

void write_sidecar(const std::string& path, const RunManifest& m) { write_json(path + ".manifest.json", manifest_json(m)); }

std::string percent(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f%%", 100.0 * v);
  return buf;
}

std::vector<double> parse_list(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(std::stod(item));
  return out;
}

// ---------------------------------------------------------------------------

int cmd_generate(const std::string& scenario, const std::optional<std::string>& spec_path, std::uint64_t seed, const std::string& out) {
  const auto t0 = std::chrono::steady_clock::now();
  ScenarioSpec spec = spec_path ? scenario_from_json(Json::parse(read_text(*spec_path))) : builtin_scenario(scenario);
  spec.seed = seed;
  write_text(out, dataset_csv(generate(spec)));
  RunManifest m{"generate", scenario_to_json(spec), seed, {}, {out}, seconds_since(t0)};
  if (spec_path) m.inputs.push_back(*spec_path);
  else m.config["scenario"] = scenario;
  // Duration is omitted from CSV sidecars so repeated runs stay byte-identical.
  m.duration_s = 0.0;
  write_sidecar(out, m);
  return kExitOk;
}

int cmd_fit(const std::string& in, const FitConfig& cfg, const std::string& out) {
  const auto t0 = std::chrono::steady_clock::now();
  const Dataset data = read_dataset_csv(in);
  const FitResult result = fit(data, cfg);
  const MetricsReport metrics = evaluate(data, result);
  const std::string model_path = out + ".model.json", metrics_path = out + ".metrics.json";
  const RunManifest m{"fit", config_to_json(cfg), cfg.seed, {in}, {model_path, metrics_path}, seconds_since(t0)};
  Json model = model_to_json(result.model);
  model["manifest"] = manifest_json(m);
  write_json(model_path, model);
  Json report = metrics_json(metrics);
  report["fit"] = fit_summary_json(result);
  report["manifest"] = manifest_json(m);
  write_json(metrics_path, report);
  if (!result.converged) std::cerr << "warning: EM stopped at max_iter without meeting rel_tol\n";
  std::cout << "loglik " << result.loglik() << "  BIC " << metrics.bic;
  if (metrics.misclassification_rate) std::cout << "  eta " << percent(*metrics.misclassification_rate);
  std::cout << "\n";
  return kExitOk;
}

int cmd_robust(const std::string& in, const RobustConfig& cfg, const std::string& out) {
  const auto t0 = std::chrono::steady_clock::now();
  const Dataset data = read_dataset_csv(in);
  const RobustResult r = robust_fit(data, cfg);
  const std::string json_path = out + ".robust.json", csv_path = out + ".confusion.csv";
  Json config = config_to_json(cfg.fit_config);
  config["alpha"] = cfg.alpha;
  config["refit_variant"] = std::string(to_string(cfg.refit_variant));
  config["rule_space"] = cfg.space == RuleSpace::joint ? "joint" : "x_only";
  config["recheck"] = cfg.recheck;
  RunManifest m{"robust-fit", config, cfg.fit_config.seed, {in}, {json_path}, seconds_since(t0)};
  if (r.confusion) m.outputs.push_back(csv_path);
  Json j = robust_json(r);
  j["manifest"] = manifest_json(m);
  write_json(json_path, j);
  if (r.confusion) {
    write_text(csv_path, confusion_csv(*r.confusion));
    write_sidecar(csv_path, m);
  }
  for (const auto& w : r.warnings) std::cerr << "warning: " << w << "\n";
  std::cout << "outliers " << r.outlier_indices.size() << " (+" << r.recheck_indices.size() << " on re-check)";
  if (r.confusion) std::cout << "  eta " << percent(r.confusion->eta);
  std::cout << "\n";
  return kExitOk;
}

int cmd_surface(const std::string& model_path, const std::vector<double>& window, Index resolution, Index axis,
                const std::optional<std::string>& data_path, const std::string& out) {
  const auto t0 = std::chrono::steady_clock::now();
  require(window.size() == 4, ErrorCode::invalid_argument, "--window needs xlo,xhi,ylo,yhi");
  const CwmModel model = model_from_json(Json::parse(read_text(model_path)));
  SurfaceWindow w{window[0], window[1], window[2], window[3], axis, std::nullopt};
  std::vector<Point2> scatter;
  std::vector<int> labels;
  std::optional<Dataset> data;
  if (data_path) {
    data = read_dataset_csv(*data_path);
    for (Index n = 0; n < data->size(); ++n) scatter.push_back({data->x(n, axis), data->y(n)});
    labels = classify(model, *data);
  }
  if (model.dim() > 1) {
    // Other predictors are held at their data means, or at zero without data.
    w.base = data ? Vector(data->x.colwise().mean().transpose()) : Vector(Vector::Zero(model.dim()));
  }
  const SurfaceGrid grid = extract_contour(model, w, resolution);
  const std::string csv_path = out + ".csv", svg_path = out + ".svg";
  write_text(csv_path, contour_csv(grid));
  write_text(svg_path, contour_svg(grid, scatter, labels));
  Json config{{"window", window}, {"resolution", resolution}, {"axis", axis}};
  RunManifest m{"surface", config, 0, {model_path}, {csv_path, svg_path}, seconds_since(t0)};
  if (data_path) m.inputs.push_back(*data_path);
  m.config["surface_kind"] = std::string(to_string(classify_surface(model)));
  m.duration_s = 0.0;
  write_sidecar(csv_path, m);
  if (grid.empty()) std::cerr << "warning: decision surface does not cross the requested window\n";
  std::cout << "surface " << to_string(classify_surface(model)) << ", " << grid.contour.size() << " polyline(s)\n";
  return kExitOk;
}

int cmd_evaluate(const std::string& model_path, const std::string& in, const std::string& out) {
  const auto t0 = std::chrono::steady_clock::now();
  const CwmModel model = model_from_json(Json::parse(read_text(model_path)));
  const Dataset data = read_dataset_csv(in);
  const std::vector<int> predicted = classify(model, data);
  Json j;
  j["loglik"] = log_likelihood(model, data);
  j["iwf"] = iwf(data, model);
  j["wilks_lambda"] = wilks_lambda(data, predicted);
  Json labels = Json::array();
  for (int l : predicted) labels.push_back(label_text(l));
  j["predicted"] = std::move(labels);
  if (data.labels) {
    const auto mc = misclassification(*data.labels, predicted, static_cast<int>(model.groups()));
    j["misclassification_rate"] = mc.eta;
    j["confusion"] = detail::to_json(mc.confusion);
  }
  j["manifest"] = manifest_json(RunManifest{"evaluate", Json::object(), 0, {model_path, in}, {out}, seconds_since(t0)});
  write_json(out, j);
  return kExitOk;
}

int cmd_crab(const std::string& in, bool subsample, const std::vector<double>& constants, std::uint64_t seed, const std::string& out) {
  const auto t0 = std::chrono::steady_clock::now();
  const Dataset crabs = load_crab_csv(in, subsample);
  const auto runs = repro::run_crab(crabs, constants, seed);
  Json rows = Json::array();
  std::cout << "constant  FMT      t-CWM\n";
  for (const auto& r : runs) {
    rows.push_back({{"constant", r.constant}, {"fmt_error", r.fmt_eta}, {"t_cwm_error", r.t_cwm_eta}});
    std::printf("%8g  %-7s  %s\n", r.constant, percent(r.fmt_eta).c_str(), percent(r.t_cwm_eta).c_str());
  }
  Json config{{"subsample", subsample}, {"constants", constants}, {"fit", config_to_json(repro::crab_config(Variant::t_cwm, seed))}};
  write_json(out, {{"rows", rows}, {"manifest", manifest_json(RunManifest{"crab", config, seed, {in}, {out}, seconds_since(t0)})}});
  return kExitOk;
}

int cmd_repro(int seeds, const std::string& out) {
  const auto t0 = std::chrono::steady_clock::now();
  std::ostringstream md;
  Json report;
  md << "# Simulation reproduction (" << seeds << " seeds)\n\n";
  md << "Medians over seeds 1.." << seeds << ". Reference columns hold the target values.\n\n";

  struct Classic {
    const char* name;
    Index groups;
    double cwm, fmr, fmrc;
  };
  md << "| scenario | CWM eta | ref | FMR eta | ref | FMRC eta | ref | CWM Lambda | CWM IWF |\n|---|---|---|---|---|---|---|---|---|\n";
  for (const Classic c : {Classic{"ex1", 2, 0.0, 5.33, std::nan("")}, Classic{"ex3", 3, 0.0, 51.33, 45.78}}) {
    std::vector<double> ce, fe, fce, cl, ci;
    for (int s = 1; s <= seeds; ++s) {
      const auto r = repro::run_classic(c.name, c.groups, static_cast<std::uint64_t>(s));
      ce.push_back(100 * r.cwm_eta);
      fe.push_back(100 * r.fmr_eta);
      fce.push_back(100 * r.fmrc_eta);
      cl.push_back(r.cwm_lambda);
      ci.push_back(r.cwm_iwf);
    }
    char line[512];
    std::snprintf(line, sizeof line, "| %s | %.2f | %.2f | %.2f | %.2f | %.2f | %s | %.4f | %.3f |\n", c.name, repro::median(ce), c.cwm,
                  repro::median(fe), c.fmr, repro::median(fce), std::isnan(c.fmrc) ? "-" : std::to_string(c.fmrc).substr(0, 5).c_str(),
                  repro::median(cl), repro::median(ci));
    md << line;
    report[c.name] = {{"cwm_eta", ce}, {"fmr_eta", fe}, {"fmrc_eta", fce}, {"cwm_lambda", cl}, {"cwm_iwf", ci}};
  }

  md << "\n| scenario | tG eta | ref | tt eta | ref |\n|---|---|---|---|---|\n";
  for (const auto& ref : repro::robust_references()) {
    std::vector<double> tg, tt;
    for (int s = 1; s <= seeds; ++s) {
      const auto r = repro::run_robust(ref.scenario, ref.groups, static_cast<std::uint64_t>(s));
      tg.push_back(100 * r.tg_eta);
      tt.push_back(100 * r.tt_eta);
    }
    char line[256];
    std::snprintf(line, sizeof line, "| %s | %.2f | %.2f | %.2f | %.2f |\n", ref.scenario, repro::median(tg), ref.tg, repro::median(tt), ref.tt);
    md << line;
    report[ref.scenario] = {{"tg_eta", tg}, {"tt_eta", tt}};
  }
  write_text(out, md.str());
  write_json(out + ".json", {{"results", report},
                             {"manifest", manifest_json(RunManifest{"repro", {{"seeds", seeds}}, 0, {}, {out}, seconds_since(t0)})}});
  std::cout << md.str();
  return kExitOk;
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"Cluster-weighted modeling: simulation, fitting, robust clustering and decision surfaces"};
  app.require_subcommand(1);

  std::string scenario = "ex1", out;
  std::optional<std::string> spec_path;
  std::uint64_t gen_seed = 0;
  auto* gen = app.add_subcommand("generate", "write a simulated scenario as CSV");
  gen->add_option("scenario", scenario, "builtin scenario name");
  gen->add_option("--spec", spec_path, "scenario JSON instead of a builtin name");
  gen->add_option("--seed", gen_seed, "generator seed");
  gen->add_option("--out", out, "output CSV")->required();

  std::string in;
  FitFlags fit_flags;
  std::string fit_out;
  auto* fitc = app.add_subcommand("fit", "fit a model and report metrics");
  fitc->add_option("input", in, "dataset CSV")->required();
  fitc->add_option("--variant", fit_flags.variant, "gaussian_cwm | t_cwm | fmg | fmt | fmr | fmrc");
  fit_flags.attach(fitc);
  fitc->add_option("--out", fit_out, "output prefix (<out>.model.json, <out>.metrics.json)")->required();

  FitFlags robust_flags;
  std::string refit = "t_cwm", robust_out, rule = "joint";
  double alpha = 0.05;
  bool no_recheck = false;
  auto* rob = app.add_subcommand("robust-fit", "three-step robust clustering with a noise group");
  rob->add_option("input", in, "dataset CSV")->required();
  rob->add_option("--variant", refit, "refit variant: gaussian_cwm (tG) or t_cwm (tt)");
  rob->add_option("--alpha", alpha, "outlier rule level");
  rob->add_option("--rule", rule, "joint | x_only");
  rob->add_flag("--no-recheck", no_recheck, "skip re-testing retained rows under the refit");
  robust_flags.attach(rob);
  rob->add_option("--out", robust_out, "output prefix (<out>.robust.json, <out>.confusion.csv)")->required();

  std::string model_path, surface_out, window_text;
  std::optional<std::string> surface_data;
  Index resolution = 512, axis = 0;
  auto* surf = app.add_subcommand("surface", "export the two-group decision surface");
  surf->add_option("model", model_path, "model JSON")->required();
  surf->add_option("--window", window_text, "xlo,xhi,ylo,yhi")->required();
  surf->add_option("--resolution", resolution, "grid points per axis");
  surf->add_option("--axis", axis, "predictor on the horizontal axis (0-based)");
  surf->add_option("--data", surface_data, "dataset CSV drawn under the curve");
  surf->add_option("--out", surface_out, "output prefix (<out>.csv, <out>.svg)")->required();

  std::string eval_out;
  auto* eval = app.add_subcommand("evaluate", "score a saved model on a dataset");
  eval->add_option("model", model_path, "model JSON")->required();
  eval->add_option("input", in, "dataset CSV")->required();
  eval->add_option("--out", eval_out, "output JSON")->required();

  bool subsample = false;
  std::string constants_text = "-15,-10,-5,0,5,10,15,20", crab_out;
  std::uint64_t crab_seed = 1;
  auto* crab = app.add_subcommand("crab", "perturbation study on the crab measurements");
  crab->add_option("input", in, "crab CSV (columns sex, FL, RW, CL, CW, BD)")->required();
  crab->add_flag("--subsample", subsample, "first 50 rows of each sex");
  crab->add_option("--constants", constants_text, "comma-separated perturbation constants");
  crab->add_option("--seed", crab_seed, "master seed");
  crab->add_option("--out", crab_out, "output JSON")->required();

  int seeds = 20;
  std::string repro_out;
  auto* rep = app.add_subcommand("repro", "rerun the simulation tables and compare with reference values");
  rep->add_option("--seeds", seeds, "number of seeds");
  rep->add_option("--out", repro_out, "output Markdown report")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*gen) return cmd_generate(scenario, spec_path, gen_seed, out);
    if (*fitc) return cmd_fit(in, fit_flags.build(), fit_out);
    if (*rob) {
      RobustConfig cfg;
      cfg.fit_config = robust_flags.build();
      cfg.alpha = alpha;
      if (refit == "tG") refit = "gaussian_cwm";
      if (refit == "tt") refit = "t_cwm";
      cfg.refit_variant = parse_variant(refit);
      require(rule == "joint" || rule == "x_only", ErrorCode::invalid_argument, "--rule must be joint or x_only");
      cfg.space = rule == "joint" ? RuleSpace::joint : RuleSpace::x_only;
      cfg.recheck = !no_recheck;
      return cmd_robust(in, cfg, robust_out);
    }
    if (*surf) return cmd_surface(model_path, parse_list(window_text), resolution, axis, surface_data, surface_out);
    if (*eval) return cmd_evaluate(model_path, in, eval_out);
    if (*crab) return cmd_crab(in, subsample, parse_list(constants_text), crab_seed, crab_out);
    if (*rep) return cmd_repro(seeds, repro_out);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code_for(e.code());
  } catch (const Json::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: invalid number: " << e.what() << "\n";
    return kExitUsage;
  }
  return kExitUsage;
}
