#pragma once

#include <charconv>
#include <cstdio>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "cwm/datagen.hpp"
#include "cwm/em.hpp"
#include "cwm/error.hpp"
#include "cwm/metrics.hpp"
#include "cwm/model.hpp"
#include "cwm/robust.hpp"

namespace cwm {

using Json = nlohmann::json;

inline constexpr std::string_view kVersion = "0.1.0";

// ---------------------------------------------------------------------------
// Files

inline std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), ErrorCode::io_error, "cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  require(out.good(), ErrorCode::io_error, "cannot write " + path);
  out << text;
  require(out.good(), ErrorCode::io_error, "write failed for " + path);
}

// ---------------------------------------------------------------------------
// CSV

namespace detail {

/// Splits one CSV record; fields may be double-quoted with "" escapes.
inline std::vector<std::string> split_csv(std::string_view line) {
  std::vector<std::string> out;
  std::string field;
  bool quoted = false;
  for (size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        field += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        field += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(std::move(field));
      field.clear();
    } else {
      field += c;
    }
  }
  out.push_back(std::move(field));
  return out;
}

inline std::vector<std::string> csv_lines(const std::string& text) {
  std::vector<std::string> lines;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(std::move(line));
  }
  return lines;
}

inline double parse_double(std::string_view s, size_t line_no, std::string_view column) {
  while (!s.empty() && s.front() == ' ') s.remove_prefix(1);
  while (!s.empty() && s.back() == ' ') s.remove_suffix(1);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v)) {
    fail(ErrorCode::data_error,
         "line " + std::to_string(line_no) + ": column " + std::string(column) + ": cannot parse number '" + std::string(s) + "'");
  }
  return v;
}

} // namespace detail

/// Parses CSV with a header naming predictor columns, a `y` column and an
/// optional `label` column (1-based group index or "noise").
inline Dataset parse_dataset_csv(const std::string& text) {
  const auto lines = detail::csv_lines(text);
  require(!lines.empty(), ErrorCode::data_error, "line 1: missing header");
  const auto header = detail::split_csv(lines[0]);
  std::optional<size_t> y_col, label_col;
  std::vector<size_t> x_cols;
  for (size_t c = 0; c < header.size(); ++c) {
    if (header[c] == "y") y_col = c;
    else if (header[c] == "label") label_col = c;
    else x_cols.push_back(c);
  }
  require(y_col.has_value(), ErrorCode::data_error, "line 1: header has no 'y' column");
  require(!x_cols.empty(), ErrorCode::data_error, "line 1: header has no predictor columns");

  std::vector<std::vector<double>> xs;
  std::vector<double> ys;
  std::vector<int> labels;
  for (size_t i = 1; i < lines.size(); ++i) {
    const size_t line_no = i + 1;
    if (lines[i].empty()) continue;
    const auto fields = detail::split_csv(lines[i]);
    if (fields.size() != header.size()) {
      fail(ErrorCode::data_error, "line " + std::to_string(line_no) + ": expected " + std::to_string(header.size()) + " fields, found " +
                                      std::to_string(fields.size()));
    }
    std::vector<double> row;
    for (size_t c : x_cols) row.push_back(detail::parse_double(fields[c], line_no, header[c]));
    xs.push_back(std::move(row));
    ys.push_back(detail::parse_double(fields[*y_col], line_no, "y"));
    if (label_col) {
      const std::string& l = fields[*label_col];
      if (l == "noise") {
        labels.push_back(kNoise);
      } else {
        const double v = detail::parse_double(l, line_no, "label");
        if (v < 1.0 || v != std::floor(v)) fail(ErrorCode::data_error, "line " + std::to_string(line_no) + ": label must be a positive integer or 'noise'");
        labels.push_back(static_cast<int>(v) - 1);
      }
    }
  }
  require(!ys.empty(), ErrorCode::data_error, "no data rows");
  Matrix x(static_cast<Index>(xs.size()), static_cast<Index>(x_cols.size()));
  for (size_t r = 0; r < xs.size(); ++r) {
    for (size_t c = 0; c < x_cols.size(); ++c) x(static_cast<Index>(r), static_cast<Index>(c)) = xs[r][c];
  }
  Vector y = Eigen::Map<const Vector>(ys.data(), static_cast<Index>(ys.size()));
  std::optional<std::vector<int>> lab;
  if (label_col) lab = std::move(labels);
  return Dataset(std::move(x), std::move(y), std::move(lab));
}

inline Dataset read_dataset_csv(const std::string& path) { return parse_dataset_csv(read_text(path)); }

inline std::string label_text(int label) { return label == kNoise ? "noise" : std::to_string(label + 1); }

/// CSV with header x1..xd,y[,label]; numbers carry 17 significant digits.
inline std::string dataset_csv(const Dataset& data) {
  std::ostringstream out;
  for (Index j = 0; j < data.dim(); ++j) out << 'x' << (j + 1) << ',';
  out << 'y' << (data.labels ? ",label" : "") << '\n';
  char buf[32];
  for (Index n = 0; n < data.size(); ++n) {
    for (Index j = 0; j < data.dim(); ++j) {
      std::snprintf(buf, sizeof buf, "%.17g", data.x(n, j));
      out << buf << ',';
    }
    std::snprintf(buf, sizeof buf, "%.17g", data.y(n));
    out << buf;
    if (data.labels) out << ',' << label_text((*data.labels)[static_cast<size_t>(n)]);
    out << '\n';
  }
  return out.str();
}

/// Crab morphology data: predictors FL, RW, CW, BD; response CL; labels from
/// sex (M -> group 1, F -> group 2). With `subsample`, keeps the first 50 rows
/// of each sex in file order.
inline Dataset load_crab_csv(const std::string& path, bool subsample = false) {
  const auto lines = detail::csv_lines(read_text(path));
  require(!lines.empty(), ErrorCode::data_error, "crab csv: empty file");
  const auto header = detail::split_csv(lines[0]);
  std::map<std::string, size_t> col;
  for (size_t c = 0; c < header.size(); ++c) col[header[c]] = c;
  for (const char* name : {"sex", "FL", "RW", "CL", "CW", "BD"}) {
    require(col.count(name) == 1, ErrorCode::data_error, std::string("crab csv: missing column ") + name);
  }
  const std::vector<std::string> x_names{"FL", "RW", "CW", "BD"};
  std::vector<std::vector<double>> rows;
  std::vector<double> ys;
  std::vector<int> labels;
  int taken[2] = {0, 0};
  for (size_t i = 1; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    const auto f = detail::split_csv(lines[i]);
    require(f.size() == header.size(), ErrorCode::data_error, "line " + std::to_string(i + 1) + ": wrong field count");
    const std::string& sex = f[col["sex"]];
    int label = -2;
    if (sex == "M") label = 0;
    else if (sex == "F") label = 1;
    else fail(ErrorCode::data_error, "line " + std::to_string(i + 1) + ": unknown sex '" + sex + "'");
    if (subsample && taken[label] >= 50) continue;
    ++taken[label];
    std::vector<double> row;
    for (const auto& name : x_names) row.push_back(detail::parse_double(f[col[name]], i + 1, name));
    rows.push_back(std::move(row));
    ys.push_back(detail::parse_double(f[col["CL"]], i + 1, "CL"));
    labels.push_back(label);
  }
  require(!rows.empty(), ErrorCode::data_error, "crab csv: no data rows");
  Matrix x(static_cast<Index>(rows.size()), 4);
  for (size_t r = 0; r < rows.size(); ++r) {
    for (size_t c = 0; c < 4; ++c) x(static_cast<Index>(r), static_cast<Index>(c)) = rows[r][c];
  }
  return Dataset(std::move(x), Eigen::Map<const Vector>(ys.data(), static_cast<Index>(ys.size())), std::move(labels));
}

// ---------------------------------------------------------------------------
// JSON helpers

namespace detail {

inline Json to_json(const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

inline Json to_json(const Matrix& m) {
  Json rows = Json::array();
  for (Index i = 0; i < m.rows(); ++i) {
    Json r = Json::array();
    for (Index j = 0; j < m.cols(); ++j) r.push_back(m(i, j));
    rows.push_back(std::move(r));
  }
  return rows;
}

inline Json to_json(const Eigen::MatrixXi& m) {
  Json rows = Json::array();
  for (Index i = 0; i < m.rows(); ++i) {
    Json r = Json::array();
    for (Index j = 0; j < m.cols(); ++j) r.push_back(m(i, j));
    rows.push_back(std::move(r));
  }
  return rows;
}

inline Vector vector_from(const Json& j, std::string_view what) {
  require(j.is_array(), ErrorCode::data_error, std::string(what) + ": expected an array");
  Vector v(static_cast<Index>(j.size()));
  for (size_t i = 0; i < j.size(); ++i) v(static_cast<Index>(i)) = j[i].get<double>();
  return v;
}

inline Matrix matrix_from(const Json& j, std::string_view what) {
  require(j.is_array() && !j.empty(), ErrorCode::data_error, std::string(what) + ": expected a non-empty array of rows");
  const size_t cols = j[0].size();
  Matrix m(static_cast<Index>(j.size()), static_cast<Index>(cols));
  for (size_t i = 0; i < j.size(); ++i) {
    require(j[i].is_array() && j[i].size() == cols, ErrorCode::data_error, std::string(what) + ": ragged matrix");
    for (size_t c = 0; c < cols; ++c) m(static_cast<Index>(i), static_cast<Index>(c)) = j[i][c].get<double>();
  }
  return m;
}

inline std::vector<int> external_labels(const std::vector<int>& labels) {
  std::vector<int> out;
  for (int l : labels) out.push_back(l == kNoise ? 0 : l + 1);
  return out;
}

} // namespace detail

// ---------------------------------------------------------------------------
// Model

inline Json model_to_json(const CwmModel& model) {
  Json comps = Json::array();
  for (const auto& c : model.components()) {
    Json jc;
    jc["weight"] = c.weight;
    if (c.x_marginal) {
      Json m;
      m["mean"] = detail::to_json(marginal_center(*c.x_marginal));
      m["cov"] = detail::to_json(marginal_factor(*c.x_marginal).matrix());
      if (auto nu = marginal_dof(*c.x_marginal)) m["dof"] = *nu;
      jc["x_marginal"] = std::move(m);
    }
    Json y;
    y["slope"] = detail::to_json(c.y_conditional.map.slope);
    y["intercept"] = c.y_conditional.map.intercept;
    y["noise_var"] = c.y_conditional.noise_var;
    if (c.y_conditional.dof) y["dof"] = *c.y_conditional.dof;
    jc["y_conditional"] = std::move(y);
    comps.push_back(std::move(jc));
  }
  Json j;
  j["variant"] = std::string(to_string(model.variant()));
  j["d"] = model.dim();
  j["G"] = model.groups();
  j["components"] = std::move(comps);
  if (model.gating()) {
    Json gates = Json::array();
    for (const auto& g : *model.gating()) gates.push_back({{"w", detail::to_json(g.w)}, {"w0", g.w0}});
    j["gating"] = std::move(gates);
  }
  return j;
}

inline CwmModel model_from_json(const Json& j) {
  try {
    const Variant v = parse_variant(j.at("variant").get<std::string>());
    std::vector<Component> comps;
    for (const auto& jc : j.at("components")) {
      Component c;
      c.weight = jc.at("weight").get<double>();
      if (jc.contains("x_marginal")) {
        const auto& m = jc["x_marginal"];
        Vector mean = detail::vector_from(m.at("mean"), "x_marginal.mean");
        Matrix cov = detail::matrix_from(m.at("cov"), "x_marginal.cov");
        if (m.contains("dof")) c.x_marginal = StudentParams(std::move(mean), cov, m["dof"].get<double>());
        else c.x_marginal = GaussianParams(std::move(mean), cov);
      }
      const auto& y = jc.at("y_conditional");
      c.y_conditional.map = LinearMap{detail::vector_from(y.at("slope"), "y_conditional.slope"), y.at("intercept").get<double>()};
      c.y_conditional.noise_var = y.at("noise_var").get<double>();
      if (y.contains("dof")) c.y_conditional.dof = y["dof"].get<double>();
      comps.push_back(std::move(c));
    }
    std::optional<std::vector<Gate>> gating;
    if (j.contains("gating")) {
      gating.emplace();
      for (const auto& g : j["gating"]) gating->push_back(Gate{detail::vector_from(g.at("w"), "gating.w"), g.at("w0").get<double>()});
    }
    CwmModel model(v, std::move(comps), std::move(gating));
    if (j.contains("d")) require(j["d"].get<Index>() == model.dim(), ErrorCode::data_error, "model json: d disagrees with components");
    if (j.contains("G")) require(j["G"].get<Index>() == model.groups(), ErrorCode::data_error, "model json: G disagrees with components");
    return model;
  } catch (const Json::exception& e) {
    fail(ErrorCode::data_error, std::string("model json: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// Configuration

inline Json config_to_json(const FitConfig& c) {
  Json j;
  j["groups"] = c.groups;
  j["variant"] = std::string(to_string(c.variant));
  j["max_iter"] = c.max_iter;
  j["rel_tol"] = c.rel_tol;
  j["n_starts"] = c.n_starts;
  j["init"] = std::string(to_string(c.init));
  if (c.dof.fixed_value) j["dof"] = *c.dof.fixed_value;
  else j["dof"] = "estimate";
  j["seed"] = c.seed;
  j["equal_weights"] = c.equal_weights;
  j["initial_dof"] = c.initial_dof;
  if (c.init == InitKind::given_labels) j["given_labels"] = detail::external_labels(c.given_labels);
  return j;
}

/// Overlays fields present in `j` onto `base`.
inline FitConfig config_from_json(const Json& j, FitConfig base = {}) {
  try {
    if (j.contains("groups")) base.groups = j["groups"].get<Index>();
    if (j.contains("variant")) base.variant = parse_variant(j["variant"].get<std::string>());
    if (j.contains("max_iter")) base.max_iter = j["max_iter"].get<int>();
    if (j.contains("rel_tol")) base.rel_tol = j["rel_tol"].get<double>();
    if (j.contains("n_starts")) base.n_starts = j["n_starts"].get<int>();
    if (j.contains("init")) base.init = parse_init(j["init"].get<std::string>());
    if (j.contains("dof")) {
      if (j["dof"].is_string()) {
        require(j["dof"].get<std::string>() == "estimate", ErrorCode::invalid_argument, "config: dof must be a number or \"estimate\"");
        base.dof = DofMode::estimate();
      } else {
        base.dof = DofMode::fixed(j["dof"].get<double>());
      }
    }
    if (j.contains("seed")) base.seed = j["seed"].get<std::uint64_t>();
    if (j.contains("equal_weights")) base.equal_weights = j["equal_weights"].get<bool>();
    if (j.contains("initial_dof")) base.initial_dof = j["initial_dof"].get<double>();
    if (j.contains("given_labels")) {
      base.given_labels.clear();
      for (int l : j["given_labels"].get<std::vector<int>>()) base.given_labels.push_back(l - 1);
    }
    base.validate();
    return base;
  } catch (const Json::exception& e) {
    fail(ErrorCode::invalid_argument, std::string("config json: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// Scenario

inline Json scenario_to_json(const ScenarioSpec& s) {
  Json groups = Json::array();
  for (const auto& g : s.groups) {
    Json law;
    law["mean"] = detail::to_json(marginal_center(g.x_law));
    law["cov"] = detail::to_json(marginal_factor(g.x_law).matrix());
    if (auto nu = marginal_dof(g.x_law)) law["dof"] = *nu;
    groups.push_back({{"n", g.n}, {"x_law", law}, {"slope", detail::to_json(g.slope)}, {"intercept", g.intercept}, {"noise_sd", g.noise_sd}});
  }
  Json j;
  j["groups"] = std::move(groups);
  j["seed"] = s.seed;
  if (s.noise) {
    Json box = Json::array();
    for (const auto& [lo, hi] : s.noise->box) box.push_back({lo, hi});
    j["noise"] = {{"count", s.noise->count}, {"box", box}};
  }
  return j;
}

inline ScenarioSpec scenario_from_json(const Json& j) {
  try {
    ScenarioSpec s;
    for (const auto& g : j.at("groups")) {
      const auto& law = g.at("x_law");
      Vector mean = detail::vector_from(law.at("mean"), "x_law.mean");
      Matrix cov = detail::matrix_from(law.at("cov"), "x_law.cov");
      Marginal m = law.contains("dof") ? Marginal(StudentParams(mean, cov, law["dof"].get<double>())) : Marginal(GaussianParams(mean, cov));
      s.groups.push_back(GroupSpec{g.at("n").get<Index>(), std::move(m), detail::vector_from(g.at("slope"), "slope"),
                                   g.at("intercept").get<double>(), g.at("noise_sd").get<double>()});
    }
    if (j.contains("seed")) s.seed = j["seed"].get<std::uint64_t>();
    if (j.contains("noise")) {
      NoiseSpec n;
      n.count = j["noise"].at("count").get<Index>();
      for (const auto& iv : j["noise"].at("box")) n.box.emplace_back(iv.at(0).get<double>(), iv.at(1).get<double>());
      s.noise = std::move(n);
    }
    s.validate();
    return s;
  } catch (const Json::exception& e) {
    fail(ErrorCode::data_error, std::string("scenario json: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// Results

inline Json fit_summary_json(const FitResult& r) {
  return {{"loglik", r.loglik()},   {"loglik_trace", r.loglik_trace}, {"converged", r.converged},
          {"n_iter", r.n_iter},     {"start_index", r.start_index},   {"failed_starts", r.failed_starts},
          {"config", config_to_json(r.config)}};
}

inline Json metrics_json(const MetricsReport& m) {
  Json j;
  j["wilks_lambda"] = m.wilks_lambda;
  j["iwf"] = m.iwf;
  j["misclassification_rate"] = m.misclassification_rate ? Json(*m.misclassification_rate) : Json(nullptr);
  j["bic"] = m.bic;
  j["bic_joint_scale"] = m.bic_joint_scale;
  j["confusion"] = m.confusion ? detail::to_json(*m.confusion) : Json(nullptr);
  Json perm = Json::array();
  for (int p : m.permutation_used) perm.push_back(p + 1);
  j["permutation_used"] = std::move(perm);
  return j;
}

inline Json robust_json(const RobustResult& r) {
  Json j;
  Json out = Json::array(), re = Json::array();
  for (Index n : r.outlier_indices) out.push_back(n + 1);
  for (Index n : r.recheck_indices) re.push_back(n + 1);
  j["outlier_indices"] = std::move(out);
  j["recheck_indices"] = std::move(re);
  Json labels = Json::array();
  for (int l : r.final_labels) labels.push_back(label_text(l));
  j["final_labels"] = std::move(labels);
  j["detector_fit"] = fit_summary_json(r.detector_fit);
  j["detector_model"] = model_to_json(r.detector_fit.model);
  j["trimmed_fit"] = fit_summary_json(r.trimmed_fit);
  j["trimmed_model"] = model_to_json(r.trimmed_fit.model);
  if (r.confusion) {
    j["misclassification_rate"] = r.confusion->eta;
    j["confusion"] = detail::to_json(r.confusion->confusion);
  }
  j["warnings"] = r.warnings;
  return j;
}

/// Rows are true classes, columns estimated classes, with noise last.
inline std::string confusion_csv(const Misclassification& m) {
  const Index k = m.confusion.rows() - (m.has_noise ? 1 : 0);
  auto name = [&](Index i) { return i == k ? std::string("outlier") : std::to_string(i + 1); };
  std::ostringstream out;
  out << "true";
  for (Index c = 0; c < m.confusion.cols(); ++c) out << ',' << name(c);
  out << '\n';
  for (Index r = 0; r < m.confusion.rows(); ++r) {
    out << name(r);
    for (Index c = 0; c < m.confusion.cols(); ++c) out << ',' << m.confusion(r, c);
    out << '\n';
  }
  return out.str();
}

// ---------------------------------------------------------------------------
// Manifest

struct RunManifest {
  std::string command;
  Json config;
  std::uint64_t seed = 0;
  std::vector<std::string> inputs;
  std::vector<std::string> outputs;
  double duration_s = 0.0;
};

inline Json manifest_json(const RunManifest& m) {
  return {{"command", m.command}, {"config", m.config},   {"seed", m.seed},
          {"inputs", m.inputs},   {"outputs", m.outputs}, {"version", std::string(kVersion)},
          {"duration_s", m.duration_s}};
}

} // namespace cwm
