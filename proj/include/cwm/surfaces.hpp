#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "cwm/error.hpp"
#include "cwm/linalg.hpp"
#include "cwm/model.hpp"

namespace cwm {

/// Log-odds of component 1 against component 0. Positive iff the posterior of
/// component 1 exceeds one half.
inline double decision_value(const CwmModel& model, const Vector& x, double y) {
  require(model.groups() == 2, ErrorCode::invalid_argument, "decision_value: model must have exactly 2 components");
  const Vector lt = component_log_terms(model, x, y);
  return lt(1) - lt(0);
}

enum class SurfaceKind { hyperplane, quadric, transcendental };

inline std::string_view to_string(SurfaceKind k) {
  switch (k) {
  case SurfaceKind::hyperplane: return "hyperplane";
  case SurfaceKind::quadric: return "quadric";
  case SurfaceKind::transcendental: return "transcendental";
  }
  return "unknown";
}

/// Shape of the zero set of `decision_value`. Student-t laws give log terms
/// that are not polynomial, so any t component is reported as transcendental.
inline SurfaceKind classify_surface(const CwmModel& model, double tol = kNestingTolerance) {
  require(model.groups() == 2, ErrorCode::invalid_argument, "classify_surface: model must have exactly 2 components");
  const Component& a = model.component(0);
  const Component& b = model.component(1);
  auto student = [](const Component& c) { return c.y_conditional.dof || (c.x_marginal && marginal_dof(*c.x_marginal)); };
  if (model.variant() == Variant::fmt || student(a) || student(b)) return SurfaceKind::transcendental;
  if (model.variant() == Variant::fmrc) {
    // Gating is linear in x; the conditional contributes the quadratic part.
    const bool same = std::abs(a.y_conditional.noise_var - b.y_conditional.noise_var) <= tol;
    return same ? SurfaceKind::hyperplane : SurfaceKind::quadric;
  }
  bool same_cov = true;
  if (a.x_marginal && b.x_marginal) {
    same_cov = approx_equal(marginal_factor(*a.x_marginal).matrix(), marginal_factor(*b.x_marginal).matrix(), tol);
  }
  const bool same_var = std::abs(a.y_conditional.noise_var - b.y_conditional.noise_var) <= tol;
  const bool same_slope = approx_equal(a.y_conditional.map.slope, b.y_conditional.map.slope, tol);
  return same_cov && same_var && same_slope ? SurfaceKind::hyperplane : SurfaceKind::quadric;
}

/// Rectangle in the plane spanned by one predictor (`axis`) and y. Other
/// predictors are held at `base` when d > 1.
struct SurfaceWindow {
  double x_lo = -1.0, x_hi = 1.0;
  double y_lo = -1.0, y_hi = 1.0;
  Index axis = 0;
  std::optional<Vector> base;
};

struct Point2 {
  double x = 0.0, y = 0.0;
};

struct SurfaceGrid {
  SurfaceWindow window;
  Index nx = 0, ny = 0;
  /// values(j, i) at x_i, y_j.
  Matrix values;
  std::vector<std::vector<Point2>> contour;

  double x_at(Index i) const { return window.x_lo + (window.x_hi - window.x_lo) * static_cast<double>(i) / static_cast<double>(nx - 1); }
  double y_at(Index j) const { return window.y_lo + (window.y_hi - window.y_lo) * static_cast<double>(j) / static_cast<double>(ny - 1); }
  bool empty() const { return contour.empty(); }
};

namespace detail {

struct EdgeSegment {
  long a, b;  // grid-edge ids
};

} // namespace detail

/// Zero contour of `decision_value` on a resolution x resolution grid by
/// marching squares with linear interpolation. Saddle cells are resolved by
/// the sign of the cell-center average.
inline SurfaceGrid extract_contour(const CwmModel& model, const SurfaceWindow& window, Index resolution = 512) {
  require(model.groups() == 2, ErrorCode::invalid_argument, "extract_contour: model must have exactly 2 components");
  require(resolution >= 2, ErrorCode::invalid_argument, "extract_contour: resolution must be >= 2");
  require(window.x_lo < window.x_hi && window.y_lo < window.y_hi, ErrorCode::invalid_argument, "extract_contour: empty window");
  const Index d = model.dim();
  require(window.axis >= 0 && window.axis < d, ErrorCode::invalid_argument, "extract_contour: axis out of range");
  Vector x = window.base.value_or(Vector::Zero(d));
  require(x.size() == d, ErrorCode::dimension_mismatch, "extract_contour: base has wrong dimension");

  SurfaceGrid g;
  g.window = window;
  g.nx = g.ny = resolution;
  g.values.resize(g.ny, g.nx);
  for (Index j = 0; j < g.ny; ++j) {
    for (Index i = 0; i < g.nx; ++i) {
      x(window.axis) = g.x_at(i);
      g.values(j, i) = decision_value(model, x, g.y_at(j));
    }
  }

  // Edge ids: horizontal edge (i,j)-(i+1,j) -> j*(nx-1)+i; vertical edge
  // (i,j)-(i,j+1) -> H + j*nx + i.
  const long nx = static_cast<long>(g.nx), ny = static_cast<long>(g.ny);
  const long h_count = (nx - 1) * ny;
  auto h_id = [&](long i, long j) { return j * (nx - 1) + i; };
  auto v_id = [&](long i, long j) { return h_count + j * nx + i; };
  auto above = [&](long i, long j) { return g.values(j, i) >= 0.0; };
  auto crossing = [&](long id) {
    long i0, j0, i1, j1;
    if (id < h_count) {
      j0 = j1 = id / (nx - 1);
      i0 = id % (nx - 1);
      i1 = i0 + 1;
    } else {
      const long k = id - h_count;
      j0 = k / nx;
      i0 = i1 = k % nx;
      j1 = j0 + 1;
    }
    const double f0 = g.values(j0, i0), f1 = g.values(j1, i1);
    const double t = f0 == f1 ? 0.5 : f0 / (f0 - f1);
    return Point2{g.x_at(i0) + t * (g.x_at(i1) - g.x_at(i0)), g.y_at(j0) + t * (g.y_at(j1) - g.y_at(j0))};
  };

  std::vector<detail::EdgeSegment> segs;
  for (long j = 0; j + 1 < ny; ++j) {
    for (long i = 0; i + 1 < nx; ++i) {
      // Corners: 0=(i,j) 1=(i+1,j) 2=(i+1,j+1) 3=(i,j+1). Edges: bottom, right, top, left.
      const int code = (above(i, j) ? 1 : 0) | (above(i + 1, j) ? 2 : 0) | (above(i + 1, j + 1) ? 4 : 0) | (above(i, j + 1) ? 8 : 0);
      if (code == 0 || code == 15) continue;
      const long bottom = h_id(i, j), top = h_id(i, j + 1), left = v_id(i, j), right = v_id(i + 1, j);
      switch (code) {
      case 1: case 14: segs.push_back({left, bottom}); break;
      case 2: case 13: segs.push_back({bottom, right}); break;
      case 3: case 12: segs.push_back({left, right}); break;
      case 4: case 11: segs.push_back({right, top}); break;
      case 6: case 9: segs.push_back({bottom, top}); break;
      case 7: case 8: segs.push_back({left, top}); break;
      case 5: case 10: {
        const double center = 0.25 * (g.values(j, i) + g.values(j, i + 1) + g.values(j + 1, i + 1) + g.values(j + 1, i));
        const bool center_above = center >= 0.0;
        // code 5: corners 0 and 2 above. Join them through the center if it is above.
        if ((code == 5) == center_above) {
          segs.push_back({left, top});
          segs.push_back({bottom, right});
        } else {
          segs.push_back({left, bottom});
          segs.push_back({right, top});
        }
        break;
      }
      default: break;
      }
    }
  }

  // Chain segments sharing an edge into polylines.
  std::unordered_map<long, std::vector<size_t>> by_edge;
  for (size_t s = 0; s < segs.size(); ++s) {
    by_edge[segs[s].a].push_back(s);
    by_edge[segs[s].b].push_back(s);
  }
  std::vector<char> used(segs.size(), 0);
  auto next_from = [&](long edge, size_t current) -> std::optional<size_t> {
    for (size_t s : by_edge[edge]) {
      if (s != current && !used[s]) return s;
    }
    return std::nullopt;
  };
  // Start from open ends first so open curves are emitted whole.
  std::vector<size_t> order;
  for (size_t s = 0; s < segs.size(); ++s) {
    if (by_edge[segs[s].a].size() == 1 || by_edge[segs[s].b].size() == 1) order.push_back(s);
  }
  for (size_t s = 0; s < segs.size(); ++s) order.push_back(s);
  for (size_t start : order) {
    if (used[start]) continue;
    used[start] = 1;
    long tail = segs[start].b;
    long head = segs[start].a;
    if (by_edge[segs[start].b].size() == 1) std::swap(head, tail);
    std::vector<long> chain{head, tail};
    size_t current = start;
    while (auto s = next_from(chain.back(), current)) {
      used[*s] = 1;
      current = *s;
      chain.push_back(segs[*s].a == chain.back() ? segs[*s].b : segs[*s].a);
    }
    std::vector<Point2> line;
    line.reserve(chain.size());
    for (long e : chain) line.push_back(crossing(e));
    g.contour.push_back(std::move(line));
  }
  return g;
}

inline std::string format_number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

/// Polylines as CSV rows x,y,segment_id.
inline std::string contour_csv(const SurfaceGrid& grid) {
  std::ostringstream out;
  out << "x,y,segment_id\n";
  for (size_t s = 0; s < grid.contour.size(); ++s) {
    for (const auto& p : grid.contour[s]) out << format_number(p.x) << ',' << format_number(p.y) << ',' << s << '\n';
  }
  return out.str();
}

/// Standalone SVG of the decision curve over an optional scatter of points.
inline std::string contour_svg(const SurfaceGrid& grid, const std::vector<Point2>& scatter = {}, const std::vector<int>& labels = {}) {
  constexpr double size = 600.0;
  const auto& w = grid.window;
  auto px = [&](double x) { return (x - w.x_lo) / (w.x_hi - w.x_lo) * size; };
  auto py = [&](double y) { return size - (y - w.y_lo) / (w.y_hi - w.y_lo) * size; };
  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#8c564b", "#e377c2"};
  std::ostringstream out;
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << size << "\" height=\"" << size << "\" viewBox=\"0 0 " << size << ' '
      << size << "\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  for (size_t i = 0; i < scatter.size(); ++i) {
    const int l = i < labels.size() ? labels[i] : 0;
    const char* fill = l == kNoise ? "#7f7f7f" : colors[static_cast<size_t>(std::max(l, 0)) % 6];
    out << "<circle cx=\"" << px(scatter[i].x) << "\" cy=\"" << py(scatter[i].y) << "\" r=\"2.5\" fill=\"" << fill << "\"/>\n";
  }
  for (const auto& line : grid.contour) {
    out << "<polyline fill=\"none\" stroke=\"black\" stroke-width=\"1.5\" points=\"";
    for (size_t i = 0; i < line.size(); ++i) out << (i ? " " : "") << px(line[i].x) << ',' << py(line[i].y);
    out << "\"/>\n";
  }
  out << "</svg>\n";
  return out.str();
}

} // namespace cwm
