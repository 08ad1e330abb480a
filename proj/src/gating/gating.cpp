#include "treeradar/gating.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include <Eigen/Dense>

#include "treeradar/errors.hpp"
#include "treeradar/json_util.hpp"

namespace treeradar::gating {
namespace {

double at_clamped(const Grid2D& g, std::ptrdiff_t r, std::ptrdiff_t c) {
  r = std::clamp<std::ptrdiff_t>(r, 0, static_cast<std::ptrdiff_t>(g.rows) - 1);
  c = std::clamp<std::ptrdiff_t>(c, 0, static_cast<std::ptrdiff_t>(g.cols) - 1);
  return std::abs(g(static_cast<std::size_t>(r), static_cast<std::size_t>(c)));
}

struct LineFit {
  double u = 0.0;
  double beta = 0.0;
  double residual = std::numeric_limits<double>::infinity();
  bool admissible = false;
};

// Weighted least squares of t^2 = u + beta (n - d)^2 at a fixed apex. The
// weight 1/t turns the algebraic residual on t^2 into roughly twice the
// residual on t, so late (steep) columns do not dominate the fit.
LineFit fit_at(std::span<const std::pair<double, double>> pts, double d, Branch branch) {
  auto weight = [](double t) { return 1.0 / std::max(std::abs(t), 1.0); };
  double sw = 0.0, zm = 0.0, ym = 0.0;
  for (const auto& [n, t] : pts) {
    const double w = weight(t) * weight(t);
    sw += w;
    zm += w * (n - d) * (n - d);
    ym += w * t * t;
  }
  zm /= sw;
  ym /= sw;
  double szz = 0.0, szy = 0.0;
  for (const auto& [n, t] : pts) {
    const double w = weight(t) * weight(t);
    const double z = (n - d) * (n - d) - zm;
    szz += w * z * z;
    szy += w * z * (t * t - ym);
  }
  LineFit f;
  if (!(szz > 0.0)) return f;
  f.beta = szy / szz;
  f.u = ym - f.beta * zm;
  double ss = 0.0;
  for (const auto& [n, t] : pts) {
    const double e = (t * t - f.u - f.beta * (n - d) * (n - d)) * weight(t);
    ss += e * e;
  }
  f.residual = ss / static_cast<double>(pts.size());
  f.admissible = f.u > 0.0 && (branch == Branch::hyperbolic ? f.beta > 0.0 : f.beta < 0.0);
  return f;
}

struct ClusterKey {
  bool passes;
  std::size_t span;
  double depth;
  double residual;
};

struct QuadFit {
  double curvature = 0.0;
  double r2 = 0.0;
  double residual = std::numeric_limits<double>::infinity();
};

QuadFit quadratic_fit(const Cluster& c) {
  QuadFit q;
  std::set<std::size_t> cols;
  for (const Segment& s : c.segments) cols.insert(s.col);
  if (cols.size() < 3) return q;
  const double n0 = std::accumulate(c.segments.begin(), c.segments.end(), 0.0, [](double a, const Segment& s) { return a + s.col; }) /
                    static_cast<double>(c.segments.size());
  Eigen::MatrixXd A(c.segments.size(), 3);
  Eigen::VectorXd y(c.segments.size());
  for (std::size_t i = 0; i < c.segments.size(); ++i) {
    const double x = static_cast<double>(c.segments[i].col) - n0;
    A(static_cast<Eigen::Index>(i), 0) = 1.0;
    A(static_cast<Eigen::Index>(i), 1) = x;
    A(static_cast<Eigen::Index>(i), 2) = x * x;
    y(static_cast<Eigen::Index>(i)) = c.segments[i].mid_row();
  }
  const Eigen::Vector3d coef = A.colPivHouseholderQr().solve(y);
  const double ss_res = (A * coef - y).squaredNorm();
  const double ss_tot = (y.array() - y.mean()).matrix().squaredNorm();
  q.curvature = coef(2);
  q.r2 = ss_tot > 0.0 ? 1.0 - ss_res / ss_tot : 0.0;
  q.residual = ss_res / static_cast<double>(c.segments.size());
  return q;
}

}  // namespace

std::size_t Cluster::col_span() const {
  std::set<std::size_t> cols;
  for (const Segment& s : segments) cols.insert(s.col);
  return cols.size();
}

double Cluster::mean_mid_row() const {
  if (segments.empty()) return 0.0;
  double acc = 0.0;
  for (const Segment& s : segments) acc += s.mid_row();
  return acc / static_cast<double>(segments.size());
}

std::optional<double> HyperbolaParams::t_at(double n) const {
  const double q = (n - d) * (n - d) / (a * a);
  const double inner = branch == Branch::hyperbolic ? 1.0 + q : 1.0 - q;
  if (inner < 0.0) return std::nullopt;
  return b * std::sqrt(inner);
}

Grid2D sobel_magnitude(const Grid2D& image) {
  if (image.rows < 3 || image.cols < 3) throw InvalidArgument("sobel_magnitude: image must be at least 3x3");
  Grid2D out(image.rows, image.cols);
  for (std::size_t r = 0; r < image.rows; ++r) {
    for (std::size_t c = 0; c < image.cols; ++c) {
      const auto R = static_cast<std::ptrdiff_t>(r), C = static_cast<std::ptrdiff_t>(c);
      auto px = [&](std::ptrdiff_t dr, std::ptrdiff_t dc) { return at_clamped(image, R + dr, C + dc); };
      const double gx = (px(-1, 1) + 2.0 * px(0, 1) + px(1, 1)) - (px(-1, -1) + 2.0 * px(0, -1) + px(1, -1));
      const double gy = (px(1, -1) + 2.0 * px(1, 0) + px(1, 1)) - (px(-1, -1) + 2.0 * px(-1, 0) + px(-1, 1));
      out(r, c) = std::sqrt(gx * gx + gy * gy);
    }
  }
  return out;
}

double adaptive_threshold(const Grid2D& image) {
  const Grid2D edges = sobel_magnitude(image);
  const double mean = std::accumulate(edges.values.begin(), edges.values.end(), 0.0) / static_cast<double>(edges.values.size());
  double acc = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < edges.values.size(); ++i) {
    if (edges.values[i] > mean) {
      acc += std::abs(image.values[i]);
      ++count;
    }
  }
  if (count == 0) throw DegenerateInput("adaptive_threshold: no boundaries in image");
  return acc / static_cast<double>(count);
}

Mask binarize(const Grid2D& image, double threshold) {
  Mask m(image.rows, image.cols);
  for (std::size_t i = 0; i < image.values.size(); ++i) m.bits[i] = std::abs(image.values[i]) > threshold ? 1 : 0;
  return m;
}

std::vector<Segment> extract_segments(const Mask& binary, std::size_t s_min) {
  if (s_min < 1) throw InvalidArgument("extract_segments: s_min must be >= 1");
  std::vector<Segment> out;
  for (std::size_t c = 0; c < binary.cols; ++c) {
    std::size_t r = 0;
    while (r < binary.rows) {
      if (!binary.test(r, c)) {
        ++r;
        continue;
      }
      const std::size_t start = r;
      while (r < binary.rows && binary.test(r, c)) ++r;
      if (r - start >= s_min) out.push_back({c, start, r - 1});
    }
  }
  return out;
}

std::vector<Cluster> c3_cluster(std::vector<Segment> segments) {
  std::sort(segments.begin(), segments.end());
  std::vector<std::size_t> parent(segments.size());
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](std::size_t i) {
    while (parent[i] != i) i = parent[i] = parent[parent[i]];
    return i;
  };

  // Segments of the previous column, as an index range into the sorted list.
  std::size_t prev_begin = 0, prev_end = 0;
  std::size_t i = 0;
  while (i < segments.size()) {
    const std::size_t col = segments[i].col;
    std::size_t j = i;
    while (j < segments.size() && segments[j].col == col) ++j;
    const bool adjacent = prev_end > prev_begin && segments[prev_begin].col + 1 == col;
    if (adjacent) {
      for (std::size_t a = i; a < j; ++a)
        for (std::size_t b = prev_begin; b < prev_end; ++b)
          if (std::max(segments[a].row_start, segments[b].row_start) <= std::min(segments[a].row_end, segments[b].row_end))
            parent[find(a)] = find(b);
    }
    prev_begin = i;
    prev_end = j;
    i = j;
  }

  std::vector<Cluster> clusters;
  std::vector<std::ptrdiff_t> slot(segments.size(), -1);
  for (std::size_t k = 0; k < segments.size(); ++k) {
    const std::size_t root = find(k);
    if (slot[root] < 0) {
      slot[root] = static_cast<std::ptrdiff_t>(clusters.size());
      clusters.emplace_back();
    }
    clusters[static_cast<std::size_t>(slot[root])].segments.push_back(segments[k]);
  }
  return clusters;
}

bool passes_shape_prior(const Cluster& cluster, const ShapePrior& prior) {
  const QuadFit q = quadratic_fit(cluster);
  return q.curvature > 0.0 && q.r2 >= prior.min_r2;
}

Cluster select_target_cluster(const std::vector<Cluster>& clusters, std::size_t n_traces, const ShapePrior& prior) {
  if (clusters.empty()) throw NoSurfaceClutter("select_target_cluster: no surface clutter found");
  auto key = [&](const Cluster& c) {
    for (const Segment& s : c.segments)
      if (s.col >= n_traces) throw InvalidArgument("select_target_cluster: segment column beyond trace count");
    const QuadFit q = quadratic_fit(c);
    return ClusterKey{q.curvature > 0.0 && q.r2 >= prior.min_r2, c.col_span(), c.mean_mid_row(), q.residual};
  };
  auto better = [](const ClusterKey& x, const ClusterKey& y) {
    if (x.passes != y.passes) return x.passes;
    if (x.span != y.span) return x.span > y.span;
    if (x.depth != y.depth) return x.depth < y.depth;
    return x.residual < y.residual;
  };
  std::size_t best = 0;
  ClusterKey best_key = key(clusters[0]);
  for (std::size_t i = 1; i < clusters.size(); ++i) {
    const ClusterKey k = key(clusters[i]);
    if (better(k, best_key)) {
      best = i;
      best_key = k;
    }
  }
  return clusters[best];
}

HyperbolaParams fit_hyperbola(std::span<const std::pair<double, double>> points, std::pair<double, double> apex_window, Branch branch) {
  const auto [d_lo, d_hi] = apex_window;
  if (!(d_lo < d_hi)) throw InvalidArgument("fit_hyperbola: empty apex window");
  std::set<double> cols;
  for (const auto& p : points) cols.insert(p.first);
  if (cols.size() < 3) throw InvalidArgument("fit_hyperbola: need points in at least 3 distinct columns");

  constexpr double kStep = 0.1;
  double best_d = 0.0;
  LineFit best;
  const auto steps = static_cast<std::size_t>(std::floor((d_hi - d_lo) / kStep + 1e-9));
  for (std::size_t k = 0; k <= steps; ++k) {
    const double d = d_lo + kStep * static_cast<double>(k);
    const LineFit f = fit_at(points, d, branch);
    if (f.admissible && f.residual < best.residual) {
      best = f;
      best_d = d;
    }
  }
  if (!best.admissible) throw NonHyperbolicCluster("fit_hyperbola: no apex in the window yields a valid conic");

  // Golden-section refinement of the apex between the neighbouring grid points.
  auto cost = [&](double d) {
    const LineFit f = fit_at(points, d, branch);
    return f.admissible ? f.residual : std::numeric_limits<double>::infinity();
  };
  const double phi = 0.5 * (std::sqrt(5.0) - 1.0);
  double lo = std::max(d_lo, best_d - kStep), hi = std::min(d_hi, best_d + kStep);
  double x1 = hi - phi * (hi - lo), x2 = lo + phi * (hi - lo);
  double f1 = cost(x1), f2 = cost(x2);
  for (int it = 0; it < 100 && hi - lo > 1e-12; ++it) {
    if (f1 <= f2) {
      hi = x2;
      x2 = x1;
      f2 = f1;
      x1 = hi - phi * (hi - lo);
      f1 = cost(x1);
    } else {
      lo = x1;
      x1 = x2;
      f1 = f2;
      x2 = lo + phi * (hi - lo);
      f2 = cost(x2);
    }
  }
  const double refined_d = 0.5 * (lo + hi);
  const LineFit refined = fit_at(points, refined_d, branch);
  if (refined.admissible && refined.residual <= best.residual) {
    best = refined;
    best_d = refined_d;
  }

  HyperbolaParams p;
  p.d = best_d;
  p.b = std::sqrt(best.u);
  p.a = std::sqrt(best.u / std::abs(best.beta));
  p.branch = branch;
  p.residual = best.residual;
  return p;
}

GateCurve gate_curve(const HyperbolaParams& params, double w, std::size_t n_traces, const TimeAxis& axis) {
  if (!(w >= 0.0)) throw InvalidArgument("gate_curve: w must be >= 0");
  std::vector<std::optional<double>> model(n_traces);
  for (std::size_t n = 0; n < n_traces; ++n) model[n] = params.t_at(static_cast<double>(n));
  GateCurve g;
  g.params = params;
  g.w = w;
  g.t_gate.resize(n_traces);
  for (std::size_t n = 0; n < n_traces; ++n) {
    std::optional<double> v = model[n];
    for (std::size_t k = 1; !v && k < n_traces; ++k) {
      if (n >= k && model[n - k]) v = model[n - k];
      else if (n + k < n_traces && model[n + k]) v = model[n + k];
    }
    if (!v) throw NonHyperbolicCluster("gate_curve: model undefined on every trace");
    g.t_gate[n] = *v + w / axis.dt;
  }
  return g;
}

GateCurve offset_gate(const GateCurve& gate, double extra_w, const TimeAxis& axis) {
  GateCurve g = gate;
  g.w += extra_w;
  for (double& t : g.t_gate) t = std::max(0.0, t + extra_w / axis.dt);
  return g;
}

BScan apply_zero_gate(const BScan& bscan, const GateCurve& gate) {
  if (gate.t_gate.size() != bscan.n_traces()) throw InvalidArgument("apply_zero_gate: gate length differs from trace count");
  BScan out = bscan;
  out.stage = "gated";
  for (std::size_t n = 0; n < out.n_traces(); ++n) {
    const double limit = gate.t_gate[n];
    const std::size_t stop = limit <= 0.0 ? 0 : std::min(out.n_samples(), static_cast<std::size_t>(std::ceil(limit)));
    for (std::size_t s = 0; s < stop; ++s) out.data(s, n) = 0.0;
  }
  return out;
}

std::pair<double, double> GatingConfig::apex_window_for(std::size_t n_traces) const {
  if (apex_window) return *apex_window;
  const double n = static_cast<double>(n_traces);
  return {n / 3.0, 2.0 * n / 3.0};
}

double GatingConfig::w_for(const FrequencyGrid& grid) const { return w ? *w : 1.5 / grid.bandwidth(); }

GatingResult find_gate(const BScan& bscan, const FrequencyGrid& grid, const GatingConfig& config) {
  const std::size_t rows =
      std::min(bscan.n_samples(), static_cast<std::size_t>(std::ceil(config.search_window / bscan.axis.dt)));
  Grid2D roi(rows, bscan.n_traces());
  std::copy_n(bscan.data.values.begin(), roi.values.size(), roi.values.begin());

  GatingResult r;
  try {
    r.threshold = adaptive_threshold(roi);
  } catch (const DegenerateInput&) {
    throw NoSurfaceClutter("find_gate: no boundaries in the search window");
  }
  const auto clusters = c3_cluster(extract_segments(binarize(roi, r.threshold), config.s_min));
  r.n_clusters = clusters.size();
  r.target = select_target_cluster(clusters, bscan.n_traces(), config.shape);

  std::vector<std::pair<double, double>> pts;
  for (const Segment& s : r.target.segments) pts.emplace_back(static_cast<double>(s.col), s.mid_row());
  HyperbolaParams params;
  try {
    params = fit_hyperbola(pts, config.apex_window_for(bscan.n_traces()), Branch::hyperbolic);
  } catch (const InvalidArgument& e) {
    throw NoSurfaceClutter(std::string("find_gate: target cluster too small to fit: ") + e.what());
  }
  r.gate = gate_curve(params, config.w_for(grid), bscan.n_traces(), bscan.axis);
  return r;
}

nlohmann::json to_json(const GateCurve& gate) {
  return {{"params",
           {{"a", gate.params.a},
            {"b", gate.params.b},
            {"d", gate.params.d},
            {"branch", gate.params.branch == Branch::hyperbolic ? "hyperbolic" : "elliptic"}}},
          {"w_s", gate.w},
          {"t_gate", gate.t_gate}};
}

GateCurve gate_from_json(const nlohmann::json& j) {
  GateCurve g;
  try {
    const auto& p = j.at("params");
    g.params.a = p.at("a").get<double>();
    g.params.b = p.at("b").get<double>();
    g.params.d = p.at("d").get<double>();
    g.params.branch = p.value("branch", std::string("hyperbolic")) == "elliptic" ? Branch::elliptic : Branch::hyperbolic;
    g.w = j.at("w_s").get<double>();
    g.t_gate = j.at("t_gate").get<std::vector<double>>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("gate curve: ") + e.what());
  }
  return g;
}

nlohmann::json to_json(const GatingConfig& config) {
  nlohmann::json j = {{"s_min", config.s_min}, {"search_window_s", config.search_window}, {"min_r2", config.shape.min_r2}};
  if (config.apex_window) j["apex_window"] = {config.apex_window->first, config.apex_window->second};
  if (config.w) j["w_s"] = *config.w;
  return j;
}

GatingConfig gating_config_from_json(const nlohmann::json& j) {
  require_known_keys(j, {"s_min", "search_window_s", "min_r2", "apex_window", "w_s"}, "gating");
  GatingConfig c;
  try {
    c.s_min = j.value("s_min", c.s_min);
    c.search_window = j.value("search_window_s", c.search_window);
    c.shape.min_r2 = j.value("min_r2", c.shape.min_r2);
    if (j.contains("apex_window")) {
      const auto v = j.at("apex_window").get<std::vector<double>>();
      if (v.size() != 2) throw FormatError("gating.apex_window: expected [d_lo, d_hi]");
      c.apex_window = std::pair{v[0], v[1]};
    }
    if (j.contains("w_s")) c.w = j.at("w_s").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("gating: ") + e.what());
  }
  if (c.s_min < 1) throw FormatError("gating.s_min: must be >= 1");
  if (!(c.search_window > 0.0)) throw FormatError("gating.search_window_s: must be > 0");
  if (c.w && !(*c.w >= 0.0)) throw FormatError("gating.w_s: must be >= 0");
  return c;
}

}  // namespace treeradar::gating
