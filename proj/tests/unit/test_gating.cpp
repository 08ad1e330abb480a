#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <random>
#include <set>

#include "treeradar/errors.hpp"
#include "treeradar/gating.hpp"
#include "treeradar/synth.hpp"
#include "treeradar/transform.hpp"

using namespace treeradar;
using namespace treeradar::gating;

namespace {

Grid2D step_image(std::size_t rows, std::size_t cols, std::size_t edge, double lo, double hi) {
  Grid2D g(rows, cols);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) g(r, c) = c < edge ? lo : hi;
  return g;
}

using SegSet = std::set<std::set<Segment>>;

SegSet as_sets(const std::vector<Cluster>& clusters) {
  SegSet out;
  for (const auto& c : clusters) out.insert(std::set<Segment>(c.segments.begin(), c.segments.end()));
  return out;
}

// Brute force: union every adjacent pair regardless of order.
SegSet brute_force(const std::vector<Segment>& segs) {
  std::vector<std::size_t> label(segs.size());
  for (std::size_t i = 0; i < segs.size(); ++i) label[i] = i;
  bool changed = true;
  while (changed) {
    changed = false;
    for (std::size_t i = 0; i < segs.size(); ++i)
      for (std::size_t j = 0; j < segs.size(); ++j) {
        const auto& a = segs[i];
        const auto& b = segs[j];
        const bool adj = (a.col + 1 == b.col || b.col + 1 == a.col) && a.row_start <= b.row_end && b.row_start <= a.row_end;
        if (adj && label[i] != label[j]) {
          label[i] = label[j] = std::min(label[i], label[j]);
          changed = true;
        }
      }
  }
  std::map<std::size_t, std::set<Segment>> groups;
  for (std::size_t i = 0; i < segs.size(); ++i) groups[label[i]].insert(segs[i]);
  SegSet out;
  for (auto& [k, v] : groups) out.insert(v);
  return out;
}

std::vector<Segment> random_segments(std::mt19937_64& rng) {
  std::uniform_int_distribution<std::size_t> ncols(1, 12), nper(0, 4), row(0, 40), len(0, 6);
  std::vector<Segment> segs;
  const std::size_t cols = ncols(rng);
  for (std::size_t c = 0; c < cols; ++c) {
    std::vector<std::pair<std::size_t, std::size_t>> used;
    const std::size_t k = nper(rng);
    for (std::size_t i = 0; i < k; ++i) {
      const std::size_t s = row(rng), e = s + len(rng);
      // Runs within a column never overlap.
      if (std::any_of(used.begin(), used.end(), [&](auto p) { return s <= p.second + 1 && p.first <= e + 1; })) continue;
      used.emplace_back(s, e);
      segs.push_back({c, s, e});
    }
  }
  std::shuffle(segs.begin(), segs.end(), rng);
  return segs;
}

std::vector<std::pair<double, double>> exact_points(const HyperbolaParams& p, std::size_t n) {
  std::vector<std::pair<double, double>> pts;
  for (std::size_t i = 0; i < n; ++i)
    if (auto t = p.t_at(static_cast<double>(i))) pts.emplace_back(static_cast<double>(i), *t);
  return pts;
}

BScan field_of(const synth::TrunkScene& scene, const synth::AcquisitionSpec& spec, synth::EchoOrigin only) {
  std::vector<Spectrum> spectra;
  for (std::size_t n = 0; n < spec.n_traces; ++n) {
    Spectrum s(spec.grid);
    for (const auto& e : synth::trace_events(scene, spec, n)) {
      if (e.origin != only) continue;
      for (std::size_t k = 0; k < s.values.size(); ++k)
        s.values[k] += e.polarity * e.amplitude * std::polar(1.0, -2.0 * std::numbers::pi * spec.grid.freq(k) * e.delay);
    }
    spectra.push_back(s);
  }
  return band_to_time(spectra, spec.oversample, spec.dx());
}

double window_energy(const BScan& b, const std::vector<double>& centre, double w) {
  double e = 0.0;
  for (std::size_t n = 0; n < b.n_traces(); ++n)
    for (std::size_t s = 0; s < b.n_samples(); ++s)
      if (std::abs(b.axis.time(s) - centre[n]) <= w) e += b.data(s, n) * b.data(s, n);
  return e;
}

BScan free_space_removed(const synth::SimResult& sim) {
  BScan b = sim.raw;
  for (std::size_t n = 0; n < b.n_traces(); ++n)
    for (std::size_t s = 0; s < b.n_samples(); ++s) b.data(s, n) -= sim.reference[s];
  return b;
}

}  // namespace

TEST_CASE("sobel_magnitude") {
  SUBCASE("constant image") {
    Grid2D g(5, 6);
    std::fill(g.values.begin(), g.values.end(), 3.0);
    const Grid2D m = sobel_magnitude(g);
    CHECK(std::all_of(m.values.begin(), m.values.end(), [](double v) { return v == 0.0; }));
  }
  SUBCASE("unit vertical step") {
    const Grid2D m = sobel_magnitude(step_image(6, 8, 4, 0.0, 1.0));
    for (std::size_t r = 1; r + 1 < 6; ++r) {
      CHECK(m(r, 3) == doctest::Approx(4.0));
      CHECK(m(r, 4) == doctest::Approx(4.0));
      CHECK(m(r, 1) == 0.0);
      CHECK(m(r, 6) == 0.0);
    }
  }
  SUBCASE("transpose symmetry") {
    std::mt19937_64 rng(3);
    std::normal_distribution<double> nd;
    Grid2D g(7, 9);
    for (double& v : g.values) v = nd(rng);
    const Grid2D a = sobel_magnitude(g.transposed());
    const Grid2D b = sobel_magnitude(g).transposed();
    for (std::size_t i = 0; i < a.values.size(); ++i) CHECK(a.values[i] == doctest::Approx(b.values[i]).epsilon(1e-12));
  }
  CHECK_THROWS_AS(sobel_magnitude(Grid2D(2, 5)), InvalidArgument);
}

TEST_CASE("adaptive_threshold") {
  CHECK(adaptive_threshold(step_image(6, 8, 4, 0.0, 10.0)) == doctest::Approx(5.0));

  std::mt19937_64 rng(11);
  std::normal_distribution<double> nd;
  Grid2D g(20, 15);
  for (double& v : g.values) v = nd(rng);
  const double t = adaptive_threshold(g);
  Grid2D scaled = g;
  for (double& v : scaled.values) v *= 3.5;
  CHECK(adaptive_threshold(scaled) == doctest::Approx(3.5 * t).epsilon(1e-12));
  double lo = 1e300, hi = 0.0;
  for (double v : g.values) {
    lo = std::min(lo, std::abs(v));
    hi = std::max(hi, std::abs(v));
  }
  CHECK(t >= lo);
  CHECK(t <= hi);

  Grid2D flat(4, 4);
  std::fill(flat.values.begin(), flat.values.end(), 2.0);
  CHECK_THROWS_AS(adaptive_threshold(flat), DegenerateInput);
}

TEST_CASE("binarize") {
  Grid2D g = step_image(3, 4, 2, -1.0, 2.0);
  CHECK(binarize(g, 2.0).count() == 0);
  CHECK(binarize(g, -1.0).count() == 12);
  const Mask m = binarize(g, 1.5);
  CHECK(m.count() == 6);
  Grid2D as_float(3, 4);
  for (std::size_t i = 0; i < m.bits.size(); ++i) as_float.values[i] = m.bits[i];
  CHECK(binarize(as_float, 0.5).bits == m.bits);
}

TEST_CASE("extract_segments") {
  Mask m(7, 1);
  for (std::size_t r : {1, 2, 3, 5, 6}) m.set(r, 0);
  CHECK(extract_segments(m, 3) == std::vector<Segment>{{0, 1, 3}});
  CHECK(extract_segments(m, 1) == std::vector<Segment>{{0, 1, 3}, {0, 5, 6}});
  CHECK(extract_segments(m, 5).empty());
  CHECK_THROWS_AS(extract_segments(m, 0), InvalidArgument);
  CHECK(Segment{0, 1, 3}.length() == 3);
  CHECK(Segment{0, 1, 4}.mid_row() == 2.5);
}

TEST_CASE("c3_cluster examples") {
  CHECK(c3_cluster({{0, 3, 7}, {1, 5, 9}}).size() == 1);
  CHECK(c3_cluster({{0, 3, 7}, {2, 3, 7}}).size() == 2);
  CHECK(c3_cluster({{0, 3, 7}, {1, 8, 9}}).size() == 2);
  CHECK(c3_cluster({{0, 3, 7}, {1, 7, 9}}).size() == 1);
  CHECK(c3_cluster({}).empty());
  // A "V" joined only through its far column.
  const std::vector<Segment> v{{0, 0, 2}, {0, 9, 11}, {1, 2, 4}, {1, 7, 9}, {2, 4, 7}};
  CHECK(c3_cluster(v).size() == 1);
}

TEST_CASE("c3_cluster matches brute-force union-find") {
  std::mt19937_64 rng(2024);
  for (int trial = 0; trial < 1500; ++trial) {
    auto segs = random_segments(rng);
    const auto fast = c3_cluster(segs);
    std::size_t total = 0;
    for (const auto& c : fast) total += c.segments.size();
    REQUIRE(total == segs.size());
    REQUIRE(as_sets(fast) == brute_force(segs));
    std::shuffle(segs.begin(), segs.end(), rng);
    REQUIRE(as_sets(c3_cluster(segs)) == as_sets(fast));
  }
}

TEST_CASE("select_target_cluster") {
  auto arc = [](std::size_t depth) {
    Cluster c;
    for (std::size_t n = 0; n < 20; ++n) {
      const auto mid = depth + static_cast<std::size_t>(std::lround(0.1 * (double(n) - 10.0) * (double(n) - 10.0)));
      c.segments.push_back({n, mid - 2, mid + 2});
    }
    return c;
  };
  Cluster blob;
  for (std::size_t n = 5; n < 8; ++n) blob.segments.push_back({n, 2, 9});

  CHECK(passes_shape_prior(arc(10)));
  CHECK_FALSE(passes_shape_prior(blob));
  CHECK(select_target_cluster({blob, arc(30)}, 20).segments == arc(30).segments);
  CHECK(select_target_cluster({arc(40), arc(12)}, 20).segments == arc(12).segments);

  // A wide but flat cluster fails the prior and loses to a narrower arc.
  Cluster flat;
  for (std::size_t n = 0; n < 20; ++n) flat.segments.push_back({n, 4, 8});
  Cluster short_arc = arc(30);
  short_arc.segments.resize(15);
  CHECK(select_target_cluster({flat, short_arc}, 20).segments == short_arc.segments);

  CHECK_THROWS_AS(select_target_cluster({}, 20), NoSurfaceClutter);
}

TEST_CASE("fit_hyperbola") {
  SUBCASE("exact elliptic data") {
    const HyperbolaParams truth{30.0, 20.0, 25.0, Branch::elliptic};
    const auto pts = exact_points(truth, 51);
    const auto p = fit_hyperbola(pts, {17.0, 34.0}, Branch::elliptic);
    CHECK(std::abs(p.d - 25.0) <= 0.1);
    CHECK(p.a == doctest::Approx(30.0).epsilon(1e-3));
    CHECK(p.b == doctest::Approx(20.0).epsilon(1e-3));
    CHECK(p.residual <= 1e-9);
  }
  SUBCASE("plug-in") {
    const HyperbolaParams unit{1.0, 1.0, 0.0, Branch::elliptic};
    CHECK(unit.t_at(0.0).value() == 1.0);
    CHECK_FALSE(unit.t_at(2.0).has_value());
  }
  SUBCASE("randomized hyperbolic data") {
    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> ua(5.0, 60.0), ub(20.0, 300.0), ud(17.0, 34.0);
    for (int i = 0; i < 100; ++i) {
      const HyperbolaParams truth{ua(rng), ub(rng), ud(rng), Branch::hyperbolic};
      const auto p = fit_hyperbola(exact_points(truth, 51), {17.0, 34.0});
      REQUIRE(std::abs(p.d - truth.d) <= 0.1);
      REQUIRE(p.a == doctest::Approx(truth.a).epsilon(1e-3));
      REQUIRE(p.b == doctest::Approx(truth.b).epsilon(1e-3));
    }
  }
  SUBCASE("errors") {
    const std::vector<std::pair<double, double>> two{{0.0, 1.0}, {1.0, 2.0}, {1.0, 3.0}};
    CHECK_THROWS_AS(fit_hyperbola(two, {0.0, 1.0}), InvalidArgument);
    const auto pts = exact_points({30.0, 20.0, 25.0, Branch::hyperbolic}, 51);
    CHECK_THROWS_AS(fit_hyperbola(pts, {3.0, 3.0}), InvalidArgument);
    // Rows shrinking away from the apex cannot be a hyperbola.
    CHECK_THROWS_AS(fit_hyperbola(exact_points({30.0, 20.0, 25.0, Branch::elliptic}, 51), {17.0, 34.0}), NonHyperbolicCluster);
  }
}

TEST_CASE("gate_curve and apply_zero_gate") {
  const TimeAxis axis{1e-10, 64, 0.0};
  const HyperbolaParams p{8.0, 10.0, 4.0, Branch::hyperbolic};

  const GateCurve g0 = gate_curve(p, 0.0, 9, axis);
  for (std::size_t n = 0; n < 9; ++n) CHECK(g0.t_gate[n] == p.t_at(double(n)).value());
  CHECK(g0.t_gate[4] == 10.0);
  CHECK(gate_curve(p, 4e-10, 9, axis).t_gate[4] == doctest::Approx(14.0));
  CHECK_THROWS_AS(gate_curve(p, -1e-10, 9, axis), InvalidArgument);

  SUBCASE("undefined columns hold the nearest defined value") {
    const HyperbolaParams e{2.0, 10.0, 4.0, Branch::elliptic};
    const GateCurve g = gate_curve(e, 0.0, 9, axis);
    CHECK(g.t_gate[0] == g.t_gate[2]);
    CHECK(g.t_gate[8] == g.t_gate[6]);
    CHECK(g.t_gate[2] == doctest::Approx(0.0));
  }

  SUBCASE("augmentation offsets") {
    const TimeAxis fine{31.25e-12, 160, 0.0};
    const GateCurve base = gate_curve(p, 0.43e-9, 9, fine);
    for (int n = 1; n <= 9; ++n) {
      const GateCurve gn = offset_gate(base, 0.03e-9 * n, fine);
      const GateCurve prev = offset_gate(base, 0.03e-9 * (n - 1), fine);
      for (std::size_t k = 0; k < 9; ++k) CHECK((gn.t_gate[k] - prev.t_gate[k]) * fine.dt == doctest::Approx(0.03e-9));
    }
  }

  BScan b;
  b.axis = axis;
  b.dx = 0.02;
  b.data = Grid2D(64, 9);
  std::mt19937_64 rng(5);
  std::normal_distribution<double> nd;
  for (double& v : b.data.values) v = nd(rng);

  GateCurve zero;
  zero.t_gate.assign(9, 0.0);
  CHECK(apply_zero_gate(b, zero).data == b.data);
  GateCurve full;
  full.t_gate.assign(9, 1000.0);
  const BScan z = apply_zero_gate(b, full);
  CHECK(std::all_of(z.data.values.begin(), z.data.values.end(), [](double v) { return v == 0.0; }));

  const BScan once = apply_zero_gate(b, g0);
  CHECK(apply_zero_gate(once, g0).data == once.data);
  for (std::size_t n = 0; n < 9; ++n) {
    const auto first = static_cast<std::size_t>(std::ceil(g0.t_gate[n]));
    for (std::size_t s = 0; s < 64; ++s) CHECK(once.data(s, n) == (s < first ? 0.0 : b.data(s, n)));
  }
  GateCurve short_gate;
  short_gate.t_gate.assign(3, 0.0);
  CHECK_THROWS_AS(apply_zero_gate(b, short_gate), InvalidArgument);
}

TEST_CASE("gate JSON round trip") {
  const TimeAxis axis{1e-10, 64, 0.0};
  const GateCurve g = gate_curve({8.0, 10.0, 4.25, Branch::hyperbolic}, 3e-10, 9, axis);
  const GateCurve back = gate_from_json(to_json(g));
  CHECK(back.t_gate == g.t_gate);
  CHECK(back.w == g.w);
  CHECK(back.params.d == g.params.d);
  CHECK_THROWS_AS(gate_from_json(nlohmann::json{{"w_s", 1.0}}), FormatError);
}

TEST_CASE("find_gate on simulated scenes") {
  synth::AcquisitionSpec spec;
  spec.noise_sigma = 0.0;
  const auto scenes = synth::sample_scenes(6, 0.5, 0);
  for (const auto& [id, scene] : scenes) {
    CAPTURE(id);
    const auto sim = synth::simulate(scene, spec);
    const auto result = find_gate(free_space_removed(sim), spec.grid);

    CHECK(result.target.col_span() >= static_cast<std::size_t>(std::ceil(0.9 * spec.n_traces)));

    const GateCurve fit = gate_curve(result.gate.params, 0.0, spec.n_traces, sim.raw.axis);
    double ss = 0.0;
    for (std::size_t n = 0; n < spec.n_traces; ++n) {
      const double e = fit.t_gate[n] - sim.truth.bark_delay[n] / sim.raw.axis.dt;
      ss += e * e;
    }
    CHECK(std::sqrt(ss / double(spec.n_traces)) <= 2.0);

    const BScan bark = field_of(scene, spec, synth::EchoOrigin::bark);
    const double w = result.gate.w;
    CHECK(window_energy(apply_zero_gate(bark, result.gate), sim.truth.bark_delay, w) <=
          0.01 * window_energy(bark, sim.truth.bark_delay, w));
  }
}

TEST_CASE("gating leaves a defect 4 cm below the bark intact") {
  synth::AcquisitionSpec spec;
  spec.noise_sigma = 0.0;
  const double radius = 0.15;
  const auto scene = synth::TrunkScene::with_defect(radius, synth::DefectSpec::cavity(0.0, -(radius - 0.04 - 0.02), 0.02));
  scene.validate_for_dataset();
  const auto sim = synth::simulate(scene, spec);
  const auto result = find_gate(free_space_removed(sim), spec.grid);

  const BScan defect = field_of(scene, spec, synth::EchoOrigin::defect);
  const double before = window_energy(defect, *sim.truth.defect_delay, result.gate.w);
  const double after = window_energy(apply_zero_gate(defect, result.gate), *sim.truth.defect_delay, result.gate.w);
  CHECK(std::abs(before - after) < 0.01 * before);
}

TEST_CASE("find_gate without clutter") {
  synth::AcquisitionSpec spec;
  BScan empty;
  empty.axis = time_axis_for(spec.grid, spec.oversample);
  empty.dx = spec.dx();
  empty.data = Grid2D(empty.axis.n_samples, spec.n_traces);
  CHECK_THROWS_AS(find_gate(empty, spec.grid), NoSurfaceClutter);
}
