#include "treeradar/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "treeradar/errors.hpp"
#include "treeradar/json_util.hpp"
#include "treeradar/transform.hpp"

namespace treeradar::synth {
namespace {

constexpr double kRefFreqGHz = 1.0;

struct Vec2 {
  double x, y;
};
Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
double norm(Vec2 v) { return std::hypot(v.x, v.y); }
double dot(Vec2 a, Vec2 b) { return a.x * b.x + a.y * b.y; }

Vec2 trunk_center(const TrunkScene& scene, const AcquisitionSpec& spec) { return {0.0, spec.standoff_mid + scene.radius}; }

// Permittivity of the region that contains a point at distance r from the center.
double region_eps(const TrunkScene& scene, double r) {
  double eps = scene.eps_wood;
  double enclosing = scene.radius;
  for (std::size_t i = 0; i < scene.layer_radii.size(); ++i) {
    if (r < scene.layer_radii[i] && scene.layer_radii[i] <= enclosing) {
      enclosing = scene.layer_radii[i];
      eps = scene.layer_eps[i];
    }
  }
  return eps;
}

// Permittivity just outside layer i.
double outside_layer_eps(const TrunkScene& scene, std::size_t i) {
  return region_eps(scene, scene.layer_radii[i] + 1e-12);
}

// Two-way transmission through one interface.
double two_way_transmission(double eps_a, double eps_b) {
  const double g = fresnel_gamma(eps_a, eps_b);
  return 1.0 - g * g;
}

EchoEvent make_event(double air_leg, double wood_leg, double transmission, double gamma, double gain,
                     const TrunkScene& scene, EchoOrigin origin) {
  const double v_wood = kSpeedOfLight / std::sqrt(scene.eps_wood);
  const double path_wood = 2.0 * wood_leg;
  const double total_path = 2.0 * (air_leg + wood_leg);
  EchoEvent e;
  e.delay = 2.0 * air_leg / kSpeedOfLight + path_wood / v_wood;
  e.amplitude = gain * transmission * std::abs(gamma) * std::exp(-scene.alpha * kRefFreqGHz * path_wood) / total_path;
  e.polarity = gamma < 0.0 ? -1 : 1;
  e.origin = origin;
  return e;
}

}  // namespace

std::vector<Reflector> default_self_reflection() {
  // Feed mismatch, aperture reflection and a weak ring-down.
  return {{4.0, 0.15e-9}, {-2.5, 0.35e-9}, {1.0, 0.62e-9}};
}

void AcquisitionSpec::validate() const {
  if (n_traces < 3) throw InvalidArgument("AcquisitionSpec: need at least 3 traces");
  if (!(standoff_mid > 0.0)) throw InvalidArgument("AcquisitionSpec: standoff_mid must be > 0");
  if (!(traj_length > 0.0)) throw InvalidArgument("AcquisitionSpec: traj_length must be > 0");
  if (!(noise_sigma >= 0.0)) throw InvalidArgument("AcquisitionSpec: noise_sigma must be >= 0");
  if (!(noise_hf_ramp >= 0.0)) throw InvalidArgument("AcquisitionSpec: noise_hf_ramp must be >= 0");
  time_axis_for(grid, oversample);
}

double AcquisitionSpec::antenna_x(std::size_t trace) const {
  return -0.5 * traj_length + static_cast<double>(trace) * dx();
}

cplx AcquisitionSpec::self_reflection(double f) const {
  cplx acc = 0.0;
  for (const Reflector& r : antenna_self_reflection) acc += r.gain * std::polar(1.0, -2.0 * std::numbers::pi * f * r.delay);
  return acc;
}

DefectSpec DefectSpec::cavity(double ox, double oy, double radius) {
  return {ox, oy, radius, DefectKind::cavity, 1.0};
}

DefectSpec DefectSpec::decay(double ox, double oy, double radius) {
  return {ox, oy, radius, DefectKind::decay, 30.0};
}

TrunkScene TrunkScene::healthy(double radius) {
  TrunkScene s;
  s.radius = radius;
  s.layer_radii = {0.8 * radius};
  s.layer_eps = {s.eps_wood + 3.0};
  return s;
}

TrunkScene TrunkScene::with_defect(double radius, DefectSpec defect) {
  TrunkScene s = healthy(radius);
  s.defect = defect;
  s.label = Label::defective;
  return s;
}

TrunkScene TrunkScene::without_defect() const {
  TrunkScene s = *this;
  s.defect.reset();
  s.label = Label::healthy;
  return s;
}

void TrunkScene::validate() const {
  if (!(radius > 0.0)) throw InvalidArgument("TrunkScene: radius must be > 0");
  if (!(eps_wood >= 1.0)) throw InvalidArgument("TrunkScene: eps_wood must be >= 1");
  if (!(alpha >= 0.0)) throw InvalidArgument("TrunkScene: alpha must be >= 0");
  if (layer_radii.size() != layer_eps.size()) throw InvalidArgument("TrunkScene: layer_radii and layer_eps differ in length");
  for (std::size_t i = 0; i < layer_radii.size(); ++i) {
    if (!(layer_radii[i] > 0.0 && layer_radii[i] < radius)) throw InvalidArgument("TrunkScene: layer radius must lie inside the trunk");
    if (!(layer_eps[i] >= 1.0)) throw InvalidArgument("TrunkScene: layer permittivity must be >= 1");
  }
  if (defect.has_value() != (label == Label::defective)) throw InvalidArgument("TrunkScene: label disagrees with defect presence");
  if (defect) {
    const DefectSpec& d = *defect;
    if (!(d.radius > 0.0)) throw InvalidArgument("TrunkScene: defect radius must be > 0");
    if (std::hypot(d.offset_x, d.offset_y) + d.radius >= radius) throw InvalidArgument("TrunkScene: defect must lie inside the trunk");
    if (d.kind == DefectKind::cavity && d.eps_inclusion != 1.0) throw InvalidArgument("TrunkScene: cavity permittivity must be 1");
    if (d.kind == DefectKind::decay && !(d.eps_inclusion > eps_wood))
      throw InvalidArgument("TrunkScene: decay permittivity must exceed eps_wood");
  }
}

void TrunkScene::validate_for_dataset() const {
  validate();
  if (2.0 * radius < 0.10 - 1e-12 || 2.0 * radius > 0.45 + 1e-12) throw InvalidArgument("TrunkScene: diameter outside [0.10, 0.45] m");
  if (defect && radius - (std::hypot(defect->offset_x, defect->offset_y) + defect->radius) < 0.04 - 1e-12)
    throw InvalidArgument("TrunkScene: defect closer than 4 cm to the bark");
}

double fresnel_gamma(double eps_from, double eps_to) {
  if (!(eps_from >= 1.0) || !(eps_to >= 1.0)) throw InvalidArgument("fresnel_gamma: permittivities must be >= 1");
  const double a = std::sqrt(eps_from), b = std::sqrt(eps_to);
  return (a - b) / (a + b);
}

std::vector<EchoEvent> trace_events(const TrunkScene& scene, const AcquisitionSpec& spec, std::size_t trace_index) {
  scene.validate();
  if (trace_index >= spec.n_traces) throw InvalidArgument("trace_events: trace index out of range");
  const Vec2 center = trunk_center(scene, spec);
  const Vec2 p{spec.antenna_x(trace_index), 0.0};
  const double range = norm(center - p);
  if (range <= scene.radius) throw InvalidArgument("trace_events: antenna inside the trunk");
  if (spec.standoff_mid <= 0.0) throw InvalidArgument("trace_events: trajectory intersects the trunk");
  const double air = range - scene.radius;
  const double t_bark = two_way_transmission(1.0, scene.eps_wood);

  std::vector<EchoEvent> events;
  events.push_back(make_event(air, 0.0, 1.0, fresnel_gamma(1.0, scene.eps_wood), 1.0, scene, EchoOrigin::bark));

  // Layers, outermost first, along the ray through the center.
  std::vector<std::size_t> order(scene.layer_radii.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scene.layer_radii[a] > scene.layer_radii[b]; });
  double crossed = t_bark;
  for (std::size_t i : order) {
    const double outer = outside_layer_eps(scene, i);
    events.push_back(make_event(air, scene.radius - scene.layer_radii[i], crossed, fresnel_gamma(outer, scene.layer_eps[i]), 1.0,
                                scene, EchoOrigin::layer));
    crossed *= two_way_transmission(outer, scene.layer_eps[i]);
  }

  // Far side: every layer is crossed on the way in and again on the way out.
  double through = t_bark;
  for (std::size_t i = 0; i < scene.layer_radii.size(); ++i) {
    const double t = two_way_transmission(outside_layer_eps(scene, i), scene.layer_eps[i]);
    through *= t * t;
  }
  events.push_back(make_event(air, 2.0 * scene.radius, through, fresnel_gamma(scene.eps_wood, 1.0), 1.0, scene, EchoOrigin::far_end));

  if (scene.defect) {
    const DefectSpec& d = *scene.defect;
    const Vec2 dc{center.x + d.offset_x, center.y + d.offset_y};
    const double to_defect = norm(dc - p);
    const Vec2 u{(dc.x - p.x) / to_defect, (dc.y - p.y) / to_defect};
    // First intersection of the ray p + s u with the bark circle.
    const double b = dot(u, center - p);
    const double disc = b * b - (range * range - scene.radius * scene.radius);
    const double entry = b - std::sqrt(std::max(disc, 0.0));
    const double wood = to_defect - d.radius - entry;
    if (wood < 0.0) throw InvalidArgument("trace_events: defect intersects the bark");
    const double center_dist = std::hypot(d.offset_x, d.offset_y);
    double transmission = t_bark;
    for (std::size_t i = 0; i < scene.layer_radii.size(); ++i)
      if (center_dist < scene.layer_radii[i]) transmission *= two_way_transmission(outside_layer_eps(scene, i), scene.layer_eps[i]);
    const double gain = d.kind == DefectKind::decay ? scene.decay_gain : 1.0;
    events.push_back(make_event(entry, wood, transmission, fresnel_gamma(region_eps(scene, center_dist), d.eps_inclusion), gain,
                                scene, EchoOrigin::defect));
  }
  return events;
}

Spectrum synth_spectrum(const std::vector<EchoEvent>& events, const AcquisitionSpec& spec, std::mt19937_64& rng) {
  const FrequencyGrid& g = spec.grid;
  Spectrum s(g);
  double max_amp = 0.0;
  for (const EchoEvent& e : events) max_amp = std::max(max_amp, e.amplitude);
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (std::size_t k = 0; k < g.n_points(); ++k) {
    const double f = g.freq(k);
    cplx v = spec.self_reflection(f);
    for (const EchoEvent& e : events)
      v += static_cast<double>(e.polarity) * e.amplitude * std::polar(1.0, -2.0 * std::numbers::pi * f * e.delay);
    if (spec.noise_sigma > 0.0) {
      const double ramp = 1.0 + spec.noise_hf_ramp * (f - g.f_lo()) / g.bandwidth();
      const double sigma = spec.noise_sigma * max_amp * ramp;
      const double re = gauss(rng), im = gauss(rng);
      v += cplx(sigma * re, sigma * im);
    }
    s.values[k] = v;
  }
  return s;
}

SimResult simulate(const TrunkScene& scene, const AcquisitionSpec& spec) {
  spec.validate();
  scene.validate();
  std::mt19937_64 rng(spec.seed);
  std::vector<Spectrum> spectra;
  spectra.reserve(spec.n_traces);

  GroundTruth truth;
  truth.label = scene.label;
  truth.scene = scene;
  truth.layer_delay.assign(scene.layer_radii.size(), std::vector<double>(spec.n_traces));
  if (scene.defect) truth.defect_delay.emplace(spec.n_traces);
  for (std::size_t n = 0; n < spec.n_traces; ++n) {
    const auto events = trace_events(scene, spec, n);
    std::size_t layer = 0;
    for (const EchoEvent& e : events) {
      switch (e.origin) {
        case EchoOrigin::bark: truth.bark_delay.push_back(e.delay); break;
        case EchoOrigin::far_end: truth.far_end_delay.push_back(e.delay); break;
        case EchoOrigin::defect: (*truth.defect_delay)[n] = e.delay; break;
        case EchoOrigin::layer: break;
      }
    }
    // trace_events lists layers outermost first; report them in scene order.
    std::vector<std::size_t> order(scene.layer_radii.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scene.layer_radii[a] > scene.layer_radii[b]; });
    for (const EchoEvent& e : events)
      if (e.origin == EchoOrigin::layer) truth.layer_delay[order[layer++]][n] = e.delay;
    spectra.push_back(synth_spectrum(events, spec, rng));
  }

  SimResult out{band_to_time(spectra, spec.oversample, spec.dx()), {}, std::move(truth)};
  out.raw.stage = "raw";
  out.raw.extra = {{"seed", spec.seed}, {"label", to_string(scene.label)}};

  Spectrum self(spec.grid);
  for (std::size_t k = 0; k < spec.grid.n_points(); ++k) self.values[k] = spec.self_reflection(spec.grid.freq(k));
  out.reference = band_to_time_trace(self, spec.oversample);
  return out;
}

std::vector<std::pair<std::string, TrunkScene>> sample_scenes(std::size_t n_trunks, double defective_fraction,
                                                              std::uint64_t seed) {
  if (n_trunks < 2) throw InvalidArgument("sample_dataset: need at least 2 scenes");
  if (!(defective_fraction >= 0.0 && defective_fraction <= 1.0)) throw InvalidArgument("sample_dataset: class balance must lie in [0, 1]");
  const auto n_defective = static_cast<std::size_t>(std::llround(static_cast<double>(n_trunks) * defective_fraction));
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };

  std::vector<Label> labels(n_trunks, Label::healthy);
  std::fill(labels.begin(), labels.begin() + static_cast<std::ptrdiff_t>(n_defective), Label::defective);
  std::shuffle(labels.begin(), labels.end(), rng);

  std::vector<std::pair<std::string, TrunkScene>> out;
  for (std::size_t t = 0; t < n_trunks; ++t) {
    TrunkScene scene = TrunkScene::healthy(0.5 * uniform(0.20, 0.45));
    scene.eps_wood = uniform(8.0, 10.0);
    scene.layer_radii = {uniform(0.75, 0.85) * scene.radius};
    scene.layer_eps = {scene.eps_wood + uniform(2.0, 4.0)};
    if (labels[t] == Label::defective) {
      int attempts = 0;
      for (;;) {
        if (++attempts > 1000) throw InvalidArgument("sample_dataset: defect constraints infeasible after 1000 draws");
        const double r_def = 0.5 * uniform(0.02, 0.06);
        const double max_offset = scene.radius - 0.04 - r_def;
        if (max_offset < 0.0) continue;
        const double rho = max_offset * std::sqrt(unit(rng));
        const double phi = uniform(0.0, 2.0 * std::numbers::pi);
        const bool cavity = unit(rng) < 0.5;
        const double ox = rho * std::cos(phi), oy = rho * std::sin(phi);
        scene.defect = cavity ? DefectSpec::cavity(ox, oy, r_def) : DefectSpec::decay(ox, oy, r_def);
        scene.label = Label::defective;
        try {
          scene.validate_for_dataset();
          break;
        } catch (const InvalidArgument&) {
          scene.defect.reset();
          scene.label = Label::healthy;
        }
      }
    }
    std::string id = std::to_string(t);
    out.emplace_back("T" + std::string(id.size() < 3 ? 3 - id.size() : 0, '0') + id, scene);
  }
  return out;
}

std::vector<DatasetRecord> sample_dataset(std::size_t n_trunks, double defective_fraction, std::uint64_t seed, int rotations,
                                          const AcquisitionSpec& spec) {
  if (rotations < 1) throw InvalidArgument("sample_dataset: rotations must be >= 1");
  const auto scenes = sample_scenes(n_trunks, defective_fraction, seed);
  std::mt19937_64 seeds(seed ^ 0x9E3779B97F4A7C15ull);
  std::vector<DatasetRecord> out;
  out.reserve(scenes.size() * static_cast<std::size_t>(rotations));
  for (const auto& [id, base] : scenes) {
    for (int r = 0; r < rotations; ++r) {
      TrunkScene scene = base;
      if (scene.defect) {
        const double a = 2.0 * std::numbers::pi * r / rotations;
        const double ox = scene.defect->offset_x, oy = scene.defect->offset_y;
        scene.defect->offset_x = std::cos(a) * ox - std::sin(a) * oy;
        scene.defect->offset_y = std::sin(a) * ox + std::cos(a) * oy;
      }
      AcquisitionSpec s = spec;
      s.seed = seeds();
      out.push_back({id, r, simulate(scene, s)});
    }
  }
  return out;
}

const char* to_string(Label label) { return label == Label::healthy ? "healthy" : "defective"; }

const char* to_string(EchoOrigin origin) {
  switch (origin) {
    case EchoOrigin::bark: return "bark";
    case EchoOrigin::layer: return "layer";
    case EchoOrigin::far_end: return "far_end";
    case EchoOrigin::defect: return "defect";
  }
  return "?";
}

namespace {

Label label_from(const std::string& s) {
  if (s == "healthy") return Label::healthy;
  if (s == "defective") return Label::defective;
  throw FormatError("unknown label '" + s + "'");
}

}  // namespace

nlohmann::json to_json(const AcquisitionSpec& spec) {
  nlohmann::json refl = nlohmann::json::array();
  for (const Reflector& r : spec.antenna_self_reflection) refl.push_back({{"gain", r.gain}, {"delay_s", r.delay}});
  return {{"traj_length_m", spec.traj_length},
          {"n_traces", spec.n_traces},
          {"standoff_mid_m", spec.standoff_mid},
          {"grid", {{"f_lo_hz", spec.grid.f_lo()}, {"f_hi_hz", spec.grid.f_hi()}, {"n_points", spec.grid.n_points()}}},
          {"oversample", spec.oversample},
          {"noise_sigma", spec.noise_sigma},
          {"noise_hf_ramp", spec.noise_hf_ramp},
          {"antenna_self_reflection", refl},
          {"seed", spec.seed}};
}

AcquisitionSpec acquisition_from_json(const nlohmann::json& j) {
  require_known_keys(j, {"traj_length_m", "n_traces", "standoff_mid_m", "grid", "oversample", "noise_sigma", "noise_hf_ramp",
                         "antenna_self_reflection", "seed"},
                     "acquisition");
  AcquisitionSpec s;
  try {
    s.traj_length = j.value("traj_length_m", s.traj_length);
    s.n_traces = j.value("n_traces", s.n_traces);
    s.standoff_mid = j.value("standoff_mid_m", s.standoff_mid);
    if (j.contains("grid")) {
      const auto& g = j.at("grid");
      require_known_keys(g, {"f_lo_hz", "f_hi_hz", "n_points"}, "acquisition.grid");
      s.grid = FrequencyGrid(g.value("f_lo_hz", s.grid.f_lo()), g.value("f_hi_hz", s.grid.f_hi()), g.value("n_points", s.grid.n_points()));
    }
    s.oversample = j.value("oversample", s.oversample);
    s.noise_sigma = j.value("noise_sigma", s.noise_sigma);
    s.noise_hf_ramp = j.value("noise_hf_ramp", s.noise_hf_ramp);
    if (j.contains("antenna_self_reflection")) {
      s.antenna_self_reflection.clear();
      for (const auto& r : j.at("antenna_self_reflection")) {
        require_known_keys(r, {"gain", "delay_s"}, "acquisition.antenna_self_reflection");
        s.antenna_self_reflection.push_back({r.at("gain").get<double>(), r.at("delay_s").get<double>()});
      }
    }
    s.seed = j.value("seed", s.seed);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("acquisition: ") + e.what());
  }
  s.validate();
  return s;
}

nlohmann::json to_json(const TrunkScene& scene) {
  nlohmann::json j = {{"radius_m", scene.radius},         {"eps_wood", scene.eps_wood}, {"alpha_np_per_m_ghz", scene.alpha},
                      {"layer_radii_m", scene.layer_radii}, {"layer_eps", scene.layer_eps}, {"label", to_string(scene.label)},
                      {"decay_gain", scene.decay_gain}};
  if (scene.defect) {
    const DefectSpec& d = *scene.defect;
    j["defect"] = {{"offset_x_m", d.offset_x},
                   {"offset_y_m", d.offset_y},
                   {"radius_m", d.radius},
                   {"kind", d.kind == DefectKind::cavity ? "cavity" : "decay"},
                   {"eps_inclusion", d.eps_inclusion}};
  }
  return j;
}

TrunkScene scene_from_json(const nlohmann::json& j) {
  require_known_keys(j, {"radius_m", "eps_wood", "alpha_np_per_m_ghz", "layer_radii_m", "layer_eps", "label", "decay_gain", "defect"},
                     "scene");
  TrunkScene s;
  try {
    s.radius = j.at("radius_m").get<double>();
    s.eps_wood = j.value("eps_wood", s.eps_wood);
    s.alpha = j.value("alpha_np_per_m_ghz", s.alpha);
    s.layer_radii = j.value("layer_radii_m", std::vector<double>{});
    s.layer_eps = j.value("layer_eps", std::vector<double>{});
    s.decay_gain = j.value("decay_gain", s.decay_gain);
    if (j.contains("defect") && !j.at("defect").is_null()) {
      const auto& d = j.at("defect");
      require_known_keys(d, {"offset_x_m", "offset_y_m", "radius_m", "kind", "eps_inclusion"}, "scene.defect");
      DefectSpec def;
      def.offset_x = d.value("offset_x_m", 0.0);
      def.offset_y = d.value("offset_y_m", 0.0);
      def.radius = d.at("radius_m").get<double>();
      const auto kind = d.at("kind").get<std::string>();
      if (kind != "cavity" && kind != "decay") throw FormatError("scene.defect: unknown kind '" + kind + "'");
      def.kind = kind == "cavity" ? DefectKind::cavity : DefectKind::decay;
      def.eps_inclusion = d.value("eps_inclusion", def.kind == DefectKind::cavity ? 1.0 : 30.0);
      s.defect = def;
    }
    s.label = j.contains("label") ? label_from(j.at("label").get<std::string>()) : (s.defect ? Label::defective : Label::healthy);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("scene: ") + e.what());
  }
  s.validate();
  return s;
}

nlohmann::json to_json(const GroundTruth& truth) {
  nlohmann::json j = {{"bark_delay_s", truth.bark_delay},
                      {"layer_delay_s", truth.layer_delay},
                      {"far_end_delay_s", truth.far_end_delay},
                      {"label", to_string(truth.label)},
                      {"scene", to_json(truth.scene)}};
  j["defect_delay_s"] = truth.defect_delay ? nlohmann::json(*truth.defect_delay) : nlohmann::json(nullptr);
  return j;
}

GroundTruth truth_from_json(const nlohmann::json& j) {
  require_known_keys(j, {"bark_delay_s", "layer_delay_s", "far_end_delay_s", "label", "scene", "defect_delay_s"}, "ground_truth");
  GroundTruth t;
  try {
    t.bark_delay = j.at("bark_delay_s").get<std::vector<double>>();
    t.layer_delay = j.value("layer_delay_s", std::vector<std::vector<double>>{});
    t.far_end_delay = j.value("far_end_delay_s", std::vector<double>{});
    t.label = label_from(j.at("label").get<std::string>());
    t.scene = scene_from_json(j.at("scene"));
    if (j.contains("defect_delay_s") && !j.at("defect_delay_s").is_null()) t.defect_delay = j.at("defect_delay_s").get<std::vector<double>>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("ground_truth: ") + e.what());
  }
  return t;
}

}  // namespace treeradar::synth
