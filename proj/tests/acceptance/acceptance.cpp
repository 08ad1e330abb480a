// End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
// exits non-zero if any criterion fails or overruns its time budget.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <numbers>
#include <random>
#include <set>
#include <sstream>
#include <string>

#include "treeradar/bscan_io.hpp"
#include "treeradar/cli.hpp"
#include "treeradar/dataset.hpp"
#include "treeradar/filtering.hpp"
#include "treeradar/gating.hpp"
#include "treeradar/mlff.hpp"
#include "treeradar/synth.hpp"
#include "treeradar/transform.hpp"

using namespace treeradar;
using nlohmann::json;
using nn::Tensor;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
};

std::string fmt(const char* f, double a, double b = 0, double c = 0, double d = 0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c, d);
  return buf;
}

// ---- shared oracles ---------------------------------------------------------

BScan fsr(const synth::SimResult& sim) {
  BScan b = sim.raw;
  for (std::size_t n = 0; n < b.n_traces(); ++n)
    for (std::size_t s = 0; s < b.n_samples(); ++s) b.data(s, n) -= sim.reference[s];
  return b;
}

// Field of the echoes of one origin only, noiseless.
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

Tensor randn(std::vector<std::size_t> shape, std::mt19937_64& rng) {
  Tensor t(std::move(shape));
  std::normal_distribution<double> nd(0.0, 1.0);
  for (double& v : t.data) v = nd(rng);
  return t;
}

double rel_error(const std::vector<double>& a, const std::vector<double>& b) {
  double diff = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff += (a[i] - b[i]) * (a[i] - b[i]);
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  return std::sqrt(diff) / std::max({std::sqrt(na), std::sqrt(nb), 1e-12});
}

std::vector<double> numeric_grad(std::vector<double>& values, const std::function<double()>& loss) {
  const double h = 1e-6;
  std::vector<double> g(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double keep = values[i];
    values[i] = keep + h;
    const double up = loss();
    values[i] = keep - h;
    const double down = loss();
    values[i] = keep;
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

// Worst relative error over the input and every parameter of loss = sum(r * f(x)).
template <typename Fwd, typename Bwd>
double layer_grad_error(Tensor x, Fwd fwd, Bwd bwd, const nn::ParamList& params, std::mt19937_64& rng) {
  const Tensor r = randn(fwd(x).shape, rng);
  for (auto& [name, p] : params) p->zero_grad();
  fwd(x);
  const Tensor dx = bwd(r);
  auto loss = [&] {
    const Tensor y = fwd(x);
    double s = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) s += y.data[i] * r.data[i];
    return s;
  };
  double worst = rel_error(dx.data, numeric_grad(x.data, loss));
  for (auto& [name, p] : params) {
    const std::vector<double> analytic = p->grad.data;
    worst = std::max(worst, rel_error(analytic, numeric_grad(p->value.data, loss)));
  }
  return worst;
}

// ---- criteria ---------------------------------------------------------------

Outcome metrics_reproduction() {
  mlff::ConfusionMatrix cm;
  cm.counts = {{{144, 0}, {9, 135}}};
  const auto m = mlff::metrics(cm);
  auto pct = [](double v) { return std::round(v * 1e4) / 100.0; };
  Outcome o;
  o.pass = pct(m.accuracy) == 96.88 && pct(m.precision) == 97.06 && pct(m.recall) == 96.88 && pct(m.f1) == 96.87;
  o.detail = fmt("acc %.2f prec %.2f rec %.2f f1 %.2f", pct(m.accuracy), pct(m.precision), pct(m.recall), pct(m.f1));
  return o;
}

Outcome transform_suite() {
  const auto g = FrequencyGrid::standoff_default();
  const auto axis = time_axis_for(g, kDefaultOversample);
  std::mt19937_64 rng(1);
  std::normal_distribution<double> nd(0.0, 1.0);
  double rt = 0.0, pars = 0.0, phase = 0.0;
  for (int rep = 0; rep < 10; ++rep) {
    Spectrum s(g);
    for (auto& v : s.values) v = {nd(rng), nd(rng)};
    const auto x = band_to_time_trace(s, kDefaultOversample);
    const Spectrum back = time_to_band_trace(x, axis, g);
    double num = 0.0, den = 0.0;
    for (std::size_t k = 0; k < s.values.size(); ++k) {
      num = std::max(num, std::abs(back.values[k] - s.values[k]));
      den = std::max(den, std::abs(s.values[k]));
    }
    rt = std::max(rt, num / den);
    // Parseval against the direct band-side sum: bins with their mirror images.
    double e_time = 0.0, e_band = 0.0;
    for (double v : x) e_time += v * v;
    for (const auto& v : s.values) e_band += 2.0 * std::norm(v);
    e_band /= static_cast<double>(x.size());
    pars = std::max(pars, std::abs(e_time - e_band) / e_band);
  }
  for (std::size_t k : {0u, 1u, 37u, 640u, 3000u}) {
    std::vector<double> x(axis.n_samples, 0.0);
    x[k] = 1.0;
    const Spectrum s = time_to_band_trace(x, axis, g);
    for (std::size_t i = 0; i < g.n_points(); ++i)
      phase = std::max(phase, std::abs(s.values[i] - std::polar(1.0, -2.0 * std::numbers::pi * g.freq(i) * k * axis.dt)));
  }
  return {rt <= 1e-9 && pars <= 1e-9 && phase <= 1e-9, fmt("round trip %.1e, Parseval %.1e, phase law %.1e", rt, pars, phase)};
}

Outcome hyperbola_oracle() {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> ua(5.0, 60.0), ub(20.0, 300.0), ud(17.0, 34.0);
  double dd = 0.0, rel = 0.0;
  for (int i = 0; i < 100; ++i) {
    const gating::HyperbolaParams truth{ua(rng), ub(rng), ud(rng), gating::Branch::hyperbolic};
    std::vector<std::pair<double, double>> pts;
    for (std::size_t n = 0; n < 51; ++n) pts.emplace_back(double(n), *truth.t_at(double(n)));
    const auto p = gating::fit_hyperbola(pts, {17.0, 34.0});
    dd = std::max(dd, std::abs(p.d - truth.d));
    rel = std::max({rel, std::abs(p.a - truth.a) / truth.a, std::abs(p.b - truth.b) / truth.b});
  }
  synth::AcquisitionSpec spec;
  spec.noise_sigma = 0.0;
  double worst_rms = 0.0;
  for (const auto& [id, scene] : synth::sample_scenes(20, 0.5, 0)) {
    const auto sim = synth::simulate(scene, spec);
    const auto res = gating::find_gate(fsr(sim), spec.grid);
    const auto curve = gating::gate_curve(res.gate.params, 0.0, spec.n_traces, sim.raw.axis);
    double ss = 0.0;
    for (std::size_t n = 0; n < spec.n_traces; ++n) ss += std::pow(curve.t_gate[n] - sim.truth.bark_delay[n] / sim.raw.axis.dt, 2);
    worst_rms = std::max(worst_rms, std::sqrt(ss / double(spec.n_traces)));
  }
  return {dd <= 0.1 && rel <= 1e-3 && worst_rms <= 2.0,
          fmt("max |dd| %.2e col, max rel param err %.2e, worst bark RMS %.2f samples over 20 scenes", dd, rel, worst_rms)};
}

Outcome c3_equivalence() {
  using gating::Segment;
  std::mt19937_64 rng(4);
  std::uniform_int_distribution<std::size_t> ncols(1, 14), nper(0, 5), row(0, 50), len(0, 7);
  int mismatches = 0;
  const int trials = 1200;
  for (int t = 0; t < trials; ++t) {
    std::vector<Segment> segs;
    for (std::size_t c = 0, cols = ncols(rng); c < cols; ++c) {
      std::vector<std::pair<std::size_t, std::size_t>> used;
      for (std::size_t i = 0, k = nper(rng); i < k; ++i) {
        const std::size_t s = row(rng), e = s + len(rng);
        if (std::any_of(used.begin(), used.end(), [&](auto p) { return s <= p.second + 1 && p.first <= e + 1; })) continue;
        used.emplace_back(s, e);
        segs.push_back({c, s, e});
      }
    }
    std::shuffle(segs.begin(), segs.end(), rng);
    // Brute-force union-find over every adjacent pair.
    std::vector<std::size_t> parent(segs.size());
    for (std::size_t i = 0; i < parent.size(); ++i) parent[i] = i;
    std::function<std::size_t(std::size_t)> find = [&](std::size_t i) { return parent[i] == i ? i : parent[i] = find(parent[i]); };
    for (std::size_t i = 0; i < segs.size(); ++i)
      for (std::size_t j = 0; j < segs.size(); ++j) {
        const auto &a = segs[i], &b = segs[j];
        if (a.col + 1 == b.col && a.row_start <= b.row_end && b.row_start <= a.row_end) parent[find(i)] = find(j);
      }
    std::map<std::size_t, std::set<Segment>> groups;
    for (std::size_t i = 0; i < segs.size(); ++i) groups[find(i)].insert(segs[i]);
    std::set<std::set<Segment>> expect, got;
    for (auto& [k, v] : groups) expect.insert(v);
    for (const auto& c : gating::c3_cluster(segs)) got.insert(std::set<Segment>(c.segments.begin(), c.segments.end()));
    mismatches += expect != got;
  }
  return {mismatches == 0, fmt("%.0f random segment sets, %.0f mismatches", trials, mismatches)};
}

Outcome pipeline_scnr() {
  std::size_t i = 0, ordered = 0;
  double total = 0.0, worst = 1e9;
  for (const auto& [id, scene] : synth::sample_scenes(20, 0.5, 0)) {
    synth::AcquisitionSpec spec;
    spec.seed = i++;
    const auto sim = synth::simulate(scene, spec);
    filtering::PipelineConfig cfg;
    cfg.masks = filtering::truth_masks(sim.truth, sim.raw.axis, cfg.gate.w_for(spec.grid));
    const auto r = filtering::process(sim.raw, sim.reference, spec.grid, cfg).report;
    if (!(r.scnr_raw && r.scnr_freespace && r.scnr_gated && r.scnr_fir)) continue;
    ordered += *r.scnr_raw < *r.scnr_freespace && *r.scnr_freespace < *r.scnr_gated && *r.scnr_gated <= *r.scnr_fir;
    total += *r.scnr_fir - *r.scnr_raw;
    worst = std::min(worst, *r.scnr_fir - *r.scnr_raw);
  }
  const double mean = total / 20.0;
  return {ordered == 20 && mean >= 20.0,
          fmt("%.0f/20 scenes raw<fsr<gated<=fir, mean improvement %.1f dB (min %.1f)", double(ordered), mean, worst)};
}

Outcome defect_preservation() {
  synth::AcquisitionSpec spec;
  spec.noise_sigma = 0.0;
  double worst = 0.0;
  int scenes = 0;
  for (const auto& [id, scene] : synth::sample_scenes(20, 0.5, 0)) {
    if (!scene.defect) continue;
    const auto sim = synth::simulate(scene, spec);
    const auto gate = gating::find_gate(fsr(sim), spec.grid).gate;
    const BScan defect = field_of(scene, spec, synth::EchoOrigin::defect);
    const double before = window_energy(defect, *sim.truth.defect_delay, gate.w);
    const double after = window_energy(gating::apply_zero_gate(defect, gate), *sim.truth.defect_delay, gate.w);
    worst = std::max(worst, std::abs(before - after) / before);
    ++scenes;
  }
  return {worst < 0.01, fmt("worst defect-window energy change %.3f%% over %.0f defective scenes", 100.0 * worst, double(scenes))};
}

Outcome gradient_suite() {
  std::mt19937_64 rng(7);
  std::map<std::string, double> err;
  {
    nn::Conv2d conv(3, 4, 3, 2, 1, true);
    conv.init(rng);
    nn::ParamList p;
    conv.collect("conv", p);
    err["conv"] = layer_grad_error(randn({2, 3, 7, 6}, rng), [&](const Tensor& x) { return conv.forward(x); },
                                   [&](const Tensor& g) { return conv.backward(g); }, p, rng);
  }
  {
    nn::BatchNorm2d bn(2);
    bn.gamma.value.data = {1.3, -0.7};
    bn.beta.value.data = {0.2, 0.1};
    nn::ParamList p;
    bn.collect("bn", p);
    err["bn"] = std::max(layer_grad_error(randn({3, 2, 4, 3}, rng), [&](const Tensor& x) { return bn.forward(x, true); },
                                          [&](const Tensor& g) { return bn.backward(g); }, p, rng),
                         layer_grad_error(randn({3, 2, 4, 3}, rng), [&](const Tensor& x) { return bn.forward(x, false); },
                                          [&](const Tensor& g) { return bn.backward(g); }, p, rng));
  }
  {
    nn::MaxPool2x2 pool;
    err["pool"] = layer_grad_error(randn({2, 3, 4, 6}, rng), [&](const Tensor& x) { return pool.forward(x); },
                                   [&](const Tensor& g) { return pool.backward(g); }, {}, rng);
  }
  {
    nn::Upsample up(7, 9);
    err["upsample"] = layer_grad_error(randn({2, 3, 3, 4}, rng), [&](const Tensor& x) { return up.forward(x); },
                                       [&](const Tensor& g) { return up.backward(g); }, {}, rng);
  }
  for (bool down : {false, true}) {
    mlff::ResBlock b(3, down ? 4 : 3, down);
    b.init(rng);
    nn::ParamList p;
    nn::BufferList buf;
    b.collect("block", p, buf);
    err["resblock"] = std::max(err["resblock"], layer_grad_error(randn({2, 3, 6, 6}, rng), [&](const Tensor& x) { return b.forward(x, true); },
                                                                 [&](const Tensor& g) { return b.backward(g); }, p, rng));
  }
  {
    mlff::DimUnify u(4, 3, 6, 6);
    u.init(rng);
    nn::ParamList p;
    u.collect("unify", p);
    err["dim_unify"] = layer_grad_error(randn({2, 4, 3, 3}, rng), [&](const Tensor& x) { return u.forward(x); },
                                        [&](const Tensor& g) { return u.backward(g); }, p, rng);
  }
  {
    mlff::CoordAttention cam(8, 4);
    cam.init(rng);
    nn::ParamList p;
    nn::BufferList buf;
    cam.collect("cam", p, buf);
    err["cam"] = layer_grad_error(randn({3, 8, 4, 3}, rng), [&](const Tensor& x) { return cam.forward(x, true); },
                                  [&](const Tensor& g) { return cam.backward(g); }, p, rng);
  }
  {
    nn::Linear fc(12, 3);
    fc.init(rng);
    nn::ParamList p;
    fc.collect("fc", p);
    err["fc"] = layer_grad_error(randn({2, 3, 2, 2}, rng), [&](const Tensor& x) { return fc.forward(x); },
                                 [&](const Tensor& g) { return fc.backward(g); }, p, rng);
  }
  double bce_err;
  {
    Tensor z = randn({6, 1}, rng);
    const std::vector<int> y{0, 1, 1, 0, 1, 0};
    const auto r = mlff::bce_with_logits(z, y);
    bce_err = rel_error(r.grad_logit.data, numeric_grad(z.data, [&] { return mlff::bce_with_logits(z, y).loss; }));
  }
  Outcome o;
  std::ostringstream d;
  for (const auto& [name, e] : err) {
    o.pass &= e <= 1e-3;
    d << name << " " << fmt("%.1e", e) << ", ";
  }
  o.pass &= bce_err <= 1e-6;
  d << "bce " << fmt("%.1e", bce_err);
  o.detail = d.str();
  return o;
}

Outcome cam_contract() {
  std::mt19937_64 rng(8);
  mlff::CoordAttention cam(16, 4);
  cam.init(rng);
  const Tensor x = randn({2, 16, 7, 5}, rng);
  cam.forward(x, true);
  double pool_err = 0.0;
  for (std::size_t b = 0; b < 2; ++b)
    for (std::size_t c = 0; c < 16; ++c) {
      for (std::size_t i = 0; i < 7; ++i) {
        double m = 0.0;
        for (std::size_t j = 0; j < 5; ++j) m += x.at(b, c, i, j);
        pool_err = std::max(pool_err, std::abs(cam.z_h.at(b, c, i, 0) - m / 5.0));
      }
      for (std::size_t j = 0; j < 5; ++j) {
        double m = 0.0;
        for (std::size_t i = 0; i < 7; ++i) m += x.at(b, c, i, j);
        pool_err = std::max(pool_err, std::abs(cam.z_w.at(b, c, j, 0) - m / 7.0));
      }
    }
  double kmin = 1.0, kmax = 0.0;
  for (const Tensor* k : {&cam.k_h, &cam.k_w})
    for (double v : k->data) {
      kmin = std::min(kmin, v);
      kmax = std::max(kmax, v);
    }
  cam.forced_logit = std::numeric_limits<double>::infinity();
  const bool identity = cam.forward(x, true) == x;
  return {pool_err <= 1e-12 && kmin > 0.0 && kmax < 1.0 && identity,
          fmt("pooling err %.1e, k in [%.3f, %.3f], saturated identity ", pool_err, kmin, kmax) + (identity ? "exact" : "BROKEN")};
}

Outcome shape_contract() {
  mlff::NetConfig c;
  mlff::MLFFNet net(c);
  const Tensor logit = net.forward(Tensor({1, 10, 128, 128}, 0.1), false);
  const auto& s = net.last_shapes();
  using V = std::vector<std::size_t>;
  const bool lists = c.resblock_channels == V{64, 64, 128, 128, 256, 256, 512, 512} && c.classifier_channels == V{64, 128, 256, 512};
  const bool ok = lists && s.input == V{1, 10, 128, 128} && s.preproc == V{1, 64, 32, 32} && s.levels[0] == V{1, 64, 32, 32} &&
                  s.levels[1] == V{1, 128, 16, 16} && s.levels[2] == V{1, 256, 8, 8} && s.levels[3] == V{1, 512, 4, 4} &&
                  s.fused == V{1, 256, 32, 32} && s.classifier == V{1, 512, 2, 2} && logit.shape == V{1, 1};
  return {ok, "(10,128,128) -> " + nn::shape_string(s.preproc) + " -> fused " + nn::shape_string(s.fused) + " -> " +
                  nn::shape_string(s.classifier) + " -> " + nn::shape_string(logit.shape)};
}

json run_cli(const std::vector<std::string>& args, int& code) {
  std::ostringstream out, err;
  code = cli::run(args, out, err);
  if (code != 0) std::fprintf(stderr, "%s", err.str().c_str());
  return code == 0 && !out.str().empty() ? json::parse(out.str()) : json();
}

Outcome learnability(const fs::path& work) {
  Outcome o;
  std::ostringstream d;

  // Overfit capacity: 32 scans, width 1/8, 16x16 inputs, default optimizer settings.
  {
    synth::AcquisitionSpec spec;
    mlff::PrepareConfig pc;
    pc.out_h = pc.out_w = 16;
    std::vector<mlff::Sample> data;
    for (const auto& r : synth::sample_dataset(32, 0.5, 1, 1, spec))
      data.push_back(mlff::prepare_scan(r.sim.raw, r.sim.reference, spec.grid, static_cast<int>(r.sim.truth.label), r.trunk_id, {}, pc).sample);
    mlff::NetConfig nc;
    nc.input_h = nc.input_w = 16;
    nc.width_scale = 0.125;
    mlff::MLFFNet net(nc, 0);
    mlff::TrainConfig tc;
    tc.epochs = 200;
    std::size_t reached = 0;
    const auto r = mlff::train(net, data, {}, tc, [&](const mlff::EpochRecord& e) {
      if (!reached && e.train_acc >= 0.95) reached = e.epoch;
    });
    const double final_acc = r.history.back().train_acc;
    o.pass &= final_acc >= 0.95;
    d << fmt("overfit: final train acc %.3f (first >=95%% at epoch %.0f); ", final_acc, double(reached));
  }

  // Separability: 40 trunks, seed 0, trunk-level 5-fold through the CLI.
  int code = 0;
  const std::string ds = (work / "ds").string(), pd = (work / "pd").string();
  run_cli({"simulate", "--out", ds, "--n", "40", "--seed", "0", "--rotations", "3"}, code);
  o.pass &= code == 0;
  {
    std::ofstream(work / "prepare.json") << R"({"out_hw": [32, 32]})";
  }
  run_cli({"prepare", "--dataset", ds, "--out", pd, "--config", (work / "prepare.json").string()}, code);
  o.pass &= code == 0;
  const std::vector<std::string> common{"--data", pd, "--folds", "5", "--epochs", "40", "--batch", "16", "--lr", "1e-3",
                                        "--width-scale", "0.125", "--seed", "0", "--quiet"};
  for (const std::string variant : {"full", "--no-fusion", "--no-cam"}) {
    std::vector<std::string> args{"train", "--out", (work / ("model_" + variant)).string()};
    args.insert(args.end(), common.begin(), common.end());
    if (variant != "full") args.push_back(variant);
    const json rep = run_cli(args, code);
    if (code != 0 || !rep.contains("mean")) {
      o.pass = false;
      d << variant << ": failed; ";
      continue;
    }
    const double acc = rep["mean"]["acc"].get<double>();
    if (variant == "full") o.pass &= acc >= 0.85;
    d << variant << fmt(" 5-fold acc %.3f f1 %.3f; ", acc, rep["mean"]["f1"].get<double>());
  }
  o.detail = d.str();
  return o;
}

std::map<std::string, std::string> snapshot(const fs::path& dir) {
  std::map<std::string, std::string> m;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file()) m[fs::relative(e.path(), dir).string()] = read_file(e.path());
  return m;
}

Outcome format_stability(const fs::path& work) {
  Outcome o;
  int code = 0;
  run_cli({"simulate", "--out", (work / "a").string(), "--n", "10", "--seed", "0"}, code);
  o.pass &= code == 0;
  run_cli({"simulate", "--out", (work / "b").string(), "--n", "10", "--seed", "0"}, code);
  o.pass &= code == 0;
  const auto a = snapshot(work / "a"), b = snapshot(work / "b");
  const bool sim_same = a == b && !a.empty();

  std::size_t scans = 0;
  bool bscn_same = true;
  for (const auto& [name, bytes] : a)
    if (fs::path(name).extension() == ".bscn") {
      bscn_same &= encode_bscan(decode_bscan(bytes)) == bytes;
      ++scans;
    }

  mlff::NetConfig nc;
  nc.width_scale = 0.125;
  const std::string w = mlff::encode_mlfw(mlff::MLFFNet(nc, 3).state());
  mlff::MLFFNet other(nc, 4);
  other.load_state(mlff::decode_mlfw(w));
  const bool mlfw_same = mlff::encode_mlfw(mlff::decode_mlfw(w)) == w && mlff::encode_mlfw(other.state()) == w;

  o.pass &= sim_same && bscn_same && mlfw_same && scans > 0;
  o.detail = fmt("simulate x2 (%.0f files) identical: ", double(a.size())) + (sim_same ? "yes" : "NO") + fmt("; %.0f BSCN re-encoded: ", double(scans)) +
             (bscn_same ? "identical" : "DIFFER") + "; MLFW round trip: " + (mlfw_same ? "identical" : "DIFFER");
  return o;
}

}  // namespace

int main() {
  const fs::path work = fs::temp_directory_path() / "treeradar_acceptance";
  fs::remove_all(work);
  fs::create_directories(work);

  struct Criterion {
    int id;
    const char* name;
    double budget_s;
    std::function<Outcome()> run;
  };
  const std::vector<Criterion> criteria{
      {1, "metrics reproduction", 1e-3, metrics_reproduction},
      {2, "transform suite", 1.0, transform_suite},
      {3, "hyperbola-fit oracle", 10.0, hyperbola_oracle},
      {4, "C3 equivalence", 10.0, c3_equivalence},
      {5, "pipeline SCNR regression", 60.0, pipeline_scnr},
      {6, "defect preservation", 10.0, defect_preservation},
      {7, "gradient suite", 120.0, gradient_suite},
      {8, "CAM contract", 1.0, cam_contract},
      {9, "shape contract", 1.0, shape_contract},
      {10, "end-to-end learnability", 1800.0, [&] { return learnability(work / "learn"); }},
      {11, "format stability", 60.0, [&] { return format_stability(work / "formats"); }},
  };

  int failed = 0;
  for (const auto& c : criteria) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool in_time = secs <= c.budget_s;
    const bool pass = o.pass && in_time;
    failed += !pass;
    std::printf("%s  %2d  %-26s %9.3fs (budget %gs%s)  %s\n", pass ? "PASS" : "FAIL", c.id, c.name, secs, c.budget_s,
                in_time ? "" : ", OVER", o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
