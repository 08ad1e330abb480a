#include "treeradar/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>

#include "treeradar/bscan_io.hpp"
#include "treeradar/dataset.hpp"
#include "treeradar/errors.hpp"
#include "treeradar/filtering.hpp"
#include "treeradar/json_util.hpp"
#include "treeradar/scnr.hpp"

namespace treeradar::cli {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

/// A BSCN input failed to parse; maps to exit code 3.
class BadScan : public Error {
 public:
  using Error::Error;
};

/// Gating fell back; outputs were still written. Maps to exit code 2.
class GateFallback : public Error {
 public:
  using Error::Error;
};

BScan load_scan(const fs::path& path) {
  std::string bytes = read_file(path);
  try {
    return decode_bscan(bytes);
  } catch (const FormatError& e) {
    throw BadScan(path.string() + ": " + e.what());
  }
}

json load_json(const fs::path& path) {
  const std::string text = read_file(path);
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

std::string dump(const json& j) { return j.dump(2) + "\n"; }

void write_json(const fs::path& path, const json& j) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  write_file_atomic(path, dump(j));
}

void emit(const std::string& path, const json& j, std::ostream& out) {
  if (path.empty())
    out << dump(j);
  else
    write_json(path, j);
}

void write_scan(const fs::path& path, const BScan& b) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  write_bscan(path, b);
}

json grid_json(const FrequencyGrid& g) { return {{"f_lo_hz", g.f_lo()}, {"f_hi_hz", g.f_hi()}, {"n_points", g.n_points()}}; }

/// Sweep recorded by simulate in the scan header, else the default sweep.
FrequencyGrid grid_of(const BScan& b) {
  if (!b.extra.contains("grid")) return FrequencyGrid::standoff_default();
  const json& g = b.extra.at("grid");
  require_known_keys(g, {"f_lo_hz", "f_hi_hz", "n_points"}, "grid");
  return FrequencyGrid(g.at("f_lo_hz").get<double>(), g.at("f_hi_hz").get<double>(), g.at("n_points").get<std::size_t>());
}

std::vector<double> reference_trace(const fs::path& path) {
  const BScan ref = load_scan(path);
  if (ref.n_traces() != 1) throw InvalidArgument(path.string() + ": reference must hold exactly one trace");
  return ref.trace(0);
}

filtering::PipelineConfig load_pipeline(const std::string& path) {
  return path.empty() ? filtering::PipelineConfig{} : filtering::pipeline_config_from_json(load_json(path));
}

// ---- dataset manifests ------------------------------------------------------

struct Entry {
  std::string name;
  std::string file;
  std::string truth;
  std::string trunk_id;
  int rotation = 0;
  int label = 0;
  bool padded = false;
  bool gate_fallback = false;
};

std::vector<Entry> manifest_entries(const json& m, const fs::path& where) {
  if (!m.contains("entries") || !m.at("entries").is_array()) throw FormatError(where.string() + ": manifest has no entries");
  std::vector<Entry> out;
  for (const json& e : m.at("entries")) {
    Entry x;
    x.name = e.at("name").get<std::string>();
    x.file = e.at("file").get<std::string>();
    x.truth = e.value("truth", "");
    x.trunk_id = e.at("trunk_id").get<std::string>();
    x.rotation = e.value("rotation", 0);
    const json& l = e.at("label");
    x.label = l.is_string() ? (l.get<std::string>() == "defective" ? 1 : 0) : l.get<int>();
    x.padded = e.value("padded", false);
    x.gate_fallback = e.value("gate_fallback", false);
    out.push_back(std::move(x));
  }
  return out;
}

struct Prepared {
  json manifest;
  std::vector<Entry> entries;
  std::vector<mlff::Sample> samples;
};

mlff::Tensor load_input(const fs::path& path) {
  const auto tensors = mlff::read_mlfw(path);
  for (const auto& [name, t] : tensors)
    if (name == "input") return t;
  throw FormatError(path.string() + ": no 'input' tensor");
}

Prepared load_prepared(const fs::path& dir) {
  Prepared p;
  p.manifest = load_json(dir / "manifest.json");
  p.entries = manifest_entries(p.manifest, dir);
  for (const Entry& e : p.entries) p.samples.push_back({load_input(dir / e.file), e.label, e.trunk_id});
  if (p.samples.empty()) throw InvalidArgument(dir.string() + ": no samples");
  return p;
}

// ---- images -----------------------------------------------------------------

std::array<unsigned char, 3> blue_white_red(std::size_t i) {
  if (i < 128) {
    const auto v = static_cast<unsigned char>(std::lround(255.0 * static_cast<double>(i) / 128.0));
    return {v, v, 255};
  }
  const auto v = static_cast<unsigned char>(std::lround(255.0 * static_cast<double>(255 - i) / 127.0));
  return {255, v, v};
}

// ---- models -----------------------------------------------------------------

struct Model {
  mlff::MLFFNet net;
  json meta;
};

Model load_model(const fs::path& dir) {
  json meta = load_json(dir / "model.json");
  require_known_keys(meta, {"net", "prepare", "pipeline", "fold", "val"}, "model");
  Model m{mlff::MLFFNet(mlff::net_config_from_json(meta.at("net"))), meta};
  m.net.load_state(mlff::read_mlfw(dir / "weights.mlfw"));
  return m;
}

json prediction_json(const mlff::Prediction& p) {
  return {{"label", p.label == 1 ? "defective" : "healthy"}, {"probability", p.probability}};
}

json metrics_json(const mlff::ConfusionMatrix& cm) {
  json j = mlff::to_json(mlff::metrics(cm));
  j["confusion_matrix"] = mlff::to_json(cm);
  return j;
}

// ---- subcommands --------------------------------------------------------------

struct SimulateArgs {
  std::string config, out;
  std::optional<std::size_t> n;
  std::optional<double> fraction;
  std::optional<std::uint64_t> seed;
  std::optional<int> rotations;
};

int cmd_simulate(const SimulateArgs& a, std::ostream& out) {
  SimulateConfig c = a.config.empty() ? SimulateConfig{} : simulate_config_from_json(load_json(a.config));
  if (a.n) c.n_trunks = *a.n;
  if (a.fraction) c.defective_fraction = *a.fraction;
  if (a.seed) c.seed = *a.seed;
  if (a.rotations) c.rotations = *a.rotations;

  const auto records = synth::sample_dataset(c.n_trunks, c.defective_fraction, c.seed, c.rotations, c.acquisition);
  const fs::path dir(a.out);
  fs::create_directories(dir / "scans");
  fs::create_directories(dir / "truth");

  json entries = json::array();
  for (const auto& r : records) {
    std::ostringstream name;
    name << r.trunk_id << "_r" << std::setw(2) << std::setfill('0') << r.rotation;
    BScan raw = r.sim.raw;
    raw.extra["grid"] = grid_json(c.acquisition.grid);
    raw.extra["trunk_id"] = r.trunk_id;
    raw.extra["rotation"] = r.rotation;
    write_scan(dir / "scans" / (name.str() + ".bscn"), raw);
    write_json(dir / "truth" / (name.str() + ".json"), synth::to_json(r.sim.truth));
    entries.push_back({{"name", name.str()},
                       {"file", "scans/" + name.str() + ".bscn"},
                       {"truth", "truth/" + name.str() + ".json"},
                       {"trunk_id", r.trunk_id},
                       {"rotation", r.rotation},
                       {"label", synth::to_string(r.sim.truth.label)}});
  }
  if (!records.empty()) {
    const BScan& first = records.front().sim.raw;
    BScan ref(first.axis, 1, first.dx, "reference");
    ref.set_trace(0, records.front().sim.reference);
    ref.extra["grid"] = grid_json(c.acquisition.grid);
    write_scan(dir / "reference.bscn", ref);
  }
  const json manifest = {{"format", "treeradar-dataset"}, {"config", to_json(c)}, {"reference", "reference.bscn"}, {"entries", entries}};
  write_json(dir / "manifest.json", manifest);
  out << dump({{"scans", records.size()}, {"out", dir.string()}});
  return kExitOk;
}

struct ProcessArgs {
  std::string input, reference, out, report, config, truth, stage_dir;
  bool skip_fsr = false, skip_gate = false, skip_fir = false;
  std::optional<double> mask_width;
};

int cmd_process(const ProcessArgs& a, std::ostream& out) {
  const BScan raw = load_scan(a.input);
  const FrequencyGrid grid = grid_of(raw);
  filtering::PipelineConfig cfg = load_pipeline(a.config);
  if (a.skip_fsr) cfg.free_space = false;
  if (a.skip_gate) cfg.gating = false;
  if (a.skip_fir) cfg.fir = false;
  if (!a.stage_dir.empty()) cfg.keep_stages = true;

  std::vector<double> reference;
  if (cfg.free_space) {
    if (a.reference.empty()) throw InvalidArgument("process: --reference is required unless --skip-fsr is given");
    reference = reference_trace(a.reference);
  }
  if (!a.truth.empty())
    cfg.masks = filtering::truth_masks(synth::truth_from_json(load_json(a.truth)), raw.axis, a.mask_width.value_or(cfg.gate.w_for(grid)));

  const auto result = filtering::process(raw, reference, grid, cfg);
  if (!a.out.empty()) write_scan(a.out, result.processed);
  for (const BScan& s : result.report.stages) {
    write_scan(fs::path(a.stage_dir) / (s.stage + ".bscn"), s);
    write_file_atomic(fs::path(a.stage_dir) / (s.stage + ".pgm"), render_image(s, PlotStyle::gray));
  }
  json rep = filtering::to_json(result.report);
  rep["config"] = filtering::to_json(cfg);
  emit(a.report, rep, out);
  if (result.report.gate_fallback) throw GateFallback("process: " + result.report.fallback_reason);
  return kExitOk;
}

struct ScnrArgs {
  std::string input, truth, dataset, config, out;
  std::optional<double> mask_width;
};

int cmd_scnr(const ScnrArgs& a, std::ostream& out) {
  if (!a.input.empty()) {
    if (a.truth.empty()) throw InvalidArgument("scnr: --truth is required with --input");
    const BScan b = load_scan(a.input);
    const auto masks =
        filtering::truth_masks(synth::truth_from_json(load_json(a.truth)), b.axis, a.mask_width.value_or(gating::GatingConfig{}.w_for(grid_of(b))));
    emit(a.out, {{"scnr_db", scnr(b, masks.signal, masks.cn)}}, out);
    return kExitOk;
  }
  if (a.dataset.empty()) throw InvalidArgument("scnr: give --input or --dataset");

  // Benchmark mode: the full pipeline on every scan of a simulated dataset.
  const fs::path dir(a.dataset);
  const json manifest = load_json(dir / "manifest.json");
  const auto reference = reference_trace(dir / manifest.value("reference", "reference.bscn"));
  const filtering::PipelineConfig base = load_pipeline(a.config);
  json scenes = json::array();
  std::size_t ordered = 0, counted = 0;
  double improvement = 0.0;
  for (const Entry& e : manifest_entries(manifest, dir)) {
    if (e.truth.empty()) throw FormatError("scnr: entry " + e.name + " has no truth file");
    const BScan raw = load_scan(dir / e.file);
    const FrequencyGrid grid = grid_of(raw);
    filtering::PipelineConfig cfg = base;
    cfg.masks = filtering::truth_masks(synth::truth_from_json(load_json(dir / e.truth)), raw.axis,
                                       a.mask_width.value_or(cfg.gate.w_for(grid)));
    const auto r = filtering::process(raw, reference, grid, cfg).report;
    json s = filtering::to_json(r);
    s.erase("gate");
    s["name"] = e.name;
    const auto& v = r;
    if (v.scnr_raw && v.scnr_freespace && v.scnr_gated && v.scnr_fir) {
      const bool ok = *v.scnr_raw < *v.scnr_freespace && *v.scnr_freespace < *v.scnr_gated && *v.scnr_gated <= *v.scnr_fir;
      s["ordered"] = ok;
      ordered += ok;
      improvement += *v.scnr_fir - *v.scnr_raw;
      ++counted;
    }
    scenes.push_back(s);
  }
  json summary = {{"scenes", scenes.size()},
                  {"complete", counted},
                  {"ordered", ordered},
                  {"mean_improvement_db", counted ? json(improvement / static_cast<double>(counted)) : json(nullptr)}};
  emit(a.out, {{"summary", summary}, {"per_scene", scenes}}, out);
  return kExitOk;
}

struct PlotArgs {
  std::string input, out, style;
  std::size_t decimate = 1;
};

int cmd_plot(const PlotArgs& a) {
  const BScan b = load_scan(a.input);
  PlotStyle style = PlotStyle::gray;
  if (a.style == "color" || (a.style.empty() && fs::path(a.out).extension() == ".ppm")) style = PlotStyle::color;
  write_file_atomic(a.out, render_image(b, style, a.decimate));
  return kExitOk;
}

struct PrepareArgs {
  std::string dataset, out, config, pipeline;
};

int cmd_prepare(const PrepareArgs& a, std::ostream& out) {
  const fs::path src(a.dataset), dst(a.out);
  const json manifest = load_json(src / "manifest.json");
  const auto reference = reference_trace(src / manifest.value("reference", "reference.bscn"));
  const mlff::PrepareConfig pc = a.config.empty() ? mlff::PrepareConfig{} : mlff::prepare_config_from_json(load_json(a.config));
  pc.validate();
  const filtering::PipelineConfig pipe = load_pipeline(a.pipeline);
  fs::create_directories(dst / "samples");

  json entries = json::array();
  std::size_t fallbacks = 0, padded = 0;
  for (const Entry& e : manifest_entries(manifest, src)) {
    const BScan raw = load_scan(src / e.file);
    const auto p = mlff::prepare_scan(raw, reference, grid_of(raw), e.label, e.trunk_id, pipe, pc);
    const std::string file = "samples/" + e.name + ".mlfw";
    mlff::write_mlfw(dst / file, {{"input", p.sample.input}});
    fallbacks += p.gate_fallback;
    padded += p.padded;
    entries.push_back({{"name", e.name},
                       {"file", file},
                       {"trunk_id", e.trunk_id},
                       {"rotation", e.rotation},
                       {"label", e.label},
                       {"padded", p.padded},
                       {"gate_fallback", p.gate_fallback}});
  }
  write_json(dst / "manifest.json", {{"format", "treeradar-prepared"},
                                     {"prepare", mlff::to_json(pc)},
                                     {"pipeline", filtering::to_json(pipe)},
                                     {"entries", entries}});
  out << dump({{"samples", entries.size()}, {"gate_fallback", fallbacks}, {"padded", padded}});
  return kExitOk;
}

struct TrainArgs {
  std::string data, out, config;
  std::optional<std::size_t> folds, epochs, batch;
  std::optional<double> lr, width_scale;
  std::optional<std::uint64_t> seed;
  bool no_fusion = false, no_cam = false, quiet = false;
};

json mean_metrics(const std::vector<mlff::MetricsReport>& ms) {
  double acc = 0, prec = 0, rec = 0, f1 = 0;
  for (const auto& m : ms) {
    acc += m.accuracy;
    prec += m.precision;
    rec += m.recall;
    f1 += m.f1;
  }
  const double n = static_cast<double>(ms.size());
  return {{"acc", acc / n}, {"prec", prec / n}, {"rec", rec / n}, {"f1", f1 / n}};
}

int cmd_train(const TrainArgs& a, std::ostream& out, std::ostream& err) {
  TrainRunConfig c = a.config.empty() ? TrainRunConfig{} : train_run_config_from_json(load_json(a.config));
  if (a.folds) c.folds = *a.folds;
  if (a.epochs) c.train.epochs = *a.epochs;
  if (a.batch) c.train.batch = *a.batch;
  if (a.lr) c.train.adam.lr = *a.lr;
  if (a.width_scale) c.net.width_scale = *a.width_scale;
  if (a.seed) c.train.seed = *a.seed;
  if (a.no_fusion) c.net.use_fusion = false;
  if (a.no_cam) c.net.use_cam = false;

  const Prepared data = load_prepared(a.data);
  const auto& shape = data.samples.front().input.shape;
  if (shape.size() != 3) throw FormatError("train: sample tensors must be [C,H,W]");
  c.net.in_channels = shape[0];
  c.net.input_h = shape[1];
  c.net.input_w = shape[2];
  c.net.validate();

  const fs::path dir(a.out);
  fs::create_directories(dir);
  write_json(dir / "config.json", to_json(c));

  std::vector<std::string> ids;
  std::vector<int> labels;
  for (const auto& s : data.samples) {
    ids.push_back(s.trunk_id);
    labels.push_back(s.label);
  }

  auto save_model = [&](const fs::path& mdir, mlff::MLFFNet& net, const json& extra) {
    fs::create_directories(mdir);
    mlff::write_mlfw(mdir / "weights.mlfw", net.state());
    json meta = {{"net", mlff::to_json(c.net)},
                 {"prepare", data.manifest.value("prepare", json::object())},
                 {"pipeline", data.manifest.value("pipeline", json::object())}};
    meta.update(extra);
    write_json(mdir / "model.json", meta);
  };
  auto history_writer = [&](std::ofstream& hist, std::size_t fold) {
    return [&, fold](const mlff::EpochRecord& r) {
      hist << mlff::to_json(r).dump() << "\n";
      if (!a.quiet) err << "fold " << fold << " epoch " << r.epoch << " loss " << r.train_loss << "\n";
    };
  };

  if (c.folds <= 1) {
    mlff::MLFFNet net(c.net, c.train.seed);
    std::ofstream hist(dir / "history.jsonl", std::ios::binary | std::ios::trunc);
    mlff::train(net, data.samples, {}, c.train, history_writer(hist, 0));
    save_model(dir, net, {});
    const json report = {{"train", metrics_json(mlff::evaluate(net, data.samples))}};
    write_json(dir / "metrics.json", report);
    out << dump(report);
    return kExitOk;
  }

  const auto folds = mlff::kfold_split(ids, labels, c.folds, c.train.seed);
  mlff::check_no_leakage(folds, ids);
  json fold_reports = json::array();
  std::vector<mlff::MetricsReport> ms;
  for (std::size_t f = 0; f < folds.size(); ++f) {
    std::vector<mlff::Sample> tr, va;
    json val_names = json::array();
    for (auto i : folds[f].train) tr.push_back(data.samples[i]);
    for (auto i : folds[f].val) {
      va.push_back(data.samples[i]);
      val_names.push_back(data.entries[i].name);
    }
    const fs::path fdir = dir / ("fold" + std::to_string(f));
    fs::create_directories(fdir);
    mlff::MLFFNet net(c.net, c.train.seed);
    std::ofstream hist(fdir / "history.jsonl", std::ios::binary | std::ios::trunc);
    const auto result = mlff::train(net, tr, va, c.train, history_writer(hist, f));
    const auto cm = mlff::evaluate(net, va);
    ms.push_back(mlff::metrics(cm));
    json rep = {{"fold", f}, {"best_epoch", result.best_epoch}, {"val", metrics_json(cm)}};
    write_json(fdir / "metrics.json", rep);
    save_model(fdir, net, {{"fold", f}, {"val", val_names}});
    fold_reports.push_back(rep);
  }
  const json report = {{"folds", fold_reports}, {"mean", mean_metrics(ms)}, {"selection", "best validation epoch per fold"}};
  write_json(dir / "metrics.json", report);
  out << dump(report);
  return kExitOk;
}

struct EvalArgs {
  std::string data, model, out;
  bool val_only = false;
};

int cmd_eval(const EvalArgs& a, std::ostream& out) {
  Model m = load_model(a.model);
  const Prepared data = load_prepared(a.data);
  std::vector<mlff::Sample> picked;
  if (a.val_only) {
    if (!m.meta.contains("val")) throw InvalidArgument("eval: model has no validation list");
    std::map<std::string, std::size_t> by_name;
    for (std::size_t i = 0; i < data.entries.size(); ++i) by_name[data.entries[i].name] = i;
    for (const json& n : m.meta.at("val")) picked.push_back(data.samples.at(by_name.at(n.get<std::string>())));
  } else {
    picked = data.samples;
  }
  emit(a.out, metrics_json(mlff::evaluate(m.net, picked)), out);
  return kExitOk;
}

struct PredictArgs {
  std::string model, input, reference, out;
};

int cmd_predict(const PredictArgs& a, std::ostream& out) {
  Model m = load_model(a.model);
  mlff::Sample s;
  bool fallback = false;
  if (fs::path(a.input).extension() == ".bscn") {
    if (a.reference.empty()) throw InvalidArgument("predict: --reference is required for a raw scan");
    const BScan raw = load_scan(a.input);
    const auto pipe = m.meta.at("pipeline").empty() ? filtering::PipelineConfig{} : filtering::pipeline_config_from_json(m.meta.at("pipeline"));
    const auto pc = m.meta.at("prepare").empty() ? mlff::PrepareConfig{} : mlff::prepare_config_from_json(m.meta.at("prepare"));
    const auto p = mlff::prepare_scan(raw, reference_trace(a.reference), grid_of(raw), 0, "", pipe, pc);
    s = p.sample;
    fallback = p.gate_fallback;
  } else {
    s.input = load_input(a.input);
  }
  json j = prediction_json(mlff::predict(m.net, {s}).front());
  j["gate_fallback"] = fallback;
  emit(a.out, j, out);
  return kExitOk;
}

}  // namespace

// ---- configs ------------------------------------------------------------------

json to_json(const SimulateConfig& c) {
  return {{"n_trunks", c.n_trunks},
          {"defective_fraction", c.defective_fraction},
          {"seed", c.seed},
          {"rotations", c.rotations},
          {"acquisition", synth::to_json(c.acquisition)}};
}

SimulateConfig simulate_config_from_json(const json& j) {
  require_known_keys(j, {"n_trunks", "defective_fraction", "seed", "rotations", "acquisition"}, "simulate");
  SimulateConfig c;
  try {
    c.n_trunks = j.value("n_trunks", c.n_trunks);
    c.defective_fraction = j.value("defective_fraction", c.defective_fraction);
    c.seed = j.value("seed", c.seed);
    c.rotations = j.value("rotations", c.rotations);
  } catch (const json::exception& e) {
    throw FormatError(std::string("simulate: ") + e.what());
  }
  if (j.contains("acquisition")) c.acquisition = synth::acquisition_from_json(j.at("acquisition"));
  return c;
}

json to_json(const TrainRunConfig& c) {
  return {{"folds", c.folds},
          {"epochs", c.train.epochs},
          {"batch", c.train.batch},
          {"lr", c.train.adam.lr},
          {"beta1", c.train.adam.beta1},
          {"beta2", c.train.adam.beta2},
          {"eps", c.train.adam.eps},
          {"seed", c.train.seed},
          {"net", mlff::to_json(c.net)}};
}

TrainRunConfig train_run_config_from_json(const json& j) {
  require_known_keys(j, {"folds", "epochs", "batch", "lr", "beta1", "beta2", "eps", "seed", "net"}, "train");
  TrainRunConfig c;
  try {
    c.folds = j.value("folds", c.folds);
    c.train.epochs = j.value("epochs", c.train.epochs);
    c.train.batch = j.value("batch", c.train.batch);
    c.train.adam.lr = j.value("lr", c.train.adam.lr);
    c.train.adam.beta1 = j.value("beta1", c.train.adam.beta1);
    c.train.adam.beta2 = j.value("beta2", c.train.adam.beta2);
    c.train.adam.eps = j.value("eps", c.train.adam.eps);
    c.train.seed = j.value("seed", c.train.seed);
  } catch (const json::exception& e) {
    throw FormatError(std::string("train: ") + e.what());
  }
  if (j.contains("net")) c.net = mlff::net_config_from_json(j.at("net"));
  return c;
}

std::string render_image(const BScan& bscan, PlotStyle style, std::size_t decimate) {
  if (decimate == 0) throw InvalidArgument("render_image: decimate must be >= 1");
  const std::size_t rows = (bscan.n_samples() + decimate - 1) / decimate, cols = bscan.n_traces();
  if (rows == 0 || cols == 0) throw InvalidArgument("render_image: empty scan");
  double lo = INFINITY, hi = -INFINITY;
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) {
      const double v = bscan.data(r * decimate, c);
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  auto level = [&](double v) -> std::size_t {
    if (!(hi > lo)) return 128;
    return static_cast<std::size_t>(std::lround(255.0 * (v - lo) / (hi - lo)));
  };

  std::ostringstream os;
  os << (style == PlotStyle::gray ? "P5" : "P6") << "\n" << cols << " " << rows << "\n255\n";
  std::string body;
  body.reserve(rows * cols * (style == PlotStyle::gray ? 1 : 3));
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) {
      const std::size_t l = level(bscan.data(r * decimate, c));
      if (style == PlotStyle::gray) {
        body.push_back(static_cast<char>(l));
      } else {
        for (unsigned char ch : blue_white_red(l)) body.push_back(static_cast<char>(ch));
      }
    }
  return os.str() + body;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Stand-off radar trunk inspection: simulation, processing and defect classification", "treeradar"};
  app.require_subcommand(1);

  SimulateArgs sim;
  auto* s = app.add_subcommand("simulate", "Simulate a labelled B-scan dataset");
  s->add_option("--out", sim.out, "Output directory")->required();
  s->add_option("--config", sim.config, "Simulation config JSON");
  s->add_option("--n", sim.n, "Number of trunks (default 20)");
  s->add_option("--defective-fraction", sim.fraction, "Fraction of defective trunks (default 0.5)");
  s->add_option("--seed", sim.seed, "Dataset seed (default 0)");
  s->add_option("--rotations", sim.rotations, "Scans per trunk (default 1)");

  ProcessArgs proc;
  auto* p = app.add_subcommand("process", "Free-space removal, clutter gating and FIR weighting of one scan");
  p->add_option("--input", proc.input, "Raw BSCN")->required();
  p->add_option("--reference", proc.reference, "Antenna-only reference BSCN (one trace)");
  p->add_option("--out", proc.out, "Processed BSCN");
  p->add_option("--report", proc.report, "Report JSON (stdout if omitted)");
  p->add_option("--config", proc.config, "Pipeline config JSON");
  p->add_option("--truth", proc.truth, "Ground-truth JSON; enables per-stage SCNR");
  p->add_option("--mask-width", proc.mask_width, "SCNR signal half-width in seconds (default: the gate w)");
  p->add_option("--stage-dir", proc.stage_dir, "Write every stage as BSCN and PGM here");
  p->add_flag("--skip-fsr", proc.skip_fsr, "Skip free-space removal");
  p->add_flag("--skip-gate", proc.skip_gate, "Skip clutter gating");
  p->add_flag("--skip-fir", proc.skip_fir, "Skip FIR weighting");

  PlotArgs plot;
  auto* pl = app.add_subcommand("plot", "Render a BSCN as PGM (gray) or PPM (blue-white-red)");
  pl->add_option("--input", plot.input, "BSCN")->required();
  pl->add_option("--out", plot.out, "Image path")->required();
  pl->add_option("--style", plot.style, "gray or color (default from the extension)")->check(CLI::IsMember({"gray", "color"}));
  pl->add_option("--decimate", plot.decimate, "Keep every k-th time sample")->check(CLI::PositiveNumber);

  PrepareArgs prep;
  auto* pr = app.add_subcommand("prepare", "Turn a simulated dataset into network input tensors");
  pr->add_option("--dataset", prep.dataset, "Directory written by simulate")->required();
  pr->add_option("--out", prep.out, "Output directory")->required();
  pr->add_option("--config", prep.config, "Prepare config JSON");
  pr->add_option("--pipeline", prep.pipeline, "Pipeline config JSON");

  TrainArgs tr;
  auto* t = app.add_subcommand("train", "Trunk-level k-fold training");
  t->add_option("--data", tr.data, "Directory written by prepare")->required();
  t->add_option("--out", tr.out, "Output directory")->required();
  t->add_option("--config", tr.config, "Train config JSON");
  t->add_option("--folds", tr.folds, "Number of folds; 1 trains one model on everything (default 5)");
  t->add_option("--epochs", tr.epochs, "Epochs (default 100)");
  t->add_option("--batch", tr.batch, "Batch size (default 64)");
  t->add_option("--lr", tr.lr, "Adam learning rate (default 5e-4)");
  t->add_option("--width-scale", tr.width_scale, "Channel width multiplier (default 1)");
  t->add_option("--seed", tr.seed, "Seed for folds, init and shuffling (default 0)");
  t->add_flag("--no-fusion", tr.no_fusion, "Ablation: classify the last level only");
  t->add_flag("--no-cam", tr.no_cam, "Ablation: drop coordinate attention");
  t->add_flag("--quiet", tr.quiet, "No per-epoch progress on stderr");

  EvalArgs ev;
  auto* e = app.add_subcommand("eval", "Metrics of a trained model on a prepared dataset");
  e->add_option("--data", ev.data, "Directory written by prepare")->required();
  e->add_option("--model", ev.model, "Model directory (weights.mlfw + model.json)")->required();
  e->add_option("--out", ev.out, "Metrics JSON (stdout if omitted)");
  e->add_flag("--val-only", ev.val_only, "Only the model's validation samples");

  PredictArgs pd;
  auto* d = app.add_subcommand("predict", "Classify one prepared sample (.mlfw) or raw scan (.bscn)");
  d->add_option("--model", pd.model, "Model directory")->required();
  d->add_option("--input", pd.input, "Sample MLFW or raw BSCN")->required();
  d->add_option("--reference", pd.reference, "Reference BSCN for a raw scan");
  d->add_option("--out", pd.out, "Prediction JSON (stdout if omitted)");

  ScnrArgs sc;
  auto* r = app.add_subcommand("scnr", "SCNR of one scan, or the stagewise benchmark over a dataset");
  r->add_option("--input", sc.input, "BSCN");
  r->add_option("--truth", sc.truth, "Ground-truth JSON for --input");
  r->add_option("--dataset", sc.dataset, "Directory written by simulate");
  r->add_option("--config", sc.config, "Pipeline config JSON for --dataset");
  r->add_option("--mask-width", sc.mask_width, "Signal half-width in seconds (default: the gate w)");
  r->add_option("--out", sc.out, "JSON output (stdout if omitted)");

  std::vector<std::string> argv_store{"treeradar"};
  argv_store.insert(argv_store.end(), args.begin(), args.end());
  std::vector<char*> argv;
  for (auto& a : argv_store) argv.push_back(a.data());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& ex) {
    const auto* sub = app.get_subcommands().empty() ? &app : app.get_subcommands().front();
    err << "treeradar: " << ex.what() << "\n" << sub->help();
    return kExitFailure;
  }

  try {
    if (*s) return cmd_simulate(sim, out);
    if (*p) return cmd_process(proc, out);
    if (*pl) return cmd_plot(plot);
    if (*pr) return cmd_prepare(prep, out);
    if (*t) return cmd_train(tr, out, err);
    if (*e) return cmd_eval(ev, out);
    if (*d) return cmd_predict(pd, out);
    if (*r) return cmd_scnr(sc, out);
  } catch (const GateFallback& ex) {
    err << "treeradar: " << ex.what() << "\n";
    return kExitGateFallback;
  } catch (const BadScan& ex) {
    err << "treeradar: malformed BSCN: " << ex.what() << "\n";
    return kExitBadScan;
  } catch (const std::exception& ex) {
    err << "treeradar: " << ex.what() << "\n";
    return kExitFailure;
  }
  return kExitFailure;
}

}  // namespace treeradar::cli
