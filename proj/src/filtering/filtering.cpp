#include "treeradar/filtering.hpp"

#include <algorithm>
#include <cmath>

#include "treeradar/errors.hpp"
#include "treeradar/json_util.hpp"
#include "treeradar/scnr.hpp"
#include "treeradar/transform.hpp"

namespace treeradar::filtering {
namespace {

double kaiser(double u, double beta) {
  if (u > 1.0) return 0.0;
  return std::cyl_bessel_i(0.0, beta * std::sqrt(std::max(0.0, 1.0 - u * u))) / std::cyl_bessel_i(0.0, beta);
}

std::optional<double> stage_scnr(const BScan& b, const std::optional<ScnrMasks>& masks) {
  if (!masks) return std::nullopt;
  try {
    return scnr(b, masks->signal, masks->cn);
  } catch (const DegenerateInput&) {
    return std::nullopt;
  }
}

void mark_window(Mask& m, const TimeAxis& axis, std::size_t n, double centre, double w) {
  const double lo = std::ceil((centre - w - axis.t0) / axis.dt - 1e-9);
  const double hi = std::floor((centre + w - axis.t0) / axis.dt + 1e-9);
  for (double s = std::max(lo, 0.0); s <= hi && s < static_cast<double>(axis.n_samples); s += 1.0)
    m.set(static_cast<std::size_t>(s), n);
}

const char* placement_name(KaiserPlacement p) { return p == KaiserPlacement::asymmetric ? "asymmetric" : "symmetric"; }

}  // namespace

void FirSpec::validate(const FrequencyGrid& grid) const {
  if (!(f_peak >= grid.f_lo() && f_peak <= grid.f_hi())) throw InvalidArgument("FirSpec: f_peak outside the band");
  if (!(beta >= 0.0)) throw InvalidArgument("FirSpec: beta must be >= 0");
  if (placement == KaiserPlacement::symmetric && !(half_width > 0.0)) throw InvalidArgument("FirSpec: half_width must be > 0");
}

BScan free_space_removal(const BScan& raw, std::span<const double> reference) {
  if (reference.size() != raw.n_samples()) throw InvalidArgument("free_space_removal: reference length differs from trace length");
  BScan out = raw;
  out.stage = "fsr";
  for (std::size_t s = 0; s < out.n_samples(); ++s)
    for (std::size_t n = 0; n < out.n_traces(); ++n) out.data(s, n) -= reference[s];
  return out;
}

std::vector<double> kaiser_weights(const FrequencyGrid& grid, const FirSpec& spec) {
  spec.validate(grid);
  std::vector<double> w(grid.n_points());
  for (std::size_t k = 0; k < w.size(); ++k) {
    const double f = grid.freq(k);
    double u = 0.0;
    if (spec.placement == KaiserPlacement::symmetric) {
      u = std::abs(f - spec.f_peak) / spec.half_width;
    } else if (f < spec.f_peak) {
      u = (spec.f_peak - f) / (spec.f_peak - grid.f_lo());
    } else if (f > spec.f_peak) {
      u = (f - spec.f_peak) / (grid.f_hi() - spec.f_peak);
    }
    w[k] = kaiser(u, spec.beta);
  }
  return w;
}

BScan apply_fir(const BScan& bscan, std::span<const double> weights, const FrequencyGrid& grid) {
  if (weights.size() != grid.n_points()) throw InvalidArgument("apply_fir: one weight per frequency point required");
  const std::size_t base = time_axis_for(grid, 1).n_samples;
  if (bscan.n_samples() % base != 0) throw InvalidArgument("apply_fir: record length does not match the frequency grid");
  const int oversample = static_cast<int>(bscan.n_samples() / base);
  const TimeAxis expect = time_axis_for(grid, oversample);
  if (std::abs(expect.dt - bscan.axis.dt) > 1e-9 * expect.dt) throw InvalidArgument("apply_fir: sample interval does not match the frequency grid");

  // The filter is time invariant, so work on the record relative to its own origin.
  TimeAxis local = bscan.axis;
  local.t0 = 0.0;
  BScan out = bscan;
  out.stage = "fir";
  for (std::size_t n = 0; n < bscan.n_traces(); ++n) {
    Spectrum s = time_to_band_trace(bscan.trace(n), local, grid);
    for (std::size_t k = 0; k < s.values.size(); ++k) s.values[k] *= weights[k];
    out.set_trace(n, band_to_time_trace(s, oversample));
  }
  return out;
}

ScnrMasks truth_masks(const synth::GroundTruth& truth, const TimeAxis& axis, double w, double extent) {
  const std::size_t n_traces = truth.bark_delay.size();
  if (truth.far_end_delay.size() != n_traces) throw InvalidArgument("truth_masks: inconsistent ground truth");
  const std::vector<double>* centre = &truth.far_end_delay;
  if (truth.defect_delay) centre = &*truth.defect_delay;
  ScnrMasks m{Mask(axis.n_samples, n_traces), Mask(axis.n_samples, n_traces)};
  for (std::size_t n = 0; n < n_traces; ++n) mark_window(m.signal, axis, n, (*centre)[n], w);
  const double t_end = *std::max_element(truth.far_end_delay.begin(), truth.far_end_delay.end()) + extent;
  for (std::size_t s = 0; s < axis.n_samples; ++s) {
    if (axis.time(static_cast<double>(s)) > t_end) break;
    for (std::size_t n = 0; n < n_traces; ++n)
      if (!m.signal.test(s, n)) m.cn.set(s, n);
  }
  return m;
}

void PipelineConfig::validate() const {
  static const std::vector<std::string> kOrder{"fsr", "gated", "fir"};
  if (order != kOrder) {
    std::string got;
    for (const auto& s : order) got += (got.empty() ? "" : ",") + s;
    throw InvalidArgument("pipeline: stage order must be fsr,gated,fir (gating before FIR); got " + got);
  }
  if (gate.s_min < 1) throw InvalidArgument("pipeline: gating s_min must be >= 1");
  if (gate.w && !(*gate.w >= 0.0)) throw InvalidArgument("pipeline: gating w must be >= 0");
}

PipelineOutput process(const BScan& raw, std::span<const double> reference, const FrequencyGrid& grid, const PipelineConfig& config) {
  config.validate();
  raw.validate();
  if (config.fir) config.fir_spec.validate(grid);

  PipelineOutput out{raw, {}};
  PipelineReport& rep = out.report;
  BScan& cur = out.processed;
  auto keep = [&](const char* stage) {
    if (!config.keep_stages) return;
    rep.stages.push_back(cur);
    rep.stages.back().stage = stage;
  };
  rep.scnr_raw = stage_scnr(cur, config.masks);
  keep("raw");

  if (config.free_space) {
    cur = free_space_removal(cur, reference);
    rep.scnr_freespace = stage_scnr(cur, config.masks);
    keep("fsr");
  }
  if (config.gating) {
    try {
      rep.gate = gating::find_gate(cur, grid, config.gate).gate;
      cur = gating::apply_zero_gate(cur, *rep.gate);
    } catch (const NoSurfaceClutter& e) {
      rep.gate_fallback = true;
      rep.fallback_reason = e.what();
    } catch (const NonHyperbolicCluster& e) {
      rep.gate_fallback = true;
      rep.fallback_reason = e.what();
    }
    rep.scnr_gated = stage_scnr(cur, config.masks);
    keep("gated");
  }
  if (config.fir) {
    cur = apply_fir(cur, kaiser_weights(grid, config.fir_spec), grid);
    rep.scnr_fir = stage_scnr(cur, config.masks);
    keep("fir");
  }
  return out;
}

nlohmann::json to_json(const PipelineReport& report) {
  auto opt = [](const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); };
  nlohmann::json j = {{"scnr_db",
                       {{"raw", opt(report.scnr_raw)},
                        {"fsr", opt(report.scnr_freespace)},
                        {"gated", opt(report.scnr_gated)},
                        {"fir", opt(report.scnr_fir)}}},
                      {"gate_fallback", report.gate_fallback}};
  j["gate"] = report.gate ? gating::to_json(*report.gate) : nlohmann::json(nullptr);
  if (report.gate_fallback) j["fallback_reason"] = report.fallback_reason;
  return j;
}

nlohmann::json to_json(const PipelineConfig& config) {
  return {{"free_space", config.free_space},
          {"gating", config.gating},
          {"fir", config.fir},
          {"order", config.order},
          {"gate", gating::to_json(config.gate)},
          {"fir_spec",
           {{"f_peak_hz", config.fir_spec.f_peak},
            {"beta", config.fir_spec.beta},
            {"placement", placement_name(config.fir_spec.placement)},
            {"half_width_hz", config.fir_spec.half_width}}},
          {"keep_stages", config.keep_stages}};
}

PipelineConfig pipeline_config_from_json(const nlohmann::json& j) {
  require_known_keys(j, {"free_space", "gating", "fir", "order", "gate", "fir_spec", "keep_stages"}, "pipeline");
  PipelineConfig c;
  try {
    c.free_space = j.value("free_space", c.free_space);
    c.gating = j.value("gating", c.gating);
    c.fir = j.value("fir", c.fir);
    c.order = j.value("order", c.order);
    c.keep_stages = j.value("keep_stages", c.keep_stages);
    if (j.contains("gate")) c.gate = gating::gating_config_from_json(j.at("gate"));
    if (j.contains("fir_spec")) {
      const auto& f = j.at("fir_spec");
      require_known_keys(f, {"f_peak_hz", "beta", "placement", "half_width_hz"}, "pipeline.fir_spec");
      c.fir_spec.f_peak = f.value("f_peak_hz", c.fir_spec.f_peak);
      c.fir_spec.beta = f.value("beta", c.fir_spec.beta);
      c.fir_spec.half_width = f.value("half_width_hz", c.fir_spec.half_width);
      const std::string p = f.value("placement", std::string(placement_name(c.fir_spec.placement)));
      if (p == "asymmetric") c.fir_spec.placement = KaiserPlacement::asymmetric;
      else if (p == "symmetric") c.fir_spec.placement = KaiserPlacement::symmetric;
      else throw FormatError("pipeline.fir_spec.placement: unknown value '" + p + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("pipeline: ") + e.what());
  }
  try {
    c.validate();
  } catch (const InvalidArgument& e) {
    throw FormatError(e.what());
  }
  return c;
}

}  // namespace treeradar::filtering
