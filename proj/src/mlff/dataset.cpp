#include "treeradar/dataset.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>

#include "treeradar/bscan_io.hpp"
#include "treeradar/errors.hpp"
#include "treeradar/json_util.hpp"
#include "treeradar/resample.hpp"

namespace treeradar::mlff {
namespace {

static_assert(std::endian::native == std::endian::little, "MLFW IO assumes a little-endian host");

constexpr std::string_view kMagic = "MLFW1";

template <typename T>
void put(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

class Reader {
 public:
  explicit Reader(std::string_view b) : b_(b) {}
  template <typename T>
  T get() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, b_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::string_view take(std::size_t n) {
    need(n);
    auto s = b_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == b_.size(); }

 private:
  void need(std::size_t n) const {
    if (b_.size() - pos_ < n) throw FormatError("MLFW: truncated file");
  }
  std::string_view b_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string encode_mlfw(const NamedTensors& tensors) {
  std::string out(kMagic);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& [name, t] : tensors) {
    if (name.size() > 0xFFFF) throw InvalidArgument("MLFW: tensor name too long");
    if (t.rank() > 0xFF) throw InvalidArgument("MLFW: tensor rank too large");
    if (t.size() != nn::shape_size(t.shape)) throw InvalidArgument("MLFW: tensor data does not match its shape");
    put<std::uint16_t>(out, static_cast<std::uint16_t>(name.size()));
    out += name;
    put<std::uint8_t>(out, static_cast<std::uint8_t>(t.rank()));
    for (std::size_t d : t.shape) {
      if (d > 0xFFFFFFFFu) throw InvalidArgument("MLFW: dimension too large");
      put<std::uint32_t>(out, static_cast<std::uint32_t>(d));
    }
    for (double v : t.data) put<float>(out, static_cast<float>(v));
  }
  return out;
}

NamedTensors decode_mlfw(std::string_view bytes) {
  if (bytes.substr(0, kMagic.size()) != kMagic) throw FormatError("MLFW: bad magic");
  Reader r(bytes.substr(kMagic.size()));
  const auto count = r.get<std::uint32_t>();
  NamedTensors out;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto len = r.get<std::uint16_t>();
    std::string name(r.take(len));
    const auto rank = r.get<std::uint8_t>();
    std::vector<std::size_t> shape(rank);
    for (auto& d : shape) d = r.get<std::uint32_t>();
    Tensor t(shape);
    for (double& v : t.data) {
      v = r.get<float>();
      if (!std::isfinite(v)) throw FormatError("MLFW: non-finite value in '" + name + "'");
    }
    out.emplace_back(std::move(name), std::move(t));
  }
  if (!r.done()) throw FormatError("MLFW: trailing bytes");
  return out;
}

void write_mlfw(const std::filesystem::path& path, const NamedTensors& tensors) { write_file_atomic(path, encode_mlfw(tensors)); }

NamedTensors read_mlfw(const std::filesystem::path& path) { return decode_mlfw(read_file(path)); }

void PrepareConfig::validate() const {
  if (n_channels == 0) throw InvalidArgument("PrepareConfig: n_channels must be > 0");
  if (!(w_step >= 0.0)) throw InvalidArgument("PrepareConfig: w_step must be >= 0");
  if (!(window > 0.0)) throw InvalidArgument("PrepareConfig: window must be > 0");
  if (out_h < 2 || out_w < 2) throw InvalidArgument("PrepareConfig: output must be at least 2x2");
}

nlohmann::json to_json(const PrepareConfig& c) {
  return {{"n_channels", c.n_channels}, {"w_step_s", c.w_step}, {"window_s", c.window}, {"out_hw", {c.out_h, c.out_w}}};
}

PrepareConfig prepare_config_from_json(const nlohmann::json& j) {
  require_known_keys(j, {"n_channels", "w_step_s", "window_s", "out_hw"}, "prepare");
  PrepareConfig c;
  try {
    c.n_channels = j.value("n_channels", c.n_channels);
    c.w_step = j.value("w_step_s", c.w_step);
    c.window = j.value("window_s", c.window);
    if (j.contains("out_hw")) {
      const auto hw = j.at("out_hw").get<std::vector<std::size_t>>();
      if (hw.size() != 2) throw FormatError("prepare.out_hw: expected [h, w]");
      c.out_h = hw[0];
      c.out_w = hw[1];
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("prepare: ") + e.what());
  }
  try {
    c.validate();
  } catch (const InvalidArgument& e) {
    throw FormatError(e.what());
  }
  return c;
}

PreparedInput prepare_input(const BScan& processed, const gating::GateCurve& gate, const PrepareConfig& config) {
  config.validate();
  if (gate.t_gate.size() != processed.n_traces()) throw InvalidArgument("prepare_input: gate length differs from trace count");
  const TimeAxis& axis = processed.axis;
  const auto rows = static_cast<std::size_t>(std::lround(config.window / axis.dt));
  if (rows < 2) throw InvalidArgument("prepare_input: window shorter than two samples");

  PreparedInput out;
  out.input = Tensor({config.n_channels, config.out_h, config.out_w});
  for (double t : gate.t_gate)
    if (t + static_cast<double>(rows) > static_cast<double>(processed.n_samples())) out.padded = true;

  const std::size_t plane = config.out_h * config.out_w;
  for (std::size_t c = 0; c < config.n_channels; ++c) {
    const gating::GateCurve g = gating::offset_gate(gate, static_cast<double>(c) * config.w_step, axis);
    const BScan gated = gating::apply_zero_gate(processed, g);
    Grid2D crop(rows, processed.n_traces());
    for (std::size_t n = 0; n < processed.n_traces(); ++n) {
      const auto straight = shift_trace(gated.trace(n), -gate.t_gate[n] * axis.dt, axis);
      for (std::size_t s = 0; s < rows && s < straight.size(); ++s) crop(s, n) = straight[s];
    }
    const Grid2D img = resize_bilinear(crop, config.out_h, config.out_w);
    std::copy(img.values.begin(), img.values.end(), out.input.data.begin() + static_cast<std::ptrdiff_t>(c * plane));
  }
  double peak = 0.0;
  for (double v : out.input.data) peak = std::max(peak, std::abs(v));
  if (peak > 0.0)
    for (double& v : out.input.data) v /= peak;
  return out;
}

PreparedSample prepare_scan(const BScan& raw, std::span<const double> reference, const FrequencyGrid& grid, int label,
                            std::string trunk_id, const filtering::PipelineConfig& pipeline, const PrepareConfig& prepare) {
  const auto result = filtering::process(raw, reference, grid, pipeline);
  gating::GateCurve gate;
  if (result.report.gate) {
    gate = *result.report.gate;
  } else {
    gate.t_gate.assign(raw.n_traces(), 0.0);
  }
  PreparedSample out;
  auto prepared = prepare_input(result.processed, gate, prepare);
  out.sample = {std::move(prepared.input), label, std::move(trunk_id)};
  out.padded = prepared.padded;
  out.gate_fallback = result.report.gate_fallback || !result.report.gate;
  return out;
}

}  // namespace treeradar::mlff
