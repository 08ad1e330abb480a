// Python bindings. Structured values cross the boundary as JSON text and
// arrays as numpy; the treeradar package wraps both into Python objects.

#include <pybind11/complex.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "treeradar/bscan_io.hpp"
#include "treeradar/cli.hpp"
#include "treeradar/dataset.hpp"
#include "treeradar/errors.hpp"
#include "treeradar/filtering.hpp"
#include "treeradar/mlff.hpp"
#include "treeradar/scnr.hpp"
#include "treeradar/synth.hpp"
#include "treeradar/transform.hpp"

namespace py = pybind11;
using namespace treeradar;
using nlohmann::json;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Array to_numpy(const Grid2D& g) {
  Array a({g.rows, g.cols});
  std::copy(g.values.begin(), g.values.end(), a.mutable_data());
  return a;
}

Grid2D from_numpy(const Array& a) {
  if (a.ndim() != 2) throw InvalidArgument("expected a 2-D array");
  Grid2D g(static_cast<std::size_t>(a.shape(0)), static_cast<std::size_t>(a.shape(1)));
  std::copy(a.data(), a.data() + a.size(), g.values.begin());
  return g;
}

Array tensor_to_numpy(const nn::Tensor& t) {
  Array a(std::vector<py::ssize_t>(t.shape.begin(), t.shape.end()));
  std::copy(t.data.begin(), t.data.end(), a.mutable_data());
  return a;
}

nn::Tensor tensor_from_numpy(const Array& a) {
  nn::Tensor t(std::vector<std::size_t>(a.shape(), a.shape() + a.ndim()));
  std::copy(a.data(), a.data() + a.size(), t.data.begin());
  return t;
}

std::vector<double> vec(const Array& a) { return std::vector<double>(a.data(), a.data() + a.size()); }

FrequencyGrid grid_from(const std::string& text) {
  if (text.empty()) return FrequencyGrid::standoff_default();
  const json j = json::parse(text);
  return FrequencyGrid(j.at("f_lo_hz").get<double>(), j.at("f_hi_hz").get<double>(), j.at("n_points").get<std::size_t>());
}

}  // namespace

PYBIND11_MODULE(_treeradar, m) {
  m.doc() = "Stand-off radar trunk inspection core";

  auto base = py::register_exception<Error>(m, "Error");
  py::register_exception<InvalidArgument>(m, "InvalidArgument", base.ptr());
  py::register_exception<FormatError>(m, "FormatError", base.ptr());
  py::register_exception<DegenerateInput>(m, "DegenerateInput", base.ptr());
  py::register_exception<NoSurfaceClutter>(m, "NoSurfaceClutter", base.ptr());
  py::register_exception<NonHyperbolicCluster>(m, "NonHyperbolicCluster", base.ptr());
  py::register_exception<NonFiniteError>(m, "NonFiniteError", base.ptr());

  py::class_<BScan>(m, "BScan")
      .def(py::init([](const Array& data, double dt, double t0, double dx, std::string stage) {
             BScan b(TimeAxis(dt, static_cast<std::size_t>(data.shape(0)), t0), static_cast<std::size_t>(data.shape(1)), dx, std::move(stage));
             b.data = from_numpy(data);
             b.validate();
             return b;
           }),
           py::arg("data"), py::arg("dt"), py::arg("t0") = 0.0, py::arg("dx") = 0.02, py::arg("stage") = "raw")
      .def_property(
          "data", [](const BScan& b) { return to_numpy(b.data); },
          [](BScan& b, const Array& a) {
            Grid2D g = from_numpy(a);
            if (g.rows != b.data.rows || g.cols != b.data.cols) throw InvalidArgument("BScan.data: shape change");
            b.data = std::move(g);
          })
      .def_property_readonly("dt", [](const BScan& b) { return b.axis.dt; })
      .def_property_readonly("t0", [](const BScan& b) { return b.axis.t0; })
      .def_readwrite("dx", &BScan::dx)
      .def_readwrite("stage", &BScan::stage)
      .def_property(
          "extra_json", [](const BScan& b) { return b.extra.dump(); }, [](BScan& b, const std::string& s) { b.extra = json::parse(s); })
      .def_property_readonly("n_samples", &BScan::n_samples)
      .def_property_readonly("n_traces", &BScan::n_traces)
      .def("to_bytes", [](const BScan& b) { return py::bytes(encode_bscan(b)); })
      .def_static("from_bytes", [](const py::bytes& b) { return decode_bscan(std::string(b)); });

  m.def("read_bscan", [](const std::string& p) { return read_bscan(p); });
  m.def("write_bscan", [](const std::string& p, const BScan& b) { write_bscan(p, b); });

  m.def(
      "band_to_time",
      [](const std::vector<std::complex<double>>& values, const std::string& grid, int oversample) {
        return band_to_time_trace(Spectrum(grid_from(grid), values), oversample);
      },
      py::arg("values"), py::arg("grid_json") = "", py::arg("oversample") = kDefaultOversample);
  m.def(
      "time_to_band",
      [](const Array& trace, double dt, double t0, const std::string& grid) {
        const auto x = vec(trace);
        return time_to_band_trace(x, TimeAxis(dt, x.size(), t0), grid_from(grid)).values;
      },
      py::arg("trace"), py::arg("dt"), py::arg("t0") = 0.0, py::arg("grid_json") = "");

  m.def(
      "simulate",
      [](const std::string& scene, const std::string& spec) {
        const auto s = spec.empty() ? synth::AcquisitionSpec{} : synth::acquisition_from_json(json::parse(spec));
        const auto r = synth::simulate(synth::scene_from_json(json::parse(scene)), s);
        return py::make_tuple(r.raw, r.reference, synth::to_json(r.truth).dump());
      },
      py::arg("scene_json"), py::arg("spec_json") = "");
  m.def("sample_scenes", [](std::size_t n, double fraction, std::uint64_t seed) {
    std::vector<std::pair<std::string, std::string>> out;
    for (const auto& [id, scene] : synth::sample_scenes(n, fraction, seed)) out.emplace_back(id, synth::to_json(scene).dump());
    return out;
  });

  m.def(
      "process",
      [](const BScan& raw, const Array& reference, const std::string& grid, const std::string& config, const std::string& truth) {
        auto cfg = config.empty() ? filtering::PipelineConfig{} : filtering::pipeline_config_from_json(json::parse(config));
        const FrequencyGrid g = grid_from(grid);
        if (!truth.empty()) cfg.masks = filtering::truth_masks(synth::truth_from_json(json::parse(truth)), raw.axis, cfg.gate.w_for(g));
        const auto ref = vec(reference);
        const auto out = filtering::process(raw, ref, g, cfg);
        return py::make_tuple(out.processed, filtering::to_json(out.report).dump());
      },
      py::arg("raw"), py::arg("reference"), py::arg("grid_json") = "", py::arg("config_json") = "", py::arg("truth_json") = "");

  m.def("metrics", [](const std::array<std::array<std::uint64_t, 2>, 2>& counts) {
    mlff::ConfusionMatrix cm;
    cm.counts = counts;
    return mlff::to_json(mlff::metrics(cm)).dump();
  });

  py::class_<mlff::MLFFNet>(m, "MLFFNet")
      .def(py::init([](const std::string& config, std::uint64_t seed) {
             return mlff::MLFFNet(config.empty() ? mlff::NetConfig{} : mlff::net_config_from_json(json::parse(config)), seed);
           }),
           py::arg("config_json") = "", py::arg("seed") = 0)
      .def("forward", [](mlff::MLFFNet& n, const Array& x) { return tensor_to_numpy(n.forward(tensor_from_numpy(x), false)); })
      .def("predict_proba", [](mlff::MLFFNet& n, const Array& x) { return n.predict_proba(tensor_from_numpy(x)); })
      .def("config_json", [](const mlff::MLFFNet& n) { return mlff::to_json(n.config()).dump(); })
      .def("state", [](mlff::MLFFNet& n) {
        std::vector<std::pair<std::string, Array>> out;
        for (const auto& [name, t] : n.state()) out.emplace_back(name, tensor_to_numpy(t));
        return out;
      })
      .def("load_state", [](mlff::MLFFNet& n, const std::vector<std::pair<std::string, Array>>& state) {
        mlff::NamedTensors s;
        for (const auto& [name, a] : state) s.emplace_back(name, tensor_from_numpy(a));
        n.load_state(s);
      })
      .def("save", [](mlff::MLFFNet& n, const std::string& path) { mlff::write_mlfw(path, n.state()); })
      .def("load", [](mlff::MLFFNet& n, const std::string& path) { n.load_state(mlff::read_mlfw(path)); });

  m.def("run_cli", [](const std::vector<std::string>& args) {
    std::ostringstream out, err;
    int code;
    {
      py::gil_scoped_release release;
      code = cli::run(args, out, err);
    }
    return py::make_tuple(code, out.str(), err.str());
  });
}
