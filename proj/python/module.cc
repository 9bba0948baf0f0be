// Copyright 2026 The DPCCN Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <algorithm>
#include <complex>

#include "dpccn/checkpoint.h"
#include "dpccn/corpus.h"
#include "dpccn/error.h"
#include "dpccn/metrics.h"
#include "dpccn/model.h"
#include "dpccn/objective.h"
#include "dpccn/speaker.h"
#include "dpccn/wav.h"

namespace py = pybind11;
using namespace dpccn;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

std::vector<double> to_vector(const Array& a) {
  if (a.ndim() != 1) throw InvalidArgument("expected a 1-D array");
  return {a.data(), a.data() + a.size()};
}

py::array_t<double> to_array(const std::vector<double>& v) {
  py::array_t<double> out(static_cast<py::ssize_t>(v.size()));
  std::copy(v.begin(), v.end(), out.mutable_data());
  return out;
}

Waveform wave(const Array& a, int rate) { return Waveform{to_vector(a), rate}; }

std::vector<Waveform> waves(const std::vector<Array>& xs, int rate) {
  std::vector<Waveform> out;
  for (const auto& x : xs) out.push_back(wave(x, rate));
  return out;
}

StftConfig stft_config(std::size_t fft, std::size_t hop) {
  StftConfig cfg{fft, hop};
  validate_stft_config(cfg);
  return cfg;
}

// Complex (frames, bins) array.
py::array_t<std::complex<double>> spec_to_array(const ComplexSpectrogram& s) {
  py::array_t<std::complex<double>> out({s.frames, s.bins});
  auto* p = out.mutable_data();
  for (std::size_t i = 0; i < s.real.size(); ++i) p[i] = {s.real[i], s.imag[i]};
  return out;
}

// Loaded checkpoint, used for inference only.
class Model {
 public:
  explicit Model(const std::string& path) : ckpt_(load_checkpoint(path)) {}
  std::string task() const { return ckpt_.state.task; }
  std::size_t num_sources() const { return ckpt_.params.config.num_sources; }
  std::size_t num_parameters() const { return ckpt_.params.count(); }
  int sample_rate() const { return 8000; }

  std::vector<py::array_t<double>> separate(const Array& mix) const {
    std::vector<py::array_t<double>> out;
    for (const auto& w : dpccn::separate(wave(mix, 8000), ckpt_.params))
      out.push_back(to_array(w.samples));
    return out;
  }

  py::array_t<double> extract(const Array& mix, const Array& enroll) const {
    return to_array(dpccn::extract(wave(mix, 8000), wave(enroll, 8000), ckpt_.params).samples);
  }

 private:
  Checkpoint ckpt_;
};

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "DPCCN separation toolkit core";

  py::register_exception<DataError>(m, "DataError", PyExc_RuntimeError);
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const InvalidArgument& e) {
      PyErr_SetString(PyExc_ValueError, e.what());
    } catch (const UndefinedReference& e) {
      PyErr_SetString(PyExc_ValueError, e.what());
    }
  });

  m.def(
      "stft",
      [](const Array& x, std::size_t fft, std::size_t hop) {
        return spec_to_array(stft(to_vector(x), stft_config(fft, hop)));
      },
      py::arg("x"), py::arg("fft_size") = 512, py::arg("hop_size") = 128,
      "Complex spectrogram of shape (frames, fft_size / 2 + 1).");
  m.def(
      "istft",
      [](py::array_t<std::complex<double>, py::array::c_style | py::array::forcecast> spec,
         std::size_t length, std::size_t fft, std::size_t hop) {
        const auto cfg = stft_config(fft, hop);
        if (spec.ndim() != 2 || static_cast<std::size_t>(spec.shape(1)) != cfg.num_bins())
          throw InvalidArgument("expected a (frames, fft_size / 2 + 1) array");
        ComplexSpectrogram s;
        s.frames = spec.shape(0);
        s.bins = spec.shape(1);
        s.original_length = length;
        for (py::ssize_t i = 0; i < spec.size(); ++i) {
          s.real.push_back(spec.data()[i].real());
          s.imag.push_back(spec.data()[i].imag());
        }
        return to_array(istft(s, cfg));
      },
      py::arg("spec"), py::arg("length"), py::arg("fft_size") = 512, py::arg("hop_size") = 128);

  m.def(
      "sisnr", [](const Array& est, const Array& ref) { return sisnr(to_vector(est), to_vector(ref)); },
      py::arg("est"), py::arg("ref"), "Scale-invariant SNR in dB.");
  m.def(
      "sisnri",
      [](const Array& est, const Array& ref, const Array& mix) {
        return sisnri(wave(est, 8000), wave(ref, 8000), wave(mix, 8000));
      },
      py::arg("est"), py::arg("ref"), py::arg("mix"));
  m.def("st_gap", &st_gap, py::arg("source_sisnr"), py::arg("target_sisnr"));
  m.def(
      "upit_loss",
      [](const std::vector<Array>& ests, const std::vector<Array>& refs) {
        const auto l = upit_loss(waves(ests, 8000), waves(refs, 8000));
        return py::make_tuple(l.value, l.permutation);
      },
      py::arg("ests"), py::arg("refs"),
      "Permutation-invariant negative SISNR; returns (loss, permutation).");

  m.def("snr_scale_factor", &snr_scale_factor, py::arg("source_energy"),
        py::arg("mixture_energy"), py::arg("snr_db"));
  m.def(
      "mixture_remix",
      [](const Array& unsup, const Array& source, double snr_db) {
        const auto r = mixture_remix(wave(unsup, 8000), wave(source, 8000), "source", "enroll",
                                     snr_db);
        py::dict d;
        d["mixture"] = to_array(r.mixture.samples);
        d["source"] = to_array(r.source.samples);
        d["scaled_mixture"] = to_array(r.scaled_mixture.samples);
        d["alpha"] = r.spec.alpha;
        d["norm_factor"] = r.norm_factor;
        return d;
      },
      py::arg("unsup"), py::arg("source"), py::arg("snr_db"));

  m.def(
      "read_wav",
      [](const std::string& path) {
        const auto w = read_wav(path);
        return py::make_tuple(to_array(w.samples), w.sample_rate);
      },
      py::arg("path"), "Returns (samples, sample_rate).");
  m.def(
      "write_wav",
      [](const std::string& path, const Array& x, int rate) { write_wav(path, wave(x, rate)); },
      py::arg("path"), py::arg("samples"), py::arg("sample_rate") = 8000);
  m.def(
      "read_manifest",
      [](const std::string& path) {
        py::list out;
        for (const auto& r : read_manifest(path)) {
          nlohmann::json j = r;
          out.append(py::module_::import("json").attr("loads")(j.dump()));
        }
        return out;
      },
      py::arg("path"), "Manifest records as dictionaries.");

  py::class_<Model>(m, "Model")
      .def(py::init<const std::string&>(), py::arg("checkpoint"))
      .def_property_readonly("task", &Model::task)
      .def_property_readonly("num_sources", &Model::num_sources)
      .def_property_readonly("num_parameters", &Model::num_parameters)
      .def_property_readonly("sample_rate", &Model::sample_rate)
      .def("separate", &Model::separate, py::arg("mix"))
      .def("extract", &Model::extract, py::arg("mix"), py::arg("enroll"));
}
