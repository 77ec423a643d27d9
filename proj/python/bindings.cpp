#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "tmnn/config.hpp"
#include "tmnn/data_io.hpp"
#include "tmnn/dsp.hpp"
#include "tmnn/experiment.hpp"
#include "tmnn/inspection.hpp"
#include "tmnn/metrics.hpp"
#include "tmnn/model.hpp"
#include "tmnn/serialize.hpp"
#include "tmnn/synth.hpp"

namespace py = pybind11;
using namespace tmnn;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;
using DoubleArray = py::array_t<double, py::array::c_style | py::array::forcecast>;

template <typename T>
py::array_t<T> to_numpy(const Tensor<T>& t) {
  std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
  py::array_t<T> out(shape);
  std::copy(t.data().begin(), t.data().end(), out.mutable_data());
  return out;
}

template <typename T>
py::array_t<T> to_numpy(const std::vector<T>& v) {
  py::array_t<T> out(static_cast<py::ssize_t>(v.size()));
  std::copy(v.begin(), v.end(), out.mutable_data());
  return out;
}

AudioClip to_clip(const FloatArray& samples, double rate) {
  if (samples.ndim() != 1) throw py::value_error("samples must be one-dimensional");
  AudioClip clip;
  clip.samples.assign(samples.data(), samples.data() + samples.size());
  clip.sample_rate = rate;
  return clip;
}

Spectrogram to_spectrogram(const FloatArray& power) {
  if (power.ndim() != 2 || power.shape(1) != static_cast<py::ssize_t>(kBins)) {
    throw py::value_error("power must have shape [frames, 257]");
  }
  Spectrogram s;
  s.power = Tensor<float>(Shape{static_cast<std::size_t>(power.shape(0)), kBins},
                          std::vector<float>(power.data(), power.data() + power.size()));
  return s;
}

std::vector<std::uint8_t> to_labels(const py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>& a) {
  return {a.data(), a.data() + a.size()};
}

ModelConfig config_from_kwargs(const py::kwargs& kw) {
  RunConfig rc;
  for (const auto& [k, v] : kw) rc.set(py::str(k), py::str(v));
  rc.model.validate();
  return rc.model;
}

// Thin wrapper so Python sees one model type with inference helpers.
struct PyModel {
  TmnnModel<float> model;

  py::array_t<float> features(const FloatArray& samples) const {
    Graph<float> g(false);
    return to_numpy(model.frontend.extract(g, stft_power(to_clip(samples, kSampleRate))).values);
  }

  py::array_t<float> logits(const std::vector<FloatArray>& clips, bool training) {
    std::vector<Spectrogram> batch;
    for (const auto& c : clips) batch.push_back(stft_power(to_clip(c, kSampleRate)));
    Graph<float> g(false);
    return to_numpy(model.forward(g, batch, training));
  }

  std::vector<py::array_t<float>> band_edges() const {
    Graph<float> g(false);
    if (model.frontend.modulation.n_filters() == 0) return {};
    return {to_numpy(model.frontend.modulation.low_hz(g)), to_numpy(model.frontend.modulation.high_hz(g))};
  }
};

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Learnable harmonic filterbank and temporal modulation front end";

  py::register_exception<DataError>(m, "DataError", PyExc_ValueError);
  py::register_exception<AudioError>(m, "AudioError", PyExc_ValueError);
  py::register_exception<FormatError>(m, "FormatError", PyExc_ValueError);
  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<NumericalError>(m, "NumericalError", PyExc_ArithmeticError);

  m.attr("SAMPLE_RATE") = kSampleRate;
  m.attr("FRAME_RATE") = kFrameRate;
  m.attr("N_BINS") = kBins;
  m.def("version", [] { return std::string(version_string()); });

  m.def(
      "load_wav",
      [](const std::filesystem::path& path) {
        const auto clip = decode_wav(path);
        return py::make_tuple(to_numpy(clip.samples), clip.sample_rate);
      },
      py::arg("path"), "Mono float32 samples and the sample rate of a PCM16 or float32 WAV.");
  m.def(
      "write_wav",
      [](const std::filesystem::path& path, const FloatArray& samples, double rate) {
        write_wav(path, to_clip(samples, rate));
      },
      py::arg("path"), py::arg("samples"), py::arg("rate") = kSampleRate);
  m.def(
      "resample", [](const FloatArray& samples, double rate, double target) {
        return to_numpy(resample(to_clip(samples, rate), target).samples);
      },
      py::arg("samples"), py::arg("rate"), py::arg("target") = kSampleRate);
  m.def(
      "stft_power", [](const FloatArray& samples) { return to_numpy(stft_power(to_clip(samples, kSampleRate)).power); },
      py::arg("samples"), "[frames, 257] power spectrogram of 16 kHz audio.");
  m.def("hann_window", [](std::size_t n) { return to_numpy(hann_window(n)); }, py::arg("n"));
  m.def("hamming_window", [](std::size_t n) { return to_numpy(hamming_window(n)); }, py::arg("n"));
  m.def(
      "sinc_kernel",
      [](double low, double high, double frame_rate, std::size_t length) {
        return to_numpy(sinc_kernel(low, high, frame_rate, length));
      },
      py::arg("low_hz"), py::arg("high_hz"), py::arg("frame_rate") = kFrameRate,
      py::arg("length") = kModKernelLength);
  m.def(
      "modulate",
      [](const DoubleArray& energies, const DoubleArray& kernels) {
        if (energies.ndim() != 3 || kernels.ndim() != 2) throw py::value_error("expected [H, F, T] and [M, L]");
        MelSpec<double> mel;
        mel.energies = Tensor<double>(Shape{std::size_t(energies.shape(0)), std::size_t(energies.shape(1)),
                                            std::size_t(energies.shape(2))},
                                      std::vector<double>(energies.data(), energies.data() + energies.size()));
        const Tensor<double> k(Shape{std::size_t(kernels.shape(0)), std::size_t(kernels.shape(1))},
                               std::vector<double>(kernels.data(), kernels.data() + kernels.size()));
        Graph<double> g(false);
        return to_numpy(modulate_with_kernels(g, mel, k).values);
      },
      py::arg("energies"), py::arg("kernels"),
      "[H(M+1), F, T] planes: each harmonic's energies followed by its M filtered copies.");
  m.def(
      "modulation_spectrum",
      [](const DoubleArray& energies) {
        if (energies.ndim() != 3) throw py::value_error("expected [H, F, T]");
        MelSpec<double> mel;
        mel.energies = Tensor<double>(Shape{std::size_t(energies.shape(0)), std::size_t(energies.shape(1)),
                                            std::size_t(energies.shape(2))},
                                      std::vector<double>(energies.data(), energies.data() + energies.size()));
        const auto s = modulation_spectrum(mel);
        return py::make_tuple(to_numpy(s.freq_hz), to_numpy(s.magnitudes));
      },
      py::arg("energies"));

  m.def(
      "roc_auc",
      [](const DoubleArray& scores, const py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>& labels) {
        return roc_auc(std::span<const double>(scores.data(), scores.size()), to_labels(labels));
      },
      py::arg("scores"), py::arg("labels"));
  m.def(
      "pr_auc",
      [](const DoubleArray& scores, const py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>& labels) {
        return pr_auc(std::span<const double>(scores.data(), scores.size()), to_labels(labels));
      },
      py::arg("scores"), py::arg("labels"));

  m.def(
      "read_tensor_file",
      [](const std::filesystem::path& path) {
        const auto file = TensorFile::load(path);
        py::dict tensors;
        for (const auto& name : file.names()) tensors[py::str(name)] = to_numpy(file.get<double>(name));
        return py::make_tuple(tensors, file.meta().dump());
      },
      py::arg("path"), "(tensors, meta JSON text) of a feature or checkpoint file.");

  m.def(
      "write_synthetic",
      [](const std::filesystem::path& dir, std::uint64_t seed, double depth) {
        SyntheticConfig sc;
        sc.seed = seed;
        sc.depth = depth;
        return write_synthetic(dir, sc);
      },
      py::arg("dir"), py::arg("seed") = 0, py::arg("depth") = SyntheticConfig{}.depth,
      "Writes the amplitude-modulation dataset as WAVs plus manifest.csv.");

  py::class_<PyModel>(m, "Model")
      .def(py::init([](std::uint64_t seed, const py::kwargs& kw) { return PyModel{TmnnModel<float>(config_from_kwargs(kw), seed)}; }),
           py::arg("seed") = 0, "Keyword arguments use config keys: front_end, H, M, F, base_width, n_classes.")
      .def_static(
          "load", [](const std::filesystem::path& path) { return PyModel{TmnnModel<float>::from_file(TensorFile::load(path))}; },
          py::arg("path"))
      .def("save", [](const PyModel& self, const std::filesystem::path& path) { self.model.to_file().save(path); },
           py::arg("path"))
      .def_property_readonly("config", [](const PyModel& self) { return self.model.config().to_json().dump(); })
      .def_property_readonly("channels", [](const PyModel& self) { return self.model.config().channels(); })
      .def_property_readonly("parameter_count", [](const PyModel& self) { return self.model.backend.parameter_count(); })
      .def("features", &PyModel::features, py::arg("samples"), "[C, F, T] front-end output for one clip.")
      .def("logits", &PyModel::logits, py::arg("clips"), py::arg("training") = false,
           "[B, K] logits for equally long clips.")
      .def("centers_hz",
           [](const PyModel& self) {
             Graph<float> g(false);
             return to_numpy(self.model.frontend.filterbank.centers_hz(g));
           })
      .def("bandwidths_hz",
           [](const PyModel& self) {
             Graph<float> g(false);
             return to_numpy(self.model.frontend.filterbank.bandwidths_hz(g));
           })
      .def("band_edges", &PyModel::band_edges, "[low_hz, high_hz] of the modulation filters.");
}
