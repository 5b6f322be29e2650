#include <pybind11/numpy.h>
#include <pybind11/operators.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <string>
#include <vector>

#include "timae/checkpoint.hpp"
#include "timae/data.hpp"
#include "timae/error.hpp"
#include "timae/evaluation.hpp"
#include "timae/model.hpp"

namespace py = pybind11;
using namespace timae;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

std::vector<double> to_vector(const Array& a) { return {a.data(), a.data() + a.size()}; }

Array to_array(const std::vector<double>& v, std::vector<py::ssize_t> shape) {
  Array out(shape);
  std::copy(v.begin(), v.end(), out.mutable_data());
  return out;
}

void require_ndim(const Array& a, py::ssize_t ndim, const char* name) {
  if (a.ndim() != ndim)
    throw DimensionError(std::string(name) + " must have " + std::to_string(ndim) + " dimensions");
}

// Wraps the float model; Python code only runs inference and checkpoint IO.
struct PyModel {
  TiMaeModel<float> model;

  Array reconstruct(const Array& x, const std::vector<std::size_t>& masked) const {
    require_ndim(x, 3, "x");
    const auto& c = model.config();
    const auto B = static_cast<std::size_t>(x.shape(0));
    const auto L = static_cast<std::size_t>(x.shape(1));
    const auto m = static_cast<std::size_t>(x.shape(2));
    if (L != c.window_len || m != c.in_channels) throw DimensionError("x must be [B, window_len, in_channels]");
    MaskSpec mask;
    mask.length = L;
    std::vector<bool> hidden(L, false);
    for (std::size_t i : masked) {
      if (i >= L) throw IndexError("masked position out of range");
      hidden[i] = true;
    }
    for (std::size_t i = 0; i < L; ++i) (hidden[i] ? mask.masked : mask.visible).push_back(i);
    if (mask.visible.empty()) throw ParameterError("at least one position must stay visible");
    mask.ratio = static_cast<double>(mask.masked.size()) / static_cast<double>(L);
    const auto values = to_vector(x);
    NoGradGuard guard;
    const auto y = model.reconstruct(batch_tensor<float>(values, B, L, m), std::span<const MaskSpec>(&mask, 1));
    std::vector<double> out(y.values().begin(), y.values().end());
    return to_array(out, {x.shape(0), x.shape(1), static_cast<py::ssize_t>(c.out_channels)});
  }

  Array forecast(const Array& histories, std::size_t k) const {
    require_ndim(histories, 3, "histories");
    const auto N = static_cast<std::size_t>(histories.shape(0));
    const auto h = static_cast<std::size_t>(histories.shape(1));
    const auto out = direct_forecast(model, to_vector(histories), N, h, k);
    return to_array(out, {histories.shape(0), static_cast<py::ssize_t>(k),
                          static_cast<py::ssize_t>(model.config().out_channels)});
  }

  Array representations(const Array& windows, const std::string& pooling) const {
    require_ndim(windows, 3, "windows");
    const auto N = static_cast<std::size_t>(windows.shape(0));
    const auto p = parse_pooling(pooling);
    const auto out = extract_representations(model, to_vector(windows), N, p);
    return to_array(out, {windows.shape(0), static_cast<py::ssize_t>(out.size() / std::max<std::size_t>(N, 1))});
  }
};

}  // namespace

PYBIND11_MODULE(_timae, m) {
  m.doc() = "Masked time-series autoencoder core";

  auto base = py::register_exception<Error>(m, "Error");
  py::register_exception<DimensionError>(m, "DimensionError", base);
  py::register_exception<IndexError>(m, "IndexError", base);
  py::register_exception<NumericError>(m, "NumericError", base);
  py::register_exception<ParameterError>(m, "ParameterError", base);
  py::register_exception<ContractError>(m, "ContractError", base);
  py::register_exception<ConfigError>(m, "ConfigError", base);
  py::register_exception<ParseError>(m, "ParseError", base);
  py::register_exception<FormatError>(m, "FormatError", base);
  py::register_exception<VersionError>(m, "VersionError", base);
  py::register_exception<IoError>(m, "IoError", base);
  py::register_exception<InvariantError>(m, "InvariantError", base);
  py::register_exception<SolverError>(m, "SolverError", base);

  py::class_<ModelConfig>(m, "ModelConfig")
      .def(py::init<>())
      .def("set", [](ModelConfig& c, const std::string& key, const std::string& value) {
        if (!c.set(key, value)) throw ConfigError("unknown model key: " + key);
      })
      .def("validate", &ModelConfig::validate)
      .def("to_json", &ModelConfig::to_json)
      .def_static("from_json", &ModelConfig::from_json)
      .def_readwrite("in_channels", &ModelConfig::in_channels)
      .def_readwrite("out_channels", &ModelConfig::out_channels)
      .def_readwrite("window_len", &ModelConfig::window_len)
      .def_readwrite("d_model", &ModelConfig::d_model)
      .def_readwrite("d_decoder", &ModelConfig::d_decoder)
      .def_readwrite("n_heads", &ModelConfig::n_heads)
      .def_readwrite("enc_layers", &ModelConfig::enc_layers)
      .def_readwrite("dec_layers", &ModelConfig::dec_layers)
      .def_readwrite("mask_ratio", &ModelConfig::mask_ratio)
      .def(py::self == py::self);

  py::class_<PyModel>(m, "Model")
      .def(py::init([](const ModelConfig& c, std::uint64_t seed) { return PyModel{TiMaeModel<float>(c, seed)}; }),
           py::arg("config"), py::arg("seed") = 0)
      .def_static("load", [](const std::string& path) { return PyModel{load_model(path)}; })
      .def("save", [](const PyModel& p, const std::string& path) { save_checkpoint(p.model, path); })
      .def_property_readonly("config", [](const PyModel& p) { return p.model.config(); })
      .def_property_readonly("parameter_count", [](const PyModel& p) { return p.model.parameter_count(); })
      .def("parameters_crc32", [](const PyModel& p) { return parameters_crc32(p.model.parameters()); })
      .def("reconstruct", &PyModel::reconstruct, py::arg("x"), py::arg("masked"),
           "Reconstructs [B, L, m] windows with the listed positions masked.")
      .def("forecast", &PyModel::forecast, py::arg("histories"), py::arg("horizon"),
           "Direct forecast from [N, h, m] histories: [N, horizon, n].")
      .def("representations", &PyModel::representations, py::arg("windows"), py::arg("pooling") = "mean");

  m.def(
      "synthetic_series",
      [](double alpha, double beta, double sigma, std::size_t length, std::uint64_t seed) {
        SyntheticSpec s;
        s.alpha = alpha;
        s.beta = beta;
        s.noise_sigma = sigma;
        s.length = length;
        const auto ts = generate_synthetic(s, seed);
        return to_array(ts.values, {static_cast<py::ssize_t>(ts.length())});
      },
      py::arg("alpha") = 300.0, py::arg("beta") = 3.0, py::arg("sigma") = 0.1, py::arg("length") = 2000,
      py::arg("seed") = 0);

  m.def(
      "make_mask",
      [](std::size_t length, const std::string& strategy, double ratio, std::uint64_t seed) {
        Rng rng(seed);
        const auto mask = make_mask(length, parse_mask_strategy(strategy), ratio, rng);
        return py::make_tuple(mask.visible, mask.masked);
      },
      py::arg("length"), py::arg("strategy") = "random", py::arg("ratio") = 0.75, py::arg("seed") = 0,
      "Returns (visible, masked) position lists.");

  m.def("mse", [](const Array& p, const Array& t) { return mse(to_vector(p), to_vector(t)); });
  m.def("mae", [](const Array& p, const Array& t) { return mae(to_vector(p), to_vector(t)); });

  m.def(
      "last_value_forecast",
      [](const Array& histories, std::size_t k) {
        require_ndim(histories, 3, "histories");
        const auto N = static_cast<std::size_t>(histories.shape(0));
        const auto h = static_cast<std::size_t>(histories.shape(1));
        const auto c = static_cast<std::size_t>(histories.shape(2));
        return to_array(last_value_forecast(to_vector(histories), N, h, c, k, c),
                        {histories.shape(0), static_cast<py::ssize_t>(k), histories.shape(2)});
      },
      py::arg("histories"), py::arg("horizon"));

  auto weights_of = [](const RidgeProbe& r) {
    return py::make_tuple(to_array(r.weights, {static_cast<py::ssize_t>(r.in_dim), static_cast<py::ssize_t>(r.out_dim)}),
                          r.alpha);
  };
  m.def(
      "ridge_solve",
      [weights_of](const Array& x, const Array& y, double alpha) {
        require_ndim(x, 2, "x");
        require_ndim(y, 2, "y");
        const auto r = ridge_solve(to_vector(x), x.shape(0), x.shape(1), to_vector(y), y.shape(1), alpha);
        return weights_of(r);
      },
      py::arg("x"), py::arg("y"), py::arg("alpha"), "Returns (weights [d, out], alpha).");
  m.def(
      "ridge_fit",
      [weights_of](const Array& xt, const Array& yt, const Array& xv, const Array& yv) {
        require_ndim(xt, 2, "x_train");
        require_ndim(yt, 2, "y_train");
        require_ndim(xv, 2, "x_val");
        require_ndim(yv, 2, "y_val");
        const auto r = ridge_fit(to_vector(xt), xt.shape(0), to_vector(yt), to_vector(xv), xv.shape(0),
                                 to_vector(yv), xt.shape(1), yt.shape(1));
        return weights_of(r);
      },
      py::arg("x_train"), py::arg("y_train"), py::arg("x_val"), py::arg("y_val"),
      "Grid-searched ridge: (weights [d, out], chosen alpha).");

  m.def("crc32", [](const py::bytes& b) {
    const std::string s = b;
    return crc32(std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(s.data()), s.size()));
  });
}
