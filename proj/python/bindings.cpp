#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <nlohmann/json.hpp>

#include "cfin/archive.hpp"
#include "cfin/gradcheck.hpp"
#include "cfin/image.hpp"
#include "cfin/metrics.hpp"
#include "cfin/model.hpp"

namespace py = pybind11;
using namespace cfin;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Tensor from_numpy(const Array& a) {
  if (a.ndim() != 4) throw ShapeError("expected a 4-d array (batch, channels, height, width)");
  const Shape s{static_cast<std::size_t>(a.shape(0)), static_cast<std::size_t>(a.shape(1)),
                static_cast<std::size_t>(a.shape(2)), static_cast<std::size_t>(a.shape(3))};
  return Tensor(s, std::vector<double>(a.data(), a.data() + a.size()));
}

Array to_numpy(const Tensor& t) {
  const Shape& s = t.shape();
  Array out({s[0], s[1], s[2], s[3]});
  std::copy(t.data().begin(), t.data().end(), out.mutable_data());
  return out;
}

}  // namespace

PYBIND11_MODULE(_cfin, m) {
  m.doc() = "CFIN super-resolution network, metrics and gradient checks";

  py::register_exception<ShapeError>(m, "ShapeError", PyExc_ValueError);
  py::register_exception<ArchiveError>(m, "ArchiveError", PyExc_RuntimeError);

  py::class_<ModelConfig>(m, "ModelConfig")
      .def(py::init<>())
      .def_static("standard", &ModelConfig::standard, py::arg("scale"))
      .def_static("toy", &ModelConfig::toy, py::arg("scale") = 2)
      .def_readwrite("scale", &ModelConfig::scale)
      .def_readwrite("base_channels", &ModelConfig::base_channels)
      .def_readwrite("ct_blocks", &ModelConfig::ct_blocks)
      .def_readwrite("loop_count", &ModelConfig::loop_count)
      .def_readwrite("transformer_channels", &ModelConfig::transformer_channels)
      .def_readwrite("heads", &ModelConfig::heads)
      .def_readwrite("k1", &ModelConfig::k1)
      .def_readwrite("k2", &ModelConfig::k2)
      .def_readwrite("groups", &ModelConfig::groups)
      .def_readwrite("tau", &ModelConfig::tau)
      .def_readwrite("mask", &ModelConfig::mask)
      .def_readwrite("kv_pass", &ModelConfig::kv_pass)
      .def_readwrite("cross_k", &ModelConfig::cross_k)
      .def_readwrite("updown_branch", &ModelConfig::updown_branch)
      .def_property(
          "mask_mode", [](const ModelConfig& c) { return std::string(to_string(c.mask_mode)); },
          [](ModelConfig& c, const std::string& s) { c.mask_mode = mask_mode_from_string(s); })
      .def("validate", &ModelConfig::validate)
      .def("to_json", [](const ModelConfig& c) { return canonical_json(c); })
      .def_static("from_json", [](const std::string& s) { return nlohmann::json::parse(s).get<ModelConfig>(); })
      .def("__eq__", [](const ModelConfig& a, const ModelConfig& b) { return a == b; })
      .def("__repr__", [](const ModelConfig& c) { return "ModelConfig(" + canonical_json(c) + ")"; });

  py::class_<Model>(m, "Model")
      .def_static("build", &Model::build, py::arg("config"), py::arg("seed") = 0)
      .def_static("load", &load, py::arg("path"))
      .def_static("from_bytes", [](const py::bytes& b) {
        const std::string s = b;
        return deserialize(std::span(reinterpret_cast<const std::uint8_t*>(s.data()), s.size()));
      })
      .def("save", [](const Model& model, const std::string& path) { save(model, path); }, py::arg("path"))
      .def("to_bytes", [](const Model& model) {
        const auto bytes = serialize(model);
        return py::bytes(reinterpret_cast<const char*>(bytes.data()), bytes.size());
      })
      .def_property_readonly("config", &Model::config)
      .def("count_params", &Model::count_params)
      .def("count_multi_adds", &Model::count_multi_adds, py::arg("out_h"), py::arg("out_w"))
      .def("parameter_names", [](const Model& model) {
        std::vector<std::string> names;
        for (const auto& item : model.params().items()) names.push_back(item.first);
        return names;
      })
      .def("infer", [](const Model& model, const Array& lr) {
        const Tensor x = from_numpy(lr);
        Tensor y;
        {
          py::gil_scoped_release release;
          y = model.infer(x);
        }
        return to_numpy(y);
      }, py::arg("lr"), "(B, 3, H, W) in [0, 1] -> (B, 3, scale*H, scale*W)");

  m.def("psnr", [](const Array& a, const Array& b, std::size_t shave) {
    return psnr(from_numpy(a), from_numpy(b), shave);
  }, py::arg("a"), py::arg("b"), py::arg("shave") = 0);
  m.def("ssim", [](const Array& a, const Array& b, std::size_t shave) {
    return ssim(from_numpy(a), from_numpy(b), shave);
  }, py::arg("a"), py::arg("b"), py::arg("shave") = 0);
  m.def("rgb_to_y", [](const Array& a) { return to_numpy(rgb_to_y(from_numpy(a))); }, py::arg("rgb"));
  m.def("bicubic_resize", [](const Array& a, double scale) { return to_numpy(bicubic_resize(from_numpy(a), scale)); },
        py::arg("image"), py::arg("scale"));

  m.def("gradcheck_suites", &gradcheck_suites);
  m.def("gradcheck", [](const std::string& suite) {
    const GradcheckResult r = run_gradcheck(suite);
    py::dict d;
    d["suite"] = r.suite;
    d["worst"] = r.worst;
    d["worst_where"] = r.worst_where;
    d["checked"] = r.checked;
    d["kinks"] = r.kinks;
    d["passed"] = r.passed;
    return d;
  }, py::arg("suite"));
}
