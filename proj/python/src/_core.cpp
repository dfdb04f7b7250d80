#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "specsplit/archsearch.hpp"
#include "specsplit/augment.hpp"
#include "specsplit/cli.hpp"
#include "specsplit/error.hpp"
#include "specsplit/hypercube.hpp"
#include "specsplit/metrics.hpp"
#include "specsplit/ssanet.hpp"

namespace py = pybind11;
using namespace specsplit;

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

namespace {

// numpy (H, W, B) <-> band-major cube
HyperCube to_cube(const Array& a) {
  if (a.ndim() != 3) throw ShapeError("expected an (H, W, B) array");
  const auto h = static_cast<std::size_t>(a.shape(0));
  const auto w = static_cast<std::size_t>(a.shape(1));
  const auto b = static_cast<std::size_t>(a.shape(2));
  auto v = a.unchecked<3>();
  HyperCube cube(h, w, b);
  for (std::size_t r = 0; r < h; ++r)
    for (std::size_t c = 0; c < w; ++c)
      for (std::size_t k = 0; k < b; ++k) cube(k, r, c) = v(r, c, k);
  return cube;
}

Array to_array(const HyperCube& cube) {
  Array out({cube.height(), cube.width(), cube.bands()});
  auto v = out.mutable_unchecked<3>();
  for (std::size_t r = 0; r < cube.height(); ++r)
    for (std::size_t c = 0; c < cube.width(); ++c)
      for (std::size_t k = 0; k < cube.bands(); ++k) v(r, c, k) = cube(k, r, c);
  return out;
}

ResampleDirection parse_direction(const std::string& d) {
  if (d == "down") return ResampleDirection::Down;
  if (d == "up") return ResampleDirection::Up;
  throw ArgumentError("direction must be 'up' or 'down'");
}

ssanet::SSANetConfig parse_config(const std::string& j) {
  return ssanet::config_from_json(nlohmann::json::parse(j));
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Hyperspectral face super-resolution core";

  auto base = py::register_exception<Error>(m, "SpecsplitError");
  py::register_exception<FormatError>(m, "FormatError", base.ptr());
  py::register_exception<TruncationError>(m, "TruncationError", base.ptr());
  py::register_exception<DataError>(m, "DataError", base.ptr());
  py::register_exception<ShapeError>(m, "ShapeError", base.ptr());
  py::register_exception<ArgumentError>(m, "ArgumentError", base.ptr());
  py::register_exception<UndefinedMetricError>(m, "UndefinedMetricError", base.ptr());
  py::register_exception<IoError>(m, "IoError", base.ptr());
  py::register_exception<DivergenceError>(m, "DivergenceError", base.ptr());

  // cubes
  m.def("read_cube", [](const std::string& path) { return to_array(read_cube(path)); }, py::arg("path"));
  m.def(
      "write_cube",
      [](const Array& a, const std::string& path, std::optional<std::vector<double>> wavelengths) {
        auto cube = to_cube(a);
        cube.set_wavelengths_nm(std::move(wavelengths));
        write_cube(cube, path);
      },
      py::arg("cube"), py::arg("path"), py::arg("wavelengths_nm") = py::none());
  m.def(
      "bicubic_resample",
      [](const Array& a, int factor, const std::string& direction) {
        return to_array(bicubic_resample(to_cube(a), factor, parse_direction(direction)));
      },
      py::arg("cube"), py::arg("factor"), py::arg("direction") = "down");
  m.def("hflip", [](const Array& a) { return to_array(hflip(to_cube(a))); }, py::arg("cube"));

  // metrics
  m.def(
      "evaluate_all",
      [](const Array& x, const Array& ref, int scale) {
        return metrics::to_json(metrics::evaluate_all(to_cube(x), to_cube(ref), scale)).dump();
      },
      py::arg("x"), py::arg("ref"), py::arg("scale"), "Six quality indices as a JSON string.");
  m.def("psnr", [](const Array& x, const Array& ref) { return metrics::psnr(to_cube(x), to_cube(ref)); });
  m.def("sam", [](const Array& x, const Array& ref) { return metrics::sam(to_cube(x), to_cube(ref)); });
  m.def("ssim", [](const Array& x, const Array& ref) { return metrics::ssim(to_cube(x), to_cube(ref)); });

  // augmentation
  m.def(
      "synthesize_sample",
      [](std::size_t index, const std::vector<Array>& data, double sigma, std::size_t patch, std::size_t overlap) {
        std::vector<HyperCube> cubes;
        for (const auto& a : data) cubes.push_back(to_cube(a));
        augment::SynthesisConfig cfg;
        cfg.sigma = sigma;
        cfg.patch_size = patch;
        cfg.patch_overlap = overlap;
        HyperCube out;
        {
          py::gil_scoped_release release;
          out = augment::synthesize_sample(index, cubes, cfg);
        }
        return to_array(out);
      },
      py::arg("index"), py::arg("dataset"), py::arg("sigma") = 1.0, py::arg("patch_size") = 8,
      py::arg("patch_overlap") = 4);

  // network and costs
  m.def("default_config", [](std::size_t bands, int scale) {
    return ssanet::config_to_json(ssanet::default_config(bands, scale)).dump();
  });
  m.def("miniature_config", [](int scale) { return ssanet::config_to_json(ssanet::miniature_config(scale)).dump(); });
  m.def("enumerate_placements", &archsearch::enumerate_placements, py::arg("scale"));
  m.def("count_params", [](const std::string& cfg) { return archsearch::count_params(parse_config(cfg)); });
  m.def(
      "count_flops",
      [](const std::string& cfg, std::size_t h, std::size_t w) { return archsearch::count_flops(parse_config(cfg), h, w); },
      py::arg("config"), py::arg("lr_height"), py::arg("lr_width"));
  m.def(
      "search_csv",
      [](int scale, const std::string& cfg, std::size_t h, std::size_t w) {
        return archsearch::to_csv(archsearch::search_report(scale, parse_config(cfg), h, w));
      },
      py::arg("scale"), py::arg("config"), py::arg("lr_height"), py::arg("lr_width"));
  m.def(
      "forward",
      [](const Array& lr, const std::string& checkpoint) {
        const auto [cfg, params] = ssanet::load_checkpoint(checkpoint);
        const auto cube = to_cube(lr);
        HyperCube out;
        {
          py::gil_scoped_release release;
          out = ssanet::forward(cube, cfg, params);
        }
        return to_array(out);
      },
      py::arg("lr"), py::arg("checkpoint"), "Super-resolve an (H, W, B) array with an SSAP checkpoint.");

  m.def(
      "run_cli",
      [](const std::vector<std::string>& args) {
        std::ostringstream out, err;
        int code;
        {
          py::gil_scoped_release release;
          code = cli::dispatch(args, out, err);
        }
        return py::make_tuple(code, out.str(), err.str());
      },
      py::arg("args"), "Run a subcommand; returns (exit_code, stdout, stderr).");

  m.attr("__version__") = SPECSPLIT_VERSION;
}
