#include <algorithm>
#include <cmath>
#include <string>

#include "specsplit/error.hpp"
#include "specsplit/hypercube.hpp"

namespace specsplit {
namespace {

constexpr double kKeysA = -0.5;

struct Taps {
  std::vector<std::size_t> index;  // clamped source index per tap
  std::vector<double> weight;
};

// Interpolation taps for each output position along one axis. Pixel centres
// are aligned: source coordinate u = (i + 0.5) / scale - 0.5.
std::vector<Taps> axis_taps(std::size_t in, std::size_t out) {
  const double scale = static_cast<double>(out) / static_cast<double>(in);
  const double stretch = scale < 1.0 ? scale : 1.0;
  const double support = 2.0 / stretch;
  std::vector<Taps> taps(out);
  for (std::size_t i = 0; i < out; ++i) {
    const double u = (static_cast<double>(i) + 0.5) / scale - 0.5;
    const auto first = static_cast<long>(std::floor(u - support));
    const auto last = static_cast<long>(std::ceil(u + support));
    double total = 0.0;
    for (long j = first; j <= last; ++j) {
      const double w = cubic_kernel((u - static_cast<double>(j)) * stretch);
      if (w == 0.0) continue;
      const long clamped = std::clamp(j, 0L, static_cast<long>(in) - 1);
      taps[i].index.push_back(static_cast<std::size_t>(clamped));
      taps[i].weight.push_back(w);
      total += w;
    }
    for (auto& w : taps[i].weight) w /= total;
  }
  return taps;
}

}  // namespace

double cubic_kernel(double x) {
  const double ax = std::abs(x);
  if (ax <= 1.0) return ((kKeysA + 2.0) * ax - (kKeysA + 3.0)) * ax * ax + 1.0;
  if (ax < 2.0) return ((kKeysA * ax - 5.0 * kKeysA) * ax + 8.0 * kKeysA) * ax - 4.0 * kKeysA;
  return 0.0;
}

HyperCube resize_bicubic(const HyperCube& cube, std::size_t out_height, std::size_t out_width) {
  if (out_height == 0 || out_width == 0) throw ShapeError("resize target must be non-empty");
  const auto row_taps = axis_taps(cube.height(), out_height);
  const auto col_taps = axis_taps(cube.width(), out_width);

  HyperCube out(out_height, out_width, cube.bands());
  std::vector<double> tmp(out_height * cube.width());
  for (std::size_t b = 0; b < cube.bands(); ++b) {
    const auto src = cube.band(b);
    // vertical pass
    for (std::size_t r = 0; r < out_height; ++r) {
      const auto& t = row_taps[r];
      for (std::size_t c = 0; c < cube.width(); ++c) {
        double acc = 0.0;
        for (std::size_t k = 0; k < t.index.size(); ++k) {
          acc += t.weight[k] * src[t.index[k] * cube.width() + c];
        }
        tmp[r * cube.width() + c] = acc;
      }
    }
    // horizontal pass
    auto dst = out.band(b);
    for (std::size_t r = 0; r < out_height; ++r) {
      for (std::size_t c = 0; c < out_width; ++c) {
        const auto& t = col_taps[c];
        double acc = 0.0;
        for (std::size_t k = 0; k < t.index.size(); ++k) {
          acc += t.weight[k] * tmp[r * cube.width() + t.index[k]];
        }
        dst[r * out_width + c] = std::clamp(acc, 0.0, 1.0);
      }
    }
  }
  out.set_wavelengths_nm(cube.wavelengths_nm());
  return out;
}

HyperCube bicubic_resample(const HyperCube& cube, int factor, ResampleDirection direction) {
  if (factor < 1) throw ArgumentError("resample factor must be positive");
  if (direction == ResampleDirection::Up) {
    const auto f = static_cast<std::size_t>(factor);
    return resize_bicubic(cube, cube.height() * f, cube.width() * f);
  }
  if (factor != 2 && factor != 4 && factor != 8) {
    throw ArgumentError("downsampling factor must be 2, 4 or 8, got " + std::to_string(factor));
  }
  const auto f = static_cast<std::size_t>(factor);
  if (cube.height() % f != 0 || cube.width() % f != 0) {
    throw ShapeError("cube " + std::to_string(cube.height()) + "x" + std::to_string(cube.width()) +
                     " is not divisible by " + std::to_string(factor));
  }
  return resize_bicubic(cube, cube.height() / f, cube.width() / f);
}

}  // namespace specsplit
