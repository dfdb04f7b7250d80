#include "specsplit/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

namespace specsplit::synthetic {
namespace {

double unit(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

}  // namespace

std::vector<HyperCube> make_dataset(std::size_t count, std::size_t height, std::size_t width,
                                    std::size_t bands, std::uint64_t seed) {
  constexpr double kTwoPi = 2.0 * std::numbers::pi;
  constexpr double kJitter = 0.03;  // capture-to-capture variation
  std::mt19937_64 rng(seed);
  const std::size_t subjects = subject_count(count);

  struct Subject {
    double phase, tilt, level, fx, fy;
  };
  std::vector<Subject> people(subjects);
  for (std::size_t s = 0; s < subjects; ++s) {
    auto& p = people[s];
    p.phase = kTwoPi * (static_cast<double>(s) + 0.3 * unit(rng)) / static_cast<double>(subjects);
    p.tilt = 0.6 + 0.8 * unit(rng);    // spectral ramp curvature
    p.level = 0.35 + 0.2 * unit(rng);  // spectral ramp offset
    p.fx = 1.0 + unit(rng) * 0.25;
    p.fy = 0.75 + unit(rng) * 0.25;
  }

  std::vector<HyperCube> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const auto& p = people[i / kCapturesPerSubject];
    const double phase = p.phase + kJitter * (unit(rng) - 0.5);
    const double tilt = p.tilt * (1.0 + 0.5 * kJitter * (unit(rng) - 0.5));
    const double level = p.level + 0.2 * kJitter * (unit(rng) - 0.5);

    HyperCube cube(height, width, bands);
    for (std::size_t b = 0; b < bands; ++b) {
      const double lambda = bands > 1 ? static_cast<double>(b) / static_cast<double>(bands - 1) : 0.0;
      const double ramp = level + 0.35 * std::pow(lambda, tilt);
      for (std::size_t r = 0; r < height; ++r) {
        const double y = static_cast<double>(r) / static_cast<double>(height);
        for (std::size_t c = 0; c < width; ++c) {
          const double x = static_cast<double>(c) / static_cast<double>(width);
          const double texture = std::sin(kTwoPi * p.fx * x + phase) * std::cos(kTwoPi * p.fy * y - 0.5 * phase);
          const double v = ramp * (1.0 + 0.45 * texture) + 0.05 * lambda * std::cos(phase);
          cube(b, r, c) = std::clamp(v, 0.05, 0.95);
        }
      }
    }
    std::vector<double> wl(bands);
    for (std::size_t b = 0; b < bands; ++b) wl[b] = 400.0 + 10.0 * static_cast<double>(b);
    cube.set_wavelengths_nm(std::move(wl));
    out.push_back(std::move(cube));
  }
  return out;
}

HyperCube random_cube(std::size_t height, std::size_t width, std::size_t bands, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  HyperCube cube(height, width, bands);
  for (auto& v : cube.data()) v = unit(rng);
  return cube;
}

}  // namespace specsplit::synthetic
