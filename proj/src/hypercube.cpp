#include "specsplit/hypercube.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "specsplit/error.hpp"

namespace specsplit {

HyperCube::HyperCube(std::size_t height, std::size_t width, std::size_t bands, double fill)
    : height_(height), width_(width), bands_(bands), data_(height * width * bands, fill) {
  if (height == 0 || width == 0 || bands == 0) {
    throw ShapeError("cube dimensions must be positive");
  }
}

HyperCube::HyperCube(std::size_t height, std::size_t width, std::size_t bands,
                     std::vector<double> data)
    : height_(height), width_(width), bands_(bands), data_(std::move(data)) {
  if (height == 0 || width == 0 || bands == 0) {
    throw ShapeError("cube dimensions must be positive");
  }
  if (data_.size() != height * width * bands) {
    throw ShapeError("cube data length " + std::to_string(data_.size()) + " != " +
                     std::to_string(height * width * bands));
  }
}

void HyperCube::set_wavelengths_nm(std::optional<std::vector<double>> wl) {
  if (wl) {
    if (wl->size() != bands_) {
      throw DataError("wavelength count " + std::to_string(wl->size()) + " != bands " +
                      std::to_string(bands_));
    }
    for (std::size_t i = 0; i < wl->size(); ++i) {
      if (!std::isfinite((*wl)[i]) || (i > 0 && (*wl)[i] <= (*wl)[i - 1])) {
        throw DataError("wavelengths must be finite and strictly increasing");
      }
    }
  }
  wavelengths_nm_ = std::move(wl);
}

void HyperCube::validate() const {
  if (data_.size() != height_ * width_ * bands_) {
    throw DataError("cube data length does not match its dimensions");
  }
  for (std::size_t i = 0; i < data_.size(); ++i) {
    if (!std::isfinite(data_[i])) {
      throw DataError("non-finite sample at flat index " + std::to_string(i));
    }
  }
  if (wavelengths_nm_) {
    const auto& wl = *wavelengths_nm_;
    if (wl.size() != bands_) throw DataError("wavelength count does not match band count");
    for (std::size_t i = 1; i < wl.size(); ++i) {
      if (!(wl[i] > wl[i - 1])) throw DataError("wavelengths must be strictly increasing");
    }
  }
}

std::vector<std::size_t> axis_origins(std::size_t extent, std::size_t patch_size,
                                      std::size_t stride) {
  if (patch_size == 0 || stride == 0) throw ArgumentError("patch size and stride must be positive");
  if (patch_size > extent) {
    throw ShapeError("patch size " + std::to_string(patch_size) + " exceeds image extent " +
                     std::to_string(extent));
  }
  std::vector<std::size_t> origins;
  for (std::size_t o = 0; o + patch_size <= extent; o += stride) origins.push_back(o);
  if (origins.back() + patch_size < extent) origins.push_back(extent - patch_size);
  return origins;
}

PatchGrid make_patch_grid(std::size_t height, std::size_t width, std::size_t patch_size,
                          std::size_t overlap) {
  if (patch_size == 0 || overlap >= patch_size) {
    throw ArgumentError("need 0 <= overlap < patch_size");
  }
  PatchGrid grid;
  grid.patch_size = patch_size;
  grid.stride = patch_size - overlap;
  const auto rows = axis_origins(height, patch_size, grid.stride);
  const auto cols = axis_origins(width, patch_size, grid.stride);
  grid.origins.reserve(rows.size() * cols.size());
  for (auto r : rows) {
    for (auto c : cols) grid.origins.emplace_back(r, c);
  }
  return grid;
}

HyperCube crop(const HyperCube& cube, std::size_t row, std::size_t col, std::size_t height,
               std::size_t width) {
  if (row + height > cube.height() || col + width > cube.width()) {
    throw ShapeError("crop window exceeds cube extent");
  }
  HyperCube out(height, width, cube.bands());
  for (std::size_t b = 0; b < cube.bands(); ++b) {
    for (std::size_t r = 0; r < height; ++r) {
      for (std::size_t c = 0; c < width; ++c) out(b, r, c) = cube(b, row + r, col + c);
    }
  }
  out.set_wavelengths_nm(cube.wavelengths_nm());
  return out;
}

std::vector<HyperCube> extract_patches(const HyperCube& cube, std::size_t patch_size,
                                       std::size_t overlap) {
  const auto grid = make_patch_grid(cube.height(), cube.width(), patch_size, overlap);
  std::vector<HyperCube> patches;
  patches.reserve(grid.origins.size());
  for (const auto& [r, c] : grid.origins) {
    patches.push_back(crop(cube, r, c, patch_size, patch_size));
  }
  return patches;
}

HyperCube hflip(const HyperCube& cube) {
  HyperCube out = cube;
  const std::size_t w = cube.width();
  for (std::size_t b = 0; b < cube.bands(); ++b) {
    for (std::size_t r = 0; r < cube.height(); ++r) {
      for (std::size_t c = 0; c < w; ++c) out(b, r, c) = cube(b, r, w - 1 - c);
    }
  }
  return out;
}

HyperCube normalize(const HyperCube& cube) {
  HyperCube out = cube;
  if (cube.empty()) return out;
  const double peak = *std::max_element(cube.data().begin(), cube.data().end());
  if (peak <= 0.0) {
    for (auto& v : out.data()) v = std::max(v, 0.0);
    return out;
  }
  for (auto& v : out.data()) v = std::max(v / peak, 0.0);
  return out;
}

}  // namespace specsplit
