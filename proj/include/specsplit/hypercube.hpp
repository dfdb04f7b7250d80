#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <utility>
#include <vector>

namespace specsplit {

/// An H x W x B hyperspectral image. Samples are stored band-major and
/// row-major within a band: data[(b * height + r) * width + c].
class HyperCube {
 public:
  HyperCube() = default;
  HyperCube(std::size_t height, std::size_t width, std::size_t bands, double fill = 0.0);
  HyperCube(std::size_t height, std::size_t width, std::size_t bands, std::vector<double> data);

  std::size_t height() const { return height_; }
  std::size_t width() const { return width_; }
  std::size_t bands() const { return bands_; }
  std::size_t plane_size() const { return height_ * width_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t b, std::size_t r, std::size_t c) {
    return data_[(b * height_ + r) * width_ + c];
  }
  double operator()(std::size_t b, std::size_t r, std::size_t c) const {
    return data_[(b * height_ + r) * width_ + c];
  }

  std::span<double> band(std::size_t b) { return {data_.data() + b * plane_size(), plane_size()}; }
  std::span<const double> band(std::size_t b) const {
    return {data_.data() + b * plane_size(), plane_size()};
  }

  std::vector<double>& data() { return data_; }
  const std::vector<double>& data() const { return data_; }

  const std::optional<std::vector<double>>& wavelengths_nm() const { return wavelengths_nm_; }
  void set_wavelengths_nm(std::optional<std::vector<double>> wl);

  bool same_dims(const HyperCube& other) const {
    return height_ == other.height_ && width_ == other.width_ && bands_ == other.bands_;
  }

  /// Throws DataError on non-finite samples or malformed wavelengths.
  void validate() const;

  friend bool operator==(const HyperCube&, const HyperCube&) = default;

 private:
  std::size_t height_ = 0;
  std::size_t width_ = 0;
  std::size_t bands_ = 0;
  std::vector<double> data_;
  std::optional<std::vector<double>> wavelengths_nm_;
};

/// Square patch tiling of an image. Origins are row-major; the last origin
/// on each axis is clamped to (extent - patch_size) so every pixel is covered.
struct PatchGrid {
  std::size_t patch_size = 0;
  std::size_t stride = 0;
  std::vector<std::pair<std::size_t, std::size_t>> origins;
};

/// Origins along one axis under the clamp rule.
std::vector<std::size_t> axis_origins(std::size_t extent, std::size_t patch_size, std::size_t stride);

PatchGrid make_patch_grid(std::size_t height, std::size_t width, std::size_t patch_size,
                          std::size_t overlap);

enum class ResampleDirection { Up, Down };

// I/O (cube_io.cpp)
HyperCube read_cube(const std::filesystem::path& path);
void write_cube(const HyperCube& cube, const std::filesystem::path& path);

/// Stacks 8- or 16-bit grayscale PNGs into a cube, one file per band.
HyperCube import_band_stack(std::span<const std::filesystem::path> paths);

/// Writes one 2-D plane (values in [0,1]) as a grayscale PNG of the given bit depth.
void write_gray_png(const std::filesystem::path& path, std::span<const double> plane,
                    std::size_t height, std::size_t width, int bit_depth = 16);

// Resampling (resample.cpp)

/// Keys cubic convolution kernel with a = -0.5.
double cubic_kernel(double x);

/// Resizes every band with the Keys kernel and clamped edges. When shrinking
/// the kernel support is widened by the scale (antialiasing). Output is
/// clipped to [0,1].
HyperCube resize_bicubic(const HyperCube& cube, std::size_t out_height, std::size_t out_width);

HyperCube bicubic_resample(const HyperCube& cube, int factor, ResampleDirection direction);

// Geometry and scaling (hypercube.cpp)
std::vector<HyperCube> extract_patches(const HyperCube& cube, std::size_t patch_size,
                                       std::size_t overlap);
HyperCube crop(const HyperCube& cube, std::size_t row, std::size_t col, std::size_t height,
               std::size_t width);
HyperCube hflip(const HyperCube& cube);

/// Scales so the maximum becomes 1 and clamps negatives to 0. An all-zero
/// cube is returned unchanged.
HyperCube normalize(const HyperCube& cube);

}  // namespace specsplit
