#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace specsplit::nn {

/// Dense C x H x W feature map in 64-bit floats, channel-major.
struct Tensor {
  std::size_t channels = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> data;

  Tensor() = default;
  Tensor(std::size_t c, std::size_t h, std::size_t w, double fill = 0.0)
      : channels(c), height(h), width(w), data(c * h * w, fill) {}

  std::size_t plane_size() const { return height * width; }
  double& operator()(std::size_t c, std::size_t r, std::size_t col) {
    return data[(c * height + r) * width + col];
  }
  double operator()(std::size_t c, std::size_t r, std::size_t col) const {
    return data[(c * height + r) * width + col];
  }
  std::span<double> plane(std::size_t c) { return {data.data() + c * plane_size(), plane_size()}; }
  std::span<const double> plane(std::size_t c) const {
    return {data.data() + c * plane_size(), plane_size()};
  }
  bool same_shape(const Tensor& o) const {
    return channels == o.channels && height == o.height && width == o.width;
  }

  friend bool operator==(const Tensor&, const Tensor&) = default;
};

/// Square stride-1 convolution with zero "same" padding (k odd).
/// weight is laid out [out][in][ky][kx].
struct Conv2d {
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;
  std::size_t kernel = 1;
  std::vector<double> weight;
  std::vector<double> bias;

  Conv2d() = default;
  Conv2d(std::size_t in, std::size_t out, std::size_t k)
      : in_channels(in), out_channels(out), kernel(k), weight(out * in * k * k, 0.0), bias(out, 0.0) {}

  std::size_t param_count() const { return weight.size() + bias.size(); }
  friend bool operator==(const Conv2d&, const Conv2d&) = default;
};

Tensor conv2d(const Tensor& x, const Conv2d& conv);

/// Gradient of conv2d. Parameter gradients are accumulated into grad (which
/// must be shaped like conv); returns dL/dx.
Tensor conv2d_backward(const Tensor& x, const Tensor& dy, const Conv2d& conv, Conv2d& grad);

Tensor relu(const Tensor& x);
Tensor relu_backward(const Tensor& pre_activation, const Tensor& dy);

/// (C*f*f) x H x W -> C x (H*f) x (W*f): input channel c*f*f + i*f + j lands
/// at output channel c, sub-position (i, j).
Tensor pixel_shuffle(const Tensor& x, std::size_t factor);

/// Exact inverse (and adjoint) of pixel_shuffle.
Tensor pixel_unshuffle(const Tensor& x, std::size_t factor);

void add_inplace(Tensor& acc, const Tensor& x);

}  // namespace specsplit::nn
