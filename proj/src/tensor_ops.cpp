#include "specsplit/tensor_ops.hpp"

#include <Eigen/Core>
#include <string>

#include "specsplit/error.hpp"

namespace specsplit::nn {
namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMatrix>;
using MutMap = Eigen::Map<RowMatrix>;

void check_input(const Tensor& x, const Conv2d& conv) {
  if (x.channels != conv.in_channels) {
    throw ShapeError("conv expects " + std::to_string(conv.in_channels) + " input channels, got " +
                     std::to_string(x.channels));
  }
  if (conv.kernel % 2 == 0) throw ArgumentError("conv kernel size must be odd");
}

// (C*k*k) x (H*W) patch matrix with zero padding k/2.
RowMatrix im2col(const Tensor& x, std::size_t k) {
  const std::size_t h = x.height;
  const std::size_t w = x.width;
  const long pad = static_cast<long>(k / 2);
  RowMatrix cols = RowMatrix::Zero(static_cast<Eigen::Index>(x.channels * k * k),
                                   static_cast<Eigen::Index>(h * w));
  for (std::size_t c = 0; c < x.channels; ++c) {
    for (std::size_t ky = 0; ky < k; ++ky) {
      for (std::size_t kx = 0; kx < k; ++kx) {
        double* row = cols.data() + ((c * k + ky) * k + kx) * h * w;
        for (std::size_t r = 0; r < h; ++r) {
          const long sr = static_cast<long>(r) + static_cast<long>(ky) - pad;
          if (sr < 0 || sr >= static_cast<long>(h)) continue;
          for (std::size_t col = 0; col < w; ++col) {
            const long sc = static_cast<long>(col) + static_cast<long>(kx) - pad;
            if (sc < 0 || sc >= static_cast<long>(w)) continue;
            row[r * w + col] = x(c, static_cast<std::size_t>(sr), static_cast<std::size_t>(sc));
          }
        }
      }
    }
  }
  return cols;
}

Tensor col2im(const RowMatrix& cols, std::size_t channels, std::size_t h, std::size_t w,
              std::size_t k) {
  Tensor x(channels, h, w);
  const long pad = static_cast<long>(k / 2);
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t ky = 0; ky < k; ++ky) {
      for (std::size_t kx = 0; kx < k; ++kx) {
        const double* row = cols.data() + ((c * k + ky) * k + kx) * h * w;
        for (std::size_t r = 0; r < h; ++r) {
          const long sr = static_cast<long>(r) + static_cast<long>(ky) - pad;
          if (sr < 0 || sr >= static_cast<long>(h)) continue;
          for (std::size_t col = 0; col < w; ++col) {
            const long sc = static_cast<long>(col) + static_cast<long>(kx) - pad;
            if (sc < 0 || sc >= static_cast<long>(w)) continue;
            x(c, static_cast<std::size_t>(sr), static_cast<std::size_t>(sc)) += row[r * w + col];
          }
        }
      }
    }
  }
  return x;
}

}  // namespace

Tensor conv2d(const Tensor& x, const Conv2d& conv) {
  check_input(x, conv);
  const auto hw = static_cast<Eigen::Index>(x.plane_size());
  const auto cout = static_cast<Eigen::Index>(conv.out_channels);
  const auto kk = static_cast<Eigen::Index>(conv.in_channels * conv.kernel * conv.kernel);
  ConstMap weight(conv.weight.data(), cout, kk);

  Tensor y(conv.out_channels, x.height, x.width);
  MutMap out(y.data.data(), cout, hw);
  if (conv.kernel == 1) {
    out.noalias() = weight * ConstMap(x.data.data(), kk, hw);
  } else {
    out.noalias() = weight * im2col(x, conv.kernel);
  }
  for (Eigen::Index o = 0; o < cout; ++o) out.row(o).array() += conv.bias[static_cast<std::size_t>(o)];
  return y;
}

Tensor conv2d_backward(const Tensor& x, const Tensor& dy, const Conv2d& conv, Conv2d& grad) {
  check_input(x, conv);
  if (dy.channels != conv.out_channels || dy.height != x.height || dy.width != x.width) {
    throw ShapeError("conv gradient shape mismatch");
  }
  const auto hw = static_cast<Eigen::Index>(x.plane_size());
  const auto cout = static_cast<Eigen::Index>(conv.out_channels);
  const auto kk = static_cast<Eigen::Index>(conv.in_channels * conv.kernel * conv.kernel);
  ConstMap weight(conv.weight.data(), cout, kk);
  ConstMap g(dy.data.data(), cout, hw);
  MutMap gw(grad.weight.data(), cout, kk);
  Eigen::Map<Eigen::VectorXd> gb(grad.bias.data(), cout);
  gb += g.rowwise().sum();

  if (conv.kernel == 1) {
    ConstMap cols(x.data.data(), kk, hw);
    gw.noalias() += g * cols.transpose();
    Tensor dx(x.channels, x.height, x.width);
    MutMap(dx.data.data(), kk, hw).noalias() = weight.transpose() * g;
    return dx;
  }
  const RowMatrix cols = im2col(x, conv.kernel);
  gw.noalias() += g * cols.transpose();
  const RowMatrix dcols = weight.transpose() * g;
  return col2im(dcols, x.channels, x.height, x.width, conv.kernel);
}

Tensor relu(const Tensor& x) {
  Tensor y = x;
  for (auto& v : y.data) v = v > 0.0 ? v : 0.0;
  return y;
}

Tensor relu_backward(const Tensor& pre_activation, const Tensor& dy) {
  Tensor dx = dy;
  for (std::size_t i = 0; i < dx.data.size(); ++i) {
    if (!(pre_activation.data[i] > 0.0)) dx.data[i] = 0.0;
  }
  return dx;
}

Tensor pixel_shuffle(const Tensor& x, std::size_t factor) {
  const std::size_t ff = factor * factor;
  if (factor == 0 || x.channels % ff != 0) {
    throw ShapeError("pixel shuffle needs channels divisible by factor^2");
  }
  const std::size_t c_out = x.channels / ff;
  Tensor y(c_out, x.height * factor, x.width * factor);
  for (std::size_t c = 0; c < c_out; ++c) {
    for (std::size_t i = 0; i < factor; ++i) {
      for (std::size_t j = 0; j < factor; ++j) {
        const std::size_t src = c * ff + i * factor + j;
        for (std::size_t r = 0; r < x.height; ++r) {
          for (std::size_t col = 0; col < x.width; ++col) {
            y(c, r * factor + i, col * factor + j) = x(src, r, col);
          }
        }
      }
    }
  }
  return y;
}

Tensor pixel_unshuffle(const Tensor& x, std::size_t factor) {
  if (factor == 0 || x.height % factor != 0 || x.width % factor != 0) {
    throw ShapeError("pixel unshuffle needs spatial dims divisible by factor");
  }
  const std::size_t ff = factor * factor;
  Tensor y(x.channels * ff, x.height / factor, x.width / factor);
  for (std::size_t c = 0; c < x.channels; ++c) {
    for (std::size_t i = 0; i < factor; ++i) {
      for (std::size_t j = 0; j < factor; ++j) {
        const std::size_t dst = c * ff + i * factor + j;
        for (std::size_t r = 0; r < y.height; ++r) {
          for (std::size_t col = 0; col < y.width; ++col) {
            y(dst, r, col) = x(c, r * factor + i, col * factor + j);
          }
        }
      }
    }
  }
  return y;
}

void add_inplace(Tensor& acc, const Tensor& x) {
  if (!acc.same_shape(x)) throw ShapeError("tensor add shape mismatch");
  for (std::size_t i = 0; i < acc.data.size(); ++i) acc.data[i] += x.data[i];
}

}  // namespace specsplit::nn
