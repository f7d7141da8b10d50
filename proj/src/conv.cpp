// Copyright 2026 The shape_tta Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// im2col convolution. The matrix products go through Eigen; everything else
// is plain loops.

#include <algorithm>

#include <Eigen/Core>

#include "op_util.hpp"
#include "shape_tta/ops.hpp"

namespace shape_tta {

using detail::grad_target;
using detail::make_output;
using detail::record;
using detail::tracking;

namespace {

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct ConvGeometry {
  std::size_t batch, in_ch, height, width;
  std::size_t out_ch, kh, kw;
  std::size_t stride, pad;
  std::size_t out_h, out_w;

  std::size_t patch() const { return in_ch * kh * kw; }
  std::size_t positions() const { return out_h * out_w; }
};

// Output columns [lo, hi) read inside the input row for kernel column j.
void valid_range(const ConvGeometry& g, std::size_t j, std::size_t& lo, std::size_t& hi) {
  const std::ptrdiff_t s = static_cast<std::ptrdiff_t>(g.stride);
  const std::ptrdiff_t off = static_cast<std::ptrdiff_t>(j) - static_cast<std::ptrdiff_t>(g.pad);
  const std::ptrdiff_t w = static_cast<std::ptrdiff_t>(g.width);
  std::ptrdiff_t first = off >= 0 ? 0 : (-off + s - 1) / s;
  std::ptrdiff_t last = (w - 1 - off) < 0 ? -1 : (w - 1 - off) / s;
  last = std::min<std::ptrdiff_t>(last, static_cast<std::ptrdiff_t>(g.out_w) - 1);
  lo = static_cast<std::size_t>(std::max<std::ptrdiff_t>(first, 0));
  hi = last < first ? lo : static_cast<std::size_t>(last + 1);
}

// cols[(c*kh + i)*kw + j][oy*out_w + ox] = x[c][oy*s + i - p][ox*s + j - p]
template <typename T>
void im2col(const ConvGeometry& g, const double* x, T* cols) {
  const std::size_t npos = g.positions();
  for (std::size_t c = 0; c < g.in_ch; ++c) {
    const double* plane = x + c * g.height * g.width;
    for (std::size_t i = 0; i < g.kh; ++i) {
      for (std::size_t j = 0; j < g.kw; ++j) {
        T* row = cols + ((c * g.kh + i) * g.kw + j) * npos;
        std::size_t lo, hi;
        valid_range(g, j, lo, hi);
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          const std::ptrdiff_t y = static_cast<std::ptrdiff_t>(oy * g.stride + i) -
                                   static_cast<std::ptrdiff_t>(g.pad);
          T* dst = row + oy * g.out_w;
          if (y < 0 || y >= static_cast<std::ptrdiff_t>(g.height)) {
            std::fill_n(dst, g.out_w, T(0));
            continue;
          }
          const double* src = plane + static_cast<std::size_t>(y) * g.width;
          const std::size_t first = lo * g.stride + j - g.pad;
          std::fill(dst, dst + lo, T(0));
          for (std::size_t ox = lo, xx = first; ox < hi; ++ox, xx += g.stride) {
            dst[ox] = static_cast<T>(src[xx]);
          }
          std::fill(dst + hi, dst + g.out_w, T(0));
        }
      }
    }
  }
}

template <typename T>
void col2im(const ConvGeometry& g, const T* cols, double* dx) {
  const std::size_t npos = g.positions();
  for (std::size_t c = 0; c < g.in_ch; ++c) {
    double* plane = dx + c * g.height * g.width;
    for (std::size_t i = 0; i < g.kh; ++i) {
      for (std::size_t j = 0; j < g.kw; ++j) {
        const T* row = cols + ((c * g.kh + i) * g.kw + j) * npos;
        std::size_t lo, hi;
        valid_range(g, j, lo, hi);
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          const std::ptrdiff_t y = static_cast<std::ptrdiff_t>(oy * g.stride + i) -
                                   static_cast<std::ptrdiff_t>(g.pad);
          if (y < 0 || y >= static_cast<std::ptrdiff_t>(g.height)) continue;
          double* dst = plane + static_cast<std::size_t>(y) * g.width;
          const T* src = row + oy * g.out_w;
          for (std::size_t ox = lo, xx = lo * g.stride + j - g.pad; ox < hi; ++ox, xx += g.stride) {
            dst[xx] += static_cast<double>(src[ox]);
          }
        }
      }
    }
  }
}

template <typename T>
RowMatrix<T> weight_matrix(const ConvGeometry& g, std::span<const double> w) {
  RowMatrix<T> m(g.out_ch, g.patch());
  for (std::size_t i = 0; i < w.size(); ++i) m.data()[i] = static_cast<T>(w[i]);
  return m;
}

template <typename T>
void conv_forward(const ConvGeometry& g, std::span<const double> x,
                  std::span<const double> w, std::span<const double> bias,
                  std::vector<double>& out) {
  const RowMatrix<T> wm = weight_matrix<T>(g, w);
  RowMatrix<T> cols(g.patch(), g.positions());
  RowMatrix<T> y(g.out_ch, g.positions());
  const std::size_t in_stride = g.in_ch * g.height * g.width;
  const std::size_t out_stride = g.out_ch * g.positions();
  for (std::size_t b = 0; b < g.batch; ++b) {
    im2col(g, x.data() + b * in_stride, cols.data());
    y.noalias() = wm * cols;
    double* dst = out.data() + b * out_stride;
    for (std::size_t o = 0; o < g.out_ch; ++o) {
      const double add = bias.empty() ? 0.0 : bias[o];
      for (std::size_t p = 0; p < g.positions(); ++p) {
        dst[o * g.positions() + p] = static_cast<double>(y(o, p)) + add;
      }
    }
  }
}

template <typename T>
void conv_backward(const ConvGeometry& g, const std::vector<double>& grad_out,
                   const std::vector<double>& x, const std::vector<double>& w,
                   double* gx, double* gw, double* gb) {
  const RowMatrix<T> wm = weight_matrix<T>(g, w);
  RowMatrix<T> cols(g.patch(), g.positions());
  RowMatrix<T> dy(g.out_ch, g.positions());
  RowMatrix<T> dcols(g.patch(), g.positions());
  RowMatrix<T> dw = RowMatrix<T>::Zero(g.out_ch, g.patch());
  const std::size_t in_stride = g.in_ch * g.height * g.width;
  const std::size_t out_stride = g.out_ch * g.positions();
  for (std::size_t b = 0; b < g.batch; ++b) {
    const double* src = grad_out.data() + b * out_stride;
    for (std::size_t i = 0; i < out_stride; ++i) dy.data()[i] = static_cast<T>(src[i]);
    if (gb) {
      for (std::size_t o = 0; o < g.out_ch; ++o) {
        double acc = 0.0;
        for (std::size_t p = 0; p < g.positions(); ++p) acc += src[o * g.positions() + p];
        gb[o] += acc;
      }
    }
    if (gw) {
      im2col(g, x.data() + b * in_stride, cols.data());
      dw.noalias() += dy * cols.transpose();
    }
    if (gx) {
      dcols.noalias() = wm.transpose() * dy;
      col2im(g, dcols.data(), gx + b * in_stride);
    }
  }
  if (gw) {
    for (std::size_t i = 0; i < w.size(); ++i) gw[i] += static_cast<double>(dw.data()[i]);
  }
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias,
              std::size_t stride, std::size_t padding) {
  const Shape& xs = x.shape();
  const Shape& ws = weight.shape();
  std::vector<Shape> shapes{xs, ws};
  if (bias.defined()) shapes.push_back(bias.shape());
  if (xs.size() != 4 || ws.size() != 4 || ws[1] != xs[1] || stride == 0) {
    throw ShapeError("conv2d", shapes, "expected x: B x C x H x W, weight: O x C x kh x kw");
  }
  if (bias.defined() && bias.shape() != Shape{ws[0]}) {
    throw ShapeError("conv2d", shapes, "bias must have one entry per output channel");
  }
  if (xs[2] + 2 * padding < ws[2] || xs[3] + 2 * padding < ws[3]) {
    throw ShapeError("conv2d", shapes, "kernel larger than padded input");
  }
  auto g = std::make_shared<ConvGeometry>();
  *g = {xs[0], xs[1], xs[2], xs[3], ws[0], ws[2], ws[3], stride, padding,
        (xs[2] + 2 * padding - ws[2]) / stride + 1,
        (xs[3] + 2 * padding - ws[3]) / stride + 1};

  std::vector<double> out(g->batch * g->out_ch * g->positions());
  const std::span<const double> bias_values =
      bias.defined() ? bias.values() : std::span<const double>{};
  const Precision precision = matmul_precision();
  if (precision == Precision::kF32) {
    conv_forward<float>(*g, x.values(), weight.values(), bias_values, out);
  } else {
    conv_forward<double>(*g, x.values(), weight.values(), bias_values, out);
  }
  Tensor result = make_output({g->batch, g->out_ch, g->out_h, g->out_w}, std::move(out));
  if (tracking({&x, &weight, &bias})) {
    record({&x, &weight, &bias}, result,
           [px = x.impl(), pw = weight.impl(), pb = bias.impl(), g,
            precision](const TensorImpl& o) {
             double* gx = grad_target(px);
             double* gw = grad_target(pw);
             double* gb = grad_target(pb);
             if (precision == Precision::kF32) {
               conv_backward<float>(*g, o.grad, px->data, pw->data, gx, gw, gb);
             } else {
               conv_backward<double>(*g, o.grad, px->data, pw->data, gx, gw, gb);
             }
           });
  }
  return result;
}

}  // namespace shape_tta
