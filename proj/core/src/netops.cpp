/* Copyright 2026 The ctxdet Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#include "ctxdet/netops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace ctxdet {

namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const RowMat<T>>;
template <typename T>
using ColVec = Eigen::Matrix<T, Eigen::Dynamic, 1>;

struct ConvDims {
  int batch, in_c, in_h, in_w, out_c, k_h, k_w, out_h, out_w;
  std::size_t kdim() const { return std::size_t(in_c) * k_h * k_w; }
  std::size_t pixels() const { return std::size_t(out_h) * out_w; }
  bool pointwise(ConvGeometry g) const {
    return k_h == 1 && k_w == 1 && g.stride == 1 && g.pad == 0;
  }
};

template <typename T>
ConvDims conv_dims(const Tensor<T>& input, const Tensor<T>& kernel, ConvGeometry g) {
  if (g.stride < 1 || g.pad < 0) {
    throw ShapeError("conv2d: stride must be >= 1 and pad >= 0");
  }
  if (input.c() != kernel.c()) {
    throw ShapeError("conv2d: input " + input.shape().to_string() +
                     " incompatible with kernel " + kernel.shape().to_string());
  }
  ConvDims d{input.n(), input.c(), input.h(), input.w(), kernel.n(),
             kernel.h(), kernel.w(), 0, 0};
  d.out_h = conv_output_size(d.in_h, d.k_h, g);
  d.out_w = conv_output_size(d.in_w, d.k_w, g);
  if (d.out_h < 1 || d.out_w < 1) {
    throw ShapeError("conv2d: input " + input.shape().to_string() +
                     " too small for kernel " + kernel.shape().to_string());
  }
  return d;
}

template <typename T>
void im2col(const T* src, const ConvDims& d, ConvGeometry g, T* cols) {
  const std::size_t P = d.pixels();
  for (int c = 0; c < d.in_c; ++c) {
    const T* plane = src + std::size_t(c) * d.in_h * d.in_w;
    for (int ky = 0; ky < d.k_h; ++ky) {
      for (int kx = 0; kx < d.k_w; ++kx) {
        T* row = cols + ((std::size_t(c) * d.k_h + ky) * d.k_w + kx) * P;
        for (int oy = 0; oy < d.out_h; ++oy) {
          const int iy = oy * g.stride - g.pad + ky;
          T* out = row + std::size_t(oy) * d.out_w;
          if (iy < 0 || iy >= d.in_h) {
            std::fill(out, out + d.out_w, T{0});
            continue;
          }
          const T* in_row = plane + std::size_t(iy) * d.in_w;
          for (int ox = 0; ox < d.out_w; ++ox) {
            const int ix = ox * g.stride - g.pad + kx;
            out[ox] = (ix >= 0 && ix < d.in_w) ? in_row[ix] : T{0};
          }
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const T* cols, const ConvDims& d, ConvGeometry g, T* dst) {
  const std::size_t P = d.pixels();
  for (int c = 0; c < d.in_c; ++c) {
    T* plane = dst + std::size_t(c) * d.in_h * d.in_w;
    for (int ky = 0; ky < d.k_h; ++ky) {
      for (int kx = 0; kx < d.k_w; ++kx) {
        const T* row = cols + ((std::size_t(c) * d.k_h + ky) * d.k_w + kx) * P;
        for (int oy = 0; oy < d.out_h; ++oy) {
          const int iy = oy * g.stride - g.pad + ky;
          if (iy < 0 || iy >= d.in_h) continue;
          const T* in = row + std::size_t(oy) * d.out_w;
          T* out_row = plane + std::size_t(iy) * d.in_w;
          for (int ox = 0; ox < d.out_w; ++ox) {
            const int ix = ox * g.stride - g.pad + kx;
            if (ix >= 0 && ix < d.in_w) out_row[ix] += in[ox];
          }
        }
      }
    }
  }
}

struct BilinearTap {
  int lo = 0;
  int hi = 0;
  double frac = 0.0;
};

// Half-pixel source coordinate for one output index.
BilinearTap resize_tap(int dst, int in, int out) {
  const double scale = static_cast<double>(in) / out;
  double src = (dst + 0.5) * scale - 0.5;
  if (src < 0.0) src = 0.0;
  BilinearTap t;
  t.lo = static_cast<int>(src);
  if (t.lo >= in - 1) {
    t.lo = t.hi = in - 1;
    t.frac = 0.0;
  } else {
    t.hi = t.lo + 1;
    t.frac = src - t.lo;
  }
  return t;
}

struct SampleTap {
  bool valid = false;
  int y0 = 0, y1 = 0, x0 = 0, x1 = 0;
  double w00 = 0, w01 = 0, w10 = 0, w11 = 0;
};

SampleTap sample_tap(double y, double x, int h, int w) {
  SampleTap t;
  if (y < -1.0 || y > h || x < -1.0 || x > w) return t;
  y = std::max(y, 0.0);
  x = std::max(x, 0.0);
  t.y0 = static_cast<int>(y);
  t.x0 = static_cast<int>(x);
  if (t.y0 >= h - 1) {
    t.y0 = t.y1 = h - 1;
    y = t.y0;
  } else {
    t.y1 = t.y0 + 1;
  }
  if (t.x0 >= w - 1) {
    t.x0 = t.x1 = w - 1;
    x = t.x0;
  } else {
    t.x1 = t.x0 + 1;
  }
  const double ly = y - t.y0;
  const double lx = x - t.x0;
  const double hy = 1.0 - ly;
  const double hx = 1.0 - lx;
  t.w00 = hy * hx;
  t.w01 = hy * lx;
  t.w10 = ly * hx;
  t.w11 = ly * lx;
  t.valid = true;
  return t;
}

struct RoiGrid {
  double start_y, start_x, bin_h, bin_w;
};

RoiGrid roi_grid(const AxisRect& roi, const RoiAlignParams& p, int feat_h, int feat_w) {
  if (!roi.valid()) throw GeometryError("roi_align: roi must have positive extent");
  if (p.out_h < 1 || p.out_w < 1 || p.sampling < 1 || !(p.spatial_scale > 0.0)) {
    throw ShapeError("roi_align: invalid pooling parameters");
  }
  const double img_w = feat_w / p.spatial_scale;
  const double img_h = feat_h / p.spatial_scale;
  if (roi.x_max <= 0.0 || roi.y_max <= 0.0 || roi.x_min >= img_w ||
      roi.y_min >= img_h) {
    throw GeometryError("roi_align: roi lies fully outside the feature map");
  }
  RoiGrid g;
  g.start_x = roi.x_min * p.spatial_scale - 0.5;
  g.start_y = roi.y_min * p.spatial_scale - 0.5;
  g.bin_w = roi.width() * p.spatial_scale / p.out_w;
  g.bin_h = roi.height() * p.spatial_scale / p.out_h;
  return g;
}

template <typename T>
void require_same(const Tensor<T>& a, const Tensor<T>& b, const char* what) {
  a.require_same_shape(b, what);
}

}  // namespace

int conv_output_size(int in, int kernel, ConvGeometry g) {
  const int span = in + 2 * g.pad - kernel;
  if (span < 0) return 0;
  return span / g.stride + 1;
}

template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& kernel,
                 std::span<const T> bias, ConvGeometry g) {
  const ConvDims d = conv_dims(input, kernel, g);
  if (!bias.empty() && bias.size() != std::size_t(d.out_c)) {
    throw ShapeError("conv2d: bias length " + std::to_string(bias.size()) +
                     " does not match kernel " + kernel.shape().to_string());
  }
  Tensor<T> out(d.batch, d.out_c, d.out_h, d.out_w);
  const std::size_t K = d.kdim();
  const std::size_t P = d.pixels();
  AlignedVector<T> cols;
  if (!d.pointwise(g)) cols.resize(K * P);
  ConstMatMap<T> weights(kernel.data(), d.out_c, K);
  for (int b = 0; b < d.batch; ++b) {
    const T* col_ptr = input.plane(b, 0);
    if (!d.pointwise(g)) {
      im2col(input.plane(b, 0), d, g, cols.data());
      col_ptr = cols.data();
    }
    ConstMatMap<T> col_mat(col_ptr, K, P);
    MatMap<T> y(out.plane(b, 0), d.out_c, P);
    y.noalias() = weights * col_mat;
    if (!bias.empty()) {
      for (int oc = 0; oc < d.out_c; ++oc) y.row(oc).array() += bias[oc];
    }
  }
  return out;
}

template <typename T>
ConvGrads<T> conv2d_backward(const Tensor<T>& input, const Tensor<T>& kernel,
                             const Tensor<T>& grad_out, ConvGeometry g,
                             bool want_input_grad) {
  const ConvDims d = conv_dims(input, kernel, g);
  if (!(grad_out.shape() == Shape4{d.batch, d.out_c, d.out_h, d.out_w})) {
    throw ShapeError("conv2d_backward: grad " + grad_out.shape().to_string() +
                     " does not match output of input " +
                     input.shape().to_string() + " and kernel " +
                     kernel.shape().to_string());
  }
  const std::size_t K = d.kdim();
  const std::size_t P = d.pixels();
  ConvGrads<T> grads;
  grads.kernel = Tensor<T>(kernel.shape());
  grads.bias.assign(d.out_c, T{0});
  if (want_input_grad) grads.input = Tensor<T>(input.shape());

  AlignedVector<T> cols;
  AlignedVector<T> dcols;
  if (!d.pointwise(g)) {
    cols.resize(K * P);
    if (want_input_grad) dcols.resize(K * P);
  }
  ConstMatMap<T> weights(kernel.data(), d.out_c, K);
  MatMap<T> dweights(grads.kernel.data(), d.out_c, K);
  for (int b = 0; b < d.batch; ++b) {
    ConstMatMap<T> dy(grad_out.plane(b, 0), d.out_c, P);
    const T* col_ptr = input.plane(b, 0);
    if (!d.pointwise(g)) {
      im2col(input.plane(b, 0), d, g, cols.data());
      col_ptr = cols.data();
    }
    ConstMatMap<T> col_mat(col_ptr, K, P);
    dweights.noalias() += dy * col_mat.transpose();
    for (int oc = 0; oc < d.out_c; ++oc) grads.bias[oc] += dy.row(oc).sum();
    if (want_input_grad) {
      if (d.pointwise(g)) {
        MatMap<T> dx(grads.input.plane(b, 0), K, P);
        dx.noalias() = weights.transpose() * dy;
      } else {
        MatMap<T> dc(dcols.data(), K, P);
        dc.noalias() = weights.transpose() * dy;
        col2im_add(dcols.data(), d, g, grads.input.plane(b, 0));
      }
    }
  }
  return grads;
}

template <typename T>
Tensor<T> linear(const Tensor<T>& input, const Tensor<T>& weight,
                 std::span<const T> bias) {
  const int n = input.n();
  const std::size_t k = input.size() / std::max(n, 1);
  if (weight.size() % std::max<std::size_t>(k, 1) != 0 ||
      std::size_t(weight.c()) * weight.h() * weight.w() != k) {
    throw ShapeError("linear: input " + input.shape().to_string() +
                     " incompatible with weight " + weight.shape().to_string());
  }
  const int out = weight.n();
  if (!bias.empty() && bias.size() != std::size_t(out)) {
    throw ShapeError("linear: bias length does not match weight " +
                     weight.shape().to_string());
  }
  Tensor<T> y(n, out, 1, 1);
  ConstMatMap<T> x(input.data(), n, k);
  ConstMatMap<T> w(weight.data(), out, k);
  MatMap<T> ym(y.data(), n, out);
  ym.noalias() = x * w.transpose();
  if (!bias.empty()) {
    for (int i = 0; i < n; ++i) {
      for (int o = 0; o < out; ++o) ym(i, o) += bias[o];
    }
  }
  return y;
}

template <typename T>
ConvGrads<T> linear_backward(const Tensor<T>& input, const Tensor<T>& weight,
                             const Tensor<T>& grad_out) {
  const int n = input.n();
  const std::size_t k = input.size() / std::max(n, 1);
  const int out = weight.n();
  if (!(grad_out.shape() == Shape4{n, out, 1, 1})) {
    throw ShapeError("linear_backward: grad " + grad_out.shape().to_string() +
                     " does not match weight " + weight.shape().to_string());
  }
  ConvGrads<T> g;
  g.input = Tensor<T>(input.shape());
  g.kernel = Tensor<T>(weight.shape());
  g.bias.assign(out, T{0});
  ConstMatMap<T> x(input.data(), n, k);
  ConstMatMap<T> w(weight.data(), out, k);
  ConstMatMap<T> dy(grad_out.data(), n, out);
  MatMap<T> dw(g.kernel.data(), out, k);
  MatMap<T> dx(g.input.data(), n, k);
  dw.noalias() = dy.transpose() * x;
  dx.noalias() = dy * w;
  for (int o = 0; o < out; ++o) g.bias[o] = dy.col(o).sum();
  return g;
}

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
  Tensor<T> y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] > T{0} ? x[i] : T{0};
  return y;
}

template <typename T>
Tensor<T> relu_backward(const Tensor<T>& x, const Tensor<T>& grad_out) {
  require_same(x, grad_out, "relu_backward");
  Tensor<T> dx(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) dx[i] = x[i] > T{0} ? grad_out[i] : T{0};
  return dx;
}

template <typename T>
Tensor<T> leaky_relu(const Tensor<T>& x, T slope) {
  Tensor<T> y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] > T{0} ? x[i] : slope * x[i];
  return y;
}

template <typename T>
Tensor<T> leaky_relu_backward(const Tensor<T>& x, const Tensor<T>& grad_out, T slope) {
  require_same(x, grad_out, "leaky_relu_backward");
  Tensor<T> dx(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    dx[i] = x[i] > T{0} ? grad_out[i] : slope * grad_out[i];
  }
  return dx;
}

template <typename T>
Tensor<T> channel_softmax(const Tensor<T>& x) {
  if (x.c() < 2) throw ShapeError("channel_softmax needs >= 2 channels, got " + x.shape().to_string());
  Tensor<T> y(x.shape());
  const std::size_t plane = x.shape().plane();
  for (int b = 0; b < x.n(); ++b) {
    const T* in = x.plane(b, 0);
    T* out = y.plane(b, 0);
    for (std::size_t p = 0; p < plane; ++p) {
      T m = in[p];
      for (int c = 1; c < x.c(); ++c) m = std::max(m, in[c * plane + p]);
      T sum{0};
      for (int c = 0; c < x.c(); ++c) {
        const T e = std::exp(in[c * plane + p] - m);
        out[c * plane + p] = e;
        sum += e;
      }
      for (int c = 0; c < x.c(); ++c) out[c * plane + p] /= sum;
    }
  }
  return y;
}

template <typename T>
Tensor<T> channel_softmax_backward(const Tensor<T>& y, const Tensor<T>& grad_out) {
  require_same(y, grad_out, "channel_softmax_backward");
  Tensor<T> dx(y.shape());
  const std::size_t plane = y.shape().plane();
  for (int b = 0; b < y.n(); ++b) {
    const T* yy = y.plane(b, 0);
    const T* dy = grad_out.plane(b, 0);
    T* out = dx.plane(b, 0);
    for (std::size_t p = 0; p < plane; ++p) {
      T dotp{0};
      for (int c = 0; c < y.c(); ++c) dotp += yy[c * plane + p] * dy[c * plane + p];
      for (int c = 0; c < y.c(); ++c) {
        out[c * plane + p] = yy[c * plane + p] * (dy[c * plane + p] - dotp);
      }
    }
  }
  return dx;
}

template <typename T>
Tensor<T> exp_map(const Tensor<T>& x) {
  Tensor<T> y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = std::exp(x[i]);
  return y;
}

template <typename T>
Tensor<T> exp_map_backward(const Tensor<T>& y, const Tensor<T>& grad_out) {
  require_same(y, grad_out, "exp_map_backward");
  Tensor<T> dx(y.shape());
  for (std::size_t i = 0; i < y.size(); ++i) dx[i] = y[i] * grad_out[i];
  return dx;
}

template <typename T>
Tensor<T> select_channel(const Tensor<T>& x, int channel) {
  if (channel < 0 || channel >= x.c()) {
    throw ShapeError("select_channel: channel " + std::to_string(channel) +
                     " out of range for " + x.shape().to_string());
  }
  Tensor<T> y(x.n(), 1, x.h(), x.w());
  const std::size_t plane = x.shape().plane();
  for (int b = 0; b < x.n(); ++b) {
    std::copy(x.plane(b, channel), x.plane(b, channel) + plane, y.plane(b, 0));
  }
  return y;
}

template <typename T>
Tensor<T> select_channel_backward(const Shape4& input_shape, int channel,
                                  const Tensor<T>& grad_out) {
  Tensor<T> dx(input_shape);
  const std::size_t plane = input_shape.plane();
  for (int b = 0; b < input_shape.n; ++b) {
    std::copy(grad_out.plane(b, 0), grad_out.plane(b, 0) + plane, dx.plane(b, channel));
  }
  return dx;
}

template <typename T>
Tensor<T> scale_by_map(const Tensor<T>& x, const Tensor<T>& scale) {
  if (scale.n() != x.n() || scale.c() != 1 || scale.h() != x.h() || scale.w() != x.w()) {
    throw ShapeError("scale_by_map: map " + scale.shape().to_string() +
                     " cannot broadcast over " + x.shape().to_string());
  }
  Tensor<T> y(x.shape());
  const std::size_t plane = x.shape().plane();
  for (int b = 0; b < x.n(); ++b) {
    const T* s = scale.plane(b, 0);
    for (int c = 0; c < x.c(); ++c) {
      const T* in = x.plane(b, c);
      T* out = y.plane(b, c);
      for (std::size_t p = 0; p < plane; ++p) out[p] = in[p] * s[p];
    }
  }
  return y;
}

template <typename T>
ScaleGrads<T> scale_by_map_backward(const Tensor<T>& x, const Tensor<T>& scale,
                                    const Tensor<T>& grad_out) {
  require_same(x, grad_out, "scale_by_map_backward");
  ScaleGrads<T> g{Tensor<T>(x.shape()), Tensor<T>(scale.shape())};
  const std::size_t plane = x.shape().plane();
  for (int b = 0; b < x.n(); ++b) {
    const T* s = scale.plane(b, 0);
    T* ds = g.scale.plane(b, 0);
    for (int c = 0; c < x.c(); ++c) {
      const T* in = x.plane(b, c);
      const T* dy = grad_out.plane(b, c);
      T* dx = g.input.plane(b, c);
      for (std::size_t p = 0; p < plane; ++p) {
        dx[p] = dy[p] * s[p];
        ds[p] += dy[p] * in[p];
      }
    }
  }
  return g;
}

template <typename T>
Tensor<T> bilinear_resize(const Tensor<T>& x, int out_h, int out_w) {
  if (out_h < 1 || out_w < 1) throw ShapeError("bilinear_resize: target size must be >= 1");
  Tensor<T> y(x.n(), x.c(), out_h, out_w);
  std::vector<BilinearTap> ty(out_h);
  std::vector<BilinearTap> tx(out_w);
  for (int i = 0; i < out_h; ++i) ty[i] = resize_tap(i, x.h(), out_h);
  for (int j = 0; j < out_w; ++j) tx[j] = resize_tap(j, x.w(), out_w);
  for (int b = 0; b < x.n(); ++b) {
    for (int c = 0; c < x.c(); ++c) {
      const T* in = x.plane(b, c);
      T* out = y.plane(b, c);
      for (int i = 0; i < out_h; ++i) {
        const T* r0 = in + std::size_t(ty[i].lo) * x.w();
        const T* r1 = in + std::size_t(ty[i].hi) * x.w();
        const T fy = static_cast<T>(ty[i].frac);
        for (int j = 0; j < out_w; ++j) {
          const T fx = static_cast<T>(tx[j].frac);
          const T top = r0[tx[j].lo] + (r0[tx[j].hi] - r0[tx[j].lo]) * fx;
          const T bot = r1[tx[j].lo] + (r1[tx[j].hi] - r1[tx[j].lo]) * fx;
          out[std::size_t(i) * out_w + j] = top + (bot - top) * fy;
        }
      }
    }
  }
  return y;
}

template <typename T>
Tensor<T> bilinear_resize_backward(const Tensor<T>& grad_out, int in_h, int in_w) {
  const int out_h = grad_out.h();
  const int out_w = grad_out.w();
  Tensor<T> dx(grad_out.n(), grad_out.c(), in_h, in_w);
  std::vector<BilinearTap> ty(out_h);
  std::vector<BilinearTap> tx(out_w);
  for (int i = 0; i < out_h; ++i) ty[i] = resize_tap(i, in_h, out_h);
  for (int j = 0; j < out_w; ++j) tx[j] = resize_tap(j, in_w, out_w);
  for (int b = 0; b < grad_out.n(); ++b) {
    for (int c = 0; c < grad_out.c(); ++c) {
      const T* dy = grad_out.plane(b, c);
      T* out = dx.plane(b, c);
      for (int i = 0; i < out_h; ++i) {
        T* r0 = out + std::size_t(ty[i].lo) * in_w;
        T* r1 = out + std::size_t(ty[i].hi) * in_w;
        const T fy = static_cast<T>(ty[i].frac);
        for (int j = 0; j < out_w; ++j) {
          const T fx = static_cast<T>(tx[j].frac);
          const T g = dy[std::size_t(i) * out_w + j];
          r0[tx[j].lo] += g * (1 - fy) * (1 - fx);
          r0[tx[j].hi] += g * (1 - fy) * fx;
          r1[tx[j].lo] += g * fy * (1 - fx);
          r1[tx[j].hi] += g * fy * fx;
        }
      }
    }
  }
  return dx;
}

template <typename T>
Tensor<T> upsample_nearest2x(const Tensor<T>& x) {
  Tensor<T> y(x.n(), x.c(), x.h() * 2, x.w() * 2);
  for (int b = 0; b < x.n(); ++b) {
    for (int c = 0; c < x.c(); ++c) {
      const T* in = x.plane(b, c);
      T* out = y.plane(b, c);
      for (int i = 0; i < y.h(); ++i) {
        const T* src = in + std::size_t(i / 2) * x.w();
        T* dst = out + std::size_t(i) * y.w();
        for (int j = 0; j < y.w(); ++j) dst[j] = src[j / 2];
      }
    }
  }
  return y;
}

template <typename T>
Tensor<T> upsample_nearest2x_backward(const Tensor<T>& grad_out) {
  if (grad_out.h() % 2 != 0 || grad_out.w() % 2 != 0) {
    throw ShapeError("upsample_nearest2x_backward: odd gradient extent " +
                     grad_out.shape().to_string());
  }
  Tensor<T> dx(grad_out.n(), grad_out.c(), grad_out.h() / 2, grad_out.w() / 2);
  for (int b = 0; b < grad_out.n(); ++b) {
    for (int c = 0; c < grad_out.c(); ++c) {
      const T* dy = grad_out.plane(b, c);
      T* out = dx.plane(b, c);
      for (int i = 0; i < grad_out.h(); ++i) {
        for (int j = 0; j < grad_out.w(); ++j) {
          out[std::size_t(i / 2) * dx.w() + j / 2] += dy[std::size_t(i) * grad_out.w() + j];
        }
      }
    }
  }
  return dx;
}

template <typename T>
Tensor<T> roi_align(const Tensor<T>& input, const AxisRect& roi, const RoiAlignParams& p) {
  const RoiGrid grid = roi_grid(roi, p, input.h(), input.w());
  const int channels = input.c();
  Tensor<T> out(1, channels, p.out_h, p.out_w);
  const double inv = 1.0 / (p.sampling * p.sampling);
  std::vector<SampleTap> taps(std::size_t(p.sampling) * p.sampling);
  for (int ph = 0; ph < p.out_h; ++ph) {
    for (int pw = 0; pw < p.out_w; ++pw) {
      for (int iy = 0; iy < p.sampling; ++iy) {
        const double y = grid.start_y + ph * grid.bin_h + (iy + 0.5) * grid.bin_h / p.sampling;
        for (int ix = 0; ix < p.sampling; ++ix) {
          const double x = grid.start_x + pw * grid.bin_w + (ix + 0.5) * grid.bin_w / p.sampling;
          taps[std::size_t(iy) * p.sampling + ix] = sample_tap(y, x, input.h(), input.w());
        }
      }
      for (int c = 0; c < channels; ++c) {
        const T* f = input.plane(0, c);
        double acc = 0.0;
        for (const SampleTap& t : taps) {
          if (!t.valid) continue;
          acc += t.w00 * f[std::size_t(t.y0) * input.w() + t.x0] +
                 t.w01 * f[std::size_t(t.y0) * input.w() + t.x1] +
                 t.w10 * f[std::size_t(t.y1) * input.w() + t.x0] +
                 t.w11 * f[std::size_t(t.y1) * input.w() + t.x1];
        }
        out.at(0, c, ph, pw) = static_cast<T>(acc * inv);
      }
    }
  }
  return out;
}

template <typename T>
void roi_align_backward(const Tensor<T>& grad_out, const AxisRect& roi,
                        const RoiAlignParams& p, Tensor<T>& grad_input) {
  const RoiGrid grid = roi_grid(roi, p, grad_input.h(), grad_input.w());
  if (grad_out.c() != grad_input.c() || grad_out.h() != p.out_h || grad_out.w() != p.out_w) {
    throw ShapeError("roi_align_backward: grad " + grad_out.shape().to_string() +
                     " does not match pooled grid for input " +
                     grad_input.shape().to_string());
  }
  const double inv = 1.0 / (p.sampling * p.sampling);
  const int w = grad_input.w();
  for (int ph = 0; ph < p.out_h; ++ph) {
    for (int pw = 0; pw < p.out_w; ++pw) {
      for (int iy = 0; iy < p.sampling; ++iy) {
        const double y = grid.start_y + ph * grid.bin_h + (iy + 0.5) * grid.bin_h / p.sampling;
        for (int ix = 0; ix < p.sampling; ++ix) {
          const double x = grid.start_x + pw * grid.bin_w + (ix + 0.5) * grid.bin_w / p.sampling;
          const SampleTap t = sample_tap(y, x, grad_input.h(), w);
          if (!t.valid) continue;
          for (int c = 0; c < grad_input.c(); ++c) {
            const double g = grad_out.at(0, c, ph, pw) * inv;
            T* f = grad_input.plane(0, c);
            f[std::size_t(t.y0) * w + t.x0] += static_cast<T>(g * t.w00);
            f[std::size_t(t.y0) * w + t.x1] += static_cast<T>(g * t.w01);
            f[std::size_t(t.y1) * w + t.x0] += static_cast<T>(g * t.w10);
            f[std::size_t(t.y1) * w + t.x1] += static_cast<T>(g * t.w11);
          }
        }
      }
    }
  }
}

template <typename T>
LossResult<T> softmax_cross_entropy_map(const Tensor<T>& logits,
                                        std::span<const std::uint8_t> labels,
                                        std::span<const std::uint8_t> weights) {
  const std::size_t plane = logits.shape().plane();
  if (logits.n() != 1 || logits.c() < 2 || labels.size() != plane ||
      (!weights.empty() && weights.size() != plane)) {
    throw ShapeError("softmax_cross_entropy_map: logits " + logits.shape().to_string() +
                     " vs " + std::to_string(labels.size()) + " labels");
  }
  const int classes = logits.c();
  LossResult<T> r{T{0}, Tensor<T>(logits.shape())};
  std::size_t counted = 0;
  for (std::size_t p = 0; p < plane; ++p) {
    if (weights.empty() || weights[p]) ++counted;
  }
  if (counted == 0) return r;
  const double inv = 1.0 / static_cast<double>(counted);
  double total = 0.0;
  const T* z = logits.data();
  T* g = r.grad.data();
  for (std::size_t p = 0; p < plane; ++p) {
    if (!weights.empty() && !weights[p]) continue;
    double m = z[p];
    for (int c = 1; c < classes; ++c) m = std::max<double>(m, z[c * plane + p]);
    double sum = 0.0;
    for (int c = 0; c < classes; ++c) sum += std::exp(z[c * plane + p] - m);
    const double lse = m + std::log(sum);
    const int label = labels[p];
    total += lse - z[label * plane + p];
    for (int c = 0; c < classes; ++c) {
      const double prob = std::exp(z[c * plane + p] - lse);
      g[c * plane + p] = static_cast<T>((prob - (c == label ? 1.0 : 0.0)) * inv);
    }
  }
  r.loss = static_cast<T>(total * inv);
  return r;
}

template <typename T>
LossResult<T> softmax_cross_entropy_rows(const Tensor<T>& logits, std::span<const int> labels) {
  const int n = logits.n();
  const int classes = static_cast<int>(logits.size() / std::max(n, 1));
  if (labels.size() != std::size_t(n)) {
    throw ShapeError("softmax_cross_entropy_rows: " + std::to_string(labels.size()) +
                     " labels for logits " + logits.shape().to_string());
  }
  LossResult<T> r{T{0}, Tensor<T>(logits.shape())};
  if (n == 0) return r;
  const double inv = 1.0 / n;
  double total = 0.0;
  for (int i = 0; i < n; ++i) {
    const T* z = logits.data() + std::size_t(i) * classes;
    T* g = r.grad.data() + std::size_t(i) * classes;
    double m = z[0];
    for (int c = 1; c < classes; ++c) m = std::max<double>(m, z[c]);
    double sum = 0.0;
    for (int c = 0; c < classes; ++c) sum += std::exp(z[c] - m);
    const double lse = m + std::log(sum);
    total += lse - z[labels[i]];
    for (int c = 0; c < classes; ++c) {
      g[c] = static_cast<T>((std::exp(z[c] - lse) - (c == labels[i] ? 1.0 : 0.0)) * inv);
    }
  }
  r.loss = static_cast<T>(total * inv);
  return r;
}

template <typename T>
LossResult<T> sigmoid_bce(const Tensor<T>& logits, std::span<const T> targets) {
  if (targets.size() != logits.size()) {
    throw ShapeError("sigmoid_bce: " + std::to_string(targets.size()) +
                     " targets for logits " + logits.shape().to_string());
  }
  LossResult<T> r{T{0}, Tensor<T>(logits.shape())};
  if (logits.empty()) return r;
  const double inv = 1.0 / static_cast<double>(logits.size());
  double total = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    const double z = logits[i];
    const double t = targets[i];
    total += std::max(z, 0.0) - z * t + std::log1p(std::exp(-std::abs(z)));
    const double s = z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
    r.grad[i] = static_cast<T>((s - t) * inv);
  }
  r.loss = static_cast<T>(total * inv);
  return r;
}

template <typename T>
LossResult<T> smooth_l1(const Tensor<T>& pred, std::span<const T> target, T beta, T normalizer) {
  if (target.size() != pred.size()) {
    throw ShapeError("smooth_l1: " + std::to_string(target.size()) +
                     " targets for prediction " + pred.shape().to_string());
  }
  if (!(beta > T{0}) || !(normalizer > T{0})) {
    throw std::invalid_argument("smooth_l1: beta and normalizer must be positive");
  }
  LossResult<T> r{T{0}, Tensor<T>(pred.shape())};
  double total = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = static_cast<double>(pred[i]) - target[i];
    const double ad = std::abs(d);
    if (ad < beta) {
      total += 0.5 * d * d / beta;
      r.grad[i] = static_cast<T>(d / beta / normalizer);
    } else {
      total += ad - 0.5 * beta;
      r.grad[i] = static_cast<T>((d > 0 ? 1.0 : -1.0) / normalizer);
    }
  }
  r.loss = static_cast<T>(total / normalizer);
  return r;
}

#define CTXDET_INSTANTIATE_NETOPS(T)                                                       \
  template Tensor<T> conv2d<T>(const Tensor<T>&, const Tensor<T>&, std::span<const T>,     \
                               ConvGeometry);                                              \
  template ConvGrads<T> conv2d_backward<T>(const Tensor<T>&, const Tensor<T>&,             \
                                           const Tensor<T>&, ConvGeometry, bool);          \
  template Tensor<T> linear<T>(const Tensor<T>&, const Tensor<T>&, std::span<const T>);    \
  template ConvGrads<T> linear_backward<T>(const Tensor<T>&, const Tensor<T>&,             \
                                           const Tensor<T>&);                              \
  template Tensor<T> relu<T>(const Tensor<T>&);                                            \
  template Tensor<T> relu_backward<T>(const Tensor<T>&, const Tensor<T>&);                 \
  template Tensor<T> leaky_relu<T>(const Tensor<T>&, T);                                   \
  template Tensor<T> leaky_relu_backward<T>(const Tensor<T>&, const Tensor<T>&, T);        \
  template Tensor<T> channel_softmax<T>(const Tensor<T>&);                                 \
  template Tensor<T> channel_softmax_backward<T>(const Tensor<T>&, const Tensor<T>&);      \
  template Tensor<T> exp_map<T>(const Tensor<T>&);                                         \
  template Tensor<T> exp_map_backward<T>(const Tensor<T>&, const Tensor<T>&);              \
  template Tensor<T> select_channel<T>(const Tensor<T>&, int);                             \
  template Tensor<T> select_channel_backward<T>(const Shape4&, int, const Tensor<T>&);     \
  template Tensor<T> scale_by_map<T>(const Tensor<T>&, const Tensor<T>&);                  \
  template ScaleGrads<T> scale_by_map_backward<T>(const Tensor<T>&, const Tensor<T>&,      \
                                                  const Tensor<T>&);                       \
  template Tensor<T> bilinear_resize<T>(const Tensor<T>&, int, int);                       \
  template Tensor<T> bilinear_resize_backward<T>(const Tensor<T>&, int, int);              \
  template Tensor<T> upsample_nearest2x<T>(const Tensor<T>&);                              \
  template Tensor<T> upsample_nearest2x_backward<T>(const Tensor<T>&);                     \
  template Tensor<T> roi_align<T>(const Tensor<T>&, const AxisRect&, const RoiAlignParams&); \
  template void roi_align_backward<T>(const Tensor<T>&, const AxisRect&,                   \
                                      const RoiAlignParams&, Tensor<T>&);                  \
  template LossResult<T> softmax_cross_entropy_map<T>(                                     \
      const Tensor<T>&, std::span<const std::uint8_t>, std::span<const std::uint8_t>);     \
  template LossResult<T> softmax_cross_entropy_rows<T>(const Tensor<T>&,                   \
                                                       std::span<const int>);              \
  template LossResult<T> sigmoid_bce<T>(const Tensor<T>&, std::span<const T>);             \
  template LossResult<T> smooth_l1<T>(const Tensor<T>&, std::span<const T>, T, T);

CTXDET_INSTANTIATE_NETOPS(float)
CTXDET_INSTANTIATE_NETOPS(double)

#undef CTXDET_INSTANTIATE_NETOPS

// ---------------------------------------------------------------------------
// Registry and finite-difference harness.

namespace {

FeatureMapD random_map(std::mt19937_64& rng, Shape4 s, double scale = 1.0) {
  std::normal_distribution<double> dist(0.0, scale);
  FeatureMapD t(s);
  for (auto& v : t.values()) v = dist(rng);
  return t;
}

// Keeps samples at least `margin` away from zero (relu kinks).
FeatureMapD away_from_zero(FeatureMapD t, double margin) {
  for (auto& v : t.values()) {
    if (std::abs(v) < margin) v = v < 0 ? -margin : margin;
  }
  return t;
}

FeatureMapD scalar(double v) {
  FeatureMapD t(1, 1, 1, 1);
  t[0] = v;
  return t;
}

std::span<const double> bias_of(const FeatureMapD& t) { return t.values(); }

FeatureMapD vec_to_map(const std::vector<double>& v) {
  FeatureMapD t(1, static_cast<int>(v.size()), 1, 1);
  std::copy(v.begin(), v.end(), t.data());
  return t;
}

RegisteredOperator conv_entry(std::string name, Shape4 in, Shape4 k, ConvGeometry g) {
  RegisteredOperator op;
  op.name = std::move(name);
  op.forward = [g](const DoubleInputs& x) { return conv2d<double>(x[0], x[1], bias_of(x[2]), g); };
  op.backward = [g](const DoubleInputs& x, const FeatureMapD& dy) {
    auto gr = conv2d_backward<double>(x[0], x[1], dy, g, true);
    return DoubleInputs{gr.input, gr.kernel, vec_to_map(gr.bias)};
  };
  op.sample_inputs = [in, k](std::mt19937_64& rng) {
    return DoubleInputs{random_map(rng, in), random_map(rng, k, 0.5),
                        random_map(rng, {1, k.n, 1, 1}, 0.5)};
  };
  return op;
}

std::vector<std::uint8_t> pattern_labels(std::size_t n) {
  std::vector<std::uint8_t> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = static_cast<std::uint8_t>((i * 7 + 3) % 5 < 2);
  return v;
}

std::vector<RegisteredOperator> build_registry() {
  std::vector<RegisteredOperator> ops;
  ops.push_back(conv_entry("conv2d_3x3", {1, 3, 6, 7}, {4, 3, 3, 3}, {1, 1}));
  ops.push_back(conv_entry("conv2d_3x3_stride2", {1, 2, 9, 8}, {3, 2, 3, 3}, {2, 1}));
  ops.push_back(conv_entry("conv2d_1x1", {2, 4, 5, 5}, {3, 4, 1, 1}, {1, 0}));

  {
    RegisteredOperator op;
    op.name = "linear";
    op.forward = [](const DoubleInputs& x) { return linear<double>(x[0], x[1], bias_of(x[2])); };
    op.backward = [](const DoubleInputs& x, const FeatureMapD& dy) {
      auto g = linear_backward<double>(x[0], x[1], dy);
      return DoubleInputs{g.input, g.kernel, vec_to_map(g.bias)};
    };
    op.sample_inputs = [](std::mt19937_64& rng) {
      return DoubleInputs{random_map(rng, {3, 2, 3, 3}), random_map(rng, {5, 2, 3, 3}, 0.3),
                          random_map(rng, {1, 5, 1, 1})};
    };
    ops.push_back(op);
  }
  {
    RegisteredOperator op;
    op.name = "relu";
    op.forward = [](const DoubleInputs& x) { return relu<double>(x[0]); };
    op.backward = [](const DoubleInputs& x, const FeatureMapD& dy) {
      return DoubleInputs{relu_backward<double>(x[0], dy)};
    };
    op.sample_inputs = [](std::mt19937_64& rng) {
      return DoubleInputs{away_from_zero(random_map(rng, {1, 3, 4, 5}), 1e-3)};
    };
    ops.push_back(op);
  }
  {
    RegisteredOperator op;
    op.name = "leaky_relu";
    op.forward = [](const DoubleInputs& x) { return leaky_relu<double>(x[0], 0.1); };
    op.backward = [](const DoubleInputs& x, const FeatureMapD& dy) {
      return DoubleInputs{leaky_relu_backward<double>(x[0], dy, 0.1)};
    };
    op.sample_inputs = [](std::mt19937_64& rng) {
      return DoubleInputs{away_from_zero(random_map(rng, {1, 3, 4, 5}), 1e-3)};
    };
    ops.push_back(op);
  }
  {
    RegisteredOperator op;
    op.name = "channel_softmax";
    op.forward = [](const DoubleInputs& x) { return channel_softmax<double>(x[0]); };
    op.backward = [](const DoubleInputs& x, const FeatureMapD& dy) {
      return DoubleInputs{channel_softmax_backward<double>(channel_softmax<double>(x[0]), dy)};
    };
    op.sample_inputs = [](std::mt19937_64& rng) {
      return DoubleInputs{random_map(rng, {2, 2, 4, 5}, 2.0)};
    };
    ops.push_back(op);
  }
  {
    RegisteredOperator op;
    op.name = "exp";
    op.forward = [](const DoubleInputs& x) { return exp_map<double>(x[0]); };
    op.backward = [](const DoubleInputs& x, const FeatureMapD& dy) {
      return DoubleInputs{exp_map_backward<double>(exp_map<double>(x[0]), dy)};
    };
    op.sample_inputs = [](std::mt19937_64& rng) {
      return DoubleInputs{random_map(rng, {1, 2, 4, 4})};
    };
    ops.push_back(op);
  }
  {
    RegisteredOperator op;
    op.name = "select_channel";
    op.forward = [](const DoubleInputs& x) { return select_channel<double>(x[0], 1); };
    op.backward = [](const DoubleInputs& x, const FeatureMapD& dy) {
      return DoubleInputs{select_channel_backward<double>(x[0].shape(), 1, dy)};
    };
    op.sample_inputs = [](std::mt19937_64& rng) {
      return DoubleInputs{random_map(rng, {1, 2, 3, 4})};
    };
    ops.push_back(op);
  }
  {
    RegisteredOperator op;
    op.name = "scale_by_map";
    op.forward = [](const DoubleInputs& x) { return scale_by_map<double>(x[0], x[1]); };
    op.backward = [](const DoubleInputs& x, const FeatureMapD& dy) {
      auto g = scale_by_map_backward<double>(x[0], x[1], dy);
      return DoubleInputs{g.input, g.scale};
    };
    op.sample_inputs = [](std::mt19937_64& rng) {
      return DoubleInputs{random_map(rng, {1, 4, 3, 5}), random_map(rng, {1, 1, 3, 5})};
    };
    ops.push_back(op);
  }
  {
    RegisteredOperator op;
    op.name = "bilinear_resize_up";
    op.forward = [](const DoubleInputs& x) { return bilinear_resize<double>(x[0], 9, 11); };
    op.backward = [](const DoubleInputs& x, const FeatureMapD& dy) {
      return DoubleInputs{bilinear_resize_backward<double>(dy, x[0].h(), x[0].w())};
    };
    op.sample_inputs = [](std::mt19937_64& rng) {
      return DoubleInputs{random_map(rng, {1, 2, 4, 5})};
    };
    ops.push_back(op);
  }
  {
    RegisteredOperator op;
    op.name = "bilinear_resize_down";
    op.forward = [](const DoubleInputs& x) { return bilinear_resize<double>(x[0], 3, 4); };
    op.backward = [](const DoubleInputs& x, const FeatureMapD& dy) {
      return DoubleInputs{bilinear_resize_backward<double>(dy, x[0].h(), x[0].w())};
    };
    op.sample_inputs = [](std::mt19937_64& rng) {
      return DoubleInputs{random_map(rng, {1, 2, 7, 9})};
    };
    ops.push_back(op);
  }
  {
    RegisteredOperator op;
    op.name = "upsample_nearest2x";
    op.forward = [](const DoubleInputs& x) { return upsample_nearest2x<double>(x[0]); };
    op.backward = [](const DoubleInputs&, const FeatureMapD& dy) {
      return DoubleInputs{upsample_nearest2x_backward<double>(dy)};
    };
    op.sample_inputs = [](std::mt19937_64& rng) {
      return DoubleInputs{random_map(rng, {1, 3, 3, 4})};
    };
    ops.push_back(op);
  }
  for (const int out : {7, 14}) {
    RegisteredOperator op;
    op.name = "roi_align_" + std::to_string(out);
    const AxisRect roi{3.3, 2.1, 27.9, 19.7};
    const RoiAlignParams p{0.25, out, out, 2};
    op.forward = [roi, p](const DoubleInputs& x) { return roi_align<double>(x[0], roi, p); };
    op.backward = [roi, p](const DoubleInputs& x, const FeatureMapD& dy) {
      FeatureMapD dx(x[0].shape());
      roi_align_backward<double>(dy, roi, p, dx);
      return DoubleInputs{dx};
    };
    op.sample_inputs = [](std::mt19937_64& rng) {
      return DoubleInputs{random_map(rng, {1, 2, 8, 8})};
    };
    ops.push_back(op);
  }
  {
    RegisteredOperator op;
    op.name = "softmax_cross_entropy_map";
    op.forward = [](const DoubleInputs& x) {
      const auto labels = pattern_labels(x[0].shape().plane());
      return scalar(softmax_cross_entropy_map<double>(x[0], labels, {}).loss);
    };
    op.backward = [](const DoubleInputs& x, const FeatureMapD& dy) {
      const auto labels = pattern_labels(x[0].shape().plane());
      auto r = softmax_cross_entropy_map<double>(x[0], labels, {});
      r.grad *= dy[0];
      return DoubleInputs{r.grad};
    };
    op.sample_inputs = [](std::mt19937_64& rng) {
      return DoubleInputs{random_map(rng, {1, 2, 5, 6}, 2.0)};
    };
    ops.push_back(op);
  }
  {
    RegisteredOperator op;
    op.name = "softmax_cross_entropy_rows";
    static const std::vector<int> labels{0, 1, 1, 0, 1};
    op.forward = [](const DoubleInputs& x) {
      return scalar(softmax_cross_entropy_rows<double>(x[0], labels).loss);
    };
    op.backward = [](const DoubleInputs& x, const FeatureMapD& dy) {
      auto r = softmax_cross_entropy_rows<double>(x[0], labels);
      r.grad *= dy[0];
      return DoubleInputs{r.grad};
    };
    op.sample_inputs = [](std::mt19937_64& rng) {
      return DoubleInputs{random_map(rng, {5, 2, 1, 1}, 2.0)};
    };
    ops.push_back(op);
  }
  {
    RegisteredOperator op;
    op.name = "sigmoid_bce";
    auto targets = [](std::size_t n) {
      std::vector<double> t(n);
      for (std::size_t i = 0; i < n; ++i) t[i] = (i % 3 == 0) ? 1.0 : (i % 3 == 1 ? 0.0 : 0.25);
      return t;
    };
    op.forward = [targets](const DoubleInputs& x) {
      return scalar(sigmoid_bce<double>(x[0], targets(x[0].size())).loss);
    };
    op.backward = [targets](const DoubleInputs& x, const FeatureMapD& dy) {
      auto r = sigmoid_bce<double>(x[0], targets(x[0].size()));
      r.grad *= dy[0];
      return DoubleInputs{r.grad};
    };
    op.sample_inputs = [](std::mt19937_64& rng) {
      return DoubleInputs{random_map(rng, {1, 1, 4, 4}, 2.0)};
    };
    ops.push_back(op);
  }
  {
    RegisteredOperator op;
    op.name = "smooth_l1";
    auto targets = [](std::size_t n) {
      std::vector<double> t(n);
      for (std::size_t i = 0; i < n; ++i) t[i] = 0.3 * std::sin(1.7 * double(i));
      return t;
    };
    op.forward = [targets](const DoubleInputs& x) {
      return scalar(smooth_l1<double>(x[0], targets(x[0].size()), 0.5, 3.0).loss);
    };
    op.backward = [targets](const DoubleInputs& x, const FeatureMapD& dy) {
      auto r = smooth_l1<double>(x[0], targets(x[0].size()), 0.5, 3.0);
      r.grad *= dy[0];
      return DoubleInputs{r.grad};
    };
    op.sample_inputs = [](std::mt19937_64& rng) {
      return DoubleInputs{random_map(rng, {2, 4, 1, 1})};
    };
    ops.push_back(op);
  }
  return ops;
}

}  // namespace

const std::vector<RegisteredOperator>& operator_registry() {
  static const std::vector<RegisteredOperator> registry = build_registry();
  return registry;
}

const RegisteredOperator& find_operator(const std::string& name) {
  for (const auto& op : operator_registry()) {
    if (op.name == name) return op;
  }
  throw std::out_of_range("no registered operator named '" + name + "'");
}

GradCheckReport grad_check(const RegisteredOperator& op, const DoubleInputs& point,
                           double tolerance, std::uint64_t projection_seed, double step) {
  const FeatureMapD y = op.forward(point);
  std::mt19937_64 rng(projection_seed);
  const FeatureMapD proj = random_map(rng, y.shape());
  const DoubleInputs analytic = op.backward(point, proj);
  if (analytic.size() != point.size()) {
    throw std::logic_error("grad_check: operator '" + op.name +
                           "' returned the wrong number of gradients");
  }

  auto objective = [&](const DoubleInputs& x) {
    const FeatureMapD out = op.forward(x);
    double acc = 0.0;
    for (std::size_t i = 0; i < out.size(); ++i) acc += out[i] * proj[i];
    return acc;
  };

  GradCheckReport report;
  DoubleInputs work = point;
  for (std::size_t a = 0; a < work.size(); ++a) {
    analytic[a].require_same_shape(point[a], "grad_check");
    for (std::size_t i = 0; i < work[a].size(); ++i) {
      const double orig = work[a][i];
      work[a][i] = orig + step;
      const double plus = objective(work);
      work[a][i] = orig - step;
      const double minus = objective(work);
      work[a][i] = orig;
      const double numeric = (plus - minus) / (2.0 * step);
      const double ana = analytic[a][i];
      const double scale = std::max({std::abs(ana), std::abs(numeric), 1.0});
      report.max_rel_error = std::max(report.max_rel_error, std::abs(ana - numeric) / scale);
      ++report.coordinates;
    }
  }
  report.passed = report.max_rel_error < tolerance;
  return report;
}

}  // namespace ctxdet
