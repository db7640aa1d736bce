// Copyright 2026 The SemStereo Desk Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Convolutions lower to im2col + GEMM. 2D convolution is the depth-1 case of
// the 3D geometry.

#include <algorithm>
#include <cmath>
#include <stdexcept>

// Small products would otherwise take Eigen's coefficient path, whose
// rounding depends on the buffer address.
#define EIGEN_GEMM_TO_COEFFBASED_THRESHOLD 0
#include <Eigen/Core>
#include <fmt/format.h>

#include "semstereo/ops.hpp"

namespace semstereo {

namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const RowMat<T>>;

struct ConvGeom {
  int64_t c = 0, d = 1, h = 0, w = 0;
  int64_t kd = 1, kh = 1, kw = 1;
  int64_t sd = 1, sh = 1, sw = 1;
  int64_t pd = 0, ph = 0, pw = 0;
  int64_t od = 1, oh = 0, ow = 0;

  int64_t rows() const { return c * kd * kh * kw; }
  int64_t cols() const { return od * oh * ow; }
  int64_t in_size() const { return c * d * h * w; }
  bool pointwise() const {
    return kd == 1 && kh == 1 && kw == 1 && sd == 1 && sh == 1 && sw == 1 &&
           pd == 0 && ph == 0 && pw == 0;
  }
  void Finish() {
    od = (d + 2 * pd - kd) / sd + 1;
    oh = (h + 2 * ph - kh) / sh + 1;
    ow = (w + 2 * pw - kw) / sw + 1;
  }
};

// Range of output indices o with 0 <= o*stride - pad + k < extent.
inline void ValidRange(int64_t out, int64_t stride, int64_t pad, int64_t k,
                       int64_t extent, int64_t* lo, int64_t* hi) {
  const int64_t off = k - pad;
  int64_t a = off >= 0 ? 0 : (-off + stride - 1) / stride;
  int64_t b = extent - off <= 0 ? 0 : (extent - off - 1) / stride + 1;
  *lo = std::min(a, out);
  *hi = std::clamp(b, *lo, out);
}

template <typename T>
void Im2Col(const T* x, const ConvGeom& g, T* col) {
  int64_t row = 0;
  const int64_t plane = g.od * g.oh * g.ow;
  for (int64_t c = 0; c < g.c; ++c) {
    for (int64_t kz = 0; kz < g.kd; ++kz) {
      int64_t z_lo, z_hi;
      ValidRange(g.od, g.sd, g.pd, kz, g.d, &z_lo, &z_hi);
      for (int64_t ky = 0; ky < g.kh; ++ky) {
        int64_t y_lo, y_hi;
        ValidRange(g.oh, g.sh, g.ph, ky, g.h, &y_lo, &y_hi);
        for (int64_t kx = 0; kx < g.kw; ++kx, ++row) {
          int64_t x_lo, x_hi;
          ValidRange(g.ow, g.sw, g.pw, kx, g.w, &x_lo, &x_hi);
          T* dst = col + row * plane;
          std::fill(dst, dst + plane, T(0));
          for (int64_t oz = z_lo; oz < z_hi; ++oz) {
            const int64_t iz = oz * g.sd - g.pd + kz;
            for (int64_t oy = y_lo; oy < y_hi; ++oy) {
              const int64_t iy = oy * g.sh - g.ph + ky;
              const T* src = x + ((c * g.d + iz) * g.h + iy) * g.w;
              T* out = dst + (oz * g.oh + oy) * g.ow;
              if (g.sw == 1) {
                const int64_t ix0 = x_lo - g.pw + kx;
                std::copy(src + ix0, src + ix0 + (x_hi - x_lo), out + x_lo);
              } else {
                for (int64_t ox = x_lo; ox < x_hi; ++ox) {
                  out[ox] = src[ox * g.sw - g.pw + kx];
                }
              }
            }
          }
        }
      }
    }
  }
}

// Accumulates columns back into the image (adjoint of Im2Col).
template <typename T>
void Col2Im(const T* col, const ConvGeom& g, T* x) {
  int64_t row = 0;
  const int64_t plane = g.od * g.oh * g.ow;
  for (int64_t c = 0; c < g.c; ++c) {
    for (int64_t kz = 0; kz < g.kd; ++kz) {
      int64_t z_lo, z_hi;
      ValidRange(g.od, g.sd, g.pd, kz, g.d, &z_lo, &z_hi);
      for (int64_t ky = 0; ky < g.kh; ++ky) {
        int64_t y_lo, y_hi;
        ValidRange(g.oh, g.sh, g.ph, ky, g.h, &y_lo, &y_hi);
        for (int64_t kx = 0; kx < g.kw; ++kx, ++row) {
          int64_t x_lo, x_hi;
          ValidRange(g.ow, g.sw, g.pw, kx, g.w, &x_lo, &x_hi);
          const T* src_row = col + row * plane;
          for (int64_t oz = z_lo; oz < z_hi; ++oz) {
            const int64_t iz = oz * g.sd - g.pd + kz;
            for (int64_t oy = y_lo; oy < y_hi; ++oy) {
              const int64_t iy = oy * g.sh - g.ph + ky;
              T* dst = x + ((c * g.d + iz) * g.h + iy) * g.w;
              const T* src = src_row + (oz * g.oh + oy) * g.ow;
              for (int64_t ox = x_lo; ox < x_hi; ++ox) {
                dst[ox * g.sw - g.pw + kx] += src[ox];
              }
            }
          }
        }
      }
    }
  }
}

// Shared forward/backward for Conv2d and Conv3d on [B, C, D, H, W] data.
template <typename T>
Tensor<T> ConvCore(const Tensor<T>& input, const Tensor<T>& weight,
                   const Tensor<T>& bias, const ConvGeom& g, int64_t batch,
                   int64_t c_out, Shape out_shape) {
  const int64_t k_rows = g.rows();
  const int64_t p = g.cols();
  const auto& x = input.vec();
  std::vector<T> out(batch * c_out * p);
  std::vector<T> col;
  if (!g.pointwise()) col.resize(k_rows * p);
  ConstMatMap<T> wm(weight.vec().data(), c_out, k_rows);
  for (int64_t n = 0; n < batch; ++n) {
    const T* xn = x.data() + n * g.in_size();
    const T* cols = xn;
    if (!g.pointwise()) {
      Im2Col(xn, g, col.data());
      cols = col.data();
    }
    MatMap<T> om(out.data() + n * c_out * p, c_out, p);
    om.noalias() = wm * ConstMatMap<T>(cols, k_rows, p);
    if (bias.defined()) {
      const auto& bv = bias.vec();
      for (int64_t o = 0; o < c_out; ++o) om.row(o).array() += bv[o];
    }
  }
  return MakeResult<T>(
      std::move(out_shape), std::move(out), {&input, &weight, &bias},
      [input, weight, bias, g, batch, c_out](TensorNode<T>& self) {
        const int64_t k_rows = g.rows();
        const int64_t p = g.cols();
        const auto& x = input.vec();
        ConstMatMap<T> wm(weight.vec().data(), c_out, k_rows);
        std::vector<T> col;
        std::vector<T> gcol;
        if (!g.pointwise()) {
          col.resize(k_rows * p);
          gcol.resize(k_rows * p);
        }
        std::vector<T>* gx =
            input.requires_grad() ? &input.node().EnsureGrad() : nullptr;
        std::vector<T>* gw =
            weight.requires_grad() ? &weight.node().EnsureGrad() : nullptr;
        std::vector<T>* gb = bias.defined() && bias.requires_grad()
                                 ? &bias.node().EnsureGrad()
                                 : nullptr;
        for (int64_t n = 0; n < batch; ++n) {
          ConstMatMap<T> gout(self.grad.data() + n * c_out * p, c_out, p);
          if (gb) {
            // Plain loop: a vectorized sum peels by address.
            for (int64_t o = 0; o < c_out; ++o) {
              const T* row = self.grad.data() + (n * c_out + o) * p;
              T acc = 0;
              for (int64_t i = 0; i < p; ++i) acc += row[i];
              (*gb)[o] += acc;
            }
          }
          const T* xn = x.data() + n * g.in_size();
          if (gw) {
            const T* cols = xn;
            if (!g.pointwise()) {
              Im2Col(xn, g, col.data());
              cols = col.data();
            }
            MatMap<T> gwm(gw->data(), c_out, k_rows);
            gwm.noalias() += gout * ConstMatMap<T>(cols, k_rows, p).transpose();
          }
          if (gx) {
            T* gxn = gx->data() + n * g.in_size();
            if (g.pointwise()) {
              MatMap<T>(gxn, k_rows, p).noalias() += wm.transpose() * gout;
            } else {
              MatMap<T>(gcol.data(), k_rows, p).noalias() =
                  wm.transpose() * gout;
              Col2Im(gcol.data(), g, gxn);
            }
          }
        }
      });
}

void CheckBias(const Shape& bias_shape, int64_t c_out, const char* op) {
  if (bias_shape != Shape{c_out}) {
    throw std::invalid_argument(fmt::format("{}: bias {} expected [{}]", op,
                                            ShapeString(bias_shape), c_out));
  }
}

}  // namespace

template <typename T>
Tensor<T> Conv2d(const Tensor<T>& input, const Tensor<T>& weight,
                 const Tensor<T>& bias, int stride, int padding) {
  const bool batched = input.rank() == 4;
  if (!batched && input.rank() != 3) {
    throw std::invalid_argument(fmt::format(
        "conv2d: input {} must be [C,H,W] or [B,C,H,W]",
        ShapeString(input.shape())));
  }
  if (weight.rank() != 4 || weight.shape()[2] != weight.shape()[3]) {
    throw std::invalid_argument(fmt::format(
        "conv2d: weight {} must be [C_out,C_in,k,k]",
        ShapeString(weight.shape())));
  }
  if (stride < 1 || padding < 0) {
    throw std::invalid_argument("conv2d: stride >= 1 and padding >= 0");
  }
  const int off = batched ? 1 : 0;
  const int64_t batch = batched ? input.shape()[0] : 1;
  ConvGeom g;
  g.c = input.shape()[off];
  g.h = input.shape()[off + 1];
  g.w = input.shape()[off + 2];
  if (g.c != weight.shape()[1]) {
    throw std::invalid_argument(fmt::format(
        "conv2d: input {} has {} channels but weight {} expects {}",
        ShapeString(input.shape()), g.c, ShapeString(weight.shape()),
        weight.shape()[1]));
  }
  const int64_t k = weight.shape()[2];
  g.kh = g.kw = k;
  g.sh = g.sw = stride;
  g.ph = g.pw = padding;
  if (g.h + 2 * padding < k || g.w + 2 * padding < k) {
    throw std::invalid_argument(fmt::format(
        "conv2d: padded input {} smaller than kernel {}",
        ShapeString(input.shape()), k));
  }
  g.Finish();
  const int64_t c_out = weight.shape()[0];
  if (bias.defined()) CheckBias(bias.shape(), c_out, "conv2d");
  Shape out_shape = batched ? Shape{batch, c_out, g.oh, g.ow}
                            : Shape{c_out, g.oh, g.ow};
  return ConvCore(input, weight, bias, g, batch, c_out, std::move(out_shape));
}

template <typename T>
Tensor<T> Conv3d(const Tensor<T>& input, const Tensor<T>& weight,
                 const Tensor<T>& bias, int stride, int padding) {
  const bool batched = input.rank() == 5;
  if (!batched && input.rank() != 4) {
    throw std::invalid_argument(fmt::format(
        "conv3d: input {} must be [C,D,H,W] or [B,C,D,H,W]",
        ShapeString(input.shape())));
  }
  if (weight.rank() != 5 || weight.shape()[2] != weight.shape()[3] ||
      weight.shape()[3] != weight.shape()[4]) {
    throw std::invalid_argument(fmt::format(
        "conv3d: weight {} must be [C_out,C_in,k,k,k]",
        ShapeString(weight.shape())));
  }
  if (stride < 1 || padding < 0) {
    throw std::invalid_argument("conv3d: stride >= 1 and padding >= 0");
  }
  const int off = batched ? 1 : 0;
  const int64_t batch = batched ? input.shape()[0] : 1;
  ConvGeom g;
  g.c = input.shape()[off];
  g.d = input.shape()[off + 1];
  g.h = input.shape()[off + 2];
  g.w = input.shape()[off + 3];
  if (g.c != weight.shape()[1]) {
    throw std::invalid_argument(fmt::format(
        "conv3d: input {} has {} channels but weight {} expects {}",
        ShapeString(input.shape()), g.c, ShapeString(weight.shape()),
        weight.shape()[1]));
  }
  const int64_t k = weight.shape()[2];
  g.kd = g.kh = g.kw = k;
  g.sd = g.sh = g.sw = stride;
  g.pd = g.ph = g.pw = padding;
  if (g.d + 2 * padding < k || g.h + 2 * padding < k ||
      g.w + 2 * padding < k) {
    throw std::invalid_argument(fmt::format(
        "conv3d: padded input {} smaller than kernel {}",
        ShapeString(input.shape()), k));
  }
  g.Finish();
  const int64_t c_out = weight.shape()[0];
  if (bias.defined()) CheckBias(bias.shape(), c_out, "conv3d");
  Shape out_shape = batched ? Shape{batch, c_out, g.od, g.oh, g.ow}
                            : Shape{c_out, g.od, g.oh, g.ow};
  return ConvCore(input, weight, bias, g, batch, c_out, std::move(out_shape));
}

template <typename T>
Tensor<T> ConvTranspose2d(const Tensor<T>& input, const Tensor<T>& weight,
                          const Tensor<T>& bias, int stride) {
  if (stride < 1) {
    throw std::invalid_argument(
        fmt::format("conv_transpose2d: stride {} must be positive", stride));
  }
  const bool batched = input.rank() == 4;
  if (!batched && input.rank() != 3) {
    throw std::invalid_argument("conv_transpose2d: input [C,H,W] or [B,C,H,W]");
  }
  if (weight.rank() != 4 || weight.shape()[2] != weight.shape()[3]) {
    throw std::invalid_argument(fmt::format(
        "conv_transpose2d: weight {} must be [C_in,C_out,k,k]",
        ShapeString(weight.shape())));
  }
  const int off = batched ? 1 : 0;
  const int64_t batch = batched ? input.shape()[0] : 1;
  const int64_t c_in = input.shape()[off];
  const int64_t h = input.shape()[off + 1];
  const int64_t w = input.shape()[off + 2];
  if (c_in != weight.shape()[0]) {
    throw std::invalid_argument(fmt::format(
        "conv_transpose2d: input {} has {} channels but weight {} expects {}",
        ShapeString(input.shape()), c_in, ShapeString(weight.shape()),
        weight.shape()[0]));
  }
  const int64_t c_out = weight.shape()[1];
  const int64_t k = weight.shape()[2];
  if (bias.defined()) CheckBias(bias.shape(), c_out, "conv_transpose2d");

  // The output image seen as the input of the adjoint convolution.
  ConvGeom g;
  g.c = c_out;
  g.h = (h - 1) * stride + k;
  g.w = (w - 1) * stride + k;
  g.kh = g.kw = k;
  g.sh = g.sw = stride;
  g.Finish();  // oh == h, ow == w
  const int64_t k_rows = g.rows();
  const int64_t p = h * w;
  std::vector<T> out(batch * g.in_size(), T(0));
  std::vector<T> col(k_rows * p);
  ConstMatMap<T> wm(weight.vec().data(), c_in, k_rows);
  for (int64_t n = 0; n < batch; ++n) {
    ConstMatMap<T> xm(input.vec().data() + n * c_in * p, c_in, p);
    MatMap<T>(col.data(), k_rows, p).noalias() = wm.transpose() * xm;
    T* on = out.data() + n * g.in_size();
    Col2Im(col.data(), g, on);
    if (bias.defined()) {
      const int64_t plane = g.h * g.w;
      for (int64_t o = 0; o < c_out; ++o) {
        for (int64_t i = 0; i < plane; ++i) on[o * plane + i] += bias.vec()[o];
      }
    }
  }
  Shape out_shape = batched ? Shape{batch, c_out, g.h, g.w}
                            : Shape{c_out, g.h, g.w};
  return MakeResult<T>(
      std::move(out_shape), std::move(out), {&input, &weight, &bias},
      [input, weight, bias, g, batch, c_in, c_out, p](TensorNode<T>& self) {
        const int64_t k_rows = g.rows();
        ConstMatMap<T> wm(weight.vec().data(), c_in, k_rows);
        std::vector<T> gcol(k_rows * p);
        std::vector<T>* gx =
            input.requires_grad() ? &input.node().EnsureGrad() : nullptr;
        std::vector<T>* gw =
            weight.requires_grad() ? &weight.node().EnsureGrad() : nullptr;
        std::vector<T>* gb = bias.defined() && bias.requires_grad()
                                 ? &bias.node().EnsureGrad()
                                 : nullptr;
        const int64_t plane = g.h * g.w;
        for (int64_t n = 0; n < batch; ++n) {
          const T* gout = self.grad.data() + n * g.in_size();
          if (gb) {
            for (int64_t o = 0; o < c_out; ++o) {
              T s = 0;
              for (int64_t i = 0; i < plane; ++i) s += gout[o * plane + i];
              (*gb)[o] += s;
            }
          }
          if (!gx && !gw) continue;
          Im2Col(gout, g, gcol.data());
          ConstMatMap<T> gcm(gcol.data(), k_rows, p);
          if (gx) {
            MatMap<T>(gx->data() + n * c_in * p, c_in, p).noalias() +=
                wm * gcm;
          }
          if (gw) {
            ConstMatMap<T> xm(input.vec().data() + n * c_in * p, c_in, p);
            MatMap<T>(gw->data(), c_in, k_rows).noalias() +=
                xm * gcm.transpose();
          }
        }
      });
}

template <typename T>
Tensor<T> BatchNorm(const Tensor<T>& input, const Tensor<T>& gamma,
                    const Tensor<T>& beta, BatchNormBuffers<T>& buffers,
                    NormMode mode, T momentum, T eps) {
  if (input.rank() < 2) {
    throw std::invalid_argument("batch_norm: input must be [B,C,...]");
  }
  const int64_t b = input.shape()[0];
  const int64_t c = input.shape()[1];
  const int64_t inner = input.numel() / (b * c);
  const Shape channel_shape{c};
  if (gamma.shape() != channel_shape || beta.shape() != channel_shape ||
      buffers.running_mean.shape() != channel_shape ||
      buffers.running_var.shape() != channel_shape) {
    throw std::invalid_argument(fmt::format(
        "batch_norm: affine/buffer shapes must be [{}] for input {}", c,
        ShapeString(input.shape())));
  }
  const int64_t count = b * inner;
  if (count < 1) throw std::invalid_argument("batch_norm: empty input");
  const auto& x = input.vec();
  std::vector<T> mean(c), inv_std(c);
  if (mode == NormMode::kTrain) {
    auto rm = buffers.running_mean.mutable_data();
    auto rv = buffers.running_var.mutable_data();
    for (int64_t ch = 0; ch < c; ++ch) {
      double s = 0;
      for (int64_t n = 0; n < b; ++n) {
        const T* src = x.data() + (n * c + ch) * inner;
        for (int64_t i = 0; i < inner; ++i) s += src[i];
      }
      const double m = s / static_cast<double>(count);
      double ss = 0;
      for (int64_t n = 0; n < b; ++n) {
        const T* src = x.data() + (n * c + ch) * inner;
        for (int64_t i = 0; i < inner; ++i) {
          const double dv = src[i] - m;
          ss += dv * dv;
        }
      }
      const double var = ss / static_cast<double>(count);
      mean[ch] = static_cast<T>(m);
      inv_std[ch] = static_cast<T>(1.0 / std::sqrt(var + static_cast<double>(eps)));
      const double unbiased =
          count > 1 ? ss / static_cast<double>(count - 1) : var;
      rm[ch] = (T(1) - momentum) * rm[ch] + momentum * static_cast<T>(m);
      rv[ch] = (T(1) - momentum) * rv[ch] + momentum * static_cast<T>(unbiased);
    }
  } else {
    const auto& rm = buffers.running_mean.vec();
    const auto& rv = buffers.running_var.vec();
    for (int64_t ch = 0; ch < c; ++ch) {
      mean[ch] = rm[ch];
      inv_std[ch] = T(1) / std::sqrt(rv[ch] + eps);
    }
  }
  std::vector<T> xhat(x.size());
  std::vector<T> out(x.size());
  const auto& gv = gamma.vec();
  const auto& bv = beta.vec();
  for (int64_t n = 0; n < b; ++n) {
    for (int64_t ch = 0; ch < c; ++ch) {
      const int64_t base = (n * c + ch) * inner;
      for (int64_t i = 0; i < inner; ++i) {
        const T v = (x[base + i] - mean[ch]) * inv_std[ch];
        xhat[base + i] = v;
        out[base + i] = gv[ch] * v + bv[ch];
      }
    }
  }
  const bool train = mode == NormMode::kTrain;
  return MakeResult<T>(
      input.shape(), std::move(out), {&input, &gamma, &beta},
      [input, gamma, beta, xhat = std::move(xhat), inv_std, b, c, inner, count,
       train](TensorNode<T>& self) {
        const auto& g = self.grad;
        const auto& gv = gamma.vec();
        std::vector<T> sum_g(c, T(0)), sum_gx(c, T(0));
        for (int64_t n = 0; n < b; ++n) {
          for (int64_t ch = 0; ch < c; ++ch) {
            const int64_t base = (n * c + ch) * inner;
            T s0 = 0, s1 = 0;
            for (int64_t i = 0; i < inner; ++i) {
              s0 += g[base + i];
              s1 += g[base + i] * xhat[base + i];
            }
            sum_g[ch] += s0;
            sum_gx[ch] += s1;
          }
        }
        if (gamma.requires_grad()) {
          auto& gg = gamma.node().EnsureGrad();
          for (int64_t ch = 0; ch < c; ++ch) gg[ch] += sum_gx[ch];
        }
        if (beta.requires_grad()) {
          auto& gb = beta.node().EnsureGrad();
          for (int64_t ch = 0; ch < c; ++ch) gb[ch] += sum_g[ch];
        }
        if (!input.requires_grad()) return;
        auto& gx = input.node().EnsureGrad();
        const T inv_count = T(1) / static_cast<T>(count);
        for (int64_t n = 0; n < b; ++n) {
          for (int64_t ch = 0; ch < c; ++ch) {
            const int64_t base = (n * c + ch) * inner;
            const T scale = gv[ch] * inv_std[ch];
            if (train) {
              const T mg = sum_g[ch] * inv_count;
              const T mgx = sum_gx[ch] * inv_count;
              for (int64_t i = 0; i < inner; ++i) {
                gx[base + i] +=
                    scale * (g[base + i] - mg - xhat[base + i] * mgx);
              }
            } else {
              for (int64_t i = 0; i < inner; ++i) {
                gx[base + i] += scale * g[base + i];
              }
            }
          }
        }
      });
}

#define SEMSTEREO_INSTANTIATE_CONV(T)                                         \
  template Tensor<T> Conv2d(const Tensor<T>&, const Tensor<T>&,               \
                            const Tensor<T>&, int, int);                      \
  template Tensor<T> Conv3d(const Tensor<T>&, const Tensor<T>&,               \
                            const Tensor<T>&, int, int);                      \
  template Tensor<T> ConvTranspose2d(const Tensor<T>&, const Tensor<T>&,      \
                                     const Tensor<T>&, int);                  \
  template Tensor<T> BatchNorm(const Tensor<T>&, const Tensor<T>&,            \
                               const Tensor<T>&, BatchNormBuffers<T>&,        \
                               NormMode, T, T);

SEMSTEREO_INSTANTIATE_CONV(float)
SEMSTEREO_INSTANTIATE_CONV(double)

}  // namespace semstereo
