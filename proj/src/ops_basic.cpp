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

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <utility>

#include <fmt/format.h>

#include "semstereo/ops.hpp"

namespace semstereo {

namespace {

struct BroadcastPlan {
  Shape out;
  std::vector<int64_t> a_strides;
  std::vector<int64_t> b_strides;
  bool same = false;
};

std::vector<int64_t> ContiguousStrides(const Shape& shape) {
  std::vector<int64_t> strides(shape.size(), 1);
  for (int d = static_cast<int>(shape.size()) - 2; d >= 0; --d) {
    strides[d] = strides[d + 1] * shape[d + 1];
  }
  return strides;
}

BroadcastPlan PlanBroadcast(const Shape& a, const Shape& b, const char* op) {
  BroadcastPlan plan;
  if (a == b) {
    plan.out = a;
    plan.same = true;
    return plan;
  }
  if (a.size() != b.size()) {
    throw std::invalid_argument(fmt::format("{}: rank mismatch {} vs {}", op,
                                            ShapeString(a), ShapeString(b)));
  }
  const auto as = ContiguousStrides(a);
  const auto bs = ContiguousStrides(b);
  plan.out.resize(a.size());
  plan.a_strides.resize(a.size());
  plan.b_strides.resize(a.size());
  for (size_t d = 0; d < a.size(); ++d) {
    if (a[d] != b[d] && a[d] != 1 && b[d] != 1) {
      throw std::invalid_argument(fmt::format(
          "{}: shapes {} and {} do not broadcast", op, ShapeString(a),
          ShapeString(b)));
    }
    plan.out[d] = std::max(a[d], b[d]);
    plan.a_strides[d] = a[d] == 1 ? 0 : as[d];
    plan.b_strides[d] = b[d] == 1 ? 0 : bs[d];
  }
  return plan;
}

// f(out_index, a_index, b_index) over the broadcast output.
template <typename F>
void ForEachBroadcast(const BroadcastPlan& plan, F&& f) {
  if (plan.same) {
    const int64_t n = NumElements(plan.out);
    for (int64_t i = 0; i < n; ++i) f(i, i, i);
    return;
  }
  const int r = static_cast<int>(plan.out.size());
  const int64_t n = NumElements(plan.out);
  const int64_t inner = plan.out[r - 1];
  const int64_t ia = plan.a_strides[r - 1];
  const int64_t ib = plan.b_strides[r - 1];
  std::vector<int64_t> idx(r, 0);
  int64_t ai = 0;
  int64_t bi = 0;
  for (int64_t o = 0; o < n; o += inner) {
    for (int64_t k = 0; k < inner; ++k) f(o + k, ai + k * ia, bi + k * ib);
    for (int d = r - 2; d >= 0; --d) {
      ++idx[d];
      ai += plan.a_strides[d];
      bi += plan.b_strides[d];
      if (idx[d] < plan.out[d]) break;
      ai -= plan.a_strides[d] * plan.out[d];
      bi -= plan.b_strides[d] * plan.out[d];
      idx[d] = 0;
    }
  }
}

struct AxisSplit {
  int64_t outer = 1;
  int64_t extent = 1;
  int64_t inner = 1;
};

AxisSplit SplitAt(const Shape& shape, int axis, const char* op) {
  const int r = static_cast<int>(shape.size());
  if (axis < 0) axis += r;
  if (axis < 0 || axis >= r) {
    throw std::invalid_argument(
        fmt::format("{}: axis {} invalid for shape {}", op, axis,
                    ShapeString(shape)));
  }
  AxisSplit s;
  for (int d = 0; d < axis; ++d) s.outer *= shape[d];
  s.extent = shape[axis];
  for (int d = axis + 1; d < r; ++d) s.inner *= shape[d];
  return s;
}

int NormalizeAxis(int axis, int rank) { return axis < 0 ? axis + rank : axis; }

void RequireSameShape(const Shape& a, const Shape& b, const char* op) {
  if (a != b) {
    throw std::invalid_argument(fmt::format("{}: shape {} vs {}", op,
                                            ShapeString(a), ShapeString(b)));
  }
}

}  // namespace

// ---- elementwise ----------------------------------------------------------

template <typename T>
Tensor<T> Add(const Tensor<T>& a, const Tensor<T>& b) {
  auto plan = PlanBroadcast(a.shape(), b.shape(), "add");
  std::vector<T> out(NumElements(plan.out));
  const auto& av = a.vec();
  const auto& bv = b.vec();
  ForEachBroadcast(plan, [&](int64_t o, int64_t i, int64_t j) {
    out[o] = av[i] + bv[j];
  });
  return MakeResult<T>(plan.out, std::move(out), {&a, &b},
                       [a, b, plan](TensorNode<T>& self) {
                         const auto& g = self.grad;
                         if (a.requires_grad()) {
                           auto& ga = a.node().EnsureGrad();
                           ForEachBroadcast(plan, [&](int64_t o, int64_t i,
                                                      int64_t) {
                             ga[i] += g[o];
                           });
                         }
                         if (b.requires_grad()) {
                           auto& gb = b.node().EnsureGrad();
                           ForEachBroadcast(plan, [&](int64_t o, int64_t,
                                                      int64_t j) {
                             gb[j] += g[o];
                           });
                         }
                       });
}

template <typename T>
Tensor<T> Sub(const Tensor<T>& a, const Tensor<T>& b) {
  auto plan = PlanBroadcast(a.shape(), b.shape(), "sub");
  std::vector<T> out(NumElements(plan.out));
  const auto& av = a.vec();
  const auto& bv = b.vec();
  ForEachBroadcast(plan, [&](int64_t o, int64_t i, int64_t j) {
    out[o] = av[i] - bv[j];
  });
  return MakeResult<T>(plan.out, std::move(out), {&a, &b},
                       [a, b, plan](TensorNode<T>& self) {
                         const auto& g = self.grad;
                         if (a.requires_grad()) {
                           auto& ga = a.node().EnsureGrad();
                           ForEachBroadcast(plan, [&](int64_t o, int64_t i,
                                                      int64_t) {
                             ga[i] += g[o];
                           });
                         }
                         if (b.requires_grad()) {
                           auto& gb = b.node().EnsureGrad();
                           ForEachBroadcast(plan, [&](int64_t o, int64_t,
                                                      int64_t j) {
                             gb[j] -= g[o];
                           });
                         }
                       });
}

template <typename T>
Tensor<T> Mul(const Tensor<T>& a, const Tensor<T>& b) {
  auto plan = PlanBroadcast(a.shape(), b.shape(), "mul");
  std::vector<T> out(NumElements(plan.out));
  const auto& av = a.vec();
  const auto& bv = b.vec();
  ForEachBroadcast(plan, [&](int64_t o, int64_t i, int64_t j) {
    out[o] = av[i] * bv[j];
  });
  return MakeResult<T>(
      plan.out, std::move(out), {&a, &b}, [a, b, plan](TensorNode<T>& self) {
        const auto& g = self.grad;
        const auto& av = a.vec();
        const auto& bv = b.vec();
        if (a.requires_grad()) {
          auto& ga = a.node().EnsureGrad();
          ForEachBroadcast(plan, [&](int64_t o, int64_t i, int64_t j) {
            ga[i] += g[o] * bv[j];
          });
        }
        if (b.requires_grad()) {
          auto& gb = b.node().EnsureGrad();
          ForEachBroadcast(plan, [&](int64_t o, int64_t i, int64_t j) {
            gb[j] += g[o] * av[i];
          });
        }
      });
}

template <typename T>
Tensor<T> Scale(const Tensor<T>& a, T factor) {
  std::vector<T> out(a.vec());
  for (T& v : out) v *= factor;
  return MakeResult<T>(a.shape(), std::move(out), {&a},
                       [a, factor](TensorNode<T>& self) {
                         auto& ga = a.node().EnsureGrad();
                         for (size_t i = 0; i < ga.size(); ++i) {
                           ga[i] += factor * self.grad[i];
                         }
                       });
}

template <typename T>
Tensor<T> AddScalar(const Tensor<T>& a, T value) {
  std::vector<T> out(a.vec());
  for (T& v : out) v += value;
  return MakeResult<T>(a.shape(), std::move(out), {&a},
                       [a](TensorNode<T>& self) {
                         auto& ga = a.node().EnsureGrad();
                         for (size_t i = 0; i < ga.size(); ++i) {
                           ga[i] += self.grad[i];
                         }
                       });
}

template <typename T>
Tensor<T> Relu(const Tensor<T>& a) {
  std::vector<T> out(a.vec());
  for (T& v : out) v = v > T(0) ? v : T(0);
  return MakeResult<T>(a.shape(), std::move(out), {&a},
                       [a](TensorNode<T>& self) {
                         auto& ga = a.node().EnsureGrad();
                         const auto& x = a.vec();
                         for (size_t i = 0; i < ga.size(); ++i) {
                           if (x[i] > T(0)) ga[i] += self.grad[i];
                         }
                       });
}

template <typename T>
Tensor<T> Sigmoid(const Tensor<T>& a) {
  std::vector<T> out(a.vec());
  for (T& v : out) v = T(1) / (T(1) + std::exp(-v));
  return MakeResult<T>(a.shape(), std::move(out), {&a},
                       [a](TensorNode<T>& self) {
                         auto& ga = a.node().EnsureGrad();
                         const auto& y = self.data;
                         for (size_t i = 0; i < ga.size(); ++i) {
                           ga[i] += self.grad[i] * y[i] * (T(1) - y[i]);
                         }
                       });
}

template <typename T>
Tensor<T> Activate(const Tensor<T>& a, Activation kind) {
  return kind == Activation::kRelu ? Relu(a) : Sigmoid(a);
}

template <typename T>
Tensor<T> Softmax(const Tensor<T>& a, int axis) {
  const AxisSplit s = SplitAt(a.shape(), axis, "softmax");
  const auto& x = a.vec();
  std::vector<T> out(x.size());
  for (int64_t o = 0; o < s.outer; ++o) {
    for (int64_t i = 0; i < s.inner; ++i) {
      const int64_t base = o * s.extent * s.inner + i;
      T peak = x[base];
      for (int64_t j = 1; j < s.extent; ++j) {
        peak = std::max(peak, x[base + j * s.inner]);
      }
      T total = 0;
      for (int64_t j = 0; j < s.extent; ++j) {
        const T e = std::exp(x[base + j * s.inner] - peak);
        out[base + j * s.inner] = e;
        total += e;
      }
      const T inv = T(1) / total;
      for (int64_t j = 0; j < s.extent; ++j) out[base + j * s.inner] *= inv;
    }
  }
  return MakeResult<T>(
      a.shape(), std::move(out), {&a}, [a, s](TensorNode<T>& self) {
        auto& ga = a.node().EnsureGrad();
        const auto& y = self.data;
        const auto& g = self.grad;
        for (int64_t o = 0; o < s.outer; ++o) {
          for (int64_t i = 0; i < s.inner; ++i) {
            const int64_t base = o * s.extent * s.inner + i;
            T dot = 0;
            for (int64_t j = 0; j < s.extent; ++j) {
              dot += g[base + j * s.inner] * y[base + j * s.inner];
            }
            for (int64_t j = 0; j < s.extent; ++j) {
              const int64_t k = base + j * s.inner;
              ga[k] += y[k] * (g[k] - dot);
            }
          }
        }
      });
}

// ---- reductions and layout ------------------------------------------------

template <typename T>
Tensor<T> Sum(const Tensor<T>& a) {
  T total = 0;
  for (T v : a.vec()) total += v;
  return MakeResult<T>({1}, {total}, {&a}, [a](TensorNode<T>& self) {
    auto& ga = a.node().EnsureGrad();
    for (T& v : ga) v += self.grad[0];
  });
}

template <typename T>
Tensor<T> Mean(const Tensor<T>& a) {
  const T inv = T(1) / static_cast<T>(a.numel());
  T total = 0;
  for (T v : a.vec()) total += v;
  return MakeResult<T>({1}, {total * inv}, {&a},
                       [a, inv](TensorNode<T>& self) {
                         auto& ga = a.node().EnsureGrad();
                         for (T& v : ga) v += self.grad[0] * inv;
                       });
}

template <typename T>
Tensor<T> Concat(const std::vector<Tensor<T>>& parts, int axis) {
  if (parts.empty()) throw std::invalid_argument("concat: no inputs");
  const int r = parts[0].rank();
  axis = NormalizeAxis(axis, r);
  Shape out_shape = parts[0].shape();
  out_shape[axis] = 0;
  for (const auto& p : parts) {
    Shape probe = p.shape();
    if (static_cast<int>(probe.size()) != r) {
      throw std::invalid_argument("concat: rank mismatch");
    }
    out_shape[axis] += probe[axis];
    probe[axis] = parts[0].shape()[axis];
    if (probe != parts[0].shape()) {
      throw std::invalid_argument(fmt::format(
          "concat: {} incompatible with {} along axis {}",
          ShapeString(p.shape()), ShapeString(parts[0].shape()), axis));
    }
  }
  const AxisSplit s = SplitAt(out_shape, axis, "concat");
  std::vector<T> out(NumElements(out_shape));
  std::vector<int64_t> offsets;
  int64_t offset = 0;
  for (const auto& p : parts) {
    offsets.push_back(offset);
    const int64_t chunk = p.shape()[axis] * s.inner;
    const auto& src = p.vec();
    for (int64_t o = 0; o < s.outer; ++o) {
      std::copy_n(src.begin() + o * chunk, chunk,
                  out.begin() + o * s.extent * s.inner + offset * s.inner);
    }
    offset += p.shape()[axis];
  }
  return MakeResult<T>(
      out_shape, std::move(out), parts,
      [parts, offsets, s, axis](TensorNode<T>& self) {
        for (size_t k = 0; k < parts.size(); ++k) {
          if (!parts[k].requires_grad()) continue;
          auto& gp = parts[k].node().EnsureGrad();
          const int64_t chunk = parts[k].shape()[axis] * s.inner;
          for (int64_t o = 0; o < s.outer; ++o) {
            const T* src =
                self.grad.data() + o * s.extent * s.inner + offsets[k] * s.inner;
            T* dst = gp.data() + o * chunk;
            for (int64_t i = 0; i < chunk; ++i) dst[i] += src[i];
          }
        }
      });
}

template <typename T>
Tensor<T> Reshape(const Tensor<T>& a, Shape shape) {
  if (NumElements(shape) != a.numel()) {
    throw std::invalid_argument(fmt::format("reshape: {} to {}",
                                            ShapeString(a.shape()),
                                            ShapeString(shape)));
  }
  return MakeResult<T>(std::move(shape), a.vec(), {&a},
                       [a](TensorNode<T>& self) {
                         auto& ga = a.node().EnsureGrad();
                         for (size_t i = 0; i < ga.size(); ++i) {
                           ga[i] += self.grad[i];
                         }
                       });
}

template <typename T>
Tensor<T> Narrow(const Tensor<T>& a, int axis, int64_t start, int64_t length) {
  const AxisSplit s = SplitAt(a.shape(), axis, "narrow");
  if (start < 0 || length < 0 || start + length > s.extent) {
    throw std::invalid_argument(fmt::format(
        "narrow: [{}, {}) outside axis of extent {}", start, start + length,
        s.extent));
  }
  Shape out_shape = a.shape();
  out_shape[NormalizeAxis(axis, a.rank())] = length;
  std::vector<T> out(s.outer * length * s.inner);
  const auto& x = a.vec();
  for (int64_t o = 0; o < s.outer; ++o) {
    std::copy_n(x.begin() + (o * s.extent + start) * s.inner, length * s.inner,
                out.begin() + o * length * s.inner);
  }
  return MakeResult<T>(out_shape, std::move(out), {&a},
                       [a, s, start, length](TensorNode<T>& self) {
                         auto& ga = a.node().EnsureGrad();
                         const int64_t chunk = length * s.inner;
                         for (int64_t o = 0; o < s.outer; ++o) {
                           T* dst = ga.data() + (o * s.extent + start) * s.inner;
                           const T* src = self.grad.data() + o * chunk;
                           for (int64_t i = 0; i < chunk; ++i) dst[i] += src[i];
                         }
                       });
}

// ---- resampling -----------------------------------------------------------

namespace {

struct LinearTap {
  int64_t i0;
  int64_t i1;
  double w0;
  double w1;
};

// Align-corners-false source taps for an integer upsampling factor.
std::vector<LinearTap> UpsampleTaps(int64_t in_size, int factor) {
  std::vector<LinearTap> taps(in_size * factor);
  for (int64_t o = 0; o < in_size * factor; ++o) {
    double src = (static_cast<double>(o) + 0.5) / factor - 0.5;
    if (src < 0) src = 0;
    int64_t i0 = static_cast<int64_t>(std::floor(src));
    if (i0 > in_size - 1) i0 = in_size - 1;
    const int64_t i1 = std::min(i0 + 1, in_size - 1);
    const double frac = src - static_cast<double>(i0);
    taps[o] = {i0, i1, 1.0 - frac, frac};
  }
  return taps;
}

}  // namespace

template <typename T>
Tensor<T> BilinearUpsample(const Tensor<T>& input, int factor) {
  if (factor < 1) {
    throw std::invalid_argument(
        fmt::format("bilinear_upsample: factor {} < 1", factor));
  }
  if (input.rank() < 2) {
    throw std::invalid_argument("bilinear_upsample: need at least 2 axes");
  }
  if (factor == 1) return Reshape(input, input.shape());
  const int r = input.rank();
  const int64_t h = input.shape()[r - 2];
  const int64_t w = input.shape()[r - 1];
  const int64_t planes = input.numel() / (h * w);
  const int64_t oh = h * factor;
  const int64_t ow = w * factor;
  const auto ty = UpsampleTaps(h, factor);
  const auto tx = UpsampleTaps(w, factor);
  Shape out_shape = input.shape();
  out_shape[r - 2] = oh;
  out_shape[r - 1] = ow;
  std::vector<T> out(planes * oh * ow);
  const auto& x = input.vec();
  for (int64_t p = 0; p < planes; ++p) {
    const T* src = x.data() + p * h * w;
    T* dst = out.data() + p * oh * ow;
    for (int64_t oy = 0; oy < oh; ++oy) {
      const auto& ry = ty[oy];
      const T* r0 = src + ry.i0 * w;
      const T* r1 = src + ry.i1 * w;
      for (int64_t ox = 0; ox < ow; ++ox) {
        const auto& rx = tx[ox];
        const T top = T(rx.w0) * r0[rx.i0] + T(rx.w1) * r0[rx.i1];
        const T bot = T(rx.w0) * r1[rx.i0] + T(rx.w1) * r1[rx.i1];
        dst[oy * ow + ox] = T(ry.w0) * top + T(ry.w1) * bot;
      }
    }
  }
  return MakeResult<T>(
      out_shape, std::move(out), {&input},
      [input, ty, tx, planes, h, w, oh, ow](TensorNode<T>& self) {
        auto& gi = input.node().EnsureGrad();
        for (int64_t p = 0; p < planes; ++p) {
          T* dst = gi.data() + p * h * w;
          const T* g = self.grad.data() + p * oh * ow;
          for (int64_t oy = 0; oy < oh; ++oy) {
            const auto& ry = ty[oy];
            for (int64_t ox = 0; ox < ow; ++ox) {
              const auto& rx = tx[ox];
              const T v = g[oy * ow + ox];
              dst[ry.i0 * w + rx.i0] += T(ry.w0 * rx.w0) * v;
              dst[ry.i0 * w + rx.i1] += T(ry.w0 * rx.w1) * v;
              dst[ry.i1 * w + rx.i0] += T(ry.w1 * rx.w0) * v;
              dst[ry.i1 * w + rx.i1] += T(ry.w1 * rx.w1) * v;
            }
          }
        }
      });
}

template <typename T>
Tensor<T> NearestUpsample3d(const Tensor<T>& input, int factor) {
  if (factor < 1) throw std::invalid_argument("nearest_upsample3d: factor < 1");
  if (input.rank() < 3) {
    throw std::invalid_argument("nearest_upsample3d: need at least 3 axes");
  }
  const int r = input.rank();
  const int64_t d = input.shape()[r - 3];
  const int64_t h = input.shape()[r - 2];
  const int64_t w = input.shape()[r - 1];
  const int64_t planes = input.numel() / (d * h * w);
  Shape out_shape = input.shape();
  out_shape[r - 3] *= factor;
  out_shape[r - 2] *= factor;
  out_shape[r - 1] *= factor;
  const int64_t od = d * factor, oh = h * factor, ow = w * factor;
  std::vector<T> out(planes * od * oh * ow);
  const auto& x = input.vec();
  for (int64_t p = 0; p < planes; ++p) {
    for (int64_t z = 0; z < od; ++z) {
      for (int64_t y = 0; y < oh; ++y) {
        const T* src = x.data() + ((p * d + z / factor) * h + y / factor) * w;
        T* dst = out.data() + ((p * od + z) * oh + y) * ow;
        for (int64_t xx = 0; xx < ow; ++xx) dst[xx] = src[xx / factor];
      }
    }
  }
  return MakeResult<T>(
      out_shape, std::move(out), {&input},
      [input, factor, planes, d, h, w, od, oh, ow](TensorNode<T>& self) {
        auto& gi = input.node().EnsureGrad();
        for (int64_t p = 0; p < planes; ++p) {
          for (int64_t z = 0; z < od; ++z) {
            for (int64_t y = 0; y < oh; ++y) {
              T* dst = gi.data() + ((p * d + z / factor) * h + y / factor) * w;
              const T* g = self.grad.data() + ((p * od + z) * oh + y) * ow;
              for (int64_t xx = 0; xx < ow; ++xx) dst[xx / factor] += g[xx];
            }
          }
        }
      });
}

template <typename T>
WarpResult<T> HorizontalWarp(const Tensor<T>& input, const Tensor<T>& disparity,
                             int sign) {
  if (sign != 1 && sign != -1) {
    throw std::invalid_argument("hwarp: sign must be +1 or -1");
  }
  const bool batched = input.rank() == 4;
  if (!batched && input.rank() != 3) {
    throw std::invalid_argument("hwarp: input must be [C,H,W] or [B,C,H,W]");
  }
  const int64_t b = batched ? input.shape()[0] : 1;
  const int64_t c = input.shape()[batched ? 1 : 0];
  const int64_t h = input.shape()[batched ? 2 : 1];
  const int64_t w = input.shape()[batched ? 3 : 2];
  const Shape expected_disp =
      batched ? Shape{b, 1, h, w} : Shape{1, h, w};
  RequireSameShape(disparity.shape(), expected_disp, "hwarp disparity");

  const auto& x = input.vec();
  const auto& dv = disparity.vec();
  const int64_t hw = h * w;
  // Per-pixel sample location, shared by every channel.
  std::vector<int64_t> left_index(b * hw);
  std::vector<T> frac(b * hw);
  std::vector<T> mask(b * hw, T(0));
  for (int64_t n = 0; n < b; ++n) {
    for (int64_t y = 0; y < h; ++y) {
      for (int64_t xx = 0; xx < w; ++xx) {
        const int64_t k = n * hw + y * w + xx;
        const T pos = static_cast<T>(xx) + static_cast<T>(sign) * dv[k];
        if (pos >= T(0) && pos <= static_cast<T>(w - 1)) {
          const int64_t i0 = static_cast<int64_t>(std::floor(pos));
          left_index[k] = std::min(i0, w - 1);
          frac[k] = pos - static_cast<T>(left_index[k]);
          mask[k] = T(1);
        } else {
          left_index[k] = -1;
        }
      }
    }
  }
  std::vector<T> out(x.size(), T(0));
  for (int64_t n = 0; n < b; ++n) {
    for (int64_t ch = 0; ch < c; ++ch) {
      const T* src = x.data() + (n * c + ch) * hw;
      T* dst = out.data() + (n * c + ch) * hw;
      for (int64_t y = 0; y < h; ++y) {
        for (int64_t xx = 0; xx < w; ++xx) {
          const int64_t k = n * hw + y * w + xx;
          const int64_t i0 = left_index[k];
          if (i0 < 0) continue;
          const T a = frac[k];
          const T v0 = src[y * w + i0];
          const T v1 = i0 + 1 < w ? src[y * w + i0 + 1] : T(0);
          dst[y * w + xx] = (T(1) - a) * v0 + a * v1;
        }
      }
    }
  }
  WarpResult<T> result;
  result.mask = Tensor<T>::FromData(expected_disp, std::move(mask));
  result.output = MakeResult<T>(
      input.shape(), std::move(out), {&input, &disparity},
      [input, disparity, left_index, frac, b, c, h, w, sign](
          TensorNode<T>& self) {
        const int64_t hw = h * w;
        const auto& x = input.vec();
        const auto& g = self.grad;
        std::vector<T>* gi =
            input.requires_grad() ? &input.node().EnsureGrad() : nullptr;
        std::vector<T>* gd =
            disparity.requires_grad() ? &disparity.node().EnsureGrad()
                                      : nullptr;
        for (int64_t n = 0; n < b; ++n) {
          for (int64_t ch = 0; ch < c; ++ch) {
            const int64_t plane = (n * c + ch) * hw;
            for (int64_t y = 0; y < h; ++y) {
              for (int64_t xx = 0; xx < w; ++xx) {
                const int64_t k = n * hw + y * w + xx;
                const int64_t i0 = left_index[k];
                if (i0 < 0) continue;
                const T a = frac[k];
                const T go = g[plane + y * w + xx];
                const bool has_right = i0 + 1 < w;
                if (gi) {
                  (*gi)[plane + y * w + i0] += (T(1) - a) * go;
                  if (has_right) (*gi)[plane + y * w + i0 + 1] += a * go;
                }
                if (gd) {
                  const T v0 = x[plane + y * w + i0];
                  const T v1 = has_right ? x[plane + y * w + i0 + 1] : T(0);
                  (*gd)[k] += go * static_cast<T>(sign) * (v1 - v0);
                }
              }
            }
          }
        }
      });
  return result;
}

template <typename T>
Tensor<T> Expectation(const Tensor<T>& probs, int axis,
                      std::span<const T> values) {
  const AxisSplit s = SplitAt(probs.shape(), axis, "expectation");
  if (static_cast<int64_t>(values.size()) != s.extent) {
    throw std::invalid_argument(fmt::format(
        "expectation: {} values for axis of extent {}", values.size(),
        s.extent));
  }
  Shape out_shape = probs.shape();
  out_shape[NormalizeAxis(axis, probs.rank())] = 1;
  const auto& p = probs.vec();
  std::vector<T> out(s.outer * s.inner, T(0));
  for (int64_t o = 0; o < s.outer; ++o) {
    for (int64_t j = 0; j < s.extent; ++j) {
      const T* src = p.data() + (o * s.extent + j) * s.inner;
      T* dst = out.data() + o * s.inner;
      for (int64_t i = 0; i < s.inner; ++i) dst[i] += src[i] * values[j];
    }
  }
  std::vector<T> level_values(values.begin(), values.end());
  return MakeResult<T>(out_shape, std::move(out), {&probs},
                       [probs, s, level_values](TensorNode<T>& self) {
                         auto& gp = probs.node().EnsureGrad();
                         for (int64_t o = 0; o < s.outer; ++o) {
                           const T* g = self.grad.data() + o * s.inner;
                           for (int64_t j = 0; j < s.extent; ++j) {
                             T* dst = gp.data() + (o * s.extent + j) * s.inner;
                             for (int64_t i = 0; i < s.inner; ++i) {
                               dst[i] += g[i] * level_values[j];
                             }
                           }
                         }
                       });
}

template <typename T>
Tensor<T> SoftArgmax(const Tensor<T>& logits, int axis,
                     std::span<const T> values) {
  return Expectation(Softmax(logits, axis), axis, values);
}

template <typename T>
Tensor<T> ChannelNormalize(const Tensor<T>& x, const Tensor<T>& mask) {
  if (x.rank() != 4) throw std::invalid_argument("channel_normalize: rank 4");
  const int64_t b = x.shape()[0], c = x.shape()[1];
  const int64_t hw = x.shape()[2] * x.shape()[3];
  RequireSameShape(mask.shape(), {b, 1, x.shape()[2], x.shape()[3]},
                   "channel_normalize mask");
  const auto& xv = x.vec();
  const auto& mv = mask.vec();
  std::vector<T> inv(b * hw, T(0));
  for (int64_t n = 0; n < b; ++n) {
    for (int64_t i = 0; i < hw; ++i) {
      if (mv[n * hw + i] == T(0)) continue;
      T total = 0;
      for (int64_t ch = 0; ch < c; ++ch) total += xv[(n * c + ch) * hw + i];
      if (total > T(0)) inv[n * hw + i] = T(1) / total;
    }
  }
  std::vector<T> out(xv.size());
  for (int64_t n = 0; n < b; ++n) {
    for (int64_t ch = 0; ch < c; ++ch) {
      for (int64_t i = 0; i < hw; ++i) {
        out[(n * c + ch) * hw + i] = xv[(n * c + ch) * hw + i] * inv[n * hw + i];
      }
    }
  }
  return MakeResult<T>(
      x.shape(), std::move(out), {&x}, [x, inv, b, c, hw](TensorNode<T>& self) {
        auto& gx = x.node().EnsureGrad();
        const auto& y = self.data;
        const auto& g = self.grad;
        for (int64_t n = 0; n < b; ++n) {
          for (int64_t i = 0; i < hw; ++i) {
            const T s = inv[n * hw + i];
            if (s == T(0)) continue;
            T dot = 0;
            for (int64_t ch = 0; ch < c; ++ch) {
              const int64_t k = (n * c + ch) * hw + i;
              dot += g[k] * y[k];
            }
            for (int64_t ch = 0; ch < c; ++ch) {
              const int64_t k = (n * c + ch) * hw + i;
              gx[k] += (g[k] - dot) * s;
            }
          }
        }
      });
}

// ---- losses ---------------------------------------------------------------

template <typename T>
Tensor<T> MaskedSmoothL1(const Tensor<T>& pred, const Tensor<T>& target,
                         const Tensor<T>& valid) {
  RequireSameShape(pred.shape(), target.shape(), "smooth_l1 target");
  RequireSameShape(pred.shape(), valid.shape(), "smooth_l1 mask");
  const auto& p = pred.vec();
  const auto& t = target.vec();
  const auto& m = valid.vec();
  int64_t count = 0;
  T total = 0;
  for (size_t i = 0; i < p.size(); ++i) {
    if (m[i] == T(0)) continue;
    const T e = p[i] - t[i];
    const T ae = std::abs(e);
    total += ae < T(1) ? T(0.5) * e * e : ae - T(0.5);
    ++count;
  }
  const T inv = count > 0 ? T(1) / static_cast<T>(count) : T(0);
  return MakeResult<T>({1}, {total * inv}, {&pred},
                       [pred, target, valid, inv](TensorNode<T>& self) {
                         auto& gp = pred.node().EnsureGrad();
                         const auto& p = pred.vec();
                         const auto& t = target.vec();
                         const auto& m = valid.vec();
                         const T g = self.grad[0] * inv;
                         for (size_t i = 0; i < p.size(); ++i) {
                           if (m[i] == T(0)) continue;
                           const T e = p[i] - t[i];
                           const T d = std::abs(e) < T(1)
                                           ? e
                                           : (e > T(0) ? T(1) : T(-1));
                           gp[i] += g * d;
                         }
                       });
}

template <typename T>
Tensor<T> SoftCrossEntropy(const Tensor<T>& probs, const Tensor<T>& target,
                           const Tensor<T>& mask) {
  RequireSameShape(probs.shape(), target.shape(), "soft_ce target");
  if (probs.rank() != 4) throw std::invalid_argument("soft_ce: rank 4");
  const int64_t b = probs.shape()[0], c = probs.shape()[1];
  const int64_t hw = probs.shape()[2] * probs.shape()[3];
  RequireSameShape(mask.shape(), {b, 1, probs.shape()[2], probs.shape()[3]},
                   "soft_ce mask");
  const T floor = T(kLogFloor);
  const auto& p = probs.vec();
  const auto& q = target.vec();
  const auto& m = mask.vec();
  int64_t count = 0;
  T total = 0;
  for (int64_t n = 0; n < b; ++n) {
    for (int64_t i = 0; i < hw; ++i) {
      if (m[n * hw + i] == T(0)) continue;
      ++count;
      for (int64_t ch = 0; ch < c; ++ch) {
        const int64_t k = (n * c + ch) * hw + i;
        total -= q[k] * std::log(std::max(p[k], floor));
      }
    }
  }
  const T inv = count > 0 ? T(1) / static_cast<T>(count) : T(0);
  return MakeResult<T>(
      {1}, {total * inv}, {&probs, &target},
      [probs, target, mask, inv, b, c, hw, floor](TensorNode<T>& self) {
        const auto& p = probs.vec();
        const auto& q = target.vec();
        const auto& m = mask.vec();
        const T g = self.grad[0] * inv;
        std::vector<T>* gp =
            probs.requires_grad() ? &probs.node().EnsureGrad() : nullptr;
        std::vector<T>* gq =
            target.requires_grad() ? &target.node().EnsureGrad() : nullptr;
        for (int64_t n = 0; n < b; ++n) {
          for (int64_t i = 0; i < hw; ++i) {
            if (m[n * hw + i] == T(0)) continue;
            for (int64_t ch = 0; ch < c; ++ch) {
              const int64_t k = (n * c + ch) * hw + i;
              if (gp && p[k] > floor) (*gp)[k] -= g * q[k] / p[k];
              if (gq) (*gq)[k] -= g * std::log(std::max(p[k], floor));
            }
          }
        }
      });
}

namespace {

void CheckLabels(const Shape& probs_shape, std::span<const int32_t> labels,
                 const char* op) {
  if (probs_shape.size() != 4) {
    throw std::invalid_argument(fmt::format("{}: probs must be [B,N,H,W]", op));
  }
  const int64_t expected = probs_shape[0] * probs_shape[2] * probs_shape[3];
  if (static_cast<int64_t>(labels.size()) != expected) {
    throw std::invalid_argument(
        fmt::format("{}: {} labels for probs {}", op, labels.size(),
                    ShapeString(probs_shape)));
  }
}

}  // namespace

template <typename T>
Tensor<T> IndexCrossEntropy(const Tensor<T>& probs,
                            std::span<const int32_t> labels,
                            int32_t ignore_index) {
  CheckLabels(probs.shape(), labels, "index_ce");
  const int64_t b = probs.shape()[0], c = probs.shape()[1];
  const int64_t hw = probs.shape()[2] * probs.shape()[3];
  const T floor = T(kLogFloor);
  const auto& p = probs.vec();
  std::vector<int32_t> lab(labels.begin(), labels.end());
  int64_t count = 0;
  T total = 0;
  for (int64_t n = 0; n < b; ++n) {
    for (int64_t i = 0; i < hw; ++i) {
      const int32_t l = lab[n * hw + i];
      if (l == ignore_index) continue;
      if (l < 0 || l >= c) {
        throw std::invalid_argument(fmt::format("index_ce: label {} not in [0,{})", l, c));
      }
      total -= std::log(std::max(p[(n * c + l) * hw + i], floor));
      ++count;
    }
  }
  const T inv = count > 0 ? T(1) / static_cast<T>(count) : T(0);
  return MakeResult<T>(
      {1}, {total * inv}, {&probs},
      [probs, lab, ignore_index, inv, b, c, hw, floor](TensorNode<T>& self) {
        auto& gp = probs.node().EnsureGrad();
        const auto& p = probs.vec();
        const T g = self.grad[0] * inv;
        for (int64_t n = 0; n < b; ++n) {
          for (int64_t i = 0; i < hw; ++i) {
            const int32_t l = lab[n * hw + i];
            if (l == ignore_index) continue;
            const int64_t k = (n * c + l) * hw + i;
            if (p[k] > floor) gp[k] -= g / p[k];
          }
        }
      });
}

template <typename T>
Tensor<T> DiceLoss(const Tensor<T>& probs, std::span<const int32_t> labels,
                   int32_t ignore_index) {
  CheckLabels(probs.shape(), labels, "dice");
  const int64_t b = probs.shape()[0], c = probs.shape()[1];
  const int64_t hw = probs.shape()[2] * probs.shape()[3];
  const auto& p = probs.vec();
  std::vector<int32_t> lab(labels.begin(), labels.end());
  std::vector<T> inter(c, T(0)), sum_p(c, T(0)), sum_g(c, T(0));
  for (int64_t n = 0; n < b; ++n) {
    for (int64_t i = 0; i < hw; ++i) {
      const int32_t l = lab[n * hw + i];
      if (l == ignore_index) continue;
      for (int64_t ch = 0; ch < c; ++ch) {
        const T pv = p[(n * c + ch) * hw + i];
        sum_p[ch] += pv;
        if (ch == l) {
          inter[ch] += pv;
          sum_g[ch] += T(1);
        }
      }
    }
  }
  T score = 0;
  for (int64_t ch = 0; ch < c; ++ch) {
    score += (T(2) * inter[ch] + T(1)) / (sum_p[ch] + sum_g[ch] + T(1));
  }
  const T loss = T(1) - score / static_cast<T>(c);
  return MakeResult<T>(
      {1}, {loss}, {&probs},
      [probs, lab, ignore_index, inter, sum_p, sum_g, b, c,
       hw](TensorNode<T>& self) {
        auto& gp = probs.node().EnsureGrad();
        const T g = self.grad[0] / static_cast<T>(c);
        // d/dp of -(2I+1)/(S+1), S = sum_p + sum_g.
        std::vector<T> dg(c), dn(c);
        for (int64_t ch = 0; ch < c; ++ch) {
          const T den = sum_p[ch] + sum_g[ch] + T(1);
          dg[ch] = -T(2) / den;                                      // g=1 term
          dn[ch] = (T(2) * inter[ch] + T(1)) / (den * den);          // all pixels
        }
        for (int64_t n = 0; n < b; ++n) {
          for (int64_t i = 0; i < hw; ++i) {
            const int32_t l = lab[n * hw + i];
            if (l == ignore_index) continue;
            for (int64_t ch = 0; ch < c; ++ch) {
              T d = dn[ch];
              if (ch == l) d += dg[ch];
              gp[(n * c + ch) * hw + i] += g * d;
            }
          }
        }
      });
}

#define SEMSTEREO_INSTANTIATE_BASIC(T)                                        \
  template Tensor<T> Add(const Tensor<T>&, const Tensor<T>&);                 \
  template Tensor<T> Sub(const Tensor<T>&, const Tensor<T>&);                 \
  template Tensor<T> Mul(const Tensor<T>&, const Tensor<T>&);                 \
  template Tensor<T> Scale(const Tensor<T>&, T);                              \
  template Tensor<T> AddScalar(const Tensor<T>&, T);                          \
  template Tensor<T> Relu(const Tensor<T>&);                                  \
  template Tensor<T> Sigmoid(const Tensor<T>&);                               \
  template Tensor<T> Activate(const Tensor<T>&, Activation);                  \
  template Tensor<T> Softmax(const Tensor<T>&, int);                          \
  template Tensor<T> Sum(const Tensor<T>&);                                   \
  template Tensor<T> Mean(const Tensor<T>&);                                  \
  template Tensor<T> Concat(const std::vector<Tensor<T>>&, int);              \
  template Tensor<T> Reshape(const Tensor<T>&, Shape);                        \
  template Tensor<T> Narrow(const Tensor<T>&, int, int64_t, int64_t);         \
  template Tensor<T> BilinearUpsample(const Tensor<T>&, int);                 \
  template Tensor<T> NearestUpsample3d(const Tensor<T>&, int);                \
  template WarpResult<T> HorizontalWarp(const Tensor<T>&, const Tensor<T>&,   \
                                        int);                                 \
  template Tensor<T> Expectation(const Tensor<T>&, int, std::span<const T>);  \
  template Tensor<T> SoftArgmax(const Tensor<T>&, int, std::span<const T>);   \
  template Tensor<T> ChannelNormalize(const Tensor<T>&, const Tensor<T>&);    \
  template Tensor<T> MaskedSmoothL1(const Tensor<T>&, const Tensor<T>&,       \
                                    const Tensor<T>&);                        \
  template Tensor<T> SoftCrossEntropy(const Tensor<T>&, const Tensor<T>&,     \
                                      const Tensor<T>&);                      \
  template Tensor<T> IndexCrossEntropy(const Tensor<T>&,                      \
                                       std::span<const int32_t>, int32_t);    \
  template Tensor<T> DiceLoss(const Tensor<T>&, std::span<const int32_t>,     \
                              int32_t);

SEMSTEREO_INSTANTIATE_BASIC(float)
SEMSTEREO_INSTANTIATE_BASIC(double)

}  // namespace semstereo
