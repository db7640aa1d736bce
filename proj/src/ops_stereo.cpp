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
#include <stdexcept>

#include <fmt/format.h>

#include "semstereo/ops.hpp"

namespace semstereo {

namespace {

struct PairGeom {
  int64_t b, c, h, w;
};

PairGeom CheckPair(const Shape& left, const Shape& right, const char* op) {
  if (left.size() != 4 || left != right) {
    throw std::invalid_argument(
        fmt::format("{}: left {} and right {} must be equal [B,C,H,W]", op,
                    ShapeString(left), ShapeString(right)));
  }
  return {left[0], left[1], left[2], left[3]};
}

// Columns x of the left image whose right sample x - shift is in bounds.
inline void ShiftRange(int64_t w, int shift, int64_t* lo, int64_t* hi) {
  *lo = std::clamp<int64_t>(shift, 0, w);
  *hi = std::clamp<int64_t>(w + shift, 0, w);
}

}  // namespace

template <typename T>
Tensor<T> GroupCorrelation(const Tensor<T>& left, const Tensor<T>& right,
                           int groups, std::span<const int> shifts) {
  const PairGeom g = CheckPair(left.shape(), right.shape(), "group_correlation");
  if (groups < 1 || g.c % groups != 0) {
    throw std::invalid_argument(fmt::format(
        "group_correlation: {} channels not divisible into {} groups", g.c,
        groups));
  }
  const int64_t s = static_cast<int64_t>(shifts.size());
  const int64_t per_group = g.c / groups;
  const T inv = T(1) / static_cast<T>(per_group);
  const int64_t hw = g.h * g.w;
  const auto& lv = left.vec();
  const auto& rv = right.vec();
  std::vector<T> out(g.b * groups * s * hw, T(0));
  for (int64_t n = 0; n < g.b; ++n) {
    for (int64_t grp = 0; grp < groups; ++grp) {
      for (int64_t j = 0; j < s; ++j) {
        int64_t lo, hi;
        ShiftRange(g.w, shifts[j], &lo, &hi);
        T* dst = out.data() + ((n * groups + grp) * s + j) * hw;
        for (int64_t cc = 0; cc < per_group; ++cc) {
          const int64_t ch = grp * per_group + cc;
          const T* l = lv.data() + (n * g.c + ch) * hw;
          const T* r = rv.data() + (n * g.c + ch) * hw;
          for (int64_t y = 0; y < g.h; ++y) {
            for (int64_t x = lo; x < hi; ++x) {
              dst[y * g.w + x] += l[y * g.w + x] * r[y * g.w + x - shifts[j]];
            }
          }
        }
        for (int64_t i = 0; i < hw; ++i) dst[i] *= inv;
      }
    }
  }
  std::vector<int> shift_list(shifts.begin(), shifts.end());
  return MakeResult<T>(
      {g.b, groups, s, g.h, g.w}, std::move(out), {&left, &right},
      [left, right, shift_list, g, groups, per_group, inv](TensorNode<T>& self) {
        const int64_t s = static_cast<int64_t>(shift_list.size());
        const int64_t hw = g.h * g.w;
        const auto& lv = left.vec();
        const auto& rv = right.vec();
        std::vector<T>* gl =
            left.requires_grad() ? &left.node().EnsureGrad() : nullptr;
        std::vector<T>* gr =
            right.requires_grad() ? &right.node().EnsureGrad() : nullptr;
        for (int64_t n = 0; n < g.b; ++n) {
          for (int64_t grp = 0; grp < groups; ++grp) {
            for (int64_t j = 0; j < s; ++j) {
              const int shift = shift_list[j];
              int64_t lo, hi;
              ShiftRange(g.w, shift, &lo, &hi);
              const T* go = self.grad.data() + ((n * groups + grp) * s + j) * hw;
              for (int64_t cc = 0; cc < per_group; ++cc) {
                const int64_t base = (n * g.c + grp * per_group + cc) * hw;
                for (int64_t y = 0; y < g.h; ++y) {
                  for (int64_t x = lo; x < hi; ++x) {
                    const T gv = go[y * g.w + x] * inv;
                    const int64_t li = base + y * g.w + x;
                    const int64_t ri = li - shift;
                    if (gl) (*gl)[li] += gv * rv[ri];
                    if (gr) (*gr)[ri] += gv * lv[li];
                  }
                }
              }
            }
          }
        }
      });
}

template <typename T>
Tensor<T> ShiftedConcat(const Tensor<T>& left, const Tensor<T>& right,
                        std::span<const int> shifts) {
  const PairGeom g = CheckPair(left.shape(), right.shape(), "shifted_concat");
  const int64_t s = static_cast<int64_t>(shifts.size());
  const int64_t hw = g.h * g.w;
  const auto& lv = left.vec();
  const auto& rv = right.vec();
  std::vector<T> out(g.b * 2 * g.c * s * hw, T(0));
  for (int64_t n = 0; n < g.b; ++n) {
    for (int64_t ch = 0; ch < g.c; ++ch) {
      const T* l = lv.data() + (n * g.c + ch) * hw;
      const T* r = rv.data() + (n * g.c + ch) * hw;
      for (int64_t j = 0; j < s; ++j) {
        T* dl = out.data() + ((n * 2 * g.c + ch) * s + j) * hw;
        T* dr = out.data() + ((n * 2 * g.c + g.c + ch) * s + j) * hw;
        std::copy(l, l + hw, dl);
        int64_t lo, hi;
        ShiftRange(g.w, shifts[j], &lo, &hi);
        for (int64_t y = 0; y < g.h; ++y) {
          for (int64_t x = lo; x < hi; ++x) {
            dr[y * g.w + x] = r[y * g.w + x - shifts[j]];
          }
        }
      }
    }
  }
  std::vector<int> shift_list(shifts.begin(), shifts.end());
  return MakeResult<T>(
      {g.b, 2 * g.c, s, g.h, g.w}, std::move(out), {&left, &right},
      [left, right, shift_list, g](TensorNode<T>& self) {
        const int64_t s = static_cast<int64_t>(shift_list.size());
        const int64_t hw = g.h * g.w;
        std::vector<T>* gl =
            left.requires_grad() ? &left.node().EnsureGrad() : nullptr;
        std::vector<T>* gr =
            right.requires_grad() ? &right.node().EnsureGrad() : nullptr;
        for (int64_t n = 0; n < g.b; ++n) {
          for (int64_t ch = 0; ch < g.c; ++ch) {
            for (int64_t j = 0; j < s; ++j) {
              const T* gdl =
                  self.grad.data() + ((n * 2 * g.c + ch) * s + j) * hw;
              const T* gdr =
                  self.grad.data() + ((n * 2 * g.c + g.c + ch) * s + j) * hw;
              if (gl) {
                T* dst = gl->data() + (n * g.c + ch) * hw;
                for (int64_t i = 0; i < hw; ++i) dst[i] += gdl[i];
              }
              if (gr) {
                T* dst = gr->data() + (n * g.c + ch) * hw;
                int64_t lo, hi;
                ShiftRange(g.w, shift_list[j], &lo, &hi);
                for (int64_t y = 0; y < g.h; ++y) {
                  for (int64_t x = lo; x < hi; ++x) {
                    dst[y * g.w + x - shift_list[j]] += gdr[y * g.w + x];
                  }
                }
              }
            }
          }
        }
      });
}

#define SEMSTEREO_INSTANTIATE_STEREO(T)                                       \
  template Tensor<T> GroupCorrelation(const Tensor<T>&, const Tensor<T>&,     \
                                      int, std::span<const int>);             \
  template Tensor<T> ShiftedConcat(const Tensor<T>&, const Tensor<T>&,        \
                                   std::span<const int>);

SEMSTEREO_INSTANTIATE_STEREO(float)
SEMSTEREO_INSTANTIATE_STEREO(double)

}  // namespace semstereo
