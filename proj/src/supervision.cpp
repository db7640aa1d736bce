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

#include "semstereo/supervision.hpp"

#include <cmath>
#include <stdexcept>

#include <fmt/format.h>

namespace semstereo {

template <typename T>
Tensor<T> OneHot(std::span<const int32_t> labels, int64_t batch,
                 int num_classes, int64_t height, int64_t width,
                 int32_t ignore_index) {
  const int64_t hw = height * width;
  if (static_cast<int64_t>(labels.size()) != batch * hw) {
    throw std::invalid_argument(fmt::format(
        "one_hot: {} labels for {}x{}x{}", labels.size(), batch, height, width));
  }
  std::vector<T> out(batch * num_classes * hw, T(0));
  for (int64_t n = 0; n < batch; ++n) {
    for (int64_t i = 0; i < hw; ++i) {
      const int32_t l = labels[n * hw + i];
      if (l == ignore_index) continue;
      if (l < 0 || l >= num_classes) {
        throw std::invalid_argument(
            fmt::format("one_hot: label {} not in [0,{})", l, num_classes));
      }
      out[(n * num_classes + l) * hw + i] = T(1);
    }
  }
  return Tensor<T>::FromData({batch, num_classes, height, width},
                             std::move(out));
}

template <typename T>
PseudoLabels<T> MakePseudoRight(const Tensor<T>& label_left,
                                const Tensor<T>& d_final) {
  WarpResult<T> warped = HorizontalWarp(label_left, d_final, +1);
  PseudoLabels<T> out;
  out.mask = warped.mask;
  out.labels = ChannelNormalize(warped.output, warped.mask);
  return out;
}

template <typename T>
Tensor<T> LrscLoss(const Tensor<T>& P_right, const Tensor<T>& pseudo_right,
                   const Tensor<T>& mask) {
  return SoftCrossEntropy(P_right, pseudo_right, mask);
}

template <typename T>
SegLoss<T> SegmentationLoss(const Tensor<T>& probs,
                            std::span<const int32_t> labels,
                            int32_t ignore_index) {
  SegLoss<T> out;
  out.ce = IndexCrossEntropy(probs, labels, ignore_index);
  out.dice = DiceLoss(probs, labels, ignore_index);
  for (int32_t l : labels) {
    if (l != ignore_index) ++out.pixels;
  }
  return out;
}

template <typename T>
Tensor<T> ValidDisparityMask(const Tensor<T>& d_gt, int max_disparity) {
  std::vector<T> mask(d_gt.numel());
  const auto& d = d_gt.vec();
  for (size_t i = 0; i < d.size(); ++i) {
    mask[i] = std::isfinite(d[i]) &&
                      std::abs(d[i]) < static_cast<T>(max_disparity)
                  ? T(1)
                  : T(0);
  }
  return Tensor<T>::FromData(d_gt.shape(), std::move(mask));
}

template <typename T>
DispLoss<T> DisparityLoss(const std::array<Tensor<T>, 4>& stages,
                          const Tensor<T>& d_gt, int max_disparity) {
  DispLoss<T> out;
  Tensor<T> valid = ValidDisparityMask(d_gt, max_disparity);
  for (T v : valid.vec()) {
    if (v != T(0)) ++out.valid_pixels;
  }
  // Invalid pixels may hold NaN/inf sentinels; the loss never reads them
  // but keep the target finite anyway.
  std::vector<T> target(d_gt.vec());
  for (size_t i = 0; i < target.size(); ++i) {
    if (valid.vec()[i] == T(0)) target[i] = T(0);
  }
  Tensor<T> clean = Tensor<T>::FromData(d_gt.shape(), std::move(target));
  for (int i = 0; i < 4; ++i) {
    if (stages[i].shape() != d_gt.shape()) {
      throw std::invalid_argument(fmt::format(
          "disparity loss: stage {} has shape {}, ground truth {}", i,
          ShapeString(stages[i].shape()), ShapeString(d_gt.shape())));
    }
    out.stage[i] = MaskedSmoothL1(stages[i], clean, valid);
  }
  if (out.valid_pixels == 0) out.empty_warnings = 4;
  return out;
}

template <typename T>
LossReport<T> JointLoss(const DispLoss<T>& disp, const SegLoss<T>* seg,
                        const Tensor<T>* lrsc, int64_t lrsc_pixels,
                        const LossWeights& weights) {
  LossReport<T> report;
  Tensor<T> total = Scale(disp.stage[0], static_cast<T>(weights.lambda[0]));
  for (int i = 1; i < 4; ++i) {
    total = Add(total, Scale(disp.stage[i], static_cast<T>(weights.lambda[i])));
  }
  for (int i = 0; i < 4; ++i) report.disp[i] = disp.stage[i].item();
  report.disp_pixels = disp.valid_pixels;
  report.empty_disp_warnings = disp.empty_warnings;
  if (seg != nullptr) {
    total = Add(total,
                Scale(Add(seg->ce, seg->dice), static_cast<T>(weights.alpha)));
    report.seg_ce = seg->ce.item();
    report.seg_dice = seg->dice.item();
    report.seg_pixels = seg->pixels;
  }
  if (lrsc != nullptr) {
    total = Add(total, Scale(*lrsc, static_cast<T>(weights.beta)));
    report.lrsc = lrsc->item();
    report.lrsc_pixels = lrsc_pixels;
  }
  report.total = total;
  return report;
}

#define SEMSTEREO_INSTANTIATE_SUPERVISION(T)                                  \
  template Tensor<T> OneHot<T>(std::span<const int32_t>, int64_t, int,        \
                               int64_t, int64_t, int32_t);                    \
  template PseudoLabels<T> MakePseudoRight(const Tensor<T>&,                  \
                                           const Tensor<T>&);                 \
  template Tensor<T> LrscLoss(const Tensor<T>&, const Tensor<T>&,             \
                              const Tensor<T>&);                              \
  template SegLoss<T> SegmentationLoss(const Tensor<T>&,                      \
                                       std::span<const int32_t>, int32_t);    \
  template Tensor<T> ValidDisparityMask(const Tensor<T>&, int);               \
  template DispLoss<T> DisparityLoss(const std::array<Tensor<T>, 4>&,         \
                                     const Tensor<T>&, int);                  \
  template LossReport<T> JointLoss(const DispLoss<T>&, const SegLoss<T>*,     \
                                   const Tensor<T>*, int64_t,                 \
                                   const LossWeights&);

SEMSTEREO_INSTANTIATE_SUPERVISION(float)
SEMSTEREO_INSTANTIATE_SUPERVISION(double)

}  // namespace semstereo
