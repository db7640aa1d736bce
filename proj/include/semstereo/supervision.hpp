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

// Training objectives: segmentation (CE + Dice), staged SmoothL1 disparity,
// and left-right semantic consistency, combined into one joint loss.

#ifndef SEMSTEREO_SUPERVISION_HPP_
#define SEMSTEREO_SUPERVISION_HPP_

#include <array>
#include <cstdint>
#include <optional>
#include <span>

#include "semstereo/ops.hpp"

namespace semstereo {

inline constexpr int32_t kIgnoreLabel = 255;

struct LossWeights {
  // d_final, d_init (upsampled), d_reg1 (upsampled), d_att (upsampled).
  std::array<double, 4> lambda{1.0, 0.6, 0.5, 0.3};
  double alpha = 1.0;  // segmentation
  double beta = 1.0;   // left-right consistency
};

template <typename T>
struct LossReport {
  Tensor<T> total;
  T seg_ce = 0;
  T seg_dice = 0;
  std::array<T, 4> disp{};
  T lrsc = 0;
  int64_t seg_pixels = 0;
  int64_t disp_pixels = 0;
  int64_t lrsc_pixels = 0;
  int empty_disp_warnings = 0;
};

// One-hot [B,N,H,W] from class indices laid out [B,H,W]; ignored pixels
// become all-zero vectors.
template <typename T>
Tensor<T> OneHot(std::span<const int32_t> labels, int64_t batch,
                 int num_classes, int64_t height, int64_t width,
                 int32_t ignore_index = kIgnoreLabel);

template <typename T>
struct PseudoLabels {
  Tensor<T> labels;  // [B,N,H,W]
  Tensor<T> mask;    // [B,1,H,W]
};

// Warps left labels (one-hot ground truth or left probabilities) into the
// right view: pseudo(x) = label(x + d(x)), renormalized over channels.
template <typename T>
PseudoLabels<T> MakePseudoRight(const Tensor<T>& label_left,
                                const Tensor<T>& d_final);

// Soft-target cross entropy averaged over valid pixels; 0 without any.
template <typename T>
Tensor<T> LrscLoss(const Tensor<T>& P_right, const Tensor<T>& pseudo_right,
                   const Tensor<T>& mask);

template <typename T>
struct SegLoss {
  Tensor<T> ce;
  Tensor<T> dice;
  int64_t pixels = 0;
};

template <typename T>
SegLoss<T> SegmentationLoss(const Tensor<T>& probs,
                            std::span<const int32_t> labels,
                            int32_t ignore_index = kIgnoreLabel);

// 1 where d_gt is finite and |d_gt| < max_disparity.
template <typename T>
Tensor<T> ValidDisparityMask(const Tensor<T>& d_gt, int max_disparity);

template <typename T>
struct DispLoss {
  std::array<Tensor<T>, 4> stage;
  int64_t valid_pixels = 0;
  int empty_warnings = 0;
};

// SmoothL1 per stage over valid pixels. All stages full resolution.
template <typename T>
DispLoss<T> DisparityLoss(const std::array<Tensor<T>, 4>& stages,
                          const Tensor<T>& d_gt, int max_disparity);

// total = sum_i lambda_i disp_i + alpha (ce + dice) + beta lrsc, composed
// left to right. Missing terms are dropped.
template <typename T>
LossReport<T> JointLoss(const DispLoss<T>& disp, const SegLoss<T>* seg,
                        const Tensor<T>* lrsc, int64_t lrsc_pixels,
                        const LossWeights& weights);

}  // namespace semstereo

#endif  // SEMSTEREO_SUPERVISION_HPP_
