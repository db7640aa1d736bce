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

// Differentiable primitives. Image tensors are [C,H,W] or [B,C,H,W];
// volumes are [C,D,H,W] or [B,C,D,H,W]. Unbatched inputs produce unbatched
// outputs.

#ifndef SEMSTEREO_OPS_HPP_
#define SEMSTEREO_OPS_HPP_

#include <cstdint>
#include <span>
#include <vector>

#include "semstereo/tensor.hpp"

namespace semstereo {

// ---- elementwise ----------------------------------------------------------

// Same-rank numpy broadcasting: every dim equal, or 1 on one side.
template <typename T>
Tensor<T> Add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> Sub(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> Mul(const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> Scale(const Tensor<T>& a, T factor);
template <typename T>
Tensor<T> AddScalar(const Tensor<T>& a, T value);

template <typename T>
Tensor<T> Relu(const Tensor<T>& a);
template <typename T>
Tensor<T> Sigmoid(const Tensor<T>& a);

enum class Activation { kRelu, kSigmoid };
template <typename T>
Tensor<T> Activate(const Tensor<T>& a, Activation kind);

// Max-subtracted softmax along `axis`.
template <typename T>
Tensor<T> Softmax(const Tensor<T>& a, int axis);

// ---- reductions and layout ------------------------------------------------

template <typename T>
Tensor<T> Sum(const Tensor<T>& a);
template <typename T>
Tensor<T> Mean(const Tensor<T>& a);
template <typename T>
Tensor<T> Concat(const std::vector<Tensor<T>>& parts, int axis);
template <typename T>
Tensor<T> Reshape(const Tensor<T>& a, Shape shape);
// Slice [start, start+length) along `axis`.
template <typename T>
Tensor<T> Narrow(const Tensor<T>& a, int axis, int64_t start, int64_t length);

// ---- convolution ----------------------------------------------------------

// weight [C_out,C_in,k,k]; bias [C_out] or undefined.
template <typename T>
Tensor<T> Conv2d(const Tensor<T>& input, const Tensor<T>& weight,
                 const Tensor<T>& bias, int stride, int padding);

// weight [C_out,C_in,k,k,k]; same stride and padding on every axis.
template <typename T>
Tensor<T> Conv3d(const Tensor<T>& input, const Tensor<T>& weight,
                 const Tensor<T>& bias, int stride, int padding);

// weight [C_in,C_out,k,k]; output spatial size (H-1)*stride + k.
template <typename T>
Tensor<T> ConvTranspose2d(const Tensor<T>& input, const Tensor<T>& weight,
                          const Tensor<T>& bias, int stride);

// ---- normalization --------------------------------------------------------

enum class NormMode { kTrain, kEval };

template <typename T>
struct BatchNormBuffers {
  Tensor<T> running_mean;  // [C]
  Tensor<T> running_var;   // [C]
};

inline constexpr double kBatchNormEps = 1e-5;
inline constexpr double kBatchNormMomentum = 0.1;

// Per-channel normalization over batch and spatial axes. Train mode uses the
// batch statistics and folds them into `buffers`; eval mode reads them.
template <typename T>
Tensor<T> BatchNorm(const Tensor<T>& input, const Tensor<T>& gamma,
                    const Tensor<T>& beta, BatchNormBuffers<T>& buffers,
                    NormMode mode, T momentum = T(kBatchNormMomentum),
                    T eps = T(kBatchNormEps));

// ---- resampling -----------------------------------------------------------

// Align-corners-false bilinear upsampling of the last two axes.
template <typename T>
Tensor<T> BilinearUpsample(const Tensor<T>& input, int factor);

// Nearest-neighbour x2 (or any factor) upsampling of the last three axes.
template <typename T>
Tensor<T> NearestUpsample3d(const Tensor<T>& input, int factor);

template <typename T>
struct WarpResult {
  Tensor<T> output;
  Tensor<T> mask;  // [1,H,W] or [B,1,H,W], never requires grad
};

// output(c,y,x) = input(c, y, x + sign*disparity(y,x)), linear interpolation
// along the row. Samples outside [0, W-1] are zero and masked out.
template <typename T>
WarpResult<T> HorizontalWarp(const Tensor<T>& input, const Tensor<T>& disparity,
                             int sign);

// ---- stereo matching ------------------------------------------------------

// left,right [B,C,H,W] -> [B,G,S,H,W]; level j compares left(x) with
// right(x - shifts[j]) averaged over the C/G channels of each group.
template <typename T>
Tensor<T> GroupCorrelation(const Tensor<T>& left, const Tensor<T>& right,
                           int groups, std::span<const int> shifts);

// left,right [B,C,H,W] -> [B,2C,S,H,W]: left features stacked with the right
// features sampled at x - shifts[j]; zero where out of bounds.
template <typename T>
Tensor<T> ShiftedConcat(const Tensor<T>& left, const Tensor<T>& right,
                        std::span<const int> shifts);

// sum_j p[..., j, ...] * values[j] along `axis`; the axis is kept with size 1.
template <typename T>
Tensor<T> Expectation(const Tensor<T>& probs, int axis,
                      std::span<const T> values);

template <typename T>
Tensor<T> SoftArgmax(const Tensor<T>& logits, int axis,
                     std::span<const T> values);

// Divides each pixel's channel vector by its sum where mask is 1 and the sum
// is positive; zero elsewhere. x [B,C,H,W], mask [B,1,H,W].
template <typename T>
Tensor<T> ChannelNormalize(const Tensor<T>& x, const Tensor<T>& mask);

// ---- losses (scalar outputs, shape [1]) -----------------------------------

inline constexpr double kLogFloor = 1e-8;

// Mean SmoothL1(pred - target) over pixels with valid != 0; 0 if none.
// Only `pred` is differentiated.
template <typename T>
Tensor<T> MaskedSmoothL1(const Tensor<T>& pred, const Tensor<T>& target,
                         const Tensor<T>& valid);

// -sum_c q log(max(p, floor)) averaged over pixels where mask != 0; 0 if none.
// p,q [B,N,H,W]; mask [B,1,H,W]. Differentiable in p and q.
template <typename T>
Tensor<T> SoftCrossEntropy(const Tensor<T>& probs, const Tensor<T>& target,
                           const Tensor<T>& mask);

// Mean -log(max(p[label], floor)) over non-ignored pixels.
// labels laid out [B,H,W] to match probs [B,N,H,W].
template <typename T>
Tensor<T> IndexCrossEntropy(const Tensor<T>& probs,
                            std::span<const int32_t> labels,
                            int32_t ignore_index);

// 1 - mean_c (2 sum p g + 1) / (sum p + sum g + 1) over non-ignored pixels.
template <typename T>
Tensor<T> DiceLoss(const Tensor<T>& probs, std::span<const int32_t> labels,
                   int32_t ignore_index);

}  // namespace semstereo

#endif  // SEMSTEREO_OPS_HPP_
