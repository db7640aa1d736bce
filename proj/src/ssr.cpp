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

#include "semstereo/ssr.hpp"

#include <stdexcept>

#include <fmt/format.h>

#include "semstereo/costvol.hpp"

namespace semstereo {

template <typename T>
SemanticSelectiveRefinement<T>::SemanticSelectiveRefinement(
    ParamStore<T>& store, int num_classes, int max_disparity, Rng& rng)
    : num_classes_(num_classes), max_disparity_(max_disparity) {
  const int n = num_classes;
  gate_conv_ = Conv2dLayer<T>::Make(store, "ssr.gate.conv", n, n, 1, 1, rng);
  gate_bn_ = BatchNormLayer<T>::Make(store, "ssr.gate.bn", n, rng);
  expand_conv_ = Conv2dLayer<T>::Make(store, "ssr.expand", 1, n, 3, 1, rng);
  select_conv_ = Conv2dLayer<T>::Make(store, "ssr.select.conv", n, n, 1, 1, rng);
  select_bn_ = BatchNormLayer<T>::Make(store, "ssr.select.bn", n, rng);
  residual_conv_ = Conv2dLayer<T>::Make(store, "ssr.residual", n, 1, 1, 1, rng,
                                        Init::kZero);
}

template <typename T>
Tensor<T> SemanticSelectiveRefinement<T>::GateFeatures(const Tensor<T>& F,
                                                       const Tensor<T>& P_left,
                                                       NormMode mode) {
  if (F.shape() != P_left.shape() || F.rank() != 4 ||
      F.shape()[1] != num_classes_) {
    throw std::invalid_argument(fmt::format(
        "ssr gate: F {} and P {} must both be [B,{},H,W]",
        ShapeString(F.shape()), ShapeString(P_left.shape()), num_classes_));
  }
  Tensor<T> weights = Sigmoid(gate_bn_(gate_conv_(Mul(F, P_left)), mode));
  return Mul(weights, F);
}

template <typename T>
SsrState<T> SemanticSelectiveRefinement<T>::Refine(const Tensor<T>& F_gated,
                                                   const Tensor<T>& d_init,
                                                   NormMode mode) {
  if (d_init.rank() != 4 || d_init.shape()[1] != 1) {
    throw std::invalid_argument(fmt::format(
        "ssr refine: d_init {} must be [B,1,H/4,W/4]",
        ShapeString(d_init.shape())));
  }
  SsrState<T> s;
  s.F_gated = F_gated;
  s.d_init_up = BilinearUpsample(d_init, kVolumeStride);
  if (s.d_init_up.shape()[2] != F_gated.shape()[2] ||
      s.d_init_up.shape()[3] != F_gated.shape()[3]) {
    throw std::invalid_argument(fmt::format(
        "ssr refine: upsampled disparity {} does not match features {}",
        ShapeString(s.d_init_up.shape()), ShapeString(F_gated.shape())));
  }
  Tensor<T> d_norm = Scale(s.d_init_up, T(1) / static_cast<T>(max_disparity_));
  s.d_expand = expand_conv_(d_norm);
  Tensor<T> select = Sigmoid(select_bn_(select_conv_(F_gated), mode));
  s.R = residual_conv_(Mul(select, s.d_expand));
  s.d_final = Add(s.R, s.d_init_up);
  return s;
}

template <typename T>
SsrState<T> SemanticSelectiveRefinement<T>::operator()(
    const Tensor<T>& F, const Tensor<T>& P_left, const Tensor<T>& d_init,
    NormMode mode) {
  return Refine(GateFeatures(F, P_left, mode), d_init, mode);
}

template class SemanticSelectiveRefinement<float>;
template class SemanticSelectiveRefinement<double>;

}  // namespace semstereo
