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

#ifndef SEMSTEREO_SSR_HPP_
#define SEMSTEREO_SSR_HPP_

#include "semstereo/nn.hpp"

namespace semstereo {

template <typename T>
struct SsrState {
  Tensor<T> F_gated;    // [B,N,H,W]
  Tensor<T> d_init_up;  // [B,1,H,W]
  Tensor<T> d_expand;   // [B,N,H,W]
  Tensor<T> R;          // [B,1,H,W]
  Tensor<T> d_final;    // [B,1,H,W]
};

// Semantic selective refinement.
//
// Gate:   F_gated = sigmoid(bn(conv1x1(F * P))) * F        (Hadamard products)
// Refine: d_up    = upsample4(d_init)
//         d_exp   = conv3x3(d_up / max_disparity)           (1 -> N channels)
//         R       = conv1x1(sigmoid(bn(conv1x1(F_gated))) * d_exp)   (N -> 1)
//         d_final = d_up + R
//
// The two sigmoid gates have separate weights and the residual conv starts
// at zero, so an untrained module returns d_up unchanged.
template <typename T>
class SemanticSelectiveRefinement {
 public:
  SemanticSelectiveRefinement(ParamStore<T>& store, int num_classes,
                              int max_disparity, Rng& rng);

  Tensor<T> GateFeatures(const Tensor<T>& F, const Tensor<T>& P_left,
                         NormMode mode);
  SsrState<T> Refine(const Tensor<T>& F_gated, const Tensor<T>& d_init,
                     NormMode mode);

  // Both stages.
  SsrState<T> operator()(const Tensor<T>& F, const Tensor<T>& P_left,
                         const Tensor<T>& d_init, NormMode mode);

  Conv2dLayer<T>& gate_conv() { return gate_conv_; }
  Conv2dLayer<T>& expand_conv() { return expand_conv_; }
  Conv2dLayer<T>& select_conv() { return select_conv_; }
  Conv2dLayer<T>& residual_conv() { return residual_conv_; }

 private:
  int num_classes_;
  int max_disparity_;
  Conv2dLayer<T> gate_conv_;
  BatchNormLayer<T> gate_bn_;
  Conv2dLayer<T> expand_conv_;
  Conv2dLayer<T> select_conv_;
  BatchNormLayer<T> select_bn_;
  Conv2dLayer<T> residual_conv_;
};

}  // namespace semstereo

#endif  // SEMSTEREO_SSR_HPP_
