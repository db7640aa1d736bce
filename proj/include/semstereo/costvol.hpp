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

// Attention-filtered concatenation cost volume over a signed disparity range
// at quarter resolution, 3D hourglass regularization and soft-argmax
// regression. Disparities are full-resolution pixels throughout; level j of
// the volume stands for disparity -max_disparity + 4j.

#ifndef SEMSTEREO_COSTVOL_HPP_
#define SEMSTEREO_COSTVOL_HPP_

#include <array>
#include <vector>

#include "semstereo/nn.hpp"

namespace semstereo {

inline constexpr int kVolumeStride = 4;

struct CostVolumeConfig {
  int max_disparity = 16;    // range [-max, max)
  int groups = 8;            // correlation groups G
  int volume_channels = 16;  // C''' of the filtered volume
  int attention_channels = 8;
  std::array<int, 3> hourglass_channels{16, 24, 32};

  int num_levels() const { return max_disparity / 2; }
  void Validate() const;
};

// -max + 4j for j in [0, max/2).
std::vector<double> LevelValues(int max_disparity);
// Level shifts in quarter-resolution pixels (level value / 4).
std::vector<int> LevelShifts(int max_disparity);

template <typename T>
struct CostVolume {
  Tensor<T> corr;   // [B,G,L,H/4,W/4]
  Tensor<T> W_att;  // [B,1,L,H/4,W/4], sums to 1 over L
  Tensor<T> V;      // [B,C''',L,H/4,W/4]
  Tensor<T> d_att;  // [B,1,H/4,W/4]
  std::vector<T> level_values;
};

template <typename T>
struct RegularizedCost {
  Tensor<T> logits_1;  // intermediate head, [B,1,L,H/4,W/4]
  Tensor<T> logits_2;  // final head
};

// Group-wise correlation of projected quarter-scale features.
template <typename T>
Tensor<T> BuildCorrelation(const Tensor<T>& left4, const Tensor<T>& right4,
                           int groups, int max_disparity);

// Softmax over the level axis (2) then expectation over the level values.
template <typename T>
Tensor<T> SoftArgmaxDisparity(const Tensor<T>& logits, int max_disparity);

template <typename T>
class CostVolumeNet {
 public:
  CostVolumeNet(ParamStore<T>& store, const CostVolumeConfig& config,
                int feature_channels, Rng& rng);

  const CostVolumeConfig& config() const { return config_; }

  // corr -> attention logits -> W_att, d_att.
  void AttentionWeights(CostVolume<T>& volume, NormMode mode);

  // Builds corr, attention and the filtered concatenation volume V.
  CostVolume<T> Build(const Tensor<T>& left4, const Tensor<T>& right4,
                      NormMode mode);

  // Hourglass over (L, H/4, W/4); both heads produce per-level logits.
  RegularizedCost<T> Regularize(const Tensor<T>& volume, NormMode mode);

 private:
  CostVolumeConfig config_;
  int feature_channels_;
  ConvBnAct3d<T> att_a_;
  ConvBnAct3d<T> att_b_;
  Conv3dLayer<T> att_out_;
  Conv3dLayer<T> concat_proj_;
  ConvBnAct3d<T> stem_;
  ConvBnAct3d<T> down_1_;
  ConvBnAct3d<T> down_2_;
  ConvBnAct3d<T> up_1_;
  ConvBnAct3d<T> up_2_;
  Conv3dLayer<T> head_1_;
  Conv3dLayer<T> head_2_;
};

}  // namespace semstereo

#endif  // SEMSTEREO_COSTVOL_HPP_
