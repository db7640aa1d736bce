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

#include "semstereo/costvol.hpp"

#include <stdexcept>

#include <fmt/format.h>

namespace semstereo {

void CostVolumeConfig::Validate() const {
  if (max_disparity <= 0 || max_disparity % kVolumeStride != 0) {
    throw std::invalid_argument(fmt::format(
        "max_disparity {} must be a positive multiple of {}", max_disparity,
        kVolumeStride));
  }
  if (groups < 1 || volume_channels < 1 || attention_channels < 1) {
    throw std::invalid_argument("cost volume widths must be positive");
  }
}

std::vector<double> LevelValues(int max_disparity) {
  std::vector<double> values;
  for (int j = 0; j < max_disparity / 2; ++j) {
    values.push_back(-max_disparity + kVolumeStride * j);
  }
  return values;
}

std::vector<int> LevelShifts(int max_disparity) {
  std::vector<int> shifts;
  for (double v : LevelValues(max_disparity)) {
    shifts.push_back(static_cast<int>(v) / kVolumeStride);
  }
  return shifts;
}

namespace {
template <typename T>
std::vector<T> TypedLevels(int max_disparity) {
  std::vector<T> out;
  for (double v : LevelValues(max_disparity)) out.push_back(static_cast<T>(v));
  return out;
}
}  // namespace

template <typename T>
Tensor<T> BuildCorrelation(const Tensor<T>& left4, const Tensor<T>& right4,
                           int groups, int max_disparity) {
  const auto shifts = LevelShifts(max_disparity);
  return GroupCorrelation(left4, right4, groups, shifts);
}

template <typename T>
Tensor<T> SoftArgmaxDisparity(const Tensor<T>& logits, int max_disparity) {
  if (logits.rank() != 5 || logits.shape()[1] != 1) {
    throw std::invalid_argument(fmt::format(
        "soft_argmax: logits {} must be [B,1,L,H,W]",
        ShapeString(logits.shape())));
  }
  const auto values = TypedLevels<T>(max_disparity);
  Tensor<T> d = SoftArgmax(logits, 2, std::span<const T>(values));
  const auto& s = logits.shape();
  return Reshape(d, {s[0], 1, s[3], s[4]});
}

template <typename T>
CostVolumeNet<T>::CostVolumeNet(ParamStore<T>& store,
                                const CostVolumeConfig& config,
                                int feature_channels, Rng& rng)
    : config_(config), feature_channels_(feature_channels) {
  config_.Validate();
  if (feature_channels % config_.groups != 0) {
    throw std::invalid_argument(fmt::format(
        "cost volume: {} feature channels not divisible by {} groups",
        feature_channels, config_.groups));
  }
  const int g = config_.groups;
  const int a = config_.attention_channels;
  const auto& hg = config_.hourglass_channels;
  att_a_ = ConvBnAct3d<T>::Make(store, "costvol.attention.a", g, a, 3, 1, rng);
  att_b_ = ConvBnAct3d<T>::Make(store, "costvol.attention.b", a, a, 3, 1, rng);
  att_out_ = Conv3dLayer<T>::Make(store, "costvol.attention.out", a, 1, 3, 1,
                                  rng);
  concat_proj_ = Conv3dLayer<T>::Make(store, "costvol.concat_proj",
                                      2 * feature_channels,
                                      config_.volume_channels, 1, 1, rng);
  stem_ = ConvBnAct3d<T>::Make(store, "costvol.hourglass.stem",
                               config_.volume_channels, hg[0], 3, 1, rng);
  down_1_ = ConvBnAct3d<T>::Make(store, "costvol.hourglass.down1", hg[0],
                                 hg[1], 3, 2, rng);
  down_2_ = ConvBnAct3d<T>::Make(store, "costvol.hourglass.down2", hg[1],
                                 hg[2], 3, 2, rng);
  up_1_ = ConvBnAct3d<T>::Make(store, "costvol.hourglass.up1", hg[2], hg[1], 3,
                               1, rng);
  up_2_ = ConvBnAct3d<T>::Make(store, "costvol.hourglass.up2", hg[1], hg[0], 3,
                               1, rng);
  head_1_ = Conv3dLayer<T>::Make(store, "costvol.head1", hg[0], 1, 3, 1, rng);
  head_2_ = Conv3dLayer<T>::Make(store, "costvol.head2", hg[0], 1, 3, 1, rng);
}

template <typename T>
void CostVolumeNet<T>::AttentionWeights(CostVolume<T>& volume, NormMode mode) {
  Tensor<T> logits = att_out_(att_b_(att_a_(volume.corr, mode), mode));
  volume.W_att = Softmax(logits, 2);
  const auto values = TypedLevels<T>(config_.max_disparity);
  const auto& s = logits.shape();
  volume.d_att = Reshape(Expectation(volume.W_att, 2, std::span<const T>(values)),
                         {s[0], 1, s[3], s[4]});
}

template <typename T>
CostVolume<T> CostVolumeNet<T>::Build(const Tensor<T>& left4,
                                      const Tensor<T>& right4, NormMode mode) {
  if (left4.rank() != 4 || left4.shape()[1] != feature_channels_) {
    throw std::invalid_argument(fmt::format(
        "cost volume: features {} must be [B,{},H/4,W/4]",
        ShapeString(left4.shape()), feature_channels_));
  }
  CostVolume<T> volume;
  volume.level_values = TypedLevels<T>(config_.max_disparity);
  volume.corr = BuildCorrelation(left4, right4, config_.groups,
                                 config_.max_disparity);
  AttentionWeights(volume, mode);
  const auto shifts = LevelShifts(config_.max_disparity);
  Tensor<T> concat = ShiftedConcat(left4, right4, shifts);
  volume.V = concat_proj_(Mul(concat, volume.W_att));
  return volume;
}

template <typename T>
RegularizedCost<T> CostVolumeNet<T>::Regularize(const Tensor<T>& volume,
                                                NormMode mode) {
  const auto& s = volume.shape();
  if (s.size() != 5 || s[2] % 4 != 0 || s[3] % 4 != 0 || s[4] % 4 != 0) {
    throw std::invalid_argument(fmt::format(
        "hourglass: volume {} needs levels, H/4 and W/4 divisible by 4",
        ShapeString(s)));
  }
  Tensor<T> c0 = stem_(volume, mode);
  Tensor<T> c1 = down_1_(c0, mode);
  Tensor<T> c2 = down_2_(c1, mode);
  Tensor<T> u1 = Add(up_1_(NearestUpsample3d(c2, 2), mode), c1);
  Tensor<T> u0 = Add(up_2_(NearestUpsample3d(u1, 2), mode), c0);
  RegularizedCost<T> out;
  out.logits_1 = head_1_(c0);
  out.logits_2 = head_2_(u0);
  return out;
}

template Tensor<float> BuildCorrelation(const Tensor<float>&,
                                        const Tensor<float>&, int, int);
template Tensor<double> BuildCorrelation(const Tensor<double>&,
                                         const Tensor<double>&, int, int);
template Tensor<float> SoftArgmaxDisparity(const Tensor<float>&, int);
template Tensor<double> SoftArgmaxDisparity(const Tensor<double>&, int);
template class CostVolumeNet<float>;
template class CostVolumeNet<double>;

}  // namespace semstereo
