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

#include "semstereo/model.hpp"

#include <stdexcept>

#include <fmt/format.h>

namespace semstereo {

Variant Variant::FromRow(int row) {
  if (row < 1 || row > 8) {
    throw std::invalid_argument(fmt::format("variant row {} not in 1..8", row));
  }
  Variant v;
  const int r = (row - 1) % 4;
  v.structure = r == 0 ? Structure::kParallelBaseline : Structure::kSgc;
  v.ssr = r >= 2;
  v.lrsc = r == 3;
  v.semantic_supervision = row <= 4;
  return v;
}

int Variant::Row() const {
  for (int row = 1; row <= 8; ++row) {
    if (FromRow(row) == *this) return row;
  }
  return 0;
}

std::string Variant::Describe() const {
  return fmt::format(
      "structure={} ssr={} lrsc={} semantic_supervision={}",
      structure == Structure::kSgc ? "sgc" : "parallel_baseline",
      ssr ? "on" : "off", lrsc ? "on" : "off",
      semantic_supervision ? "on" : "off");
}

Variant ParseVariant(const std::string& name) {
  if (name.size() == 4 && name.rfind("row", 0) == 0 && name[3] >= '1' &&
      name[3] <= '8') {
    return Variant::FromRow(name[3] - '0');
  }
  throw std::invalid_argument(
      fmt::format("unknown variant '{}', expected row1..row8", name));
}

template <typename T>
std::array<Tensor<T>, 4> ModelOutputs<T>::Stages() const {
  return {d_final, d_init_up, BilinearUpsample(d_reg1, kVolumeStride),
          BilinearUpsample(d_att, kVolumeStride)};
}

namespace {

template <typename T>
Tensor<T> FirstHalf(const Tensor<T>& x) {
  return Narrow(x, 0, 0, x.shape()[0] / 2);
}

template <typename T>
Tensor<T> SecondHalf(const Tensor<T>& x) {
  const int64_t b = x.shape()[0] / 2;
  return Narrow(x, 0, b, b);
}

}  // namespace

template <typename T>
SemStereoNet<T>::SemStereoNet(const ModelConfig& config, uint64_t seed)
    : config_(config),
      rng_(seed),
      backbone_(store_, config.backbone, rng_),
      costvol_(store_, config.costvol,
               config.backbone.projected_channels(4), rng_),
      ssr_(store_, config.backbone.num_classes, config.costvol.max_disparity,
           rng_) {}

template <typename T>
ModelOutputs<T> SemStereoNet<T>::Forward(const Tensor<T>& left,
                                         const Tensor<T>& right,
                                         NormMode mode) {
  if (left.shape() != right.shape() || left.rank() != 4) {
    throw std::invalid_argument(fmt::format(
        "forward: left {} and right {} must both be [B,3,H,W]",
        ShapeString(left.shape()), ShapeString(right.shape())));
  }
  const Variant& v = config_.variant;
  // Both views share one pass so batch-norm sees the same statistics.
  FeaturePyramid<T> pyr =
      backbone_.ExtractPyramid(Concat<T>({left, right}, 0), View::kLeft, mode);
  Tensor<T> probs = backbone_.SemanticHead(pyr.D(2), View::kLeft).probs;

  ModelOutputs<T> out;
  out.P_left = FirstHalf(probs);
  out.P_right = SecondHalf(probs);

  if (v.structure == Structure::kSgc || v.ssr) {
    backbone_.ProjectFeatures(pyr, mode);
  }
  Tensor<T> quarter = v.structure == Structure::kSgc
                          ? pyr.Tproj(4)
                          : backbone_.ProjectEncoderQuarter(pyr, mode);

  CostVolume<T> volume =
      costvol_.Build(FirstHalf(quarter), SecondHalf(quarter), mode);
  RegularizedCost<T> reg = costvol_.Regularize(volume.V, mode);
  const int dmax = config_.max_disparity();
  out.d_att = volume.d_att;
  out.d_reg1 = SoftArgmaxDisparity(reg.logits_1, dmax);
  out.d_init = SoftArgmaxDisparity(reg.logits_2, dmax);

  if (v.ssr) {
    FeaturePyramid<T> left_pyr;
    for (int i = 0; i < kNumScales; ++i) {
      left_pyr.projected[i] = FirstHalf(pyr.projected[i]);
    }
    FusedFeatures<T> fused = backbone_.FuseFeatures(left_pyr);
    out.ssr = ssr_(fused.F, out.P_left, out.d_init, mode);
    out.d_init_up = out.ssr->d_init_up;
    out.d_final = out.ssr->d_final;
  } else {
    out.d_init_up = BilinearUpsample(out.d_init, kVolumeStride);
    out.d_final = out.d_init_up;
  }
  return out;
}

template <typename T>
LossReport<T> SemStereoNet<T>::Loss(const ModelOutputs<T>& out,
                                    const Targets<T>& targets,
                                    const LossWeights& weights) const {
  const Variant& v = config_.variant;
  DispLoss<T> disp =
      DisparityLoss(out.Stages(), targets.disparity, config_.max_disparity());

  std::optional<SegLoss<T>> seg;
  if (v.semantic_supervision) {
    if (targets.labels.empty()) {
      throw std::invalid_argument(
          "loss: semantic supervision enabled but no labels given");
    }
    seg = SegmentationLoss(out.P_left, std::span<const int32_t>(targets.labels));
  }

  std::optional<Tensor<T>> lrsc;
  int64_t lrsc_pixels = 0;
  if (v.lrsc) {
    const auto& s = out.P_left.shape();
    // Ground-truth labels when available, otherwise the left prediction.
    Tensor<T> label_left =
        v.semantic_supervision
            ? OneHot<T>(std::span<const int32_t>(targets.labels), s[0],
                        static_cast<int>(s[1]), s[2], s[3])
            : out.P_left;
    PseudoLabels<T> pseudo = MakePseudoRight(label_left, out.d_final);
    for (T m : pseudo.mask.vec()) {
      if (m != T(0)) ++lrsc_pixels;
    }
    lrsc = LrscLoss(out.P_right, pseudo.labels, pseudo.mask);
  }
  return JointLoss(disp, seg ? &*seg : nullptr, lrsc ? &*lrsc : nullptr,
                   lrsc_pixels, weights);
}

template struct ModelOutputs<float>;
template struct ModelOutputs<double>;
template class SemStereoNet<float>;
template class SemStereoNet<double>;

}  // namespace semstereo
