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

#include "semstereo/backbone.hpp"

#include <stdexcept>

#include <fmt/format.h>

namespace semstereo {

int ScaleIndex(int scale) {
  for (int i = 0; i < kNumScales; ++i) {
    if (kPyramidScales[i] == scale) return i;
  }
  throw std::invalid_argument(fmt::format("no pyramid level at scale {}", scale));
}

void BackboneConfig::Validate() const {
  for (int i = 0; i < kNumScales; ++i) {
    if (decoder_channels[i] <= 0 || decoder_channels[i] % 2 != 0) {
      throw std::invalid_argument(fmt::format(
          "decoder width {} at scale {} must be even and positive",
          decoder_channels[i], kPyramidScales[i]));
    }
    if (encoder_channels[i] <= 0) {
      throw std::invalid_argument("encoder widths must be positive");
    }
  }
  if (num_classes < 1) throw std::invalid_argument("num_classes must be >= 1");
}

int BackboneConfig::fused_input_channels() const {
  int total = 0;
  for (int c : decoder_channels) total += c / 2;
  return total;
}

namespace {
std::string ScaleName(int index) {
  return fmt::format("s{}", kPyramidScales[index]);
}
}  // namespace

template <typename T>
SharedBackbone<T>::SharedBackbone(ParamStore<T>& store,
                                  const BackboneConfig& config, Rng& rng)
    : config_(config), store_(&store) {
  config_.Validate();
  const auto& enc = config_.encoder_channels;
  const auto& dec = config_.decoder_channels;
  int c_in = 3;
  for (int i = 0; i < kNumScales; ++i) {
    const std::string base = "backbone.encoder." + ScaleName(i);
    encoder_[i].down =
        ConvBnAct2d<T>::Make(store, base + ".down", c_in, enc[i], 3, 2, rng);
    encoder_[i].refine =
        ConvBnAct2d<T>::Make(store, base + ".refine", enc[i], enc[i], 3, 1, rng);
    c_in = enc[i];
  }
  top_ = ConvBnAct2d<T>::Make(store, "backbone.decoder.top", enc[4], dec[4], 3,
                              1, rng);
  for (int i = kNumScales - 2; i >= 0; --i) {
    const std::string base = "backbone.decoder." + ScaleName(i);
    decoder_[i].up =
        ConvTranspose2dLayer<T>::Make(store, base + ".up", dec[i + 1], dec[i],
                                      rng);
    decoder_[i].up_bn = BatchNormLayer<T>::Make(store, base + ".up_bn", dec[i],
                                                rng);
    decoder_[i].merge = ConvBnAct2d<T>::Make(store, base + ".merge",
                                             dec[i] + enc[i], dec[i], 3, 1,
                                             rng);
  }
  semantic_conv_ = Conv2dLayer<T>::Make(store, "backbone.semantic_head",
                                        dec[0], config_.num_classes, 3, 1, rng);
  for (int i = 0; i < kNumScales; ++i) {
    projection_[i] = ConvBnAct2d<T>::Make(
        store, "backbone.project." + ScaleName(i), dec[i], dec[i] / 2, 1, 1,
        rng);
  }
  encoder_projection_ = ConvBnAct2d<T>::Make(
      store, "backbone.project_encoder.s4", enc[1], dec[1] / 2, 1, 1, rng);
  fuse_ = Conv2dLayer<T>::Make(store, "backbone.fuse",
                               config_.fused_input_channels(),
                               config_.num_classes, 1, 1, rng);
}

template <typename T>
FeaturePyramid<T> SharedBackbone<T>::ExtractPyramid(const Tensor<T>& image,
                                                    View view, NormMode mode) {
  Tensor<T> x = EnsureBatched(image, 3);
  if (x.shape()[1] != 3) {
    throw std::invalid_argument(fmt::format(
        "extract_pyramid: image {} must have 3 channels",
        ShapeString(image.shape())));
  }
  const int64_t h = x.shape()[2];
  const int64_t w = x.shape()[3];
  if (h % 32 != 0 || w % 32 != 0 || h == 0 || w == 0) {
    throw std::invalid_argument(fmt::format(
        "extract_pyramid: image size {}x{} must be divisible by 32", h, w));
  }
  FeaturePyramid<T> pyr;
  pyr.view = view;
  for (int i = 0; i < kNumScales; ++i) {
    x = encoder_[i].refine(encoder_[i].down(x, mode), mode);
    pyr.encoder[i] = x;
  }
  Tensor<T> d = top_(pyr.encoder[4], mode);
  pyr.decoded[4] = d;
  for (int i = kNumScales - 2; i >= 0; --i) {
    auto& stage = decoder_[i];
    Tensor<T> up = Relu(stage.up_bn(stage.up(d), mode));
    d = stage.merge(Concat<T>({up, pyr.encoder[i]}, 1), mode);
    pyr.decoded[i] = d;
  }
  return pyr;
}

template <typename T>
SemanticMap<T> SharedBackbone<T>::SemanticHead(const Tensor<T>& d2,
                                               View view) const {
  SemanticMap<T> map;
  map.view = view;
  map.probs = Softmax(BilinearUpsample(semantic_conv_(d2), 2), 1);
  return map;
}

template <typename T>
void SharedBackbone<T>::ProjectFeatures(FeaturePyramid<T>& pyramid,
                                        NormMode mode) {
  for (int i = 0; i < kNumScales; ++i) {
    if (!pyramid.decoded[i].defined()) {
      throw std::invalid_argument("project_features: pyramid has no D levels");
    }
    pyramid.projected[i] = projection_[i](pyramid.decoded[i], mode);
  }
}

template <typename T>
Tensor<T> SharedBackbone<T>::ProjectEncoderQuarter(
    const FeaturePyramid<T>& pyramid, NormMode mode) {
  return encoder_projection_(pyramid.encoder[ScaleIndex(4)], mode);
}

template <typename T>
FusedFeatures<T> SharedBackbone<T>::FuseFeatures(
    const FeaturePyramid<T>& pyramid) const {
  std::vector<Tensor<T>> parts;
  for (int i = 0; i < kNumScales; ++i) {
    if (!pyramid.projected[i].defined()) {
      throw std::invalid_argument("fuse_features: T levels missing");
    }
    parts.push_back(BilinearUpsample(pyramid.projected[i], kPyramidScales[i]));
  }
  FusedFeatures<T> fused;
  fused.F = fuse_(Concat(parts, 1));
  return fused;
}

template <typename T>
std::vector<std::string> SharedBackbone<T>::SemanticDecoderParameterNames()
    const {
  std::vector<std::string> names;
  for (const auto& n : store_->ParameterNames()) {
    if (n.starts_with("backbone.decoder.") ||
        n.starts_with("backbone.semantic_head.")) {
      names.push_back(n);
    }
  }
  return names;
}

template <typename T>
std::vector<std::string> SharedBackbone<T>::SharedDecoderParameterNames() const {
  std::vector<std::string> names;
  for (const auto& n : store_->ParameterNames()) {
    if (n.starts_with("backbone.decoder.top.") ||
        n.starts_with("backbone.decoder.s4.") ||
        n.starts_with("backbone.decoder.s8.") ||
        n.starts_with("backbone.decoder.s16.")) {
      names.push_back(n);
    }
  }
  return names;
}

template class SharedBackbone<float>;
template class SharedBackbone<double>;

}  // namespace semstereo
