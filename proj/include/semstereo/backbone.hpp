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

// Shared U-shaped feature extractor. One set of weights serves both views;
// the encoder feeds a transposed-convolution decoder with skip connections
// whose outputs D_i carry the semantic head and, through 1x1 projections
// T_i, the stereo branch.

#ifndef SEMSTEREO_BACKBONE_HPP_
#define SEMSTEREO_BACKBONE_HPP_

#include <array>
#include <string>
#include <vector>

#include "semstereo/nn.hpp"

namespace semstereo {

enum class View { kLeft, kRight };

inline constexpr int kNumScales = 5;
inline constexpr std::array<int, kNumScales> kPyramidScales{2, 4, 8, 16, 32};

// Index into the pyramid arrays for a scale in {2,4,8,16,32}.
int ScaleIndex(int scale);

struct BackboneConfig {
  std::array<int, kNumScales> encoder_channels{16, 32, 64, 96, 128};
  std::array<int, kNumScales> decoder_channels{32, 48, 64, 96, 128};
  int num_classes = 5;

  // Rejects odd decoder widths (the projection halves them).
  void Validate() const;
  int projected_channels(int scale) const {
    return decoder_channels[ScaleIndex(scale)] / 2;
  }
  int fused_input_channels() const;
};

template <typename T>
struct FeaturePyramid {
  View view = View::kLeft;
  std::array<Tensor<T>, kNumScales> encoder;    // E_i
  std::array<Tensor<T>, kNumScales> decoded;    // D_i, C'_i channels
  std::array<Tensor<T>, kNumScales> projected;  // T_i, C'_i/2 channels

  const Tensor<T>& D(int scale) const { return decoded[ScaleIndex(scale)]; }
  const Tensor<T>& Tproj(int scale) const {
    return projected[ScaleIndex(scale)];
  }
};

// Per-class probabilities [B,N,H,W]; channels sum to one at every pixel.
template <typename T>
struct SemanticMap {
  View view = View::kLeft;
  Tensor<T> probs;
};

template <typename T>
struct FusedFeatures {
  Tensor<T> F;        // [B,N,H,W]
  Tensor<T> F_gated;  // filled in by the refinement stage
};

template <typename T>
class SharedBackbone {
 public:
  SharedBackbone(ParamStore<T>& store, const BackboneConfig& config, Rng& rng);

  const BackboneConfig& config() const { return config_; }

  // image [3,H,W] or [B,3,H,W] with H, W divisible by 32. Fills encoder and
  // decoded levels.
  FeaturePyramid<T> ExtractPyramid(const Tensor<T>& image, View view,
                                   NormMode mode);

  // 3x3 conv to N classes, x2 bilinear upsampling, softmax over classes.
  SemanticMap<T> SemanticHead(const Tensor<T>& d2, View view) const;

  // Per-scale 1x1 conv + BN + ReLU, C'_i -> C'_i/2.
  void ProjectFeatures(FeaturePyramid<T>& pyramid, NormMode mode);

  // Shallow-sharing baseline: quarter-scale encoder features projected to
  // the same width as T_4, bypassing the decoder entirely.
  Tensor<T> ProjectEncoderQuarter(const FeaturePyramid<T>& pyramid,
                                  NormMode mode);

  // Upsample every T_i to full resolution, concatenate, 1x1 conv to N.
  FusedFeatures<T> FuseFeatures(const FeaturePyramid<T>& pyramid) const;

  // Names of the decoder and semantic-head parameters.
  std::vector<std::string> SemanticDecoderParameterNames() const;
  // Decoder parameters on the path from the encoder to D_4 (shared by the
  // semantic head and, in the cascade, by the stereo branch).
  std::vector<std::string> SharedDecoderParameterNames() const;

 private:
  struct EncoderStage {
    ConvBnAct2d<T> down;
    ConvBnAct2d<T> refine;
  };
  struct DecoderStage {
    ConvTranspose2dLayer<T> up;
    BatchNormLayer<T> up_bn;
    ConvBnAct2d<T> merge;
  };

  BackboneConfig config_;
  const ParamStore<T>* store_;
  std::array<EncoderStage, kNumScales> encoder_;
  ConvBnAct2d<T> top_;
  // decoder_[i] produces scale kPyramidScales[i] for i in 0..3.
  std::array<DecoderStage, kNumScales - 1> decoder_;
  Conv2dLayer<T> semantic_conv_;
  std::array<ConvBnAct2d<T>, kNumScales> projection_;
  ConvBnAct2d<T> encoder_projection_;
  Conv2dLayer<T> fuse_;
};

}  // namespace semstereo

#endif  // SEMSTEREO_BACKBONE_HPP_
