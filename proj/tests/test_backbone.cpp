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

#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "semstereo/backbone.hpp"
#include "test_util.hpp"

namespace semstereo {
namespace {

using TF = Tensor<float>;
using testing::UniformTensor;

struct Fixture {
  ParamStore<float> store;
  Rng rng{42};
  BackboneConfig config;
  SharedBackbone<float> backbone{store, config, rng};
};

void ZeroAll(ParamStore<float>& store, const std::string& prefix) {
  for (const auto& e : store.entries()) {
    if (e.name.rfind(prefix, 0) == 0) {
      TF t = e.tensor;
      for (float& v : t.mutable_data()) v = 0.0f;
    }
  }
}

TEST(Backbone, PyramidShapesFollowTheChannelPlan) {
  Fixture f;
  std::mt19937_64 rng(1);
  TF image = UniformTensor<float>(rng, {3, 64, 64}, 0, 1);
  FeaturePyramid<float> p = f.backbone.ExtractPyramid(image, View::kLeft,
                                                      NormMode::kEval);
  for (int i = 0; i < kNumScales; ++i) {
    const int s = kPyramidScales[i];
    EXPECT_EQ(p.encoder[i].shape(),
              (Shape{1, f.config.encoder_channels[i], 64 / s, 64 / s}));
    EXPECT_EQ(p.decoded[i].shape(),
              (Shape{1, f.config.decoder_channels[i], 64 / s, 64 / s}));
  }
  EXPECT_EQ(p.D(4).shape(), (Shape{1, 48, 16, 16}));
}

TEST(Backbone, RejectsSizesNotDivisibleBy32) {
  Fixture f;
  EXPECT_THROW(f.backbone.ExtractPyramid(TF::Zeros({1, 3, 48, 64}), View::kLeft,
                                         NormMode::kEval),
               std::invalid_argument);
  EXPECT_THROW(f.backbone.ExtractPyramid(TF::Zeros({1, 1, 64, 64}), View::kLeft,
                                         NormMode::kEval),
               std::invalid_argument);
}

TEST(Backbone, SiameseViewsShareWeights) {
  Fixture f;
  std::mt19937_64 rng(2);
  TF image = UniformTensor<float>(rng, {1, 3, 64, 64}, 0, 1);
  auto l = f.backbone.ExtractPyramid(image, View::kLeft, NormMode::kEval);
  auto r = f.backbone.ExtractPyramid(image, View::kRight, NormMode::kEval);
  for (int i = 0; i < kNumScales; ++i) {
    EXPECT_EQ(l.decoded[i].vec(), r.decoded[i].vec()) << "scale " << i;
  }
}

TEST(Backbone, CoarsestLevelSeesEveryPixel) {
  Fixture f;
  std::mt19937_64 rng(3);
  TF image = UniformTensor<float>(rng, {1, 3, 64, 64}, 0, 1);
  auto base = f.backbone.ExtractPyramid(image, View::kLeft, NormMode::kEval);
  for (int64_t probe : {int64_t{0}, int64_t{64 * 64 - 1}, int64_t{33 * 64 + 7}}) {
    TF moved = UniformTensor<float>(rng, {1, 3, 64, 64}, 0, 0);
    auto data = moved.mutable_data();
    std::copy(image.data().begin(), image.data().end(), data.begin());
    data[probe] += 0.5f;
    auto p = f.backbone.ExtractPyramid(moved, View::kLeft, NormMode::kEval);
    EXPECT_NE(p.decoded[4].vec(), base.decoded[4].vec()) << probe;
  }
}

TEST(Backbone, SemanticHeadIsADistribution) {
  Fixture f;
  std::mt19937_64 rng(4);
  TF image = UniformTensor<float>(rng, {2, 3, 64, 64}, 0, 1);
  auto p = f.backbone.ExtractPyramid(image, View::kLeft, NormMode::kTrain);
  SemanticMap<float> m = f.backbone.SemanticHead(p.D(2), View::kLeft);
  ASSERT_EQ(m.probs.shape(), (Shape{2, 5, 64, 64}));
  for (int64_t n = 0; n < 2; ++n)
    for (int64_t y = 0; y < 64; y += 7)
      for (int64_t x = 0; x < 64; x += 5) {
        double s = 0;
        for (int64_t c = 0; c < 5; ++c) s += m.probs.at({n, c, y, x});
        EXPECT_NEAR(s, 1.0, 1e-5);
      }
}

TEST(Backbone, ZeroSemanticHeadIsUniform) {
  Fixture f;
  ZeroAll(f.store, "backbone.semantic_head");
  std::mt19937_64 rng(5);
  TF image = UniformTensor<float>(rng, {1, 3, 64, 64}, 0, 1);
  auto p = f.backbone.ExtractPyramid(image, View::kLeft, NormMode::kEval);
  SemanticMap<float> m = f.backbone.SemanticHead(p.D(2), View::kLeft);
  for (float v : m.probs.data()) EXPECT_FLOAT_EQ(v, 0.2f);
}

TEST(Backbone, ProjectionHalvesChannels) {
  Fixture f;
  std::mt19937_64 rng(6);
  TF image = UniformTensor<float>(rng, {1, 3, 64, 64}, 0, 1);
  auto p = f.backbone.ExtractPyramid(image, View::kLeft, NormMode::kEval);
  f.backbone.ProjectFeatures(p, NormMode::kEval);
  EXPECT_EQ(p.Tproj(4).shape(), (Shape{1, 24, 16, 16}));
  for (int i = 0; i < kNumScales; ++i) {
    EXPECT_EQ(p.projected[i].dim(1), f.config.decoder_channels[i] / 2);
  }
  // Parallel baseline projects encoder features to the same width.
  EXPECT_EQ(f.backbone.ProjectEncoderQuarter(p, NormMode::kEval).shape(),
            p.Tproj(4).shape());
}

TEST(Backbone, ZeroProjectionGivesZeros) {
  Fixture f;
  ZeroAll(f.store, "backbone.project.");
  std::mt19937_64 rng(7);
  TF image = UniformTensor<float>(rng, {1, 3, 64, 64}, 0, 1);
  auto p = f.backbone.ExtractPyramid(image, View::kLeft, NormMode::kEval);
  f.backbone.ProjectFeatures(p, NormMode::kEval);
  // Zero gamma and beta make the normalized output exactly 0 after ReLU.
  for (int i = 0; i < kNumScales; ++i) {
    for (float v : p.projected[i].data()) EXPECT_EQ(v, 0.0f);
  }
}

TEST(Backbone, ProjectionGradientReachesEncoder) {
  Fixture f;
  std::mt19937_64 rng(8);
  TF image = UniformTensor<float>(rng, {2, 3, 64, 64}, 0, 1);
  auto p = f.backbone.ExtractPyramid(image, View::kLeft, NormMode::kTrain);
  f.backbone.ProjectFeatures(p, NormMode::kTrain);
  TF probe = testing::RandomTensor<float>(rng, p.Tproj(4).shape());
  Sum(Mul(p.Tproj(4), probe)).Backward();
  TF w = f.store.Find("backbone.encoder.s2.down.conv.weight");
  ASSERT_TRUE(w.has_grad());
  EXPECT_GT(testing::MaxAbs(w.grad()), 0.0);
}

TEST(Backbone, FusionChannelCountAndShape) {
  Fixture f;
  EXPECT_EQ(f.config.fused_input_channels(), 16 + 24 + 32 + 48 + 64);
  std::mt19937_64 rng(9);
  TF image = UniformTensor<float>(rng, {1, 3, 64, 64}, 0, 1);
  auto p = f.backbone.ExtractPyramid(image, View::kLeft, NormMode::kEval);
  f.backbone.ProjectFeatures(p, NormMode::kEval);
  EXPECT_EQ(f.backbone.FuseFeatures(p).F.shape(), (Shape{1, 5, 64, 64}));
}

TEST(Backbone, ZeroProjectionFusesToBias) {
  Fixture f;
  ZeroAll(f.store, "backbone.project.");
  TF bias = f.store.Find("backbone.fuse.bias");
  const std::vector<float> b{0.5f, -1.0f, 2.0f, 0.0f, 3.0f};
  std::copy(b.begin(), b.end(), bias.mutable_data().begin());
  std::mt19937_64 rng(10);
  TF image = UniformTensor<float>(rng, {1, 3, 64, 64}, 0, 1);
  auto p = f.backbone.ExtractPyramid(image, View::kLeft, NormMode::kEval);
  f.backbone.ProjectFeatures(p, NormMode::kEval);
  TF F = f.backbone.FuseFeatures(p).F;
  for (int64_t c = 0; c < 5; ++c)
    for (int64_t y = 0; y < 64; y += 9)
      for (int64_t x = 0; x < 64; x += 11) EXPECT_EQ(F.at({0, c, y, x}), b[c]);
}

TEST(Backbone, ParameterGroupsArePartitionedByName) {
  Fixture f;
  const auto semantic = f.backbone.SemanticDecoderParameterNames();
  const auto shared = f.backbone.SharedDecoderParameterNames();
  EXPECT_FALSE(shared.empty());
  EXPECT_GT(semantic.size(), shared.size());
  for (const auto& n : shared) {
    EXPECT_NE(std::find(semantic.begin(), semantic.end(), n), semantic.end()) << n;
  }
  for (const auto& n : semantic) EXPECT_EQ(n.rfind("backbone.encoder", 0), std::string::npos);
}

TEST(BackboneConfig, RejectsOddDecoderWidths) {
  BackboneConfig c;
  c.decoder_channels[1] = 47;
  EXPECT_THROW(c.Validate(), std::invalid_argument);
}

}  // namespace
}  // namespace semstereo
