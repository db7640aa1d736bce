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

#include <cmath>
#include <limits>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "semstereo/gradcheck.hpp"
#include "semstereo/supervision.hpp"
#include "test_util.hpp"

namespace semstereo {
namespace {

using TD = Tensor<double>;
using testing::RandomTensor;

constexpr int kN = 5;

std::vector<int32_t> RandomLabels(std::mt19937_64& g, size_t n, int classes) {
  std::uniform_int_distribution<int32_t> d(0, classes - 1);
  std::vector<int32_t> out(n);
  for (auto& l : out) l = d(g);
  return out;
}

TEST(OneHot, EncodesAndBlanksIgnoredPixels) {
  const std::vector<int32_t> labels{0, 4, kIgnoreLabel, 2};
  TD h = OneHot<double>(labels, 1, kN, 2, 2);
  ASSERT_EQ(h.shape(), (Shape{1, kN, 2, 2}));
  for (int64_t c = 0; c < kN; ++c) {
    EXPECT_EQ(h.at({0, c, 0, 0}), c == 0 ? 1.0 : 0.0);
    EXPECT_EQ(h.at({0, c, 0, 1}), c == 4 ? 1.0 : 0.0);
    EXPECT_EQ(h.at({0, c, 1, 0}), 0.0);
    EXPECT_EQ(h.at({0, c, 1, 1}), c == 2 ? 1.0 : 0.0);
  }
}

// ---- left-right semantic consistency ----

TEST(PseudoRight, ZeroDisparityKeepsLabels) {
  std::mt19937_64 g(1);
  TD label = OneHot<double>(RandomLabels(g, 2 * 6 * 7, kN), 2, kN, 6, 7);
  PseudoLabels<double> p = MakePseudoRight(label, TD::Zeros({2, 1, 6, 7}));
  EXPECT_EQ(p.labels.vec(), label.vec());
  for (double m : p.mask.data()) EXPECT_EQ(m, 1.0);
}

TEST(PseudoRight, StripesShiftedByTheirDisparity) {
  // Vertical class stripes; the right view sees column x of the left view
  // at x - d, so right labels at x are left labels at x + d.
  const int64_t h = 3, w = 16, d = 3;
  std::vector<int32_t> left(h * w), right(h * w);
  for (int64_t y = 0; y < h; ++y)
    for (int64_t x = 0; x < w; ++x) {
      left[y * w + x] = (x / 3) % kN;
      right[y * w + x] = ((x + d) / 3) % kN;
    }
  TD label = OneHot<double>(left, 1, kN, h, w);
  PseudoLabels<double> p =
      MakePseudoRight(label, TD::Full({1, 1, h, w}, static_cast<double>(d)));
  TD want = OneHot<double>(right, 1, kN, h, w);
  for (int64_t y = 0; y < h; ++y)
    for (int64_t x = 0; x + d < w; ++x) {
      EXPECT_EQ(p.mask.at({0, 0, y, x}), 1.0);
      for (int64_t c = 0; c < kN; ++c) {
        EXPECT_EQ(p.labels.at({0, c, y, x}), want.at({0, c, y, x}));
      }
    }
  for (int64_t y = 0; y < h; ++y) EXPECT_EQ(p.mask.at({0, 0, y, w - 1}), 0.0);
}

TEST(PseudoRight, OutOfFrameDisparityMasksEverything) {
  std::mt19937_64 g(2);
  TD label = OneHot<double>(RandomLabels(g, 4 * 8, kN), 1, kN, 4, 8);
  for (double d : {9.0, -9.0, 100.0}) {
    PseudoLabels<double> p = MakePseudoRight(label, TD::Full({1, 1, 4, 8}, d));
    for (double m : p.mask.data()) EXPECT_EQ(m, 0.0);
    TD P_r = Softmax(RandomTensor<double>(g, {1, kN, 4, 8}), 1);
    EXPECT_EQ(LrscLoss(P_r, p.labels, p.mask).item(), 0.0);
  }
}

TEST(Lrsc, MatchedOneHotIsZero) {
  std::mt19937_64 g(3);
  TD target = OneHot<double>(RandomLabels(g, 2 * 4 * 4, kN), 2, kN, 4, 4);
  const double loss = LrscLoss(target, target, TD::Full({2, 1, 4, 4}, 1.0)).item();
  EXPECT_LE(loss, 1e-7);
  EXPECT_GE(loss, 0.0);
}

TEST(Lrsc, UniformAgainstOneHotIsLogN) {
  std::mt19937_64 g(4);
  TD target = OneHot<double>(RandomLabels(g, 3 * 5 * 2, kN), 3, kN, 5, 2);
  TD uniform = TD::Full({3, kN, 5, 2}, 1.0 / kN);
  EXPECT_NEAR(LrscLoss(uniform, target, TD::Full({3, 1, 5, 2}, 1.0)).item(),
              std::log(5.0), 1e-6);
}

TEST(Lrsc, SelfSupervisedPathDifferentiatesThroughLeftProbabilities) {
  std::mt19937_64 g(5);
  TD logits_l = RandomTensor<double>(g, {1, kN, 3, 8});
  TD logits_r = RandomTensor<double>(g, {1, kN, 3, 8});
  std::uniform_real_distribution<double> frac(0.1, 0.9);
  std::vector<double> dv(24);
  for (auto& v : dv) v = std::floor(frac(g) * 4) + frac(g);
  TD d = TD::FromData({1, 1, 3, 8}, dv);
  const double err = CheckGradients(
      [&](const std::vector<TD>& in) {
        TD P_l = Softmax(in[0], 1);
        PseudoLabels<double> p = MakePseudoRight(P_l, in[2]);
        return LrscLoss(Softmax(in[1], 1), p.labels, p.mask);
      },
      {logits_l, logits_r, d}, 1e-5);
  EXPECT_LE(err, 1e-4);
}

// ---- segmentation ----

TEST(SegmentationLoss, PerfectPrediction) {
  std::mt19937_64 g(6);
  const auto labels = RandomLabels(g, 2 * 8 * 8, kN);
  TD P = OneHot<double>(labels, 2, kN, 8, 8);
  SegLoss<double> s = SegmentationLoss(P, labels);
  EXPECT_LE(s.ce.item(), 1e-7);
  EXPECT_LE(s.dice.item(), 1e-3);
  EXPECT_EQ(s.pixels, 128);
}

TEST(SegmentationLoss, UniformCrossEntropyIsLogN) {
  std::mt19937_64 g(7);
  const auto labels = RandomLabels(g, 8 * 8, kN);
  SegLoss<double> s = SegmentationLoss(TD::Full({1, kN, 8, 8}, 0.2), labels);
  EXPECT_NEAR(s.ce.item(), std::log(5.0), 1e-6);
}

// Per-pixel scalar loops, written without reference to the library code.
TEST(SegmentationLoss, MatchesScalarOracle) {
  for (uint64_t seed = 0; seed < 10; ++seed) {
    std::mt19937_64 g(100 + seed);
    const int64_t b = 1, h = 8, w = 8;
    auto labels = RandomLabels(g, b * h * w, kN);
    labels[3] = kIgnoreLabel;
    labels[17] = kIgnoreLabel;
    TD P = Softmax(RandomTensor<double>(g, {b, kN, h, w}, 2.0), 1);
    double ce = 0;
    int count = 0;
    double inter[kN] = {}, sp[kN] = {}, sg[kN] = {};
    for (int64_t y = 0; y < h; ++y)
      for (int64_t x = 0; x < w; ++x) {
        const int32_t l = labels[y * w + x];
        if (l == kIgnoreLabel) continue;
        ++count;
        ce -= std::log(std::max(P.at({0, l, y, x}), 1e-8));
        for (int c = 0; c < kN; ++c) {
          const double p = P.at({0, c, y, x});
          sp[c] += p;
          if (c == l) {
            inter[c] += p;
            sg[c] += 1;
          }
        }
      }
    ce /= count;
    double dice = 0;
    for (int c = 0; c < kN; ++c) dice += (2 * inter[c] + 1) / (sp[c] + sg[c] + 1);
    dice = 1 - dice / kN;
    SegLoss<double> s = SegmentationLoss(P, labels);
    EXPECT_NEAR(s.ce.item(), ce, 1e-6);
    EXPECT_NEAR(s.dice.item(), dice, 1e-6);
    EXPECT_EQ(s.pixels, count);
  }
}

// ---- disparity ----

std::array<TD, 4> Stages(const TD& d) { return {d, d, d, d}; }

TEST(DisparityLoss, QuadraticAndLinearBranches) {
  TD gt = TD::Full({1, 1, 4, 4}, 3.0);
  DispLoss<double> half = DisparityLoss(Stages(TD::Full({1, 1, 4, 4}, 3.5)), gt, 16);
  DispLoss<double> two = DisparityLoss(Stages(TD::Full({1, 1, 4, 4}, 1.0)), gt, 16);
  for (int i = 0; i < 4; ++i) {
    EXPECT_NEAR(half.stage[i].item(), 0.125, 1e-15);
    EXPECT_NEAR(two.stage[i].item(), 1.5, 1e-15);
  }
  EXPECT_EQ(half.valid_pixels, 16);
}

TEST(DisparityLoss, InvalidTargetsAreSkipped) {
  const double nan = std::numeric_limits<double>::quiet_NaN();
  TD gt = TD::FromData({1, 1, 1, 5}, {0.0, nan, 16.0, -16.0, -999.0});
  TD mask = ValidDisparityMask(gt, 16);
  EXPECT_EQ(mask.vec(), (std::vector<double>{1, 0, 0, 0, 0}));
  TD pred = TD::FromData({1, 1, 1, 5}, {2.0, 0, 0, 0, 0});
  pred.set_requires_grad(true);
  DispLoss<double> l = DisparityLoss(Stages(pred), gt, 16);
  EXPECT_EQ(l.valid_pixels, 1);
  EXPECT_NEAR(l.stage[0].item(), 1.5, 1e-15);
  Sum(l.stage[0]).Backward();
  EXPECT_EQ(pred.grad()[0], 1.0);
  for (int i = 1; i < 5; ++i) EXPECT_EQ(pred.grad()[i], 0.0);
  EXPECT_TRUE(std::isfinite(l.stage[0].item()));
}

TEST(DisparityLoss, NoValidPixelsGivesZeroAndAWarning) {
  TD gt = TD::Full({1, 1, 2, 2}, 40.0);
  DispLoss<double> l = DisparityLoss(Stages(TD::Zeros({1, 1, 2, 2})), gt, 16);
  EXPECT_EQ(l.valid_pixels, 0);
  EXPECT_EQ(l.stage[0].item(), 0.0);
  EXPECT_GT(l.empty_warnings, 0);
}

TEST(DisparityLoss, ShapeMismatchThrows) {
  EXPECT_THROW(DisparityLoss(Stages(TD::Zeros({1, 1, 2, 2})), TD::Zeros({1, 1, 2, 3}), 16),
               std::invalid_argument);
}

// ---- joint objective ----

DispLoss<double> ConstantDisp(std::array<double, 4> v) {
  DispLoss<double> d;
  for (int i = 0; i < 4; ++i) d.stage[i] = TD::FromData({1}, {v[i]});
  d.valid_pixels = 1;
  return d;
}

TEST(JointLoss, LambdaWeightsComposeByHand) {
  const std::array<double, 4> v{0.7, 1.3, 2.9, 0.4};
  LossWeights w;
  w.alpha = 0;
  w.beta = 0;
  LossReport<double> r = JointLoss<double>(ConstantDisp(v), nullptr, nullptr, 0, w);
  EXPECT_NEAR(r.total.item(), 1.0 * 0.7 + 0.6 * 1.3 + 0.5 * 2.9 + 0.3 * 0.4, 1e-15);
}

TEST(JointLoss, ZeroAlphaBetaLeavesDisparityOnly) {
  SegLoss<double> seg{TD::FromData({1}, {2.0}), TD::FromData({1}, {3.0}), 10};
  TD lrsc = TD::FromData({1}, {4.0});
  LossWeights w;
  w.alpha = 0;
  w.beta = 0;
  LossReport<double> r = JointLoss<double>(ConstantDisp({1, 1, 1, 1}), &seg, &lrsc, 10, w);
  EXPECT_NEAR(r.total.item(), 2.4, 1e-15);
}

TEST(JointLoss, UnitComponentsWithDefaultsGiveFivePointFour) {
  SegLoss<double> seg{TD::FromData({1}, {1.0}), TD::FromData({1}, {1.0}), 10};
  TD lrsc = TD::FromData({1}, {1.0});
  LossReport<double> r =
      JointLoss(ConstantDisp({1, 1, 1, 1}), &seg, &lrsc, 10, LossWeights{});
  EXPECT_NEAR(r.total.item(), 5.4, 1e-15);
  EXPECT_EQ(r.seg_ce, 1.0);
  EXPECT_EQ(r.lrsc, 1.0);
  EXPECT_EQ(r.lrsc_pixels, 10);
}

}  // namespace
}  // namespace semstereo
