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
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "json.hpp"
#include "semstereo/metrics.hpp"

namespace semstereo {
namespace {

TEST(StereoMetrics, HandWorkedErrors) {
  const std::vector<float> gt{0, 0, 0};
  const std::vector<float> pred{1, -1, 4};
  StereoMetrics m = ComputeStereoMetrics(pred, gt, {});
  EXPECT_DOUBLE_EQ(m.epe, 2.0);
  EXPECT_DOUBLE_EQ(m.d1, 1.0 / 3.0);
  EXPECT_EQ(m.valid_pixels, 3);
  EXPECT_FALSE(m.empty);
}

TEST(StereoMetrics, PerfectPrediction) {
  const std::vector<float> d{1.5f, -3.0f, 7.25f};
  StereoMetrics m = ComputeStereoMetrics(d, d, {});
  EXPECT_EQ(m.epe, 0.0);
  EXPECT_EQ(m.d1, 0.0);
}

TEST(StereoMetrics, ThresholdIsStrict) {
  const std::vector<float> gt{0, 0};
  const std::vector<float> pred{3, 3.001f};
  EXPECT_DOUBLE_EQ(ComputeStereoMetrics(pred, gt, {}).d1, 0.5);
}

TEST(StereoMetrics, NoValidPixelsIsEmptyNotNan) {
  const std::vector<float> gt{std::numeric_limits<float>::quiet_NaN(), 40.f};
  const std::vector<float> pred{0, 0};
  const auto mask = DisparityValidMask(gt, 16);
  EXPECT_EQ(mask, (std::vector<uint8_t>{0, 0}));
  StereoMetrics m = ComputeStereoMetrics(pred, gt, mask);
  EXPECT_TRUE(m.empty);
  EXPECT_EQ(m.valid_pixels, 0);
  EXPECT_FALSE(std::isnan(m.epe));
  EXPECT_FALSE(std::isnan(m.d1));
}

TEST(StereoMetrics, MatchesScalarOracleOnRandomInstances) {
  std::mt19937_64 g(1);
  std::uniform_real_distribution<float> disp(-20.f, 20.f);
  std::normal_distribution<float> noise(0.f, 3.f);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<float> gt(256), pred(256);
    for (int i = 0; i < 256; ++i) {
      gt[i] = disp(g);
      pred[i] = gt[i] + noise(g);
    }
    const auto valid = DisparityValidMask(gt, 16);
    double sum = 0;
    int64_t bad = 0, n = 0;
    for (int y = 0; y < 16; ++y)
      for (int x = 0; x < 16; ++x) {
        const int i = y * 16 + x;
        if (!(std::abs(gt[i]) < 16.f)) continue;
        const double e = std::abs(static_cast<double>(pred[i]) - gt[i]);
        sum += e;
        bad += e > 3.0;
        ++n;
      }
    StereoMetrics m = ComputeStereoMetrics(pred, gt, valid);
    EXPECT_EQ(m.valid_pixels, n);
    EXPECT_EQ(m.epe, sum / n) << trial;
    EXPECT_EQ(m.d1, static_cast<double>(bad) / n) << trial;
  }
}

TEST(SegMetrics, PerfectPredictionAllClasses) {
  std::vector<int32_t> gt;
  for (int i = 0; i < 50; ++i) gt.push_back(i % 5);
  SegMetrics m = ComputeSegMetrics(gt, gt, 5);
  EXPECT_EQ(m.pa, 1.0);
  EXPECT_EQ(m.miou, 1.0);
  for (double v : m.iou) EXPECT_EQ(v, 1.0);
}

TEST(SegMetrics, TwoByTwoHandBuiltConfusion) {
  const std::vector<int32_t> gt{0, 0, 1, 1};
  const std::vector<int32_t> pred{0, 1, 1, 1};
  SegMetrics m = ComputeSegMetrics(pred, gt, 5);
  EXPECT_DOUBLE_EQ(m.pa, 0.75);
  EXPECT_DOUBLE_EQ(m.iou[0], 0.5);
  EXPECT_DOUBLE_EQ(m.iou[1], 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(m.miou, 7.0 / 12.0);
  EXPECT_FALSE(m.present[2]);
}

TEST(SegMetrics, IgnoredPixelsAreExcluded) {
  const std::vector<int32_t> gt{0, 0, 1, 1};
  const std::vector<int32_t> pred{0, 1, 1, 1};
  const std::vector<int32_t> gt_masked{0, 255, 1, 1};
  EXPECT_DOUBLE_EQ(ComputeSegMetrics(pred, gt, 5).pa, 0.75);
  SegMetrics m = ComputeSegMetrics(pred, gt_masked, 5);
  EXPECT_DOUBLE_EQ(m.pa, 1.0);
  EXPECT_EQ(m.pixels, 3);
}

TEST(SegMetrics, ConfusionMatrixRowsAreGroundTruth) {
  ConfusionMatrix cm(3);
  const std::vector<int32_t> gt{0, 0, 2};
  const std::vector<int32_t> pred{1, 1, 2};
  cm.Add(pred, gt);
  EXPECT_EQ(cm.at(0, 1), 2);
  EXPECT_EQ(cm.at(2, 2), 1);
  EXPECT_EQ(cm.total(), 3);
  EXPECT_TRUE(cm.PresentInGt(0));
  EXPECT_FALSE(cm.PresentInGt(1));
  EXPECT_TRUE(cm.PresentInPred(1));
}

TEST(SegMetrics, MatchesScalarOracleOnRandomInstances) {
  std::mt19937_64 g(2);
  std::uniform_int_distribution<int32_t> cls(0, 4);
  std::bernoulli_distribution ignore(0.05), keep(0.7);
  for (int trial = 0; trial < 100; ++trial) {
    // Some instances leave classes out of the ground truth on purpose.
    const int32_t missing = trial % 7 < 5 ? trial % 7 : -1;
    std::vector<int32_t> gt(256), pred(256);
    for (int i = 0; i < 256; ++i) {
      int32_t l = cls(g);
      if (l == missing) l = (l + 1) % 5;
      gt[i] = ignore(g) ? 255 : l;
      pred[i] = keep(g) ? l : cls(g);
    }
    // Oracle: loop over pixels per class.
    int64_t correct = 0, total = 0;
    for (int i = 0; i < 256; ++i) {
      if (gt[i] == 255) continue;
      ++total;
      correct += pred[i] == gt[i];
    }
    double iou_sum = 0;
    int present = 0;
    std::vector<double> iou(5, 0.0);
    for (int c = 0; c < 5; ++c) {
      int64_t tp = 0, fp = 0, fn = 0, in_gt = 0;
      for (int i = 0; i < 256; ++i) {
        if (gt[i] == 255) continue;
        if (gt[i] == c) ++in_gt;
        if (gt[i] == c && pred[i] == c) ++tp;
        if (gt[i] != c && pred[i] == c) ++fp;
        if (gt[i] == c && pred[i] != c) ++fn;
      }
      if (tp + fp + fn > 0) iou[c] = static_cast<double>(tp) / (tp + fp + fn);
      if (in_gt > 0) {
        iou_sum += iou[c];
        ++present;
      }
    }
    SegMetrics m = ComputeSegMetrics(pred, gt, 5);
    EXPECT_EQ(m.pa, static_cast<double>(correct) / total) << trial;
    for (int c = 0; c < 5; ++c) EXPECT_EQ(m.iou[c], iou[c]) << trial << " c" << c;
    EXPECT_EQ(m.miou, iou_sum / present) << trial;
  }
}

TEST(EvalReport, TextAndJsonCarryTheHeadlineMetrics) {
  EvalAccumulator acc(5, 16, DefaultClassNames());
  const std::vector<float> gt{1, 2, 3, 4};
  const std::vector<float> pred{1, 2, 3, 9};
  acc.AddStereo(pred, gt);
  const std::vector<int32_t> lg{0, 0, 1, 1};
  const std::vector<int32_t> lp{0, 1, 1, 1};
  acc.AddSegmentation(lp, lg);
  EvalReport r = acc.Finalize();
  EXPECT_DOUBLE_EQ(r.epe, 1.25);
  EXPECT_DOUBLE_EQ(r.d1, 0.25);
  const std::string text = r.ToText();
  for (const char* key : {"epe=", "d1=", "pa=", "miou=", "iou.ground=",
                          "iou.bridge=absent"}) {
    EXPECT_NE(text.find(key), std::string::npos) << key;
  }
  const auto j = nlohmann::json::parse(r.ToJson());
  EXPECT_DOUBLE_EQ(j.at("epe").get<double>(), 1.25);
  EXPECT_DOUBLE_EQ(j.at("miou").get<double>(), 7.0 / 12.0);
  EXPECT_TRUE(j.at("iou.water").is_null());
  EXPECT_DOUBLE_EQ(j.at("iou.trees").get<double>(), 2.0 / 3.0);
}

TEST(EvalAccumulator, IsPixelWeightedAcrossSamples) {
  EvalAccumulator acc(5, 16);
  const std::vector<float> a_gt{0}, a_pred{4};
  const std::vector<float> b_gt{0, 0, 0}, b_pred{0, 0, 0};
  acc.AddStereo(a_pred, a_gt);
  acc.AddStereo(b_pred, b_gt);
  EXPECT_DOUBLE_EQ(acc.Finalize().epe, 1.0);
}

// ---- category disparity statistics ----

TEST(CategoryStats, ConstantDisparityFillsOneBin) {
  CategoryStatsAccumulator acc(5, 16);
  const std::vector<int32_t> labels(100, 2);
  const std::vector<float> disp(100, 5.3f);
  acc.Add(labels, disp);
  CategoryDisparityStats s = acc.Finalize();
  ASSERT_EQ(s.classes.size(), 5u);
  const auto& c = s.classes[2];
  EXPECT_EQ(c.count, 100);
  EXPECT_EQ(c.stddev, 0.0);
  EXPECT_EQ(c.iqr, 0.0);
  int nonzero = 0;
  for (int64_t k : c.counts) nonzero += k > 0;
  EXPECT_EQ(nonzero, 1);
  // Bin of width 0.5 starting at -16.
  EXPECT_EQ(c.counts[static_cast<size_t>((5.3 + 16) / 0.5)], 100);
  for (int k : {0, 1, 3, 4}) EXPECT_TRUE(s.classes[k].empty);
}

TEST(CategoryStats, CountsPartitionTheValidPixels) {
  std::mt19937_64 g(3);
  std::uniform_int_distribution<int32_t> cls(0, 4);
  std::uniform_real_distribution<float> d(-20.f, 20.f);
  CategoryStatsAccumulator acc(5, 16);
  int64_t valid = 0;
  for (int sample = 0; sample < 10; ++sample) {
    std::vector<int32_t> labels(64);
    std::vector<float> disp(64);
    for (int i = 0; i < 64; ++i) {
      labels[i] = cls(g);
      disp[i] = d(g);
      valid += std::abs(disp[i]) < 16.f;
    }
    acc.Add(labels, disp);
  }
  CategoryDisparityStats s = acc.Finalize();
  EXPECT_EQ(s.total_valid, valid);
  int64_t sum = 0;
  for (const auto& c : s.classes) {
    int64_t bins = 0;
    for (int64_t k : c.counts) bins += k;
    EXPECT_EQ(bins, c.count);
    EXPECT_EQ(c.counts.size(), 64u);
    EXPECT_EQ(c.bin_edges.front(), -16.0);
    EXPECT_EQ(c.bin_edges.back(), 16.0);
    sum += c.count;
  }
  EXPECT_EQ(sum, valid);
}

TEST(CategoryStats, SummaryMatchesDirectComputation) {
  const std::vector<int32_t> labels{1, 1, 1, 1, 1};
  const std::vector<float> disp{1, 2, 3, 4, 10};
  CategoryStatsAccumulator acc(5, 16);
  acc.Add(labels, disp);
  const auto& c = acc.Finalize().classes[1];
  EXPECT_DOUBLE_EQ(c.mean, 4.0);
  EXPECT_DOUBLE_EQ(c.stddev, std::sqrt((9 + 4 + 1 + 0 + 36) / 5.0));
  EXPECT_DOUBLE_EQ(c.q1, 2.0);
  EXPECT_DOUBLE_EQ(c.q3, 4.0);
  EXPECT_DOUBLE_EQ(c.iqr, 2.0);
}

TEST(CategoryStats, QuantileInterpolatesLinearly) {
  const std::vector<double> v{0, 10};
  EXPECT_DOUBLE_EQ(SortedQuantile(v, 0.25), 2.5);
  EXPECT_DOUBLE_EQ(SortedQuantile(v, 1.0), 10.0);
}

TEST(CategoryStats, JsonMarksEmptyClasses) {
  CategoryStatsAccumulator acc(5, 16, 64, DefaultClassNames());
  const std::vector<int32_t> labels{0};
  const std::vector<float> disp{1};
  acc.Add(labels, disp);
  const auto j = nlohmann::json::parse(acc.Finalize().ToJson());
  ASSERT_TRUE(j.contains("classes"));
  EXPECT_EQ(j["classes"].size(), 5u);
  EXPECT_EQ(j["classes"]["ground"]["count"], 1);
  EXPECT_FALSE(j["classes"]["ground"]["empty"].get<bool>());
  EXPECT_TRUE(j["classes"]["trees"]["empty"].get<bool>());
}

}  // namespace
}  // namespace semstereo
