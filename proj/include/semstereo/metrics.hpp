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

// Stereo (EPE, D1) and segmentation (PA, IoU, mIoU) metrics, plus the
// per-category disparity distribution analyzer.

#ifndef SEMSTEREO_METRICS_HPP_
#define SEMSTEREO_METRICS_HPP_

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace semstereo {

inline constexpr double kD1Threshold = 3.0;

// Ground, Trees, Building Roof, Water, Bridge/Elevated Road.
const std::vector<std::string>& DefaultClassNames();

struct StereoMetrics {
  double epe = 0.0;
  double d1 = 0.0;
  int64_t valid_pixels = 0;
  bool empty = true;
};

// valid may be empty, meaning every pixel counts.
StereoMetrics ComputeStereoMetrics(std::span<const float> pred,
                                   std::span<const float> gt,
                                   std::span<const uint8_t> valid,
                                   double threshold = kD1Threshold);

// Valid-pixel mask: finite and |d| < max_disparity.
std::vector<uint8_t> DisparityValidMask(std::span<const float> gt,
                                        int max_disparity);

class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(int num_classes);

  // Pixels whose ground truth equals ignore_index are skipped.
  void Add(std::span<const int32_t> pred, std::span<const int32_t> gt,
           int32_t ignore_index = 255);

  int num_classes() const { return n_; }
  int64_t at(int gt, int pred) const { return counts_[gt * n_ + pred]; }
  int64_t total() const;
  bool PresentInGt(int c) const;
  bool PresentInPred(int c) const;

 private:
  int n_;
  std::vector<int64_t> counts_;  // row = ground truth, column = prediction
};

struct SegMetrics {
  double pa = 0.0;
  std::vector<double> iou;      // 0 for classes absent from pred and gt
  std::vector<bool> present;    // class appears in the ground truth
  double miou = 0.0;            // mean over present classes
  int64_t pixels = 0;
};

SegMetrics ComputeSegMetrics(const ConfusionMatrix& cm);
SegMetrics ComputeSegMetrics(std::span<const int32_t> pred,
                             std::span<const int32_t> gt, int num_classes,
                             int32_t ignore_index = 255);

struct EvalReport {
  double epe = 0.0;
  double d1 = 0.0;
  double pa = 0.0;
  double miou = 0.0;
  std::vector<double> iou_per_class;
  std::vector<bool> class_present;
  int64_t valid_pixel_count = 0;
  bool stereo_empty = true;
  std::vector<std::string> class_names;

  // One key=value per line.
  std::string ToText() const;
  std::string ToJson() const;
};

// Sums per-sample statistics in a fixed order so dataset-level metrics are
// pixel-weighted and deterministic.
class EvalAccumulator {
 public:
  EvalAccumulator(int num_classes, int max_disparity,
                  std::vector<std::string> class_names = {});

  void AddStereo(std::span<const float> pred, std::span<const float> gt);
  void AddSegmentation(std::span<const int32_t> pred,
                       std::span<const int32_t> gt);
  EvalReport Finalize() const;

 private:
  int max_disparity_;
  std::vector<std::string> class_names_;
  double abs_error_sum_ = 0.0;
  int64_t bad_pixels_ = 0;
  int64_t valid_pixels_ = 0;
  ConfusionMatrix cm_;
};

struct ClassDisparityStats {
  std::string name;
  std::vector<double> bin_edges;  // bins + 1 edges
  std::vector<int64_t> counts;
  int64_t count = 0;
  double mean = 0.0;
  double stddev = 0.0;  // population
  double q1 = 0.0;
  double q3 = 0.0;
  double iqr = 0.0;
  bool empty = true;
};

struct CategoryDisparityStats {
  int max_disparity = 0;
  int bins = 64;
  std::vector<ClassDisparityStats> classes;
  int64_t total_valid = 0;

  std::string ToText() const;
  std::string ToJson() const;
};

class CategoryStatsAccumulator {
 public:
  CategoryStatsAccumulator(int num_classes, int max_disparity, int bins = 64,
                           std::vector<std::string> class_names = {});

  // labels [H*W], disparity [H*W]; invalid disparities are skipped.
  void Add(std::span<const int32_t> labels, std::span<const float> disparity);
  CategoryDisparityStats Finalize() const;

 private:
  int max_disparity_;
  int bins_;
  std::vector<std::string> names_;
  std::vector<std::vector<float>> values_;
};

// Linear-interpolated quantile of sorted data (q in [0,1]).
double SortedQuantile(std::span<const double> sorted, double q);

}  // namespace semstereo

#endif  // SEMSTEREO_METRICS_HPP_
