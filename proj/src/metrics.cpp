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

#include "semstereo/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <fmt/format.h>

#include "json.hpp"

namespace semstereo {

const std::vector<std::string>& DefaultClassNames() {
  static const std::vector<std::string> kNames{"ground", "trees",
                                               "building_roof", "water",
                                               "bridge"};
  return kNames;
}

namespace {

std::vector<std::string> NamesOrDefault(std::vector<std::string> names,
                                        int num_classes) {
  if (names.empty()) {
    const auto& d = DefaultClassNames();
    for (int c = 0; c < num_classes; ++c) {
      names.push_back(c < static_cast<int>(d.size()) ? d[c]
                                                     : fmt::format("class{}", c));
    }
  }
  if (static_cast<int>(names.size()) != num_classes) {
    throw std::invalid_argument(fmt::format(
        "{} class names for {} classes", names.size(), num_classes));
  }
  return names;
}

// Keeps the serialized forms stable: fixed precision, no locale.
std::string Num(double v) { return fmt::format("{:.6f}", v); }

}  // namespace

StereoMetrics ComputeStereoMetrics(std::span<const float> pred,
                                   std::span<const float> gt,
                                   std::span<const uint8_t> valid,
                                   double threshold) {
  if (pred.size() != gt.size() || (!valid.empty() && valid.size() != gt.size())) {
    throw std::invalid_argument(fmt::format(
        "stereo metrics: sizes pred={} gt={} valid={}", pred.size(), gt.size(),
        valid.size()));
  }
  double sum = 0.0;
  int64_t bad = 0;
  int64_t n = 0;
  for (size_t i = 0; i < gt.size(); ++i) {
    if (!valid.empty() && valid[i] == 0) continue;
    const double e = std::abs(static_cast<double>(pred[i]) - gt[i]);
    sum += e;
    if (e > threshold) ++bad;
    ++n;
  }
  StereoMetrics m;
  m.valid_pixels = n;
  m.empty = n == 0;
  if (n > 0) {
    m.epe = sum / static_cast<double>(n);
    m.d1 = static_cast<double>(bad) / static_cast<double>(n);
  }
  return m;
}

std::vector<uint8_t> DisparityValidMask(std::span<const float> gt,
                                        int max_disparity) {
  std::vector<uint8_t> mask(gt.size());
  for (size_t i = 0; i < gt.size(); ++i) {
    mask[i] = std::isfinite(gt[i]) &&
              std::abs(gt[i]) < static_cast<float>(max_disparity);
  }
  return mask;
}

ConfusionMatrix::ConfusionMatrix(int num_classes)
    : n_(num_classes), counts_(static_cast<size_t>(num_classes) * num_classes) {
  if (num_classes < 1) throw std::invalid_argument("num_classes must be >= 1");
}

void ConfusionMatrix::Add(std::span<const int32_t> pred,
                          std::span<const int32_t> gt, int32_t ignore_index) {
  if (pred.size() != gt.size()) {
    throw std::invalid_argument(fmt::format(
        "confusion matrix: {} predictions for {} labels", pred.size(),
        gt.size()));
  }
  for (size_t i = 0; i < gt.size(); ++i) {
    if (gt[i] == ignore_index) continue;
    if (gt[i] < 0 || gt[i] >= n_ || pred[i] < 0 || pred[i] >= n_) {
      throw std::invalid_argument(fmt::format(
          "confusion matrix: label pair ({}, {}) outside [0,{})", gt[i],
          pred[i], n_));
    }
    ++counts_[gt[i] * n_ + pred[i]];
  }
}

int64_t ConfusionMatrix::total() const {
  int64_t t = 0;
  for (int64_t c : counts_) t += c;
  return t;
}

bool ConfusionMatrix::PresentInGt(int c) const {
  for (int p = 0; p < n_; ++p) {
    if (at(c, p) > 0) return true;
  }
  return false;
}

bool ConfusionMatrix::PresentInPred(int c) const {
  for (int g = 0; g < n_; ++g) {
    if (at(g, c) > 0) return true;
  }
  return false;
}

SegMetrics ComputeSegMetrics(const ConfusionMatrix& cm) {
  const int n = cm.num_classes();
  SegMetrics m;
  m.iou.assign(n, 0.0);
  m.present.assign(n, false);
  m.pixels = cm.total();
  int64_t trace = 0;
  for (int c = 0; c < n; ++c) trace += cm.at(c, c);
  if (m.pixels > 0) {
    m.pa = static_cast<double>(trace) / static_cast<double>(m.pixels);
  }
  double iou_sum = 0.0;
  int present = 0;
  for (int c = 0; c < n; ++c) {
    const int64_t tp = cm.at(c, c);
    int64_t fp = 0, fn = 0;
    for (int k = 0; k < n; ++k) {
      if (k == c) continue;
      fp += cm.at(k, c);
      fn += cm.at(c, k);
    }
    const int64_t denom = tp + fp + fn;
    if (denom > 0) {
      m.iou[c] = static_cast<double>(tp) / static_cast<double>(denom);
    }
    m.present[c] = cm.PresentInGt(c);
    if (m.present[c]) {
      iou_sum += m.iou[c];
      ++present;
    }
  }
  if (present > 0) m.miou = iou_sum / present;
  return m;
}

SegMetrics ComputeSegMetrics(std::span<const int32_t> pred,
                             std::span<const int32_t> gt, int num_classes,
                             int32_t ignore_index) {
  ConfusionMatrix cm(num_classes);
  cm.Add(pred, gt, ignore_index);
  return ComputeSegMetrics(cm);
}

std::string EvalReport::ToText() const {
  std::string out;
  out += fmt::format("epe={}\n", stereo_empty ? "nan" : Num(epe));
  out += fmt::format("d1={}\n", stereo_empty ? "nan" : Num(d1));
  out += fmt::format("pa={}\n", Num(pa));
  out += fmt::format("miou={}\n", Num(miou));
  for (size_t c = 0; c < iou_per_class.size(); ++c) {
    out += fmt::format("iou.{}={}\n", class_names[c],
                       class_present[c] ? Num(iou_per_class[c]) : "absent");
  }
  out += fmt::format("valid_pixels={}\n", valid_pixel_count);
  return out;
}

std::string EvalReport::ToJson() const {
  nlohmann::ordered_json j;
  if (stereo_empty) {
    j["epe"] = nullptr;
    j["d1"] = nullptr;
  } else {
    j["epe"] = epe;
    j["d1"] = d1;
  }
  j["pa"] = pa;
  j["miou"] = miou;
  for (size_t c = 0; c < iou_per_class.size(); ++c) {
    const std::string key = "iou." + class_names[c];
    if (class_present[c]) {
      j[key] = iou_per_class[c];
    } else {
      j[key] = nullptr;
    }
  }
  j["valid_pixels"] = valid_pixel_count;
  return j.dump(2);
}

EvalAccumulator::EvalAccumulator(int num_classes, int max_disparity,
                                 std::vector<std::string> class_names)
    : max_disparity_(max_disparity),
      class_names_(NamesOrDefault(std::move(class_names), num_classes)),
      cm_(num_classes) {}

void EvalAccumulator::AddStereo(std::span<const float> pred,
                                std::span<const float> gt) {
  const auto valid = DisparityValidMask(gt, max_disparity_);
  if (pred.size() != gt.size()) {
    throw std::invalid_argument("eval: prediction and ground truth sizes");
  }
  for (size_t i = 0; i < gt.size(); ++i) {
    if (!valid[i]) continue;
    const double e = std::abs(static_cast<double>(pred[i]) - gt[i]);
    abs_error_sum_ += e;
    if (e > kD1Threshold) ++bad_pixels_;
    ++valid_pixels_;
  }
}

void EvalAccumulator::AddSegmentation(std::span<const int32_t> pred,
                                      std::span<const int32_t> gt) {
  cm_.Add(pred, gt);
}

EvalReport EvalAccumulator::Finalize() const {
  EvalReport r;
  r.class_names = class_names_;
  r.valid_pixel_count = valid_pixels_;
  r.stereo_empty = valid_pixels_ == 0;
  if (valid_pixels_ > 0) {
    r.epe = abs_error_sum_ / static_cast<double>(valid_pixels_);
    r.d1 = static_cast<double>(bad_pixels_) / static_cast<double>(valid_pixels_);
  }
  SegMetrics seg = ComputeSegMetrics(cm_);
  r.pa = seg.pa;
  r.miou = seg.miou;
  r.iou_per_class = seg.iou;
  r.class_present = seg.present;
  return r;
}

double SortedQuantile(std::span<const double> sorted, double q) {
  if (sorted.empty()) return 0.0;
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const size_t lo = static_cast<size_t>(std::floor(pos));
  const size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double t = pos - static_cast<double>(lo);
  return sorted[lo] + t * (sorted[hi] - sorted[lo]);
}

CategoryStatsAccumulator::CategoryStatsAccumulator(
    int num_classes, int max_disparity, int bins,
    std::vector<std::string> class_names)
    : max_disparity_(max_disparity),
      bins_(bins),
      names_(NamesOrDefault(std::move(class_names), num_classes)),
      values_(num_classes) {
  if (bins < 1) throw std::invalid_argument("histogram needs >= 1 bin");
}

void CategoryStatsAccumulator::Add(std::span<const int32_t> labels,
                                   std::span<const float> disparity) {
  if (labels.size() != disparity.size()) {
    throw std::invalid_argument("category stats: labels and disparity sizes");
  }
  const float dmax = static_cast<float>(max_disparity_);
  for (size_t i = 0; i < labels.size(); ++i) {
    const float d = disparity[i];
    if (!std::isfinite(d) || std::abs(d) >= dmax) continue;
    const int32_t c = labels[i];
    if (c < 0 || c >= static_cast<int32_t>(values_.size())) continue;
    values_[c].push_back(d);
  }
}

CategoryDisparityStats CategoryStatsAccumulator::Finalize() const {
  CategoryDisparityStats out;
  out.max_disparity = max_disparity_;
  out.bins = bins_;
  const double lo = -max_disparity_;
  const double width = 2.0 * max_disparity_ / bins_;
  for (size_t c = 0; c < values_.size(); ++c) {
    ClassDisparityStats s;
    s.name = names_[c];
    for (int b = 0; b <= bins_; ++b) s.bin_edges.push_back(lo + b * width);
    s.counts.assign(bins_, 0);
    const auto& v = values_[c];
    s.count = static_cast<int64_t>(v.size());
    s.empty = v.empty();
    out.total_valid += s.count;
    if (!s.empty) {
      std::vector<double> sorted(v.begin(), v.end());
      double sum = 0.0;
      for (double x : sorted) {
        sum += x;
        const int b = std::clamp(static_cast<int>(std::floor((x - lo) / width)),
                                 0, bins_ - 1);
        ++s.counts[b];
      }
      s.mean = sum / sorted.size();
      double sq = 0.0;
      for (double x : sorted) sq += (x - s.mean) * (x - s.mean);
      s.stddev = std::sqrt(sq / sorted.size());
      std::sort(sorted.begin(), sorted.end());
      s.q1 = SortedQuantile(sorted, 0.25);
      s.q3 = SortedQuantile(sorted, 0.75);
      s.iqr = s.q3 - s.q1;
    }
    out.classes.push_back(std::move(s));
  }
  return out;
}

std::string CategoryDisparityStats::ToText() const {
  std::string out;
  for (const auto& s : classes) {
    if (s.empty) {
      out += fmt::format("class={} count=0 empty\n", s.name);
      continue;
    }
    out += fmt::format(
        "class={} count={} mean={:.4f} std={:.4f} q1={:.4f} q3={:.4f} "
        "iqr={:.4f}\n",
        s.name, s.count, s.mean, s.stddev, s.q1, s.q3, s.iqr);
    int64_t peak = 1;
    for (int64_t c : s.counts) peak = std::max(peak, c);
    for (size_t b = 0; b < s.counts.size(); ++b) {
      if (s.counts[b] == 0) continue;
      const int bar = static_cast<int>(40 * s.counts[b] / peak);
      out += fmt::format("  [{:7.2f},{:7.2f}) {:8d} {}\n", s.bin_edges[b],
                         s.bin_edges[b + 1], s.counts[b],
                         std::string(std::max(bar, 1), '#'));
    }
  }
  out += fmt::format("total_valid={}\n", total_valid);
  return out;
}

std::string CategoryDisparityStats::ToJson() const {
  nlohmann::ordered_json j;
  j["max_disparity"] = max_disparity;
  j["bins"] = bins;
  j["total_valid"] = total_valid;
  nlohmann::ordered_json cls = nlohmann::ordered_json::object();
  for (const auto& s : classes) {
    nlohmann::ordered_json c;
    c["count"] = s.count;
    c["empty"] = s.empty;
    c["mean"] = s.mean;
    c["std"] = s.stddev;
    c["q1"] = s.q1;
    c["q3"] = s.q3;
    c["iqr"] = s.iqr;
    c["bin_edges"] = s.bin_edges;
    c["counts"] = s.counts;
    cls[s.name] = std::move(c);
  }
  j["classes"] = std::move(cls);
  return j.dump(2);
}

}  // namespace semstereo
