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

// On-disk dataset layout:
//   <root>/meta.json
//   <root>/<split>/<index>_{left.ppm,right.ppm,left_label.pgm,
//                           right_label.pgm,disp.pfm,occ.pgm}

#ifndef SEMSTEREO_DATASET_HPP_
#define SEMSTEREO_DATASET_HPP_

#include <filesystem>
#include <string>
#include <vector>

#include "semstereo/metrics.hpp"
#include "semstereo/netpbm.hpp"
#include "semstereo/scenegen.hpp"

namespace semstereo {

struct DatasetMeta {
  SceneConfig scene;
  int train_count = 0;
  int test_count = 0;
  std::vector<std::string> class_names;

  nlohmann::ordered_json ToJson() const;
  static DatasetMeta FromJson(const nlohmann::json& j);
};

std::string SampleStem(int index);  // zero-padded, e.g. "000007"

void WriteSample(const std::filesystem::path& split_dir, int index,
                 const SceneSample& sample);
// disp_r is not stored and comes back empty.
SceneSample ReadSample(const std::filesystem::path& split_dir, int index);

void WriteMeta(const std::filesystem::path& root, const DatasetMeta& meta);
DatasetMeta ReadMeta(const std::filesystem::path& root);

// Generates train and test splits with per-index seeds.
DatasetMeta GenerateDataset(const std::filesystem::path& root,
                            const SceneConfig& scene, int train_count,
                            int test_count);

// Loads every sample of one split; the count comes from meta.json.
std::vector<SceneSample> LoadSplit(const std::filesystem::path& root,
                                   const std::string& split);

// Conversions between float images in [0,1] and 8-bit rasters.
// Per-class disparity statistics of the left views; split is "train",
// "test" or "all".
CategoryDisparityStats DatasetCategoryStats(const std::filesystem::path& root,
                                            const std::string& split = "train");

RgbImage ToRgb(const std::vector<float>& chw, int height, int width);
std::vector<float> FromRgb(const RgbImage& image);

}  // namespace semstereo

#endif  // SEMSTEREO_DATASET_HPP_
