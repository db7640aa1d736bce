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

#include "semstereo/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <fmt/format.h>

#include "semstereo/metrics.hpp"

namespace semstereo {

namespace fs = std::filesystem;

namespace {

constexpr uint64_t kTrainStream = 1;
constexpr uint64_t kTestStream = 2;

GrayImage ToGray(const std::vector<int32_t>& values, int height, int width) {
  GrayImage g{width, height, std::vector<uint8_t>(values.size())};
  for (size_t i = 0; i < values.size(); ++i) {
    if (values[i] < 0 || values[i] > 255) {
      throw std::invalid_argument(
          fmt::format("label {} does not fit in a PGM byte", values[i]));
    }
    g.data[i] = static_cast<uint8_t>(values[i]);
  }
  return g;
}

fs::path SamplePath(const fs::path& dir, int index, const char* suffix) {
  return dir / fmt::format("{}_{}", SampleStem(index), suffix);
}

template <typename Image>
void RequireSize(const Image& image, int height, int width,
                 const fs::path& path) {
  if (image.height != height || image.width != width) {
    throw std::runtime_error(fmt::format(
        "{}: size {}x{} does not match {}x{}", path.string(), image.width,
        image.height, width, height));
  }
}

}  // namespace

RgbImage ToRgb(const std::vector<float>& chw, int height, int width) {
  const size_t hw = static_cast<size_t>(height) * width;
  if (chw.size() != 3 * hw) throw std::invalid_argument("rgb size mismatch");
  RgbImage img{width, height, std::vector<uint8_t>(3 * hw)};
  for (size_t i = 0; i < hw; ++i) {
    for (int c = 0; c < 3; ++c) {
      const float v = std::clamp(chw[c * hw + i], 0.0f, 1.0f);
      img.data[3 * i + c] = static_cast<uint8_t>(std::lround(v * 255.0f));
    }
  }
  return img;
}

std::vector<float> FromRgb(const RgbImage& image) {
  const size_t hw = static_cast<size_t>(image.height) * image.width;
  std::vector<float> chw(3 * hw);
  for (size_t i = 0; i < hw; ++i) {
    for (int c = 0; c < 3; ++c) {
      chw[c * hw + i] = static_cast<float>(image.data[3 * i + c] / 255.0);
    }
  }
  return chw;
}

std::string SampleStem(int index) { return fmt::format("{:06d}", index); }

void WriteSample(const fs::path& split_dir, int index, const SceneSample& s) {
  fs::create_directories(split_dir);
  const int h = s.height, w = s.width;
  WritePpm(SamplePath(split_dir, index, "left.ppm"), ToRgb(s.image_l, h, w));
  WritePpm(SamplePath(split_dir, index, "right.ppm"), ToRgb(s.image_r, h, w));
  WritePgm(SamplePath(split_dir, index, "left_label.pgm"), ToGray(s.labels_l, h, w));
  WritePgm(SamplePath(split_dir, index, "right_label.pgm"),
           ToGray(s.labels_r, h, w));
  WritePfm(SamplePath(split_dir, index, "disp.pfm"), FloatImage{w, h, s.disp_l});
  std::vector<int32_t> occ(s.occlusion.begin(), s.occlusion.end());
  for (auto& o : occ) o = o ? 255 : 0;
  WritePgm(SamplePath(split_dir, index, "occ.pgm"), ToGray(occ, h, w));
}

SceneSample ReadSample(const fs::path& split_dir, int index) {
  SceneSample s;
  const fs::path left_path = SamplePath(split_dir, index, "left.ppm");
  const RgbImage left = ReadPpm(left_path);
  s.height = left.height;
  s.width = left.width;
  s.image_l = FromRgb(left);

  const fs::path right_path = SamplePath(split_dir, index, "right.ppm");
  const RgbImage right = ReadPpm(right_path);
  RequireSize(right, s.height, s.width, right_path);
  s.image_r = FromRgb(right);

  auto read_labels = [&](const char* suffix) {
    const fs::path p = SamplePath(split_dir, index, suffix);
    const GrayImage g = ReadPgm(p);
    RequireSize(g, s.height, s.width, p);
    return std::vector<int32_t>(g.data.begin(), g.data.end());
  };
  s.labels_l = read_labels("left_label.pgm");
  s.labels_r = read_labels("right_label.pgm");

  const fs::path disp_path = SamplePath(split_dir, index, "disp.pfm");
  FloatImage disp = ReadPfm(disp_path);
  RequireSize(disp, s.height, s.width, disp_path);
  s.disp_l = std::move(disp.data);

  const auto occ = read_labels("occ.pgm");
  s.occlusion.resize(occ.size());
  for (size_t i = 0; i < occ.size(); ++i) s.occlusion[i] = occ[i] != 0;
  return s;
}

nlohmann::ordered_json DatasetMeta::ToJson() const {
  nlohmann::ordered_json j;
  j["format"] = "semstereo-dataset";
  j["version"] = 1;
  j["train_count"] = train_count;
  j["test_count"] = test_count;
  j["class_names"] = class_names;
  j["scene"] = scene.ToJson();
  return j;
}

DatasetMeta DatasetMeta::FromJson(const nlohmann::json& j) {
  DatasetMeta m;
  if (!j.is_object() || j.value("format", "") != "semstereo-dataset") {
    throw std::runtime_error("meta.json: not a semstereo dataset");
  }
  m.train_count = j.at("train_count").get<int>();
  m.test_count = j.at("test_count").get<int>();
  m.class_names = j.at("class_names").get<std::vector<std::string>>();
  m.scene = SceneConfig::FromJson(j.at("scene"));
  return m;
}

void WriteMeta(const fs::path& root, const DatasetMeta& meta) {
  fs::create_directories(root);
  WriteFileBytes(root / "meta.json", meta.ToJson().dump(2) + "\n");
}

DatasetMeta ReadMeta(const fs::path& root) {
  const fs::path p = root / "meta.json";
  if (!fs::exists(p)) {
    throw std::runtime_error(fmt::format("{} not found", p.string()));
  }
  try {
    return DatasetMeta::FromJson(nlohmann::json::parse(ReadFileBytes(p)));
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(fmt::format("{}: {}", p.string(), e.what()));
  }
}

DatasetMeta GenerateDataset(const fs::path& root, const SceneConfig& scene,
                            int train_count, int test_count) {
  scene.Validate();
  if (train_count < 0 || test_count < 0) {
    throw std::invalid_argument("sample counts must be non-negative");
  }
  DatasetMeta meta;
  meta.scene = scene;
  meta.train_count = train_count;
  meta.test_count = test_count;
  meta.class_names = DefaultClassNames();
  for (int i = 0; i < train_count; ++i) {
    WriteSample(root / "train", i,
                GenerateScene(scene, SampleSeed(scene.seed, kTrainStream, i)));
  }
  for (int i = 0; i < test_count; ++i) {
    WriteSample(root / "test", i,
                GenerateScene(scene, SampleSeed(scene.seed, kTestStream, i)));
  }
  WriteMeta(root, meta);
  return meta;
}

std::vector<SceneSample> LoadSplit(const fs::path& root,
                                   const std::string& split) {
  const DatasetMeta meta = ReadMeta(root);
  int count = 0;
  if (split == "train") {
    count = meta.train_count;
  } else if (split == "test") {
    count = meta.test_count;
  } else {
    throw std::invalid_argument(
        fmt::format("unknown split '{}' (train or test)", split));
  }
  std::vector<SceneSample> out;
  out.reserve(count);
  for (int i = 0; i < count; ++i) out.push_back(ReadSample(root / split, i));
  return out;
}

CategoryDisparityStats DatasetCategoryStats(const fs::path& root,
                                            const std::string& split) {
  const DatasetMeta meta = ReadMeta(root);
  CategoryStatsAccumulator acc(static_cast<int>(meta.class_names.size()),
                               meta.scene.max_disparity, 64, meta.class_names);
  std::vector<std::string> splits{split};
  if (split == "all") splits = {"train", "test"};
  for (const auto& s : splits) {
    for (const SceneSample& sample : LoadSplit(root, s)) {
      acc.Add(sample.labels_l, sample.disp_l);
    }
  }
  return acc.Finalize();
}

}  // namespace semstereo
