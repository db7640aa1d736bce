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

// Procedural nadir urban scenes: stereo pairs with dense left-referenced
// disparity and per-pixel class labels. Each class lives in its own
// disparity band.

#ifndef SEMSTEREO_SCENEGEN_HPP_
#define SEMSTEREO_SCENEGEN_HPP_

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"

namespace semstereo {

enum SceneClass : int32_t {
  kGround = 0,
  kTrees = 1,
  kBuildingRoof = 2,
  kWater = 3,
  kBridge = 4,
};
inline constexpr int kNumSceneClasses = 5;

// Half-open disparity interval [lo, hi) in full-resolution pixels.
struct Band {
  double lo = 0.0;
  double hi = 0.0;
  double width() const { return hi - lo; }
  bool Contains(double d) const { return d >= lo && d < hi; }
};

struct SceneConfig {
  int size = 64;
  int max_disparity = 16;
  bool overlap_bands = false;
  // Indexed by SceneClass.
  std::array<Band, kNumSceneClasses> bands{};

  int min_buildings = 2;
  int max_buildings = 4;
  int building_min_size = 6;
  int building_max_size = 12;
  int min_trees = 4;
  int max_trees = 8;
  int tree_min_radius = 2;
  int tree_max_radius = 5;
  double water_probability = 0.75;
  int water_min_height = 6;
  int water_max_height = 12;
  double bridge_probability = 0.6;
  int bridge_min_height = 2;
  int bridge_max_height = 4;

  double ground_relief = 0.6;   // amplitude of the smooth ground undulation
  double surface_jitter = 0.1;  // per-pixel disparity noise on ground
  double tree_jitter = 0.25;    // per-pixel disparity noise inside trees
  double texture_noise = 0.12;
  double water_texture = 0.02;
  double shading = 0.08;        // brightness change per unit d / max_disparity
  double max_occlusion = 0.15;  // samples above this are redrawn
  uint64_t seed = 0;

  // Bands are fractions of s = 0.9 * max_disparity: water [-0.9,-0.7],
  // ground [-0.6,-0.3], trees [-0.2,0.2], roofs [0.3,0.7], bridges
  // [0.7,0.9]. With overlap_bands every band is widened by 0.15 s.
  static SceneConfig Default(int size = 64, int max_disparity = 16,
                             bool overlap_bands = false);

  // Throws std::invalid_argument on bad sizes or bands.
  void Validate() const;

  nlohmann::ordered_json ToJson() const;
  // Unknown keys are rejected.
  static SceneConfig FromJson(const nlohmann::json& j);
};

struct SceneSample {
  int height = 0;
  int width = 0;
  std::vector<float> image_l;      // [3,H,W] in [0,1], multiples of 1/255
  std::vector<float> image_r;      // [3,H,W]
  std::vector<int32_t> labels_l;   // [H,W]
  std::vector<int32_t> labels_r;   // [H,W]
  std::vector<float> disp_l;       // [H,W], left-referenced
  std::vector<uint8_t> occlusion;  // [H,W], right view, 1 = occluded
  // Right-referenced disparity: image_r(x) samples image_l at x + disp_r(x).
  // Produced by the renderer; not part of the on-disk layout.
  std::vector<float> disp_r;

  double OcclusionFraction() const;
};

// Deterministic per (config, seed). Redraws until the occlusion fraction is
// at most config.max_occlusion.
SceneSample GenerateScene(const SceneConfig& config, uint64_t seed);

// Seed for sample `index` of stream `stream`, independent of generation
// order.
uint64_t SampleSeed(uint64_t base_seed, uint64_t stream, uint64_t index);

}  // namespace semstereo

#endif  // SEMSTEREO_SCENEGEN_HPP_
