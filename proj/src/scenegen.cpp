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

#include "semstereo/scenegen.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <stdexcept>

#include <fmt/format.h>

namespace semstereo {

namespace {

constexpr std::array<const char*, kNumSceneClasses> kBandKeys{
    "ground", "trees", "building_roof", "water", "bridge"};

constexpr std::array<std::array<double, 3>, kNumSceneClasses> kBaseColor{{
    {0.58, 0.50, 0.38},  // ground
    {0.22, 0.48, 0.20},  // trees
    {0.78, 0.42, 0.34},  // roofs
    {0.16, 0.28, 0.52},  // water
    {0.86, 0.85, 0.80},  // bridges
}};

uint64_t SplitMix64(uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

// Float nearest to v that still lies inside [lo, hi).
float InsideBand(double v, const Band& band) {
  float f = static_cast<float>(std::clamp(v, band.lo, band.hi));
  while (static_cast<double>(f) < band.lo) {
    f = std::nextafter(f, std::numeric_limits<float>::infinity());
  }
  while (static_cast<double>(f) >= band.hi) {
    f = std::nextafter(f, -std::numeric_limits<float>::infinity());
  }
  return f;
}

class Sampler {
 public:
  explicit Sampler(uint64_t seed) : rng_(seed) {}
  double Uniform(double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(rng_);
  }
  int Int(int lo, int hi) {  // inclusive
    return std::uniform_int_distribution<int>(lo, hi)(rng_);
  }
  bool Chance(double p) { return Uniform(0.0, 1.0) < p; }
  // Value inside the band, keeping `margin` from both ends when it fits.
  double InBand(const Band& b, double margin) {
    if (b.width() <= 2 * margin) return 0.5 * (b.lo + b.hi);
    return Uniform(b.lo + margin, b.hi - margin);
  }

 private:
  std::mt19937_64 rng_;
};

// Left-view world, wider than the image by a margin on both sides so the
// right view never samples outside it.
struct Canvas {
  int height = 0;
  int width = 0;
  std::vector<int32_t> cls;
  std::vector<int32_t> surface;
  std::vector<float> disp;
  std::vector<float> rgb;  // [3,H,Wc]

  int Index(int y, int u) const { return y * width + u; }
};

void DrawSurface(Canvas& c, int y, int u, int32_t cls, int32_t surface,
                 float d) {
  if (y < 0 || y >= c.height || u < 0 || u >= c.width) return;
  const int i = c.Index(y, u);
  c.cls[i] = cls;
  c.surface[i] = surface;
  c.disp[i] = d;
}

Canvas BuildCanvas(const SceneConfig& cfg, int margin, Sampler& s) {
  Canvas c;
  c.height = cfg.size;
  c.width = cfg.size + 2 * margin;
  const size_t n = static_cast<size_t>(c.height) * c.width;
  c.cls.assign(n, kGround);
  c.surface.assign(n, 0);
  c.disp.assign(n, 0.0f);
  int32_t next_surface = 1;

  // Ground: smooth undulation plus fine noise, inside its band.
  const Band& gb = cfg.bands[kGround];
  const double base = s.InBand(gb, cfg.ground_relief + cfg.surface_jitter);
  const double period_u = s.Uniform(24.0, 48.0);
  const double period_y = s.Uniform(24.0, 48.0);
  const double phase_u = s.Uniform(0.0, 2 * std::numbers::pi);
  const double phase_y = s.Uniform(0.0, 2 * std::numbers::pi);
  for (int y = 0; y < c.height; ++y) {
    for (int u = 0; u < c.width; ++u) {
      const double relief =
          cfg.ground_relief *
          std::sin(2 * std::numbers::pi * u / period_u + phase_u) *
          std::cos(2 * std::numbers::pi * y / period_y + phase_y);
      const double jitter =
          cfg.surface_jitter > 0 ? s.Uniform(-cfg.surface_jitter,
                                             cfg.surface_jitter)
                                 : 0.0;
      c.disp[c.Index(y, u)] = InsideBand(base + relief + jitter, gb);
    }
  }

  // Water: a full-width strip at the bottom of its band.
  if (s.Chance(cfg.water_probability)) {
    const int h = s.Int(cfg.water_min_height, cfg.water_max_height);
    const int y0 = s.Int(0, std::max(0, c.height - h));
    const float d = InsideBand(cfg.bands[kWater].lo, cfg.bands[kWater]);
    const int32_t id = next_surface++;
    for (int y = y0; y < y0 + h; ++y) {
      for (int u = 0; u < c.width; ++u) DrawSurface(c, y, u, kWater, id, d);
    }
  }

  // Trees: round blobs with per-pixel jitter.
  const Band& tb = cfg.bands[kTrees];
  const int trees = s.Int(cfg.min_trees, cfg.max_trees);
  for (int t = 0; t < trees; ++t) {
    const int r = s.Int(cfg.tree_min_radius, cfg.tree_max_radius);
    const int cy = s.Int(0, c.height - 1);
    const int cu = s.Int(margin - r, margin + cfg.size + r - 1);
    const double tree_base = s.InBand(tb, cfg.tree_jitter + 0.05);
    const int32_t id = next_surface++;
    for (int dy = -r; dy <= r; ++dy) {
      for (int du = -r; du <= r; ++du) {
        if (dy * dy + du * du > r * r) continue;
        const double jitter =
            cfg.tree_jitter > 0 ? s.Uniform(-cfg.tree_jitter, cfg.tree_jitter)
                                : 0.0;
        DrawSurface(c, cy + dy, cu + du, kTrees, id,
                    InsideBand(tree_base + jitter, tb));
      }
    }
  }

  // Buildings: axis-aligned rectangles with flat roofs.
  const Band& rb = cfg.bands[kBuildingRoof];
  const int buildings = s.Int(cfg.min_buildings, cfg.max_buildings);
  for (int b = 0; b < buildings; ++b) {
    const int h = s.Int(cfg.building_min_size, cfg.building_max_size);
    const int w = s.Int(cfg.building_min_size, cfg.building_max_size);
    const int y0 = s.Int(0, std::max(0, c.height - h));
    const int u0 = s.Int(margin - w / 2, margin + cfg.size - w / 2);
    const float d = InsideBand(s.InBand(rb, 0.05), rb);
    const int32_t id = next_surface++;
    for (int y = y0; y < y0 + h; ++y) {
      for (int u = u0; u < u0 + w; ++u) DrawSurface(c, y, u, kBuildingRoof, id, d);
    }
  }

  // Bridges: thin full-width elevated strips.
  if (s.Chance(cfg.bridge_probability)) {
    const int h = s.Int(cfg.bridge_min_height, cfg.bridge_max_height);
    const int y0 = s.Int(0, std::max(0, c.height - h));
    const float d = InsideBand(s.InBand(cfg.bands[kBridge], 0.05),
                               cfg.bands[kBridge]);
    const int32_t id = next_surface++;
    for (int y = y0; y < y0 + h; ++y) {
      for (int u = 0; u < c.width; ++u) DrawSurface(c, y, u, kBridge, id, d);
    }
  }

  // Texture: per-surface tint, per-pixel noise and height shading, then
  // quantized to 8 bits so the on-disk images are exact.
  std::vector<std::array<double, 3>> tint(next_surface);
  for (auto& t : tint) {
    for (double& v : t) v = s.Uniform(-0.05, 0.05);
  }
  c.rgb.assign(3 * n, 0.0f);
  for (int y = 0; y < c.height; ++y) {
    for (int u = 0; u < c.width; ++u) {
      const int i = c.Index(y, u);
      const int32_t k = c.cls[i];
      const double amp = k == kWater ? cfg.water_texture : cfg.texture_noise;
      const double shared = amp > 0 ? s.Uniform(-amp, amp) : 0.0;
      const double shade = cfg.shading * c.disp[i] / cfg.max_disparity;
      for (int ch = 0; ch < 3; ++ch) {
        const double own = amp > 0 ? s.Uniform(-0.25 * amp, 0.25 * amp) : 0.0;
        const double v = std::clamp(
            kBaseColor[k][ch] + tint[c.surface[i]][ch] + shade + shared + own,
            0.0, 1.0);
        c.rgb[ch * n + i] = static_cast<float>(std::round(v * 255.0) / 255.0);
      }
    }
  }
  return c;
}

// Forward mapping of every left row segment [u, u+1] to x_r = x_l - d with
// linear interpolation along the segment and a z-buffer on larger
// disparity. Segments that fold over or stretch across a depth jump are
// skipped; the right pixels they would cover become holes (occlusions).
SceneSample RenderPair(const Canvas& c, const SceneConfig& cfg, int margin) {
  const int H = cfg.size, W = cfg.size;
  const size_t n = static_cast<size_t>(c.height) * c.width;
  const size_t hw = static_cast<size_t>(H) * W;
  SceneSample out;
  out.height = H;
  out.width = W;
  out.image_l.resize(3 * hw);
  out.image_r.resize(3 * hw);
  out.labels_l.resize(hw);
  out.labels_r.resize(hw);
  out.disp_l.resize(hw);
  out.disp_r.resize(hw);
  out.occlusion.assign(hw, 0);

  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      const int i = c.Index(y, x + margin);
      const size_t o = static_cast<size_t>(y) * W + x;
      out.labels_l[o] = c.cls[i];
      out.disp_l[o] = c.disp[i];
      for (int ch = 0; ch < 3; ++ch) out.image_l[ch * hw + o] = c.rgb[ch * n + i];
    }
  }

  constexpr double kMaxStretch = 1.5;
  std::vector<double> zbuf(W);
  std::vector<int> filled(W);
  for (int y = 0; y < H; ++y) {
    std::fill(zbuf.begin(), zbuf.end(), -std::numeric_limits<double>::infinity());
    std::fill(filled.begin(), filled.end(), 0);
    for (int u = 0; u + 1 < c.width; ++u) {
      const int i0 = c.Index(y, u), i1 = c.Index(y, u + 1);
      const double d0 = c.disp[i0], d1 = c.disp[i1];
      const double a = u - d0, b = u + 1 - d1;
      if (b <= a || b - a > kMaxStretch) continue;
      const int first = static_cast<int>(std::ceil(a));
      for (int cpos = first; cpos < b; ++cpos) {
        const int x = cpos - margin;
        if (x < 0 || x >= W) continue;
        const double t = (cpos - a) / (b - a);
        const double dr = d0 + t * (d1 - d0);
        if (dr <= zbuf[x]) continue;
        zbuf[x] = dr;
        filled[x] = 1;
        const size_t o = static_cast<size_t>(y) * W + x;
        out.disp_r[o] = static_cast<float>(dr);
        out.labels_r[o] = t < 0.5 ? c.cls[i0] : c.cls[i1];
        for (int ch = 0; ch < 3; ++ch) {
          const double v = (1.0 - t) * c.rgb[ch * n + i0] + t * c.rgb[ch * n + i1];
          out.image_r[ch * hw + o] = static_cast<float>(std::round(v * 255.0) / 255.0);
        }
      }
    }
    // Holes take the nearest filled pixel with the smaller disparity.
    for (int x = 0; x < W; ++x) {
      if (filled[x]) continue;
      const size_t o = static_cast<size_t>(y) * W + x;
      out.occlusion[o] = 1;
      int left = x - 1, right = x + 1;
      while (left >= 0 && !filled[left]) --left;
      while (right < W && !filled[right]) ++right;
      int src = -1;
      if (left >= 0 && right < W) {
        src = zbuf[left] <= zbuf[right] ? left : right;
      } else if (left >= 0) {
        src = left;
      } else if (right < W) {
        src = right;
      }
      if (src < 0) continue;  // an entirely empty row cannot occur in practice
      const size_t so = static_cast<size_t>(y) * W + src;
      out.disp_r[o] = out.disp_r[so];
      out.labels_r[o] = out.labels_r[so];
      for (int ch = 0; ch < 3; ++ch) {
        out.image_r[ch * hw + o] = out.image_r[ch * hw + so];
      }
    }
  }
  return out;
}

}  // namespace

SceneConfig SceneConfig::Default(int size, int max_disparity,
                                 bool overlap_bands) {
  SceneConfig c;
  c.size = size;
  c.max_disparity = max_disparity;
  c.overlap_bands = overlap_bands;
  const double s = 0.9 * max_disparity;
  const double widen = overlap_bands ? 0.15 * s : 0.0;
  c.bands[kWater] = {-0.9 * s - widen, -0.7 * s + widen};
  c.bands[kGround] = {-0.6 * s - widen, -0.3 * s + widen};
  c.bands[kTrees] = {-0.2 * s - widen, 0.2 * s + widen};
  c.bands[kBuildingRoof] = {0.3 * s - widen, 0.7 * s + widen};
  c.bands[kBridge] = {0.7 * s - widen, 0.9 * s + widen};
  return c;
}

void SceneConfig::Validate() const {
  if (size <= 0 || size % 32 != 0) {
    throw std::invalid_argument(
        fmt::format("scene size {} must be a positive multiple of 32", size));
  }
  if (max_disparity <= 0 || max_disparity >= size) {
    throw std::invalid_argument(fmt::format(
        "max_disparity {} must be in (0, size)", max_disparity));
  }
  for (int k = 0; k < kNumSceneClasses; ++k) {
    const Band& b = bands[k];
    if (!(b.lo < b.hi) || b.lo <= -max_disparity || b.hi >= max_disparity) {
      throw std::invalid_argument(fmt::format(
          "band {} [{}, {}) must be non-empty and inside (-{}, {})",
          kBandKeys[k], b.lo, b.hi, max_disparity, max_disparity));
    }
  }
  if (!overlap_bands) {
    for (int a = 0; a < kNumSceneClasses; ++a) {
      for (int b = a + 1; b < kNumSceneClasses; ++b) {
        if (bands[a].lo < bands[b].hi && bands[b].lo < bands[a].hi) {
          throw std::invalid_argument(fmt::format(
              "bands {} and {} overlap (set overlap_bands to allow)",
              kBandKeys[a], kBandKeys[b]));
        }
      }
    }
  }
  if (min_buildings < 0 || max_buildings < min_buildings || min_trees < 0 ||
      max_trees < min_trees || building_min_size < 1 ||
      building_max_size < building_min_size || tree_min_radius < 0 ||
      tree_max_radius < tree_min_radius || water_min_height < 1 ||
      water_max_height < water_min_height || bridge_min_height < 1 ||
      bridge_max_height < bridge_min_height) {
    throw std::invalid_argument("scene object count/size ranges are invalid");
  }
  if (max_occlusion <= 0.0 || max_occlusion > 1.0) {
    throw std::invalid_argument("max_occlusion must be in (0, 1]");
  }
}

nlohmann::ordered_json SceneConfig::ToJson() const {
  nlohmann::ordered_json j;
  j["size"] = size;
  j["max_disparity"] = max_disparity;
  j["overlap_bands"] = overlap_bands;
  nlohmann::ordered_json b;
  for (int k = 0; k < kNumSceneClasses; ++k) {
    b[kBandKeys[k]] = {bands[k].lo, bands[k].hi};
  }
  j["bands"] = b;
  j["min_buildings"] = min_buildings;
  j["max_buildings"] = max_buildings;
  j["building_min_size"] = building_min_size;
  j["building_max_size"] = building_max_size;
  j["min_trees"] = min_trees;
  j["max_trees"] = max_trees;
  j["tree_min_radius"] = tree_min_radius;
  j["tree_max_radius"] = tree_max_radius;
  j["water_probability"] = water_probability;
  j["water_min_height"] = water_min_height;
  j["water_max_height"] = water_max_height;
  j["bridge_probability"] = bridge_probability;
  j["bridge_min_height"] = bridge_min_height;
  j["bridge_max_height"] = bridge_max_height;
  j["ground_relief"] = ground_relief;
  j["surface_jitter"] = surface_jitter;
  j["tree_jitter"] = tree_jitter;
  j["texture_noise"] = texture_noise;
  j["water_texture"] = water_texture;
  j["shading"] = shading;
  j["max_occlusion"] = max_occlusion;
  j["seed"] = seed;
  return j;
}

SceneConfig SceneConfig::FromJson(const nlohmann::json& j) {
  if (!j.is_object()) throw std::invalid_argument("scene config must be an object");
  const int size = j.value("size", 64);
  const int dmax = j.value("max_disparity", 16);
  const bool overlap = j.value("overlap_bands", false);
  SceneConfig c = Default(size, dmax, overlap);
  for (const auto& [key, v] : j.items()) {
    if (key == "size" || key == "max_disparity" || key == "overlap_bands") {
      continue;
    } else if (key == "bands") {
      for (const auto& [name, range] : v.items()) {
        const auto it = std::find(kBandKeys.begin(), kBandKeys.end(), name);
        if (it == kBandKeys.end()) {
          throw std::invalid_argument(fmt::format("unknown band '{}'", name));
        }
        if (!range.is_array() || range.size() != 2) {
          throw std::invalid_argument(
              fmt::format("band '{}' must be [lo, hi]", name));
        }
        c.bands[it - kBandKeys.begin()] = {range[0].get<double>(),
                                           range[1].get<double>()};
      }
    }
#define SEMSTEREO_SCENE_FIELD(name) \
  else if (key == #name) {          \
    v.get_to(c.name);               \
  }
    SEMSTEREO_SCENE_FIELD(min_buildings)
    SEMSTEREO_SCENE_FIELD(max_buildings)
    SEMSTEREO_SCENE_FIELD(building_min_size)
    SEMSTEREO_SCENE_FIELD(building_max_size)
    SEMSTEREO_SCENE_FIELD(min_trees)
    SEMSTEREO_SCENE_FIELD(max_trees)
    SEMSTEREO_SCENE_FIELD(tree_min_radius)
    SEMSTEREO_SCENE_FIELD(tree_max_radius)
    SEMSTEREO_SCENE_FIELD(water_probability)
    SEMSTEREO_SCENE_FIELD(water_min_height)
    SEMSTEREO_SCENE_FIELD(water_max_height)
    SEMSTEREO_SCENE_FIELD(bridge_probability)
    SEMSTEREO_SCENE_FIELD(bridge_min_height)
    SEMSTEREO_SCENE_FIELD(bridge_max_height)
    SEMSTEREO_SCENE_FIELD(ground_relief)
    SEMSTEREO_SCENE_FIELD(surface_jitter)
    SEMSTEREO_SCENE_FIELD(tree_jitter)
    SEMSTEREO_SCENE_FIELD(texture_noise)
    SEMSTEREO_SCENE_FIELD(water_texture)
    SEMSTEREO_SCENE_FIELD(shading)
    SEMSTEREO_SCENE_FIELD(max_occlusion)
    SEMSTEREO_SCENE_FIELD(seed)
#undef SEMSTEREO_SCENE_FIELD
    else {
      throw std::invalid_argument(
          fmt::format("unknown scene config key '{}'", key));
    }
  }
  c.Validate();
  return c;
}

double SceneSample::OcclusionFraction() const {
  if (occlusion.empty()) return 0.0;
  size_t n = 0;
  for (uint8_t o : occlusion) n += o != 0;
  return static_cast<double>(n) / static_cast<double>(occlusion.size());
}

uint64_t SampleSeed(uint64_t base_seed, uint64_t stream, uint64_t index) {
  return SplitMix64(SplitMix64(SplitMix64(base_seed) ^ stream) ^ index);
}

SceneSample GenerateScene(const SceneConfig& config, uint64_t seed) {
  config.Validate();
  const int margin = config.max_disparity + 2;
  Sampler sampler(seed);
  constexpr int kMaxAttempts = 200;
  for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
    SceneSample s = RenderPair(BuildCanvas(config, margin, sampler), config,
                               margin);
    if (s.OcclusionFraction() <= config.max_occlusion) return s;
  }
  throw std::runtime_error(fmt::format(
      "no scene with occlusion <= {} after {} attempts; reduce object sizes",
      config.max_occlusion, kMaxAttempts));
}

}  // namespace semstereo
