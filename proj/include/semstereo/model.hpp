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

// Full network: shared backbone, cost volume, optional refinement, and the
// loss wiring for each ablation variant.

#ifndef SEMSTEREO_MODEL_HPP_
#define SEMSTEREO_MODEL_HPP_

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "semstereo/backbone.hpp"
#include "semstereo/costvol.hpp"
#include "semstereo/ssr.hpp"
#include "semstereo/supervision.hpp"

namespace semstereo {

enum class Structure { kParallelBaseline, kSgc };

struct Variant {
  Structure structure = Structure::kSgc;
  bool ssr = true;
  bool lrsc = true;
  bool semantic_supervision = true;

  // Rows 1-4 carry semantic labels, rows 5-8 repeat them without.
  static Variant FromRow(int row);
  // 0 when the flag combination is not one of the eight rows.
  int Row() const;
  std::string Describe() const;
  bool operator==(const Variant&) const = default;
};

Variant ParseVariant(const std::string& name);  // "row1".."row8"

struct ModelConfig {
  BackboneConfig backbone;
  CostVolumeConfig costvol;
  Variant variant;

  int num_classes() const { return backbone.num_classes; }
  int max_disparity() const { return costvol.max_disparity; }
};

template <typename T>
struct ModelOutputs {
  Tensor<T> P_left;     // [B,N,H,W]
  Tensor<T> P_right;    // [B,N,H,W]
  Tensor<T> d_att;      // [B,1,H/4,W/4]
  Tensor<T> d_reg1;     // [B,1,H/4,W/4]
  Tensor<T> d_init;     // [B,1,H/4,W/4]
  Tensor<T> d_init_up;  // [B,1,H,W]
  Tensor<T> d_final;    // [B,1,H,W]
  std::optional<SsrState<T>> ssr;

  // d_final, d_init_up, d_reg1 and d_att at full resolution.
  std::array<Tensor<T>, 4> Stages() const;
};

template <typename T>
struct Targets {
  Tensor<T> disparity;            // [B,1,H,W]
  std::vector<int32_t> labels;    // left view, [B,H,W]; may be empty
};

template <typename T>
class SemStereoNet {
 public:
  SemStereoNet(const ModelConfig& config, uint64_t seed);

  SemStereoNet(const SemStereoNet&) = delete;
  SemStereoNet& operator=(const SemStereoNet&) = delete;

  const ModelConfig& config() const { return config_; }
  ParamStore<T>& store() { return store_; }
  const ParamStore<T>& store() const { return store_; }
  SharedBackbone<T>& backbone() { return backbone_; }

  // left, right: [B,3,H,W] in [0,1].
  ModelOutputs<T> Forward(const Tensor<T>& left, const Tensor<T>& right,
                          NormMode mode);

  // Joint objective for the configured variant.
  LossReport<T> Loss(const ModelOutputs<T>& out, const Targets<T>& targets,
                     const LossWeights& weights) const;

 private:
  ModelConfig config_;
  ParamStore<T> store_;
  Rng rng_;
  SharedBackbone<T> backbone_;
  CostVolumeNet<T> costvol_;
  SemanticSelectiveRefinement<T> ssr_;
};

}  // namespace semstereo

#endif  // SEMSTEREO_MODEL_HPP_
