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

// Training configuration. One JSON document; unknown keys are errors so a
// misspelled ablation flag cannot silently fall back to a default.

#ifndef SEMSTEREO_CONFIG_HPP_
#define SEMSTEREO_CONFIG_HPP_

#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "semstereo/model.hpp"
#include "semstereo/optim.hpp"

namespace semstereo {

struct TrainConfig {
  std::string data;    // dataset root holding meta.json, train/, test/
  std::string output;  // run directory: log, checkpoint, metrics
  Variant variant = Variant::FromRow(4);
  int max_disparity = 16;
  int num_classes = 5;
  int epochs = 30;
  int batch_size = 4;
  double lr0 = 1e-3;
  std::vector<int> lr_decay_epochs{8, 14, 20};
  AdamConfig adam;
  uint64_t seed = 1;
  LossWeights loss_weights;
  int train_limit = 0;  // 0 = whole split
  int test_limit = 0;
  int eval_every = 1;

  void Validate() const;
  ModelConfig Model() const;
  nlohmann::ordered_json ToJson() const;
  static TrainConfig FromJson(const nlohmann::json& j);
  static TrainConfig Load(const std::filesystem::path& path);
};

// Model hyperparameters recorded in checkpoints.
nlohmann::ordered_json ModelConfigToJson(const ModelConfig& config);
ModelConfig ModelConfigFromJson(const nlohmann::json& j);

}  // namespace semstereo

#endif  // SEMSTEREO_CONFIG_HPP_
