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

// Training loop, evaluation and single-pair inference.

#ifndef SEMSTEREO_TRAINER_HPP_
#define SEMSTEREO_TRAINER_HPP_

#include <array>
#include <filesystem>
#include <functional>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "semstereo/checkpoint.hpp"
#include "semstereo/config.hpp"
#include "semstereo/dataset.hpp"
#include "semstereo/metrics.hpp"
#include "semstereo/model.hpp"
#include "semstereo/optim.hpp"

namespace semstereo {

struct Batch {
  Tensor<float> left;       // [B,3,H,W]
  Tensor<float> right;      // [B,3,H,W]
  Targets<float> targets;   // disparity [B,1,H,W], left labels [B,H,W]
};

Batch MakeBatch(const std::vector<SceneSample>& samples,
                std::span<const int> indices);

struct EpochRecord {
  int epoch = 0;
  double lr = 0.0;
  double loss_total = 0.0;
  std::array<double, 4> loss_disp{};
  double loss_seg_ce = 0.0;
  double loss_seg_dice = 0.0;
  double loss_lrsc = 0.0;
  bool has_val = false;
  EvalReport val;

  // epoch=E loss.total=... val.epe=... val.d1=... val.miou=... val.pa=...
  // followed by the individual loss terms and the learning rate.
  std::string LogLine() const;
};

struct StepResult {
  double total = 0.0;
  std::array<double, 4> disp{};
  double seg_ce = 0.0;
  double seg_dice = 0.0;
  double lrsc = 0.0;
  int empty_disp_warnings = 0;
};

using LogSink = std::function<void(const std::string&)>;

class Trainer {
 public:
  explicit Trainer(const TrainConfig& config);

  const TrainConfig& config() const { return config_; }
  SemStereoNet<float>& net() { return *net_; }
  Adam<float>& optimizer() { return *adam_; }
  int next_epoch() const { return next_epoch_; }

  // One optimizer step on the batch; throws on a non-finite loss term.
  StepResult Step(const Batch& batch, double lr);

  // Shuffled pass over `train`, then evaluation on `test` when requested.
  EpochRecord RunEpoch(const std::vector<SceneSample>& train,
                       const std::vector<SceneSample>* test);

  Checkpoint Save() const;
  void Restore(const Checkpoint& checkpoint);

 private:
  TrainConfig config_;
  std::unique_ptr<SemStereoNet<float>> net_;
  std::unique_ptr<Adam<float>> adam_;
  std::mt19937_64 data_rng_;
  int next_epoch_ = 0;
  int64_t steps_ = 0;
  int64_t empty_disp_warnings_ = 0;
};

struct TrainResult {
  std::vector<EpochRecord> epochs;
  EvalReport final_eval;
  std::filesystem::path checkpoint;
  std::filesystem::path log;
};

// Full run: loads the dataset, trains config.epochs epochs, writes
// <output>/train.log, <output>/checkpoint.smst and <output>/metrics.json.
TrainResult Train(const TrainConfig& config, const LogSink& sink = {});

EvalReport Evaluate(SemStereoNet<float>& net,
                    const std::vector<SceneSample>& samples, int batch_size,
                    const std::vector<std::string>& class_names = {});

// Rebuilds a network from a checkpoint written by Trainer::Save.
std::unique_ptr<SemStereoNet<float>> LoadModel(const Checkpoint& checkpoint);

EvalReport EvaluateCheckpoint(const std::filesystem::path& checkpoint,
                              const std::filesystem::path& data,
                              const std::string& split = "test");

struct InferResult {
  FloatImage disparity;  // d_final
  GrayImage labels;      // argmax of the left semantic map
};

InferResult Infer(SemStereoNet<float>& net, const RgbImage& left,
                  const RgbImage& right);
// Writes <out>/disp.pfm and <out>/labels.pgm.
InferResult InferFiles(const std::filesystem::path& checkpoint,
                       const std::filesystem::path& left,
                       const std::filesystem::path& right,
                       const std::filesystem::path& out);

// Per-pixel argmax over the class axis of [B,N,H,W] probabilities.
std::vector<int32_t> ArgmaxLabels(const Tensor<float>& probs);

}  // namespace semstereo

#endif  // SEMSTEREO_TRAINER_HPP_
