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

#include "semstereo/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include <fmt/format.h>

namespace semstereo {

namespace fs = std::filesystem;

Batch MakeBatch(const std::vector<SceneSample>& samples,
                std::span<const int> indices) {
  if (indices.empty()) throw std::invalid_argument("empty batch");
  const int64_t b = static_cast<int64_t>(indices.size());
  const SceneSample& first = samples.at(indices[0]);
  const int64_t h = first.height, w = first.width, hw = h * w;
  std::vector<float> left, right, disp;
  std::vector<int32_t> labels;
  left.reserve(b * 3 * hw);
  right.reserve(b * 3 * hw);
  disp.reserve(b * hw);
  labels.reserve(b * hw);
  for (int idx : indices) {
    const SceneSample& s = samples.at(idx);
    if (s.height != h || s.width != w) {
      throw std::invalid_argument(fmt::format(
          "sample {} is {}x{}, batch expects {}x{}", idx, s.width, s.height, w,
          h));
    }
    left.insert(left.end(), s.image_l.begin(), s.image_l.end());
    right.insert(right.end(), s.image_r.begin(), s.image_r.end());
    disp.insert(disp.end(), s.disp_l.begin(), s.disp_l.end());
    labels.insert(labels.end(), s.labels_l.begin(), s.labels_l.end());
  }
  Batch batch;
  batch.left = Tensor<float>::FromData({b, 3, h, w}, std::move(left));
  batch.right = Tensor<float>::FromData({b, 3, h, w}, std::move(right));
  batch.targets.disparity = Tensor<float>::FromData({b, 1, h, w}, std::move(disp));
  batch.targets.labels = std::move(labels);
  return batch;
}

std::string EpochRecord::LogLine() const {
  auto val_field = [&](double v) {
    return has_val ? fmt::format("{:.6f}", v) : std::string("na");
  };
  return fmt::format(
      "epoch={} loss.total={:.6f} val.epe={} val.d1={} val.miou={} val.pa={} "
      "loss.disp0={:.6f} loss.disp1={:.6f} loss.disp2={:.6f} "
      "loss.disp3={:.6f} loss.seg_ce={:.6f} loss.seg_dice={:.6f} "
      "loss.lrsc={:.6f} lr={:.8f}",
      epoch, loss_total, has_val && val.stereo_empty ? "na" : val_field(val.epe),
      has_val && val.stereo_empty ? "na" : val_field(val.d1),
      val_field(val.miou), val_field(val.pa), loss_disp[0], loss_disp[1],
      loss_disp[2], loss_disp[3], loss_seg_ce, loss_seg_dice, loss_lrsc, lr);
}

Trainer::Trainer(const TrainConfig& config)
    : config_(config), data_rng_(SampleSeed(config.seed, 7, 0)) {
  config_.Validate();
  net_ = std::make_unique<SemStereoNet<float>>(config_.Model(), config_.seed);
  adam_ = std::make_unique<Adam<float>>(net_->store().Parameters(),
                                        config_.adam);
}

StepResult Trainer::Step(const Batch& batch, double lr) {
  net_->store().ZeroGrad();
  ModelOutputs<float> out =
      net_->Forward(batch.left, batch.right, NormMode::kTrain);
  LossReport<float> rep =
      net_->Loss(out, batch.targets, config_.loss_weights);
  StepResult r;
  r.total = rep.total.item();
  for (int i = 0; i < 4; ++i) r.disp[i] = rep.disp[i];
  r.seg_ce = rep.seg_ce;
  r.seg_dice = rep.seg_dice;
  r.lrsc = rep.lrsc;
  r.empty_disp_warnings = rep.empty_disp_warnings;
  const std::pair<const char*, double> terms[] = {
      {"loss.disp0", r.disp[0]}, {"loss.disp1", r.disp[1]},
      {"loss.disp2", r.disp[2]}, {"loss.disp3", r.disp[3]},
      {"loss.seg_ce", r.seg_ce}, {"loss.seg_dice", r.seg_dice},
      {"loss.lrsc", r.lrsc},     {"loss.total", r.total}};
  for (const auto& [name, value] : terms) {
    if (!std::isfinite(value)) {
      throw std::runtime_error(fmt::format(
          "non-finite {} ({}) at epoch {} step {}", name, value, next_epoch_,
          steps_));
    }
  }
  rep.total.Backward();
  adam_->Step(lr);
  ++steps_;
  empty_disp_warnings_ += r.empty_disp_warnings;
  return r;
}

EpochRecord Trainer::RunEpoch(const std::vector<SceneSample>& train,
                              const std::vector<SceneSample>* test) {
  if (train.empty()) throw std::invalid_argument("training split is empty");
  EpochRecord rec;
  rec.epoch = next_epoch_;
  rec.lr = LearningRate(next_epoch_, config_.lr0, config_.lr_decay_epochs);
  std::vector<int> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), data_rng_);
  int batches = 0;
  for (size_t start = 0; start < order.size(); start += config_.batch_size) {
    const size_t end = std::min(order.size(), start + config_.batch_size);
    const Batch batch =
        MakeBatch(train, std::span<const int>(order.data() + start, end - start));
    const StepResult r = Step(batch, rec.lr);
    rec.loss_total += r.total;
    for (int i = 0; i < 4; ++i) rec.loss_disp[i] += r.disp[i];
    rec.loss_seg_ce += r.seg_ce;
    rec.loss_seg_dice += r.seg_dice;
    rec.loss_lrsc += r.lrsc;
    ++batches;
  }
  rec.loss_total /= batches;
  for (double& d : rec.loss_disp) d /= batches;
  rec.loss_seg_ce /= batches;
  rec.loss_seg_dice /= batches;
  rec.loss_lrsc /= batches;
  if (test != nullptr && !test->empty()) {
    rec.has_val = true;
    rec.val = Evaluate(*net_, *test, config_.batch_size);
  }
  ++next_epoch_;
  return rec;
}

Checkpoint Trainer::Save() const {
  Checkpoint c;
  c.AddBytes("meta/model", ModelConfigToJson(net_->config()).dump());
  c.AddInt("meta/next_epoch", next_epoch_);
  c.AddInt("meta/steps", steps_);
  std::ostringstream rng;
  rng << data_rng_;
  c.AddBytes("meta/data_rng", rng.str());
  for (const auto& e : net_->store().entries()) {
    c.AddFloats("param/" + e.name, e.tensor.shape(), e.tensor.data());
  }
  const auto names = net_->store().ParameterNames();
  const auto& states = adam_->states();
  for (size_t i = 0; i < names.size(); ++i) {
    const Shape shape{static_cast<int64_t>(states[i].m.size())};
    c.AddFloats("adam/" + names[i] + "/m", shape, states[i].m);
    c.AddFloats("adam/" + names[i] + "/v", shape, states[i].v);
    c.AddInt("adam/" + names[i] + "/step", states[i].step);
  }
  return c;
}

namespace {

void LoadParameters(const Checkpoint& c, ParamStore<float>& store) {
  for (const auto& e : store.entries()) {
    const CheckpointEntry& entry = c.Get("param/" + e.name);
    if (entry.shape != e.tensor.shape()) {
      throw std::runtime_error(fmt::format(
          "checkpoint parameter '{}' has shape {}, model expects {}", e.name,
          ShapeString(entry.shape), ShapeString(e.tensor.shape())));
    }
    const std::vector<float> values = c.Floats("param/" + e.name);
    Tensor<float> t = e.tensor;
    std::copy(values.begin(), values.end(), t.mutable_data().begin());
  }
}

}  // namespace

void Trainer::Restore(const Checkpoint& c) {
  const ModelConfig stored =
      ModelConfigFromJson(nlohmann::json::parse(c.Bytes("meta/model")));
  if (ModelConfigToJson(stored) != ModelConfigToJson(net_->config())) {
    throw std::runtime_error(
        "checkpoint model configuration differs from the training config");
  }
  LoadParameters(c, net_->store());
  const auto names = net_->store().ParameterNames();
  auto& states = adam_->states();
  for (size_t i = 0; i < names.size(); ++i) {
    states[i].m = c.Floats("adam/" + names[i] + "/m");
    states[i].v = c.Floats("adam/" + names[i] + "/v");
    states[i].step = c.Int("adam/" + names[i] + "/step");
  }
  next_epoch_ = static_cast<int>(c.Int("meta/next_epoch"));
  steps_ = c.Int("meta/steps");
  std::istringstream rng(c.Bytes("meta/data_rng"));
  rng >> data_rng_;
  if (!rng) throw std::runtime_error("checkpoint rng state is corrupt");
}

std::vector<int32_t> ArgmaxLabels(const Tensor<float>& probs) {
  const auto& s = probs.shape();
  const int64_t b = s[0], n = s[1], hw = s[2] * s[3];
  const auto& p = probs.vec();
  std::vector<int32_t> out(b * hw);
  for (int64_t i = 0; i < b; ++i) {
    for (int64_t k = 0; k < hw; ++k) {
      int32_t best = 0;
      for (int64_t c = 1; c < n; ++c) {
        if (p[(i * n + c) * hw + k] > p[(i * n + best) * hw + k]) {
          best = static_cast<int32_t>(c);
        }
      }
      out[i * hw + k] = best;
    }
  }
  return out;
}

EvalReport Evaluate(SemStereoNet<float>& net,
                    const std::vector<SceneSample>& samples, int batch_size,
                    const std::vector<std::string>& class_names) {
  NoGradGuard no_grad;
  EvalAccumulator acc(net.config().num_classes(), net.config().max_disparity(),
                      class_names);
  std::vector<int> order(samples.size());
  std::iota(order.begin(), order.end(), 0);
  for (size_t start = 0; start < order.size(); start += batch_size) {
    const size_t end = std::min(order.size(), start + batch_size);
    const Batch batch =
        MakeBatch(samples, std::span<const int>(order.data() + start, end - start));
    const ModelOutputs<float> out =
        net.Forward(batch.left, batch.right, NormMode::kEval);
    acc.AddStereo(out.d_final.data(), batch.targets.disparity.data());
    acc.AddSegmentation(ArgmaxLabels(out.P_left), batch.targets.labels);
  }
  return acc.Finalize();
}

namespace {

std::vector<SceneSample> Limit(std::vector<SceneSample> v, int limit) {
  if (limit > 0 && static_cast<int>(v.size()) > limit) v.resize(limit);
  return v;
}

}  // namespace

TrainResult Train(const TrainConfig& config, const LogSink& sink) {
  config.Validate();
  const DatasetMeta meta = ReadMeta(config.data);
  if (meta.scene.max_disparity != config.max_disparity) {
    throw std::invalid_argument(fmt::format(
        "dataset max_disparity {} differs from config max_disparity {}",
        meta.scene.max_disparity, config.max_disparity));
  }
  if (static_cast<int>(meta.class_names.size()) != config.num_classes) {
    throw std::invalid_argument(fmt::format(
        "dataset has {} classes, config num_classes is {}",
        meta.class_names.size(), config.num_classes));
  }
  const auto train = Limit(LoadSplit(config.data, "train"), config.train_limit);
  const auto test = Limit(LoadSplit(config.data, "test"), config.test_limit);

  TrainResult result;
  const fs::path out(config.output);
  fs::create_directories(out);
  result.log = out / "train.log";
  result.checkpoint = out / "checkpoint.smst";
  std::ofstream log(result.log, std::ios::trunc);
  if (!log) throw std::runtime_error(fmt::format("cannot write {}", result.log.string()));

  Trainer trainer(config);
  for (int e = 0; e < config.epochs; ++e) {
    const bool eval = (e + 1) % config.eval_every == 0 || e + 1 == config.epochs;
    EpochRecord rec = trainer.RunEpoch(train, eval ? &test : nullptr);
    if (rec.has_val) {
      rec.val.class_names = meta.class_names;
      result.final_eval = rec.val;
    }
    const std::string line = rec.LogLine();
    log << line << '\n';
    log.flush();
    if (sink) sink(line);
    result.epochs.push_back(std::move(rec));
    trainer.Save().Save(result.checkpoint);
  }
  WriteFileBytes(out / "metrics.json", result.final_eval.ToJson() + "\n");
  WriteFileBytes(out / "metrics.txt", result.final_eval.ToText());
  return result;
}

std::unique_ptr<SemStereoNet<float>> LoadModel(const Checkpoint& checkpoint) {
  const ModelConfig config =
      ModelConfigFromJson(nlohmann::json::parse(checkpoint.Bytes("meta/model")));
  auto net = std::make_unique<SemStereoNet<float>>(config, 0);
  LoadParameters(checkpoint, net->store());
  return net;
}

EvalReport EvaluateCheckpoint(const fs::path& checkpoint, const fs::path& data,
                              const std::string& split) {
  auto net = LoadModel(Checkpoint::Load(checkpoint));
  const DatasetMeta meta = ReadMeta(data);
  if (meta.scene.max_disparity != net->config().max_disparity()) {
    throw std::invalid_argument(fmt::format(
        "dataset max_disparity {} differs from checkpoint {}",
        meta.scene.max_disparity, net->config().max_disparity()));
  }
  EvalReport r = Evaluate(*net, LoadSplit(data, split), 4, meta.class_names);
  return r;
}

InferResult Infer(SemStereoNet<float>& net, const RgbImage& left,
                  const RgbImage& right) {
  if (left.width != right.width || left.height != right.height) {
    throw std::invalid_argument(fmt::format(
        "left {}x{} and right {}x{} differ in size", left.width, left.height,
        right.width, right.height));
  }
  NoGradGuard no_grad;
  const int64_t h = left.height, w = left.width;
  Tensor<float> l = Tensor<float>::FromData({1, 3, h, w}, FromRgb(left));
  Tensor<float> r = Tensor<float>::FromData({1, 3, h, w}, FromRgb(right));
  const ModelOutputs<float> out = net.Forward(l, r, NormMode::kEval);
  InferResult res;
  res.disparity = FloatImage{left.width, left.height, out.d_final.vec()};
  const auto labels = ArgmaxLabels(out.P_left);
  res.labels = GrayImage{left.width, left.height,
                         std::vector<uint8_t>(labels.begin(), labels.end())};
  return res;
}

InferResult InferFiles(const fs::path& checkpoint, const fs::path& left,
                       const fs::path& right, const fs::path& out) {
  auto net = LoadModel(Checkpoint::Load(checkpoint));
  InferResult res = Infer(*net, ReadPpm(left), ReadPpm(right));
  fs::create_directories(out);
  WritePfm(out / "disp.pfm", res.disparity);
  WritePgm(out / "labels.pgm", res.labels);
  return res;
}

}  // namespace semstereo
