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

#include "semstereo/config.hpp"

#include <algorithm>
#include <set>
#include <stdexcept>

#include <fmt/format.h>

#include "semstereo/netpbm.hpp"

namespace semstereo {

namespace {

using nlohmann::json;

void RejectUnknown(const json& j, const std::set<std::string>& allowed,
                   const char* where) {
  if (!j.is_object()) {
    throw std::invalid_argument(fmt::format("{} must be a JSON object", where));
  }
  for (const auto& [key, value] : j.items()) {
    if (!allowed.count(key)) {
      throw std::invalid_argument(
          fmt::format("unknown key '{}' in {}", key, where));
    }
  }
}

Structure ParseStructure(const std::string& s) {
  if (s == "sgc") return Structure::kSgc;
  if (s == "parallel_baseline") return Structure::kParallelBaseline;
  throw std::invalid_argument(fmt::format(
      "structure '{}' must be 'sgc' or 'parallel_baseline'", s));
}

const char* StructureName(Structure s) {
  return s == Structure::kSgc ? "sgc" : "parallel_baseline";
}

// Typed read with the key named in the error.
template <typename V>
V Read(const json& j, const std::string& key) {
  try {
    return j.at(key).get<V>();
  } catch (const json::exception& e) {
    throw std::invalid_argument(
        fmt::format("config key '{}': {}", key, e.what()));
  }
}

}  // namespace

void TrainConfig::Validate() const {
  if (data.empty()) throw std::invalid_argument("config: 'data' is required");
  if (output.empty()) throw std::invalid_argument("config: 'output' is required");
  if (epochs < 1) throw std::invalid_argument("config: epochs must be >= 1");
  if (batch_size < 1) throw std::invalid_argument("config: batch_size must be >= 1");
  if (!(lr0 > 0)) throw std::invalid_argument("config: lr0 must be positive");
  if (!std::is_sorted(lr_decay_epochs.begin(), lr_decay_epochs.end())) {
    throw std::invalid_argument("config: lr_decay_epochs must be ascending");
  }
  if (!(adam.beta1 >= 0 && adam.beta1 < 1 && adam.beta2 >= 0 && adam.beta2 < 1)) {
    throw std::invalid_argument("config: betas must lie in [0, 1)");
  }
  if (num_classes < 2 || num_classes > 255) {
    throw std::invalid_argument("config: num_classes must be in [2, 255]");
  }
  if (train_limit < 0 || test_limit < 0 || eval_every < 1) {
    throw std::invalid_argument("config: limits must be >= 0, eval_every >= 1");
  }
  Model().costvol.Validate();
  Model().backbone.Validate();
}

ModelConfig TrainConfig::Model() const {
  ModelConfig m;
  m.backbone.num_classes = num_classes;
  m.costvol.max_disparity = max_disparity;
  m.variant = variant;
  return m;
}

nlohmann::ordered_json TrainConfig::ToJson() const {
  nlohmann::ordered_json j;
  j["data"] = data;
  j["output"] = output;
  j["structure"] = StructureName(variant.structure);
  j["ssr"] = variant.ssr;
  j["lrsc"] = variant.lrsc;
  j["semantic_supervision"] = variant.semantic_supervision;
  j["max_disparity"] = max_disparity;
  j["num_classes"] = num_classes;
  j["epochs"] = epochs;
  j["batch_size"] = batch_size;
  j["lr0"] = lr0;
  j["lr_decay_epochs"] = lr_decay_epochs;
  j["betas"] = {adam.beta1, adam.beta2};
  j["seed"] = seed;
  j["loss_weights"] = {{"lambda", loss_weights.lambda},
                       {"alpha", loss_weights.alpha},
                       {"beta", loss_weights.beta}};
  j["train_limit"] = train_limit;
  j["test_limit"] = test_limit;
  j["eval_every"] = eval_every;
  return j;
}

TrainConfig TrainConfig::FromJson(const json& j) {
  RejectUnknown(j,
                {"data", "output", "variant", "structure", "ssr", "lrsc",
                 "semantic_supervision", "max_disparity", "num_classes",
                 "epochs", "batch_size", "lr0", "lr_decay_epochs", "betas",
                 "seed", "loss_weights", "train_limit", "test_limit",
                 "eval_every"},
                "train config");
  TrainConfig c;
  // A row name first, then individual flags refine it.
  if (j.contains("variant")) c.variant = ParseVariant(Read<std::string>(j, "variant"));
  if (j.contains("structure")) {
    c.variant.structure = ParseStructure(Read<std::string>(j, "structure"));
  }
  if (j.contains("ssr")) c.variant.ssr = Read<bool>(j, "ssr");
  if (j.contains("lrsc")) c.variant.lrsc = Read<bool>(j, "lrsc");
  if (j.contains("semantic_supervision")) {
    c.variant.semantic_supervision = Read<bool>(j, "semantic_supervision");
  }
  if (j.contains("data")) c.data = Read<std::string>(j, "data");
  if (j.contains("output")) c.output = Read<std::string>(j, "output");
  if (j.contains("max_disparity")) c.max_disparity = Read<int>(j, "max_disparity");
  if (j.contains("num_classes")) c.num_classes = Read<int>(j, "num_classes");
  if (j.contains("epochs")) c.epochs = Read<int>(j, "epochs");
  if (j.contains("batch_size")) c.batch_size = Read<int>(j, "batch_size");
  if (j.contains("lr0")) c.lr0 = Read<double>(j, "lr0");
  if (j.contains("lr_decay_epochs")) {
    c.lr_decay_epochs = Read<std::vector<int>>(j, "lr_decay_epochs");
  }
  if (j.contains("betas")) {
    const auto betas = Read<std::vector<double>>(j, "betas");
    if (betas.size() != 2) {
      throw std::invalid_argument("config key 'betas' must hold two numbers");
    }
    c.adam.beta1 = betas[0];
    c.adam.beta2 = betas[1];
  }
  if (j.contains("seed")) c.seed = Read<uint64_t>(j, "seed");
  if (j.contains("loss_weights")) {
    const json& w = j.at("loss_weights");
    RejectUnknown(w, {"lambda", "alpha", "beta"}, "loss_weights");
    if (w.contains("lambda")) {
      const auto l = Read<std::vector<double>>(w, "lambda");
      if (l.size() != 4) {
        throw std::invalid_argument("loss_weights.lambda must hold four numbers");
      }
      std::copy(l.begin(), l.end(), c.loss_weights.lambda.begin());
    }
    if (w.contains("alpha")) c.loss_weights.alpha = Read<double>(w, "alpha");
    if (w.contains("beta")) c.loss_weights.beta = Read<double>(w, "beta");
  }
  if (j.contains("train_limit")) c.train_limit = Read<int>(j, "train_limit");
  if (j.contains("test_limit")) c.test_limit = Read<int>(j, "test_limit");
  if (j.contains("eval_every")) c.eval_every = Read<int>(j, "eval_every");
  return c;
}

TrainConfig TrainConfig::Load(const std::filesystem::path& path) {
  json j;
  try {
    j = json::parse(ReadFileBytes(path));
  } catch (const json::parse_error& e) {
    throw std::invalid_argument(fmt::format("{}: {}", path.string(), e.what()));
  }
  return FromJson(j);
}

nlohmann::ordered_json ModelConfigToJson(const ModelConfig& config) {
  nlohmann::ordered_json j;
  j["structure"] = StructureName(config.variant.structure);
  j["ssr"] = config.variant.ssr;
  j["lrsc"] = config.variant.lrsc;
  j["semantic_supervision"] = config.variant.semantic_supervision;
  j["num_classes"] = config.backbone.num_classes;
  j["encoder_channels"] = config.backbone.encoder_channels;
  j["decoder_channels"] = config.backbone.decoder_channels;
  j["max_disparity"] = config.costvol.max_disparity;
  j["groups"] = config.costvol.groups;
  j["volume_channels"] = config.costvol.volume_channels;
  j["attention_channels"] = config.costvol.attention_channels;
  j["hourglass_channels"] = config.costvol.hourglass_channels;
  return j;
}

ModelConfig ModelConfigFromJson(const json& j) {
  RejectUnknown(j,
                {"structure", "ssr", "lrsc", "semantic_supervision",
                 "num_classes", "encoder_channels", "decoder_channels",
                 "max_disparity", "groups", "volume_channels",
                 "attention_channels", "hourglass_channels"},
                "model config");
  ModelConfig m;
  m.variant.structure = ParseStructure(Read<std::string>(j, "structure"));
  m.variant.ssr = Read<bool>(j, "ssr");
  m.variant.lrsc = Read<bool>(j, "lrsc");
  m.variant.semantic_supervision = Read<bool>(j, "semantic_supervision");
  m.backbone.num_classes = Read<int>(j, "num_classes");
  m.backbone.encoder_channels =
      Read<decltype(m.backbone.encoder_channels)>(j, "encoder_channels");
  m.backbone.decoder_channels =
      Read<decltype(m.backbone.decoder_channels)>(j, "decoder_channels");
  m.costvol.max_disparity = Read<int>(j, "max_disparity");
  m.costvol.groups = Read<int>(j, "groups");
  m.costvol.volume_channels = Read<int>(j, "volume_channels");
  m.costvol.attention_channels = Read<int>(j, "attention_channels");
  m.costvol.hourglass_channels =
      Read<decltype(m.costvol.hourglass_channels)>(j, "hourglass_channels");
  return m;
}

}  // namespace semstereo
