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

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "semstereo/checkpoint.hpp"
#include "semstereo/config.hpp"
#include "semstereo/dataset.hpp"
#include "semstereo/model.hpp"
#include "semstereo/optim.hpp"
#include "semstereo/trainer.hpp"
#include "test_util.hpp"

namespace semstereo {
namespace {

namespace fs = std::filesystem;
using TF = Tensor<float>;
using TD = Tensor<double>;

// Textbook Adam, kept separate from the library code on purpose.
struct ReferenceAdam {
  double b1 = 0.9, b2 = 0.999, eps = 1e-8;
  std::vector<double> m, v;
  int t = 0;
  void Step(std::vector<double>& p, const std::vector<double>& g, double lr) {
    if (m.empty()) m.assign(p.size(), 0.0), v.assign(p.size(), 0.0);
    ++t;
    for (size_t i = 0; i < p.size(); ++i) {
      m[i] = b1 * m[i] + (1 - b1) * g[i];
      v[i] = b2 * v[i] + (1 - b2) * g[i] * g[i];
      const double mh = m[i] / (1 - std::pow(b1, t));
      const double vh = v[i] / (1 - std::pow(b2, t));
      p[i] -= lr * mh / (std::sqrt(vh) + eps);
    }
  }
};

TEST(Adam, TrajectoryMatchesReferenceOverTenSteps) {
  std::mt19937_64 rng(1);
  TD w = testing::RandomTensor<double>(rng, {4, 5});
  TD target = testing::RandomTensor<double>(rng, {4, 5});
  w.set_requires_grad(true);
  std::vector<double> ref(w.data().begin(), w.data().end());
  Adam<double> adam({w});
  ReferenceAdam oracle;
  for (int step = 0; step < 10; ++step) {
    w.ZeroGrad();
    TD diff = Sub(w, target);
    Sum(Mul(Mul(diff, diff), diff)).Backward();
    std::vector<double> g(ref.size());
    for (size_t i = 0; i < g.size(); ++i) {
      const double d = ref[i] - target.vec()[i];
      g[i] = 3 * d * d;
    }
    adam.Step(1e-2);
    oracle.Step(ref, g, 1e-2);
    for (size_t i = 0; i < ref.size(); ++i) {
      ASSERT_NEAR(w.vec()[i], ref[i], 1e-10) << "step " << step;
    }
  }
}

TEST(Adam, FirstStepMovesByLearningRate) {
  TD w = TD::FromData({3}, {1.0, -2.0, 0.5});
  w.set_requires_grad(true);
  Adam<double> adam({w});
  Sum(Mul(w, TD::FromData({3}, {4.0, -0.5, 1e-3}))).Backward();
  adam.Step(0.1);
  EXPECT_NEAR(w.vec()[0], 0.9, 1e-6);
  EXPECT_NEAR(w.vec()[1], -1.9, 1e-6);
  EXPECT_NEAR(w.vec()[2], 0.4, 1e-4);
}

TEST(Adam, ParametersWithoutGradientStayPut) {
  TD a = TD::FromData({2}, {1.0, 2.0});
  TD b = TD::FromData({2}, {3.0, 4.0});
  a.set_requires_grad(true);
  b.set_requires_grad(true);
  Adam<double> adam({a, b});
  Sum(a).Backward();
  adam.Step(0.1);
  EXPECT_EQ(b.vec(), (std::vector<double>{3.0, 4.0}));
  EXPECT_EQ(adam.states()[1].step, 0);
  EXPECT_EQ(adam.states()[0].step, 1);
}

TEST(LearningRate, HalvesAtEachDecayEpoch) {
  const std::vector<int> decay{8, 14, 20};
  EXPECT_DOUBLE_EQ(LearningRate(0, 1e-3, decay), 1e-3);
  EXPECT_DOUBLE_EQ(LearningRate(7, 1e-3, decay), 1e-3);
  EXPECT_DOUBLE_EQ(LearningRate(8, 1e-3, decay), 5e-4);
  EXPECT_DOUBLE_EQ(LearningRate(14, 1e-3, decay), 2.5e-4);
  EXPECT_DOUBLE_EQ(LearningRate(23, 1e-3, decay), 1.25e-4);
  EXPECT_DOUBLE_EQ(LearningRate(30, 1e-3, decay), 1.25e-4);
  const std::vector<int> unsorted{14, 8};
  EXPECT_THROW(LearningRate(0, 1e-3, unsorted), std::invalid_argument);
}

TEST(Checkpoint, EncodeDecodeRoundTrip) {
  Checkpoint c;
  c.AddFloats("w", {2, 2}, std::vector<float>{1, 2, 3, 4});
  c.AddDoubles("d", {1}, std::vector<double>{0.125});
  c.AddInt("step", 42);
  c.AddBytes("config", "{\"a\":1}");
  const std::string bytes = c.Encode();
  EXPECT_EQ(bytes.substr(0, 4), "SMST");
  const Checkpoint back = Checkpoint::Decode(bytes);
  EXPECT_EQ(back.Floats("w"), (std::vector<float>{1, 2, 3, 4}));
  EXPECT_EQ(back.Get("w").shape, (Shape{2, 2}));
  EXPECT_EQ(back.Doubles("d")[0], 0.125);
  EXPECT_EQ(back.Int("step"), 42);
  EXPECT_EQ(back.Bytes("config"), "{\"a\":1}");
  EXPECT_EQ(back.Encode(), bytes);
  EXPECT_THROW(back.Get("missing"), std::out_of_range);
  EXPECT_THROW(c.AddInt("step", 1), std::invalid_argument);
}

TEST(Checkpoint, CorruptionIsReported) {
  Checkpoint c;
  c.AddFloats("w", {3}, std::vector<float>{1, 2, 3});
  const std::string bytes = c.Encode();
  EXPECT_THROW(Checkpoint::Decode(bytes.substr(0, bytes.size() - 1)), FormatError);
  std::string bad = bytes;
  bad[0] = 'X';
  EXPECT_THROW(Checkpoint::Decode(bad), FormatError);
  EXPECT_THROW(Checkpoint::Decode(""), FormatError);
}

TEST(Config, RejectsUnknownKeysAndBadValues) {
  nlohmann::json j = {{"data", "d"}, {"output", "o"}};
  EXPECT_NO_THROW(TrainConfig::FromJson(j));
  j["learning_rate"] = 1;
  EXPECT_THROW(TrainConfig::FromJson(j), std::invalid_argument);
  nlohmann::json k = {{"data", "d"}, {"output", "o"}, {"epochs", 0}};
  EXPECT_THROW(TrainConfig::FromJson(k).Validate(), std::invalid_argument);
  nlohmann::json w = {{"data", "d"}, {"output", "o"},
                      {"loss_weights", {{"gamma", 1.0}}}};
  EXPECT_THROW(TrainConfig::FromJson(w), std::invalid_argument);
}

TEST(Config, DefaultFileLoads) {
  const fs::path path = fs::path(SEMSTEREO_SOURCE_DIR) / "configs" / "default.json";
  const TrainConfig c = TrainConfig::Load(path);
  EXPECT_EQ(c.variant.Row(), 4);
  EXPECT_EQ(c.epochs, 30);
  EXPECT_EQ(c.lr_decay_epochs, (std::vector<int>{8, 14, 20}));
  EXPECT_EQ(TrainConfig::FromJson(c.ToJson()).ToJson().dump(), c.ToJson().dump());
}

TEST(Variant, RowsMapToFlags) {
  for (int row = 1; row <= 8; ++row) {
    const Variant v = Variant::FromRow(row);
    EXPECT_EQ(v.Row(), row);
    EXPECT_EQ(ParseVariant("row" + std::to_string(row)), v);
    EXPECT_EQ(v.semantic_supervision, row <= 4);
  }
  EXPECT_EQ(Variant::FromRow(1).structure, Structure::kParallelBaseline);
  EXPECT_EQ(Variant::FromRow(2).structure, Structure::kSgc);
  EXPECT_FALSE(Variant::FromRow(2).ssr);
  EXPECT_TRUE(Variant::FromRow(3).ssr);
  EXPECT_FALSE(Variant::FromRow(3).lrsc);
  EXPECT_TRUE(Variant::FromRow(4).lrsc);
  EXPECT_THROW(ParseVariant("row9"), std::invalid_argument);
  EXPECT_THROW(Variant::FromRow(0), std::invalid_argument);
}

struct WiringResult {
  double semantic_max = 0.0;
  double shared_max = 0.0;
};

// Disparity terms only, backpropagated on one random batch.
WiringResult DisparityGradients(int row) {
  ModelConfig mc;
  mc.variant = Variant::FromRow(row);
  SemStereoNet<float> net(mc, 5);
  std::mt19937_64 rng(6);
  TF left = testing::UniformTensor<float>(rng, {2, 3, 64, 64}, 0, 1);
  TF right = testing::UniformTensor<float>(rng, {2, 3, 64, 64}, 0, 1);
  TF gt = testing::UniformTensor<float>(rng, {2, 1, 64, 64}, -14, 11);
  ModelOutputs<float> out = net.Forward(left, right, NormMode::kTrain);
  DispLoss<float> disp = DisparityLoss(out.Stages(), gt, 16);
  JointLoss<float>(disp, nullptr, nullptr, 0, LossWeights{}).total.Backward();
  WiringResult r;
  auto max_grad = [&](const std::vector<std::string>& names) {
    double m = 0;
    for (const auto& n : names) {
      TF p = net.store().Find(n);
      if (p.has_grad()) m = std::max(m, testing::MaxAbs(p.grad()));
    }
    return m;
  };
  r.semantic_max = max_grad(net.backbone().SemanticDecoderParameterNames());
  r.shared_max = max_grad(net.backbone().SharedDecoderParameterNames());
  return r;
}

TEST(Wiring, ParallelBaselineKeepsDisparityOutOfSemanticDecoder) {
  const WiringResult r = DisparityGradients(1);
  EXPECT_EQ(r.semantic_max, 0.0);
}

TEST(Wiring, CascadeSendsDisparityIntoSharedDecoder) {
  const WiringResult r = DisparityGradients(2);
  EXPECT_GT(r.shared_max, 0.0);
}

TEST(Model, FullLossReachesEveryParameterGroup) {
  ModelConfig mc;
  mc.variant = Variant::FromRow(4);
  SemStereoNet<float> net(mc, 7);
  std::mt19937_64 rng(8);
  TF left = testing::UniformTensor<float>(rng, {2, 3, 64, 64}, 0, 1);
  TF right = testing::UniformTensor<float>(rng, {2, 3, 64, 64}, 0, 1);
  Targets<float> t;
  t.disparity = testing::UniformTensor<float>(rng, {2, 1, 64, 64}, -14, 11);
  t.labels.resize(2 * 64 * 64);
  for (auto& l : t.labels) l = static_cast<int32_t>(rng() % 5);
  ModelOutputs<float> out = net.Forward(left, right, NormMode::kTrain);
  ASSERT_TRUE(out.ssr.has_value());
  for (float d : out.d_final.data()) ASSERT_TRUE(std::isfinite(d));
  LossReport<float> loss = net.Loss(out, t, LossWeights{});
  loss.total.Backward();
  for (const char* group : {"backbone.encoder", "backbone.decoder", "backbone.semantic_head",
                            "backbone.project.", "costvol.", "ssr."}) {
    double m = 0;
    for (const auto& e : net.store().entries()) {
      if (e.name.rfind(group, 0) != 0 || !e.trainable) continue;
      if (e.tensor.has_grad()) m = std::max(m, testing::MaxAbs(e.tensor.grad()));
    }
    EXPECT_GT(m, 0.0) << group;
  }
}

TEST(Model, UntrainedPredictionsStayInsideTheLevelRange) {
  ModelConfig mc;
  SemStereoNet<float> net(mc, 9);
  std::mt19937_64 rng(10);
  TF left = testing::UniformTensor<float>(rng, {1, 3, 64, 64}, 0, 1);
  ModelOutputs<float> out = net.Forward(left, left, NormMode::kEval);
  // A fresh residual branch is zero, so d_final is the upsampled d_init.
  EXPECT_EQ(out.d_final.vec(), out.d_init_up.vec());
  for (float d : out.d_final.data()) {
    EXPECT_GE(d, -16.0f - 1e-4f);
    EXPECT_LE(d, 12.0f + 1e-4f);
  }
}

fs::path TinyDataset() {
  const fs::path dir = fs::temp_directory_path() / "semstereo_test_harness_data";
  if (!fs::exists(dir / "meta.json")) {
    GenerateDataset(dir, SceneConfig::Default(), 8, 4);
  }
  return dir;
}

TrainConfig TinyConfig(const fs::path& out) {
  TrainConfig c;
  c.data = TinyDataset().string();
  c.output = out.string();
  c.epochs = 2;
  c.batch_size = 4;
  return c;
}

TEST(Trainer, RunsAreBitIdentical) {
  const fs::path root = testing::ScratchDir("harness");
  std::vector<std::string> lines_a, lines_b;
  Train(TinyConfig(root / "a"), [&](const std::string& l) { lines_a.push_back(l); });
  Train(TinyConfig(root / "b"), [&](const std::string& l) { lines_b.push_back(l); });
  ASSERT_EQ(lines_a.size(), 2u);
  EXPECT_EQ(lines_a, lines_b);
  EXPECT_EQ(ReadFileBytes(root / "a" / "checkpoint.smst"),
            ReadFileBytes(root / "b" / "checkpoint.smst"));
  EXPECT_EQ(ReadFileBytes(root / "a" / "train.log"),
            ReadFileBytes(root / "b" / "train.log"));
  EXPECT_EQ(lines_a[0].rfind("epoch=0 loss.total=", 0), 0u);
  EXPECT_NE(lines_a[0].find(" val.epe="), std::string::npos);
  EXPECT_NE(lines_a[0].find(" val.miou="), std::string::npos);
  EXPECT_TRUE(fs::exists(root / "a" / "metrics.json"));
}

TEST(Trainer, SaveRestoreResumesExactly) {
  const fs::path root = testing::ScratchDir("harness");
  TrainConfig c = TinyConfig(root / "x");
  const auto train = LoadSplit(c.data, "train");
  Trainer a(c);
  a.RunEpoch(train, nullptr);
  const Checkpoint snap = a.Save();
  Trainer b(c);
  b.Restore(Checkpoint::Decode(snap.Encode()));
  EXPECT_EQ(b.next_epoch(), 1);
  EXPECT_EQ(b.Save().Encode(), snap.Encode());
  a.RunEpoch(train, nullptr);
  b.RunEpoch(train, nullptr);
  EXPECT_EQ(a.Save().Encode(), b.Save().Encode());
}

TEST(Trainer, EvaluateCheckpointAndInfer) {
  const fs::path root = testing::ScratchDir("harness");
  TrainConfig c = TinyConfig(root / "run");
  c.epochs = 1;
  Train(c);
  const EvalReport r = EvaluateCheckpoint(root / "run" / "checkpoint.smst", c.data);
  EXPECT_GE(r.epe, 0.0);
  EXPECT_GE(r.pa, 0.0);
  EXPECT_LE(r.pa, 1.0);
  const fs::path split = fs::path(c.data) / "test";
  const InferResult inf =
      InferFiles(root / "run" / "checkpoint.smst", split / (SampleStem(0) + "_left.ppm"),
                 split / (SampleStem(0) + "_right.ppm"), root / "pred");
  EXPECT_EQ(inf.disparity.width, 64);
  EXPECT_TRUE(fs::exists(root / "pred" / "disp.pfm"));
  EXPECT_TRUE(fs::exists(root / "pred" / "labels.pgm"));
  for (uint8_t l : inf.labels.data) EXPECT_LT(l, 5);
}

// CLI behaviour, through the built executable.
std::string Cli() {
  const char* p = std::getenv("SEMSTEREO_CLI");
  return p ? p : "";
}

int RunCli(const std::string& args) {
  const int status = std::system((Cli() + " " + args + " >/dev/null 2>&1").c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

TEST(Cli, ExitCodes) {
  if (Cli().empty()) GTEST_SKIP() << "SEMSTEREO_CLI not set";
  EXPECT_EQ(RunCli(""), 2);
  EXPECT_EQ(RunCli("frobnicate"), 2);
  EXPECT_EQ(RunCli("gen --out /tmp/x --bogus"), 2);
  EXPECT_EQ(RunCli("train --config /nonexistent/config.json"), 1);
  EXPECT_EQ(RunCli("eval --ckpt /nonexistent.smst --data /nonexistent"), 1);
  EXPECT_EQ(RunCli("gradcheck --only conv2d --seeds 2"), 0);
}

TEST(Cli, GenIsDeterministic) {
  if (Cli().empty()) GTEST_SKIP() << "SEMSTEREO_CLI not set";
  const fs::path root = testing::ScratchDir("harness");
  ASSERT_EQ(RunCli("gen --out " + (root / "a").string() + " --count 3 --size 64 --seed 5"), 0);
  ASSERT_EQ(RunCli("gen --out " + (root / "b").string() + " --count 3 --size 64 --seed 5"), 0);
  int files = 0;
  for (const auto& e : fs::recursive_directory_iterator(root / "a")) {
    if (!e.is_regular_file()) continue;
    const fs::path rel = fs::relative(e.path(), root / "a");
    EXPECT_EQ(ReadFileBytes(e.path()), ReadFileBytes(root / "b" / rel)) << rel;
    ++files;
  }
  EXPECT_GT(files, 6);
  EXPECT_EQ(RunCli("stats --data " + (root / "a").string()), 0);
}

}  // namespace
}  // namespace semstereo
