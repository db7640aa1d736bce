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

// semstereo: dataset generation, training, evaluation and inference.

#include <cstdio>
#include <exception>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "semstereo/dataset.hpp"
#include "semstereo/gradcheck.hpp"
#include "semstereo/trainer.hpp"

namespace {

using namespace semstereo;

constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

struct GenArgs {
  std::string out;
  int count = 200;
  std::optional<int> test_count;
  int size = 64;
  int max_disparity = 16;
  uint64_t seed = 0;
  bool overlap = false;
};

struct TrainArgs {
  std::string config;
  std::optional<std::string> variant;
  std::optional<uint64_t> seed;
  std::optional<int> epochs;
  std::optional<std::string> data;
  std::optional<std::string> output;
};

int RunGen(const GenArgs& a) {
  SceneConfig scene = SceneConfig::Default(a.size, a.max_disparity, a.overlap);
  scene.seed = a.seed;
  const int test = a.test_count.value_or(std::max(1, a.count / 5));
  const DatasetMeta meta = GenerateDataset(a.out, scene, a.count, test);
  fmt::print("wrote {} train / {} test samples ({}x{}, max_disparity {}) to {}\n",
             meta.train_count, meta.test_count, a.size, a.size, a.max_disparity,
             a.out);
  return 0;
}

int RunTrain(const TrainArgs& a) {
  nlohmann::json j = nlohmann::json::parse(ReadFileBytes(a.config));
  // Command-line overrides are applied through the same parser.
  if (a.variant) {
    for (const char* k : {"structure", "ssr", "lrsc", "semantic_supervision"}) {
      j.erase(k);
    }
    j["variant"] = *a.variant;
  }
  if (a.seed) j["seed"] = *a.seed;
  if (a.epochs) j["epochs"] = *a.epochs;
  if (a.data) j["data"] = *a.data;
  if (a.output) j["output"] = *a.output;
  const TrainConfig config = TrainConfig::FromJson(j);
  std::cout << "variant: " << config.variant.Describe() << "\n";
  const TrainResult r =
      Train(config, [](const std::string& line) { std::cout << line << std::endl; });
  std::cout << r.final_eval.ToText();
  return 0;
}

int RunEval(const std::string& ckpt, const std::string& data,
            const std::string& split, bool json) {
  const EvalReport report = EvaluateCheckpoint(ckpt, data, split);
  std::cout << (json ? report.ToJson() + "\n" : report.ToText());
  return 0;
}

int RunStats(const std::string& data, const std::string& split,
             const std::string& json_out) {
  const CategoryDisparityStats stats = DatasetCategoryStats(data, split);
  std::cout << stats.ToText();
  if (json_out.empty()) {
    std::cout << stats.ToJson() << "\n";
  } else {
    WriteFileBytes(json_out, stats.ToJson() + "\n");
  }
  return 0;
}

int RunGradcheck(const GradCheckOptions& options) {
  bool all_ok = true;
  const auto results = RunGradcheckSuite(options, [&](const GradCheckResult& r) {
    fmt::print("{:<24} {} seeds={} passed={} max_rel_err={:.3e} time={:.2f}s\n",
               r.name, r.ok() ? "PASS" : "FAIL", r.seeds, r.passed,
               r.max_rel_error, r.seconds);
    std::fflush(stdout);
    all_ok = all_ok && r.ok();
  });
  fmt::print("gradcheck: {} cases, {}\n", results.size(),
             all_ok ? "all passed" : "FAILURES");
  return all_ok ? 0 : kExitRuntime;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"semstereo: semantic-guided stereo matching at desk scale"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Show help for every subcommand");

  GenArgs gen;
  auto* gen_cmd = app.add_subcommand("gen", "Generate a synthetic stereo dataset");
  gen_cmd->add_option("--out", gen.out, "Output directory")->required();
  gen_cmd->add_option("--count", gen.count, "Training samples")->check(CLI::PositiveNumber);
  gen_cmd->add_option("--test-count", gen.test_count,
                      "Test samples (default count/5, at least 1)");
  gen_cmd->add_option("--size", gen.size, "Image height and width")->check(CLI::PositiveNumber);
  gen_cmd->add_option("--max-disparity", gen.max_disparity, "D_max in pixels");
  gen_cmd->add_option("--seed", gen.seed, "Base seed");
  gen_cmd->add_flag("--overlap-bands", gen.overlap,
                    "Widen the class disparity bands so they overlap");

  TrainArgs train;
  auto* train_cmd = app.add_subcommand("train", "Train a model from a JSON config");
  train_cmd->add_option("--config", train.config, "Config file")->required();
  train_cmd->add_option("--variant", train.variant, "Ablation row1..row8");
  train_cmd->add_option("--seed", train.seed, "Override the config seed");
  train_cmd->add_option("--epochs", train.epochs, "Override the epoch count");
  train_cmd->add_option("--data", train.data, "Override the dataset directory");
  train_cmd->add_option("--output", train.output, "Override the output directory");

  std::string ckpt, data, split = "test";
  bool eval_json = false;
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint");
  eval_cmd->add_option("--ckpt", ckpt, "Checkpoint file")->required();
  eval_cmd->add_option("--data", data, "Dataset directory")->required();
  eval_cmd->add_option("--split", split, "train or test");
  eval_cmd->add_flag("--json", eval_json, "Print JSON instead of key=value");

  std::string left, right, out;
  auto* infer_cmd = app.add_subcommand("infer", "Run one stereo pair");
  infer_cmd->add_option("--ckpt", ckpt, "Checkpoint file")->required();
  infer_cmd->add_option("--left", left, "Left PPM")->required();
  infer_cmd->add_option("--right", right, "Right PPM")->required();
  infer_cmd->add_option("--out", out, "Output directory")->required();

  std::string stats_split = "train", stats_json;
  auto* stats_cmd = app.add_subcommand("stats", "Per-class disparity statistics");
  stats_cmd->add_option("--data", data, "Dataset directory")->required();
  stats_cmd->add_option("--split", stats_split, "train, test or all");
  stats_cmd->add_option("--json-out", stats_json, "Write the JSON here instead of stdout");

  GradCheckOptions gc;
  auto* gc_cmd = app.add_subcommand("gradcheck", "Finite-difference gradient suite");
  gc_cmd->add_option("--seed", gc.base_seed, "Base seed");
  gc_cmd->add_option("--seeds", gc.num_seeds, "Seeds per case")->check(CLI::PositiveNumber);
  gc_cmd->add_option("--only", gc.only, "Run only these cases");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n";
    const CLI::App* sub = nullptr;
    for (const auto* s : app.get_subcommands()) sub = s;
    std::cerr << (sub ? sub->help() : app.help());
    return kExitUsage;
  }

  try {
    if (*gen_cmd) return RunGen(gen);
    if (*train_cmd) return RunTrain(train);
    if (*eval_cmd) return RunEval(ckpt, data, split, eval_json);
    if (*infer_cmd) {
      InferFiles(ckpt, left, right, out);
      fmt::print("wrote {}/disp.pfm and {}/labels.pgm\n", out, out);
      return 0;
    }
    if (*stats_cmd) return RunStats(data, stats_split, stats_json);
    if (*gc_cmd) return RunGradcheck(gc);
  } catch (const std::exception& e) {
    std::cerr << "semstereo: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}
