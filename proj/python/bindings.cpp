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

// Python bindings: scene generation, metrics, training and inference.

#include <cstdint>
#include <string>
#include <vector>

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "semstereo/config.hpp"
#include "semstereo/costvol.hpp"
#include "semstereo/dataset.hpp"
#include "semstereo/gradcheck.hpp"
#include "semstereo/metrics.hpp"
#include "semstereo/scenegen.hpp"
#include "semstereo/trainer.hpp"

namespace py = pybind11;

namespace semstereo {
namespace {

template <typename T>
py::array_t<T> ToArray(const std::vector<T>& v, std::vector<py::ssize_t> shape) {
  py::array_t<T> out(shape);
  std::copy(v.begin(), v.end(), out.mutable_data());
  return out;
}

template <typename T>
std::vector<T> FromArray(const py::array_t<T, py::array::c_style | py::array::forcecast>& a) {
  return std::vector<T>(a.data(), a.data() + a.size());
}

py::dict SampleToDict(const SceneSample& s) {
  const py::ssize_t h = s.height, w = s.width;
  py::dict d;
  d["image_l"] = ToArray(s.image_l, {3, h, w});
  d["image_r"] = ToArray(s.image_r, {3, h, w});
  d["labels_l"] = ToArray(s.labels_l, {h, w});
  d["labels_r"] = ToArray(s.labels_r, {h, w});
  d["disp_l"] = ToArray(s.disp_l, {h, w});
  d["occlusion"] = ToArray(s.occlusion, {h, w});
  if (!s.disp_r.empty()) d["disp_r"] = ToArray(s.disp_r, {h, w});
  return d;
}

py::dict ReportToDict(const EvalReport& r) {
  return py::module_::import("json").attr("loads")(r.ToJson());
}

}  // namespace
}  // namespace semstereo

PYBIND11_MODULE(_core, m) {
  using namespace semstereo;
  m.doc() = "SemStereo desk-scale stereo matching with semantic cues";

  m.def("class_names", &DefaultClassNames);
  m.def("level_values", &LevelValues, py::arg("max_disparity") = 16);

  m.def(
      "scene_config",
      [](int size, int max_disparity, bool overlap_bands) {
        return SceneConfig::Default(size, max_disparity, overlap_bands).ToJson().dump();
      },
      py::arg("size") = 64, py::arg("max_disparity") = 16,
      py::arg("overlap_bands") = false,
      "Default scene configuration as a JSON string.");

  m.def(
      "generate_scene",
      [](uint64_t seed, const std::string& config_json) {
        const SceneConfig c =
            config_json.empty() ? SceneConfig::Default()
                                : SceneConfig::FromJson(nlohmann::json::parse(config_json));
        SceneSample s;
        {
          py::gil_scoped_release release;
          s = GenerateScene(c, seed);
        }
        return SampleToDict(s);
      },
      py::arg("seed"), py::arg("config_json") = "");

  m.def(
      "generate_dataset",
      [](const std::filesystem::path& root, int count, int test_count, int size,
         uint64_t seed, bool overlap_bands) {
        SceneConfig c = SceneConfig::Default(size, 16, overlap_bands);
        c.seed = seed;
        py::gil_scoped_release release;
        return GenerateDataset(root, c, count, test_count).ToJson().dump();
      },
      py::arg("root"), py::arg("count"), py::arg("test_count"), py::arg("size") = 64,
      py::arg("seed") = 0, py::arg("overlap_bands") = false);

  m.def(
      "load_sample",
      [](const std::filesystem::path& root, const std::string& split, int index) {
        return SampleToDict(ReadSample(root / split, index));
      },
      py::arg("root"), py::arg("split"), py::arg("index"));

  m.def(
      "category_stats",
      [](const std::filesystem::path& root, const std::string& split) {
        return py::module_::import("json").attr("loads")(
            DatasetCategoryStats(root, split).ToJson());
      },
      py::arg("root"), py::arg("split") = "train");

  m.def(
      "stereo_metrics",
      [](const py::array_t<float, py::array::c_style | py::array::forcecast>& pred,
         const py::array_t<float, py::array::c_style | py::array::forcecast>& gt,
         int max_disparity) {
        const auto p = FromArray(pred), g = FromArray(gt);
        if (p.size() != g.size()) throw std::invalid_argument("pred/gt size mismatch");
        const auto valid = DisparityValidMask(g, max_disparity);
        const StereoMetrics s = ComputeStereoMetrics(p, g, valid);
        py::dict d;
        d["epe"] = s.epe;
        d["d1"] = s.d1;
        d["valid_pixels"] = s.valid_pixels;
        return d;
      },
      py::arg("pred"), py::arg("gt"), py::arg("max_disparity") = 16);

  m.def(
      "seg_metrics",
      [](const py::array_t<int32_t, py::array::c_style | py::array::forcecast>& pred,
         const py::array_t<int32_t, py::array::c_style | py::array::forcecast>& gt,
         int num_classes) {
        const auto p = FromArray(pred), g = FromArray(gt);
        if (p.size() != g.size()) throw std::invalid_argument("pred/gt size mismatch");
        const SegMetrics s = ComputeSegMetrics(p, g, num_classes);
        py::dict d;
        d["pa"] = s.pa;
        d["miou"] = s.miou;
        d["iou"] = s.iou;
        d["present"] = s.present;
        return d;
      },
      py::arg("pred"), py::arg("gt"), py::arg("num_classes") = 5);

  m.def(
      "train",
      [](const std::string& config_json) {
        const TrainConfig c = TrainConfig::FromJson(nlohmann::json::parse(config_json));
        TrainResult r;
        {
          py::gil_scoped_release release;
          r = Train(c);
        }
        std::vector<std::string> lines;
        for (const auto& e : r.epochs) lines.push_back(e.LogLine());
        py::dict d;
        d["log"] = lines;
        d["metrics"] = ReportToDict(r.final_eval);
        d["checkpoint"] = r.checkpoint;
        return d;
      },
      py::arg("config_json"), "Trains from a JSON config string.");

  m.def(
      "evaluate",
      [](const std::filesystem::path& ckpt, const std::filesystem::path& data,
         const std::string& split) {
        EvalReport r;
        {
          py::gil_scoped_release release;
          r = EvaluateCheckpoint(ckpt, data, split);
        }
        return ReportToDict(r);
      },
      py::arg("ckpt"), py::arg("data"), py::arg("split") = "test");

  m.def(
      "infer",
      [](const std::filesystem::path& ckpt, const std::filesystem::path& left,
         const std::filesystem::path& right, const std::filesystem::path& out) {
        const InferResult r = InferFiles(ckpt, left, right, out);
        py::dict d;
        d["disparity"] = ToArray(r.disparity.data, {r.disparity.height, r.disparity.width});
        d["labels"] = ToArray(r.labels.data, {r.labels.height, r.labels.width});
        return d;
      },
      py::arg("ckpt"), py::arg("left"), py::arg("right"), py::arg("out"));

  m.def(
      "gradcheck",
      [](int num_seeds, uint64_t base_seed, std::vector<std::string> only) {
        GradCheckOptions o;
        o.num_seeds = num_seeds;
        o.base_seed = base_seed;
        o.only = std::move(only);
        std::vector<GradCheckResult> results;
        {
          py::gil_scoped_release release;
          results = RunGradcheckSuite(o);
        }
        py::dict d;
        for (const auto& r : results) d[py::str(r.name)] = r.max_rel_error;
        return d;
      },
      py::arg("num_seeds") = 20, py::arg("base_seed") = 0,
      py::arg("only") = std::vector<std::string>{},
      "Maximum relative error per case.");
}
