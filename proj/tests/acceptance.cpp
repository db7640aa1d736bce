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

// End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
// exits non-zero if any fails. Training runs are cached in the work
// directory, keyed on the CLI binary and the arguments.

#include <sys/wait.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "CLI11.hpp"
#include "json.hpp"
#include "semstereo/costvol.hpp"
#include "semstereo/metrics.hpp"
#include "semstereo/model.hpp"
#include "semstereo/netpbm.hpp"
#include "semstereo/ops.hpp"
#include "semstereo/optim.hpp"
#include "semstereo/supervision.hpp"

namespace semstereo {
namespace {

namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;
using TD = Tensor<double>;
using TF = Tensor<float>;

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Context {
  fs::path work;
  std::string cli;
  bool use_cache = true;
  std::vector<int> seeds{1, 2, 3};
  int epochs = 30;
};

double Seconds(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

int Shell(const std::string& cmd) {
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string Quote(const fs::path& p) { return "'" + p.string() + "'"; }

// ---- 1: gradient suite ----------------------------------------------------

Outcome GradientSuite(const Context& ctx) {
  const fs::path log = ctx.work / "gradcheck.log";
  const auto t0 = Clock::now();
  const int code = Shell(fmt::format("{} gradcheck > {} 2>&1", ctx.cli, Quote(log)));
  const double secs = Seconds(t0);
  std::ifstream in(log);
  int cases = 0, failed = 0;
  for (std::string line; std::getline(in, line);) {
    if (line.find(" PASS ") != std::string::npos) ++cases;
    if (line.find(" FAIL ") != std::string::npos) ++cases, ++failed;
  }
  Outcome o;
  o.pass = code == 0 && failed == 0 && cases > 0 && secs <= 300.0;
  o.detail = fmt::format("exit={} cases={} failed={} runtime={:.1f}s", code,
                         cases, failed, secs);
  return o;
}

// ---- 2: exactness ---------------------------------------------------------

Outcome Exactness() {
  std::vector<std::string> bad;
  // soft-argmax on one-hot costs
  const auto values = LevelValues(16);
  double worst = 0;
  for (size_t j = 0; j < values.size(); ++j) {
    std::vector<double> v(values.size(), 0.0);
    v[j] = 1e4;
    TD d = SoftArgmaxDisparity(TD::FromData({1, 1, (int64_t)values.size(), 1, 1}, v), 16);
    worst = std::max(worst, std::abs(d.item() - values[j]));
  }
  if (worst > 1e-6) bad.push_back(fmt::format("soft-argmax err {:.2e}", worst));

  // hwarp identity and integer shifts
  std::mt19937_64 rng(1);
  std::normal_distribution<double> n01;
  const int64_t C = 3, H = 5, W = 9;
  std::vector<double> img(C * H * W);
  for (double& x : img) x = n01(rng);
  TD in = TD::FromData({C, H, W}, img);
  for (int shift : {0, 1, 3, -2}) {
    for (int sign : {1, -1}) {
      auto r = HorizontalWarp(in, TD::Full({1, H, W}, shift), sign);
      for (int64_t c = 0; c < C; ++c)
        for (int64_t y = 0; y < H; ++y)
          for (int64_t x = 0; x < W; ++x) {
            const int64_t src = x + sign * shift;
            const bool inside = src >= 0 && src < W;
            const double want = inside ? img[(c * H + y) * W + src] : 0.0;
            if (r.output.at({c, y, x}) != want ||
                r.mask.at({0, y, x}) != (inside ? 1.0 : 0.0)) {
              bad.push_back(fmt::format("hwarp shift={} sign={}", shift, sign));
              goto next_shift;
            }
          }
    next_shift:;
    }
  }

  // LRSC on matched one-hot inputs
  {
    std::vector<int32_t> labels(2 * 6 * 8);
    for (auto& l : labels) l = static_cast<int32_t>(rng() % 5);
    TD onehot = OneHot<double>(labels, 2, 5, 6, 8);
    TD zero = TD::Zeros({2, 1, 6, 8});
    PseudoLabels<double> pr = MakePseudoRight(onehot, zero);
    const double l = LrscLoss(onehot, pr.labels, pr.mask).item();
    if (!(std::abs(l) <= 1e-7)) bad.push_back(fmt::format("lrsc {:.3e}", l));
  }

  // uniform prediction against one-hot targets
  {
    std::vector<int32_t> labels(4 * 4);
    for (auto& l : labels) l = static_cast<int32_t>(rng() % 5);
    TD uniform = TD::Full({1, 5, 4, 4}, 0.2);
    const double ce = IndexCrossEntropy(uniform, labels, 255).item();
    TD onehot = OneHot<double>(labels, 1, 5, 4, 4);
    const double soft = SoftCrossEntropy(uniform, onehot, TD::Full({1, 1, 4, 4}, 1.0)).item();
    const double ln5 = std::log(5.0);
    if (std::abs(ce - ln5) > 1e-6 || std::abs(soft - ln5) > 1e-6) {
      bad.push_back(fmt::format("ce {:.9f} soft {:.9f}", ce, soft));
    }
  }
  Outcome o;
  o.pass = bad.empty();
  o.detail = bad.empty() ? fmt::format("soft-argmax max err {:.1e}", worst)
                         : fmt::format("{}", fmt::join(bad, "; "));
  return o;
}

// ---- 3: oracles -----------------------------------------------------------

Outcome Oracles() {
  std::mt19937_64 rng(2026);
  std::uniform_real_distribution<double> ud(-20.0, 20.0);
  std::normal_distribution<double> noise(0.0, 3.0);
  int mismatches = 0;
  const int n = 16 * 16;
  for (int inst = 0; inst < 100; ++inst) {
    std::vector<float> pred(n), gt(n);
    std::vector<uint8_t> valid(n);
    std::vector<int32_t> lp(n), lg(n);
    for (int i = 0; i < n; ++i) {
      gt[i] = static_cast<float>(ud(rng));
      pred[i] = static_cast<float>(gt[i] + noise(rng));
      valid[i] = std::abs(gt[i]) < 16.0f;
      // Class 4 is absent from odd instances.
      const int k = inst % 2 ? 4 : 5;
      lg[i] = (rng() % 17 == 0) ? 255 : static_cast<int32_t>(rng() % k);
      lp[i] = rng() % 3 == 0 ? static_cast<int32_t>(rng() % 5) : (lg[i] == 255 ? 0 : lg[i]);
    }
    double abs_sum = 0;
    int64_t count = 0, badpx = 0;
    for (int i = 0; i < n; ++i) {
      if (!valid[i]) continue;
      const double e = std::abs(static_cast<double>(pred[i]) - gt[i]);
      abs_sum += e;
      badpx += e > 3.0;
      ++count;
    }
    const StereoMetrics sm = ComputeStereoMetrics(pred, gt, valid);
    if (count > 0 && (sm.epe != abs_sum / count ||
                      sm.d1 != static_cast<double>(badpx) / count)) {
      ++mismatches;
    }
    int64_t tp[5] = {}, fp[5] = {}, fn[5] = {}, correct = 0, total = 0;
    bool present[5] = {};
    for (int i = 0; i < n; ++i) {
      if (lg[i] == 255) continue;
      ++total;
      present[lg[i]] = true;
      if (lp[i] == lg[i]) {
        ++correct;
        ++tp[lg[i]];
      } else {
        ++fp[lp[i]];
        ++fn[lg[i]];
      }
    }
    const SegMetrics seg = ComputeSegMetrics(lp, lg, 5);
    if (seg.pa != static_cast<double>(correct) / total) ++mismatches;
    double iou_sum = 0;
    int npresent = 0;
    for (int c = 0; c < 5; ++c) {
      const int64_t den = tp[c] + fp[c] + fn[c];
      const double iou = den > 0 ? static_cast<double>(tp[c]) / den : 0.0;
      if (seg.iou[c] != iou) ++mismatches;
      if (present[c]) iou_sum += iou, ++npresent;
    }
    if (seg.miou != iou_sum / npresent) ++mismatches;
  }

  // Adam against a textbook implementation.
  std::normal_distribution<double> n01;
  std::vector<double> w0(20), target(20);
  for (auto& x : w0) x = n01(rng);
  for (auto& x : target) x = n01(rng);
  TD w = TD::FromData({20}, w0);
  w.set_requires_grad(true);
  Adam<double> adam({w});
  std::vector<double> ref = w0, m(20, 0.0), v(20, 0.0);
  double adam_err = 0;
  for (int t = 1; t <= 10; ++t) {
    w.ZeroGrad();
    TD diff = Sub(w, TD::FromData({20}, target));
    Sum(Mul(Mul(diff, diff), diff)).Backward();
    adam.Step(1e-2);
    for (int i = 0; i < 20; ++i) {
      const double d = ref[i] - target[i];
      const double g = 3 * d * d;
      m[i] = 0.9 * m[i] + 0.1 * g;
      v[i] = 0.999 * v[i] + 0.001 * g * g;
      const double mh = m[i] / (1 - std::pow(0.9, t));
      const double vh = v[i] / (1 - std::pow(0.999, t));
      ref[i] -= 1e-2 * mh / (std::sqrt(vh) + 1e-8);
      adam_err = std::max(adam_err, std::abs(ref[i] - w.vec()[i]));
    }
  }
  Outcome o;
  o.pass = mismatches == 0 && adam_err <= 1e-10;
  o.detail = fmt::format("metric mismatches={} over 100 instances, adam max diff={:.1e}",
                         mismatches, adam_err);
  return o;
}

// ---- runs -----------------------------------------------------------------

std::string BinaryKey(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return fmt::format("{:016x}", std::hash<std::string>{}(ss.str()));
}

// Runs `args` through the CLI unless a matching stamp says the outputs are
// current. Returns the wall time of the run (cached value when reused).
double CachedRun(const Context& ctx, const fs::path& dir, const std::string& args,
                 const fs::path& done_marker, bool& ok) {
  const fs::path stamp = dir / ".acceptance_stamp";
  const std::string key = BinaryKey(ctx.cli) + " " + args;
  if (ctx.use_cache && fs::exists(stamp) && fs::exists(done_marker)) {
    std::ifstream in(stamp);
    std::string k;
    double secs = 0;
    std::getline(in, k);
    in >> secs;
    if (k == key) {
      ok = true;
      return secs;
    }
  }
  fs::remove_all(dir);
  fs::create_directories(dir);
  const auto t0 = Clock::now();
  const int code = Shell(fmt::format("{} {} > {} 2>&1", ctx.cli, args,
                                     Quote(dir / "cli_output.txt")));
  const double secs = Seconds(t0);
  ok = code == 0 && fs::exists(done_marker);
  if (ok) {
    std::ofstream out(stamp);
    out << key << "\n" << secs << "\n";
  }
  return secs;
}

fs::path DataDir(const Context& ctx) { return ctx.work / "data"; }

bool EnsureData(const Context& ctx) {
  bool ok = false;
  CachedRun(ctx, DataDir(ctx),
            fmt::format("gen --out {} --count 200 --size 64 --seed 0",
                        Quote(DataDir(ctx))),
            DataDir(ctx) / "meta.json", ok);
  return ok;
}

struct RunInfo {
  bool ok = false;
  double seconds = 0;
  double epe = NAN;
  double d1 = NAN;
  std::vector<double> losses;
};

std::string TrainArgs(const Context& ctx, int row, int seed, const fs::path& out) {
  return fmt::format("train --config {} --variant row{} --seed {} --epochs {} --data {} --output {}",
                     Quote(fs::path(SEMSTEREO_SOURCE_DIR) / "configs" / "default.json"),
                     row, seed, ctx.epochs, Quote(DataDir(ctx)), Quote(out));
}

RunInfo ReadRun(const fs::path& dir) {
  RunInfo r;
  std::ifstream log(dir / "train.log");
  for (std::string line; std::getline(log, line);) {
    const auto p = line.find("loss.total=");
    if (p != std::string::npos) r.losses.push_back(std::stod(line.substr(p + 11)));
  }
  std::ifstream mj(dir / "metrics.json");
  if (mj) {
    const auto j = nlohmann::json::parse(mj);
    if (j.at("epe").is_number()) r.epe = j.at("epe").get<double>();
    if (j.at("d1").is_number()) r.d1 = j.at("d1").get<double>();
  }
  return r;
}

RunInfo TrainVariant(const Context& ctx, int row, int seed) {
  const fs::path dir = ctx.work / "runs" / fmt::format("row{}_seed{}", row, seed);
  bool ok = false;
  const double secs = CachedRun(ctx, dir, TrainArgs(ctx, row, seed, dir),
                                dir / "metrics.json", ok);
  RunInfo r = ReadRun(dir);
  r.ok = ok;
  r.seconds = secs;
  std::cout << fmt::format("  row{} seed{}: epe={:.4f} d1={:.4f} time={:.0f}s{}\n",
                           row, seed, r.epe, r.d1, secs, ok ? "" : " (run failed)")
            << std::flush;
  return r;
}

// ---- 4: per-class disparity concentration ---------------------------------

Outcome CategoryConcentration(const Context& ctx) {
  Outcome o;
  if (!EnsureData(ctx)) return {false, "dataset generation failed"};
  const fs::path out = ctx.work / "stats.json";
  const int code = Shell(fmt::format("{} stats --data {} --json-out {} > /dev/null 2>&1",
                                     ctx.cli, Quote(DataDir(ctx)), Quote(out)));
  if (code != 0) return {false, fmt::format("stats exit={}", code)};
  std::ifstream sf(out), mf(DataDir(ctx) / "meta.json");
  const auto stats = nlohmann::json::parse(sf);
  const auto meta = nlohmann::json::parse(mf);
  const auto& bands = meta.at("scene").at("bands");
  const int samples = meta.at("train_count").get<int>();
  o.pass = samples == 200;
  std::vector<std::string> parts;
  for (const auto& [name, band] : bands.items()) {
    const double width = band[1].get<double>() - band[0].get<double>();
    const auto& cls = stats.at("classes").at(name);
    const bool empty = cls.at("empty").get<bool>();
    const double iqr = empty ? NAN : cls.at("iqr").get<double>();
    const bool pass = !empty && iqr <= width;
    o.pass = o.pass && pass;
    parts.push_back(fmt::format("{} iqr={:.2f}/{:.2f}", name, iqr, width));
  }
  o.detail = fmt::format("samples={} {}", samples, fmt::join(parts, " "));
  return o;
}

// ---- 5: ablation ordering -------------------------------------------------

using RunTable = std::map<std::pair<int, int>, RunInfo>;  // (row, seed)

Outcome AblationOrdering(const Context& ctx, RunTable& runs) {
  if (!EnsureData(ctx)) return {false, "dataset generation failed"};
  for (int seed : ctx.seeds)
    for (int row = 1; row <= 8; ++row) runs[{row, seed}] = TrainVariant(ctx, row, seed);
  bool pass = true;
  std::vector<std::string> parts;
  for (int base : {1, 5}) {
    int best_count = 0;
    bool order = true;
    for (int seed : ctx.seeds) {
      double e[4];
      for (int k = 0; k < 4; ++k) {
        const RunInfo& r = runs[{base + k, seed}];
        e[k] = r.epe;
        pass = pass && r.ok && r.seconds <= 1800.0;
      }
      order = order && e[0] > e[1] && e[0] > e[3];
      best_count += *std::min_element(e, e + 4) == e[3];
      parts.push_back(fmt::format("s{}[{:.3f} {:.3f} {:.3f} {:.3f}]", seed, e[0], e[1],
                                  e[2], e[3]));
    }
    const bool ok = order && best_count >= 2;
    pass = pass && ok;
    parts.push_back(fmt::format("rows{}-{}: first>second&&first>last={} last-best={}/{}",
                                base, base + 3, order ? "yes" : "no", best_count,
                                ctx.seeds.size()));
  }
  return {pass, fmt::format("{}", fmt::join(parts, " "))};
}

// ---- 6: training sanity ---------------------------------------------------

Outcome TrainingSanity(const Context& ctx, RunTable& runs) {
  auto it = runs.find({4, 1});
  RunInfo r = it != runs.end() ? it->second : TrainVariant(ctx, 4, 1);
  if (!r.ok) return {false, "row4 seed1 run failed"};
  bool monotone = true;
  int worst_epoch = -1;
  for (size_t e = 5; e + 4 < r.losses.size(); ++e) {
    if (r.losses[e + 4] > r.losses[e]) {
      monotone = false;
      if (worst_epoch < 0) worst_epoch = static_cast<int>(e);
    }
  }
  Outcome o;
  o.pass = r.epe <= 2.0 && r.d1 <= 0.15 && monotone &&
           static_cast<int>(r.losses.size()) <= 30;
  o.detail = fmt::format("epe={:.4f} d1={:.4f} epochs={} loss windows {}", r.epe,
                         r.d1, r.losses.size(),
                         monotone ? "non-increasing"
                                  : fmt::format("increase from epoch {}", worst_epoch));
  return o;
}

// ---- 7: reproducibility ---------------------------------------------------

Outcome Reproducibility(const Context& ctx) {
  if (!EnsureData(ctx)) return {false, "dataset generation failed"};
  std::string bytes[2][2];
  for (int k = 0; k < 2; ++k) {
    const fs::path dir = ctx.work / fmt::format("repro_{}", k);
    fs::remove_all(dir);
    fs::create_directories(dir);
    const int code = Shell(fmt::format("{} {} > {} 2>&1", ctx.cli,
                                       TrainArgs(ctx, 4, 1, dir),
                                       Quote(dir / "cli_output.txt")));
    if (code != 0) return {false, fmt::format("run {} exit={}", k, code)};
    bytes[k][0] = ReadFileBytes(dir / "train.log");
    bytes[k][1] = ReadFileBytes(dir / "checkpoint.smst");
  }
  const bool logs = bytes[0][0] == bytes[1][0];
  const bool ckpt = bytes[0][1] == bytes[1][1];
  return {logs && ckpt && !bytes[0][0].empty(),
          fmt::format("logs identical={} checkpoints identical={} ({} bytes)",
                      logs, ckpt, bytes[0][1].size())};
}

// ---- 8: wiring ------------------------------------------------------------

double DisparityGradOnSemanticDecoder(int row) {
  ModelConfig mc;
  mc.variant = Variant::FromRow(row);
  SemStereoNet<float> net(mc, 17);
  std::mt19937_64 rng(18);
  std::uniform_real_distribution<double> u01(0, 1), ud(-14, 11);
  std::vector<float> l(2 * 3 * 64 * 64), r(l.size()), d(2 * 64 * 64);
  for (auto& x : l) x = static_cast<float>(u01(rng));
  for (auto& x : r) x = static_cast<float>(u01(rng));
  for (auto& x : d) x = static_cast<float>(ud(rng));
  ModelOutputs<float> out = net.Forward(TF::FromData({2, 3, 64, 64}, l),
                                        TF::FromData({2, 3, 64, 64}, r),
                                        NormMode::kTrain);
  DispLoss<float> disp = DisparityLoss(out.Stages(), TF::FromData({2, 1, 64, 64}, d), 16);
  JointLoss<float>(disp, nullptr, nullptr, 0, LossWeights{}).total.Backward();
  double m = 0;
  for (const auto& name : net.backbone().SemanticDecoderParameterNames()) {
    TF p = net.store().Find(name);
    if (!p.has_grad()) continue;
    for (float g : p.grad()) m = std::max(m, std::abs(static_cast<double>(g)));
  }
  return m;
}

Outcome Wiring() {
  const double g1 = DisparityGradOnSemanticDecoder(1);
  const double g2 = DisparityGradOnSemanticDecoder(2);
  return {g1 == 0.0 && g2 > 0.0,
          fmt::format("row1 max|grad|={:.3e} row2 max|grad|={:.3e}", g1, g2)};
}

}  // namespace
}  // namespace semstereo

int main(int argc, char** argv) {
  using namespace semstereo;
  Context ctx;
  std::string work = "acceptance_work";
  std::vector<int> only;
  bool no_cache = false;
  CLI::App app{"Acceptance criteria 1-8"};
  app.add_option("--work", work, "Scratch directory for data and runs");
  app.add_option("--cli", ctx.cli, "Path to the semstereo executable")->required();
  app.add_option("--only", only, "Run only these criteria");
  app.add_option("--seeds", ctx.seeds, "Training seeds for the ablation");
  app.add_flag("--no-cache", no_cache, "Retrain even when cached runs match");
  CLI11_PARSE(app, argc, argv);
  ctx.work = fs::absolute(work);
  ctx.use_cache = !no_cache;
  fs::create_directories(ctx.work);

  RunTable runs;
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"gradient suite", [&] { return GradientSuite(ctx); }},
      {"exactness suite", [&] { return Exactness(); }},
      {"oracle suite", [&] { return Oracles(); }},
      {"per-class disparity concentration", [&] { return CategoryConcentration(ctx); }},
      {"ablation ordering", [&] { return AblationOrdering(ctx, runs); }},
      {"training sanity", [&] { return TrainingSanity(ctx, runs); }},
      {"reproducibility", [&] { return Reproducibility(ctx); }},
      {"wiring check", [&] { return Wiring(); }},
  };
  std::vector<std::string> summary;
  bool all = true;
  for (size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!only.empty() && std::find(only.begin(), only.end(), id) == only.end()) continue;
    Outcome o;
    const auto t0 = Clock::now();
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const std::string line = fmt::format("criterion {} {}: {} ({}) [{:.0f}s]", id,
                                         criteria[i].first, o.pass ? "PASS" : "FAIL",
                                         o.detail, Seconds(t0));
    std::cout << line << std::endl;
    summary.push_back(line);
    all = all && o.pass;
  }
  std::cout << "\nsummary\n";
  for (const auto& l : summary) std::cout << l << "\n";
  return all ? 0 : 1;
}
