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

#include "semstereo/gradcheck.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <memory>
#include <random>
#include <stdexcept>

#include <fmt/format.h>

#include "semstereo/ops.hpp"
#include "semstereo/scenegen.hpp"
#include "semstereo/ssr.hpp"
#include "semstereo/supervision.hpp"

namespace semstereo {

double RelativeError(std::span<const double> analytic,
                     std::span<const double> numeric) {
  if (analytic.size() != numeric.size()) {
    throw std::invalid_argument("relative error: size mismatch");
  }
  double diff = 0.0, na = 0.0, nn = 0.0;
  for (size_t i = 0; i < analytic.size(); ++i) {
    diff += (analytic[i] - numeric[i]) * (analytic[i] - numeric[i]);
    na += analytic[i] * analytic[i];
    nn += numeric[i] * numeric[i];
  }
  return std::sqrt(diff) / std::max({std::sqrt(na), std::sqrt(nn), 1e-12});
}

double CheckGradients(const ScalarFn& fn, std::vector<Tensor<double>> inputs,
                      double step) {
  for (auto& t : inputs) {
    t.set_requires_grad(true);
    t.ZeroGrad();
  }
  fn(inputs).Backward();
  double worst = 0.0;
  for (auto& t : inputs) {
    std::vector<double> analytic(t.numel(), 0.0);
    if (t.has_grad()) analytic.assign(t.grad().begin(), t.grad().end());
    std::vector<double> numeric(t.numel());
    NoGradGuard no_grad;
    auto data = t.mutable_data();
    for (int64_t k = 0; k < t.numel(); ++k) {
      const double orig = data[k];
      data[k] = orig + step;
      const double plus = fn(inputs).item();
      data[k] = orig - step;
      const double minus = fn(inputs).item();
      data[k] = orig;
      numeric[k] = (plus - minus) / (2.0 * step);
    }
    worst = std::max(worst, RelativeError(analytic, numeric));
  }
  return worst;
}

namespace {

using TD = Tensor<double>;
using Rng64 = std::mt19937_64;

TD Normal(Rng64& rng, Shape shape, double scale = 1.0) {
  std::normal_distribution<double> dist(0.0, scale);
  std::vector<double> v(NumElements(shape));
  for (double& x : v) x = dist(rng);
  return TD::FromData(std::move(shape), std::move(v));
}

// Disparities whose fractional part stays away from the interpolation
// kinks at integer sample positions.
TD SmoothDisparity(Rng64& rng, Shape shape, int max_abs) {
  std::uniform_int_distribution<int> whole(-max_abs, max_abs - 1);
  std::uniform_real_distribution<double> frac(0.05, 0.95);
  std::vector<double> v(NumElements(shape));
  for (double& x : v) x = whole(rng) + frac(rng);
  return TD::FromData(std::move(shape), std::move(v));
}

TD Probabilities(Rng64& rng, Shape shape) {
  NoGradGuard no_grad;
  return Softmax(Normal(rng, std::move(shape)), 1).Detach();
}

// Scalar probe: sum(out * R) with a fixed random R.
TD Project(const TD& out, const TD& r) { return Sum(Mul(out, r)); }

struct Case {
  std::string name;
  // Builds inputs and the scalar function for one seed.
  std::function<double(Rng64&, double)> run;
};

std::vector<Case> BuildCases() {
  std::vector<Case> cases;
  auto simple = [&](std::string name,
                    std::function<std::vector<TD>(Rng64&)> make,
                    std::function<TD(const std::vector<TD>&)> op) {
    cases.push_back({std::move(name), [make, op](Rng64& rng, double step) {
                       std::vector<TD> inputs = make(rng);
                       Shape out_shape;
                       {
                         NoGradGuard g;
                         out_shape = op(inputs).shape();
                       }
                       TD r = Normal(rng, out_shape);
                       return CheckGradients(
                           [&](const std::vector<TD>& in) {
                             return Project(op(in), r);
                           },
                           inputs, step);
                     }});
  };

  simple(
      "conv2d",
      [](Rng64& g) {
        return std::vector<TD>{Normal(g, {2, 2, 5, 5}), Normal(g, {3, 2, 3, 3}),
                               Normal(g, {3})};
      },
      [](const std::vector<TD>& in) { return Conv2d(in[0], in[1], in[2], 1, 1); });
  simple(
      "conv2d_stride2",
      [](Rng64& g) {
        return std::vector<TD>{Normal(g, {1, 2, 6, 6}), Normal(g, {2, 2, 3, 3}),
                               Normal(g, {2})};
      },
      [](const std::vector<TD>& in) { return Conv2d(in[0], in[1], in[2], 2, 1); });
  simple(
      "conv3d",
      [](Rng64& g) {
        return std::vector<TD>{Normal(g, {1, 2, 4, 4, 4}),
                               Normal(g, {2, 2, 3, 3, 3}), Normal(g, {2})};
      },
      [](const std::vector<TD>& in) { return Conv3d(in[0], in[1], in[2], 1, 1); });
  simple(
      "conv3d_stride2",
      [](Rng64& g) {
        return std::vector<TD>{Normal(g, {1, 2, 4, 4, 4}),
                               Normal(g, {2, 2, 3, 3, 3}), Normal(g, {2})};
      },
      [](const std::vector<TD>& in) { return Conv3d(in[0], in[1], in[2], 2, 1); });
  simple(
      "conv_transpose2d",
      [](Rng64& g) {
        return std::vector<TD>{Normal(g, {2, 3, 3, 3}), Normal(g, {3, 2, 2, 2}),
                               Normal(g, {2})};
      },
      [](const std::vector<TD>& in) {
        return ConvTranspose2d(in[0], in[1], in[2], 2);
      });
  simple(
      "batch_norm",
      [](Rng64& g) {
        return std::vector<TD>{Normal(g, {3, 2, 3, 3}), Normal(g, {2}),
                               Normal(g, {2})};
      },
      [](const std::vector<TD>& in) {
        BatchNormBuffers<double> buffers{TD::Zeros({2}), TD::Full({2}, 1.0)};
        return BatchNorm(in[0], in[1], in[2], buffers, NormMode::kTrain);
      });
  simple(
      "softmax",
      [](Rng64& g) { return std::vector<TD>{Normal(g, {2, 4, 3})}; },
      [](const std::vector<TD>& in) { return Softmax(in[0], 1); });
  simple(
      "sigmoid",
      [](Rng64& g) { return std::vector<TD>{Normal(g, {2, 3, 4})}; },
      [](const std::vector<TD>& in) { return Sigmoid(in[0]); });
  simple(
      "bilinear_upsample_x2",
      [](Rng64& g) { return std::vector<TD>{Normal(g, {1, 2, 3, 4})}; },
      [](const std::vector<TD>& in) { return BilinearUpsample(in[0], 2); });
  simple(
      "bilinear_upsample_x4",
      [](Rng64& g) { return std::vector<TD>{Normal(g, {1, 1, 3, 3})}; },
      [](const std::vector<TD>& in) { return BilinearUpsample(in[0], 4); });
  simple(
      "nearest_upsample3d",
      [](Rng64& g) { return std::vector<TD>{Normal(g, {1, 2, 2, 2, 3})}; },
      [](const std::vector<TD>& in) { return NearestUpsample3d(in[0], 2); });
  simple(
      "hwarp_input",
      [](Rng64& g) {
        return std::vector<TD>{Normal(g, {1, 2, 3, 8})};
      },
      [](const std::vector<TD>& in) {
        // Fixed disparity derived from the input shape keeps the op linear.
        Rng64 fixed(17);
        TD d = SmoothDisparity(fixed, {1, 1, 3, 8}, 3);
        return HorizontalWarp(in[0], d, +1).output;
      });
  simple(
      "hwarp_disparity",
      [](Rng64& g) {
        return std::vector<TD>{Normal(g, {1, 2, 3, 8}),
                               SmoothDisparity(g, {1, 1, 3, 8}, 3)};
      },
      [](const std::vector<TD>& in) {
        return HorizontalWarp(in[0], in[1], +1).output;
      });
  simple(
      "hwarp_negative_sign",
      [](Rng64& g) {
        return std::vector<TD>{Normal(g, {2, 1, 2, 7}),
                               SmoothDisparity(g, {2, 1, 2, 7}, 3)};
      },
      [](const std::vector<TD>& in) {
        return HorizontalWarp(in[0], in[1], -1).output;
      });
  simple(
      "group_correlation",
      [](Rng64& g) {
        return std::vector<TD>{Normal(g, {1, 4, 2, 6}), Normal(g, {1, 4, 2, 6})};
      },
      [](const std::vector<TD>& in) {
        const int shifts[] = {-2, -1, 0, 1};
        return GroupCorrelation(in[0], in[1], 2, shifts);
      });
  simple(
      "shifted_concat",
      [](Rng64& g) {
        return std::vector<TD>{Normal(g, {1, 2, 2, 5}), Normal(g, {1, 2, 2, 5})};
      },
      [](const std::vector<TD>& in) {
        const int shifts[] = {-2, 0, 1};
        return ShiftedConcat(in[0], in[1], shifts);
      });
  simple(
      "soft_argmax",
      [](Rng64& g) { return std::vector<TD>{Normal(g, {1, 1, 8, 2, 3})}; },
      [](const std::vector<TD>& in) {
        const double values[] = {-16, -12, -8, -4, 0, 4, 8, 12};
        return SoftArgmax(in[0], 2, std::span<const double>(values));
      });
  // Errors kept clear of the |e| = 1 branch point.
  cases.push_back({"smooth_l1", [](Rng64& g, double step) {
                     std::uniform_real_distribution<double> mag(0.05, 2.5);
                     std::bernoulli_distribution neg(0.5);
                     TD target = Normal(g, {2, 1, 4, 4});
                     std::vector<double> p(target.vec());
                     for (double& x : p) {
                       double m = mag(g);
                       if (std::abs(m - 1.0) < 0.05) m += 0.1;
                       x += neg(g) ? -m : m;
                     }
                     std::vector<double> valid(32, 1.0);
                     valid[3] = 0.0;
                     TD mask = TD::FromData({2, 1, 4, 4}, valid);
                     return CheckGradients(
                         [&](const std::vector<TD>& in) {
                           return MaskedSmoothL1(in[0], target, mask);
                         },
                         {TD::FromData({2, 1, 4, 4}, std::move(p))}, step);
                   }});

  // Segmentation loss through the softmax head.
  cases.push_back({"seg_loss", [](Rng64& g, double step) {
                     TD logits = Normal(g, {2, 5, 3, 4});
                     std::uniform_int_distribution<int32_t> cls(0, 4);
                     std::vector<int32_t> labels(2 * 3 * 4);
                     for (auto& l : labels) l = cls(g);
                     labels[5] = kIgnoreLabel;
                     return CheckGradients(
                         [&](const std::vector<TD>& in) {
                           TD p = Softmax(in[0], 1);
                           return Add(IndexCrossEntropy(p, std::span<const int32_t>(labels), kIgnoreLabel),
                                      DiceLoss(p, std::span<const int32_t>(labels), kIgnoreLabel));
                         },
                         {logits}, step);
                   }});

  // Gate, residual and refinement composed: F, P^l and d_init all receive
  // gradients, as do the module weights.
  cases.push_back({"ssr_composite", [](Rng64& g, double step) {
                     constexpr int kN = 3;
                     ParamStore<double> store;
                     Rng local(g());
                     SemanticSelectiveRefinement<double> ssr(store, kN, 16, local);
                     for (const auto& e : store.entries()) {
                       if (!e.trainable) continue;
                       Tensor<double> t = e.tensor;
                       for (double& v : t.mutable_data()) v = std::normal_distribution<double>(0.0, 0.5)(g);
                     }
                     TD F = Normal(g, {1, kN, 8, 8});
                     TD P = Probabilities(g, {1, kN, 8, 8});
                     TD d = Normal(g, {1, 1, 2, 2}, 6.0);
                     TD r = Normal(g, {1, kN, 8, 8});
                     std::vector<TD> inputs{F, P, d, ssr.expand_conv().weight,
                                            ssr.residual_conv().weight,
                                            ssr.gate_conv().weight};
                     return CheckGradients(
                         [&](const std::vector<TD>& in) {
                           SsrState<double> s = ssr(in[0], in[1], in[2], NormMode::kTrain);
                           return Add(Sum(Mul(s.d_final, s.d_final)),
                                      Sum(Mul(s.F_gated, r)));
                         },
                         inputs, step);
                   }});

  // Left-to-right label warp followed by the soft cross entropy; the
  // disparity gradient passes through the warp.
  cases.push_back({"lrsc_composite", [](Rng64& g, double step) {
                     TD label_l = Probabilities(g, {1, 3, 3, 8});
                     TD d = SmoothDisparity(g, {1, 1, 3, 8}, 3);
                     TD p_r = Probabilities(g, {1, 3, 3, 8});
                     return CheckGradients(
                         [&](const std::vector<TD>& in) {
                           PseudoLabels<double> pseudo = MakePseudoRight(in[0], in[1]);
                           return LrscLoss(in[2], pseudo.labels, pseudo.mask);
                         },
                         {label_l, d, p_r}, step);
                   }});
  return cases;
}

}  // namespace

std::vector<std::string> GradcheckCaseNames() {
  std::vector<std::string> names;
  for (const auto& c : BuildCases()) names.push_back(c.name);
  return names;
}

std::vector<GradCheckResult> RunGradcheckSuite(
    const GradCheckOptions& options,
    const std::function<void(const GradCheckResult&)>& progress) {
  const auto cases = BuildCases();
  if (!options.only.empty()) {
    for (const auto& name : options.only) {
      if (std::none_of(cases.begin(), cases.end(),
                       [&](const Case& c) { return c.name == name; })) {
        throw std::invalid_argument(fmt::format("unknown gradcheck case '{}'", name));
      }
    }
  }
  std::vector<GradCheckResult> results;
  for (size_t ci = 0; ci < cases.size(); ++ci) {
    const Case& c = cases[ci];
    if (!options.only.empty() &&
        std::find(options.only.begin(), options.only.end(), c.name) ==
            options.only.end()) {
      continue;
    }
    GradCheckResult r;
    r.name = c.name;
    const auto start = std::chrono::steady_clock::now();
    for (int s = 0; s < options.num_seeds; ++s) {
      Rng64 rng(SampleSeed(options.base_seed, ci, s));
      const double err = c.run(rng, options.step);
      ++r.seeds;
      if (err <= options.tolerance) ++r.passed;
      r.max_rel_error = std::max(r.max_rel_error, std::isfinite(err) ? err : INFINITY);
    }
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                              start).count();
    if (progress) progress(r);
    results.push_back(r);
  }
  return results;
}

}  // namespace semstereo
