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

// Central finite-difference checks of the reverse-mode gradients.

#ifndef SEMSTEREO_GRADCHECK_HPP_
#define SEMSTEREO_GRADCHECK_HPP_

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "semstereo/tensor.hpp"

namespace semstereo {

struct GradCheckOptions {
  int num_seeds = 20;
  uint64_t base_seed = 0;
  double step = 1e-5;
  double tolerance = 1e-4;
  std::vector<std::string> only;  // case names to run; empty = all
};

struct GradCheckResult {
  std::string name;
  int seeds = 0;
  int passed = 0;
  double max_rel_error = 0.0;
  double seconds = 0.0;
  bool ok() const { return seeds > 0 && passed == seeds; }
};

// ||a - n|| / max(||a||, ||n||, 1e-12).
double RelativeError(std::span<const double> analytic,
                     std::span<const double> numeric);

using ScalarFn =
    std::function<Tensor<double>(const std::vector<Tensor<double>>&)>;

// Compares dfn/dinput from Backward with central differences for every
// input; returns the largest relative error over the inputs.
double CheckGradients(const ScalarFn& fn, std::vector<Tensor<double>> inputs,
                      double step);

std::vector<std::string> GradcheckCaseNames();

std::vector<GradCheckResult> RunGradcheckSuite(
    const GradCheckOptions& options,
    const std::function<void(const GradCheckResult&)>& progress = {});

}  // namespace semstereo

#endif  // SEMSTEREO_GRADCHECK_HPP_
