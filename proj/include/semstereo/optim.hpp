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

#ifndef SEMSTEREO_OPTIM_HPP_
#define SEMSTEREO_OPTIM_HPP_

#include <cstdint>
#include <span>
#include <vector>

#include "semstereo/tensor.hpp"

namespace semstereo {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// One bias-corrected Adam update of a flat parameter block; `step` is the
// 1-based count including this update. Arithmetic is done in double.
template <typename T>
void AdamUpdate(std::span<T> param, std::span<const T> grad, std::span<T> m,
                std::span<T> v, int64_t step, double lr,
                const AdamConfig& config);

template <typename T>
class Adam {
 public:
  struct State {
    std::vector<T> m;
    std::vector<T> v;
    int64_t step = 0;
  };

  Adam(std::vector<Tensor<T>> params, AdamConfig config = {});

  // Parameters without a gradient this step are left untouched, state
  // included.
  void Step(double lr);

  const AdamConfig& config() const { return config_; }
  const std::vector<Tensor<T>>& params() const { return params_; }
  std::vector<State>& states() { return states_; }
  const std::vector<State>& states() const { return states_; }

 private:
  std::vector<Tensor<T>> params_;
  AdamConfig config_;
  std::vector<State> states_;
};

// lr0 * 0.5^(number of decay epochs <= epoch). decay_epochs must be sorted.
double LearningRate(int epoch, double lr0, std::span<const int> decay_epochs);

}  // namespace semstereo

#endif  // SEMSTEREO_OPTIM_HPP_
