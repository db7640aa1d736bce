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

#include "semstereo/optim.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <fmt/format.h>

namespace semstereo {

template <typename T>
void AdamUpdate(std::span<T> param, std::span<const T> grad, std::span<T> m,
                std::span<T> v, int64_t step, double lr,
                const AdamConfig& config) {
  if (grad.size() != param.size() || m.size() != param.size() ||
      v.size() != param.size()) {
    throw std::invalid_argument(fmt::format(
        "adam: sizes param={} grad={} m={} v={}", param.size(), grad.size(),
        m.size(), v.size()));
  }
  if (step < 1) throw std::invalid_argument("adam: step count starts at 1");
  const double b1 = config.beta1, b2 = config.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(step));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(step));
  for (size_t i = 0; i < param.size(); ++i) {
    const double g = grad[i];
    const double mi = b1 * m[i] + (1.0 - b1) * g;
    const double vi = b2 * v[i] + (1.0 - b2) * g * g;
    m[i] = static_cast<T>(mi);
    v[i] = static_cast<T>(vi);
    const double update = lr * (mi / c1) / (std::sqrt(vi / c2) + config.eps);
    param[i] = static_cast<T>(param[i] - update);
  }
}

template <typename T>
Adam<T>::Adam(std::vector<Tensor<T>> params, AdamConfig config)
    : params_(std::move(params)), config_(config) {
  states_.resize(params_.size());
  for (size_t i = 0; i < params_.size(); ++i) {
    states_[i].m.assign(params_[i].numel(), T(0));
    states_[i].v.assign(params_[i].numel(), T(0));
  }
}

template <typename T>
void Adam<T>::Step(double lr) {
  for (size_t i = 0; i < params_.size(); ++i) {
    Tensor<T>& p = params_[i];
    if (!p.has_grad()) continue;
    State& s = states_[i];
    ++s.step;
    AdamUpdate<T>(p.mutable_data(), p.grad(), s.m, s.v, s.step, lr, config_);
  }
}

double LearningRate(int epoch, double lr0, std::span<const int> decay_epochs) {
  if (!std::is_sorted(decay_epochs.begin(), decay_epochs.end())) {
    throw std::invalid_argument("lr decay epochs must be sorted ascending");
  }
  double lr = lr0;
  for (int e : decay_epochs) {
    if (e <= epoch) lr *= 0.5;
  }
  return lr;
}

template void AdamUpdate<float>(std::span<float>, std::span<const float>,
                                std::span<float>, std::span<float>, int64_t,
                                double, const AdamConfig&);
template void AdamUpdate<double>(std::span<double>, std::span<const double>,
                                 std::span<double>, std::span<double>, int64_t,
                                 double, const AdamConfig&);
template class Adam<float>;
template class Adam<double>;

}  // namespace semstereo
