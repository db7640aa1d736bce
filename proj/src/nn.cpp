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

#include "semstereo/nn.hpp"

#include <cmath>
#include <stdexcept>

#include <fmt/format.h>

namespace semstereo {

template <typename T>
Tensor<T> ParamStore<T>::AddParameter(const std::string& name, Shape shape,
                                      Init init, int64_t fan_in, Rng& rng) {
  for (const auto& e : entries_) {
    if (e.name == name) {
      throw std::invalid_argument(fmt::format("duplicate parameter '{}'", name));
    }
  }
  std::vector<T> values(NumElements(shape), T(0));
  switch (init) {
    case Init::kHeNormal: {
      // Drawn in double so float and double networks share initial values.
      std::normal_distribution<double> dist(
          0.0, std::sqrt(2.0 / static_cast<double>(fan_in)));
      for (T& v : values) v = static_cast<T>(dist(rng));
      break;
    }
    case Init::kOne:
      std::fill(values.begin(), values.end(), T(1));
      break;
    case Init::kZero:
      break;
  }
  auto t = Tensor<T>::FromData(std::move(shape), std::move(values), true);
  entries_.push_back({name, t, true});
  return t;
}

template <typename T>
Tensor<T> ParamStore<T>::AddBuffer(const std::string& name, Shape shape,
                                   T fill) {
  auto t = Tensor<T>::Full(std::move(shape), fill, false);
  entries_.push_back({name, t, false});
  return t;
}

template <typename T>
std::vector<Tensor<T>> ParamStore<T>::Parameters() const {
  std::vector<Tensor<T>> out;
  for (const auto& e : entries_) {
    if (e.trainable) out.push_back(e.tensor);
  }
  return out;
}

template <typename T>
std::vector<std::string> ParamStore<T>::ParameterNames() const {
  std::vector<std::string> out;
  for (const auto& e : entries_) {
    if (e.trainable) out.push_back(e.name);
  }
  return out;
}

template <typename T>
Tensor<T> ParamStore<T>::Find(const std::string& name) const {
  for (const auto& e : entries_) {
    if (e.name == name) return e.tensor;
  }
  throw std::out_of_range(fmt::format("no parameter named '{}'", name));
}

template <typename T>
void ParamStore<T>::ZeroGrad() {
  for (auto& e : entries_) e.tensor.ZeroGrad();
}

template <typename T>
Conv2dLayer<T> Conv2dLayer<T>::Make(ParamStore<T>& store,
                                    const std::string& name, int c_in,
                                    int c_out, int kernel, int stride,
                                    Rng& rng, Init init) {
  Conv2dLayer layer;
  layer.weight = store.AddParameter(name + ".weight",
                                    {c_out, c_in, kernel, kernel}, init,
                                    int64_t{c_in} * kernel * kernel, rng);
  layer.bias = store.AddParameter(name + ".bias", {c_out}, Init::kZero, 1, rng);
  layer.stride = stride;
  layer.padding = kernel / 2;
  return layer;
}

template <typename T>
Conv3dLayer<T> Conv3dLayer<T>::Make(ParamStore<T>& store,
                                    const std::string& name, int c_in,
                                    int c_out, int kernel, int stride,
                                    Rng& rng, Init init) {
  Conv3dLayer layer;
  layer.weight = store.AddParameter(
      name + ".weight", {c_out, c_in, kernel, kernel, kernel}, init,
      int64_t{c_in} * kernel * kernel * kernel, rng);
  layer.bias = store.AddParameter(name + ".bias", {c_out}, Init::kZero, 1, rng);
  layer.stride = stride;
  layer.padding = kernel / 2;
  return layer;
}

template <typename T>
ConvTranspose2dLayer<T> ConvTranspose2dLayer<T>::Make(ParamStore<T>& store,
                                                      const std::string& name,
                                                      int c_in, int c_out,
                                                      Rng& rng) {
  ConvTranspose2dLayer layer;
  // Each output pixel receives exactly one tap at stride 2 with a 2x2 kernel.
  layer.weight = store.AddParameter(name + ".weight", {c_in, c_out, 2, 2},
                                    Init::kHeNormal, c_in, rng);
  layer.bias = store.AddParameter(name + ".bias", {c_out}, Init::kZero, 1, rng);
  layer.stride = 2;
  return layer;
}

template <typename T>
BatchNormLayer<T> BatchNormLayer<T>::Make(ParamStore<T>& store,
                                          const std::string& name,
                                          int channels, Rng& rng) {
  BatchNormLayer layer;
  layer.gamma = store.AddParameter(name + ".gamma", {channels}, Init::kOne, 1,
                                   rng);
  layer.beta = store.AddParameter(name + ".beta", {channels}, Init::kZero, 1,
                                  rng);
  layer.buffers.running_mean =
      store.AddBuffer(name + ".running_mean", {channels}, T(0));
  layer.buffers.running_var =
      store.AddBuffer(name + ".running_var", {channels}, T(1));
  return layer;
}

template <typename T>
ConvBnAct2d<T> ConvBnAct2d<T>::Make(ParamStore<T>& store,
                                    const std::string& name, int c_in,
                                    int c_out, int kernel, int stride, Rng& rng,
                                    Activation act) {
  ConvBnAct2d block;
  block.conv = Conv2dLayer<T>::Make(store, name + ".conv", c_in, c_out, kernel,
                                    stride, rng);
  block.bn = BatchNormLayer<T>::Make(store, name + ".bn", c_out, rng);
  block.act = act;
  return block;
}

template <typename T>
ConvBnAct3d<T> ConvBnAct3d<T>::Make(ParamStore<T>& store,
                                    const std::string& name, int c_in,
                                    int c_out, int kernel, int stride,
                                    Rng& rng) {
  ConvBnAct3d block;
  block.conv = Conv3dLayer<T>::Make(store, name + ".conv", c_in, c_out, kernel,
                                    stride, rng);
  block.bn = BatchNormLayer<T>::Make(store, name + ".bn", c_out, rng);
  return block;
}

template <typename T>
Tensor<T> EnsureBatched(const Tensor<T>& x, int unbatched_rank) {
  if (x.rank() == unbatched_rank + 1) return x;
  if (x.rank() != unbatched_rank) {
    throw std::invalid_argument(fmt::format(
        "expected rank {} or {}, got {}", unbatched_rank, unbatched_rank + 1,
        ShapeString(x.shape())));
  }
  Shape s = x.shape();
  s.insert(s.begin(), 1);
  return Reshape(x, std::move(s));
}

template class ParamStore<float>;
template class ParamStore<double>;
template struct Conv2dLayer<float>;
template struct Conv2dLayer<double>;
template struct Conv3dLayer<float>;
template struct Conv3dLayer<double>;
template struct ConvTranspose2dLayer<float>;
template struct ConvTranspose2dLayer<double>;
template struct BatchNormLayer<float>;
template struct BatchNormLayer<double>;
template struct ConvBnAct2d<float>;
template struct ConvBnAct2d<double>;
template struct ConvBnAct3d<float>;
template struct ConvBnAct3d<double>;
template Tensor<float> EnsureBatched(const Tensor<float>&, int);
template Tensor<double> EnsureBatched(const Tensor<double>&, int);

}  // namespace semstereo
