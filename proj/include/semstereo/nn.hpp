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

#ifndef SEMSTEREO_NN_HPP_
#define SEMSTEREO_NN_HPP_

#include <random>
#include <string>
#include <vector>

#include "semstereo/ops.hpp"
#include "semstereo/tensor.hpp"

namespace semstereo {

using Rng = std::mt19937_64;

enum class Init { kHeNormal, kZero, kOne };

// Named parameters and buffers of one network, in registration order.
// The order is the checkpoint order and the optimizer-state order.
template <typename T>
class ParamStore {
 public:
  struct Entry {
    std::string name;
    Tensor<T> tensor;
    bool trainable;
  };

  Tensor<T> AddParameter(const std::string& name, Shape shape, Init init,
                         int64_t fan_in, Rng& rng);
  Tensor<T> AddBuffer(const std::string& name, Shape shape, T fill);

  const std::vector<Entry>& entries() const { return entries_; }
  std::vector<Tensor<T>> Parameters() const;
  std::vector<std::string> ParameterNames() const;
  // Throws std::out_of_range on unknown names.
  Tensor<T> Find(const std::string& name) const;
  void ZeroGrad();

 private:
  std::vector<Entry> entries_;
};

template <typename T>
struct Conv2dLayer {
  Tensor<T> weight;
  Tensor<T> bias;
  int stride = 1;
  int padding = 0;

  static Conv2dLayer Make(ParamStore<T>& store, const std::string& name,
                          int c_in, int c_out, int kernel, int stride,
                          Rng& rng, Init init = Init::kHeNormal);
  Tensor<T> operator()(const Tensor<T>& x) const {
    return Conv2d(x, weight, bias, stride, padding);
  }
};

template <typename T>
struct Conv3dLayer {
  Tensor<T> weight;
  Tensor<T> bias;
  int stride = 1;
  int padding = 0;

  static Conv3dLayer Make(ParamStore<T>& store, const std::string& name,
                          int c_in, int c_out, int kernel, int stride,
                          Rng& rng, Init init = Init::kHeNormal);
  Tensor<T> operator()(const Tensor<T>& x) const {
    return Conv3d(x, weight, bias, stride, padding);
  }
};

template <typename T>
struct ConvTranspose2dLayer {
  Tensor<T> weight;  // [C_in, C_out, k, k]
  Tensor<T> bias;
  int stride = 2;

  static ConvTranspose2dLayer Make(ParamStore<T>& store,
                                   const std::string& name, int c_in,
                                   int c_out, Rng& rng);
  Tensor<T> operator()(const Tensor<T>& x) const {
    return ConvTranspose2d(x, weight, bias, stride);
  }
};

template <typename T>
struct BatchNormLayer {
  Tensor<T> gamma;
  Tensor<T> beta;
  BatchNormBuffers<T> buffers;

  static BatchNormLayer Make(ParamStore<T>& store, const std::string& name,
                             int channels, Rng& rng);
  Tensor<T> operator()(const Tensor<T>& x, NormMode mode) {
    return BatchNorm(x, gamma, beta, buffers, mode);
  }
};

// conv -> batch-norm -> activation, the workhorse block everywhere.
template <typename T>
struct ConvBnAct2d {
  Conv2dLayer<T> conv;
  BatchNormLayer<T> bn;
  Activation act = Activation::kRelu;

  static ConvBnAct2d Make(ParamStore<T>& store, const std::string& name,
                          int c_in, int c_out, int kernel, int stride,
                          Rng& rng, Activation act = Activation::kRelu);
  Tensor<T> operator()(const Tensor<T>& x, NormMode mode) {
    return Activate(bn(conv(x), mode), act);
  }
};

template <typename T>
struct ConvBnAct3d {
  Conv3dLayer<T> conv;
  BatchNormLayer<T> bn;

  static ConvBnAct3d Make(ParamStore<T>& store, const std::string& name,
                          int c_in, int c_out, int kernel, int stride,
                          Rng& rng);
  Tensor<T> operator()(const Tensor<T>& x, NormMode mode) {
    return Relu(bn(conv(x), mode));
  }
};

// Adds a leading batch axis to [C,...] inputs so layers see [B,C,...].
template <typename T>
Tensor<T> EnsureBatched(const Tensor<T>& x, int unbatched_rank);

}  // namespace semstereo

#endif  // SEMSTEREO_NN_HPP_
