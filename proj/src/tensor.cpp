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

#include "semstereo/tensor.hpp"

#include <stdexcept>
#include <unordered_set>
#include <utility>

#include <fmt/format.h>

namespace semstereo {

namespace {
thread_local bool g_grad_enabled = true;
}  // namespace

int64_t NumElements(const Shape& shape) {
  int64_t n = 1;
  for (int64_t d : shape) {
    if (d < 0) throw std::invalid_argument("negative dimension in shape");
    n *= d;
  }
  return n;
}

std::string ShapeString(const Shape& shape) {
  return fmt::format("[{}]", fmt::join(shape, ","));
}

bool GradEnabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) {
  g_grad_enabled = false;
}
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

template <typename T>
Tensor<T> Tensor<T>::Zeros(Shape shape, bool requires_grad) {
  return Full(std::move(shape), T(0), requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::Full(Shape shape, T value, bool requires_grad) {
  auto node = std::make_shared<Node>();
  node->data.assign(NumElements(shape), value);
  node->shape = std::move(shape);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

template <typename T>
Tensor<T> Tensor<T>::FromData(Shape shape, std::vector<T> data,
                              bool requires_grad) {
  if (NumElements(shape) != static_cast<int64_t>(data.size())) {
    throw std::invalid_argument(
        fmt::format("shape {} holds {} elements but {} values were given",
                    ShapeString(shape), NumElements(shape), data.size()));
  }
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->data = std::move(data);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

template <typename T>
Tensor<T> Tensor<T>::Scalar(T value, bool requires_grad) {
  return FromData({1}, {value}, requires_grad);
}

template <typename T>
int64_t Tensor<T>::dim(int axis) const {
  const int r = rank();
  if (axis < 0) axis += r;
  if (axis < 0 || axis >= r) {
    throw std::out_of_range(
        fmt::format("axis {} out of range for shape {}", axis,
                    ShapeString(shape())));
  }
  return node_->shape[axis];
}

template <typename T>
T Tensor<T>::item() const {
  if (numel() != 1) {
    throw std::invalid_argument(
        fmt::format("item() on tensor of shape {}", ShapeString(shape())));
  }
  return node_->data[0];
}

template <typename T>
T Tensor<T>::at(std::initializer_list<int64_t> index) const {
  if (static_cast<int>(index.size()) != rank()) {
    throw std::invalid_argument("index rank does not match tensor rank");
  }
  int64_t flat = 0;
  int axis = 0;
  for (int64_t i : index) {
    const int64_t extent = node_->shape[axis++];
    if (i < 0 || i >= extent) throw std::out_of_range("tensor index");
    flat = flat * extent + i;
  }
  return node_->data[flat];
}

template <typename T>
Tensor<T> Tensor<T>::Detach() const {
  return FromData(shape(), node_->data, false);
}

template <typename T>
void Tensor<T>::Backward() const {
  if (numel() != 1) {
    throw std::invalid_argument(fmt::format(
        "backward() needs a scalar loss, got shape {}", ShapeString(shape())));
  }
  if (!node_->requires_grad) return;

  // Iterative post-order DFS gives a topological order (parents first).
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, size_t>> stack;
  stack.emplace_back(node_.get(), 0);
  visited.insert(node_.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* parent = node->parents[next++].get();
      if (parent->requires_grad && visited.insert(parent).second) {
        stack.emplace_back(parent, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  // Interior gradients are per-pass; only leaves accumulate.
  for (Node* node : order) {
    if (node->backward_fn) node->grad.assign(node->data.size(), T(0));
  }
  node_->EnsureGrad()[0] += T(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* node = *it;
    if (node->backward_fn) node->backward_fn(*node);
  }
}

template <typename T>
Tensor<T> MakeResult(Shape shape, std::vector<T> data,
                     std::initializer_list<const Tensor<T>*> inputs,
                     std::function<void(TensorNode<T>&)> backward_fn) {
  auto result = Tensor<T>::FromData(std::move(shape), std::move(data));
  if (!GradEnabled()) return result;
  auto& node = result.node();
  for (const Tensor<T>* in : inputs) {
    if (in->defined() && in->requires_grad()) {
      node.requires_grad = true;
      node.parents.push_back(in->node_ptr());
    }
  }
  if (node.requires_grad) node.backward_fn = std::move(backward_fn);
  return result;
}

template <typename T>
Tensor<T> MakeResult(Shape shape, std::vector<T> data,
                     const std::vector<Tensor<T>>& inputs,
                     std::function<void(TensorNode<T>&)> backward_fn) {
  auto result = Tensor<T>::FromData(std::move(shape), std::move(data));
  if (!GradEnabled()) return result;
  auto& node = result.node();
  for (const Tensor<T>& in : inputs) {
    if (in.defined() && in.requires_grad()) {
      node.requires_grad = true;
      node.parents.push_back(in.node_ptr());
    }
  }
  if (node.requires_grad) node.backward_fn = std::move(backward_fn);
  return result;
}

template class Tensor<float>;
template class Tensor<double>;

template Tensor<float> MakeResult(Shape, std::vector<float>,
                                  std::initializer_list<const Tensor<float>*>,
                                  std::function<void(TensorNode<float>&)>);
template Tensor<double> MakeResult(Shape, std::vector<double>,
                                   std::initializer_list<const Tensor<double>*>,
                                   std::function<void(TensorNode<double>&)>);
template Tensor<float> MakeResult(Shape, std::vector<float>,
                                  const std::vector<Tensor<float>>&,
                                  std::function<void(TensorNode<float>&)>);
template Tensor<double> MakeResult(Shape, std::vector<double>,
                                   const std::vector<Tensor<double>>&,
                                   std::function<void(TensorNode<double>&)>);

}  // namespace semstereo
