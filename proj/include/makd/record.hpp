/*
Copyright 2026 The makd Authors

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
*/

#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "makd/tensor.hpp"

namespace makd::numerics {

// Handle to a value inside a ComputationRecord.
struct Node {
  std::size_t id = 0;
  friend bool operator==(Node, Node) = default;
};

enum class OpKind { kInput, kMatMul, kAdd, kScale, kRelu, kSigmoid, kLog, kExp, kSum, kSoftmax };

std::string_view op_name(OpKind kind);

// A recorded straight-line program over tensors with reverse-mode gradients.
//
// Ops are appended in topological order by construction (an op can only name
// nodes that already exist). forward() binds concrete tensors to the input
// placeholders and evaluates every op; backward() then propagates a seed
// gradient from the output node to every node, summing contributions where a
// node feeds several ops.
//
// Shape rules:
//   matmul  [m x k] . [k x n] -> [m x n]
//   add     equal shapes, or [m x n] + [n] / [1 x n] (row broadcast)
//   sum     any -> [1]
//   softmax any, normalized along `axis`
class ComputationRecord {
 public:
  Node input(std::string name = {});
  Node matmul(Node a, Node b);
  Node add(Node a, Node b);
  Node scale(Node a, double factor);
  Node relu(Node a);
  Node sigmoid(Node a);
  Node log(Node a);
  Node exp(Node a);
  Node sum(Node a);
  Node softmax(Node a, std::size_t axis);

  std::size_t num_inputs() const noexcept { return input_nodes_.size(); }
  std::size_t num_nodes() const noexcept { return ops_.size(); }
  // The output is the most recently recorded node unless set explicitly.
  void set_output(Node n);
  Node output() const;

  const Tensor& forward(std::span<const Tensor> inputs);
  void backward(const Tensor& seed);

  bool evaluated() const noexcept { return evaluated_; }
  const Tensor& value(Node n) const;
  const Tensor& grad(Node n) const;
  // Gradient with respect to the i-th input placeholder.
  const Tensor& input_grad(std::size_t i) const { return grad(Node{input_nodes_.at(i)}); }

 private:
  struct Op {
    OpKind kind;
    Node a{}, b{};
    double scalar = 0.0;
    std::size_t axis = 0;
    std::string name = {};
  };

  Node push(Op op);
  void check_node(Node n) const;
  std::string describe(std::size_t id) const;
  Tensor eval(std::size_t id) const;
  void propagate(std::size_t id);

  std::vector<Op> ops_;
  std::vector<std::size_t> input_nodes_;
  std::vector<Tensor> values_;
  std::vector<Tensor> grads_;
  std::size_t output_ = 0;
  bool output_set_ = false;
  bool evaluated_ = false;
  bool differentiated_ = false;
};

// Scalar function that also reports its analytic gradient when `grad` is
// non-null. `grad` arrives shaped like `point`.
using DifferentiableFunction = std::function<double(const Tensor& point, Tensor* grad)>;

// Compares the analytic gradient of `fn` at `point` against central
// differences with the given step. Returns
//   max_i |analytic_i - fd_i| / max(1, |analytic_i|).
// Throws DomainError on a non-positive step or a non-finite function value.
double grad_check(const DifferentiableFunction& fn, const Tensor& point, double step);

Tensor finite_difference_gradient(const std::function<double(const Tensor&)>& fn,
                                  const Tensor& point, double step);

}  // namespace makd::numerics
