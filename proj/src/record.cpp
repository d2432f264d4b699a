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

#include "makd/record.hpp"

#include <algorithm>
#include <cmath>

#include "makd/error.hpp"

namespace makd::numerics {

std::string_view op_name(OpKind kind) {
  switch (kind) {
    case OpKind::kInput: return "input";
    case OpKind::kMatMul: return "matmul";
    case OpKind::kAdd: return "add";
    case OpKind::kScale: return "scale";
    case OpKind::kRelu: return "relu";
    case OpKind::kSigmoid: return "sigmoid";
    case OpKind::kLog: return "log";
    case OpKind::kExp: return "exp";
    case OpKind::kSum: return "sum";
    case OpKind::kSoftmax: return "softmax";
  }
  return "?";
}

namespace {

double stable_sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

bool is_row_broadcast(const Shape& a, const Shape& b) {
  if (a.size() != 2) return false;
  if (b.size() == 1) return b[0] == a[1];
  return b.size() == 2 && b[0] == 1 && b[1] == a[1];
}

// outer x length x inner decomposition of a softmax axis
struct AxisSplit {
  std::size_t outer = 1, length = 1, inner = 1;
};

AxisSplit split_axis(const Shape& s, std::size_t axis) {
  AxisSplit r;
  for (std::size_t i = 0; i < axis; ++i) r.outer *= s[i];
  r.length = s[axis];
  for (std::size_t i = axis + 1; i < s.size(); ++i) r.inner *= s[i];
  return r;
}

}  // namespace

Node ComputationRecord::push(Op op) {
  ops_.push_back(std::move(op));
  evaluated_ = false;
  differentiated_ = false;
  return Node{ops_.size() - 1};
}

void ComputationRecord::check_node(Node n) const {
  if (n.id >= ops_.size())
    throw DomainError("node " + std::to_string(n.id) + " does not exist in this record");
}

Node ComputationRecord::input(std::string name) {
  input_nodes_.push_back(ops_.size());
  return push(Op{OpKind::kInput, {}, {}, 0.0, 0, std::move(name)});
}

Node ComputationRecord::matmul(Node a, Node b) {
  check_node(a);
  check_node(b);
  return push(Op{OpKind::kMatMul, a, b});
}

Node ComputationRecord::add(Node a, Node b) {
  check_node(a);
  check_node(b);
  return push(Op{OpKind::kAdd, a, b});
}

Node ComputationRecord::scale(Node a, double factor) {
  check_node(a);
  return push(Op{OpKind::kScale, a, {}, factor});
}

Node ComputationRecord::relu(Node a) {
  check_node(a);
  return push(Op{OpKind::kRelu, a});
}

Node ComputationRecord::sigmoid(Node a) {
  check_node(a);
  return push(Op{OpKind::kSigmoid, a});
}

Node ComputationRecord::log(Node a) {
  check_node(a);
  return push(Op{OpKind::kLog, a});
}

Node ComputationRecord::exp(Node a) {
  check_node(a);
  return push(Op{OpKind::kExp, a});
}

Node ComputationRecord::sum(Node a) {
  check_node(a);
  return push(Op{OpKind::kSum, a});
}

Node ComputationRecord::softmax(Node a, std::size_t axis) {
  check_node(a);
  return push(Op{OpKind::kSoftmax, a, {}, 0.0, axis});
}

void ComputationRecord::set_output(Node n) {
  check_node(n);
  output_ = n.id;
  output_set_ = true;
}

Node ComputationRecord::output() const {
  if (ops_.empty()) throw DomainError("empty computation record");
  return Node{output_set_ ? output_ : ops_.size() - 1};
}

std::string ComputationRecord::describe(std::size_t id) const {
  const auto& op = ops_[id];
  std::string s = std::string(op_name(op.kind)) + " (node " + std::to_string(id) + ")";
  if (!op.name.empty()) s += " '" + op.name + "'";
  return s;
}

Tensor ComputationRecord::eval(std::size_t id) const {
  const Op& op = ops_[id];
  const Tensor& a = values_[op.a.id];
  switch (op.kind) {
    case OpKind::kInput:
      break;
    case OpKind::kMatMul: {
      const Tensor& b = values_[op.b.id];
      if (a.rank() != 2 || b.rank() != 2 || a.shape()[1] != b.shape()[0])
        throw ShapeError(describe(id) + ": incompatible shapes " + shape_string(a.shape()) +
                         " and " + shape_string(b.shape()));
      const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
      Tensor out = Tensor::matrix(m, n);
      for (std::size_t i = 0; i < m; ++i) {
        double* orow = out.data() + i * n;
        for (std::size_t p = 0; p < k; ++p) {
          const double av = a[i * k + p];
          const double* brow = b.data() + p * n;
          for (std::size_t j = 0; j < n; ++j) orow[j] += av * brow[j];
        }
      }
      return out;
    }
    case OpKind::kAdd: {
      const Tensor& b = values_[op.b.id];
      Tensor out = a;
      if (a.same_shape(b)) {
        for (std::size_t i = 0; i < out.size(); ++i) out[i] += b[i];
      } else if (is_row_broadcast(a.shape(), b.shape())) {
        const std::size_t n = a.shape()[1];
        for (std::size_t i = 0; i < out.size(); ++i) out[i] += b[i % n];
      } else {
        throw ShapeError(describe(id) + ": incompatible shapes " + shape_string(a.shape()) +
                         " and " + shape_string(b.shape()));
      }
      return out;
    }
    case OpKind::kScale: {
      Tensor out = a;
      for (auto& v : out.values()) v *= op.scalar;
      return out;
    }
    case OpKind::kRelu: {
      Tensor out = a;
      for (auto& v : out.values()) v = v > 0.0 ? v : 0.0;
      return out;
    }
    case OpKind::kSigmoid: {
      Tensor out = a;
      for (auto& v : out.values()) v = stable_sigmoid(v);
      return out;
    }
    case OpKind::kLog: {
      Tensor out = a;
      for (auto& v : out.values()) v = std::log(v);
      return out;
    }
    case OpKind::kExp: {
      Tensor out = a;
      for (auto& v : out.values()) v = std::exp(v);
      return out;
    }
    case OpKind::kSum: {
      double s = 0.0;
      for (double v : a.values()) s += v;
      return Tensor({1}, s);
    }
    case OpKind::kSoftmax: {
      if (op.axis >= a.rank())
        throw ShapeError(describe(id) + ": axis " + std::to_string(op.axis) +
                         " out of range for shape " + shape_string(a.shape()));
      const auto sp = split_axis(a.shape(), op.axis);
      Tensor out = a;
      for (std::size_t o = 0; o < sp.outer; ++o) {
        for (std::size_t in = 0; in < sp.inner; ++in) {
          const std::size_t base = o * sp.length * sp.inner + in;
          double mx = a[base];
          for (std::size_t l = 1; l < sp.length; ++l) mx = std::max(mx, a[base + l * sp.inner]);
          double z = 0.0;
          for (std::size_t l = 0; l < sp.length; ++l) {
            const double e = std::exp(a[base + l * sp.inner] - mx);
            out[base + l * sp.inner] = e;
            z += e;
          }
          for (std::size_t l = 0; l < sp.length; ++l) out[base + l * sp.inner] /= z;
        }
      }
      return out;
    }
  }
  throw DomainError("unknown op");
}

const Tensor& ComputationRecord::forward(std::span<const Tensor> inputs) {
  if (ops_.empty()) throw DomainError("forward on an empty computation record");
  if (inputs.size() != input_nodes_.size())
    throw DomainError("forward expects " + std::to_string(input_nodes_.size()) +
                      " inputs, got " + std::to_string(inputs.size()));
  evaluated_ = false;
  differentiated_ = false;
  values_.assign(ops_.size(), Tensor{});
  for (std::size_t i = 0; i < input_nodes_.size(); ++i) {
    if (inputs[i].size() == 0)
      throw ShapeError(describe(input_nodes_[i]) + ": empty input tensor");
    values_[input_nodes_[i]] = inputs[i];
  }
  for (std::size_t id = 0; id < ops_.size(); ++id) {
    if (ops_[id].kind == OpKind::kInput) continue;
    values_[id] = eval(id);
  }
  evaluated_ = true;
  return values_[output().id];
}

void ComputationRecord::propagate(std::size_t id) {
  const Op& op = ops_[id];
  const Tensor& g = grads_[id];
  const Tensor& y = values_[id];
  switch (op.kind) {
    case OpKind::kInput:
      return;
    case OpKind::kMatMul: {
      const Tensor& a = values_[op.a.id];
      const Tensor& b = values_[op.b.id];
      const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
      Tensor& ga = grads_[op.a.id];
      Tensor& gb = grads_[op.b.id];
      // dA = dY . B^T, summed over output columns in ascending order.
      for (std::size_t i = 0; i < m; ++i) {
        const double* grow = g.data() + i * n;
        for (std::size_t p = 0; p < k; ++p) {
          const double* brow = b.data() + p * n;
          double acc = 0.0;
          for (std::size_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
          ga[i * k + p] += acc;
        }
      }
      // dB = A^T . dY
      for (std::size_t i = 0; i < m; ++i) {
        const double* grow = g.data() + i * n;
        for (std::size_t p = 0; p < k; ++p) {
          const double av = a[i * k + p];
          double* gbrow = gb.data() + p * n;
          for (std::size_t j = 0; j < n; ++j) gbrow[j] += av * grow[j];
        }
      }
      return;
    }
    case OpKind::kAdd: {
      Tensor& ga = grads_[op.a.id];
      Tensor& gb = grads_[op.b.id];
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
      if (gb.size() == g.size()) {
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
      } else {
        const std::size_t n = gb.size();
        for (std::size_t i = 0; i < g.size(); ++i) gb[i % n] += g[i];
      }
      return;
    }
    case OpKind::kScale: {
      Tensor& ga = grads_[op.a.id];
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += op.scalar * g[i];
      return;
    }
    case OpKind::kRelu: {
      const Tensor& a = values_[op.a.id];
      Tensor& ga = grads_[op.a.id];
      for (std::size_t i = 0; i < g.size(); ++i)
        if (a[i] > 0.0) ga[i] += g[i];
      return;
    }
    case OpKind::kSigmoid: {
      Tensor& ga = grads_[op.a.id];
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * y[i] * (1.0 - y[i]);
      return;
    }
    case OpKind::kLog: {
      const Tensor& a = values_[op.a.id];
      Tensor& ga = grads_[op.a.id];
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] / a[i];
      return;
    }
    case OpKind::kExp: {
      Tensor& ga = grads_[op.a.id];
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * y[i];
      return;
    }
    case OpKind::kSum: {
      Tensor& ga = grads_[op.a.id];
      for (auto& v : ga.values()) v += g[0];
      return;
    }
    case OpKind::kSoftmax: {
      // dx_l = y_l (g_l - sum_m g_m y_m) along the axis
      Tensor& ga = grads_[op.a.id];
      const auto sp = split_axis(y.shape(), op.axis);
      for (std::size_t o = 0; o < sp.outer; ++o) {
        for (std::size_t in = 0; in < sp.inner; ++in) {
          const std::size_t base = o * sp.length * sp.inner + in;
          double dot = 0.0;
          for (std::size_t l = 0; l < sp.length; ++l) {
            const auto idx = base + l * sp.inner;
            dot += g[idx] * y[idx];
          }
          for (std::size_t l = 0; l < sp.length; ++l) {
            const auto idx = base + l * sp.inner;
            ga[idx] += y[idx] * (g[idx] - dot);
          }
        }
      }
      return;
    }
  }
}

void ComputationRecord::backward(const Tensor& seed) {
  if (!evaluated_) throw DomainError("backward called before forward on this record");
  const auto out = output().id;
  if (!seed.same_shape(values_[out]))
    throw ShapeError("backward seed shape " + shape_string(seed.shape()) +
                     " does not match output shape " + shape_string(values_[out].shape()));
  grads_.clear();
  grads_.reserve(ops_.size());
  for (const auto& v : values_) grads_.emplace_back(v.shape(), 0.0);
  grads_[out] = seed;
  for (std::size_t id = out + 1; id-- > 0;) propagate(id);
  differentiated_ = true;
}

const Tensor& ComputationRecord::value(Node n) const {
  check_node(n);
  if (!evaluated_) throw DomainError("value requested before forward");
  return values_[n.id];
}

const Tensor& ComputationRecord::grad(Node n) const {
  check_node(n);
  if (!differentiated_) throw DomainError("gradient requested before backward");
  return grads_[n.id];
}

Tensor finite_difference_gradient(const std::function<double(const Tensor&)>& fn,
                                  const Tensor& point, double step) {
  if (!(step > 0.0)) throw DomainError("finite-difference step must be positive");
  Tensor grad(point.shape(), 0.0);
  Tensor probe = point;
  for (std::size_t i = 0; i < point.size(); ++i) {
    const double x = point[i];
    probe[i] = x + step;
    const double up = fn(probe);
    probe[i] = x - step;
    const double down = fn(probe);
    probe[i] = x;
    if (!std::isfinite(up) || !std::isfinite(down))
      throw DomainError("non-finite function value at coordinate " + std::to_string(i));
    grad[i] = (up - down) / (2.0 * step);
  }
  return grad;
}

double grad_check(const DifferentiableFunction& fn, const Tensor& point, double step) {
  if (!(step > 0.0)) throw DomainError("grad_check step must be positive");
  Tensor analytic(point.shape(), 0.0);
  const double f0 = fn(point, &analytic);
  if (!std::isfinite(f0)) throw DomainError("non-finite function value at the check point");
  const auto fd = finite_difference_gradient([&](const Tensor& p) { return fn(p, nullptr); },
                                             point, step);
  double worst = 0.0;
  for (std::size_t i = 0; i < point.size(); ++i) {
    const double err = std::abs(analytic[i] - fd[i]) / std::max(1.0, std::abs(analytic[i]));
    worst = std::max(worst, err);
  }
  return worst;
}

}  // namespace makd::numerics
