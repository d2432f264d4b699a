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
#include <optional>
#include <span>
#include <vector>

#include "makd/tensor.hpp"

namespace makd::losses {

double sigmoid(double x);
// log(1 + exp(x)) without overflow.
double softplus(double x);
// Numerically stable log-softmax of `logits` into `out` (same length).
void log_softmax(std::span<const double> logits, std::span<double> out);

// Soft yes-target from a yes/no logit pair: exp(y) / (exp(y) + exp(n)).
double yes_no_probability(double z_yes, double z_no);

// One row of model output, D = C + Q logits. The first C entries are class
// logits, the remaining Q are aspect logits.
class ExpandedOutput {
 public:
  ExpandedOutput(std::span<const double> logits, std::size_t num_classes, std::size_t num_aspects);

  std::size_t num_classes() const noexcept { return num_classes_; }
  std::size_t num_aspects() const noexcept { return num_aspects_; }
  std::size_t dim() const noexcept { return logits_.size(); }

  std::span<const double> logits() const noexcept { return logits_; }
  std::span<const double> class_logits() const noexcept { return logits_.first(num_classes_); }
  std::span<const double> aspect_logits() const noexcept { return logits_.subspan(num_classes_); }

  // argmax over the class slice; aspect logits never take part
  std::size_t predicted_class() const;

 private:
  std::span<const double> logits_;
  std::size_t num_classes_;
  std::size_t num_aspects_;
};

enum class AspectLossKind { kBce, kKl };

// Every loss below returns its value and, when `grad` is non-empty, adds
// `weight * dLoss/dlogits` into it. `grad` spans the full D-wide row.

// -log softmax(class slice)[label]; label is 0-based.
double class_cross_entropy(const ExpandedOutput& out, std::size_t label,
                           std::span<double> grad = {}, double weight = 1.0);

// Sum over aspects of binary cross-entropy between sigmoid(aspect logit) and
// the soft target, evaluated from logits.
double makd_bce(const ExpandedOutput& out, std::span<const double> targets,
                std::span<double> grad = {}, double weight = 1.0);

// Sum over aspects of KL(Bernoulli(q) || Bernoulli(sigmoid(z))). Differs from
// makd_bce by the entropy of the targets only.
double kl_aspect_loss(const ExpandedOutput& out, std::span<const double> targets,
                      std::span<double> grad = {}, double weight = 1.0);

double aspect_loss(AspectLossKind kind, const ExpandedOutput& out, std::span<const double> targets,
                   std::span<double> grad = {}, double weight = 1.0);

// Temperature-scaled distillation loss T^2 * KL(softmax(t/T) || softmax(s/T)).
// `grad` here is the width of the student logits.
double kd_kl(std::span<const double> student, std::span<const double> teacher, double temperature,
             std::span<double> grad = {}, double weight = 1.0);

struct LossBreakdown {
  double ce = 0.0;
  double makd = 0.0;
  std::optional<double> kd;
  double total = 0.0;
  double alpha = 0.0;
};

struct KdTerm {
  std::span<const double> teacher;  // class-width teacher logits
  double temperature = 4.0;
  double weight = 1.0;
};

// total = ce + alpha * aspect + (kd ? kd.weight * kd_kl : 0).
// With Q = 0 the aspect term is zero and `targets` must be empty.
LossBreakdown total_loss(const ExpandedOutput& out, std::size_t label,
                         std::span<const double> targets, double alpha,
                         std::span<double> grad = {}, double weight = 1.0,
                         AspectLossKind kind = AspectLossKind::kBce,
                         const KdTerm* kd = nullptr);

struct BatchKd {
  const numerics::Tensor* teacher = nullptr;  // B x C
  double temperature = 4.0;
  double weight = 1.0;
};

struct BatchObjective {
  LossBreakdown mean;     // every term averaged over the batch
  numerics::Tensor grad;  // d(mean total)/d(logits), B x D
};

// Mean-over-batch objective. `targets` is B x Q (ignored when Q == 0).
BatchObjective batch_total_loss(const numerics::Tensor& logits, std::size_t num_classes,
                                std::span<const std::size_t> labels,
                                const numerics::Tensor* targets, double alpha,
                                AspectLossKind kind = AspectLossKind::kBce,
                                const BatchKd* kd = nullptr);

}  // namespace makd::losses
