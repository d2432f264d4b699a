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

#include "makd/losses.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "makd/error.hpp"

namespace makd::losses {

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double softplus(double x) {
  return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
}

void log_softmax(std::span<const double> logits, std::span<double> out) {
  const double mx = *std::max_element(logits.begin(), logits.end());
  double z = 0.0;
  for (double v : logits) z += std::exp(v - mx);
  const double lse = mx + std::log(z);
  for (std::size_t i = 0; i < logits.size(); ++i) out[i] = logits[i] - lse;
}

double yes_no_probability(double z_yes, double z_no) {
  if (!std::isfinite(z_yes) || !std::isfinite(z_no))
    throw DomainError("yes_no_probability: non-finite logit");
  return sigmoid(z_yes - z_no);
}

ExpandedOutput::ExpandedOutput(std::span<const double> logits, std::size_t num_classes,
                               std::size_t num_aspects)
    : logits_(logits), num_classes_(num_classes), num_aspects_(num_aspects) {
  if (num_classes == 0) throw ShapeError("expanded output needs at least one class");
  if (logits.size() != num_classes + num_aspects)
    throw ShapeError("expanded output width " + std::to_string(logits.size()) + " != C + Q = " +
                     std::to_string(num_classes + num_aspects));
}

std::size_t ExpandedOutput::predicted_class() const {
  const auto cls = class_logits();
  return static_cast<std::size_t>(std::max_element(cls.begin(), cls.end()) - cls.begin());
}

namespace {

void check_grad(std::span<double> grad, std::size_t width, const char* who) {
  if (!grad.empty() && grad.size() != width)
    throw ShapeError(std::string(who) + ": gradient buffer has width " +
                     std::to_string(grad.size()) + ", expected " + std::to_string(width));
}

void check_targets(const ExpandedOutput& out, std::span<const double> targets, const char* who) {
  if (targets.size() != out.num_aspects())
    throw ShapeError(std::string(who) + ": " + std::to_string(targets.size()) +
                     " targets for " + std::to_string(out.num_aspects()) + " aspects");
  for (double q : targets)
    if (!(q >= 0.0 && q <= 1.0))
      throw DomainError(std::string(who) + ": aspect target outside [0,1]");
}

// q * log(q) with the 0 log 0 = 0 convention
double xlogx(double q) { return q > 0.0 ? q * std::log(q) : 0.0; }

}  // namespace

double class_cross_entropy(const ExpandedOutput& out, std::size_t label, std::span<double> grad,
                           double weight) {
  check_grad(grad, out.dim(), "class_cross_entropy");
  if (label >= out.num_classes())
    throw DomainError("class label " + std::to_string(label) + " out of range for " +
                      std::to_string(out.num_classes()) + " classes");
  const auto cls = out.class_logits();
  std::vector<double> lsm(cls.size());
  log_softmax(cls, lsm);
  if (!grad.empty()) {
    for (std::size_t i = 0; i < cls.size(); ++i)
      grad[i] += weight * (std::exp(lsm[i]) - (i == label ? 1.0 : 0.0));
  }
  return -lsm[label];
}

double makd_bce(const ExpandedOutput& out, std::span<const double> targets, std::span<double> grad,
                double weight) {
  check_grad(grad, out.dim(), "makd_bce");
  check_targets(out, targets, "makd_bce");
  const auto z = out.aspect_logits();
  const std::size_t c = out.num_classes();
  double loss = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    // -[q log s(z) + (1-q) log(1-s(z))] = softplus(z) - q z
    loss += softplus(z[i]) - targets[i] * z[i];
    if (!grad.empty()) grad[c + i] += weight * (sigmoid(z[i]) - targets[i]);
  }
  return loss;
}

double kl_aspect_loss(const ExpandedOutput& out, std::span<const double> targets,
                      std::span<double> grad, double weight) {
  check_grad(grad, out.dim(), "kl_aspect_loss");
  check_targets(out, targets, "kl_aspect_loss");
  const auto z = out.aspect_logits();
  const std::size_t c = out.num_classes();
  double loss = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    const double q = targets[i];
    const double log_p = -softplus(-z[i]);
    const double log_not_p = -softplus(z[i]);
    double term = xlogx(q) + xlogx(1.0 - q);
    if (q > 0.0) term -= q * log_p;
    if (q < 1.0) term -= (1.0 - q) * log_not_p;
    loss += std::max(term, 0.0);
    if (!grad.empty()) grad[c + i] += weight * (sigmoid(z[i]) - q);
  }
  return loss;
}

double aspect_loss(AspectLossKind kind, const ExpandedOutput& out, std::span<const double> targets,
                   std::span<double> grad, double weight) {
  return kind == AspectLossKind::kBce ? makd_bce(out, targets, grad, weight)
                                      : kl_aspect_loss(out, targets, grad, weight);
}

double kd_kl(std::span<const double> student, std::span<const double> teacher, double temperature,
             std::span<double> grad, double weight) {
  if (student.size() != teacher.size())
    throw ShapeError("kd_kl: student has " + std::to_string(student.size()) +
                     " logits, teacher has " + std::to_string(teacher.size()));
  if (student.empty()) throw ShapeError("kd_kl: empty logits");
  if (!(temperature > 0.0)) throw DomainError("kd_kl: temperature must be positive");
  check_grad(grad, student.size(), "kd_kl");
  const std::size_t n = student.size();
  std::vector<double> s(n), t(n), ls(n), lt(n);
  for (std::size_t i = 0; i < n; ++i) {
    s[i] = student[i] / temperature;
    t[i] = teacher[i] / temperature;
  }
  log_softmax(s, ls);
  log_softmax(t, lt);
  double kl = 0.0;
  for (std::size_t i = 0; i < n; ++i) kl += std::exp(lt[i]) * (lt[i] - ls[i]);
  kl = std::max(kl, 0.0);
  if (!grad.empty()) {
    for (std::size_t i = 0; i < n; ++i)
      grad[i] += weight * temperature * (std::exp(ls[i]) - std::exp(lt[i]));
  }
  return temperature * temperature * kl;
}

LossBreakdown total_loss(const ExpandedOutput& out, std::size_t label,
                         std::span<const double> targets, double alpha, std::span<double> grad,
                         double weight, AspectLossKind kind, const KdTerm* kd) {
  if (!(alpha >= 0.0)) throw DomainError("alpha must be non-negative");
  LossBreakdown r;
  r.alpha = alpha;
  r.ce = class_cross_entropy(out, label, grad, weight);
  if (out.num_aspects() > 0)
    r.makd = aspect_loss(kind, out, targets, grad, weight * alpha);
  else if (!targets.empty())
    throw ShapeError("aspect targets supplied for a head without aspects");
  r.total = r.ce + alpha * r.makd;
  if (kd) {
    auto class_grad = grad.empty() ? grad : grad.first(out.num_classes());
    r.kd = kd_kl(out.class_logits(), kd->teacher, kd->temperature, class_grad,
                 weight * kd->weight);
    r.total += kd->weight * *r.kd;
  }
  return r;
}

BatchObjective batch_total_loss(const numerics::Tensor& logits, std::size_t num_classes,
                                std::span<const std::size_t> labels,
                                const numerics::Tensor* targets, double alpha,
                                AspectLossKind kind, const BatchKd* kd) {
  const std::size_t b = logits.rows();
  const std::size_t d = logits.cols();
  if (labels.size() != b) throw ShapeError("batch_total_loss: label count != batch size");
  if (d < num_classes) throw ShapeError("batch_total_loss: logits narrower than class count");
  const std::size_t q = d - num_classes;
  if (q > 0 && (!targets || targets->rows() != b || targets->cols() != q))
    throw ShapeError("batch_total_loss: aspect targets must be " + std::to_string(b) + "x" +
                     std::to_string(q));
  if (kd && (!kd->teacher || kd->teacher->rows() != b || kd->teacher->cols() != num_classes))
    throw ShapeError("batch_total_loss: teacher logits must be " + std::to_string(b) + "x" +
                     std::to_string(num_classes));

  BatchObjective r{{}, numerics::Tensor::matrix(b, d)};
  r.mean.alpha = alpha;
  if (kd) r.mean.kd = 0.0;
  const double w = 1.0 / static_cast<double>(b);
  for (std::size_t i = 0; i < b; ++i) {
    ExpandedOutput out(logits.row(i), num_classes, q);
    std::span<const double> row_targets;
    if (q > 0) row_targets = targets->row(i);
    std::optional<KdTerm> term;
    if (kd) term = KdTerm{kd->teacher->row(i), kd->temperature, kd->weight};
    const auto l = total_loss(out, labels[i], row_targets, alpha, r.grad.row(i), w, kind,
                              term ? &*term : nullptr);
    r.mean.ce += l.ce;
    r.mean.makd += l.makd;
    if (l.kd) *r.mean.kd += *l.kd;
  }
  r.mean.ce *= w;
  r.mean.makd *= w;
  r.mean.total = r.mean.ce + alpha * r.mean.makd;
  if (kd) {
    *r.mean.kd *= w;
    r.mean.total += kd->weight * *r.mean.kd;
  }
  return r;
}

}  // namespace makd::losses
