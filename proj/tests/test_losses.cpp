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

#include <doctest.h>

#include <cmath>
#include <limits>
#include <vector>

#include "makd/error.hpp"
#include "makd/losses.hpp"
#include "makd/record.hpp"

using namespace makd;
using namespace makd::losses;
using numerics::Rng;
using numerics::Tensor;

namespace {

const double kLn2 = std::log(2.0);

double bernoulli_entropy(double q) {
  double h = 0.0;
  if (q > 0.0) h -= q * std::log(q);
  if (q < 1.0) h -= (1.0 - q) * std::log(1.0 - q);
  return h;
}

std::vector<double> random_values(Rng& rng, std::size_t n, double lo, double hi) {
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform(lo, hi);
  return v;
}

}  // namespace

TEST_CASE("yes/no probability examples") {
  CHECK(yes_no_probability(0, 0) == 0.5);
  CHECK(yes_no_probability(2, 0) == doctest::Approx(0.8807970779778824).epsilon(1e-14));
  const double p = yes_no_probability(1000, 0);
  CHECK(std::isfinite(p));
  CHECK(std::abs(p - 1.0) < 1e-12);
  CHECK(yes_no_probability(-1000, 1000) >= 0.0);
  CHECK_THROWS_AS(yes_no_probability(NAN, 0), DomainError);
  CHECK_THROWS_AS(yes_no_probability(0, INFINITY), DomainError);
}

TEST_CASE("yes/no probability is the sigmoid of the logit difference") {
  Rng rng(11);
  for (int i = 0; i < 10000; ++i) {
    const double a = rng.uniform(-50, 50), b = rng.uniform(-50, 50);
    CHECK(std::abs(yes_no_probability(a, b) - sigmoid(a - b)) < 1e-12);
  }
}

TEST_CASE("class cross-entropy examples") {
  const std::vector<double> two{0, 0};
  CHECK(class_cross_entropy(ExpandedOutput(two, 2, 0), 1) == doctest::Approx(kLn2).epsilon(1e-14));
  const std::vector<double> three{10, 0, 0};
  // 0-based label 0 is the first class.
  CHECK(class_cross_entropy(ExpandedOutput(three, 3, 0), 0) ==
        doctest::Approx(9.079573746724445e-5).epsilon(1e-12));
  CHECK_THROWS_AS(class_cross_entropy(ExpandedOutput(three, 3, 0), 3), DomainError);
}

TEST_CASE("aspect BCE examples") {
  const std::vector<double> zero{0, 0, 0};
  const std::vector<double> half{0.5};
  CHECK(makd_bce(ExpandedOutput(zero, 2, 1), half) == doctest::Approx(kLn2).epsilon(1e-14));
  const std::vector<double> big{0, 0, 20};
  const std::vector<double> one{1.0};
  CHECK(makd_bce(ExpandedOutput(big, 2, 1), one) ==
        doctest::Approx(2.0611536203143807e-9).epsilon(1e-10));
  const std::vector<double> four{0, 0, 0, 0};
  const std::vector<double> q01{0, 1};
  CHECK(makd_bce(ExpandedOutput(four, 2, 2), q01) == doctest::Approx(2 * kLn2).epsilon(1e-14));
  const std::vector<double> wrong{0.5, 0.5};
  CHECK_THROWS_AS(makd_bce(ExpandedOutput(zero, 2, 1), wrong), ShapeError);
}

TEST_CASE("KL aspect loss examples") {
  const std::vector<double> logits{0.3, -0.2, 1.5, -2.0};
  const std::vector<double> matched{sigmoid(1.5), sigmoid(-2.0)};
  CHECK(std::abs(kl_aspect_loss(ExpandedOutput(logits, 2, 2), matched)) < 1e-12);
  const std::vector<double> zero{0, 0, 0};
  const std::vector<double> one{1.0};
  CHECK(kl_aspect_loss(ExpandedOutput(zero, 2, 1), one) == doctest::Approx(kLn2).epsilon(1e-14));
}

TEST_CASE("distillation examples") {
  const std::vector<double> s{0.2, -1.0, 3.0};
  CHECK(std::abs(kd_kl(s, s, 4.0)) < 1e-12);
  const std::vector<double> shifted{5.2, 4.0, 8.0};
  CHECK(std::abs(kd_kl(s, shifted, 2.0)) < 1e-12);
  const std::vector<double> teacher{1, 0}, student{0, 0};
  CHECK(kd_kl(student, teacher, 1.0) == doctest::Approx(0.11094407167172735).epsilon(1e-12));
  CHECK_THROWS_AS(kd_kl(student, s, 1.0), ShapeError);
  CHECK_THROWS_AS(kd_kl(student, teacher, 0.0), DomainError);
}

TEST_CASE("total loss examples") {
  Rng rng(5);
  const auto logits = random_values(rng, 6, -3, 3);
  const std::vector<double> q{0.2, 0.9, 0.4};
  ExpandedOutput out(logits, 3, 3);
  const auto zero = total_loss(out, 1, q, 0.0);
  CHECK(zero.total == zero.ce);

  const auto one = total_loss(out, 1, q, 1.0);
  CHECK(one.total == doctest::Approx(one.ce + one.makd).epsilon(1e-15));

  // Constructed so that ce is ln 2 and the aspect term is ln 2 as well.
  const std::vector<double> flat{0, 0, 0};
  const std::vector<double> half{0.5};
  const auto lb = total_loss(ExpandedOutput(flat, 2, 1), 0, half, 1.0);
  CHECK(lb.total == doctest::Approx(2 * kLn2).epsilon(1e-14));
  CHECK_FALSE(lb.kd.has_value());

  const std::vector<double> none;
  CHECK_THROWS_AS(total_loss(ExpandedOutput(flat, 3, 0), 0, half, 1.0), ShapeError);
  CHECK(total_loss(ExpandedOutput(flat, 3, 0), 0, none, 1.0).makd == 0.0);
}

TEST_CASE("class and aspect slices are isolated") {
  Rng rng(23);
  for (int probe = 0; probe < 1000; ++probe) {
    const std::size_t c = 2 + rng.below(6), qn = 1 + rng.below(6);
    auto logits = random_values(rng, c + qn, -8, 8);
    const auto targets = random_values(rng, qn, 0, 1);
    const std::size_t label = rng.below(c);
    const double ce = class_cross_entropy(ExpandedOutput(logits, c, qn), label);
    const double bce = makd_bce(ExpandedOutput(logits, c, qn), targets);

    auto aspect_changed = logits;
    for (std::size_t i = c; i < c + qn; ++i) aspect_changed[i] = rng.uniform(-1e3, 1e3);
    CHECK(std::abs(class_cross_entropy(ExpandedOutput(aspect_changed, c, qn), label) - ce) < 1e-12);
    CHECK(ExpandedOutput(aspect_changed, c, qn).predicted_class() ==
          ExpandedOutput(logits, c, qn).predicted_class());

    auto class_changed = logits;
    for (std::size_t i = 0; i < c; ++i) class_changed[i] = rng.uniform(-1e3, 1e3);
    CHECK(std::abs(makd_bce(ExpandedOutput(class_changed, c, qn), targets) - bce) < 1e-12);
  }
}

TEST_CASE("BCE and KL differ by the target entropy") {
  Rng rng(31);
  for (int i = 0; i < 2000; ++i) {
    const std::size_t qn = 1 + rng.below(8);
    const auto logits = random_values(rng, 2 + qn, -15, 15);
    auto q = random_values(rng, qn, 0, 1);
    if (i % 5 == 0) q[0] = 0.0;
    if (i % 7 == 0) q[qn - 1] = 1.0;
    ExpandedOutput out(logits, 2, qn);
    double h = 0.0;
    for (double v : q) h += bernoulli_entropy(v);
    CHECK(std::abs(makd_bce(out, q) - kl_aspect_loss(out, q) - h) < 1e-10);

    std::vector<double> gb(logits.size(), 0.0), gk(logits.size(), 0.0);
    makd_bce(out, q, gb);
    kl_aspect_loss(out, q, gk);
    for (std::size_t j = 0; j < gb.size(); ++j) CHECK(std::abs(gb[j] - gk[j]) < 1e-10);
  }
}

TEST_CASE("aspect gradient has the sigmoid-minus-target closed form") {
  Rng rng(37);
  for (int i = 0; i < 1000; ++i) {
    const std::size_t c = 3, qn = 1 + rng.below(6);
    const auto logits = random_values(rng, c + qn, -10, 10);
    const auto q = random_values(rng, qn, 0, 1);
    std::vector<double> g(c + qn, 0.0);
    makd_bce(ExpandedOutput(logits, c, qn), q, g);
    for (std::size_t k = 0; k < c; ++k) CHECK(g[k] == 0.0);
    for (std::size_t k = 0; k < qn; ++k)
      CHECK(std::abs(g[c + k] - (sigmoid(logits[c + k]) - q[k])) < 1e-10);
  }
}

TEST_CASE("losses stay finite at extreme logits and hard targets") {
  const std::vector<double> logits{1e6, -1e6, 700, -700, 0};
  const std::vector<double> q{0.0, 1.0, 0.0};
  ExpandedOutput out(logits, 2, 3);
  std::vector<double> g(logits.size(), 0.0);
  CHECK(std::isfinite(class_cross_entropy(out, 1, g)));
  CHECK(std::isfinite(makd_bce(out, q, g)));
  CHECK(std::isfinite(kl_aspect_loss(out, q, g)));
  for (double v : g) CHECK(std::isfinite(v));
  CHECK(std::isfinite(total_loss(out, 0, q, 2.0).total));
  const std::vector<double> t{-1e6, 1e6};
  const std::vector<double> s{1e6, -1e6};
  CHECK(std::isfinite(kd_kl(s, t, 4.0)));
}

TEST_CASE("total loss gradient matches central differences") {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    Rng rng(numerics::derive_seed(seed, 41));
    const std::size_t c = 2 + rng.below(4), qn = rng.below(5);
    const auto teacher = random_values(rng, c, -3, 3);
    const auto q = random_values(rng, qn, 0, 1);
    const std::size_t label = rng.below(c);
    const double alpha = rng.uniform(0, 2);
    const auto kind = seed % 2 ? AspectLossKind::kKl : AspectLossKind::kBce;
    KdTerm kd{teacher, rng.uniform(1, 5), rng.uniform(0, 1)};
    const bool with_kd = seed % 3 == 0;
    numerics::DifferentiableFunction f = [&](const Tensor& p, Tensor* grad) {
      ExpandedOutput out(p.values(), c, qn);
      std::span<double> g;
      if (grad) g = grad->values();
      return total_loss(out, label, q, alpha, g, 1.0, kind, with_kd ? &kd : nullptr).total;
    };
    Tensor point = Tensor::vector(random_values(rng, c + qn, -4, 4));
    CHECK(numerics::grad_check(f, point, 1e-5) < 1e-6);
  }
}

TEST_CASE("batch objective is the mean of per-row losses") {
  Rng rng(43);
  const std::size_t b = 5, c = 4, qn = 3;
  Tensor logits({b, c + qn});
  for (auto& v : logits.values()) v = rng.uniform(-3, 3);
  Tensor targets({b, qn});
  for (auto& v : targets.values()) v = rng.uniform(0, 1);
  const std::vector<std::size_t> labels{0, 3, 1, 2, 2};
  const auto obj = batch_total_loss(logits, c, labels, &targets, 0.7);
  double sum = 0.0;
  for (std::size_t r = 0; r < b; ++r)
    sum += total_loss(ExpandedOutput(logits.row(r), c, qn), labels[r], targets.row(r), 0.7).total;
  CHECK(obj.mean.total == doctest::Approx(sum / b).epsilon(1e-14));

  numerics::DifferentiableFunction f = [&](const Tensor& p, Tensor* grad) {
    const auto o = batch_total_loss(p, c, labels, &targets, 0.7);
    if (grad) *grad = o.grad;
    return o.mean.total;
  };
  CHECK(numerics::grad_check(f, logits, 1e-5) < 1e-6);
}
