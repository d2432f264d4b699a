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

#include "makd/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>

#include <fmt/format.h>

#include "makd/util.hpp"

namespace makd::train {

using numerics::Tensor;

std::string target_source_name(TargetSource s) {
  switch (s) {
    case TargetSource::kOracle: return "oracle";
    case TargetSource::kEndpoint: return "endpoint";
    case TargetSource::kRandom: return "random";
  }
  return "?";
}

TargetSource parse_target_source(const std::string& name) {
  if (name == "oracle") return TargetSource::kOracle;
  if (name == "endpoint") return TargetSource::kEndpoint;
  if (name == "random") return TargetSource::kRandom;
  throw DomainError("unknown aspect target source '" + name + "'");
}

std::string loss_variant_name(losses::AspectLossKind k) {
  return k == losses::AspectLossKind::kBce ? "bce" : "kl";
}

losses::AspectLossKind parse_loss_variant(const std::string& name) {
  if (name == "bce") return losses::AspectLossKind::kBce;
  if (name == "kl") return losses::AspectLossKind::kKl;
  throw DomainError("unknown aspect loss variant '" + name + "'");
}

void TrainConfig::validate() const {
  if (epochs == 0) throw DomainError("epochs must be positive");
  if (batch_size == 0) throw DomainError("batch_size must be positive");
  if (!(base_lr > 0.0)) throw DomainError("base_lr must be positive");
  for (std::size_t i = 0; i < lr_milestones.size(); ++i) {
    if (lr_milestones[i] >= epochs) throw DomainError("lr milestone beyond the last epoch");
    if (i && lr_milestones[i] <= lr_milestones[i - 1])
      throw DomainError("lr milestones must be strictly increasing");
  }
  if (!(lr_decay > 0.0 && lr_decay < 1.0)) throw DomainError("lr_decay must lie in (0, 1)");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw DomainError("momentum must lie in [0, 1)");
  if (!(weight_decay >= 0.0)) throw DomainError("weight_decay must be non-negative");
  if (!(alpha >= 0.0)) throw DomainError("alpha must be non-negative");
  if (kd) {
    if (!(kd->temperature > 0.0)) throw DomainError("kd temperature must be positive");
    if (!(kd->weight >= 0.0)) throw DomainError("kd weight must be non-negative");
  }
}

std::string TrainConfig::canonical() const {
  std::string s;
  s += fmt::format("epochs={}\nbatch_size={}\nbase_lr={}\n", epochs, batch_size,
                   util::format_double(base_lr));
  s += "lr_milestones=";
  for (std::size_t i = 0; i < lr_milestones.size(); ++i)
    s += (i ? "," : "") + std::to_string(lr_milestones[i]);
  s += fmt::format("\nlr_decay={}\nmomentum={}\nweight_decay={}\nalpha={}\n",
                   util::format_double(lr_decay), util::format_double(momentum),
                   util::format_double(weight_decay), util::format_double(alpha));
  if (kd)
    s += fmt::format("kd.temperature={}\nkd.weight={}\nkd.teacher={}\n",
                     util::format_double(kd->temperature), util::format_double(kd->weight),
                     kd->teacher);
  s += fmt::format("seed={}\nloss_variant={}\naspect_target_source={}\n", seed,
                   loss_variant_name(loss_variant), target_source_name(aspect_target_source));
  return s;
}

std::string TrainConfig::digest() const { return util::sha256_hex(canonical()); }

std::vector<std::size_t> scaled_milestones(std::size_t epochs) {
  std::vector<std::size_t> out;
  for (double m : {150.0, 180.0, 210.0}) {
    const auto v = static_cast<std::size_t>(std::lround(static_cast<double>(epochs) * m / 240.0));
    if (v >= epochs || (!out.empty() && v <= out.back())) continue;
    out.push_back(v);
  }
  return out;
}

double lr_at(std::size_t epoch, const TrainConfig& config) {
  if (epoch >= config.epochs)
    throw DomainError(fmt::format("epoch {} outside schedule of {} epochs", epoch, config.epochs));
  double lr = config.base_lr;
  for (auto m : config.lr_milestones)
    if (m <= epoch) lr *= config.lr_decay;
  return lr;
}

std::string RunRecord::to_tsv() const {
  const bool with_kd = !epochs.empty() && std::any_of(epochs.begin(), epochs.end(), [](const auto& e) {
    return e.kd != 0.0;
  });
  std::string s = with_kd ? "epoch\tlr\tce\tmakd\ttotal\ttest_acc\tkd\n"
                          : "epoch\tlr\tce\tmakd\ttotal\ttest_acc\n";
  for (const auto& e : epochs) {
    s += fmt::format("{}\t{}\t{}\t{}\t{}\t{}", e.epoch, util::format_double(e.lr),
                     util::format_double(e.ce), util::format_double(e.makd),
                     util::format_double(e.total), util::format_double(e.test_accuracy));
    if (with_kd) s += "\t" + util::format_double(e.kd);
    s += "\n";
  }
  return s;
}

void RunRecord::write_tsv(const std::filesystem::path& path) const {
  util::write_text_file(path, to_tsv());
}

namespace {

Tensor gather_rows(const Tensor& m, std::span<const std::size_t> rows) {
  Tensor out = Tensor::matrix(rows.size(), m.cols());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const auto src = m.row(rows[r]);
    std::copy(src.begin(), src.end(), out.row(r).begin());
  }
  return out;
}

double accuracy_percent(const model::Model& m, const Tensor& x, const std::vector<std::size_t>& y) {
  const auto pred = m.predict_classes(x);
  std::size_t hit = 0;
  for (std::size_t i = 0; i < y.size(); ++i) hit += pred[i] == y[i];
  return 100.0 * static_cast<double>(hit) / static_cast<double>(y.size());
}

}  // namespace

TrainResult train_core(model::Model model, const data::Dataset& dataset, const TrainInputs& inputs,
                       const TrainConfig& config) {
  config.validate();
  if (dataset.feature_dim() != model.config().input_dim)
    throw ShapeError(fmt::format("dataset features are {}-wide, model expects {}",
                                 dataset.feature_dim(), model.config().input_dim));
  if (dataset.num_classes() != model.num_classes())
    throw ShapeError(fmt::format("dataset has {} classes, model has {}", dataset.num_classes(),
                                 model.num_classes()));
  const auto train_rows = dataset.indices(data::Split::kTrain);
  if (train_rows.empty()) throw DomainError("dataset has no training images");
  const std::size_t n = train_rows.size();
  const std::size_t c = model.num_classes();
  const std::size_t q = model.num_aspects();

  const Tensor x = dataset.gather_features(train_rows);
  const auto y = dataset.gather_labels(train_rows);

  Tensor placeholder;
  const Tensor* targets = inputs.aspect_targets;
  if (q > 0) {
    if (!targets) {
      if (config.alpha != 0.0)
        throw DomainError("aspect targets are required when alpha > 0 and the model has aspects");
      placeholder = Tensor::matrix(n, q, 0.5);
      targets = &placeholder;
    }
    if (targets->rows() != n || targets->cols() != q)
      throw ShapeError(fmt::format("aspect targets are {}x{}, expected {}x{}", targets->rows(),
                                   targets->cols(), n, q));
  }
  const Tensor* teacher = inputs.teacher_logits;
  if (teacher && (teacher->rows() != n || teacher->cols() != c))
    throw ShapeError(fmt::format("teacher logits are {}x{}, expected {}x{}", teacher->rows(),
                                 teacher->cols(), n, c));
  if (teacher && !config.kd) throw DomainError("teacher logits given without a kd config");
  if (config.kd && !teacher) throw DomainError("kd config given without teacher logits");

  const auto test_rows = dataset.indices(data::Split::kTest);
  std::optional<Tensor> x_test;
  std::vector<std::size_t> y_test;
  if (!test_rows.empty()) {
    x_test = dataset.gather_features(test_rows);
    y_test = dataset.gather_labels(test_rows);
  }

  auto record = model.make_record();
  std::vector<model::Layer> velocity;
  for (const auto& l : model.layers())
    velocity.push_back({Tensor(l.weight.shape(), 0.0), Tensor(l.bias.shape(), 0.0)});

  TrainResult result{std::move(model), {}};
  auto& net = result.model;
  result.record.config_digest = config.digest();

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    const double lr = lr_at(epoch, config);
    numerics::Rng shuffle(numerics::derive_seed(config.seed, epoch + 1));
    const auto order = shuffle.permutation(n);

    EpochRecord rec;
    rec.epoch = epoch;
    rec.lr = lr;
    std::size_t batch_index = 0;
    for (std::size_t start = 0; start < n; start += config.batch_size, ++batch_index) {
      const std::size_t end = std::min(n, start + config.batch_size);
      const std::span<const std::size_t> idx(order.data() + start, end - start);
      const Tensor xb = gather_rows(x, idx);
      std::vector<std::size_t> yb;
      for (auto i : idx) yb.push_back(y[i]);
      std::optional<Tensor> tb, kb;
      if (q > 0) tb = gather_rows(*targets, idx);
      std::optional<losses::BatchKd> kd;
      if (teacher) {
        kb = gather_rows(*teacher, idx);
        kd = losses::BatchKd{&*kb, config.kd->temperature, config.kd->weight};
      }

      const auto record_inputs = net.record_inputs(xb);
      const Tensor& logits = record.forward(record_inputs);
      const auto obj = losses::batch_total_loss(logits, c, yb, tb ? &*tb : nullptr, config.alpha,
                                                config.loss_variant, kd ? &*kd : nullptr);
      if (!std::isfinite(obj.mean.total))
        throw TrainingDiverged(fmt::format(
            "non-finite loss at epoch {} batch {}: ce={} makd={} kd={} total={}", epoch,
            batch_index, obj.mean.ce, obj.mean.makd, obj.mean.kd.value_or(0.0), obj.mean.total));
      record.backward(obj.grad);

      // v <- m v + g ; p <- p - lr v ; decay on weights only
      for (std::size_t l = 0; l < net.layers().size(); ++l) {
        auto& layer = net.layers()[l];
        const Tensor& gw = record.input_grad(1 + 2 * l);
        const Tensor& gb = record.input_grad(2 + 2 * l);
        auto& vw = velocity[l].weight;
        auto& vb = velocity[l].bias;
        for (std::size_t i = 0; i < layer.weight.size(); ++i) {
          const double g = gw[i] + config.weight_decay * layer.weight[i];
          vw[i] = config.momentum * vw[i] + g;
          layer.weight[i] -= lr * vw[i];
        }
        for (std::size_t i = 0; i < layer.bias.size(); ++i) {
          vb[i] = config.momentum * vb[i] + gb[i];
          layer.bias[i] -= lr * vb[i];
        }
      }

      const double w = static_cast<double>(idx.size());
      rec.ce += w * obj.mean.ce;
      rec.makd += w * obj.mean.makd;
      rec.kd += w * obj.mean.kd.value_or(0.0);
    }
    rec.ce /= static_cast<double>(n);
    rec.makd /= static_cast<double>(n);
    rec.kd /= static_cast<double>(n);
    rec.total = rec.ce + config.alpha * rec.makd + (config.kd ? config.kd->weight * rec.kd : 0.0);
    if (!net.all_finite())
      throw TrainingDiverged(fmt::format("non-finite parameter after epoch {}", epoch));
    const bool last = epoch + 1 == config.epochs;
    rec.test_accuracy = std::numeric_limits<double>::quiet_NaN();
    if (x_test && (config.evaluate_each_epoch || last))
      rec.test_accuracy = accuracy_percent(net, *x_test, y_test);
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    result.record.epochs.push_back(rec);
  }
  return result;
}

namespace {

Tensor store_targets(const data::Dataset& dataset, const annotate::AnnotationStore& store,
                     std::size_t num_aspects) {
  if (store.num_questions() != num_aspects)
    throw ShapeError(fmt::format("annotation store has {} questions, model has {} aspects",
                                 store.num_questions(), num_aspects));
  if (store.dataset_id() != dataset.manifest.dataset_id)
    throw annotate::StaleStoreError("annotation store belongs to dataset '" + store.dataset_id() +
                                    "'");
  const auto ids = dataset.gather_ids(dataset.indices(data::Split::kTrain));
  return store.targets_for(ids);
}

}  // namespace

TrainResult train(model::Model model, const data::Dataset& dataset,
                  const annotate::AnnotationStore* annotations, const TrainConfig& config) {
  std::optional<Tensor> targets;
  if (annotations) {
    if (model.num_aspects() == 0 && annotations->num_questions() > 0)
      throw ShapeError("annotation store given for a model without aspect outputs");
    if (model.num_aspects() > 0) targets = store_targets(dataset, *annotations, model.num_aspects());
  }
  return train_core(std::move(model), dataset, {targets ? &*targets : nullptr, nullptr}, config);
}

Tensor random_targets(std::size_t rows, std::size_t num_aspects, std::uint64_t seed) {
  Tensor t = Tensor::matrix(rows, num_aspects);
  numerics::Rng rng(seed);
  for (auto& v : t.values()) v = losses::sigmoid(rng.normal());
  return t;
}

TrainResult train_with_random_targets(model::Model model, const data::Dataset& dataset,
                                      const TrainConfig& config) {
  const auto n = dataset.indices(data::Split::kTrain).size();
  std::optional<Tensor> targets;
  if (model.num_aspects() > 0)
    targets = random_targets(n, model.num_aspects(), numerics::derive_seed(config.seed, 0x72616e64));
  return train_core(std::move(model), dataset, {targets ? &*targets : nullptr, nullptr}, config);
}

TrainResult train_with_kd(model::Model model, const data::Dataset& dataset,
                          const Tensor& teacher_train_logits,
                          const annotate::AnnotationStore* annotations, const TrainConfig& config) {
  if (teacher_train_logits.rank() != 2 || teacher_train_logits.cols() != model.num_classes())
    throw ShapeError("teacher logit width must equal the number of classes");
  std::optional<Tensor> targets;
  if (annotations && model.num_aspects() > 0)
    targets = store_targets(dataset, *annotations, model.num_aspects());
  TrainConfig cfg = config;
  if (!cfg.kd) cfg.kd = KdConfig{};
  return train_core(std::move(model), dataset, {targets ? &*targets : nullptr, &teacher_train_logits},
                    cfg);
}

FlatObjective flat_objective(const model::Model& model, const Tensor& batch,
                             std::vector<std::size_t> labels, std::optional<Tensor> targets,
                             double alpha, losses::AspectLossKind kind,
                             std::optional<Tensor> teacher, double temperature, double kd_weight) {
  std::size_t total = 0;
  for (const auto& l : model.layers()) total += l.weight.size() + l.bias.size();
  Tensor params({total}, 0.0);
  std::size_t o = 0;
  for (const auto& l : model.layers()) {
    for (double v : l.weight.values()) params[o++] = v;
    for (double v : l.bias.values()) params[o++] = v;
  }
  auto fn = [net = model, batch, labels = std::move(labels), targets = std::move(targets), alpha, kind,
             teacher = std::move(teacher), temperature,
             kd_weight](const Tensor& point, Tensor* grad) mutable -> double {
    std::size_t off = 0;
    for (auto& l : net.layers()) {
      for (auto& v : l.weight.values()) v = point[off++];
      for (auto& v : l.bias.values()) v = point[off++];
    }
    auto rec = net.make_record();
    const auto inputs = net.record_inputs(batch);
    const Tensor& logits = rec.forward(inputs);
    std::optional<losses::BatchKd> kd;
    if (teacher) kd = losses::BatchKd{&*teacher, temperature, kd_weight};
    const auto obj = losses::batch_total_loss(logits, net.num_classes(), labels,
                                              targets ? &*targets : nullptr, alpha, kind,
                                              kd ? &*kd : nullptr);
    if (grad) {
      rec.backward(obj.grad);
      off = 0;
      for (std::size_t l = 0; l < net.layers().size(); ++l) {
        for (double g : rec.input_grad(1 + 2 * l).values()) (*grad)[off++] = g;
        for (double g : rec.input_grad(2 + 2 * l).values()) (*grad)[off++] = g;
      }
    }
    return obj.mean.total;
  };
  return FlatObjective{std::move(params), std::move(fn)};
}

}  // namespace makd::train
