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

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "makd/annotate.hpp"
#include "makd/data.hpp"
#include "makd/error.hpp"
#include "makd/losses.hpp"
#include "makd/model.hpp"

namespace makd::train {

enum class TargetSource { kOracle, kEndpoint, kRandom };

std::string target_source_name(TargetSource s);
TargetSource parse_target_source(const std::string& name);
std::string loss_variant_name(losses::AspectLossKind k);
losses::AspectLossKind parse_loss_variant(const std::string& name);

struct KdConfig {
  double temperature = 4.0;
  double weight = 1.0;
  std::string teacher;  // description of the teacher source, for the digest
  friend bool operator==(const KdConfig&, const KdConfig&) = default;
};

struct TrainConfig {
  std::size_t epochs = 240;
  std::size_t batch_size = 16;
  double base_lr = 0.01;
  std::vector<std::size_t> lr_milestones{150, 180, 210};
  double lr_decay = 0.1;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  double alpha = 1.0;
  std::optional<KdConfig> kd;
  std::uint64_t seed = 0;
  losses::AspectLossKind loss_variant = losses::AspectLossKind::kBce;
  TargetSource aspect_target_source = TargetSource::kOracle;
  bool evaluate_each_epoch = true;

  void validate() const;
  // Canonical key=value text; the config digest is its SHA-256.
  std::string canonical() const;
  std::string digest() const;

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

// Milestones 150/180/210 of a 240-epoch schedule, rescaled to `epochs`
// (rounded to nearest). Collapsed duplicates and milestones >= epochs are
// dropped to keep the list strictly increasing.
std::vector<std::size_t> scaled_milestones(std::size_t epochs);

// base_lr * decay^(number of milestones <= epoch)
double lr_at(std::size_t epoch, const TrainConfig& config);

struct EpochRecord {
  std::size_t epoch = 0;
  double lr = 0.0;
  double ce = 0.0;
  double makd = 0.0;
  double kd = 0.0;
  double total = 0.0;
  double test_accuracy = 0.0;  // NaN when not evaluated this epoch
  double seconds = 0.0;
};

struct RunRecord {
  std::vector<EpochRecord> epochs;
  std::string config_digest;
  std::string checkpoint;

  // epoch, lr, ce, makd, total, test_acc (tab-separated, deterministic)
  std::string to_tsv() const;
  void write_tsv(const std::filesystem::path& path) const;
};

class TrainingDiverged : public Error {
 public:
  using Error::Error;
};

struct TrainResult {
  model::Model model;
  RunRecord record;
};

// Trains under ce + alpha * aspect_loss. `annotations` supplies the aspect
// targets for every train image; it may be null only when the model has no
// aspect outputs or alpha == 0 (the aspect term then contributes nothing).
TrainResult train(model::Model model, const data::Dataset& dataset,
                  const annotate::AnnotationStore* annotations, const TrainConfig& config);

// Aspect targets drawn once as sigmoid(N(0,1)) per (train image, question).
TrainResult train_with_random_targets(model::Model model, const data::Dataset& dataset,
                                      const TrainConfig& config);
numerics::Tensor random_targets(std::size_t rows, std::size_t num_aspects, std::uint64_t seed);

// Adds kd.weight * T^2 KL(teacher || student) on the class slice. Teacher
// logits are indexed like the dataset's train split (row r = r-th train image).
TrainResult train_with_kd(model::Model model, const data::Dataset& dataset,
                          const numerics::Tensor& teacher_train_logits,
                          const annotate::AnnotationStore* annotations, const TrainConfig& config);

// Lower-level entry: explicit targets (rows aligned with the train split).
struct TrainInputs {
  const numerics::Tensor* aspect_targets = nullptr;  // N_train x Q
  const numerics::Tensor* teacher_logits = nullptr;  // N_train x C
};
TrainResult train_core(model::Model model, const data::Dataset& dataset, const TrainInputs& inputs,
                       const TrainConfig& config);

// Full objective over a fixed batch as a function of every parameter,
// flattened in layer order (weight, bias). Used for gradient checks.
struct FlatObjective {
  numerics::Tensor parameters;
  numerics::DifferentiableFunction fn;
};
FlatObjective flat_objective(const model::Model& model, const numerics::Tensor& batch,
                             std::vector<std::size_t> labels,
                             std::optional<numerics::Tensor> targets, double alpha,
                             losses::AspectLossKind kind = losses::AspectLossKind::kBce,
                             std::optional<numerics::Tensor> teacher = std::nullopt,
                             double temperature = 4.0, double kd_weight = 1.0);

}  // namespace makd::train
