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
#include <string>
#include <vector>

#include "makd/record.hpp"
#include "makd/tensor.hpp"

namespace makd::model {

enum class Activation { kRelu, kSigmoid };

Activation parse_activation(const std::string& name);
std::string activation_name(Activation a);

struct ModelConfig {
  std::size_t input_dim = 0;
  std::vector<std::size_t> hidden_dims{128, 64};
  std::size_t num_classes = 0;
  std::size_t num_aspects = 0;
  Activation activation = Activation::kRelu;
  std::uint64_t init_seed = 0;

  // D = C + Q; derived, never stored
  std::size_t output_dim() const noexcept { return num_classes + num_aspects; }
  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

// weight is fan_in x fan_out, bias is 1 x fan_out
struct Layer {
  numerics::Tensor weight;
  numerics::Tensor bias;
  friend bool operator==(const Layer&, const Layer&) = default;
};

// Multilayer perceptron whose final layer emits C class logits followed by
// Q aspect logits from one shared weight matrix.
class Model {
 public:
  static Model build(const ModelConfig& config);

  const ModelConfig& config() const noexcept { return config_; }
  std::size_t num_classes() const noexcept { return config_.num_classes; }
  std::size_t num_aspects() const noexcept { return config_.num_aspects; }

  const std::vector<Layer>& layers() const noexcept { return layers_; }
  std::vector<Layer>& layers() noexcept { return layers_; }

  // B x input_dim -> B x (C + Q) logits
  numerics::Tensor predict(const numerics::Tensor& batch) const;
  std::vector<std::size_t> predict_classes(const numerics::Tensor& batch) const;

  // Forward graph of this architecture. Inputs are ordered: batch, then
  // (weight, bias) for every layer.
  numerics::ComputationRecord make_record() const;
  // Concrete tensors matching make_record()'s placeholders.
  std::vector<numerics::Tensor> record_inputs(const numerics::Tensor& batch) const;

  bool all_finite() const;

  friend bool operator==(const Model&, const Model&) = default;

 private:
  Model(ModelConfig config, std::vector<Layer> layers)
      : config_(std::move(config)), layers_(std::move(layers)) {}

  friend Model load_checkpoint(const std::filesystem::path& path);

  ModelConfig config_;
  std::vector<Layer> layers_;
};

// Versioned little-endian binary container: config followed by raw parameter
// arrays. Round-trips bit-exactly.
void save_checkpoint(const Model& model, const std::filesystem::path& path);
Model load_checkpoint(const std::filesystem::path& path);
// SHA-256 of the bytes save_checkpoint would write.
std::string checkpoint_digest(const Model& model);

}  // namespace makd::model
